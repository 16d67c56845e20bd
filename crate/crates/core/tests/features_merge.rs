mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use svx_core::features::{extract_features, layout, merge_features, FEATURES_PER_CHANNEL};
use svx_core::supervoxel::SupervoxelMap;
use svx_core::{LabelMap, Volume};

use common::*;

fn table_1d(values: Vec<f64>, labels: Vec<u32>) -> svx_core::features::FeatureTable {
    let dims = [values.len(), 1, 1];
    let v = Volume::new(dims, [1.0; 3], 1, values).unwrap();
    let sp = SupervoxelMap::from_labels(&LabelMap::new(dims, labels).unwrap());
    extract_features(&v, &sp, &[0]).unwrap()
}

#[test]
fn two_voxel_supervoxel() {
    let t = table_1d(vec![0.0, 1.0, 0.5, 0.5], vec![0, 0, 1, 1]);
    let f = t.vector(0);
    assert_eq!(f[layout::MEAN], 0.5);
    assert_eq!(f[layout::VARIANCE], 0.25);
    let hist = &f[layout::INTENSITY_HIST];
    assert_eq!(hist[0], 0.5);
    assert_eq!(hist[9], 0.5);
    assert_eq!(hist.iter().sum::<f64>(), 1.0);
}

#[test]
fn merging_two_constants_pools_moments() {
    let (a, b) = (0.2, 0.8);
    let t = table_1d(vec![a, a, a, b, b, b], vec![0, 0, 0, 1, 1, 1]);
    let r = merge_features(&t, &t.empty_region(), 0).unwrap();
    assert_eq!(t.region_vector(&r).unwrap(), t.vector(0));
    let r = merge_features(&t, &r, 1).unwrap();
    let f = t.region_vector(&r).unwrap();
    assert!((f[layout::MEAN] - (a + b) / 2.0).abs() < 1e-15);
    assert!((f[layout::VARIANCE] - (a - b) * (a - b) / 4.0).abs() < 1e-15);
    assert!(merge_features(&t, &r, 1).is_err());
}

fn is_moment_or_histogram(j: usize) -> bool {
    let k = j % FEATURES_PER_CHANNEL;
    !(k == layout::CONTRAST || k == layout::ENERGY || k == layout::ENTROPY)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn merged_region_matches_union(seed in 0u64..10_000, order_seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 5, 9);
        let v = random_volume(seed, dims, 2);
        let sp = random_partition(seed, &v);
        let table = extract_features(&v, &sp, &[0, 1]).unwrap();
        let mut ids: Vec<u32> = (0..sp.count() as u32).collect();
        // Deterministic shuffle from the second seed.
        let mut state = order_seed | 1;
        for i in (1..ids.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ids.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let take = ids.len().min(5);
        let members: BTreeSet<u32> = ids[..take].iter().copied().collect();
        let mut region = table.empty_region();
        for &m in &ids[..take] {
            region = merge_features(&table, &region, m).unwrap();
        }
        let got = table.region_vector(&region).unwrap();
        let voxels = voxels_of(&sp, &members);
        let mut want = oracle_channel_features(&v, 0, &voxels);
        want.extend(oracle_channel_features(&v, 1, &voxels));
        for (j, (g, w)) in got.iter().zip(&want).enumerate() {
            if is_moment_or_histogram(j) {
                prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "feature {} {} vs {}", j, g, w);
            }
        }
        prop_assert_eq!(region.voxel_count() as usize, voxels.len());
    }

    #[test]
    fn feature_ranges(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 4, 10);
        let v = random_volume(seed, dims, 1);
        let sp = random_partition(seed, &v);
        let table = extract_features(&v, &sp, &[0]).unwrap();
        for f in table.vectors() {
            prop_assert!(f[layout::VARIANCE] >= 0.0);
            prop_assert!(f[layout::ENERGY] > 0.0 && f[layout::ENERGY] <= 1.0 + 1e-12);
            prop_assert!(f[layout::ENTROPY] >= 0.0);
            for range in [layout::INTENSITY_HIST, layout::ORIENTATION_HIST, layout::MAGNITUDE_HIST] {
                prop_assert!((f[range].iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn degenerate_range_puts_mass_in_first_bin() {
    let t = table_1d(vec![3.0; 6], vec![0, 0, 0, 1, 1, 1]);
    assert!(t.context()[0].degenerate);
    let f = t.vector(1);
    assert_eq!(f[layout::INTENSITY_HIST.start], 1.0);
    assert_eq!(f[layout::SKEWNESS], 0.0);
    assert_eq!(f[layout::ENERGY], 1.0);
    assert_eq!(t.normalization().active_count(), 0);
}
