mod common;

use proptest::prelude::*;
use svx_core::phantom::{generate_phantom, PhantomParams};
use svx_core::supervoxel::{slic, SlicParams};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn output_is_connected_partition(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = random_dims(&mut r, 3, 12);
        let v = random_volume(seed, dims, 2);
        let sp = random_partition(seed, &v);
        prop_assert_eq!(sp.labels().len(), v.voxel_count());
        prop_assert!(sp.sizes().iter().all(|&s| s > 0));
        prop_assert!(labels_are_connected(sp.as_label_map()));
        prop_assert_eq!(&random_partition(seed, &v), &sp);
    }
}

#[test]
fn default_parameters_on_full_size_input() {
    let ph = generate_phantom::<f32>(&PhantomParams {
        dims: [240, 240, 155],
        ..PhantomParams::with_seed(1)
    })
    .unwrap();
    let p = SlicParams {
        n_segments: 350,
        compactness: 0.01,
        sigma: 1.0,
        channels: vec![3],
        ..Default::default()
    };
    let sp = slic(&ph.volume, &p).unwrap();
    assert!((175..=700).contains(&sp.count()), "{} supervoxels", sp.count());
    assert!(labels_are_connected(sp.as_label_map()));
}

#[test]
fn rejects_bad_parameters() {
    let v = random_volume(0, [4, 4, 4], 1);
    let base = SlicParams {
        n_segments: 8,
        ..Default::default()
    };
    for p in [
        SlicParams { n_segments: 0, ..base.clone() },
        SlicParams { n_segments: 65, ..base.clone() },
        SlicParams { compactness: 0.0, ..base.clone() },
        SlicParams { sigma: -1.0, ..base.clone() },
        SlicParams { channels: vec![], ..base.clone() },
        SlicParams { channels: vec![1], ..base.clone() },
    ] {
        assert!(slic(&v, &p).is_err(), "{p:?}");
    }
}
