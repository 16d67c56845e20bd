use proptest::prelude::*;
use svx_core::metrics::dsc;
use svx_core::phantom::{corrupt_seed, generate_phantom, CorruptMode, PhantomParams};
use svx_core::{LabelMap, SvxError};

#[test]
fn core_within_whole_tumour_for_100_seeds() {
    for seed in 0..100 {
        let ph = generate_phantom::<f32>(&PhantomParams::with_seed(seed)).unwrap();
        assert!(ph.gt_tc.foreground_count() > 0);
        assert!(ph
            .gt_tc
            .labels()
            .iter()
            .zip(ph.gt_wt.labels())
            .all(|(t, w)| *t == 0 || *w != 0));
    }
}

#[test]
fn erosion_lowers_overlap_monotonically() {
    for seed in 0..10 {
        let ph = generate_phantom::<f32>(&PhantomParams::with_seed(seed)).unwrap();
        let mut last = 1.0;
        for radius in 1..=4 {
            let e = corrupt_seed(&ph.gt_wt, CorruptMode::Erode, radius as f64, 0).unwrap();
            let d = dsc(&e, &ph.gt_wt).unwrap();
            assert!(d < last, "seed {seed} radius {radius}: {d} >= {last}");
            last = d;
        }
    }
}

#[test]
fn parameter_validation() {
    for p in [
        PhantomParams {
            wt_blobs: 0,
            ..Default::default()
        },
        PhantomParams {
            noise_sigma: -0.1,
            ..Default::default()
        },
        PhantomParams {
            dims: [64, 64, 15],
            ..Default::default()
        },
    ] {
        assert!(matches!(generate_phantom::<f32>(&p), Err(SvxError::Param(_))));
    }
}

fn blob_mask(seed: u64) -> LabelMap {
    generate_phantom::<f32>(&PhantomParams {
        dims: [16, 16, 16],
        ..PhantomParams::with_seed(seed)
    })
    .unwrap()
    .gt_wt
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corruption_is_deterministic_and_never_silently_empty(
        seed in 0u64..1000,
        mode in prop::sample::select(vec![
            CorruptMode::Erode,
            CorruptMode::Dilate,
            CorruptMode::DropComponents,
            CorruptMode::BoundaryNoise,
        ]),
        magnitude in 0.0f64..5.0,
    ) {
        let m = blob_mask(seed);
        let a = corrupt_seed(&m, mode, magnitude, seed);
        let b = corrupt_seed(&m, mode, magnitude, seed);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert!(a.foreground_count() > 0);
            }
            (Err(SvxError::EmptySeed), Err(SvxError::EmptySeed)) => {}
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn dilation_contains_erosion_contains_nothing_new(seed in 0u64..1000, r in 1u32..3) {
        let m = blob_mask(seed);
        let d = corrupt_seed(&m, CorruptMode::Dilate, r as f64, 0).unwrap();
        for (x, y) in m.labels().iter().zip(d.labels()) {
            prop_assert!(*x == 0 || *y != 0);
        }
        if let Ok(e) = corrupt_seed(&m, CorruptMode::Erode, r as f64, 0) {
            for (x, y) in e.labels().iter().zip(m.labels()) {
                prop_assert!(*x == 0 || *y != 0);
            }
        }
    }
}
