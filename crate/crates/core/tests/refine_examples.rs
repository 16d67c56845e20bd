mod common;

use std::collections::BTreeSet;

use rand::Rng;
use svx_core::features::extract_features;
use svx_core::metrics::dsc;
use svx_core::phantom::{generate_phantom, PhantomParams};
use svx_core::rag::build_rag;
use svx_core::refine::{
    fit_members, members_mask, prepare, refine_case, refine_on, refine_region, CaseParams, ModalityRoles, RefineParams,
    RefineStatus,
};
use svx_core::similarity::{auto_tau, SimilarityParams};
use svx_core::supervoxel::SupervoxelMap;
use svx_core::{LabelMap, SvxError, Volume};

use common::*;

/// 8^3 volume: a bright bar (x < 4, y < 4) split at z = 4 into two
/// supervoxels, plus two background supervoxels.
fn bar() -> (Volume<f64>, SupervoxelMap, [u32; 4]) {
    let d = [8, 8, 8];
    let v = Volume::from_fn(d, 1, |_, x, y, _| if x < 4 && y < 4 { 1.0 } else { 0.0 }).unwrap();
    let labels = (0..512)
        .map(|i| {
            let (x, y, z) = (i % 8, (i / 8) % 8, i / 64);
            match (x < 4, y < 4, z < 4) {
                (true, true, true) => 10,
                (true, true, false) => 11,
                (false, _, _) => 12,
                (true, false, _) => 13,
            }
        })
        .collect();
    let sp = SupervoxelMap::from_labels(&LabelMap::new(d, labels).unwrap());
    let id = |x, y, z| sp.labels()[idx(d, x, y, z)];
    let ids = [id(0, 0, 0), id(0, 0, 7), id(7, 0, 0), id(0, 7, 0)];
    (v, sp, ids)
}

fn run(v: &Volume<f64>, sp: &SupervoxelMap, seed: &BTreeSet<u32>, sim_0: f64) -> svx_core::refine::RefineOutcome {
    let table = extract_features(v, sp, &[0]).unwrap();
    let rag = build_rag(sp);
    let p0 = members_mask(sp, seed);
    let params = RefineParams {
        similarity: SimilarityParams {
            sim_0,
            ..Default::default()
        },
        ..Default::default()
    };
    refine_on(sp, &table, &rag, &p0, &params).unwrap()
}

#[test]
fn uniform_object_half_seed_grows_to_whole() {
    let (v, sp, [a, b, ..]) = bar();
    let out = run(&v, &sp, &BTreeSet::from([a]), 0.1);
    assert_eq!(out.members, BTreeSet::from([a, b]));
    assert_eq!(out.log.len(), 1);
    assert_eq!(out.log[0].supervoxel, b);
}

#[test]
fn exact_seed_is_kept_when_background_is_dissimilar() {
    let (v, sp, [a, b, ..]) = bar();
    let seed = BTreeSet::from([a, b]);
    let out = run(&v, &sp, &seed, 0.5);
    assert_eq!(out.members, seed);
    assert!(out.log.is_empty());
    assert_eq!(out.status, RefineStatus::Refined);
}

#[test]
fn fit_matches_brute_force_overlap() {
    let ph = generate_phantom::<f32>(&PhantomParams {
        dims: [20, 20, 20],
        ..PhantomParams::with_seed(4)
    })
    .unwrap();
    let v = ph.volume.cast::<f64>();
    let sp = random_partition(4, &v);
    let mut r = rng(9);
    for _ in 0..20 {
        let density = r.random_range(0.3..0.9);
        let p0 = random_mask(&mut r, sp.dims(), density);
        let thr = r.random_range(0.05..=1.0);
        let mut inside = vec![0usize; sp.count()];
        let mut size = vec![0usize; sp.count()];
        for (i, &l) in sp.labels().iter().enumerate() {
            size[l as usize] += 1;
            inside[l as usize] += (p0.labels()[i] != 0) as usize;
        }
        let want: BTreeSet<u32> = (0..sp.count())
            .filter(|&s| inside[s] == size[s] || inside[s] as f64 / size[s] as f64 > thr)
            .map(|s| s as u32)
            .collect();
        match fit_members(&sp, &p0, thr) {
            Ok(got) => assert_eq!(got, want),
            Err(SvxError::NoSeedOverlap) => assert!(want.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn seed_equal_to_three_supervoxels() {
    let (_, sp, [a, _, c, d]) = bar();
    let seed = BTreeSet::from([a, c, d]);
    assert_eq!(fit_members(&sp, &members_mask(&sp, &seed), 0.5).unwrap(), seed);
}

#[test]
fn errors_and_passthrough() {
    let (v, sp, [a, ..]) = bar();
    let p = RefineParams::default();
    let empty = LabelMap::zeros([8, 8, 8]).unwrap();
    assert!(matches!(refine_region(&v, &empty, &p), Err(SvxError::EmptySeed)));

    // One voxel of a 128-voxel supervoxel: nothing passes the threshold.
    let mut labels = vec![0u32; 512];
    labels[sp.labels().iter().position(|&l| l == a).unwrap()] = 7;
    let p0 = LabelMap::new([8, 8, 8], labels).unwrap();
    let table = extract_features(&v, &sp, &[0]).unwrap();
    let out = refine_on(&sp, &table, &build_rag(&sp), &p0, &p).unwrap();
    assert_eq!(out.status, RefineStatus::SeedPassthrough);
    assert_eq!(out.mask.foreground_count(), 1);
    assert!(out.mask.labels().iter().all(|&l| l <= 1));
}

fn noiseless(seed: u64) -> (svx_core::phantom::Phantom<f32>, CaseParams) {
    let ph = generate_phantom::<f32>(&PhantomParams {
        noise_sigma: 0.0,
        bias_amplitude: 0.0,
        dims: [40, 40, 40],
        ..PhantomParams::with_seed(seed)
    })
    .unwrap();
    let mut params = CaseParams::default();
    params.refine.slic.n_segments = 300;
    params.refine.slic.compactness = 0.1;
    params.refine.slic.sigma = 0.0;
    (ph, params)
}

/// Perfect seeds lose nothing and the core is left alone. The whole tumour
/// can still absorb background: see `noiseless_volume_uses_fallback_tau`.
#[test]
fn perfect_seeds_on_noiseless_phantom() {
    for seed in 0..6 {
        let (ph, params) = noiseless(seed);
        let out = refine_case(&ph.volume, &ph.gt_wt, &ph.gt_tc, &params).unwrap();
        assert!(out.wt.members.is_superset(&out.wt.seed_members), "seed {seed}");
        assert!(out.tc.log.is_empty(), "seed {seed}");
        assert!(dsc(&out.tc.mask, &ph.gt_tc).unwrap() > 0.99, "seed {seed}");
        assert!(dsc(&out.wt.mask, &ph.gt_wt).unwrap() > 0.75, "seed {seed}");
    }
    let (ph, params) = noiseless(0);
    let out = refine_case(&ph.volume, &ph.gt_wt, &ph.gt_tc, &params).unwrap();
    assert_eq!(out.wt.mask, ph.gt_wt);
    assert_eq!(out.tc.mask, ph.gt_tc);
}

/// Most adjacent background pairs are feature-identical, so the median Ward
/// distance is zero and tau drops to 1. Content similarity then vanishes for
/// every distinct pair and border similarity alone decides merges.
#[test]
fn noiseless_volume_uses_fallback_tau() {
    let (ph, params) = noiseless(1);
    let (wp, _) = params.region_params().unwrap();
    let prep = prepare(&ph.volume, &wp.slic, &wp.feature_channels).unwrap();
    assert_eq!(auto_tau(&prep.rag, &prep.table), 1.0);
    let out = refine_region(&ph.volume, &ph.gt_wt, &wp).unwrap();
    assert!(!out.log.is_empty());
    // Border similarity is at most 1, so with lambda = 0.5 and no content
    // term every merge scores at most 0.5.
    for m in &out.log {
        assert!(m.similarity <= 0.5 + 1e-9, "{m:?}");
    }
}

#[test]
fn core_is_clipped_to_whole_tumour() {
    let ph = generate_phantom::<f32>(&PhantomParams {
        dims: [32, 32, 32],
        ..PhantomParams::with_seed(3)
    })
    .unwrap();
    let mut params = CaseParams::default();
    params.refine.slic.n_segments = 400;
    params.refine.slic.compactness = 1.0;
    params.refine.slic.sigma = 0.5;
    // A core seed that spills well outside the whole tumour.
    let tc: Vec<u32> = ph.gt_wt.labels().iter().map(|_| 1).collect();
    let tc = LabelMap::new(ph.gt_wt.dims(), tc).unwrap();
    let out = refine_case(&ph.volume, &ph.gt_wt, &tc, &params).unwrap();
    for (t, w) in out.tc.mask.labels().iter().zip(out.wt.mask.labels()) {
        assert!(*t == 0 || *w != 0);
    }
    assert!(dsc(&out.wt.mask, &ph.gt_wt).unwrap() > 0.9);
}

#[test]
fn missing_role_is_config_error() {
    let ph = generate_phantom::<f32>(&PhantomParams {
        dims: [16, 16, 16],
        ..Default::default()
    })
    .unwrap();
    let params = CaseParams {
        roles: ModalityRoles::parse("T1=0,T1Gd=1,T2=2").unwrap(),
        ..Default::default()
    };
    assert!(matches!(
        refine_case(&ph.volume, &ph.gt_wt, &ph.gt_tc, &params),
        Err(SvxError::Config(_))
    ));
}
