//! Seeded supervoxel region refinement.
//!
//! A seed mask is snapped to the supervoxels it mostly covers, then grown
//! one supervoxel at a time. Each pass ranks the region's neighbours by
//! similarity to the region and examines at most `n_c` of them, best first.
//! A candidate joins when its own most similar neighbour is already a region
//! member and its similarity to the region exceeds `sim_0`. Every merge
//! refreshes the region statistics and neighbour set and starts a new pass;
//! the first pass without a merge ends the run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvxError};
use crate::features::{extract_features, FeatureTable, RegionStats};
use crate::rag::{build_rag, find_neighbours, Rag};
use crate::scalar::Scalar;
use crate::similarity::{Scorer, SimilarityParams};
use crate::supervoxel::{slic, SlicParams, SupervoxelMap};
use crate::volume::{LabelMap, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Candidates examined per pass.
    pub n_c: usize,
    /// A supervoxel joins the fitted seed when more than this fraction of
    /// its voxels lie inside the seed mask.
    pub fit_threshold: f64,
    /// Upper bound on passes; `None` means the supervoxel count.
    pub max_passes: Option<usize>,
    /// Carries `sim_0`, the stopping similarity.
    pub similarity: SimilarityParams,
    pub slic: SlicParams,
    pub feature_channels: Vec<usize>,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            n_c: 30,
            fit_threshold: 0.5,
            max_passes: None,
            similarity: SimilarityParams::default(),
            slic: SlicParams::default(),
            feature_channels: vec![0],
        }
    }
}

impl RefineParams {
    pub fn sim_0(&self) -> f64 {
        self.similarity.sim_0
    }

    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        if self.n_c == 0 {
            return Err(SvxError::Param("n_c must be >= 1".into()));
        }
        if !(self.fit_threshold > 0.0 && self.fit_threshold <= 1.0) {
            return Err(SvxError::Param(format!(
                "fit_threshold must be in (0, 1], got {}",
                self.fit_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MergeRecord {
    pub supervoxel: u32,
    pub similarity: f64,
    pub voxels: u64,
}

/// The growing region: members with their aggregate statistics, the
/// current neighbour set, and the merges so far.
#[derive(Clone, Debug)]
pub struct RegionState {
    pub stats: RegionStats,
    pub neighbours: BTreeSet<u32>,
    pub log: Vec<MergeRecord>,
}

impl RegionState {
    pub fn members(&self) -> &BTreeSet<u32> {
        self.stats.members()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Refined,
    /// No supervoxel passed the fit threshold; the seed is returned as is.
    SeedPassthrough,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub mask: LabelMap,
    pub status: RefineStatus,
    pub seed_members: BTreeSet<u32>,
    pub members: BTreeSet<u32>,
    pub log: Vec<MergeRecord>,
    pub passes: usize,
    /// Largest number of candidates examined in any single pass.
    pub max_candidates_per_pass: usize,
    pub supervoxels: usize,
}

fn check_seed(sp_dims: [usize; 3], p0: &LabelMap) -> Result<()> {
    if p0.dims() != sp_dims {
        return Err(SvxError::Param(format!(
            "seed mask {:?} does not match volume {:?}",
            p0.dims(),
            sp_dims
        )));
    }
    if p0.foreground_count() == 0 {
        return Err(SvxError::EmptySeed);
    }
    Ok(())
}

/// Supervoxels whose in-seed fraction exceeds `fit_threshold` (or equals 1).
pub fn fit_members(sp: &SupervoxelMap, p0: &LabelMap, fit_threshold: f64) -> Result<BTreeSet<u32>> {
    check_seed(sp.dims(), p0)?;
    let mut inside = vec![0usize; sp.count()];
    for (&l, &m) in sp.labels().iter().zip(p0.labels()) {
        if m != 0 {
            inside[l as usize] += 1;
        }
    }
    let members: BTreeSet<u32> = sp
        .sizes()
        .iter()
        .zip(&inside)
        .enumerate()
        .filter(|(_, (&size, &n))| n == size || n as f64 / size as f64 > fit_threshold)
        .map(|(sv, _)| sv as u32)
        .collect();
    if members.is_empty() {
        return Err(SvxError::NoSeedOverlap);
    }
    Ok(members)
}

/// Snaps the seed to supervoxels and builds the initial region state.
pub fn fit_pseudolabel(
    sp: &SupervoxelMap,
    p0: &LabelMap,
    fit_threshold: f64,
    table: &FeatureTable,
    rag: &Rag,
) -> Result<RegionState> {
    let members = fit_members(sp, p0, fit_threshold)?;
    let mut stats = table.empty_region();
    for &m in &members {
        stats.absorb(table.stats(m))?;
    }
    let neighbours = find_neighbours(rag, &members)?;
    Ok(RegionState {
        stats,
        neighbours,
        log: Vec::new(),
    })
}

/// Binary mask of the union of `members`.
pub fn members_mask(sp: &SupervoxelMap, members: &BTreeSet<u32>) -> LabelMap {
    let mut flags = vec![false; sp.count()];
    for &m in members {
        flags[m as usize] = true;
    }
    let labels = sp.labels().iter().map(|&l| flags[l as usize] as u32).collect();
    LabelMap::from_parts_unchecked(sp.dims(), sp.as_label_map().spacing(), labels)
}

fn binarize(p0: &LabelMap) -> LabelMap {
    let labels = p0.labels().iter().map(|&l| (l != 0) as u32).collect();
    LabelMap::from_parts_unchecked(p0.dims(), p0.spacing(), labels)
}

/// Most similar neighbour of a single supervoxel; ties go to the lowest id.
fn best_neighbour(scorer: &Scorer<'_>, rag: &Rag, sv: u32) -> Result<Option<u32>> {
    let mut best: Option<(f64, u32)> = None;
    for n in rag.neighbours(sv) {
        let s = scorer.pair_similarity(sv, n)?;
        if best.is_none_or(|(bs, _)| s > bs) {
            best = Some((s, n));
        }
    }
    Ok(best.map(|(_, n)| n))
}

/// Grows `p0` over a precomputed supervoxel map, feature table and graph.
pub fn refine_on(
    sp: &SupervoxelMap,
    table: &FeatureTable,
    rag: &Rag,
    p0: &LabelMap,
    params: &RefineParams,
) -> Result<RefineOutcome> {
    params.validate()?;
    let mut state = match fit_pseudolabel(sp, p0, params.fit_threshold, table, rag) {
        Ok(state) => state,
        Err(SvxError::NoSeedOverlap) => {
            return Ok(RefineOutcome {
                mask: binarize(p0),
                status: RefineStatus::SeedPassthrough,
                seed_members: BTreeSet::new(),
                members: BTreeSet::new(),
                log: Vec::new(),
                passes: 0,
                max_candidates_per_pass: 0,
                supervoxels: sp.count(),
            })
        }
        Err(e) => return Err(e),
    };
    let seed_members = state.members().clone();
    let scorer = Scorer::new(rag, table, &params.similarity)?;
    let sim_0 = params.sim_0();
    let max_passes = params.max_passes.unwrap_or(sp.count());
    let mut passes = 0;
    let mut max_candidates = 0;

    while passes < max_passes {
        passes += 1;
        let region = scorer.prepare_region(&state.stats)?;
        let mut ranked = Vec::with_capacity(state.neighbours.len());
        for &n in &state.neighbours {
            ranked.push((scorer.region_similarity(&state.stats, &region, n)?, n));
        }
        // Best first; equal scores fall back to the lower id.
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

        let mut merged = None;
        let mut examined = 0;
        for &(similarity, candidate) in ranked.iter().take(params.n_c) {
            examined += 1;
            let mutual = best_neighbour(&scorer, rag, candidate)?.is_some_and(|q| state.stats.contains(q));
            if mutual && similarity > sim_0 {
                merged = Some((candidate, similarity));
                break;
            }
        }
        max_candidates = max_candidates.max(examined);

        let Some((candidate, similarity)) = merged else {
            break;
        };
        state.stats.absorb(table.stats(candidate))?;
        state.neighbours = find_neighbours(rag, state.members())?;
        state.log.push(MergeRecord {
            supervoxel: candidate,
            similarity,
            voxels: table.voxel_count(candidate),
        });
    }

    Ok(RefineOutcome {
        mask: members_mask(sp, state.members()),
        status: RefineStatus::Refined,
        members: state.members().clone(),
        seed_members,
        log: state.log,
        passes,
        max_candidates_per_pass: max_candidates,
        supervoxels: sp.count(),
    })
}

/// Supervoxels, features and graph for one volume.
pub struct Prepared {
    pub supervoxels: SupervoxelMap,
    pub table: FeatureTable,
    pub rag: Rag,
}

pub fn prepare<T: Scalar>(v: &Volume<T>, slic_params: &SlicParams, feature_channels: &[usize]) -> Result<Prepared> {
    let supervoxels = slic(v, slic_params)?;
    let table = extract_features(v, &supervoxels, feature_channels)?;
    let rag = build_rag(&supervoxels);
    Ok(Prepared {
        supervoxels,
        table,
        rag,
    })
}

/// Full refinement of one seed mask on one volume.
pub fn refine_region<T: Scalar>(v: &Volume<T>, p0: &LabelMap, params: &RefineParams) -> Result<RefineOutcome> {
    params.validate()?;
    check_seed(v.dims(), p0)?;
    let prep = prepare(v, &params.slic, &params.feature_channels)?;
    refine_on(&prep.supervoxels, &prep.table, &prep.rag, p0, params)
}

/// Channel index of each MRI contrast inside a multi-channel volume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityRoles {
    pub t1: Option<usize>,
    pub t1gd: Option<usize>,
    pub t2: Option<usize>,
    pub flair: Option<usize>,
}

impl ModalityRoles {
    /// T1 = 0, T1Gd = 1, T2 = 2, FLAIR = 3.
    pub fn standard() -> Self {
        Self {
            t1: Some(0),
            t1gd: Some(1),
            t2: Some(2),
            flair: Some(3),
        }
    }

    /// Parses `T1=0,T1Gd=1,T2=2,FLAIR=3` (names are case-insensitive).
    pub fn parse(spec: &str) -> Result<Self> {
        let mut roles = Self::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, idx) = item
                .split_once('=')
                .ok_or_else(|| SvxError::Config(format!("expected ROLE=INDEX, got `{item}`")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| SvxError::Config(format!("bad channel index in `{item}`")))?;
            let slot = match name.trim().to_ascii_lowercase().as_str() {
                "t1" => &mut roles.t1,
                "t1gd" | "t1ce" => &mut roles.t1gd,
                "t2" => &mut roles.t2,
                "flair" | "t2-flair" => &mut roles.flair,
                other => return Err(SvxError::Config(format!("unknown modality role `{other}`"))),
            };
            *slot = Some(idx);
        }
        Ok(roles)
    }

    fn require(role: Option<usize>, name: &str) -> Result<usize> {
        role.ok_or_else(|| SvxError::Config(format!("modality role {name} is not assigned")))
    }

    pub fn flair_channel(&self) -> Result<usize> {
        Self::require(self.flair, "FLAIR")
    }

    /// (T1Gd, T2).
    pub fn core_channels(&self) -> Result<[usize; 2]> {
        Ok([Self::require(self.t1gd, "T1Gd")?, Self::require(self.t2, "T2")?])
    }

    /// (T1Gd, T2, FLAIR).
    pub fn default_feature_channels(&self) -> Result<Vec<usize>> {
        let [t1gd, t2] = self.core_channels()?;
        Ok(vec![t1gd, t2, self.flair_channel()?])
    }
}

/// Settings shared by both tumour regions of a case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    pub roles: ModalityRoles,
    /// Clustering channels are filled in per region.
    pub refine: RefineParams,
    /// `None` selects (T1Gd, T2, FLAIR).
    pub feature_channels: Option<Vec<usize>>,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            roles: ModalityRoles::standard(),
            refine: RefineParams::default(),
            feature_channels: None,
        }
    }
}

impl CaseParams {
    /// Per-region parameters: whole tumour clusters on FLAIR, tumour core on
    /// (T1Gd, T2) jointly.
    pub fn region_params(&self) -> Result<(RefineParams, RefineParams)> {
        let features = match &self.feature_channels {
            Some(c) => c.clone(),
            None => self.roles.default_feature_channels()?,
        };
        let mut wt = self.refine.clone();
        wt.slic.channels = vec![self.roles.flair_channel()?];
        wt.feature_channels = features.clone();
        let mut tc = self.refine.clone();
        tc.slic.channels = self.roles.core_channels()?.to_vec();
        tc.feature_channels = features;
        Ok((wt, tc))
    }
}

#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub wt: RefineOutcome,
    /// Core refinement, already clipped to the refined whole tumour.
    pub tc: RefineOutcome,
}

/// Refines the whole-tumour and tumour-core seeds of one case and clips the
/// core to the whole tumour.
pub fn refine_case<T: Scalar>(v: &Volume<T>, p0_wt: &LabelMap, p0_tc: &LabelMap, params: &CaseParams) -> Result<CaseOutcome> {
    let (wt_params, tc_params) = params.region_params()?;
    let wt = refine_region(v, p0_wt, &wt_params)?;
    let mut tc = refine_region(v, p0_tc, &tc_params)?;
    let clipped = tc
        .mask
        .labels()
        .iter()
        .zip(wt.mask.labels())
        .map(|(&t, &w)| (t != 0 && w != 0) as u32)
        .collect();
    tc.mask = LabelMap::from_parts_unchecked(tc.mask.dims(), tc.mask.spacing(), clipped);
    Ok(CaseOutcome { wt, tc })
}
