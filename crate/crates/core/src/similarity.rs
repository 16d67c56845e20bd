//! Merge score between a region and a candidate supervoxel.
//!
//! `sim = lambda * content + (1 - lambda) * border`, where
//! `content = exp(-ward / tau)` compares z-scored feature vectors with the
//! Ward merge cost and `border` is the shared face count relative to the
//! smaller of the two boundaries.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvxError};
use crate::features::{FeatureTable, RegionStats};
use crate::rag::{shared_border, Rag};

/// Content distance scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tau {
    /// Median Ward distance over all graph edges, 1.0 if that is zero.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub lambda: f64,
    pub tau: Tau,
    pub sim_0: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            tau: Tau::Auto,
            sim_0: 0.1,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SvxError::Param(format!("lambda must be in [0, 1], got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.sim_0) {
            return Err(SvxError::Param(format!("sim_0 must be in [0, 1], got {}", self.sim_0)));
        }
        if let Tau::Fixed(t) = self.tau {
            if !(t.is_finite() && t > 0.0) {
                return Err(SvxError::Param(format!("tau must be > 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// `n_a n_b / (n_a + n_b) * |a - b|^2` over already-normalised vectors.
pub fn ward_distance(a: &[f64], n_a: u64, b: &[f64], n_b: u64) -> Result<f64> {
    if n_a == 0 || n_b == 0 {
        return Err(SvxError::Param("Ward distance needs non-empty clusters".into()));
    }
    if a.len() != b.len() {
        return Err(SvxError::Param("feature vectors differ in length".into()));
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let (na, nb) = (n_a as f64, n_b as f64);
    Ok(na * nb / (na + nb) * d2)
}

pub fn content_similarity(ward: f64, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(SvxError::Param(format!("tau must be > 0, got {tau}")));
    }
    Ok((-ward / tau).exp())
}

/// Shared faces over the smaller of the candidate's boundary and the member
/// region's outer boundary. Non-adjacent candidates score 0.
pub fn border_similarity(rag: &Rag, members: &BTreeSet<u32>, candidate: u32) -> Result<f64> {
    let shared = shared_border(rag, members, candidate)?;
    if shared == 0 {
        return Ok(0.0);
    }
    let denom = rag.boundary_faces(candidate).min(rag.region_boundary_faces(members));
    Ok(shared as f64 / denom as f64)
}

/// Median Ward distance across graph edges between single supervoxels.
pub fn auto_tau(rag: &Rag, table: &FeatureTable) -> f64 {
    let mut d: Vec<f64> = rag
        .edges()
        .iter()
        .map(|e| {
            ward_distance(
                table.normalized(e.a),
                table.voxel_count(e.a),
                table.normalized(e.b),
                table.voxel_count(e.b),
            )
            .expect("supervoxels are non-empty")
        })
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = d.len();
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Normalised region features and outer boundary face count.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionView {
    pub normalized: Vec<f64>,
    pub boundary_faces: u64,
}

/// Evaluates Sim(region, candidate) against one graph and feature table
/// with `tau` resolved once.
pub struct Scorer<'a> {
    rag: &'a Rag,
    table: &'a FeatureTable,
    lambda: f64,
    tau: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(rag: &'a Rag, table: &'a FeatureTable, params: &SimilarityParams) -> Result<Self> {
        params.validate()?;
        if rag.len() != table.len() {
            return Err(SvxError::Param("graph and feature table disagree on supervoxel count".into()));
        }
        let tau = match params.tau {
            Tau::Auto => auto_tau(rag, table),
            Tau::Fixed(t) => t,
        };
        Ok(Self {
            rag,
            table,
            lambda: params.lambda,
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Region-side quantities that stay fixed until the region changes.
    pub fn prepare_region(&self, region: &RegionStats) -> Result<RegionView> {
        let f = self
            .table
            .region_vector(region)
            .ok_or_else(|| SvxError::Param("region is empty".into()))?;
        Ok(RegionView {
            normalized: self.table.normalization().normalize(&f),
            boundary_faces: self.rag.region_boundary_faces(region.members()),
        })
    }

    /// Region-side features come from the live aggregate.
    pub fn region_similarity(&self, region: &RegionStats, view: &RegionView, candidate: u32) -> Result<f64> {
        let ward = ward_distance(
            &view.normalized,
            region.voxel_count(),
            self.table.normalized(candidate),
            self.table.voxel_count(candidate),
        )?;
        let content = content_similarity(ward, self.tau)?;
        let shared = shared_border(self.rag, region.members(), candidate)?;
        let border = if shared == 0 {
            0.0
        } else {
            shared as f64 / self.rag.boundary_faces(candidate).min(view.boundary_faces) as f64
        };
        Ok(self.lambda * content + (1.0 - self.lambda) * border)
    }

    /// Similarity between two single supervoxels.
    pub fn pair_similarity(&self, a: u32, b: u32) -> Result<f64> {
        let ward = ward_distance(
            self.table.normalized(a),
            self.table.voxel_count(a),
            self.table.normalized(b),
            self.table.voxel_count(b),
        )?;
        let content = content_similarity(ward, self.tau)?;
        let border = border_similarity(self.rag, &BTreeSet::from([a]), b)?;
        Ok(self.lambda * content + (1.0 - self.lambda) * border)
    }
}

/// Sim(region, candidate) in one call; resolves tau each time.
pub fn sim(region: &RegionStats, candidate: u32, rag: &Rag, table: &FeatureTable, params: &SimilarityParams) -> Result<f64> {
    let scorer = Scorer::new(rag, table, params)?;
    let view = scorer.prepare_region(region)?;
    scorer.region_similarity(region, &view, candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ward_basics() {
        assert_eq!(ward_distance(&[1.0, 2.0], 3, &[1.0, 2.0], 9).unwrap(), 0.0);
        assert_eq!(ward_distance(&[0.0, 0.0], 1, &[0.6, 0.8], 1).unwrap(), 0.5);
        assert!(ward_distance(&[0.0], 0, &[0.0], 1).is_err());
    }

    #[test]
    fn content_kernel() {
        assert_eq!(content_similarity(0.0, 2.0).unwrap(), 1.0);
        assert!((content_similarity(2.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(content_similarity(1.0, 0.0).is_err());
    }

    #[test]
    fn params_validated() {
        let mut p = SimilarityParams::default();
        assert!(p.validate().is_ok());
        p.lambda = 1.5;
        assert!(p.validate().is_err());
        p = SimilarityParams {
            tau: Tau::Fixed(0.0),
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
