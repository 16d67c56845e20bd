//! Supervoxel-based refinement of 3D segmentation masks.
//!
//! The pipeline clusters a multi-channel volume into supervoxels
//! ([`supervoxel::slic`]), describes each supervoxel with intensity, texture
//! and gradient statistics ([`features`]), links them in a region adjacency
//! graph ([`rag`]), and grows a seed mask over that graph by mutual
//! best-neighbour merging ([`refine`]). [`metrics`] scores masks,
//! [`schedule`] implements the pseudo-label batch ramp used when the refined
//! masks feed a semi-supervised trainer, and [`phantom`] generates
//! deterministic synthetic cases for testing.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod bench;
pub mod error;
pub mod features;
pub mod metrics;
pub mod phantom;
pub mod rag;
pub mod refine;
pub mod scalar;
pub mod schedule;
pub mod similarity;
pub mod supervoxel;
pub mod volume;

pub use error::{Result, SvxError};
pub use scalar::Scalar;
pub use volume::{Dims, LabelMap, Spacing, Volume};

/// Volumes as stored on disk (`MET_FLOAT`).
pub type Volume32 = Volume<f32>;
/// Double-precision volumes.
pub type Volume64 = Volume<f64>;
pub type ScheduleParams64 = schedule::ScheduleParams<f64>;
pub type ScheduleParams32 = schedule::ScheduleParams<f32>;
