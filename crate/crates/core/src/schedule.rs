//! Pseudo-label batch ramp for semi-supervised training.
//!
//! The weight `alpha(e)` is zero before `t1`, rises linearly to `alpha_f` at
//! `t2`, and stays there. Each epoch of `n_t` batches then devotes
//! `n_t * alpha / (alpha + 1)` batches (rounded half up) to pseudo-labelled
//! data.

use num_traits::Float;
use serde::Serialize;

use crate::error::{Result, SvxError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleParams<T> {
    pub alpha_f: T,
    pub t1: u32,
    pub t2: u32,
    pub n_t: u32,
    /// Labelled patient count.
    pub p1: u32,
    /// Unlabelled patient count.
    pub p2: u32,
    /// Epochs between pseudo-label recomputations.
    pub refresh_period: u32,
}

impl<T: Float> ScheduleParams<T> {
    /// alpha_f = 3, T1 = 200, T2 = 700, N_T = 250, 5 labelled and 259
    /// unlabelled patients, refresh every 200 epochs.
    pub fn reference() -> Self {
        Self {
            alpha_f: T::from(3.0).unwrap(),
            t1: 200,
            t2: 700,
            n_t: 250,
            p1: 5,
            p2: 259,
            refresh_period: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 >= self.t2 {
            return Err(SvxError::Param(format!("need t1 < t2, got {} >= {}", self.t1, self.t2)));
        }
        if !self.alpha_f.is_finite() || self.alpha_f < T::zero() {
            return Err(SvxError::Param("alpha_f must be finite and >= 0".into()));
        }
        if self.n_t == 0 {
            return Err(SvxError::Param("n_t must be >= 1".into()));
        }
        if self.refresh_period == 0 {
            return Err(SvxError::Param("refresh_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ramp weight at epoch `e`.
pub fn alpha<T: Float>(e: u32, p: &ScheduleParams<T>) -> T {
    if e < p.t1 {
        T::zero()
    } else if e < p.t2 {
        let num = T::from(e - p.t1).unwrap();
        let den = T::from(p.t2 - p.t1).unwrap();
        num / den * p.alpha_f
    } else {
        p.alpha_f
    }
}

/// Number of pseudo-labelled batches in epoch `e`.
pub fn pseudo_batches<T: Float>(e: u32, p: &ScheduleParams<T>) -> u32 {
    let a = alpha(e, p);
    let share = T::from(p.n_t).unwrap() * a / (a + T::one());
    let half = T::from(0.5).unwrap();
    (share + half).floor().to_u32().unwrap_or(p.n_t).min(p.n_t)
}

/// Epochs at which pseudo-labels are recomputed: multiples of the refresh
/// period strictly below `total_epochs`.
pub fn refresh_epochs<T>(total_epochs: u32, p: &ScheduleParams<T>) -> Vec<u32> {
    if p.refresh_period == 0 {
        return Vec::new();
    }
    (1..)
        .map(|k| k * p.refresh_period)
        .take_while(|&e| e < total_epochs)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub epoch: u32,
    pub alpha: f64,
    pub pseudo_batches: u32,
}

/// One row per epoch in `0..epochs`.
pub fn table<T: Float>(epochs: u32, p: &ScheduleParams<T>) -> Vec<ScheduleRow> {
    (0..epochs)
        .map(|e| ScheduleRow {
            epoch: e,
            alpha: alpha(e, p).to_f64().unwrap_or(f64::NAN),
            pseudo_batches: pseudo_batches(e, p),
        })
        .collect()
}
