//! Overlap and surface-distance metrics for binary masks.

use serde::Serialize;

use crate::error::{Result, SvxError};
use crate::volume::{coords, strides, Dims, LabelMap, Spacing};

fn check_dims(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(SvxError::Param(format!(
            "mask dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// (|A ∩ B|, |A|, |B|).
fn overlap(a: &LabelMap, b: &LabelMap) -> (usize, usize, usize) {
    a.labels().iter().zip(b.labels()).fold((0, 0, 0), |(i, na, nb), (&x, &y)| {
        let (x, y) = (x != 0, y != 0);
        (i + (x && y) as usize, na + x as usize, nb + y as usize)
    })
}

/// Dice coefficient; 1.0 when both masks are empty.
pub fn dsc(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    check_dims(a, b)?;
    let (i, na, nb) = overlap(a, b);
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * i as f64 / (na + nb) as f64)
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn iou(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    check_dims(a, b)?;
    let (i, na, nb) = overlap(a, b);
    let union = na + nb - i;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(i as f64 / union as f64)
}

/// Foreground voxels with at least one background or out-of-volume
/// 6-neighbour.
pub fn surface(mask: &[bool], dims: Dims) -> Vec<bool> {
    let st = strides(dims);
    (0..mask.len())
        .map(|i| {
            if !mask[i] {
                return false;
            }
            let p = coords(dims, i);
            (0..3).any(|a| p[a] == 0 || p[a] + 1 == dims[a] || !mask[i - st[a]] || !mask[i + st[a]])
        })
        .collect()
}

/// 1D squared distance transform along a line with sample spacing `h`.
fn edt_1d(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let pos = |q: usize| q as f64 * h;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((fq + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in millimetres) from every voxel to the
/// nearest `true` voxel of `features`.
pub fn squared_distance_transform(features: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let mut d: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let st = strides(dims);
    let mut line = Vec::new();
    let mut out = Vec::new();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    for axis in 0..3 {
        let len = dims[axis];
        line.resize(len, 0.0);
        out.resize(len, 0.0);
        for start in 0..d.len() {
            if coords(dims, start)[axis] != 0 {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = d[start + k * st[axis]];
            }
            edt_1d(&line, spacing[axis], &mut out, &mut v, &mut z);
            for (k, &o) in out.iter().enumerate() {
                d[start + k * st[axis]] = o;
            }
        }
    }
    d
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Distances from each surface voxel of `from` to the nearest surface voxel
/// of `to`, sorted ascending.
fn directed_surface_distances(from: &[bool], to: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let dt = squared_distance_transform(to, dims, spacing);
    let mut d: Vec<f64> = from
        .iter()
        .zip(&dt)
        .filter(|(&s, _)| s)
        .map(|(_, &d2)| d2.sqrt())
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// 95th-percentile symmetric surface distance in the units of `spacing`.
pub fn hd95(a: &LabelMap, b: &LabelMap, spacing: Spacing) -> Result<f64> {
    check_dims(a, b)?;
    let dims = a.dims();
    let (ma, mb) = (a.mask(), b.mask());
    if !ma.iter().any(|&x| x) || !mb.iter().any(|&x| x) {
        return Err(SvxError::EmptyMask);
    }
    let (sa, sb) = (surface(&ma, dims), surface(&mb, dims));
    let ab = directed_surface_distances(&sa, &sb, dims, spacing);
    let ba = directed_surface_distances(&sb, &sa, dims, spacing);
    Ok(percentile(&ab, 95.0).max(percentile(&ba, 95.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dsc: f64,
    pub hd95_mm: f64,
    pub iou: f64,
    pub pred_voxels: usize,
    pub gt_voxels: usize,
}

/// All metrics for one prediction against ground truth, using the ground
/// truth's voxel spacing.
pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricsReport> {
    Ok(MetricsReport {
        dsc: dsc(pred, gt)?,
        hd95_mm: hd95(pred, gt, gt.spacing())?,
        iou: iou(pred, gt)?,
        pred_voxels: pred.foreground_count(),
        gt_voxels: gt.foreground_count(),
    })
}
