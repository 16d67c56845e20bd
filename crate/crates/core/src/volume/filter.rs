use rayon::prelude::*;

use super::{strides, voxel_count, Dims, Volume};
use crate::error::{Result, SvxError};
use crate::scalar::Scalar;

fn gaussian_kernel<T: Scalar>(sigma: f64) -> Vec<T> {
    let radius = (3.0 * sigma).ceil() as usize;
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::of(w / total)).collect()
}

/// Convolves one channel along `axis` with edge replication.
fn convolve_axis<T: Scalar>(src: &[T], dst: &mut [T], dims: Dims, axis: usize, kernel: &[T]) {
    let radius = (kernel.len() / 2) as isize;
    let len = dims[axis] as isize;
    let stride = strides(dims)[axis];
    // Parallel over z-slabs; each output voxel depends only on `src`.
    let slab = dims[0] * dims[1];
    dst.par_chunks_mut(slab).enumerate().for_each(|(z, out)| {
        for (j, o) in out.iter_mut().enumerate() {
            let i = z * slab + j;
            let pos = [j % dims[0], j / dims[0], z][axis] as isize;
            let base = i - pos as usize * stride;
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let p = (pos + k as isize - radius).clamp(0, len - 1) as usize;
                acc += w * src[base + p * stride];
            }
            *o = acc;
        }
    });
}

/// Separable per-channel Gaussian smoothing with kernel radius `ceil(3 sigma)`
/// and edge replication. `sigma == 0` returns a copy.
pub fn gaussian_smooth<T: Scalar>(v: &Volume<T>, sigma: f64) -> Result<Volume<T>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(SvxError::Param(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(v.clone());
    }
    let kernel = gaussian_kernel::<T>(sigma);
    let dims = v.dims();
    let n = voxel_count(dims);
    let mut out = Vec::with_capacity(v.data().len());
    let mut a = vec![T::zero(); n];
    let mut b = vec![T::zero(); n];
    for c in 0..v.channels() {
        convolve_axis(v.channel(c), &mut a, dims, 0, &kernel);
        convolve_axis(&a, &mut b, dims, 1, &kernel);
        convolve_axis(&b, &mut a, dims, 2, &kernel);
        out.extend_from_slice(&a);
    }
    Ok(Volume::from_parts_unchecked(dims, v.spacing(), v.channels(), out))
}

/// Per-voxel gradient components in intensity units per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField<T> {
    pub gx: Vec<T>,
    pub gy: Vec<T>,
    pub gz: Vec<T>,
}

impl<T: Scalar> GradientField<T> {
    pub fn len(&self) -> usize {
        self.gx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gx.is_empty()
    }

    #[inline]
    pub fn magnitude_at(&self, i: usize) -> T {
        (self.gx[i] * self.gx[i] + self.gy[i] * self.gy[i] + self.gz[i] * self.gz[i]).sqrt()
    }

    pub fn magnitude(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.magnitude_at(i)).collect()
    }
}

fn diff_axis<T: Scalar>(f: &[T], dims: Dims, axis: usize) -> Vec<T> {
    let len = dims[axis];
    let stride = strides(dims)[axis];
    let half = T::of(0.5);
    let mut out = vec![T::zero(); f.len()];
    if len < 2 {
        return out;
    }
    out.par_iter_mut().enumerate().for_each(|(i, g)| {
        let pos = (i / stride) % len;
        *g = if pos == 0 {
            f[i + stride] - f[i]
        } else if pos == len - 1 {
            f[i] - f[i - stride]
        } else {
            (f[i + stride] - f[i - stride]) * half
        };
    });
    out
}

/// Central differences in the interior, one-sided differences on the faces.
pub fn gradient_field<T: Scalar>(v: &Volume<T>, channel: usize) -> Result<GradientField<T>> {
    v.check_channel(channel)?;
    let f = v.channel(channel);
    let dims = v.dims();
    Ok(GradientField {
        gx: diff_axis(f, dims, 0),
        gy: diff_axis(f, dims, 1),
        gz: diff_axis(f, dims, 2),
    })
}
