//! Multi-channel volumes, label maps, and the voxel-grid helpers shared by
//! every other module.
//!
//! Samples are stored channel-major with x varying fastest, so voxel
//! `(x, y, z)` of channel `c` lives at `c * n + x + nx * (y + ny * z)`.

mod filter;
mod io;

pub use filter::{gaussian_smooth, gradient_field, GradientField};
pub use io::{read_image, read_labels, read_volume, write_labels, write_volume, AnyImage, MetaElement};

use crate::error::{Result, SvxError};
use crate::scalar::Scalar;

/// Voxel counts along x, y, z.
pub type Dims = [usize; 3];

/// Physical voxel size in millimetres along x, y, z.
pub type Spacing = [f64; 3];

#[inline]
pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords(dims: Dims, i: usize) -> [usize; 3] {
    let x = i % dims[0];
    let r = i / dims[0];
    [x, r % dims[1], r / dims[1]]
}

/// Linear-index strides of the three axes.
#[inline]
pub fn strides(dims: Dims) -> [usize; 3] {
    [1, dims[0], dims[0] * dims[1]]
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(SvxError::Param(format!("dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

fn check_spacing(spacing: Spacing) -> Result<()> {
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(SvxError::Param(format!(
            "spacing must be finite and positive, got {spacing:?}"
        )));
    }
    Ok(())
}

/// A 3D scalar field with one or more channels and physical voxel spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Volume<T> {
    pub fn new(dims: Dims, spacing: Spacing, channels: usize, data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing)?;
        if channels == 0 {
            return Err(SvxError::Param("a volume needs at least one channel".into()));
        }
        let expected = channels * voxel_count(dims);
        if data.len() != expected {
            return Err(SvxError::Data(format!(
                "expected {expected} samples for {channels} x {dims:?}, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(SvxError::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            dims,
            spacing,
            channels,
            data,
        })
    }

    /// Builds a single-spacing volume by evaluating `f(channel, x, y, z)`.
    pub fn from_fn(dims: Dims, channels: usize, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * voxel_count(dims));
        for c in 0..channels {
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        data.push(f(c, x, y, z));
                    }
                }
            }
        }
        Self::new(dims, [1.0; 3], channels, data)
    }

    pub fn filled(dims: Dims, channels: usize, value: T) -> Result<Self> {
        Self::new(dims, [1.0; 3], channels, vec![value; channels * voxel_count(dims)])
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        check_spacing(spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxel_count(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.channels {
            return Err(SvxError::Param(format!(
                "channel {channel} out of range for a {}-channel volume",
                self.channels
            )));
        }
        Ok(())
    }

    /// Samples of one channel.
    pub fn channel(&self, channel: usize) -> &[T] {
        let n = self.voxel_count();
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, x: usize, y: usize, z: usize) -> T {
        self.data[channel * self.voxel_count() + linear_index(self.dims, x, y, z)]
    }

    /// New volume holding only the listed channels, in list order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.is_empty() {
            return Err(SvxError::Param("channel list is empty".into()));
        }
        let mut data = Vec::with_capacity(channels.len() * self.voxel_count());
        for &c in channels {
            self.check_channel(c)?;
            data.extend_from_slice(self.channel(c));
        }
        Ok(Self {
            dims: self.dims,
            spacing: self.spacing,
            channels: channels.len(),
            data,
        })
    }

    /// Converts every sample to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(dims: Dims, spacing: Spacing, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * voxel_count(dims));
        Self {
            dims,
            spacing,
            channels,
            data,
        }
    }
}

/// Dense integer labels over a voxel grid. Binary masks use labels {0, 1}
/// with any nonzero label counted as foreground.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(dims: Dims, labels: Vec<u32>) -> Result<Self> {
        check_dims(dims)?;
        if labels.len() != voxel_count(dims) {
            return Err(SvxError::Data(format!(
                "expected {} labels for {dims:?}, got {}",
                voxel_count(dims),
                labels.len()
            )));
        }
        Ok(Self {
            dims,
            spacing: [1.0; 3],
            labels,
        })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![0; voxel_count(dims)])
    }

    pub fn from_mask(dims: Dims, mask: &[bool]) -> Result<Self> {
        Self::new(dims, mask.iter().map(|&b| b as u32).collect())
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        check_spacing(spacing)?;
        self.spacing = spacing;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[linear_index(self.dims, x, y, z)]
    }

    pub fn max_label(&self) -> Option<u32> {
        self.labels.iter().copied().max()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Renumbers labels to `0..K` in order of first appearance (x-fastest
    /// scan). Returns the compacted map and `K`.
    pub fn compact(&self) -> (LabelMap, usize) {
        let mut remap = std::collections::HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            })
            .collect();
        (
            LabelMap {
                dims: self.dims,
                spacing: self.spacing,
                labels,
            },
            remap.len(),
        )
    }

    pub(crate) fn from_parts_unchecked(dims: Dims, spacing: Spacing, labels: Vec<u32>) -> Self {
        debug_assert_eq!(labels.len(), voxel_count(dims));
        Self { dims, spacing, labels }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let dims = [3, 4, 5];
        for i in 0..voxel_count(dims) {
            let [x, y, z] = coords(dims, i);
            assert_eq!(linear_index(dims, x, y, z), i);
        }
    }

    #[test]
    fn rejects_bad_volumes() {
        assert!(Volume::<f32>::new([2, 2, 1], [1.0; 3], 1, vec![0.0; 3]).is_err());
        assert!(Volume::<f32>::new([2, 2, 1], [1.0, 0.0, 1.0], 1, vec![0.0; 4]).is_err());
        assert!(matches!(
            Volume::<f32>::new([2, 2, 1], [1.0; 3], 1, vec![0.0, f32::NAN, 0.0, 0.0]),
            Err(SvxError::Data(_))
        ));
        assert!(Volume::<f32>::new([0, 2, 1], [1.0; 3], 1, vec![]).is_err());
    }

    #[test]
    fn channel_major_layout() {
        let v = Volume::<f64>::from_fn([2, 1, 1], 2, |c, x, _, _| (10 * c + x) as f64).unwrap();
        assert_eq!(v.data(), &[0.0, 1.0, 10.0, 11.0]);
        assert_eq!(v.channel(1), &[10.0, 11.0]);
        let s = v.select_channels(&[1]).unwrap();
        assert_eq!(s.data(), &[10.0, 11.0]);
        assert!(v.select_channels(&[2]).is_err());
    }

    #[test]
    fn compact_renumbers_by_first_appearance() {
        let m = LabelMap::new([4, 1, 1], vec![7, 3, 7, 9]).unwrap();
        let (c, k) = m.compact();
        assert_eq!(k, 3);
        assert_eq!(c.labels(), &[0, 1, 0, 2]);
    }
}
