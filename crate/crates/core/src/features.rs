//! Per-supervoxel feature vectors.
//!
//! Every clustering channel contributes 36 values, laid out as in
//! [`layout`]: mean, variance, skewness, a 10-bin intensity histogram, GLCM
//! contrast/energy/entropy, a 10-bin magnitude-weighted histogram of the
//! gradient's polar angle, and a 10-bin gradient-magnitude histogram.
//!
//! Regions keep sufficient statistics ([`RegionStats`]) so that a growing
//! region can absorb supervoxels without revisiting voxels. Moments are held
//! as mean plus central sums and combined with the pairwise update of Chan et
//! al., which avoids the cancellation of raw power sums. Moments and
//! histograms merge exactly; the three GLCM features merge as voxel-weighted
//! averages.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Result, SvxError};
use crate::scalar::Scalar;
use crate::supervoxel::SupervoxelMap;
use crate::volume::{coords, gradient_field, strides, Volume};

pub const BINS: usize = 10;
pub const GLCM_LEVELS: usize = 16;
pub const FEATURES_PER_CHANNEL: usize = 36;

/// Offsets of each feature inside one channel's 36-value block.
pub mod layout {
    use std::ops::Range;

    pub const MEAN: usize = 0;
    pub const VARIANCE: usize = 1;
    pub const SKEWNESS: usize = 2;
    pub const INTENSITY_HIST: Range<usize> = 3..13;
    pub const CONTRAST: usize = 13;
    pub const ENERGY: usize = 14;
    pub const ENTROPY: usize = 15;
    pub const ORIENTATION_HIST: Range<usize> = 16..26;
    pub const MAGNITUDE_HIST: Range<usize> = 26..36;
}

/// Volume-wide ranges that fix histogram bin edges for one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelContext {
    pub channel: usize,
    pub min: f64,
    pub max: f64,
    pub max_magnitude: f64,
    /// `max == min`: every voxel falls in bin 0.
    pub degenerate: bool,
}

impl ChannelContext {
    #[inline]
    pub fn intensity_bin(&self, x: f64, bins: usize) -> usize {
        if self.degenerate {
            return 0;
        }
        (((x - self.min) / (self.max - self.min) * bins as f64).floor() as usize).min(bins - 1)
    }

    #[inline]
    pub fn magnitude_bin(&self, m: f64) -> usize {
        ((m / self.max_magnitude * BINS as f64).floor() as usize).min(BINS - 1)
    }
}

#[inline]
pub fn orientation_bin(gz: f64, magnitude: f64) -> usize {
    let theta = (gz / magnitude).clamp(-1.0, 1.0).acos();
    ((theta / std::f64::consts::PI * BINS as f64).floor() as usize).min(BINS - 1)
}

/// Raw per-channel accumulators.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChannelStats {
    pub mean: f64,
    /// Σ (x - mean)^2 and Σ (x - mean)^3.
    pub m2: f64,
    pub m3: f64,
    pub intensity_hist: [u64; BINS],
    pub orientation_weight: [f64; BINS],
    pub magnitude_hist: [u64; BINS],
    /// Σ n·contrast, Σ n·energy, Σ n·entropy over merged supervoxels.
    pub glcm_weighted: [f64; 3],
}

impl ChannelStats {
    /// Merges `other` (`n_b` voxels) into `self` (`n_a` voxels).
    fn absorb(&mut self, n_a: u64, other: &ChannelStats, n_b: u64) {
        let (na, nb) = (n_a as f64, n_b as f64);
        let n = na + nb;
        if n > 0.0 {
            let d = other.mean - self.mean;
            self.m3 += other.m3
                + d * d * d * na * nb * (na - nb) / (n * n)
                + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
            self.m2 += other.m2 + d * d * na * nb / n;
            self.mean += d * nb / n;
        }
        for k in 0..3 {
            self.glcm_weighted[k] += other.glcm_weighted[k];
        }
        for b in 0..BINS {
            self.intensity_hist[b] += other.intensity_hist[b];
            self.orientation_weight[b] += other.orientation_weight[b];
            self.magnitude_hist[b] += other.magnitude_hist[b];
        }
    }

    fn write_features(&self, n: u64, out: &mut [f64]) {
        let nf = n as f64;
        let mut var = self.m2 / nf;
        // Rounding residue of a constant region.
        if var <= 1e-24 * self.mean * self.mean {
            var = 0.0;
        }
        let m3 = self.m3 / nf;
        out[layout::MEAN] = self.mean;
        out[layout::VARIANCE] = var;
        out[layout::SKEWNESS] = if var > 0.0 { m3 / var.powf(1.5) } else { 0.0 };
        for b in 0..BINS {
            out[layout::INTENSITY_HIST.start + b] = self.intensity_hist[b] as f64 / nf;
        }
        out[layout::CONTRAST] = self.glcm_weighted[0] / nf;
        out[layout::ENERGY] = self.glcm_weighted[1] / nf;
        out[layout::ENTROPY] = self.glcm_weighted[2] / nf;
        let w: f64 = self.orientation_weight.iter().sum();
        for b in 0..BINS {
            out[layout::ORIENTATION_HIST.start + b] = if w > 0.0 {
                self.orientation_weight[b] / w
            } else {
                1.0 / BINS as f64
            };
        }
        let m: u64 = self.magnitude_hist.iter().sum();
        for b in 0..BINS {
            out[layout::MAGNITUDE_HIST.start + b] = if m > 0 {
                self.magnitude_hist[b] as f64 / m as f64
            } else if b == 0 {
                1.0
            } else {
                0.0
            };
        }
    }
}

/// Aggregate statistics of a set of supervoxels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RegionStats {
    members: BTreeSet<u32>,
    voxels: u64,
    channels: Vec<ChannelStats>,
}

impl RegionStats {
    pub fn empty(channels: usize) -> Self {
        Self {
            members: BTreeSet::new(),
            voxels: 0,
            channels: vec![ChannelStats::default(); channels],
        }
    }

    pub fn members(&self) -> &BTreeSet<u32> {
        &self.members
    }

    pub fn contains(&self, sv: u32) -> bool {
        self.members.contains(&sv)
    }

    pub fn voxel_count(&self) -> u64 {
        self.voxels
    }

    pub fn channel_stats(&self) -> &[ChannelStats] {
        &self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.voxels == 0
    }

    /// Adds another region's statistics. Fails if the two share a member.
    pub fn absorb(&mut self, other: &RegionStats) -> Result<()> {
        if let Some(dup) = other.members.iter().find(|m| self.members.contains(m)) {
            return Err(SvxError::State(format!("supervoxel {dup} is already part of the region")));
        }
        if self.channels.len() != other.channels.len() {
            return Err(SvxError::State("channel count mismatch".into()));
        }
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            a.absorb(self.voxels, b, other.voxels);
        }
        self.members.extend(other.members.iter().copied());
        self.voxels += other.voxels;
        Ok(())
    }

    /// Feature vector of the region; `None` when the region is empty.
    pub fn feature_vector(&self) -> Option<Vec<f64>> {
        if self.voxels == 0 {
            return None;
        }
        let mut out = vec![0.0; FEATURES_PER_CHANNEL * self.channels.len()];
        for (c, stats) in self.channels.iter().enumerate() {
            stats.write_features(self.voxels, &mut out[c * FEATURES_PER_CHANNEL..(c + 1) * FEATURES_PER_CHANNEL]);
        }
        Some(out)
    }
}

/// Per-dimension z-scoring across supervoxels.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// False for dimensions with no spread; those are left out of distances.
    pub active: Vec<bool>,
}

impl Normalization {
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        let dims = vectors.first().map_or(0, Vec::len);
        let n = vectors.len().max(1) as f64;
        let mut mean = vec![0.0; dims];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; dims];
        for v in vectors {
            for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        let active = std.iter().map(|&s| s > 1e-12).collect();
        Self { mean, std, active }
    }

    /// z-scores of the active dimensions, in dimension order.
    pub fn normalize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .enumerate()
            .filter(|(j, _)| self.active[*j])
            .map(|(j, x)| (x - self.mean[j]) / self.std[j])
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Features of every supervoxel plus what is needed to merge them.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    context: Vec<ChannelContext>,
    stats: Vec<RegionStats>,
    vectors: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
    normalization: Normalization,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.context.iter().map(|c| c.channel).collect()
    }

    pub fn context(&self) -> &[ChannelContext] {
        &self.context
    }

    pub fn vector(&self, sv: u32) -> &[f64] {
        &self.vectors[sv as usize]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// z-scored active dimensions of a supervoxel's vector.
    pub fn normalized(&self, sv: u32) -> &[f64] {
        &self.normalized[sv as usize]
    }

    pub fn voxel_count(&self, sv: u32) -> u64 {
        self.stats[sv as usize].voxels
    }

    pub fn stats(&self, sv: u32) -> &RegionStats {
        &self.stats[sv as usize]
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn region_vector(&self, region: &RegionStats) -> Option<Vec<f64>> {
        region.feature_vector()
    }

    /// A region aggregate with no members.
    pub fn empty_region(&self) -> RegionStats {
        RegionStats::empty(self.context.len())
    }
}

fn glcm_features(counts: &[u64]) -> [f64; 3] {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        // No in-region voxel pairs: treated as a single gray level.
        return [0.0, 1.0, 0.0];
    }
    let t = total as f64;
    let (mut contrast, mut energy, mut entropy) = (0.0, 0.0, 0.0);
    for i in 0..GLCM_LEVELS {
        for j in 0..GLCM_LEVELS {
            let c = counts[i * GLCM_LEVELS + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 / t;
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            energy += p * p;
            entropy -= p * p.ln();
        }
    }
    [contrast, energy, entropy]
}

fn channel_stats<T: Scalar>(v: &Volume<T>, sp: &SupervoxelMap, channel: usize) -> Result<(ChannelContext, Vec<ChannelStats>)> {
    let data: Vec<f64> = v.channel(channel).iter().map(|x| x.f64()).collect();
    let grad = gradient_field(v, channel)?;
    let (min, max) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let magnitude: Vec<f64> = (0..grad.len()).map(|i| grad.magnitude_at(i).f64()).collect();
    let max_magnitude = magnitude.iter().copied().fold(0.0, f64::max);
    let ctx = ChannelContext {
        channel,
        min,
        max,
        max_magnitude,
        degenerate: max <= min,
    };

    let k = sp.count();
    let labels = sp.labels();
    let sizes = sp.sizes();
    let mut stats = vec![ChannelStats::default(); k];
    for (i, &l) in labels.iter().enumerate() {
        stats[l as usize].mean += data[i];
    }
    for (s, &n) in stats.iter_mut().zip(&sizes) {
        s.mean /= n.max(1) as f64;
    }
    for (i, &l) in labels.iter().enumerate() {
        let s = &mut stats[l as usize];
        let d = data[i] - s.mean;
        s.m2 += d * d;
        s.m3 += d * d * d;
        s.intensity_hist[ctx.intensity_bin(data[i], BINS)] += 1;
        let m = magnitude[i];
        if m > 0.0 {
            s.magnitude_hist[ctx.magnitude_bin(m)] += 1;
            s.orientation_weight[orientation_bin(grad.gz[i].f64(), m)] += m;
        }
    }

    let levels: Vec<usize> = data.iter().map(|&x| ctx.intensity_bin(x, GLCM_LEVELS)).collect();
    let mut glcm = vec![0u64; k * GLCM_LEVELS * GLCM_LEVELS];
    let dims = sp.dims();
    let st = strides(dims);
    for (i, &l) in labels.iter().enumerate() {
        let pos = coords(dims, i);
        for a in 0..3 {
            if pos[a] + 1 < dims[a] && labels[i + st[a]] == l {
                let (p, q) = (levels[i], levels[i + st[a]]);
                let base = l as usize * GLCM_LEVELS * GLCM_LEVELS;
                glcm[base + p * GLCM_LEVELS + q] += 1;
                glcm[base + q * GLCM_LEVELS + p] += 1;
            }
        }
    }
    for (sv, s) in stats.iter_mut().enumerate() {
        let size = sizes[sv];
        if size == 0 {
            return Err(SvxError::Internal(format!("supervoxel {sv} has no voxels")));
        }
        let block = &glcm[sv * GLCM_LEVELS * GLCM_LEVELS..(sv + 1) * GLCM_LEVELS * GLCM_LEVELS];
        let f = glcm_features(block);
        for j in 0..3 {
            s.glcm_weighted[j] = f[j] * size as f64;
        }
    }
    Ok((ctx, stats))
}

/// Computes the feature table of `sp` over the listed channels of `v`.
pub fn extract_features<T: Scalar>(v: &Volume<T>, sp: &SupervoxelMap, channels: &[usize]) -> Result<FeatureTable> {
    if sp.dims() != v.dims() {
        return Err(SvxError::Param(format!(
            "supervoxel map {:?} does not match volume {:?}",
            sp.dims(),
            v.dims()
        )));
    }
    if channels.is_empty() {
        return Err(SvxError::Param("feature channel list is empty".into()));
    }
    for &c in channels {
        v.check_channel(c)?;
    }
    let per_channel: Vec<(ChannelContext, Vec<ChannelStats>)> = channels
        .par_iter()
        .map(|&c| channel_stats(v, sp, c))
        .collect::<Result<_>>()?;
    let sizes = sp.sizes();
    let context: Vec<ChannelContext> = per_channel.iter().map(|(c, _)| c.clone()).collect();
    let stats: Vec<RegionStats> = (0..sp.count())
        .map(|sv| RegionStats {
            members: BTreeSet::from([sv as u32]),
            voxels: sizes[sv] as u64,
            channels: per_channel.iter().map(|(_, s)| s[sv].clone()).collect(),
        })
        .collect();
    let vectors: Vec<Vec<f64>> = stats
        .iter()
        .map(|s| s.feature_vector().expect("supervoxels are non-empty"))
        .collect();
    let normalization = Normalization::fit(&vectors);
    let normalized = vectors.iter().map(|v| normalization.normalize(v)).collect();
    Ok(FeatureTable {
        context,
        stats,
        vectors,
        normalized,
        normalization,
    })
}

/// Returns `region` with supervoxel `sv` added.
pub fn merge_features(table: &FeatureTable, region: &RegionStats, sv: u32) -> Result<RegionStats> {
    if sv as usize >= table.len() {
        return Err(SvxError::Param(format!("supervoxel {sv} out of range")));
    }
    let mut out = region.clone();
    out.absorb(table.stats(sv))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::LabelMap;

    fn table_for(values: Vec<f64>, dims: [usize; 3], labels: Vec<u32>) -> FeatureTable {
        let v = Volume::new(dims, [1.0; 3], 1, values).unwrap();
        let sp = SupervoxelMap::from_labels(&LabelMap::new(dims, labels).unwrap());
        extract_features(&v, &sp, &[0]).unwrap()
    }

    #[test]
    fn constant_region() {
        // Supervoxel 0 is constant 0.3; supervoxel 1 spans the range.
        let t = table_for(vec![0.3, 0.3, 0.3, 0.0, 1.0, 0.5], [6, 1, 1], vec![0, 0, 0, 1, 1, 1]);
        let f = t.vector(0);
        assert!((f[layout::MEAN] - 0.3).abs() < 1e-12);
        assert_eq!(f[layout::VARIANCE], 0.0);
        assert_eq!(f[layout::SKEWNESS], 0.0);
        assert_eq!(f[layout::INTENSITY_HIST.start + 3], 1.0);
        assert_eq!(f[layout::ENERGY], 1.0);
        assert_eq!(f[layout::CONTRAST], 0.0);
        assert_eq!(f[layout::ENTROPY], 0.0);
    }

    #[test]
    fn two_voxel_region() {
        let t = table_for(vec![0.0, 1.0], [2, 1, 1], vec![0, 0]);
        let f = t.vector(0);
        assert_eq!(f[layout::MEAN], 0.5);
        assert_eq!(f[layout::VARIANCE], 0.25);
        assert_eq!(f[layout::INTENSITY_HIST.start], 0.5);
        assert_eq!(f[layout::INTENSITY_HIST.end - 1], 0.5);
    }

    #[test]
    fn histograms_are_normalised() {
        let values: Vec<f64> = (0..27).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
        let labels: Vec<u32> = (0..27).map(|i| (i % 3) as u32).collect();
        let t = table_for(values, [3, 3, 3], labels);
        for sv in 0..t.len() as u32 {
            let f = t.vector(sv);
            for r in [layout::INTENSITY_HIST, layout::ORIENTATION_HIST, layout::MAGNITUDE_HIST] {
                let s: f64 = f[r].iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
            assert!(f[layout::ENERGY] > 0.0 && f[layout::ENERGY] <= 1.0);
        }
    }

    #[test]
    fn degenerate_range_goes_to_bin_zero() {
        let t = table_for(vec![2.0; 8], [2, 2, 2], vec![0; 8]);
        assert!(t.context()[0].degenerate);
        let f = t.vector(0);
        assert_eq!(f[layout::INTENSITY_HIST.start], 1.0);
        assert_eq!(f[layout::MAGNITUDE_HIST.start], 1.0);
    }

    #[test]
    fn merge_identity_and_pooled_moments() {
        let t = table_for(vec![0.2, 0.2, 0.8, 0.8], [4, 1, 1], vec![0, 0, 1, 1]);
        let one = merge_features(&t, &t.empty_region(), 0).unwrap();
        assert_eq!(t.region_vector(&one).unwrap(), t.vector(0));
        let both = merge_features(&t, &one, 1).unwrap();
        let f = t.region_vector(&both).unwrap();
        assert!((f[layout::MEAN] - 0.5).abs() < 1e-12);
        assert!((f[layout::VARIANCE] - 0.09).abs() < 1e-12);
        assert!(matches!(merge_features(&t, &both, 1), Err(SvxError::State(_))));
    }

    #[test]
    fn dims_mismatch_rejected() {
        let v = Volume::<f32>::filled([2, 2, 2], 1, 0.0).unwrap();
        let sp = SupervoxelMap::from_labels(&LabelMap::zeros([2, 2, 1]).unwrap());
        assert!(matches!(extract_features(&v, &sp, &[0]), Err(SvxError::Param(_))));
    }
}
