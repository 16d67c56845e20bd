//! 3D SLIC supervoxels.
//!
//! Clustering runs on a subset of channels that is smoothed and then jointly
//! rescaled to [0, 1]. Centers start on a regular grid with step
//! `S = (N / K)^(1/3)` and move to the lowest-gradient voxel of their 3x3x3
//! neighbourhood. Each round assigns every voxel to the closest center whose
//! position lies within `S` of it on every axis, using
//! `D^2 = d_c^2 + (d_s / S)^2 m^2`, and then moves centers to the mean of
//! their members. Fragments are cleaned up by [`enforce_connectivity`].

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvxError};
use crate::scalar::Scalar;
use crate::volume::{coords, gaussian_smooth, linear_index, strides, voxel_count, Dims, LabelMap, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub n_segments: usize,
    pub compactness: f64,
    pub sigma: f64,
    pub max_iter: usize,
    pub min_size_factor: f64,
    pub channels: Vec<usize>,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            n_segments: 350,
            compactness: 0.01,
            sigma: 1.0,
            max_iter: 10,
            min_size_factor: 0.25,
            channels: vec![0],
        }
    }
}

impl SlicParams {
    pub fn with_channels(mut self, channels: &[usize]) -> Self {
        self.channels = channels.to_vec();
        self
    }

    pub fn validate<T: Scalar>(&self, v: &Volume<T>) -> Result<()> {
        if self.n_segments == 0 || self.n_segments > v.voxel_count() {
            return Err(SvxError::Param(format!(
                "n_segments must be in 1..={}, got {}",
                v.voxel_count(),
                self.n_segments
            )));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(SvxError::Param(format!("compactness must be > 0, got {}", self.compactness)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(SvxError::Param(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.min_size_factor.is_finite() && self.min_size_factor >= 0.0) {
            return Err(SvxError::Param("min_size_factor must be >= 0".into()));
        }
        if self.channels.is_empty() {
            return Err(SvxError::Param("at least one clustering channel is required".into()));
        }
        for &c in &self.channels {
            v.check_channel(c)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterCenter<T> {
    /// Mean rescaled intensity per clustering channel.
    pub intensity: Vec<T>,
    /// Voxel coordinates (x, y, z).
    pub position: [T; 3],
    pub members: usize,
}

/// A partition of the voxel grid into labels `0..count`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervoxelMap {
    labels: LabelMap,
    count: usize,
}

impl SupervoxelMap {
    /// Wraps a label map, compacting its labels to `0..K`.
    pub fn from_labels(map: &LabelMap) -> Self {
        let (labels, count) = map.compact();
        Self { labels, count }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dims(&self) -> Dims {
        self.labels.dims()
    }

    pub fn labels(&self) -> &[u32] {
        self.labels.labels()
    }

    pub fn as_label_map(&self) -> &LabelMap {
        &self.labels
    }

    pub fn into_label_map(self) -> LabelMap {
        self.labels
    }

    /// Voxel count of every supervoxel.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in self.labels() {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Grid step `S = (N / K)^(1/3)`.
pub fn grid_step(dims: Dims, n_segments: usize) -> f64 {
    (voxel_count(dims) as f64 / n_segments as f64).cbrt()
}

/// The `K` seed-grid nodes before gradient perturbation, in voxel
/// coordinates. Per-axis counts start at `round(dim / S)` and grow along the
/// coarsest axis until the grid holds at least `K` nodes; surplus nodes
/// furthest from the volume center are dropped.
pub fn grid_nodes(dims: Dims, n_segments: usize) -> Result<Vec<[f64; 3]>> {
    if n_segments == 0 || n_segments > voxel_count(dims) {
        return Err(SvxError::Param(format!(
            "n_segments must be in 1..={}, got {n_segments}",
            voxel_count(dims)
        )));
    }
    let s = grid_step(dims, n_segments);
    let mut counts = [0usize; 3];
    for a in 0..3 {
        counts[a] = ((dims[a] as f64 / s).round() as usize).clamp(1, dims[a]);
    }
    while counts.iter().product::<usize>() < n_segments {
        let axis = (0..3)
            .filter(|&a| counts[a] < dims[a])
            .max_by(|&a, &b| {
                let ra = dims[a] as f64 / counts[a] as f64;
                let rb = dims[b] as f64 / counts[b] as f64;
                ra.partial_cmp(&rb).unwrap().then(b.cmp(&a))
            })
            .expect("some axis can still grow while nodes < voxels");
        counts[axis] += 1;
    }
    let axis_nodes = |a: usize| -> Vec<f64> {
        let step = dims[a] as f64 / counts[a] as f64;
        (0..counts[a]).map(|i| step * (i as f64 + 0.5) - 0.5).collect()
    };
    let (xs, ys, zs) = (axis_nodes(0), axis_nodes(1), axis_nodes(2));
    let center = [
        (dims[0] as f64 - 1.0) / 2.0,
        (dims[1] as f64 - 1.0) / 2.0,
        (dims[2] as f64 - 1.0) / 2.0,
    ];
    let mut nodes = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                nodes.push([x, y, z]);
            }
        }
    }
    if nodes.len() > n_segments {
        let dist = |p: &[f64; 3]| (0..3).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>();
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| dist(&nodes[a]).partial_cmp(&dist(&nodes[b])).unwrap().then(a.cmp(&b)));
        order.truncate(n_segments);
        order.sort_unstable();
        nodes = order.into_iter().map(|i| nodes[i]).collect();
    }
    Ok(nodes)
}

/// Clustering channels after smoothing and joint rescaling to [0, 1].
struct Prepared<T> {
    dims: Dims,
    channels: Vec<Vec<T>>,
}

fn prepare<T: Scalar>(v: &Volume<T>, p: &SlicParams) -> Result<Prepared<T>> {
    let selected = v.select_channels(&p.channels)?;
    let smooth = gaussian_smooth(&selected, p.sigma)?;
    let (lo, hi) = smooth
        .data()
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    let channels = (0..smooth.channels())
        .map(|c| {
            smooth
                .channel(c)
                .iter()
                .map(|&x| if range > T::zero() { (x - lo) / range } else { T::zero() })
                .collect()
        })
        .collect();
    Ok(Prepared {
        dims: v.dims(),
        channels,
    })
}

/// Squared gradient magnitude summed over channels (central differences).
fn gradient_energy<T: Scalar>(img: &Prepared<T>, i: usize) -> T {
    let [x, y, z] = coords(img.dims, i);
    let st = strides(img.dims);
    let pos = [x, y, z];
    let mut total = T::zero();
    for ch in &img.channels {
        for a in 0..3 {
            let lo = if pos[a] > 0 { i - st[a] } else { i };
            let hi = if pos[a] + 1 < img.dims[a] { i + st[a] } else { i };
            let d = ch[hi] - ch[lo];
            total += d * d;
        }
    }
    total
}

fn seed_centers<T: Scalar>(img: &Prepared<T>, n_segments: usize) -> Result<Vec<ClusterCenter<T>>> {
    let dims = img.dims;
    let nodes = grid_nodes(dims, n_segments)?;
    let home = |c: f64, n: usize| ((c + 0.5).floor() as usize).min(n - 1);
    Ok(nodes
        .into_iter()
        .map(|node| {
            let h = [home(node[0], dims[0]), home(node[1], dims[1]), home(node[2], dims[2])];
            let hi = linear_index(dims, h[0], h[1], h[2]);
            let mut best = (gradient_energy(img, hi), hi);
            let home_energy = best.0;
            let lo = |a: usize| h[a].saturating_sub(1);
            let up = |a: usize| (h[a] + 1).min(dims[a] - 1);
            for z in lo(2)..=up(2) {
                for y in lo(1)..=up(1) {
                    for x in lo(0)..=up(0) {
                        let i = linear_index(dims, x, y, z);
                        let g = gradient_energy(img, i);
                        if g < best.0 {
                            best = (g, i);
                        }
                    }
                }
            }
            let (position, idx) = if best.0 < home_energy {
                let [x, y, z] = coords(dims, best.1);
                ([T::of(x as f64), T::of(y as f64), T::of(z as f64)], best.1)
            } else {
                ([T::of(node[0]), T::of(node[1]), T::of(node[2])], hi)
            };
            ClusterCenter {
                intensity: img.channels.iter().map(|ch| ch[idx]).collect(),
                position,
                members: 0,
            }
        })
        .collect())
}

/// Seed centers for `v` under `p`. Intensities are in the smoothed,
/// rescaled space the clustering runs in.
pub fn init_cluster_centers<T: Scalar>(v: &Volume<T>, p: &SlicParams) -> Result<Vec<ClusterCenter<T>>> {
    p.validate(v)?;
    let img = prepare(v, p)?;
    seed_centers(&img, p.n_segments)
}

/// Uniform bucket grid over center positions for window queries.
struct CenterIndex {
    cell: f64,
    shape: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl CenterIndex {
    fn build<T: Scalar>(centers: &[ClusterCenter<T>], dims: Dims, cell: f64) -> Self {
        let shape = [0, 1, 2].map(|a| (dims[a] as f64 / cell).ceil().max(1.0) as usize);
        let mut buckets = vec![Vec::new(); shape[0] * shape[1] * shape[2]];
        for (k, c) in centers.iter().enumerate() {
            let b = [0, 1, 2].map(|a| ((c.position[a].f64() / cell).floor().max(0.0) as usize).min(shape[a] - 1));
            buckets[b[0] + shape[0] * (b[1] + shape[1] * b[2])].push(k as u32);
        }
        Self { cell, shape, buckets }
    }

    fn for_each_near(&self, p: [f64; 3], radius: f64, mut f: impl FnMut(u32)) {
        let range = |a: usize| {
            let lo = ((p[a] - radius) / self.cell).floor().max(0.0) as usize;
            let hi = (((p[a] + radius) / self.cell).floor().max(0.0) as usize).min(self.shape[a] - 1);
            lo..=hi
        };
        for bz in range(2) {
            for by in range(1) {
                for bx in range(0) {
                    for &k in &self.buckets[bx + self.shape[0] * (by + self.shape[1] * bz)] {
                        f(k);
                    }
                }
            }
        }
    }
}

const UNASSIGNED: u32 = u32::MAX;

#[inline]
fn distance2<T: Scalar>(img: &Prepared<T>, i: usize, pos: [T; 3], c: &ClusterCenter<T>, spatial_w2: T) -> T {
    let mut dc = T::zero();
    for (ch, &mu) in img.channels.iter().zip(&c.intensity) {
        let d = ch[i] - mu;
        dc += d * d;
    }
    let mut ds = T::zero();
    for a in 0..3 {
        let d = pos[a] - c.position[a];
        ds += d * d;
    }
    dc + ds * spatial_w2
}

fn assign<T: Scalar>(img: &Prepared<T>, centers: &[ClusterCenter<T>], step: f64, compactness: f64, labels: &mut [u32]) {
    let dims = img.dims;
    let index = CenterIndex::build(centers, dims, step.max(1.0));
    let spatial_w2 = T::of((compactness / step).powi(2));
    let window = T::of(step);
    let slab = dims[0] * dims[1];
    labels.par_chunks_mut(slab).enumerate().for_each(|(z, out)| {
        for (j, label) in out.iter_mut().enumerate() {
            let i = z * slab + j;
            let pos_f = [(j % dims[0]) as f64, (j / dims[0]) as f64, z as f64];
            let pos = pos_f.map(T::of);
            let mut best: Option<(T, u32)> = None;
            index.for_each_near(pos_f, step, |k| {
                let c = &centers[k as usize];
                if (0..3).any(|a| (c.position[a] - pos[a]).abs() > window) {
                    return;
                }
                let d = distance2(img, i, pos, c, spatial_w2);
                if best.is_none_or(|(bd, bk)| d < bd || (d == bd && k < bk)) {
                    best = Some((d, k));
                }
            });
            match best {
                Some((_, k)) => *label = k,
                None if *label == UNASSIGNED => {
                    // Outside every window on the first round: nearest center overall.
                    let mut best = (T::infinity(), 0u32);
                    for (k, c) in centers.iter().enumerate() {
                        let d = distance2(img, i, pos, c, spatial_w2);
                        if d < best.0 {
                            best = (d, k as u32);
                        }
                    }
                    *label = best.1;
                }
                None => {}
            }
        }
    });
}

fn update<T: Scalar>(img: &Prepared<T>, centers: &mut [ClusterCenter<T>], labels: &[u32]) {
    let nch = img.channels.len();
    let width = 3 + nch;
    let mut sums = vec![0.0f64; centers.len() * width];
    let mut counts = vec![0usize; centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        let k = l as usize;
        let [x, y, z] = coords(img.dims, i);
        let row = &mut sums[k * width..(k + 1) * width];
        row[0] += x as f64;
        row[1] += y as f64;
        row[2] += z as f64;
        for (c, ch) in img.channels.iter().enumerate() {
            row[3 + c] += ch[i].f64();
        }
        counts[k] += 1;
    }
    for (k, center) in centers.iter_mut().enumerate() {
        center.members = counts[k];
        if counts[k] == 0 {
            continue;
        }
        let n = counts[k] as f64;
        let row = &sums[k * width..(k + 1) * width];
        center.position = [T::of(row[0] / n), T::of(row[1] / n), T::of(row[2] / n)];
        for c in 0..nch {
            center.intensity[c] = T::of(row[3 + c] / n);
        }
    }
}

/// Runs SLIC and returns a connected, compacted supervoxel map.
pub fn slic<T: Scalar>(v: &Volume<T>, p: &SlicParams) -> Result<SupervoxelMap> {
    p.validate(v)?;
    let img = prepare(v, p)?;
    let step = grid_step(v.dims(), p.n_segments);
    let mut centers = seed_centers(&img, p.n_segments)?;
    let mut labels = vec![UNASSIGNED; v.voxel_count()];
    for _ in 0..p.max_iter.max(1) {
        assign(&img, &centers, step, p.compactness, &mut labels);
        update(&img, &mut centers, &labels);
    }
    let raw = LabelMap::from_parts_unchecked(v.dims(), v.spacing(), labels);
    let mean_size = v.voxel_count() as f64 / p.n_segments as f64;
    let min_size = (p.min_size_factor * mean_size).round() as usize;
    Ok(enforce_connectivity(&raw, min_size))
}

/// 6-connected components of equal-label voxels, numbered in scan order.
pub fn connected_components(map: &LabelMap) -> (Vec<u32>, usize) {
    let dims = map.dims();
    let labels = map.labels();
    let st = strides(dims);
    let mut comp = vec![u32::MAX; labels.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..labels.len() {
        if comp[seed] != u32::MAX {
            continue;
        }
        comp[seed] = next;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let pos = coords(dims, i);
            for a in 0..3 {
                if pos[a] > 0 {
                    let j = i - st[a];
                    if comp[j] == u32::MAX && labels[j] == labels[i] {
                        comp[j] = next;
                        queue.push_back(j);
                    }
                }
                if pos[a] + 1 < dims[a] {
                    let j = i + st[a];
                    if comp[j] == u32::MAX && labels[j] == labels[i] {
                        comp[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        next += 1;
    }
    (comp, next as usize)
}

/// Splits every label into its 6-connected components, absorbs components
/// smaller than `min_size` into the neighbouring component sharing the most
/// faces (ties to the lowest component id), and compacts the result.
pub fn enforce_connectivity(map: &LabelMap, min_size: usize) -> SupervoxelMap {
    let dims = map.dims();
    let (comp, n) = connected_components(map);
    let mut size = vec![0usize; n];
    for &c in &comp {
        size[c as usize] += 1;
    }
    let mut adj: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); n];
    let st = strides(dims);
    for (i, &ci) in comp.iter().enumerate() {
        let pos = coords(dims, i);
        for a in 0..3 {
            if pos[a] + 1 < dims[a] {
                let cj = comp[i + st[a]];
                if cj != ci {
                    *adj[ci as usize].entry(cj).or_default() += 1;
                    *adj[cj as usize].entry(ci).or_default() += 1;
                }
            }
        }
    }
    let mut parent: Vec<u32> = (0..n as u32).collect();
    loop {
        let mut changed = false;
        for c in 0..n {
            if parent[c] != c as u32 || size[c] >= min_size || adj[c].is_empty() {
                continue;
            }
            let (&target, _) = adj[c]
                .iter()
                .max_by(|(ka, fa), (kb, fb)| fa.cmp(fb).then(kb.cmp(ka)))
                .expect("non-empty adjacency");
            let absorbed = std::mem::take(&mut adj[c]);
            let t = target as usize;
            size[t] += size[c];
            parent[c] = target;
            adj[t].remove(&(c as u32));
            for (nb, faces) in absorbed {
                if nb == target {
                    continue;
                }
                let nbm = &mut adj[nb as usize];
                nbm.remove(&(c as u32));
                *nbm.entry(target).or_default() += faces;
                *adj[t].entry(nb).or_default() += faces;
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let find = |mut c: u32| {
        while parent[c as usize] != c {
            c = parent[c as usize];
        }
        c
    };
    let roots: Vec<u32> = (0..n as u32).map(find).collect();
    let merged = comp.iter().map(|&c| roots[c as usize]).collect();
    SupervoxelMap::from_labels(&LabelMap::from_parts_unchecked(dims, map.spacing(), merged))
}

/// Fraction of true edge voxels (voxels with a 6-neighbour of a different
/// truth label) lying within Euclidean distance `tolerance` of a supervoxel
/// boundary voxel.
pub fn boundary_recall(truth: &LabelMap, sp: &LabelMap, tolerance: f64) -> f64 {
    let dims = truth.dims();
    let edge = |labels: &[u32]| -> Vec<bool> {
        let st = strides(dims);
        (0..labels.len())
            .map(|i| {
                let pos = coords(dims, i);
                (0..3).any(|a| {
                    (pos[a] > 0 && labels[i - st[a]] != labels[i])
                        || (pos[a] + 1 < dims[a] && labels[i + st[a]] != labels[i])
                })
            })
            .collect()
    };
    let truth_edge = edge(truth.labels());
    let sp_edge = edge(sp.labels());
    let r = tolerance.floor() as isize;
    let mut offsets = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if ((dx * dx + dy * dy + dz * dz) as f64) <= tolerance * tolerance {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let mut total = 0usize;
    let mut hit = 0usize;
    for (i, &e) in truth_edge.iter().enumerate() {
        if !e {
            continue;
        }
        total += 1;
        let p = coords(dims, i);
        let found = offsets.iter().any(|o| {
            let q = [0, 1, 2].map(|a| p[a] as isize + o[a]);
            (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as isize)
                && sp_edge[linear_index(dims, q[0] as usize, q[1] as usize, q[2] as usize)]
        });
        if found {
            hit += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}
