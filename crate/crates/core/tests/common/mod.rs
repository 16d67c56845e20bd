//! Brute-force reference implementations and random inputs shared by the
//! integration tests. Each oracle recomputes its quantity directly from
//! voxels, without the sufficient-statistic or distance-transform shortcuts
//! used by the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svx_core::supervoxel::{slic, SlicParams, SupervoxelMap};
use svx_core::{LabelMap, Volume};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn idx(d: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + d[0] * (y + d[1] * z)
}

pub fn neighbours6(d: [usize; 3], x: usize, y: usize, z: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let p = [x as isize, y as isize, z as isize];
    for a in 0..3 {
        for s in [-1isize, 1] {
            let mut q = p;
            q[a] += s;
            if (0..3).all(|b| q[b] >= 0 && q[b] < d[b] as isize) {
                out.push([q[0] as usize, q[1] as usize, q[2] as usize]);
            }
        }
    }
    out
}

/// Smooth random volume: a few random sinusoids plus uniform noise.
pub fn random_volume(seed: u64, dims: [usize; 3], channels: usize) -> Volume<f64> {
    let mut r = rng(seed);
    let waves: Vec<[f64; 4]> = (0..channels * 3)
        .map(|_| [r.random::<f64>(), r.random::<f64>(), r.random::<f64>(), r.random::<f64>() * 6.0])
        .collect();
    let mut data = Vec::new();
    for c in 0..channels {
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let mut v = 0.0;
                    for w in &waves[c * 3..c * 3 + 3] {
                        v += ((x as f64 * w[0] + y as f64 * w[1] + z as f64 * w[2]) + w[3]).sin();
                    }
                    data.push(v + 0.3 * r.random::<f64>());
                }
            }
        }
    }
    Volume::new(dims, [1.0; 3], channels, data).unwrap()
}

pub fn random_dims(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> [usize; 3] {
    [0; 3].map(|_| r.random_range(lo..=hi))
}

/// SLIC partition of a random volume with a random segment count.
pub fn random_partition(seed: u64, v: &Volume<f64>) -> SupervoxelMap {
    let mut r = rng(seed ^ 0x5eed);
    let n = v.voxel_count();
    let k = r.random_range(4..=(n / 8).max(5));
    let p = SlicParams {
        n_segments: k,
        compactness: r.random_range(0.05..2.0),
        sigma: 0.5,
        channels: vec![0],
        ..Default::default()
    };
    slic(v, &p).unwrap()
}

pub fn random_mask(r: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> LabelMap {
    let n = dims.iter().product();
    let labels = (0..n).map(|_| (r.random::<f64>() < density) as u32).collect();
    LabelMap::new(dims, labels).unwrap()
}

/// Labels reachable from every voxel by 6-connected equal-label steps form
/// exactly one component per label.
pub fn labels_are_connected(m: &LabelMap) -> bool {
    let d = m.dims();
    let l = m.labels();
    let mut seen = vec![false; l.len()];
    let mut visited_labels = BTreeSet::new();
    for start in 0..l.len() {
        if seen[start] {
            continue;
        }
        if !visited_labels.insert(l[start]) {
            return false;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y, z) = (i % d[0], (i / d[0]) % d[1], i / (d[0] * d[1]));
            for q in neighbours6(d, x, y, z) {
                let j = idx(d, q[0], q[1], q[2]);
                if !seen[j] && l[j] == l[i] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    true
}

/// Gradient along one axis straight from the definition.
fn derivative(v: &Volume<f64>, c: usize, p: [usize; 3], axis: usize) -> f64 {
    let d = v.dims();
    let n = d[axis];
    if n < 2 {
        return 0.0;
    }
    let at = |k: usize| {
        let mut q = p;
        q[axis] = k;
        v.get(c, q[0], q[1], q[2])
    };
    let k = p[axis];
    if k == 0 {
        at(1) - at(0)
    } else if k == n - 1 {
        at(n - 1) - at(n - 2)
    } else {
        (at(k + 1) - at(k - 1)) / 2.0
    }
}

fn bin(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((x - lo) / (hi - lo) * bins as f64).floor() as isize;
    b.clamp(0, bins as isize - 1) as usize
}

/// Full 36-value block for one channel of one voxel set.
pub fn oracle_channel_features(v: &Volume<f64>, c: usize, voxels: &[[usize; 3]]) -> Vec<f64> {
    let d = v.dims();
    let all: Vec<f64> = v.channel(c).to_vec();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut grads = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let g = [0, 1, 2].map(|a| derivative(v, c, [x, y, z], a));
                grads.push(g);
            }
        }
    }
    let mag = |g: [f64; 3]| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let max_mag = grads.iter().map(|&g| mag(g)).fold(0.0, f64::max);

    let vals: Vec<f64> = voxels.iter().map(|p| v.get(c, p[0], p[1], p[2])).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = vals.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let skew = if var > 1e-12 { m3 / var.powf(1.5) } else { 0.0 };

    let mut out = vec![mean, var, skew];
    let mut hist = [0.0; 10];
    for &x in &vals {
        hist[bin(x, lo, hi, 10)] += 1.0 / n;
    }
    out.extend(hist);

    let set: BTreeSet<[usize; 3]> = voxels.iter().copied().collect();
    let mut glcm = [[0.0f64; 16]; 16];
    for p in voxels {
        for q in neighbours6(d, p[0], p[1], p[2]) {
            if set.contains(&q) {
                let i = bin(v.get(c, p[0], p[1], p[2]), lo, hi, 16);
                let j = bin(v.get(c, q[0], q[1], q[2]), lo, hi, 16);
                glcm[i][j] += 1.0;
            }
        }
    }
    let total: f64 = glcm.iter().flatten().sum();
    let (mut con, mut en, mut ent) = (0.0, 0.0, 0.0);
    if total == 0.0 {
        en = 1.0;
    } else {
        for i in 0..16 {
            for j in 0..16 {
                let pr = glcm[i][j] / total;
                if pr > 0.0 {
                    con += pr * (i as f64 - j as f64).powi(2);
                    en += pr * pr;
                    ent -= pr * pr.ln();
                }
            }
        }
    }
    out.extend([con, en, ent]);

    let mut orient = [0.0; 10];
    let mut mags = [0.0; 10];
    let mut wsum = 0.0;
    let mut msum = 0.0;
    for p in voxels {
        let g = grads[idx(d, p[0], p[1], p[2])];
        let m = mag(g);
        if m > 0.0 {
            let theta = (g[2] / m).clamp(-1.0, 1.0).acos();
            orient[bin(theta, 0.0, std::f64::consts::PI, 10)] += m;
            wsum += m;
            mags[bin(m, 0.0, max_mag, 10)] += 1.0;
            msum += 1.0;
        }
    }
    out.extend(orient.map(|w| if wsum > 0.0 { w / wsum } else { 0.1 }));
    out.extend(mags.iter().enumerate().map(|(b, &k)| {
        if msum > 0.0 {
            k / msum
        } else if b == 0 {
            1.0
        } else {
            0.0
        }
    }));
    out
}

pub fn voxels_of(sp: &SupervoxelMap, members: &BTreeSet<u32>) -> Vec<[usize; 3]> {
    let d = sp.dims();
    let mut out = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if members.contains(&sp.labels()[idx(d, x, y, z)]) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Shared faces between every ordered pair of distinct labels, and faces of
/// each label on a different label or the volume border.
pub fn oracle_rag(sp: &SupervoxelMap) -> (BTreeMap<(u32, u32), u64>, Vec<u64>) {
    let d = sp.dims();
    let l = sp.labels();
    let mut faces = BTreeMap::new();
    let mut boundary = vec![0u64; sp.count()];
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let a = l[idx(d, x, y, z)];
                let nb = neighbours6(d, x, y, z);
                boundary[a as usize] += (6 - nb.len()) as u64;
                for q in nb {
                    let b = l[idx(d, q[0], q[1], q[2])];
                    if a != b {
                        *faces.entry((a, b)).or_insert(0) += 1;
                        boundary[a as usize] += 1;
                    }
                }
            }
        }
    }
    (faces, boundary)
}

/// Neighbours of a member set found by scanning voxel pairs.
pub fn oracle_neighbours(sp: &SupervoxelMap, members: &BTreeSet<u32>) -> BTreeSet<u32> {
    let d = sp.dims();
    let l = sp.labels();
    let mut out = BTreeSet::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let a = l[idx(d, x, y, z)];
                if !members.contains(&a) {
                    continue;
                }
                for q in neighbours6(d, x, y, z) {
                    let b = l[idx(d, q[0], q[1], q[2])];
                    if !members.contains(&b) {
                        out.insert(b);
                    }
                }
            }
        }
    }
    out
}

pub fn oracle_shared_border(sp: &SupervoxelMap, members: &BTreeSet<u32>, cand: u32) -> u64 {
    let d = sp.dims();
    let l = sp.labels();
    let mut n = 0;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if l[idx(d, x, y, z)] != cand {
                    continue;
                }
                for q in neighbours6(d, x, y, z) {
                    if members.contains(&l[idx(d, q[0], q[1], q[2])]) {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

/// Ward merge cost as the increase in total within-cluster sum of squares,
/// computed from the explicit pooled cluster: every member of a cluster is
/// represented by the cluster's vector repeated `n` times.
pub fn oracle_ward(a: &[f64], n_a: u64, b: &[f64], n_b: u64) -> f64 {
    let n = (n_a + n_b) as f64;
    let pooled: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (n_a as f64 * x + n_b as f64 * y) / n)
        .collect();
    let ess = |v: &[f64], k: u64| -> f64 { k as f64 * v.iter().zip(&pooled).map(|(x, m)| (x - m).powi(2)).sum::<f64>() };
    ess(a, n_a) + ess(b, n_b)
}

pub fn oracle_overlap(a: &LabelMap, b: &LabelMap) -> (f64, f64) {
    let (mut i, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        na += (x != 0) as usize;
        nb += (y != 0) as usize;
        i += (x != 0 && y != 0) as usize;
    }
    let dsc = if na + nb == 0 { 1.0 } else { 2.0 * i as f64 / (na + nb) as f64 };
    let u = na + nb - i;
    let iou = if u == 0 { 1.0 } else { i as f64 / u as f64 };
    (dsc, iou)
}

fn oracle_surface(m: &LabelMap) -> Vec<[usize; 3]> {
    let d = m.dims();
    let mut out = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if m.get(x, y, z) == 0 {
                    continue;
                }
                let nb = neighbours6(d, x, y, z);
                if nb.len() < 6 || nb.iter().any(|q| m.get(q[0], q[1], q[2]) == 0) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn oracle_percentile95(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r = 0.95 * (v.len() - 1) as f64;
    let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
    v[lo] * (1.0 - (r - lo as f64)) + v[hi] * (r - lo as f64)
}

/// All-pairs surface distance HD95.
pub fn oracle_hd95(a: &LabelMap, b: &LabelMap, s: [f64; 3]) -> f64 {
    let (sa, sb) = (oracle_surface(a), oracle_surface(b));
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        (0..3)
                            .map(|k| ((p[k] as f64 - q[k] as f64) * s[k]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    oracle_percentile95(directed(&sa, &sb)).max(oracle_percentile95(directed(&sb, &sa)))
}
