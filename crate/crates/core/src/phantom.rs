//! Synthetic four-channel tumour phantoms and seed-mask corruption.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64(seed)`, using a separate stream per purpose: stream 0 for
//! geometry, 1 for the bias-field phases, 2 for voxel noise, 3 for seed
//! corruption. Uniform draws are `rng.random::<f64>()` in [0, 1). Gaussian
//! noise uses the cosine branch of Box-Muller on two uniforms,
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, drawn channel by channel in voxel
//! order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvxError};
use crate::scalar::Scalar;
use crate::supervoxel::connected_components;
use crate::volume::{coords, linear_index, strides, Dims, LabelMap, Volume};

const GEOMETRY_STREAM: u64 = 0;
const BIAS_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const CORRUPT_STREAM: u64 = 3;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random();
    let u2: f64 = r.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub dims: Dims,
    pub seed: u64,
    /// Ellipsoids whose union forms the whole tumour.
    pub wt_blobs: usize,
    pub background: f64,
    /// Per channel: intensity offset of the tumour outside the core, and
    /// inside the core. Channel order is T1, T1Gd, T2, FLAIR.
    pub contrast: [[f64; 2]; 4],
    pub noise_sigma: f64,
    pub bias_amplitude: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            seed: 0,
            wt_blobs: 3,
            background: 0.2,
            contrast: [[-0.05, -0.1], [0.05, 0.5], [0.3, 0.5], [0.6, 0.4]],
            noise_sigma: 0.02,
            bias_amplitude: 0.1,
        }
    }
}

impl PhantomParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 16) {
            return Err(SvxError::Param(format!("phantom dims must be >= 16, got {:?}", self.dims)));
        }
        if self.wt_blobs == 0 {
            return Err(SvxError::Param("wt_blobs must be >= 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SvxError::Param("noise_sigma must be >= 0".into()));
        }
        if !(self.bias_amplitude.is_finite() && (0.0..1.0).contains(&self.bias_amplitude)) {
            return Err(SvxError::Param("bias_amplitude must be in [0, 1)".into()));
        }
        if !self.background.is_finite() || self.contrast.iter().flatten().any(|c| !c.is_finite()) {
            return Err(SvxError::Param("intensities must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    angle: f64,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        let (s, c) = self.angle.sin_cos();
        let x = c * d[0] + s * d[1];
        let y = -s * d[0] + c * d[1];
        (x / self.radii[0]).powi(2) + (y / self.radii[1]).powi(2) + (d[2] / self.radii[2]).powi(2) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom<T> {
    /// Channels T1, T1Gd, T2, FLAIR.
    pub volume: Volume<T>,
    pub gt_wt: LabelMap,
    pub gt_tc: LabelMap,
}

fn geometry(p: &PhantomParams) -> (Vec<Ellipsoid>, Ellipsoid) {
    let mut r = rng(p.seed, GEOMETRY_STREAM);
    let d = p.dims.map(|x| x as f64);
    let center = [0, 1, 2].map(|a| d[a] / 2.0 + uniform(&mut r, -0.1, 0.1) * d[a]);
    let primary = Ellipsoid {
        center,
        radii: [0, 1, 2].map(|a| d[a] * uniform(&mut r, 0.16, 0.22)),
        angle: uniform(&mut r, 0.0, PI),
    };
    let mean_r = primary.radii.iter().sum::<f64>() / 3.0;
    let mut blobs = vec![primary];
    for _ in 1..p.wt_blobs {
        let theta = uniform(&mut r, 0.0, PI);
        let phi = uniform(&mut r, 0.0, 2.0 * PI);
        let dist = uniform(&mut r, 0.5, 0.9) * mean_r;
        let dir = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        blobs.push(Ellipsoid {
            center: [0, 1, 2].map(|a| center[a] + dist * dir[a]),
            radii: [0, 1, 2].map(|a| d[a] * uniform(&mut r, 0.10, 0.16)),
            angle: uniform(&mut r, 0.0, PI),
        });
    }
    let core = Ellipsoid {
        radii: primary.radii.map(|x| 0.5 * x),
        ..primary
    };
    (blobs, core)
}

/// Builds a phantom; identical parameters give bit-identical output.
pub fn generate_phantom<T: Scalar>(p: &PhantomParams) -> Result<Phantom<T>> {
    p.validate()?;
    let dims = p.dims;
    let n = dims.iter().product::<usize>();
    let (blobs, core) = geometry(p);
    let mut wt = vec![0u32; n];
    let mut tc = vec![0u32; n];
    for (i, (w, t)) in wt.iter_mut().zip(tc.iter_mut()).enumerate() {
        let c = coords(dims, i).map(|x| x as f64);
        let inside = blobs.iter().any(|e| e.contains(c));
        *w = inside as u32;
        *t = (inside && core.contains(c)) as u32;
    }

    let mut br = rng(p.seed, BIAS_STREAM);
    let phases = [0, 1, 2].map(|_| uniform(&mut br, 0.0, 2.0 * PI));
    let bias = |i: usize| {
        let c = coords(dims, i);
        let s: f64 = (0..3)
            .map(|a| (2.0 * PI * c[a] as f64 / dims[a] as f64 + phases[a]).sin())
            .sum();
        1.0 + p.bias_amplitude * s / 3.0
    };

    let mut nr = rng(p.seed, NOISE_STREAM);
    let mut data = Vec::with_capacity(4 * n);
    for delta in &p.contrast {
        for i in 0..n {
            let level = p.background
                + if tc[i] != 0 {
                    delta[1]
                } else if wt[i] != 0 {
                    delta[0]
                } else {
                    0.0
                };
            let mut value = if p.bias_amplitude > 0.0 { level * bias(i) } else { level };
            if p.noise_sigma > 0.0 {
                value += p.noise_sigma * gaussian(&mut nr);
            }
            data.push(T::of(value));
        }
    }
    Ok(Phantom {
        volume: Volume::new(dims, [1.0; 3], 4, data)?,
        gt_wt: LabelMap::new(dims, wt)?,
        gt_tc: LabelMap::new(dims, tc)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptMode {
    Erode,
    Dilate,
    DropComponents,
    BoundaryNoise,
}

impl std::str::FromStr for CorruptMode {
    type Err = SvxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erode" => Ok(Self::Erode),
            "dilate" => Ok(Self::Dilate),
            "drop_components" => Ok(Self::DropComponents),
            "boundary_noise" => Ok(Self::BoundaryNoise),
            other => Err(SvxError::Param(format!("unknown corruption mode `{other}`"))),
        }
    }
}

fn ball(radius: usize) -> Vec<[isize; 3]> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn shifted(dims: Dims, i: usize, o: [isize; 3]) -> Option<usize> {
    let p = coords(dims, i);
    let q = [0, 1, 2].map(|a| p[a] as isize + o[a]);
    (0..3)
        .all(|a| q[a] >= 0 && q[a] < dims[a] as isize)
        .then(|| linear_index(dims, q[0] as usize, q[1] as usize, q[2] as usize))
}

/// Morphological erosion with a ball; outside the volume counts as background.
pub fn erode(mask: &[bool], dims: Dims, radius: usize) -> Vec<bool> {
    let b = ball(radius);
    (0..mask.len())
        .map(|i| mask[i] && b.iter().all(|&o| shifted(dims, i, o).is_some_and(|j| mask[j])))
        .collect()
}

pub fn dilate(mask: &[bool], dims: Dims, radius: usize) -> Vec<bool> {
    let b = ball(radius);
    (0..mask.len())
        .map(|i| mask[i] || b.iter().any(|&o| shifted(dims, i, o).is_some_and(|j| mask[j])))
        .collect()
}

fn drop_components(mask: &[bool], dims: Dims, fraction: f64) -> Result<Vec<bool>> {
    let labels = LabelMap::new(dims, mask.iter().map(|&m| m as u32).collect())?;
    let (comp, n) = connected_components(&labels);
    let mut size = vec![0usize; n];
    let mut first = vec![usize::MAX; n];
    for (i, &c) in comp.iter().enumerate() {
        if mask[i] {
            size[c as usize] += 1;
            first[c as usize] = first[c as usize].min(i);
        }
    }
    let total: usize = size.iter().sum();
    let budget = fraction * total as f64;
    let mut order: Vec<usize> = (0..n).filter(|&c| size[c] > 0).collect();
    order.sort_by_key(|&c| (size[c], first[c]));
    let mut removed = vec![false; n];
    let mut dropped = 0usize;
    for c in order {
        if (dropped + size[c]) as f64 > budget {
            break;
        }
        dropped += size[c];
        removed[c] = true;
    }
    Ok(mask
        .iter()
        .zip(&comp)
        .map(|(&m, &c)| m && !removed[c as usize])
        .collect())
}

fn boundary_noise(mask: &[bool], dims: Dims, probability: f64, seed: u64) -> Vec<bool> {
    let st = strides(dims);
    let mut r = rng(seed, CORRUPT_STREAM);
    let mut out = mask.to_vec();
    for i in 0..mask.len() {
        let p = coords(dims, i);
        let boundary = (0..3).any(|a| {
            (p[a] > 0 && mask[i - st[a]] != mask[i]) || (p[a] + 1 < dims[a] && mask[i + st[a]] != mask[i])
        });
        if boundary && r.random::<f64>() < probability {
            out[i] = !mask[i];
        }
    }
    out
}

/// Degrades a mask to imitate an inaccurate prediction.
pub fn corrupt_seed(mask: &LabelMap, mode: CorruptMode, magnitude: f64, seed: u64) -> Result<LabelMap> {
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(SvxError::Param(format!("magnitude must be >= 0, got {magnitude}")));
    }
    let dims = mask.dims();
    let m = mask.mask();
    if !m.iter().any(|&x| x) {
        return Err(SvxError::EmptySeed);
    }
    let out = match mode {
        CorruptMode::Erode => erode(&m, dims, magnitude.round() as usize),
        CorruptMode::Dilate => dilate(&m, dims, magnitude.round() as usize),
        CorruptMode::DropComponents => drop_components(&m, dims, magnitude)?,
        CorruptMode::BoundaryNoise => boundary_noise(&m, dims, magnitude.min(1.0), seed),
    };
    if !out.iter().any(|&x| x) {
        return Err(SvxError::EmptySeed);
    }
    LabelMap::from_mask(dims, &out)?.with_spacing(mask.spacing())
}
