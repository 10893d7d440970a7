//! Deterministic sphere sampling and local refinement of sampled maxima.
//!
//! Every sampled quantity in this crate is an empirical certificate: the
//! sample count and seed are recorded alongside the value.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REFINE_ITERS: usize = 50;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

impl SamplingConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        SamplingConfig { samples, seed }
    }

    /// Same sample count, independent seed for the named stage.
    pub fn stage(&self, name: &str) -> Self {
        SamplingConfig {
            samples: self.samples,
            seed: derive_seed(self.seed, name),
        }
    }
}

/// Mixes a stage name into a seed (FNV-1a followed by splitmix64).
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit vector drawn uniformly from the Euclidean sphere.
pub fn random_direction<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Deterministic directions on the Euclidean unit sphere of `R^dim`.
///
/// `dim = 1` gives `{+1, -1}`; `dim = 2` gives `samples` equally spaced
/// angles with a seed-dependent phase; higher dimensions normalize seeded
/// Gaussian vectors.
pub fn sphere_directions(dim: usize, samples: usize, seed: u64) -> Vec<DVector<f64>> {
    let samples = samples.max(1);
    match dim {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => {
            let phase: f64 = rng(seed).random();
            (0..samples)
                .map(|k| {
                    let theta = std::f64::consts::TAU * (k as f64 + phase) / samples as f64;
                    DVector::from_vec(vec![theta.cos(), theta.sin()])
                })
                .collect()
        }
        _ => {
            let mut r = rng(seed);
            (0..samples).map(|_| random_direction(&mut r, dim)).collect()
        }
    }
}

/// Typical angular spacing of `samples` points on the sphere in `R^dim`.
fn angular_spacing(dim: usize, samples: usize) -> f64 {
    let n = samples.max(1) as f64;
    match dim {
        0 | 1 => 0.0,
        2 => std::f64::consts::TAU / n,
        _ => (4.0 * std::f64::consts::PI / n).powf(1.0 / (dim as f64 - 1.0)),
    }
}

/// Orthonormal basis of the tangent space of the unit sphere at `x`.
pub fn tangent_basis(x: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = x.len();
    let mut basis: Vec<DVector<f64>> = vec![x.normalize()];
    let mut candidates: Vec<usize> = (0..d).collect();
    // Add coordinate axes least aligned with x first.
    candidates.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
    for j in candidates {
        if basis.len() == d {
            break;
        }
        let mut v = DVector::zeros(d);
        v[j] = 1.0;
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
    }
    basis.remove(0);
    basis
}

/// Maximizes a unimodal function on `[a, b]` by golden-section search.
/// Returns the best point evaluated, including `start` if it is better.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, start: f64, iters: usize) -> (f64, f64) {
    let mut best = (start, f(start));
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Result of a sampled maximization on the unit sphere.
#[derive(Debug, Clone)]
pub struct SphereMax {
    pub value: f64,
    pub point: DVector<f64>,
    pub sampled_value: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Coordinate-wise golden-section refinement on a tangent chart of the
/// unit sphere, re-centred after each sweep.
pub fn refine_on_sphere<F>(f: &F, start: &DVector<f64>, half_width: f64, iters: usize) -> (f64, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut x = start.normalize();
    let mut fx = f(&x);
    if x.len() < 2 || iters == 0 {
        return (fx, x);
    }
    let mut h = half_width.clamp(1e-12, 1.0);
    for _ in 0..60 {
        let before = fx;
        for e in tangent_basis(&x) {
            let chart = |c: f64| (&x + &e * c).normalize();
            let (c, val) = golden_section_max(|c| f(&chart(c)), -h, h, 0.0, iters);
            if val > fx {
                x = chart(c);
                fx = val;
            }
        }
        let gained = fx - before;
        if gained <= 1e-15 * fx.abs().max(1e-300) {
            h *= 0.25;
        } else {
            h *= 0.5;
        }
        if h < 1e-10 {
            break;
        }
    }
    (fx, x)
}

/// Samples `f` on deterministic sphere directions, then refines the best
/// few candidates locally. `f` receives Euclidean unit vectors.
pub fn maximize_on_sphere<F>(dim: usize, cfg: &SamplingConfig, refine_iters: usize, f: F) -> SphereMax
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let dirs = sphere_directions(dim, cfg.samples, cfg.seed);
    let values: Vec<f64> = dirs.par_iter().map(&f).collect();
    let mut order: Vec<usize> = (0..dirs.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let sampled_value = values[order[0]];
    let mut best = (sampled_value, dirs[order[0]].clone());
    if refine_iters > 0 && dim >= 2 {
        let h = 2.0 * angular_spacing(dim, dirs.len());
        let starts: Vec<&DVector<f64>> = order.iter().take(4).map(|&k| &dirs[k]).collect();
        let refined: Vec<(f64, DVector<f64>)> = starts
            .par_iter()
            .map(|s| refine_on_sphere(&f, s, h, refine_iters))
            .collect();
        for (v, x) in refined {
            if v > best.0 {
                best = (v, x);
            }
        }
    }
    SphereMax {
        value: best.0,
        point: best.1,
        sampled_value,
        samples: dirs.len(),
        seed: cfg.seed,
    }
}
