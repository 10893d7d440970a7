//! Convergence-rate certificates for dwell-time switching.
//!
//! The homogeneous path bounds the worst one-dwell contraction
//! `M(δ) = max_i max_{‖x‖_P = 1} ‖Φ_i^δ(x)‖_P` and turns it into the class-KL
//! rate `β(r, t) = r·min{1, M^{-1/2}·M^{t/(2δ)}}`. The nonlinear path
//! ([`nonlinear`]) glues a linearization bound near the origin to a sampled
//! bound on a compact annulus.

pub mod nonlinear;
pub mod slow;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::SwitchedSystem;
use crate::error::{Error, Result};
use crate::integrate::{matrix_exponential, simulate_switched, IntegratorConfig};
use crate::lyapunov::LyapunovForm;
use crate::sampling::{derive_seed, maximize_on_sphere, random_direction, rng, SamplingConfig};
use crate::signals::{generate_dwell_time, generate_periodic, DwellLaw};

pub use nonlinear::{
    compute_nonlinear_certificate, verify_nonlinear_bound, M1Rule, NonlinearCertificate, NonlinearConfig,
    NonlinearVerification, NonlinearVerifyConfig,
};
pub use slow::{slow_convergence_demo, SlowDemoConfig, SlowRow};

/// How each `m_i` is maximized over the unit sphere of `‖·‖_P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MSearch {
    /// Largest singular value of `Lᵀ e^{δB_i} L⁻ᵀ`, `P = L Lᵀ`.
    ExactSvd,
    /// Sampled maximization plus golden-section refinement.
    SphereSearch {
        samples: usize,
        refine_iters: usize,
        seed: u64,
    },
}

impl MSearch {
    pub fn sphere_default(seed: u64) -> Self {
        MSearch::SphereSearch {
            samples: crate::sampling::DEFAULT_SAMPLES,
            refine_iters: crate::sampling::DEFAULT_REFINE_ITERS,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousCertificate {
    pub delta: f64,
    /// `M(δ) = max_i m_i`.
    pub m: f64,
    pub per_subsystem_m: Vec<f64>,
    pub method: MSearch,
    /// Unit vector of `‖·‖_P` attaining `M`.
    pub argmax_point: Vec<f64>,
    /// 1-based index of the subsystem attaining `M`.
    pub argmax_subsystem: usize,
}

/// `Lᵀ E L⁻ᵀ`: the operator `E` expressed in coordinates where the
/// Lyapunov norm is Euclidean.
pub fn metric_conjugate(v: &LyapunovForm, e: &DMatrix<f64>) -> DMatrix<f64> {
    let l = v.metric_cholesky();
    let lt = l.transpose();
    let lt_inv = lt
        .clone()
        .solve_upper_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .expect("Cholesky factor is nonsingular");
    &lt * e * lt_inv
}

/// Largest singular value and the corresponding right singular vector.
pub(crate) fn top_singular(k: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let svd = k
        .clone()
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let vt = svd.v_t.expect("requested");
    Ok((sigma, vt.row(idx).transpose()))
}

/// `(m_i, argmax)` per subsystem without the `m_i < 1` check.
pub fn contraction_factors(sys: &SwitchedSystem, delta: f64, search: &MSearch) -> Result<Vec<(f64, DVector<f64>)>> {
    let v = sys.lyapunov();
    sys.subsystems()
        .iter()
        .map(|s| {
            let e = matrix_exponential(s.matrix(), delta)?;
            let k = metric_conjugate(v, &e);
            let (m, y) = match *search {
                MSearch::ExactSvd => top_singular(&k)?,
                MSearch::SphereSearch {
                    samples,
                    refine_iters,
                    seed,
                } => {
                    let cfg = SamplingConfig::new(samples, seed);
                    let res = maximize_on_sphere(sys.dimension(), &cfg, refine_iters, |y| (&k * y).norm());
                    (res.value, res.point)
                }
            };
            Ok((m, v.from_unit(&y)))
        })
        .collect()
}

fn check_homogeneous(sys: &SwitchedSystem, delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::input("δ must be positive and finite"));
    }
    if !sys.all_linear() {
        return Err(Error::input(
            "the homogeneous rate needs linear subsystems (use the nonlinear certificate)",
        ));
    }
    if !matches!(sys.lyapunov(), LyapunovForm::Quadratic(_)) {
        return Err(Error::input("the homogeneous rate needs a quadratic Lyapunov form"));
    }
    Ok(())
}

/// Computes `M(δ)`; fails if some `m_i ≥ 1`.
pub fn compute_m(sys: &SwitchedSystem, delta: f64, search: &MSearch) -> Result<HomogeneousCertificate> {
    check_homogeneous(sys, delta)?;
    let factors = contraction_factors(sys, delta, search)?;
    if let Some((i, (m, _))) = factors.iter().enumerate().find(|(_, (m, _))| !(*m < 1.0)) {
        return Err(Error::certification(
            "M",
            format!(
                "subsystem {} does not contract over δ = {delta}: m = {m} ≥ 1 \
                 (not asymptotically stable, V not a weak Lyapunov function, or δ below resolution)",
                i + 1
            ),
        ));
    }
    let (best, (m, point)) = factors
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1).0.total_cmp(&(b.1).0))
        .expect("nonempty system");
    Ok(HomogeneousCertificate {
        delta,
        m: *m,
        per_subsystem_m: factors.iter().map(|(m, _)| *m).collect(),
        method: *search,
        argmax_point: point.iter().copied().collect(),
        argmax_subsystem: best + 1,
    })
}

/// `β(r, t) = r·min{1, e^{-ln(M)/2}·e^{ln(M)t/(2δ)}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFunction {
    pub delta: f64,
    pub m: f64,
}

impl RateFunction {
    pub fn new(delta: f64, m: f64) -> Result<Self> {
        if !(delta > 0.0) || !(m > 0.0 && m < 1.0) {
            return Err(Error::input("need δ > 0 and M in (0, 1)"));
        }
        Ok(RateFunction { delta, m })
    }

    pub fn beta(&self, r: f64, t: f64) -> f64 {
        // ln(M)/2 · (t/δ − 1) equals the two exponents combined; this form is
        // exact at t = δ.
        let factor = (0.5 * self.m.ln() * (t / self.delta - 1.0)).exp();
        r * factor.min(1.0)
    }

    /// Exponential decay rate `-ln(M)/(2δ)`.
    pub fn decay_rate(&self) -> f64 {
        -self.m.ln() / (2.0 * self.delta)
    }
}

impl From<&HomogeneousCertificate> for RateFunction {
    fn from(c: &HomogeneousCertificate) -> Self {
        RateFunction { delta: c.delta, m: c.m }
    }
}

/// `β(r, t)` on a time grid for each rate.
pub fn beta_curve(rates: &[RateFunction], r: f64, t_grid: &[f64]) -> Vec<Vec<f64>> {
    rates
        .iter()
        .map(|rf| t_grid.iter().map(|&t| rf.beta(r, t)).collect())
        .collect()
}

pub const MONOTONE_TOLERANCE: f64 = 1e-9;

/// `(δ, M(δ))` over a grid, which must come out nonincreasing in `δ`.
pub fn m_delta_curve(sys: &SwitchedSystem, delta_grid: &[f64], search: &MSearch) -> Result<Vec<(f64, f64)>> {
    if delta_grid.is_empty() {
        return Err(Error::input("empty δ grid"));
    }
    let certs: Vec<Result<HomogeneousCertificate>> =
        delta_grid.par_iter().map(|&d| compute_m(sys, d, search)).collect();
    let mut curve = Vec::with_capacity(delta_grid.len());
    for c in certs {
        let c = c?;
        curve.push((c.delta, c.m));
    }
    let mut sorted = curve.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[1].1 > w[0].1 + MONOTONE_TOLERANCE {
            return Err(Error::Numerical(format!(
                "M(δ) increases from {} at δ = {} to {} at δ = {} (sphere search under-resolved?)",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub t: f64,
    pub ratio: f64,
}

const MAX_REPORTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousVerifyConfig {
    pub trials: usize,
    pub horizon_mult: f64,
    pub seed: u64,
    /// Defaults to `δ/20`.
    pub record_dt: Option<f64>,
    pub tolerance: f64,
    pub law: DwellLaw,
}

impl Default for HomogeneousVerifyConfig {
    fn default() -> Self {
        HomogeneousVerifyConfig {
            trials: 1000,
            horizon_mult: 20.0,
            seed: crate::sampling::DEFAULT_SEED,
            record_dt: None,
            tolerance: 1e-8,
            law: DwellLaw::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousVerification {
    pub trials: usize,
    pub record_points: usize,
    /// `max ‖Φ_u^t(x)‖_P / β(‖x‖_P, t)` over all record points.
    pub max_ratio: f64,
    pub violations: usize,
    pub first_violations: Vec<Violation>,
    pub seed: u64,
    pub tolerance: f64,
}

impl HomogeneousVerification {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Default)]
struct TrialOutcome {
    points: usize,
    max_ratio: f64,
    violations: Vec<Violation>,
    count: usize,
}

fn merge_outcomes(outcomes: Vec<TrialOutcome>) -> (usize, f64, usize, Vec<Violation>) {
    let mut points = 0;
    let mut max_ratio: f64 = 0.0;
    let mut count = 0;
    let mut first = Vec::new();
    for o in outcomes {
        points += o.points;
        max_ratio = max_ratio.max(o.max_ratio);
        count += o.count;
        for v in o.violations {
            if first.len() < MAX_REPORTED_VIOLATIONS {
                first.push(v);
            }
        }
    }
    (points, max_ratio, count, first)
}

/// Monte-Carlo check of `‖Φ_u^t(x)‖_P ≤ β(‖x‖_P, t)` over random dwell-δ
/// signals and random `P`-unit initial states.
pub fn verify_homogeneous_bound(
    sys: &SwitchedSystem,
    cert: &HomogeneousCertificate,
    cfg: &HomogeneousVerifyConfig,
) -> Result<HomogeneousVerification> {
    check_homogeneous(sys, cert.delta)?;
    let rate = RateFunction::new(cert.delta, cert.m)?;
    let horizon = cfg.horizon_mult * cert.delta;
    let record_dt = cfg.record_dt.unwrap_or(cert.delta / 20.0);
    let v = sys.lyapunov();
    let integ = IntegratorConfig::default();
    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.seed, &format!("homogeneous-trial-{trial}"));
            let u = generate_dwell_time(seed, sys.len(), cert.delta, horizon, &cfg.law)?;
            let mut r = rng(seed ^ 0x5bd1_e995);
            let x0 = v.from_unit(&random_direction(&mut r, sys.dimension()));
            let traj = simulate_switched(sys, &u, &x0, horizon, &integ, record_dt)?;
            let r0 = v.norm(x0.as_slice());
            let mut out = TrialOutcome {
                points: traj.len(),
                ..Default::default()
            };
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let ratio = v.norm(x.as_slice()) / rate.beta(r0, *t);
                out.max_ratio = out.max_ratio.max(ratio);
                if ratio > 1.0 + cfg.tolerance {
                    out.count += 1;
                    if out.violations.len() < MAX_REPORTED_VIOLATIONS {
                        out.violations.push(Violation { trial, t: *t, ratio });
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let (record_points, max_ratio, violations, first_violations) = merge_outcomes(outcomes);
    Ok(HomogeneousVerification {
        trials: cfg.trials,
        record_points,
        max_ratio,
        violations,
        first_violations,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBoundReport {
    pub trials: usize,
    pub periods: usize,
    /// `max ‖Φ_u^{kδ}(x)‖_P / (M^k ‖x‖_P)`.
    pub max_ratio: f64,
    pub violations: usize,
}

/// At switching instants `kδ` of back-to-back δ-switching the sharper bound
/// `‖Φ_u^{kδ}(x)‖_P ≤ M^k ‖x‖_P` applies (no overshoot factor). Trials use
/// random index sequences and random `P`-unit initial states.
pub fn verify_switching_grid_bound(
    sys: &SwitchedSystem,
    cert: &HomogeneousCertificate,
    trials: usize,
    periods: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GridBoundReport> {
    check_homogeneous(sys, cert.delta)?;
    let delta = cert.delta;
    let v = sys.lyapunov();
    let exps: Vec<DMatrix<f64>> = sys
        .subsystems()
        .iter()
        .map(|s| matrix_exponential(s.matrix(), delta))
        .collect::<Result<_>>()?;
    // One trial with the deterministic round-robin sequence, the rest random.
    let rr = generate_periodic(sys.len(), delta, delta * periods as f64)?;
    let results: Vec<(f64, usize)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng(derive_seed(seed, &format!("grid-trial-{trial}")));
            let mut x = v.from_unit(&random_direction(&mut r, sys.dimension()));
            let mut current = 0usize;
            let mut worst: f64 = 0.0;
            let mut bad = 0;
            for k in 1..=periods {
                let idx = if trial == 0 {
                    rr.value_at((k - 1) as f64 * delta) - 1
                } else if sys.len() == 1 {
                    0
                } else {
                    let step = r.random_range(1..sys.len());
                    let next = (current + step) % sys.len();
                    current = next;
                    next
                };
                x = &exps[idx] * x;
                let ratio = v.norm(x.as_slice()) / cert.m.powi(k as i32);
                worst = worst.max(ratio);
                if ratio > 1.0 + tolerance {
                    bad += 1;
                }
            }
            (worst, bad)
        })
        .collect();
    Ok(GridBoundReport {
        trials,
        periods,
        max_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        violations: results.iter().map(|r| r.1).sum(),
    })
}
