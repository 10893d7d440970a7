//! Two-region exponential certificate for nonlinear fields with Hurwitz
//! linearizations and a Lyapunov function with positive-definite Hessian.
//!
//! Pipeline, all norms being `‖x‖_H = √(½ xᵀHx)`:
//!
//! 1. `m = max_i σ_max` of `e^{δB_i}` in `H`-coordinates (exact);
//! 2. `m₁ = m + θ(1 − m)` and the largest `r₁ ≤ ρ` on whose ball every
//!    sampled `Φ_i^δ` contracts by `m₁`;
//! 3. `r`, a shrunk minimum of `V` on the sphere `‖x‖_H = r₁`;
//! 4. `m₂`, the sampled and refined maximum of `V(Φ_i^δ(x))/V(x)` over
//!    the annulus `r ≤ V ≤ R`;
//! 5. `α = 4 e^{-ln m₁} e^{-ln(m₂)/2}` and
//!    `γ = min{-ln(m₁)/δ, -ln(m₂)/(2δ)}`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{merge_outcomes, metric_conjugate, top_singular, TrialOutcome, Violation, MAX_REPORTED_VIOLATIONS};
use crate::dynamics::{is_hurwitz, SwitchedSystem};
use crate::error::{Error, Result};
use crate::integrate::{flow, matrix_exponential, simulate_switched, IntegratorConfig};
use crate::lyapunov::{check_weak_lyapunov_in_sublevel, estimate_rho, sublevel_radius, LyapunovForm};
use crate::sampling::{
    derive_seed, golden_section_max, random_direction, rng, sphere_directions, tangent_basis, SamplingConfig,
};
use crate::signals::{generate_dwell_time, DwellLaw};

/// Choice of `m₁ ∈ [m, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum M1Rule {
    /// `(1 + m)/2`
    Midpoint,
    /// `m + θ(1 − m)`, `θ ∈ [0, 1)`.
    Interpolate { theta: f64 },
}

impl M1Rule {
    pub fn apply(&self, m: f64) -> f64 {
        match *self {
            M1Rule::Midpoint => 0.5 * (1.0 + m),
            M1Rule::Interpolate { theta } => m + theta * (1.0 - m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearConfig {
    pub m1_rule: M1Rule,
    /// Directions per sampled sphere.
    pub samples: usize,
    pub seed: u64,
    /// Radial shells per sampled ball or annulus.
    pub shells: usize,
    /// `r` = `r_safety · min V` on the `r₁`-sphere.
    pub r_safety: f64,
    pub refine_iters: usize,
    pub bisection_iters: usize,
    pub integrator: IntegratorConfig,
    /// Upper bound handed to the `ρ` search; defaults to the largest
    /// `H`-ball radius inside `{V ≤ R}` along the sampled directions.
    pub rho_search_radius: Option<f64>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        NonlinearConfig {
            m1_rule: M1Rule::Midpoint,
            samples: 1024,
            seed: crate::sampling::DEFAULT_SEED,
            shells: 8,
            r_safety: 0.95,
            refine_iters: crate::sampling::DEFAULT_REFINE_ITERS,
            bisection_iters: 20,
            integrator: IntegratorConfig::default(),
            rho_search_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearSeeds {
    pub base: u64,
    pub hypotheses: u64,
    pub rho: u64,
    pub r1: u64,
    pub r1_revalidation: u64,
    pub r: u64,
    pub m2: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearCertificate {
    pub delta: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub m: f64,
    pub m1: f64,
    pub m1_rule: M1Rule,
    pub rho: f64,
    pub r1: f64,
    pub r: f64,
    pub m2: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Largest spectral abscissa among the linearizations.
    pub max_spectral_abscissa: f64,
    /// Largest sampled `L_{f_i} V` over `{V ≤ R}`.
    pub max_lie_derivative: f64,
    pub samples: usize,
    pub shells: usize,
    pub seeds: NonlinearSeeds,
}

impl NonlinearCertificate {
    /// `min{1, α e^{-γt}}`
    pub fn bound_factor(&self, t: f64) -> f64 {
        (self.alpha * (-self.gamma * t).exp()).min(1.0)
    }
}

/// `α = 4 e^{-ln m₁} e^{-ln(m₂)/2}`, `γ = min{-ln(m₁)/δ, -ln(m₂)/(2δ)}`.
pub fn alpha_gamma(m1: f64, m2: f64, delta: f64) -> (f64, f64) {
    let alpha = 4.0 * (-m1.ln()).exp() * (-m2.ln() / 2.0).exp();
    let gamma = (-m1.ln() / delta).min(-m2.ln() / (2.0 * delta));
    (alpha, gamma)
}

fn flows_contract(
    sys: &SwitchedSystem,
    delta: f64,
    m1: f64,
    radius: f64,
    unit: &[DVector<f64>],
    shells: usize,
    integ: &IntegratorConfig,
) -> Result<bool> {
    let v = sys.lyapunov();
    for k in 1..=shells {
        let s = radius * k as f64 / shells as f64;
        let ok: Vec<Result<bool>> = unit
            .par_iter()
            .map(|x1| {
                let x = x1 * s;
                for f in sys.subsystems() {
                    let y = flow(f, delta, &x, integ)?;
                    if v.norm(y.as_slice()) > m1 * s * (1.0 + 1e-12) {
                        return Ok(false);
                    }
                }
                Ok(true)
            })
            .collect();
        for r in ok {
            if !r? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn annulus_point(v: &LyapunovForm, x1: &DVector<f64>, r: f64, big_r: f64, lambda: f64) -> Result<DVector<f64>> {
    let hi = sublevel_radius(v, x1, big_r)?;
    let lo = sublevel_radius(v, x1, r.min(big_r))?.min(hi);
    Ok(x1 * (lo + lambda.clamp(0.0, 1.0) * (hi - lo)))
}

fn decrease_ratio(
    sys: &SwitchedSystem,
    i: usize,
    delta: f64,
    x: &DVector<f64>,
    integ: &IntegratorConfig,
) -> Result<f64> {
    let v = sys.lyapunov();
    let y = flow(sys.subsystem(i), delta, x, integ)?;
    Ok(v.value(y.as_slice()) / v.value(x.as_slice()))
}

/// Runs the certificate pipeline; each failing stage is named in the error.
pub fn compute_nonlinear_certificate(
    sys: &SwitchedSystem,
    delta: f64,
    big_r: f64,
    cfg: &NonlinearConfig,
) -> Result<NonlinearCertificate> {
    if !(delta > 0.0) || !delta.is_finite() || !(big_r > 0.0) || !big_r.is_finite() {
        return Err(Error::input("δ and R must be positive and finite"));
    }
    if cfg.samples == 0 || cfg.shells == 0 || !(cfg.r_safety > 0.0 && cfg.r_safety < 1.0) {
        return Err(Error::input("invalid nonlinear certificate configuration"));
    }
    let m1_ok = match cfg.m1_rule {
        M1Rule::Midpoint => true,
        M1Rule::Interpolate { theta } => (0.0..1.0).contains(&theta),
    };
    if !m1_ok {
        return Err(Error::input("m₁ interpolation parameter must lie in [0, 1)"));
    }
    let v = sys.lyapunov();
    let d = sys.dimension();
    let base = SamplingConfig::new(cfg.samples, cfg.seed);
    let seeds = NonlinearSeeds {
        base: cfg.seed,
        hypotheses: base.stage("hypotheses").seed,
        rho: base.stage("rho").seed,
        r1: base.stage("r1").seed,
        r1_revalidation: base.stage("r1-revalidation").seed,
        r: base.stage("r").seed,
        m2: base.stage("m2").seed,
    };

    // Hypotheses: Hurwitz linearizations, weak Lyapunov on {V ≤ R}.
    let mut max_abscissa = f64::NEG_INFINITY;
    for (i, f) in sys.subsystems().iter().enumerate() {
        let h = is_hurwitz(f.jacobian_at_origin(), 0.0)?;
        max_abscissa = max_abscissa.max(h.spectral_abscissa);
        if !h.hurwitz {
            return Err(Error::certification(
                "hypotheses",
                format!(
                    "linearization of subsystem {} is not Hurwitz (spectral abscissa {})",
                    i + 1,
                    h.spectral_abscissa
                ),
            ));
        }
    }
    let reports = check_weak_lyapunov_in_sublevel(sys, &base.stage("hypotheses"), big_r, cfg.shells)?;
    let max_lie = reports.iter().map(|r| r.worst_value).fold(f64::NEG_INFINITY, f64::max);
    if let Some(bad) = reports.iter().find(|r| !r.holds) {
        return Err(Error::certification(
            "hypotheses",
            format!(
                "V is not a weak Lyapunov function for subsystem {}: L_f V = {:e} at {:?}",
                bad.subsystem, bad.worst_value, bad.worst_point
            ),
        ));
    }

    // (1) linear contraction m in H-coordinates.
    let mut m: f64 = 0.0;
    for f in sys.subsystems() {
        let e = matrix_exponential(f.jacobian_at_origin(), delta)?;
        m = m.max(top_singular(&metric_conjugate(v, &e))?.0);
    }
    if !(m < 1.0) {
        return Err(Error::certification(
            "m",
            format!("linearizations do not contract over δ = {delta}: m = {m}"),
        ));
    }

    // (2) m₁ and r₁ ≤ ρ.
    let m1 = cfg.m1_rule.apply(m);
    let unit_dirs = |seed: u64| -> Vec<DVector<f64>> {
        sphere_directions(d, cfg.samples, seed)
            .iter()
            .map(|y| v.from_unit(y))
            .collect()
    };
    let search_radius = match cfg.rho_search_radius {
        Some(s) => s,
        None => {
            let mut inner = f64::INFINITY;
            for x1 in unit_dirs(seeds.rho) {
                inner = inner.min(sublevel_radius(v, &x1, big_r)?);
            }
            inner
        }
    };
    let rho = estimate_rho(v, search_radius, &base.stage("rho"))?.rho;

    let r1_dirs = unit_dirs(seeds.r1);
    let contracts =
        |radius: f64, dirs: &[DVector<f64>]| flows_contract(sys, delta, m1, radius, dirs, cfg.shells, &cfg.integrator);
    let mut r1 = if contracts(rho, &r1_dirs)? {
        rho
    } else {
        let (mut lo, mut hi) = (0.0, rho);
        for _ in 0..cfg.bisection_iters {
            let mid = 0.5 * (lo + hi);
            if contracts(mid, &r1_dirs)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if !(r1 > 0.0) {
        return Err(Error::certification(
            "r1",
            format!("no radius found on which the flows contract by m₁ = {m1}"),
        ));
    }
    let fresh = unit_dirs(seeds.r1_revalidation);
    let mut shrinks = 0;
    while !contracts(r1, &fresh)? {
        r1 *= 0.5;
        shrinks += 1;
        if shrinks > 20 {
            return Err(Error::certification(
                "r1",
                "radius r₁ failed revalidation on an independent sample",
            ));
        }
    }

    // (3) r with {V < r} inside the ball of radius r₁.
    let r_dirs = unit_dirs(seeds.r);
    let v_min = r_dirs
        .iter()
        .map(|x1| v.value((x1 * r1).as_slice()))
        .fold(f64::INFINITY, f64::min);
    let r = cfg.r_safety * v_min;
    if !(r > 0.0) {
        return Err(Error::certification("r", "V vanishes on the r₁-sphere"));
    }

    // (4) m₂ on the annulus r ≤ V ≤ R.
    let m2_dirs = sphere_directions(d, cfg.samples, seeds.m2);
    let radial = cfg.shells.max(1) + 1;
    let candidates: Vec<Result<(f64, usize, usize, f64)>> = m2_dirs
        .par_iter()
        .enumerate()
        .map(|(k, y)| {
            let x1 = v.from_unit(y);
            let mut best = (f64::NEG_INFINITY, 0, k, 0.0);
            for j in 0..radial {
                let lambda = j as f64 / (radial - 1) as f64;
                let x = annulus_point(v, &x1, r, big_r, lambda)?;
                for i in 0..sys.len() {
                    let q = decrease_ratio(sys, i, delta, &x, &cfg.integrator)?;
                    if q > best.0 {
                        best = (q, i, k, lambda);
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0, 0, 0.0);
    for c in candidates {
        let c = c?;
        if c.0 > best.0 {
            best = c;
        }
    }
    let (sampled, i_best, k_best, lambda_best) = best;
    let m2 = sampled.max(refine_annulus_max(
        sys,
        i_best,
        delta,
        &m2_dirs[k_best],
        lambda_best,
        (r, big_r),
        cfg,
    )?);
    if !(m2 < 1.0) {
        return Err(Error::certification(
            "m2",
            format!("V does not decrease by a uniform factor over δ on the annulus: m₂ = {m2}"),
        ));
    }

    let (alpha, gamma) = alpha_gamma(m1, m2, delta);
    Ok(NonlinearCertificate {
        delta,
        big_r,
        m,
        m1,
        m1_rule: cfg.m1_rule,
        rho,
        r1,
        r,
        m2,
        alpha,
        gamma,
        max_spectral_abscissa: max_abscissa,
        max_lie_derivative: max_lie,
        samples: cfg.samples,
        shells: cfg.shells,
        seeds,
    })
}

/// Coordinate-wise golden-section refinement of the decrease ratio around
/// a sampled annulus point, in (sphere chart, radial fraction) coordinates.
fn refine_annulus_max(
    sys: &SwitchedSystem,
    i: usize,
    delta: f64,
    y0: &DVector<f64>,
    lambda0: f64,
    (r, big_r): (f64, f64),
    cfg: &NonlinearConfig,
) -> Result<f64> {
    if cfg.refine_iters == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let v = sys.lyapunov();
    let d = sys.dimension();
    let eval = |y: &DVector<f64>, lambda: f64| -> f64 {
        let x1 = v.from_unit(&y.normalize());
        annulus_point(v, &x1, r, big_r, lambda)
            .and_then(|x| decrease_ratio(sys, i, delta, &x, &cfg.integrator))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut y = y0.clone();
    let mut lambda = lambda0;
    let mut best = eval(&y, lambda);
    let mut h = if d >= 2 {
        2.0 * std::f64::consts::TAU / cfg.samples as f64
    } else {
        0.0
    };
    let mut w = 1.0 / cfg.shells as f64;
    for _ in 0..6 {
        if d >= 2 {
            for e in tangent_basis(&y) {
                let (c, val) = golden_section_max(|c| eval(&(&y + &e * c), lambda), -h, h, 0.0, cfg.refine_iters);
                if val > best {
                    y = (&y + &e * c).normalize();
                    best = val;
                }
            }
        }
        let (lo, hi) = ((lambda - w).max(0.0), (lambda + w).min(1.0));
        let (l, val) = golden_section_max(|l| eval(&y, l), lo, hi, lambda, cfg.refine_iters);
        if val > best {
            lambda = l;
            best = val;
        }
        h *= 0.5;
        w *= 0.5;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearVerifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub horizon_mult: f64,
    /// Defaults to `δ/10`.
    pub record_dt: Option<f64>,
    pub tolerance: f64,
    pub law: DwellLaw,
    pub integrator: IntegratorConfig,
}

impl Default for NonlinearVerifyConfig {
    fn default() -> Self {
        NonlinearVerifyConfig {
            trials: 500,
            seed: crate::sampling::DEFAULT_SEED,
            horizon_mult: 20.0,
            record_dt: None,
            tolerance: 1e-8,
            law: DwellLaw::default(),
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearVerification {
    pub trials: usize,
    pub record_points: usize,
    /// `max V(Φ_u^t(x)) / (min{1, αe^{-γt}} V(x))` over nonzero initial states.
    pub max_ratio: f64,
    pub violations: usize,
    pub first_violations: Vec<Violation>,
    pub seed: u64,
    pub tolerance: f64,
}

impl NonlinearVerification {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `V(Φ_u^t(x)) ≤ min{1, αe^{-γt}} V(x)` over random dwell-δ signals
/// and random initial states in `{V ≤ R}`.
pub fn verify_nonlinear_bound(
    sys: &SwitchedSystem,
    cert: &NonlinearCertificate,
    cfg: &NonlinearVerifyConfig,
) -> Result<NonlinearVerification> {
    let v = sys.lyapunov();
    let horizon = cfg.horizon_mult * cert.delta;
    let record_dt = cfg.record_dt.unwrap_or(cert.delta / 10.0);
    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.seed, &format!("nonlinear-trial-{trial}"));
            let u = generate_dwell_time(seed, sys.len(), cert.delta, horizon, &cfg.law)?;
            let mut r = rng(seed ^ 0x2545_f491);
            let x1 = v.from_unit(&random_direction(&mut r, sys.dimension()));
            let s_max = sublevel_radius(v, &x1, cert.big_r)?;
            let x0 = x1 * (s_max * r.random_range(0.0..=1.0));
            let traj = simulate_switched(sys, &u, &x0, horizon, &cfg.integrator, record_dt)?;
            let v0 = v.value(x0.as_slice());
            let mut out = TrialOutcome {
                points: traj.len(),
                ..Default::default()
            };
            for (t, x) in traj.times.iter().zip(&traj.states) {
                let bound = cert.bound_factor(*t) * v0;
                let vt = v.value(x.as_slice());
                if v0 == 0.0 {
                    if vt != 0.0 {
                        out.count += 1;
                    }
                    continue;
                }
                let ratio = vt / bound;
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
    Ok(NonlinearVerification {
        trials: cfg.trials,
        record_points,
        max_ratio,
        violations,
        first_violations,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    #[test]
    fn alpha_gamma_formulas() {
        let (a, g) = alpha_gamma(0.5, 0.25, 2.0);
        assert_abs_diff_eq!(a, 4.0 * 2.0 * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g, (2f64.ln() / 2.0).min(4f64.ln() / 4.0), epsilon = 1e-15);
    }

    #[test]
    fn m1_rules() {
        assert_eq!(M1Rule::Midpoint.apply(0.5), 0.75);
        assert_eq!(M1Rule::Interpolate { theta: 0.0 }.apply(0.4), 0.4);
    }

    #[test]
    fn isotropic_decay_certificate() {
        let sys = catalog::negative_identity(2);
        let cfg = NonlinearConfig {
            samples: 128,
            ..Default::default()
        };
        let c = compute_nonlinear_certificate(&sys, 1.0, 1.0, &cfg).unwrap();
        assert_abs_diff_eq!(c.m, (-1f64).exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(c.m1, 0.5 * (1.0 + (-1f64).exp()), epsilon = 1e-10);
        assert!(c.m2 <= (-2f64).exp() + 1e-9, "{}", c.m2);
        assert!(c.alpha > 4.0 && c.gamma > 0.0);
    }

    #[test]
    fn non_hurwitz_linearization_is_rejected() {
        let sys = SwitchedSystem::new(
            vec![catalog::cubic_damped(nalgebra::DMatrix::zeros(2, 2))],
            LyapunovForm::Polynomial(catalog::squared_norm_polynomial(2)),
        )
        .unwrap();
        match compute_nonlinear_certificate(&sys, 1.0, 1.0, &NonlinearConfig::default()) {
            Err(Error::Certification { stage, .. }) => assert_eq!(stage, "hypotheses"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_inputs() {
        let sys = catalog::negative_identity(2);
        let cfg = NonlinearConfig::default();
        assert!(compute_nonlinear_certificate(&sys, 0.0, 1.0, &cfg).is_err());
        assert!(compute_nonlinear_certificate(&sys, 1.0, -1.0, &cfg).is_err());
        let bad = NonlinearConfig {
            m1_rule: M1Rule::Interpolate { theta: 1.0 },
            ..Default::default()
        };
        assert!(compute_nonlinear_certificate(&sys, 1.0, 1.0, &bad).is_err());
    }
}
