//! Subsystem flows `Φ_i^t` and switched trajectories `Φ_u^t`.
//!
//! Linear fields are propagated exactly with the matrix exponential; other
//! fields use fixed-step RK4 or adaptive Dormand–Prince 5(4). Switching times
//! are always segment boundaries: no step ever straddles a switch.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{Subsystem, SwitchedSystem};
use crate::error::{Error, IntegrationFailure, Result};
use crate::signals::SwitchingSignal;

pub const DEFAULT_ATOL: f64 = 1e-10;
pub const DEFAULT_RTOL: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

// Padé coefficients b_0..b_m of the [m/m] approximant to exp.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Largest 1-norms for which each degree meets unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;
const MAX_SQUARINGS: i32 = 1000;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut u = &ident * b[1];
    let mut v = &ident * b[0];
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        u += &power * b[2 * k + 1];
        v += &power * b[2 * k];
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// `e^{tA}` by scaling and squaring with a diagonal Padé approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm of `tA`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::input("matrix exponential needs a nonempty square matrix"));
    }
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("nonfinite input to matrix exponential".into()));
    }
    let n = a.nrows();
    let ta = a * t;
    let nrm = norm1(&ta);
    if nrm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }

    let solve = |u: DMatrix<f64>, v: DMatrix<f64>| -> Result<DMatrix<f64>> {
        let p = &v + &u;
        let q = &v - &u;
        q.lu()
            .solve(&p)
            .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))
    };

    for (m, theta) in THETA {
        if nrm <= theta {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&ta, b);
            return solve(u, v);
        }
    }

    let s = (nrm / THETA13).log2().ceil().max(0.0) as i32;
    if s > MAX_SQUARINGS {
        return Err(Error::Numerical(format!(
            "matrix exponential overflow: ‖tA‖₁ = {nrm:e}"
        )));
    }
    let scaled = &ta * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut r = solve(u, v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "matrix exponential overflow: ‖tA‖₁ = {nrm:e}"
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// `e^{tA} x` for linear fields; polynomial fields fall back to the
    /// adaptive scheme with default tolerances.
    ExactLinear,
    Rk4Fixed {
        step: f64,
    },
    Rk45Adaptive {
        atol: f64,
        rtol: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::ExactLinear,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4Fixed { step },
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn rk45(atol: f64, rtol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45Adaptive { atol, rtol },
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::ExactLinear => true,
            Method::Rk4Fixed { step } => step > 0.0 && step.is_finite(),
            Method::Rk45Adaptive { atol, rtol } => atol > 0.0 && rtol > 0.0,
        };
        if ok && self.max_steps > 0 {
            Ok(())
        } else {
            Err(Error::input(format!("invalid integrator configuration {self:?}")))
        }
    }
}

/// Recorded states of a switched trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Active (1-based) subsystem index at each record time, right-continuous.
    pub indices: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    fn push(&mut self, t: f64, x: DVector<f64>, index: usize) {
        self.times.push(t);
        self.states.push(x);
        self.indices.push(index);
    }
}

// Dormand–Prince 5(4) tableau (fields are autonomous, so the nodes are unused).
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Numerical propagation state for one field, reused across calls so the
/// adaptive step size carries over.
struct Stepper<'a> {
    field: &'a Subsystem,
    method: Method,
    h: f64,
    // Time of the last accepted step.
    reached: f64,
    steps: usize,
    max_steps: usize,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a Subsystem, cfg: &IntegratorConfig) -> Self {
        let d = field.dimension();
        let method = match cfg.method {
            Method::ExactLinear => Method::Rk45Adaptive {
                atol: DEFAULT_ATOL,
                rtol: DEFAULT_RTOL,
            },
            m => m,
        };
        Stepper {
            field,
            method,
            h: 0.0,
            reached: 0.0,
            steps: 0,
            max_steps: cfg.max_steps,
            k: vec![vec![0.0; d]; 7],
            tmp: vec![0.0; d],
            next: vec![0.0; d],
        }
    }

    fn count_step(&mut self) -> std::result::Result<(), String> {
        self.steps += 1;
        if self.steps > self.max_steps {
            Err(format!("step budget of {} exhausted", self.max_steps))
        } else {
            Ok(())
        }
    }

    /// Advances `x` from `t0` to exactly `t1`.
    fn advance(&mut self, x: &mut [f64], t0: f64, t1: f64) -> std::result::Result<(), String> {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        match self.method {
            Method::Rk4Fixed { step } => {
                let n = ((span / step) - 1e-9).ceil().max(1.0) as usize;
                let h = span / n as f64;
                self.reached = t0;
                for k in 0..n {
                    self.count_step()?;
                    let before = x.to_vec();
                    self.rk4_step(x, h);
                    if x.iter().any(|v| !v.is_finite()) {
                        x.copy_from_slice(&before);
                        return Err("nonfinite state".into());
                    }
                    self.reached = t0 + (k + 1) as f64 * h;
                }
                Ok(())
            }
            Method::Rk45Adaptive { atol, rtol } => self.dopri(x, t0, t1, atol, rtol),
            Method::ExactLinear => unreachable!("resolved in Stepper::new"),
        }
    }

    fn rk4_step(&mut self, x: &mut [f64], h: f64) {
        let d = x.len();
        let f = self.field;
        let (k1, rest) = self.k.split_at_mut(1);
        let (k2, rest) = rest.split_at_mut(1);
        let (k3, rest) = rest.split_at_mut(1);
        let k4 = &mut rest[0];
        let (k1, k2, k3) = (&mut k1[0], &mut k2[0], &mut k3[0]);
        f.evaluate_into(x, k1);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f.evaluate_into(&self.tmp, k2);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f.evaluate_into(&self.tmp, k3);
        for i in 0..d {
            self.tmp[i] = x[i] + h * k3[i];
        }
        f.evaluate_into(&self.tmp, k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    // Stage loops index the Butcher tableau and the state together.
    #[allow(clippy::needless_range_loop)]
    fn dopri(&mut self, x: &mut [f64], t0: f64, t1: f64, atol: f64, rtol: f64) -> std::result::Result<(), String> {
        let d = x.len();
        let span = t1 - t0;
        if self.h <= 0.0 {
            self.h = span.min(1e-2);
        }
        let mut t = t0;
        self.reached = t0;
        while t < t1 {
            let last = t1 - t <= self.h * (1.0 + 1e-12);
            let h = if last { t1 - t } else { self.h };
            self.count_step()?;
            self.field.evaluate_into(x, &mut self.k[0]);
            for s in 1..7 {
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += DP_A[s][j] * self.k[j][i];
                    }
                    self.tmp[i] = x[i] + h * acc;
                }
                let (_, rest) = self.k.split_at_mut(s);
                self.field.evaluate_into(&self.tmp, &mut rest[0]);
                if s == 6 {
                    self.next.copy_from_slice(&self.tmp);
                }
            }
            let mut err2 = 0.0;
            for i in 0..d {
                let mut e = 0.0;
                for (j, ej) in DP_E.iter().enumerate() {
                    e += ej * self.k[j][i];
                }
                let sc = atol + rtol * x[i].abs().max(self.next[i].abs());
                err2 += (h * e / sc).powi(2);
            }
            let err = (err2 / d as f64).sqrt();
            if !err.is_finite() {
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err("nonfinite state".into());
                }
                self.h = 0.1 * h;
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                x.copy_from_slice(&self.next);
                t = if last { t1 } else { t + h };
                self.reached = t;
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor;
                if self.h < 1e-14 * (1.0 + t.abs()) {
                    return Err(format!("step size underflow at t = {t}"));
                }
            }
        }
        Ok(())
    }
}

/// `Φ^t(x)` for one subsystem.
pub fn flow(s: &Subsystem, t: f64, x: &DVector<f64>, cfg: &IntegratorConfig) -> Result<DVector<f64>> {
    Error::check_dim(s.dimension(), x.len())?;
    cfg.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::input("flow time must be finite and nonnegative"));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    if s.is_linear() && cfg.method == Method::ExactLinear {
        return Ok(matrix_exponential(s.matrix(), t)? * x);
    }
    let mut stepper = Stepper::new(s, cfg);
    let mut y: Vec<f64> = x.iter().copied().collect();
    match stepper.advance(&mut y, 0.0, t) {
        Ok(()) => Ok(DVector::from_vec(y)),
        Err(reason) => {
            let mut partial = Trajectory::default();
            partial.push(0.0, x.clone(), 0);
            if stepper.reached > 0.0 {
                partial.push(stepper.reached, DVector::from_vec(y), 0);
            }
            Err(Error::Integration(Box::new(IntegrationFailure { reason, partial })))
        }
    }
}

/// Record times: multiples of `record_dt`, every switch time and the horizon.
fn record_times(u: &SwitchingSignal, horizon: f64, record_dt: f64) -> Vec<f64> {
    let tol = 1e-10 * horizon.max(1.0);
    let mut exact: Vec<f64> = u.switch_times().iter().copied().filter(|&t| t < horizon).collect();
    exact.push(horizon);
    let n = (horizon / record_dt + 1e-9).floor() as usize;
    let mut all = exact.clone();
    for k in 0..=n {
        let t = k as f64 * record_dt;
        if t > horizon {
            break;
        }
        let near = exact
            .binary_search_by(|p| p.total_cmp(&t))
            .map(|_| true)
            .unwrap_or_else(|i| {
                (i > 0 && (t - exact[i - 1]).abs() <= tol) || (i < exact.len() && (exact[i] - t).abs() <= tol)
            });
        if !near {
            all.push(t);
        }
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// Integrates `ẋ = f_{u(t)}(x)` from `x0` over `[0, horizon]`, restarting at
/// every switching time and recording at multiples of `record_dt`, every
/// switching time and the horizon.
pub fn simulate_switched(
    sys: &SwitchedSystem,
    u: &SwitchingSignal,
    x0: &DVector<f64>,
    horizon: f64,
    cfg: &IntegratorConfig,
    record_dt: f64,
) -> Result<Trajectory> {
    Error::check_dim(sys.dimension(), x0.len())?;
    cfg.validate()?;
    if !(record_dt > 0.0) {
        return Err(Error::input("record_dt must be positive"));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::input("horizon must be finite and nonnegative"));
    }
    if horizon > u.horizon() * (1.0 + 1e-12) {
        return Err(Error::input(format!(
            "signal is defined up to {} but the horizon is {horizon}",
            u.horizon()
        )));
    }
    if let Some(&bad) = u.values().iter().find(|&&v| v == 0 || v > sys.len()) {
        return Err(Error::input(format!(
            "signal uses subsystem {bad} but the system has {}",
            sys.len()
        )));
    }

    let mut traj = Trajectory::default();
    traj.push(0.0, x0.clone(), u.value_at(0.0));
    if horizon == 0.0 {
        return Ok(traj);
    }

    let times = record_times(u, horizon, record_dt);
    let mut next_record = times.iter().position(|&t| t > 0.0).unwrap_or(times.len());
    let mut x: Vec<f64> = x0.iter().copied().collect();

    for (seg_start, seg_end, value) in u.segments() {
        if seg_start >= horizon {
            break;
        }
        let seg_end = seg_end.min(horizon);
        let field = sys.subsystem(value - 1);
        let exact = field.is_linear() && cfg.method == Method::ExactLinear;
        let mut stepper = Stepper::new(field, cfg);
        let mut cache: Option<(f64, DMatrix<f64>)> = None;
        let mut t = seg_start;
        while next_record < times.len() && times[next_record] <= seg_end {
            let target = times[next_record];
            if exact {
                let dt = target - t;
                let e = match &cache {
                    Some((cdt, e)) if *cdt == dt => e,
                    _ => {
                        cache = Some((dt, matrix_exponential(field.matrix(), dt)?));
                        &cache.as_ref().expect("just set").1
                    }
                };
                let y = e * DVector::from_column_slice(&x);
                x.copy_from_slice(y.as_slice());
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Integration(Box::new(IntegrationFailure {
                        reason: format!("nonfinite state at t = {target}"),
                        partial: traj,
                    })));
                }
            } else {
                if let Err(reason) = stepper.advance(&mut x, t, target) {
                    let mut partial = traj;
                    if stepper.reached > t {
                        partial.push(stepper.reached, DVector::from_vec(x), value);
                    }
                    return Err(Error::Integration(Box::new(IntegrationFailure {
                        reason: format!("{reason} (segment starting at t = {seg_start})"),
                        partial,
                    })));
                }
            }
            t = target;
            traj.push(target, DVector::from_column_slice(&x), u.value_at(target));
            next_record += 1;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn exponential_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_abs_diff_eq!(e[(0, 0)], (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e[(1, 1)], (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exponential_uses_every_pade_degree() {
        // Rotation generator: e^{tJ} is a rotation by t.
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        for t in [1e-3, 0.1, 0.4, 1.5, 3.0, 40.0] {
            let e = matrix_exponential(&j, t).unwrap();
            let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
            assert!((e - r).amax() < 1e-13 * t.max(1.0), "t = {t}");
        }
    }

    #[test]
    fn exponential_overflow_is_reported() {
        let a = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(matrix_exponential(&a, 1e300), Err(Error::Numerical(_))));
        assert!(matches!(matrix_exponential(&a, 1e3), Err(Error::Numerical(_))));
    }

    #[test]
    fn flow_at_zero_time_is_identity() {
        let s = catalog::cubic_damped(catalog::b1());
        let x = DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(flow(&s, 0.0, &x, &IntegratorConfig::default()).unwrap(), x);
    }

    #[test]
    fn scalar_decay() {
        let s = Subsystem::linear(-DMatrix::identity(2, 2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        for cfg in [
            IntegratorConfig::default(),
            IntegratorConfig::rk45(1e-12, 1e-12),
            IntegratorConfig::rk4(1e-3),
        ] {
            let y = flow(&s, 1.0, &x, &cfg).unwrap();
            assert_abs_diff_eq!(y[0], (-1f64).exp(), epsilon = 1e-9);
            assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn flow_rejects_negative_time() {
        let s = Subsystem::linear(catalog::b1()).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert!(flow(&s, -1.0, &x, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn blow_up_reports_partial_state() {
        // ẋ = x² escapes at t = 1 from x = 1.
        let s = Subsystem::polynomial(
            DMatrix::zeros(1, 1),
            vec![crate::dynamics::FieldTerm::new(0, 1.0, vec![2])],
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.0]);
        let mut cfg = IntegratorConfig::rk45(1e-10, 1e-9);
        cfg.max_steps = 10_000;
        match flow(&s, 2.0, &x, &cfg) {
            Err(Error::Integration(f)) => {
                let last = f.partial.final_state().unwrap();
                assert!(last[0].is_finite() && last[0] > 10.0);
            }
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn record_times_include_switches_and_horizon() {
        let u = SwitchingSignal::new(vec![0.0, 0.25, 1.0], vec![1, 2, 1], 2.0).unwrap();
        let ts = record_times(&u, 1.7, 0.5);
        assert_eq!(ts, vec![0.0, 0.25, 0.5, 1.0, 1.5, 1.7]);
    }
}
