//! Constant-tail extensions of a fixed signal: each one converges, but the
//! time needed to halve the state grows with the tail start.

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{Subsystem, SwitchedSystem};
use crate::error::{Error, Result};
use crate::integrate::{flow, simulate_switched, IntegratorConfig};
use crate::lyapunov::LyapunovForm;
use crate::signals::SwitchingSignal;

const BISECTION_ITERS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowDemoConfig {
    /// Spacing of the crossing search before bisection.
    pub record_dt: f64,
    /// Longest tail searched after the tail start.
    pub max_tail: f64,
    /// Index (1-based) held on the tail.
    pub tail_index: usize,
    pub integrator: IntegratorConfig,
}

impl Default for SlowDemoConfig {
    fn default() -> Self {
        SlowDemoConfig {
            record_dt: 1e-2,
            max_tail: 1e3,
            tail_index: 1,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowRow {
    pub tail_start: f64,
    /// First `t` with `‖x(t)‖ ≤ ½‖x0‖`; `None` if not reached within the tail.
    pub time_to_half: Option<f64>,
}

/// First time in `(t0, t0 + Δ]` at which the norm along `f` drops to
/// `target`, given `‖x(t0)‖ > target` and `‖x(t0 + Δ)‖ ≤ target`.
fn bisect_crossing(
    v: &LyapunovForm,
    f: &Subsystem,
    x: &DVector<f64>,
    t0: f64,
    dt: f64,
    target: f64,
    integ: &IntegratorConfig,
) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, dt);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if v.norm(flow(f, mid, x, integ)?.as_slice()) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(t0 + hi)
}

fn time_to_half(
    sys: &SwitchedSystem,
    u: &SwitchingSignal,
    x0: &DVector<f64>,
    tail_start: f64,
    cfg: &SlowDemoConfig,
) -> Result<Option<f64>> {
    let v = sys.lyapunov();
    let target = 0.5 * v.norm(x0.as_slice());
    if target == 0.0 {
        return Ok(Some(0.0));
    }
    let mut x = x0.clone();
    if tail_start > 0.0 {
        let traj = simulate_switched(sys, u, x0, tail_start, &cfg.integrator, cfg.record_dt)?;
        for k in 1..traj.len() {
            if v.norm(traj.states[k].as_slice()) <= target {
                let f = sys.subsystem(traj.indices[k - 1] - 1);
                let dt = traj.times[k] - traj.times[k - 1];
                let t = bisect_crossing(
                    v,
                    f,
                    &traj.states[k - 1],
                    traj.times[k - 1],
                    dt,
                    target,
                    &cfg.integrator,
                )?;
                return Ok(Some(t));
            }
        }
        x = traj.final_state().cloned().unwrap_or(x);
    }
    let f = sys.subsystem(cfg.tail_index - 1);
    let steps = (cfg.max_tail / cfg.record_dt).ceil() as usize;
    for k in 0..steps {
        let t = tail_start + k as f64 * cfg.record_dt;
        let next = flow(f, cfg.record_dt, &x, &cfg.integrator)?;
        if v.norm(next.as_slice()) <= target {
            return bisect_crossing(v, f, &x, t, cfg.record_dt, target, &cfg.integrator).map(Some);
        }
        x = next;
    }
    Ok(None)
}

/// For each `T`, the time to halve `‖x0‖` under `u` on `[0, T)` followed by
/// the constant tail `cfg.tail_index`.
pub fn slow_convergence_demo(
    sys: &SwitchedSystem,
    u: &SwitchingSignal,
    x0: &DVector<f64>,
    t_grid: &[f64],
    cfg: &SlowDemoConfig,
) -> Result<Vec<SlowRow>> {
    Error::check_dim(sys.dimension(), x0.len())?;
    if !(cfg.record_dt > 0.0) || !(cfg.max_tail > 0.0) {
        return Err(Error::input("record_dt and max_tail must be positive"));
    }
    if cfg.tail_index == 0 || cfg.tail_index > sys.len() {
        return Err(Error::input(format!("tail index {} out of range", cfg.tail_index)));
    }
    if u.max_index() > sys.len() {
        return Err(Error::input("signal references a missing subsystem"));
    }
    t_grid
        .iter()
        .map(|&t| {
            if !(t >= 0.0) || t > u.horizon() {
                return Err(Error::input(format!("tail start {t} outside [0, {}]", u.horizon())));
            }
            Ok(SlowRow {
                tail_start: t,
                time_to_half: time_to_half(sys, u, x0, t, cfg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::signals::generate_periodic;
    use approx::assert_relative_eq;

    #[test]
    fn zero_tail_start_is_pure_first_subsystem() {
        let sys = catalog::negative_identity(2);
        let u = generate_periodic(1, 1.0, 5.0).unwrap();
        let rows = slow_convergence_demo(
            &sys,
            &u,
            &DVector::from_vec(vec![1.0, 0.0]),
            &[0.0],
            &SlowDemoConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(rows[0].time_to_half.unwrap(), 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn fast_alternation_delays_halving() {
        let sys = catalog::example_system();
        let u = generate_periodic(2, 0.01, 5.0).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let rows = slow_convergence_demo(&sys, &u, &x0, &[0.0, 1.0, 5.0], &SlowDemoConfig::default()).unwrap();
        let t: Vec<f64> = rows.iter().map(|r| r.time_to_half.unwrap()).collect();
        assert!(t[0] < t[1] && t[1] < t[2], "{t:?}");
        assert!(t[2] > 5.0);
    }

    #[test]
    fn zero_state_halves_immediately() {
        let sys = catalog::example_system();
        let u = SwitchingSignal::constant(1, 1.0).unwrap();
        let rows = slow_convergence_demo(&sys, &u, &DVector::zeros(2), &[0.5], &SlowDemoConfig::default()).unwrap();
        assert_eq!(rows[0].time_to_half, Some(0.0));
    }

    #[test]
    fn rejects_out_of_range_tail() {
        let sys = catalog::example_system();
        let u = SwitchingSignal::constant(1, 1.0).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        assert!(slow_convergence_demo(&sys, &u, &x0, &[2.0], &SlowDemoConfig::default()).is_err());
    }
}
