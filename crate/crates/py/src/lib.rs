//! Python bindings: systems, signals, simulation and both certificates.

use nalgebra::DVector;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use switchrate::integrate::{simulate_switched, IntegratorConfig};
use switchrate::rates::{self, MSearch, RateFunction};
use switchrate::signals::{self, DwellLaw};
use switchrate::{catalog, io, Error};

/// `(times, states, indices)`
type TrajectoryTuple = (Vec<f64>, Vec<Vec<f64>>, Vec<usize>);

create_exception!(pyswitchrate, CertificationError, PyException);
create_exception!(pyswitchrate, NumericalError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Certification { .. } => CertificationError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Integration(_) => NumericalError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for switchrate::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A switched system with its common Lyapunov function.
#[pyclass(name = "System", module = "pyswitchrate", frozen)]
pub struct PySystem {
    inner: switchrate::dynamics::SwitchedSystem,
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySystem {
            inner: io::parse_system(text).py_err()?,
        })
    }

    /// The built-in two-mode planar example with `V = ‖x‖²`.
    #[staticmethod]
    fn example() -> Self {
        PySystem {
            inner: catalog::example_system(),
        }
    }

    /// The example fields with cubic damping `−‖x‖²x` added.
    #[staticmethod]
    fn cubic_damped_example() -> Self {
        PySystem {
            inner: catalog::cubic_damped_example(),
        }
    }

    fn to_json(&self) -> String {
        io::system_to_json(&self.inner)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn lyapunov_value(&self, x: Vec<f64>) -> PyResult<f64> {
        check_dim(&self.inner, &x)?;
        Ok(self.inner.lyapunov().value(&x))
    }

    /// Returns `(times, states, indices)`.
    #[pyo3(signature = (signal, x0, horizon = None, record_dt = 0.01))]
    fn simulate(
        &self,
        py: Python<'_>,
        signal: &PySignal,
        x0: Vec<f64>,
        horizon: Option<f64>,
        record_dt: f64,
    ) -> PyResult<TrajectoryTuple> {
        check_dim(&self.inner, &x0)?;
        let horizon = horizon.unwrap_or(signal.inner.horizon());
        let x0 = DVector::from_vec(x0);
        let traj = py
            .detach(|| {
                simulate_switched(
                    &self.inner,
                    &signal.inner,
                    &x0,
                    horizon,
                    &IntegratorConfig::default(),
                    record_dt,
                )
            })
            .py_err()?;
        let states = traj.states.iter().map(|x| x.iter().copied().collect()).collect();
        Ok((traj.times, states, traj.indices))
    }

    fn __repr__(&self) -> String {
        format!(
            "System(dimension={}, subsystems={}, lyapunov={})",
            self.inner.dimension(),
            self.inner.len(),
            if self.inner.lyapunov().is_quadratic() {
                "quadratic"
            } else {
                "polynomial"
            }
        )
    }
}

fn check_dim(sys: &switchrate::dynamics::SwitchedSystem, x: &[f64]) -> PyResult<()> {
    if x.len() != sys.dimension() {
        return Err(PyValueError::new_err(format!(
            "expected a state of dimension {}, got {}",
            sys.dimension(),
            x.len()
        )));
    }
    Ok(())
}

/// Piecewise-constant, right-continuous switching signal with 1-based values.
#[pyclass(name = "Signal", module = "pyswitchrate", frozen)]
pub struct PySignal {
    inner: signals::SwitchingSignal,
}

#[pymethods]
impl PySignal {
    #[new]
    fn new(switch_times: Vec<f64>, values: Vec<usize>, horizon: f64) -> PyResult<Self> {
        Ok(PySignal {
            inner: signals::SwitchingSignal::new(switch_times, values, horizon).py_err()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySignal {
            inner: io::parse_signal_json(text).py_err()?,
        })
    }

    /// Random signal with every gap in `[δ, 3δ]`.
    #[staticmethod]
    fn dwell_time(seed: u64, subsystems: usize, delta: f64, horizon: f64) -> PyResult<Self> {
        Ok(PySignal {
            inner: signals::generate_dwell_time(seed, subsystems, delta, horizon, &DwellLaw::default()).py_err()?,
        })
    }

    #[staticmethod]
    fn periodic(subsystems: usize, period: f64, horizon: f64) -> PyResult<Self> {
        Ok(PySignal {
            inner: signals::generate_periodic(subsystems, period, horizon).py_err()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (subsystems, window, horizon, shrink = 0.5))]
    fn chaotic_like(subsystems: usize, window: f64, horizon: f64, shrink: f64) -> PyResult<Self> {
        Ok(PySignal {
            inner: signals::generate_chaotic_like(subsystems, window, horizon, shrink).py_err()?,
        })
    }

    fn to_json(&self) -> String {
        io::signal_to_json(&self.inner)
    }

    #[getter]
    fn switch_times(&self) -> Vec<f64> {
        self.inner.switch_times().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<usize> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn value_at(&self, t: f64) -> usize {
        self.inner.value_at(t)
    }

    fn has_dwell_time(&self, delta: f64) -> PyResult<bool> {
        Ok(signals::verify_dwell_time(&self.inner, delta).py_err()?.holds)
    }

    #[pyo3(signature = (delta, chatter_bound, window_grid = None))]
    fn has_average_dwell_time(&self, delta: f64, chatter_bound: u32, window_grid: Option<f64>) -> PyResult<bool> {
        Ok(
            signals::verify_average_dwell_time(&self.inner, delta, chatter_bound, window_grid)
                .py_err()?
                .holds,
        )
    }

    fn has_persistent_dwell_time(&self, delta: f64, period: f64) -> PyResult<bool> {
        Ok(signals::verify_persistent_dwell_time(&self.inner, delta, period)
            .py_err()?
            .holds)
    }

    fn __repr__(&self) -> String {
        format!(
            "Signal(switches={}, horizon={})",
            self.inner.num_switches(),
            self.inner.horizon()
        )
    }
}

/// `M(δ)` and the rate `β(r, t) = r·min{1, M^{(t/δ − 1)/2}}`.
#[pyclass(name = "HomogeneousCertificate", module = "pyswitchrate", frozen)]
pub struct PyHomogeneous {
    inner: rates::HomogeneousCertificate,
}

#[pymethods]
impl PyHomogeneous {
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter]
    fn per_subsystem_m(&self) -> Vec<f64> {
        self.inner.per_subsystem_m.clone()
    }

    #[getter]
    fn argmax_point(&self) -> Vec<f64> {
        self.inner.argmax_point.clone()
    }

    #[getter]
    fn argmax_subsystem(&self) -> usize {
        self.inner.argmax_subsystem
    }

    fn beta(&self, r: f64, t: f64) -> PyResult<f64> {
        Ok(RateFunction::new(self.inner.delta, self.inner.m).py_err()?.beta(r, t))
    }

    fn to_json(&self) -> PyResult<String> {
        io::to_report_json("homogeneous-certificate", &self.inner).py_err()
    }

    fn __repr__(&self) -> String {
        format!("HomogeneousCertificate(delta={}, m={})", self.inner.delta, self.inner.m)
    }
}

/// The two-region certificate `(m, m₁, ρ, r₁, r, m₂, α, γ)`.
#[pyclass(name = "NonlinearCertificate", module = "pyswitchrate", frozen, get_all)]
pub struct PyNonlinear {
    delta: f64,
    big_r: f64,
    m: f64,
    m1: f64,
    rho: f64,
    r1: f64,
    r: f64,
    m2: f64,
    alpha: f64,
    gamma: f64,
    json: String,
}

#[pymethods]
impl PyNonlinear {
    /// `min{1, α e^{−γt}}`
    fn bound_factor(&self, t: f64) -> f64 {
        (self.alpha * (-self.gamma * t).exp()).min(1.0)
    }

    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "NonlinearCertificate(delta={}, R={}, alpha={}, gamma={})",
            self.delta, self.big_r, self.alpha, self.gamma
        )
    }
}

#[pyfunction]
#[pyo3(signature = (system, delta, method = "exact", samples = 4096, seed = 42))]
fn compute_m(
    py: Python<'_>,
    system: &PySystem,
    delta: f64,
    method: &str,
    samples: usize,
    seed: u64,
) -> PyResult<PyHomogeneous> {
    let search = match method {
        "exact" => MSearch::ExactSvd,
        "sphere" => MSearch::SphereSearch {
            samples,
            refine_iters: switchrate::sampling::DEFAULT_REFINE_ITERS,
            seed,
        },
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let inner = py.detach(|| rates::compute_m(&system.inner, delta, &search)).py_err()?;
    Ok(PyHomogeneous { inner })
}

#[pyfunction]
#[pyo3(signature = (system, delta, big_r, samples = 1024, seed = 42))]
fn compute_nonlinear_certificate(
    py: Python<'_>,
    system: &PySystem,
    delta: f64,
    big_r: f64,
    samples: usize,
    seed: u64,
) -> PyResult<PyNonlinear> {
    let cfg = rates::NonlinearConfig {
        samples,
        seed,
        ..Default::default()
    };
    let c = py
        .detach(|| rates::compute_nonlinear_certificate(&system.inner, delta, big_r, &cfg))
        .py_err()?;
    Ok(PyNonlinear {
        delta: c.delta,
        big_r: c.big_r,
        m: c.m,
        m1: c.m1,
        rho: c.rho,
        r1: c.r1,
        r: c.r,
        m2: c.m2,
        alpha: c.alpha,
        gamma: c.gamma,
        json: io::to_report_json("nonlinear-certificate", &c).py_err()?,
    })
}

/// Monte-Carlo check of the homogeneous bound; returns `(violations, max_ratio)`.
#[pyfunction]
#[pyo3(signature = (system, certificate, trials = 1000, seed = 42))]
fn verify_homogeneous(
    py: Python<'_>,
    system: &PySystem,
    certificate: &PyHomogeneous,
    trials: usize,
    seed: u64,
) -> PyResult<(usize, f64)> {
    let cfg = rates::HomogeneousVerifyConfig {
        trials,
        seed,
        ..Default::default()
    };
    let r = py
        .detach(|| rates::verify_homogeneous_bound(&system.inner, &certificate.inner, &cfg))
        .py_err()?;
    Ok((r.violations, r.max_ratio))
}

/// `[(δ, M(δ))]` over the given grid.
#[pyfunction]
fn m_curve(py: Python<'_>, system: &PySystem, deltas: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    py.detach(|| rates::m_delta_curve(&system.inner, &deltas, &MSearch::ExactSvd))
        .py_err()
}

#[pymodule]
fn pyswitchrate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", switchrate::VERSION)?;
    m.add("CertificationError", m.py().get_type::<CertificationError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PySystem>()?;
    m.add_class::<PySignal>()?;
    m.add_class::<PyHomogeneous>()?;
    m.add_class::<PyNonlinear>()?;
    m.add_function(wrap_pyfunction!(compute_m, m)?)?;
    m.add_function(wrap_pyfunction!(compute_nonlinear_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_homogeneous, m)?)?;
    m.add_function(wrap_pyfunction!(m_curve, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certificate_round_trip_through_python_types() {
        Python::attach(|py| {
            let sys = PySystem::example();
            let cert = compute_m(py, &sys, 1.0, "exact", 0, 0).unwrap();
            assert!(cert.m() > 0.0 && cert.m() < 1.0);
            assert_eq!(cert.beta(1.0, 0.0).unwrap(), 1.0);
            let (violations, _) = verify_homogeneous(py, &sys, &cert, 20, 1).unwrap();
            assert_eq!(violations, 0);
        });
    }

    #[test]
    fn errors_map_to_python_exceptions() {
        Python::attach(|py| {
            let err = PySystem::from_json("{").err().unwrap();
            assert!(err.is_instance_of::<PyValueError>(py));
            let sys = PySystem::example();
            assert!(compute_m(py, &sys, 1.0, "bogus", 0, 0).is_err());
            let bad = PySystem::from_json(
                r#"{"dimension": 1, "subsystems": [{"type": "linear", "matrix": [[1]]}],
                    "lyapunov": {"type": "quadratic", "P": [[1]]}}"#,
            )
            .unwrap();
            let err = compute_m(py, &bad, 1.0, "exact", 0, 0).err().unwrap();
            assert!(err.is_instance_of::<CertificationError>(py));
        });
    }
}
