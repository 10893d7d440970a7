//! The common weak Lyapunov function `V`, its norms and the sampled
//! hypothesis checks.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{monomial, monomial_partial, Subsystem, SwitchedSystem};
use crate::error::{Error, Result};
use crate::sampling::{sphere_directions, SamplingConfig};

/// `V(x) = xᵀ P x` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    p: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || !p.is_square() {
            return Err(Error::input("P must be a nonempty square matrix"));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("P has nonfinite entries"));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * p.amax().max(1.0) {
            return Err(Error::input(format!("P is not symmetric (max asymmetry {asym:e})")));
        }
        let chol = Cholesky::new(p.clone())
            .ok_or_else(|| Error::input("P is not positive definite"))?
            .unpack();
        Ok(QuadraticForm { p, chol })
    }

    pub fn identity(d: usize) -> Self {
        QuadraticForm::new(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Lower-triangular `L` with `P = L Lᵀ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn dimension(&self) -> usize {
        self.p.nrows()
    }
}

/// One monomial `coeff · x^exponents` of a polynomial Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Monomial { coeff, exponents }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// `V(x) = ½ xᵀ H x + higher order terms`, every term of degree ≥ 2 and
/// `H` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialForm {
    dimension: usize,
    terms: Vec<Monomial>,
    hessian: DMatrix<f64>,
    // Cholesky factor of ½H.
    chol: DMatrix<f64>,
}

impl PolynomialForm {
    pub fn new(dimension: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in terms {
            Error::check_dim(dimension, t.exponents.len())?;
            if t.degree() < 2 {
                return Err(Error::input(format!(
                    "Lyapunov term of degree {} (V must vanish to second order at 0)",
                    t.degree()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::input("nonfinite Lyapunov coefficient"));
            }
            *merged.entry(t.exponents).or_insert(0.0) += t.coeff;
        }
        let terms: Vec<Monomial> = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exponents, coeff)| Monomial { coeff, exponents })
            .collect();

        let mut hessian = DMatrix::zeros(dimension, dimension);
        for t in terms.iter().filter(|t| t.degree() == 2) {
            let idx: Vec<usize> = (0..dimension).filter(|&j| t.exponents[j] > 0).collect();
            match idx.as_slice() {
                [i] => hessian[(*i, *i)] += 2.0 * t.coeff,
                [i, j] => {
                    hessian[(*i, *j)] += t.coeff;
                    hessian[(*j, *i)] += t.coeff;
                }
                _ => unreachable!("degree-2 monomial touches one or two coordinates"),
            }
        }
        let chol = Cholesky::new(&hessian * 0.5)
            .ok_or_else(|| Error::input("Hessian of V at the origin is not positive definite"))?
            .unpack();
        Ok(PolynomialForm {
            dimension,
            terms,
            hessian,
            chol,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn hessian_at_origin(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn is_quadratic(&self) -> bool {
        self.terms.iter().all(|t| t.degree() == 2)
    }
}

/// The common Lyapunov function of a switched system.
#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovForm {
    Quadratic(QuadraticForm),
    Polynomial(PolynomialForm),
}

impl LyapunovForm {
    /// `V(x) = ‖x‖²` as a quadratic form.
    pub fn identity(d: usize) -> Self {
        LyapunovForm::Quadratic(QuadraticForm::identity(d))
    }

    pub fn dimension(&self) -> usize {
        match self {
            LyapunovForm::Quadratic(q) => q.dimension(),
            LyapunovForm::Polynomial(f) => f.dimension(),
        }
    }

    /// True when `V` is exactly a quadratic form.
    pub fn is_quadratic(&self) -> bool {
        match self {
            LyapunovForm::Quadratic(_) => true,
            LyapunovForm::Polynomial(f) => f.is_quadratic(),
        }
    }

    /// The matrix `G` of the associated norm `‖x‖² = xᵀ G x`: `P` for a
    /// quadratic form, `½H` for a polynomial one.
    pub fn metric(&self) -> DMatrix<f64> {
        match self {
            LyapunovForm::Quadratic(q) => q.p.clone(),
            LyapunovForm::Polynomial(f) => &f.hessian * 0.5,
        }
    }

    /// Lower-triangular `L` with `G = L Lᵀ`.
    pub fn metric_cholesky(&self) -> &DMatrix<f64> {
        match self {
            LyapunovForm::Quadratic(q) => &q.chol,
            LyapunovForm::Polynomial(f) => &f.chol,
        }
    }

    /// Hessian at the origin (`2P` for a quadratic form).
    pub fn hessian(&self) -> DMatrix<f64> {
        match self {
            LyapunovForm::Quadratic(q) => &q.p * 2.0,
            LyapunovForm::Polynomial(f) => f.hessian.clone(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LyapunovForm::Quadratic(q) => quad(&q.p, x),
            LyapunovForm::Polynomial(f) => f.terms.iter().map(|t| t.coeff * monomial(x, &t.exponents)).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            LyapunovForm::Quadratic(q) => (0..d)
                .map(|i| 2.0 * (0..d).map(|j| q.p[(i, j)] * x[j]).sum::<f64>())
                .collect(),
            LyapunovForm::Polynomial(f) => (0..d)
                .map(|k| {
                    f.terms
                        .iter()
                        .map(|t| t.coeff * monomial_partial(x, &t.exponents, k))
                        .sum()
                })
                .collect(),
        }
    }

    /// `‖x‖_P` or `‖x‖_H`, whichever applies.
    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            LyapunovForm::Quadratic(q) => quad(&q.p, x).max(0.0).sqrt(),
            LyapunovForm::Polynomial(f) => (0.5 * quad(&f.hessian, x)).max(0.0).sqrt(),
        }
    }

    /// Maps a Euclidean unit vector `y` to the point `x = L⁻ᵀ y` on the unit
    /// sphere of the associated norm.
    pub fn from_unit(&self, y: &DVector<f64>) -> DVector<f64> {
        self.metric_cholesky()
            .transpose()
            .solve_upper_triangular(y)
            .expect("Cholesky factor is nonsingular")
    }

    /// Inverse of [`LyapunovForm::from_unit`]: `y = Lᵀ x`.
    pub fn to_unit(&self, x: &DVector<f64>) -> DVector<f64> {
        self.metric_cholesky().transpose() * x
    }
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// `√(xᵀ P x)`
pub fn p_norm(q: &QuadraticForm, x: &DVector<f64>) -> Result<f64> {
    Error::check_dim(q.dimension(), x.len())?;
    Ok(quad(&q.p, x.as_slice()).max(0.0).sqrt())
}

/// `√(½ xᵀ H x)`
pub fn h_norm(f: &PolynomialForm, x: &DVector<f64>) -> Result<f64> {
    Error::check_dim(f.dimension(), x.len())?;
    Ok((0.5 * quad(&f.hessian, x.as_slice())).max(0.0).sqrt())
}

/// `L_f V(x) = ∇V(x) · f(x)`, evaluated analytically.
pub fn lie_derivative(v: &LyapunovForm, s: &Subsystem, x: &DVector<f64>) -> Result<f64> {
    Error::check_dim(v.dimension(), x.len())?;
    Error::check_dim(s.dimension(), x.len())?;
    Ok(lie_derivative_unchecked(v, s, x.as_slice()))
}

pub(crate) fn lie_derivative_unchecked(v: &LyapunovForm, s: &Subsystem, x: &[f64]) -> f64 {
    let mut fx = vec![0.0; x.len()];
    s.evaluate_into(x, &mut fx);
    v.gradient(x).iter().zip(&fx).map(|(g, f)| g * f).sum()
}

/// Sampled check of `L_{f_i} V ≤ tolerance` for one subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLyapunovReport {
    /// 1-based subsystem index.
    pub subsystem: usize,
    pub holds: bool,
    pub worst_point: Vec<f64>,
    pub worst_value: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub seed: u64,
}

/// Relative tolerance applied to `max V` on a sampled sphere when no
/// explicit tolerance is given.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-9;

fn weak_lyapunov_on_points(sys: &SwitchedSystem, points: &[(DVector<f64>, f64)], seed: u64) -> Vec<WeakLyapunovReport> {
    let v = sys.lyapunov();
    sys.subsystems()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let values: Vec<f64> = points
                .par_iter()
                .map(|(x, _)| lie_derivative_unchecked(v, s, x.as_slice()))
                .collect();
            let mut worst = 0usize;
            let mut holds = true;
            let mut tol_at_worst = 0.0;
            for (k, val) in values.iter().enumerate() {
                if !(*val <= points[k].1) {
                    holds = false;
                }
                if *val > values[worst] || k == 0 {
                    worst = k;
                    tol_at_worst = points[k].1;
                }
            }
            WeakLyapunovReport {
                subsystem: i + 1,
                holds,
                worst_point: points[worst].0.iter().copied().collect(),
                worst_value: values[worst],
                samples: points.len(),
                tolerance: tol_at_worst,
                seed,
            }
        })
        .collect()
}

/// Evaluates every `L_{f_i} V` on the sphere of the Lyapunov norm scaled to
/// each radius. With `tolerance = None` the allowance at a radius is
/// `1e-9 · max V` over that sphere.
pub fn check_weak_lyapunov(
    sys: &SwitchedSystem,
    sampling: &SamplingConfig,
    radii: &[f64],
    tolerance: Option<f64>,
) -> Vec<WeakLyapunovReport> {
    let v = sys.lyapunov();
    let dirs = sphere_directions(sys.dimension(), sampling.samples, sampling.seed);
    let mut points = Vec::with_capacity(dirs.len() * radii.len());
    for &r in radii {
        let shell: Vec<DVector<f64>> = dirs.iter().map(|y| v.from_unit(y) * r).collect();
        let tol = tolerance.unwrap_or_else(|| {
            let vmax = shell.iter().map(|x| v.value(x.as_slice())).fold(0.0, f64::max);
            DEFAULT_RELATIVE_TOLERANCE * vmax
        });
        points.extend(shell.into_iter().map(|x| (x, tol)));
    }
    weak_lyapunov_on_points(sys, &points, sampling.seed)
}

/// Largest `s` with `V(s·dir) ≤ level`, found by expansion and bisection
/// along the ray (`V` is assumed proper).
pub fn sublevel_radius(v: &LyapunovForm, dir: &DVector<f64>, level: f64) -> Result<f64> {
    if !(level > 0.0) {
        return Err(Error::input("sublevel must be positive"));
    }
    let at = |s: f64| v.value((dir * s).as_slice());
    let n = v.norm(dir.as_slice());
    let mut hi = if n > 0.0 { level.sqrt() / n } else { 1.0 };
    let mut lo = 0.0;
    let mut expansions = 0;
    while at(hi) <= level {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numerical(
                "sublevel set is unbounded along a sampled direction (V not proper?)".into(),
            ));
        }
    }
    if lo == 0.0 {
        // Shrink until inside; V(s·dir) ~ s² near 0.
        let mut s = hi;
        while at(s) > level {
            s *= 0.5;
            if s < 1e-300 {
                return Err(Error::Numerical("sublevel radius underflow".into()));
            }
        }
        lo = s;
        hi = 2.0 * s;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Sampled weak-Lyapunov check over the sublevel set `{V ≤ level}`: each
/// direction of the Lyapunov-norm sphere is sampled at `shells` equally
/// spaced fractions of its radial extent.
pub fn check_weak_lyapunov_in_sublevel(
    sys: &SwitchedSystem,
    sampling: &SamplingConfig,
    level: f64,
    shells: usize,
) -> Result<Vec<WeakLyapunovReport>> {
    let v = sys.lyapunov();
    let shells = shells.max(1);
    let dirs = sphere_directions(sys.dimension(), sampling.samples, sampling.seed);
    let mut points = Vec::with_capacity(dirs.len() * shells);
    for y in &dirs {
        let x1 = v.from_unit(y);
        let s_max = sublevel_radius(v, &x1, level)?;
        for k in 1..=shells {
            let x = &x1 * (s_max * k as f64 / shells as f64);
            let tol = DEFAULT_RELATIVE_TOLERANCE * v.value(x.as_slice()).abs();
            points.push((x, tol));
        }
    }
    Ok(weak_lyapunov_on_points(sys, &points, sampling.seed))
}

/// Exact maximum of `⟨x, B_i x⟩_G` on the unit sphere of the Lyapunov norm,
/// for the linearization `B_i` of each subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub subsystem: usize,
    pub holds: bool,
    pub max_value: f64,
    pub tolerance: f64,
}

pub const DEFAULT_LINEARIZATION_TOLERANCE: f64 = 1e-10;

/// `max_{‖x‖_G = 1} xᵀ G B x` as the top eigenvalue of `L⁻¹ sym(G B) L⁻ᵀ`.
pub fn max_metric_quadratic(v: &LyapunovForm, b: &DMatrix<f64>) -> Result<f64> {
    let g = v.metric();
    let gb = &g * b;
    let sym = (&gb + gb.transpose()) * 0.5;
    let l = v.metric_cholesky();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let k = &linv * sym * linv.transpose();
    let k = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(k, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.max())
}

pub fn check_linearization_lyapunov(sys: &SwitchedSystem, tolerance: f64) -> Result<Vec<LinearizationReport>> {
    sys.subsystems()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let max_value = max_metric_quadratic(sys.lyapunov(), s.jacobian_at_origin())?;
            Ok(LinearizationReport {
                subsystem: i + 1,
                holds: max_value <= tolerance,
                max_value,
                tolerance,
            })
        })
        .collect()
}

/// Radius bracket found by [`estimate_rho`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub rho: f64,
    pub search_radius: f64,
    pub samples: usize,
    pub seed: u64,
}

pub const RHO_BISECTION_ITERS: usize = 20;
pub const RHO_SHELLS: usize = 16;

/// True when `½‖x‖² ≤ V(x) ≤ 2‖x‖²` at every sampled point with `‖x‖ ≤ radius`
/// (norm of the Lyapunov metric).
pub fn norm_equivalence_holds(v: &LyapunovForm, radius: f64, dirs: &[DVector<f64>], shells: usize) -> bool {
    let unit: Vec<DVector<f64>> = dirs.iter().map(|y| v.from_unit(y)).collect();
    (1..=shells).all(|k| {
        let s = radius * k as f64 / shells as f64;
        let n2 = s * s;
        unit.par_iter().all(|x| {
            let val = v.value((x * s).as_slice());
            let slack = 1e-12 * n2;
            val >= 0.5 * n2 - slack && val <= 2.0 * n2 + slack
        })
    })
}

/// Largest `ρ ≤ search_radius` such that the two-sided comparison between
/// `V` and the squared Lyapunov norm holds on every sampled point of the
/// ball of radius `ρ`. Bisection, [`RHO_BISECTION_ITERS`] steps.
pub fn estimate_rho(v: &LyapunovForm, search_radius: f64, sampling: &SamplingConfig) -> Result<RhoEstimate> {
    if !(search_radius > 0.0) || !search_radius.is_finite() {
        return Err(Error::input("search radius must be positive and finite"));
    }
    let dirs = sphere_directions(v.dimension(), sampling.samples, sampling.seed);
    let ok = |r: f64| norm_equivalence_holds(v, r, &dirs, RHO_SHELLS);
    let rho = if ok(search_radius) {
        search_radius
    } else {
        let (mut lo, mut hi) = (0.0, search_radius);
        for _ in 0..RHO_BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if rho <= 0.0 {
        return Err(Error::certification(
            "rho",
            format!(
                "no radius above {:e} satisfies the norm comparison",
                search_radius * 0.5f64.powi(RHO_BISECTION_ITERS as i32)
            ),
        ));
    }
    Ok(RhoEstimate {
        rho,
        search_radius,
        samples: dirs.len(),
        seed: sampling.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn quadratic_form_validation() {
        assert!(QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        let q = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let l = q.cholesky_factor();
        assert!((l * l.transpose() - q.matrix()).amax() < 1e-14);
    }

    #[test]
    fn p_norm_examples() {
        let i = QuadraticForm::identity(2);
        assert_eq!(p_norm(&i, &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(p_norm(&i, &v(&[0.0, 0.0])).unwrap(), 0.0);
        let d = QuadraticForm::new(DMatrix::from_diagonal(&v(&[4.0, 1.0]))).unwrap();
        assert_abs_diff_eq!(p_norm(&d, &v(&[1.0, 1.0])).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
        assert!(p_norm(&d, &v(&[1.0])).is_err());
    }

    #[test]
    fn h_norm_examples() {
        let f = catalog::squared_norm_polynomial(2);
        assert_eq!(f.hessian_at_origin(), &(DMatrix::identity(2, 2) * 2.0));
        assert_eq!(h_norm(&f, &v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(h_norm(&f, &v(&[0.0, 0.0])).unwrap(), 0.0);
        let g = PolynomialForm::new(2, vec![Monomial::new(4.0, vec![2, 0]), Monomial::new(1.0, vec![0, 2])]).unwrap();
        assert_eq!(g.hessian_at_origin(), &DMatrix::from_diagonal(&v(&[8.0, 2.0])));
        assert_abs_diff_eq!(h_norm(&g, &v(&[1.0, 1.0])).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn polynomial_form_validation() {
        assert!(PolynomialForm::new(2, vec![Monomial::new(1.0, vec![1, 0])]).is_err());
        // Indefinite Hessian.
        assert!(PolynomialForm::new(2, vec![Monomial::new(1.0, vec![2, 0]), Monomial::new(-1.0, vec![0, 2])]).is_err());
        // Mixed term gives off-diagonal Hessian entries.
        let f = PolynomialForm::new(
            2,
            vec![
                Monomial::new(1.0, vec![2, 0]),
                Monomial::new(0.5, vec![1, 1]),
                Monomial::new(1.0, vec![0, 2]),
                Monomial::new(3.0, vec![2, 1]),
            ],
        )
        .unwrap();
        assert_eq!(
            f.hessian_at_origin(),
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0])
        );
        assert!(!f.is_quadratic());
    }

    #[test]
    fn polynomial_gradient_matches_finite_differences() {
        let f = LyapunovForm::Polynomial(
            PolynomialForm::new(
                2,
                vec![
                    Monomial::new(1.0, vec![2, 0]),
                    Monomial::new(0.3, vec![1, 1]),
                    Monomial::new(1.0, vec![0, 2]),
                    Monomial::new(-0.2, vec![3, 1]),
                ],
            )
            .unwrap(),
        );
        let x = [0.7, -0.4];
        let g = f.gradient(&x);
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let id = LyapunovForm::identity(2);
        let s = Subsystem::linear(catalog::b1()).unwrap();
        assert_abs_diff_eq!(lie_derivative(&id, &s, &v(&[1.0, 1.0])).unwrap(), -2.0, epsilon = 1e-15);
        assert_eq!(lie_derivative(&id, &s, &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(lie_derivative(&id, &s, &v(&[0.0, 0.0])).unwrap(), 0.0);
        let c = catalog::cubic_damped(catalog::b2());
        let pv = LyapunovForm::Polynomial(catalog::squared_norm_polynomial(2));
        assert_eq!(lie_derivative(&pv, &c, &v(&[0.0, 0.0])).unwrap(), 0.0);
        // 2xᵀBx - 2‖x‖⁴ at (1, 1): 2·(-1) - 2·4
        assert_abs_diff_eq!(
            lie_derivative(&pv, &c, &v(&[1.0, 1.0])).unwrap(),
            -10.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn weak_lyapunov_example_holds() {
        let sys = catalog::example_system();
        let reports = check_weak_lyapunov(&sys, &SamplingConfig::default(), &[0.5, 1.0, 2.0], None);
        assert_eq!(reports.len(), 2);
        for r in reports {
            assert!(r.holds);
            assert!(r.worst_value <= 1e-12);
        }
    }

    #[test]
    fn weak_lyapunov_detects_unstable_field() {
        let up = Subsystem::linear(DMatrix::identity(2, 2)).unwrap();
        let down = Subsystem::linear(-DMatrix::identity(2, 2)).unwrap();
        let sys = SwitchedSystem::new(vec![up, down], LyapunovForm::identity(2)).unwrap();
        let radii = [0.5, 1.5];
        let reports = check_weak_lyapunov(&sys, &SamplingConfig::new(64, 1), &radii, None);
        assert!(!reports[0].holds);
        assert_abs_diff_eq!(reports[0].worst_value, 2.0 * 1.5 * 1.5, epsilon = 1e-12);
        assert!(reports[1].holds);
        assert_abs_diff_eq!(reports[1].worst_value, -2.0 * 0.5 * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn linearization_checks() {
        let sys = catalog::example_system();
        for r in check_linearization_lyapunov(&sys, DEFAULT_LINEARIZATION_TOLERANCE).unwrap() {
            assert!(r.holds);
            assert_abs_diff_eq!(r.max_value, 0.0, epsilon = 1e-14);
        }
        let mk = |m: DMatrix<f64>| {
            SwitchedSystem::new(
                vec![Subsystem::linear(m).unwrap()],
                LyapunovForm::Polynomial(catalog::squared_norm_polynomial(2)),
            )
            .unwrap()
        };
        let up = check_linearization_lyapunov(&mk(DMatrix::identity(2, 2)), 1e-10).unwrap();
        assert!(!up[0].holds);
        assert_abs_diff_eq!(up[0].max_value, 1.0, epsilon = 1e-14);
        let down = check_linearization_lyapunov(&mk(-DMatrix::identity(2, 2)), 1e-10).unwrap();
        assert!(down[0].holds);
    }

    #[test]
    fn rho_of_quadratic_is_search_radius() {
        let v = LyapunovForm::Polynomial(catalog::squared_norm_polynomial(3));
        let est = estimate_rho(&v, 7.5, &SamplingConfig::new(256, 3)).unwrap();
        assert_eq!(est.rho, 7.5);
    }

    #[test]
    fn rho_of_quartic_correction() {
        // V = ‖x‖² - 0.1‖x‖⁴: ratio 1 - 0.1 r² stays ≥ ½ up to r = √5.
        let terms = vec![
            Monomial::new(1.0, vec![2, 0]),
            Monomial::new(1.0, vec![0, 2]),
            Monomial::new(-0.1, vec![4, 0]),
            Monomial::new(-0.2, vec![2, 2]),
            Monomial::new(-0.1, vec![0, 4]),
        ];
        let v = LyapunovForm::Polynomial(PolynomialForm::new(2, terms).unwrap());
        let est = estimate_rho(&v, 1.0, &SamplingConfig::new(512, 5)).unwrap();
        assert_eq!(est.rho, 1.0);
        let est = estimate_rho(&v, 4.0, &SamplingConfig::new(512, 5)).unwrap();
        assert!(est.rho <= 5f64.sqrt() && est.rho > 5f64.sqrt() - 4.0 * 2f64.powi(-19));
    }

    #[test]
    fn rho_rejects_bad_search_radius() {
        let v = LyapunovForm::identity(2);
        assert!(estimate_rho(&v, 0.0, &SamplingConfig::default()).is_err());
        assert!(estimate_rho(&v, f64::INFINITY, &SamplingConfig::default()).is_err());
    }

    #[test]
    fn sublevel_radius_of_squared_norm() {
        let v = LyapunovForm::identity(2);
        let s = sublevel_radius(&v, &v_unit(), 4.0).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
    }

    fn v_unit() -> DVector<f64> {
        DVector::from_row_slice(&[0.6, 0.8])
    }
}
