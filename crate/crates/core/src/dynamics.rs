//! Vector fields of the switched family, their linearizations and spectral
//! (Hurwitz) tests.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Schur};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lyapunov::LyapunovForm;

/// Evaluates `Π x_j^{e_j}`.
pub(crate) fn monomial(x: &[f64], exponents: &[u32]) -> f64 {
    x.iter()
        .zip(exponents)
        .filter(|(_, &e)| e > 0)
        .map(|(&xi, &e)| xi.powi(e as i32))
        .product()
}

/// Partial derivative of `Π x_j^{e_j}` with respect to `x_k`.
pub(crate) fn monomial_partial(x: &[f64], exponents: &[u32], k: usize) -> f64 {
    let ek = exponents[k];
    if ek == 0 {
        return 0.0;
    }
    let mut acc = ek as f64;
    for (j, (&xj, &e)) in x.iter().zip(exponents).enumerate() {
        let e = if j == k { e - 1 } else { e };
        if e > 0 {
            acc *= xj.powi(e as i32);
        }
    }
    acc
}

/// One monomial contribution `coeff · x^exponents` to coordinate `target`
/// of a polynomial vector field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldTerm {
    pub target: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl FieldTerm {
    pub fn new(target: usize, coeff: f64, exponents: Vec<u32>) -> Self {
        FieldTerm {
            target,
            coeff,
            exponents,
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsystemKind {
    Linear,
    Polynomial,
}

/// A vector field `f(x) = A x + Σ terms`.
///
/// For the linear kind `matrix` is the field itself. For the polynomial kind
/// it is the linearization at the origin and every term has total degree at
/// least two, so `f(0) = 0` and `Df(0) = matrix` hold by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    kind: SubsystemKind,
    matrix: DMatrix<f64>,
    terms: Vec<FieldTerm>,
}

impl Subsystem {
    pub fn linear(matrix: DMatrix<f64>) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(matrix.as_slice())?;
        Ok(Subsystem {
            kind: SubsystemKind::Linear,
            matrix,
            terms: Vec::new(),
        })
    }

    /// Builds a polynomial field. Terms sharing target and exponent vector
    /// are merged; terms that cancel to zero are dropped.
    pub fn polynomial(matrix: DMatrix<f64>, terms: Vec<FieldTerm>) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(matrix.as_slice())?;
        let d = matrix.nrows();
        let mut merged: BTreeMap<(usize, Vec<u32>), f64> = BTreeMap::new();
        for term in terms {
            if term.target >= d {
                return Err(Error::input(format!(
                    "term target {} out of range for dimension {d}",
                    term.target
                )));
            }
            Error::check_dim(d, term.exponents.len())?;
            if term.degree() < 2 {
                return Err(Error::input(format!(
                    "polynomial term of degree {} (linear part belongs in the matrix)",
                    term.degree()
                )));
            }
            if !term.coeff.is_finite() {
                return Err(Error::input("nonfinite term coefficient"));
            }
            *merged.entry((term.target, term.exponents)).or_insert(0.0) += term.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((target, exponents), coeff)| FieldTerm {
                target,
                coeff,
                exponents,
            })
            .collect();
        Ok(Subsystem {
            kind: SubsystemKind::Polynomial,
            matrix,
            terms,
        })
    }

    pub fn kind(&self) -> SubsystemKind {
        self.kind
    }

    pub fn is_linear(&self) -> bool {
        self.kind == SubsystemKind::Linear
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn terms(&self) -> &[FieldTerm] {
        &self.terms
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Error::check_dim(self.dimension(), x.len())?;
        let mut out = DVector::zeros(x.len());
        self.evaluate_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Unchecked evaluation into a caller-provided buffer.
    pub(crate) fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x.iter().enumerate().map(|(j, xj)| self.matrix[(i, j)] * xj).sum();
        }
        for term in &self.terms {
            out[term.target] += term.coeff * monomial(x, &term.exponents);
        }
    }

    /// The linearization at the origin.
    pub fn jacobian_at_origin(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Central finite-difference Jacobian of [`Subsystem::evaluate`] at 0.
    pub fn finite_difference_jacobian(&self, step: f64) -> DMatrix<f64> {
        let d = self.dimension();
        let mut jac = DMatrix::zeros(d, d);
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = step;
            self.evaluate_into(&e, &mut plus);
            e[j] = -step;
            self.evaluate_into(&e, &mut minus);
            e[j] = 0.0;
            for i in 0..d {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        jac
    }

    /// Compares the stored linearization against finite differences.
    pub fn validate_jacobian(&self, step: f64) -> JacobianCheck {
        let fd = self.finite_difference_jacobian(step);
        let max_deviation = (&fd - &self.matrix).amax();
        JacobianCheck {
            matrix: self.matrix.clone(),
            finite_difference: fd,
            max_deviation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JacobianCheck {
    pub matrix: DMatrix<f64>,
    pub finite_difference: DMatrix<f64>,
    pub max_deviation: f64,
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::input("empty matrix"));
    }
    if !m.is_square() {
        return Err(Error::input(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input("nonfinite matrix entry"))
    }
}

/// Outcome of a Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    pub spectral_abscissa: f64,
}

/// Largest real part among the eigenvalues of `a` (real Schur form via
/// Hessenberg reduction and shifted QR).
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    check_square(a)?;
    check_finite(a.as_slice())?;
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10)).ok_or_else(|| {
        Error::Numerical(format!(
            "Schur iteration did not converge for {n}x{n} matrix (max |a_ij| = {:e})",
            a.amax()
        ))
    })?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// True iff every eigenvalue has real part `< -margin`.
pub fn is_hurwitz(a: &DMatrix<f64>, margin: f64) -> Result<HurwitzReport> {
    if !(margin >= 0.0) {
        return Err(Error::input("Hurwitz margin must be nonnegative"));
    }
    let spectral_abscissa = spectral_abscissa(a)?;
    Ok(HurwitzReport {
        hurwitz: spectral_abscissa < -margin,
        spectral_abscissa,
    })
}

/// A finite family of subsystems sharing a dimension, together with the
/// common Lyapunov function. Subsystem indices are 1-based in reports and
/// signals, 0-based in this API.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    subsystems: Vec<Subsystem>,
    lyapunov: LyapunovForm,
}

impl SwitchedSystem {
    pub fn new(subsystems: Vec<Subsystem>, lyapunov: LyapunovForm) -> Result<Self> {
        let first = subsystems
            .first()
            .ok_or_else(|| Error::input("switched system needs at least one subsystem"))?;
        let d = first.dimension();
        for s in &subsystems {
            Error::check_dim(d, s.dimension())?;
        }
        Error::check_dim(d, lyapunov.dimension())?;
        Ok(SwitchedSystem { subsystems, lyapunov })
    }

    pub fn dimension(&self) -> usize {
        self.subsystems[0].dimension()
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    /// 0-based access.
    pub fn subsystem(&self, index: usize) -> &Subsystem {
        &self.subsystems[index]
    }

    pub fn lyapunov(&self) -> &LyapunovForm {
        &self.lyapunov
    }

    pub fn all_linear(&self) -> bool {
        self.subsystems.iter().all(Subsystem::is_linear)
    }
}

/// Pointwise convex combination `Σ v_i f_i`.
pub fn convex_combination(sys: &SwitchedSystem, weights: &[f64]) -> Result<Subsystem> {
    Error::check_dim(sys.len(), weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::input("convex weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 * weights.len() as f64 {
        return Err(Error::input(format!("convex weights sum to {total}, not 1")));
    }
    let d = sys.dimension();
    let mut matrix = DMatrix::zeros(d, d);
    let mut terms = Vec::new();
    for (s, &w) in sys.subsystems().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        matrix += s.matrix() * w;
        terms.extend(s.terms().iter().map(|t| FieldTerm {
            coeff: t.coeff * w,
            ..t.clone()
        }));
    }
    if sys.all_linear() {
        Subsystem::linear(matrix)
    } else {
        Subsystem::polynomial(matrix, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    #[test]
    fn evaluate_linear_example() {
        let s = Subsystem::linear(catalog::b1()).unwrap();
        let y = s.evaluate(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn evaluate_cubic_damping() {
        let s = catalog::cubic_damped(catalog::b1());
        let y = s.evaluate(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0]);
        let z = s.evaluate(&DVector::zeros(2)).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn evaluate_rejects_wrong_dimension() {
        let s = Subsystem::linear(catalog::b1()).unwrap();
        assert!(matches!(
            s.evaluate(&DVector::zeros(3)),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn polynomial_rejects_low_degree_terms() {
        let t = FieldTerm::new(0, 1.0, vec![1, 0]);
        assert!(Subsystem::polynomial(catalog::b1(), vec![t]).is_err());
    }

    #[test]
    fn polynomial_merges_duplicates() {
        let terms = vec![
            FieldTerm::new(0, 1.0, vec![2, 0]),
            FieldTerm::new(0, 2.0, vec![2, 0]),
            FieldTerm::new(1, 1.0, vec![0, 2]),
            FieldTerm::new(1, -1.0, vec![0, 2]),
        ];
        let s = Subsystem::polynomial(catalog::b1(), terms).unwrap();
        assert_eq!(s.terms(), &[FieldTerm::new(0, 3.0, vec![2, 0])]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = catalog::cubic_damped(catalog::b1());
        assert_eq!(s.jacobian_at_origin(), &catalog::b1());
        let check = s.validate_jacobian(1e-4);
        assert!(check.max_deviation < 1e-6, "{}", check.max_deviation);
    }

    #[test]
    fn hurwitz_examples() {
        let r = is_hurwitz(&catalog::b1(), 0.0).unwrap();
        assert!(r.hurwitz);
        assert_abs_diff_eq!(r.spectral_abscissa, -0.5, epsilon = 1e-12);

        let avg = (catalog::b1() + catalog::b2()) * 0.5;
        let r = is_hurwitz(&avg, 0.0).unwrap();
        assert!(!r.hurwitz);
        assert_eq!(r.spectral_abscissa, 0.0);

        let r = is_hurwitz(&DMatrix::zeros(3, 3), 0.0).unwrap();
        assert!(!r.hurwitz);
        assert_eq!(r.spectral_abscissa, 0.0);
    }

    #[test]
    fn hurwitz_margin() {
        assert!(is_hurwitz(&catalog::b1(), 0.4).unwrap().hurwitz);
        assert!(!is_hurwitz(&catalog::b1(), 0.5).unwrap().hurwitz);
        assert!(is_hurwitz(&catalog::b1(), -1.0).is_err());
    }

    #[test]
    fn convex_combination_examples() {
        let sys = catalog::example_system();
        let half = convex_combination(&sys, &[0.5, 0.5]).unwrap();
        assert!(half.is_linear());
        assert_eq!(half.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]));
        let first = convex_combination(&sys, &[1.0, 0.0]).unwrap();
        assert_eq!(&first, sys.subsystem(0));

        assert!(convex_combination(&sys, &[0.7, 0.7]).is_err());
        assert!(convex_combination(&sys, &[1.5, -0.5]).is_err());
        assert!(convex_combination(&sys, &[1.0]).is_err());
    }

    #[test]
    fn convex_combination_of_identical_polynomials() {
        let s = catalog::cubic_damped(catalog::b1());
        let sys = SwitchedSystem::new(vec![s.clone(), s.clone()], crate::lyapunov::LyapunovForm::identity(2)).unwrap();
        let c = convex_combination(&sys, &[0.5, 0.5]).unwrap();
        assert_eq!(c, s);
    }

    #[test]
    fn system_requires_consistent_dimensions() {
        let a = Subsystem::linear(catalog::b1()).unwrap();
        let b = Subsystem::linear(DMatrix::identity(3, 3)).unwrap();
        let v = crate::lyapunov::LyapunovForm::identity(2);
        assert!(SwitchedSystem::new(vec![a.clone(), b], v.clone()).is_err());
        assert!(SwitchedSystem::new(vec![], v.clone()).is_err());
        assert!(SwitchedSystem::new(vec![a], crate::lyapunov::LyapunovForm::identity(3)).is_err());
    }
}
