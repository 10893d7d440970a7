//! Ready-made systems used by the CLI `example` command, the tests and the
//! Python smoke test.

use nalgebra::DMatrix;

use crate::dynamics::{FieldTerm, Subsystem, SwitchedSystem};
use crate::lyapunov::{LyapunovForm, Monomial, PolynomialForm};

/// `[[0, -1], [1, -1]]`
pub fn b1() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, -1.0])
}

/// `[[0, 1], [-1, -1]]`
pub fn b2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0])
}

/// Two Hurwitz matrices sharing `V(x) = ‖x‖²` as a weak (not strict)
/// Lyapunov function, whose average `diag(0, -1)` is not Hurwitz. Stable
/// under dwell-time switching, not under arbitrary switching.
pub fn example_system() -> SwitchedSystem {
    SwitchedSystem::new(
        vec![
            Subsystem::linear(b1()).expect("valid matrix"),
            Subsystem::linear(b2()).expect("valid matrix"),
        ],
        LyapunovForm::identity(2),
    )
    .expect("consistent dimensions")
}

/// Terms of `-‖x‖² x` in dimension `d`.
pub fn cubic_damping_terms(d: usize) -> Vec<FieldTerm> {
    let mut terms = Vec::with_capacity(d * d);
    for target in 0..d {
        for j in 0..d {
            let mut exponents = vec![0u32; d];
            exponents[j] += 2;
            exponents[target] += 1;
            terms.push(FieldTerm::new(target, -1.0, exponents));
        }
    }
    terms
}

/// `f(x) = A x - ‖x‖² x`
pub fn cubic_damped(matrix: DMatrix<f64>) -> Subsystem {
    let d = matrix.nrows();
    Subsystem::polynomial(matrix, cubic_damping_terms(d)).expect("valid polynomial field")
}

/// `V(x) = ‖x‖²` as a polynomial form (Hessian `2I`).
pub fn squared_norm_polynomial(d: usize) -> PolynomialForm {
    let terms = (0..d)
        .map(|j| {
            let mut e = vec![0u32; d];
            e[j] = 2;
            Monomial::new(1.0, e)
        })
        .collect();
    PolynomialForm::new(d, terms).expect("positive definite")
}

/// `f_i(x) = B_i x - ‖x‖² x` for the two example matrices, `V(x) = ‖x‖²`.
pub fn cubic_damped_example() -> SwitchedSystem {
    SwitchedSystem::new(
        vec![cubic_damped(b1()), cubic_damped(b2())],
        LyapunovForm::Polynomial(squared_norm_polynomial(2)),
    )
    .expect("consistent dimensions")
}

/// The example matrices as polynomial fields with no higher-order terms.
pub fn example_as_polynomial() -> SwitchedSystem {
    SwitchedSystem::new(
        vec![
            Subsystem::polynomial(b1(), Vec::new()).expect("valid"),
            Subsystem::polynomial(b2(), Vec::new()).expect("valid"),
        ],
        LyapunovForm::Polynomial(squared_norm_polynomial(2)),
    )
    .expect("consistent dimensions")
}

/// `ẋ = -x` in dimension `d` with `V = ‖x‖²` (quadratic form).
pub fn negative_identity(d: usize) -> SwitchedSystem {
    SwitchedSystem::new(
        vec![Subsystem::linear(-DMatrix::identity(d, d)).expect("valid")],
        LyapunovForm::identity(d),
    )
    .expect("consistent dimensions")
}
