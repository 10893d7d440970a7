//! Library results against independent reference computations written here.

use nalgebra::{DMatrix, DVector};
use switchrate::catalog;
use switchrate::dynamics::Subsystem;
use switchrate::integrate::{flow, matrix_exponential, simulate_switched, IntegratorConfig};
use switchrate::lyapunov::{
    check_linearization_lyapunov, estimate_rho, max_metric_quadratic, norm_equivalence_holds, LyapunovForm, Monomial,
    PolynomialForm,
};
use switchrate::rates::{compute_m, MSearch};
use switchrate::sampling::{sphere_directions, SamplingConfig};
use switchrate::signals::generate_periodic;

/// Order-30 Taylor polynomial of `e^{A/4}`, squared twice.
fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let s = a / 4.0;
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &s / k as f64;
        sum += &term;
    }
    let sq = &sum * &sum;
    &sq * &sq
}

#[test]
fn matrix_exponential_matches_taylor_oracle() {
    let mats = [
        catalog::b1(),
        catalog::b2(),
        DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -1.0, 0.5, 0.3, 0.0, -0.2]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
    ];
    for a in &mats {
        let norm = a.norm();
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            if norm * t > 5.0 {
                continue;
            }
            let got = matrix_exponential(a, t).unwrap();
            let want = taylor_expm(&(a * t));
            let err = (&got - &want).amax() / want.amax().max(1.0);
            assert!(err < 1e-12, "t = {t}, err = {err:e}\n{a}");
        }
    }
}

fn rk4(f: &Subsystem, x0: &DVector<f64>, t: f64, n: usize) -> DVector<f64> {
    let h = t / n as f64;
    let mut x = x0.clone();
    for _ in 0..n {
        let k1 = f.evaluate(&x).unwrap();
        let k2 = f.evaluate(&(&x + &k1 * (h / 2.0))).unwrap();
        let k3 = f.evaluate(&(&x + &k2 * (h / 2.0))).unwrap();
        let k4 = f.evaluate(&(&x + &k3 * h)).unwrap();
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

#[test]
fn cubic_flow_matches_richardson_oracle() {
    let f = catalog::cubic_damped(catalog::b1());
    let x0 = DVector::from_vec(vec![0.1, 0.0]);
    let coarse = rk4(&f, &x0, 1.0, 400);
    let fine = rk4(&f, &x0, 1.0, 800);
    let oracle = (&fine * 16.0 - &coarse) / 15.0;
    let got = flow(&f, 1.0, &x0, &IntegratorConfig::default()).unwrap();
    assert!((&got - &oracle).amax() < 1e-8, "{got} vs {oracle}");
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let sys = catalog::example_system();
    let u = generate_periodic(2, 1.0, 4.0).unwrap();
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let exact = simulate_switched(&sys, &u, &x0, 4.0, &IntegratorConfig::default(), 1.0).unwrap();
    let exact = exact.final_state().unwrap();
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| {
            let t = simulate_switched(&sys, &u, &x0, 4.0, &IntegratorConfig::rk4(h), 1.0).unwrap();
            (t.final_state().unwrap() - exact).norm()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 16.0).abs() <= 0.3 * 16.0, "ratio {ratio}, errors {errs:?}");
    }
}

/// Largest `σ` of a 2×2 matrix from the closed-form eigenvalues of `EᵀE`.
fn sigma_max_2x2(e: &DMatrix<f64>) -> f64 {
    let g = e.transpose() * e;
    let tr = g[(0, 0)] + g[(1, 1)];
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    ((tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0).sqrt()
}

#[test]
fn example_m_matches_svd_oracle() {
    let sys = catalog::example_system();
    for &delta in &[0.25, 1.0, 4.0] {
        let cert = compute_m(&sys, delta, &MSearch::ExactSvd).unwrap();
        let s1 = sigma_max_2x2(&taylor_expm(&(catalog::b1() * delta)));
        let s2 = sigma_max_2x2(&taylor_expm(&(catalog::b2() * delta)));
        assert!((cert.m - s1.max(s2)).abs() < 1e-12, "δ = {delta}");
        // B₂ = SB₁S⁻¹ with S = diag(1, −1), orthogonal.
        assert!((s1 - s2).abs() < 1e-12);
    }
}

#[test]
fn rho_matches_dense_scan_oracle() {
    // V = x² + x³ in one dimension: H = 2, ‖x‖_H = |x|.
    let v = LyapunovForm::Polynomial(
        PolynomialForm::new(1, vec![Monomial::new(1.0, vec![2]), Monomial::new(1.0, vec![3])]).unwrap(),
    );
    let holds = |x: f64| {
        let val = x * x + x * x * x;
        0.5 * x * x <= val && val <= 2.0 * x * x
    };
    let n = 2_000_000;
    let search = 2.0;
    let mut scan = search;
    for k in 1..=n {
        let s = search * k as f64 / n as f64;
        if !holds(s) || !holds(-s) {
            scan = search * (k - 1) as f64 / n as f64;
            break;
        }
    }
    assert!((scan - 0.5).abs() < 1e-5);
    let est = estimate_rho(&v, search, &SamplingConfig::new(64, 3)).unwrap();
    assert!(est.rho <= scan + 1e-12, "{} > {}", est.rho, scan);
    assert!(scan - est.rho < 1e-5, "{} vs {}", est.rho, scan);
}

#[test]
fn rho_revalidates_on_fresh_sample() {
    let v = catalog::cubic_damped_example().lyapunov().clone();
    let quartic = LyapunovForm::Polynomial(
        PolynomialForm::new(
            2,
            vec![
                Monomial::new(1.0, vec![2, 0]),
                Monomial::new(1.0, vec![0, 2]),
                Monomial::new(-0.1, vec![4, 0]),
                Monomial::new(-0.2, vec![2, 2]),
                Monomial::new(-0.1, vec![0, 4]),
            ],
        )
        .unwrap(),
    );
    for v in [v, quartic] {
        let est = estimate_rho(&v, 4.0, &SamplingConfig::new(512, 1)).unwrap();
        let fresh: Vec<DVector<f64>> = sphere_directions(2, 2000, 987_654)
            .iter()
            .map(|y| v.from_unit(y))
            .collect();
        assert!(norm_equivalence_holds(&v, est.rho, &fresh, 64));
    }
}

#[test]
fn linearization_check_matches_sampled_maximum() {
    let mats = [
        catalog::b1(),
        catalog::b2(),
        DMatrix::from_row_slice(2, 2, &[-0.3, 2.0, -1.0, -0.1]),
        DMatrix::from_row_slice(2, 2, &[0.2, 1.0, 0.0, -1.0]),
    ];
    let h = DMatrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 1.0]);
    // V = ½xᵀHx
    let v = LyapunovForm::Polynomial(
        PolynomialForm::new(
            2,
            vec![
                Monomial::new(h[(0, 0)] / 2.0, vec![2, 0]),
                Monomial::new(h[(0, 1)], vec![1, 1]),
                Monomial::new(h[(1, 1)] / 2.0, vec![0, 2]),
            ],
        )
        .unwrap(),
    );
    let g = &h * 0.5;
    let dirs = sphere_directions(2, 10_000, 5);
    for b in &mats {
        let exact = max_metric_quadratic(&v, b).unwrap();
        let sampled = dirs
            .iter()
            .map(|y| {
                let x = v.from_unit(y);
                (x.transpose() * &g * (b * &x))[(0, 0)]
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((exact - sampled).abs() < 1e-6, "{exact} vs {sampled}");
    }
    let sys = catalog::example_as_polynomial();
    assert!(check_linearization_lyapunov(&sys, 1e-10)
        .unwrap()
        .iter()
        .all(|r| r.holds));
}
