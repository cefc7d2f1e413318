//! Property tests for the state-space core: discretization against a
//! Runge-Kutta oracle, norm bisection against dense sweeps, Riccati
//! residuals and spectral-radius identities.

use loopcancel::lti::{
    c2d_zoh, dare_solve, hinf_norm_discrete, spectral_radius, ContinuousStateSpace,
    FeedbackSign,
};
use loopcancel::validate::{random_stable_system, sweep_norm_oracle};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stable_continuous(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> ContinuousStateSpace {
    // Shift a random matrix left so the spectral abscissa is negative.
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let shift = a.norm() + rng.gen_range(0.2..1.0);
    a -= DMatrix::identity(n, n) * shift;
    let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
    let d = DMatrix::from_fn(p, m, |_, _| rng.gen_range(-0.5..0.5));
    ContinuousStateSpace::new(a, b, c, d).unwrap()
}

/// Classic fixed-step RK4 on dx = Ax + Bu with constant u.
fn rk4_step_response(
    sys: &ContinuousStateSpace,
    u: &DVector<f64>,
    t_end: f64,
    substeps: usize,
) -> DVector<f64> {
    let n = sys.n_states();
    let mut x = DVector::zeros(n);
    let dt = t_end / substeps as f64;
    let f = |x: &DVector<f64>| &sys.a * x + &sys.b * u;
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

#[test]
fn c2d_matches_runge_kutta_step_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..100 {
        let n = 1 + case % 6;
        let sys = random_stable_continuous(&mut rng, n, 1, 1);
        let h = rng.gen_range(0.05..0.8);
        let disc = c2d_zoh(&sys, h).unwrap();
        let u = DVector::from_element(1, 1.0);
        // March the discrete model k steps and compare with the ODE.
        let mut xd = DVector::zeros(n);
        for k in 1..=4usize {
            xd = &disc.a * xd + &disc.b * &u;
            let xc = rk4_step_response(&sys, &u, h * k as f64, 4000 * k);
            let err = (&xd - &xc).norm() / xc.norm().max(1.0);
            assert!(err < 1e-8, "case {case} step {k}: err {err:.2e}");
        }
    }
}

#[test]
fn feedback_with_zero_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..10 {
        let sys = random_stable_continuous(&mut rng, 3, 2, 2);
        let zero = ContinuousStateSpace::static_gain(DMatrix::zeros(2, 2));
        let fb = sys.feedback(&zero, FeedbackSign::Negative).unwrap();
        assert_eq!(fb.a, sys.a);
        assert_eq!(fb.b, sys.b);
        assert_eq!(fb.c, sys.c);
        assert_eq!(fb.d, sys.d);
    }
}

#[test]
fn hinf_norm_brackets_frequency_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let tol = 1e-6;
    for case in 0..50 {
        let sys = random_stable_system(&mut rng, 1 + case % 5, 1 + case % 2, 1 + case % 3, 0.85);
        let norm = hinf_norm_discrete(&sys, tol).unwrap();
        let sweep = sweep_norm_oracle(&sys, 4096);
        assert!(
            norm >= sweep - tol * sweep.max(1.0),
            "case {case}: norm {norm} under sweep {sweep}"
        );
        assert!(
            norm <= sweep + 1e-4 * sweep.max(1.0),
            "case {case}: norm {norm} far above sweep {sweep}"
        );
    }
}

#[test]
fn dare_residual_and_stability_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for case in 0..20 {
        let n = 1 + case % 5;
        let m = 1 + case % 2;
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &c.transpose() * &c + DMatrix::identity(n, n) * 1e-6;
        let r = DMatrix::identity(m, m);
        let s = DMatrix::zeros(n, m);
        let sol = dare_solve(&a, &b, &q, &r, &s).unwrap();
        assert!(sol.residual < 1e-8, "case {case}: residual {}", sol.residual);
        let closed = &a - &b * &sol.gain;
        let rho = spectral_radius(&closed).unwrap();
        assert!(rho < 1.0, "case {case}: closed-loop radius {rho}");
        // Returned solution is symmetric PSD.
        assert!((&sol.x - sol.x.transpose()).norm() <= 1e-10 * sol.x.norm().max(1.0));
    }
}

#[test]
fn spectral_radius_of_random_orthogonal_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..50 {
        let n = 2 + rng.gen_range(0..5);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = m.qr().q();
        let rho = spectral_radius(&q).unwrap();
        assert!((rho - 1.0).abs() < 1e-12, "radius {rho}");
    }
}
