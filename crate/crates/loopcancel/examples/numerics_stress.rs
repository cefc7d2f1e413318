//! Randomized stress campaign over the Riccati, norm and synthesis stacks,
//! including hostile scalings far outside the relay's operating envelope.
//! Failures are honest rejections (residual or definiteness gates); every
//! accepted solution is re-checked for closed-loop stability.
//!
//!     cargo run --release --example numerics_stress

use loopcancel::lti::{dare_solve, hinf_norm_discrete, spectral_radius};
use loopcancel::sdh::{
    certify, hinf_synthesize, DiscreteGeneralizedPlant, REGULARIZATION_EPS, REGULARIZATION_RHO,
};
use loopcancel::validate::{random_stable_system, sweep_norm_oracle};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xABCDEF);

    // DARE campaign bucketed by open-loop spectral radius; the solution
    // magnitude (and with it the attainable residual) grows with it.
    let mut buckets: Vec<(f64, usize, usize)> =
        vec![(1.0, 0, 0), (10.0, 0, 0), (100.0, 0, 0), (f64::INFINITY, 0, 0)];
    for case in 0..600 {
        let n = 1 + case % 12;
        let m = 1 + case % 3;
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &c.transpose() * &c + DMatrix::identity(n, n) * 1e-9;
        let r = DMatrix::identity(m, m);
        let s = DMatrix::zeros(n, m);
        let rho = spectral_radius(&a).unwrap();
        let accepted = match dare_solve(&a, &b, &q, &r, &s) {
            Ok(sol) => {
                let closed = spectral_radius(&(&a - &b * &sol.gain)).unwrap();
                assert!(closed < 1.0, "case {case}: accepted non-stabilizing solution");
                assert!(sol.residual < 1e-8);
                true
            }
            Err(_) => false,
        };
        for bucket in buckets.iter_mut() {
            if rho <= bucket.0 {
                bucket.1 += 1;
                if !accepted {
                    bucket.2 += 1;
                }
                break;
            }
        }
    }
    println!("dare acceptance by open-loop spectral radius:");
    for (label, b) in ["<= 1", "<= 10", "<= 100", "> 100"].iter().zip(&buckets) {
        println!("  rho(A) {label:>6}: {:>3} cases, {:>3} rejected", b.1, b.2);
    }
    assert_eq!(buckets[0].2, 0, "well-posed problems must never be rejected");

    // Norm bisection against dense sweeps, including lightly damped poles.
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let rho_target = if case % 3 == 0 { 0.995 } else { 0.9 };
        let sys = random_stable_system(&mut rng, 1 + case % 8, 1 + case % 3, 1 + (case / 3) % 3, rho_target);
        let norm = hinf_norm_discrete(&sys, 1e-7).unwrap();
        let sweep = sweep_norm_oracle(&sys, 20_000);
        worst = worst.max((norm - sweep).abs() / sweep.max(1.0));
    }
    println!("norm vs 2e4-point sweeps over 100 systems: worst relative gap {worst:.3e}");
    assert!(worst < 1e-6);

    // Output-feedback synthesis with certification, nonzero D22 included.
    let mut failures = 0;
    for case in 0..100 {
        let n = 1 + case % 6;
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let sr = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        a *= rng.gen_range(0.2..0.95) / sr.max(1e-9);
        let plant = DiscreteGeneralizedPlant {
            a,
            b1: DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)),
            b2: DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)),
            c1: DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0)),
            c2: DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0)),
            d11: DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.5..0.5)),
            d12: DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0)),
            d21: DMatrix::from_fn(1, 2, |_, _| rng.gen_range(-1.0..1.0)),
            d22: DMatrix::from_fn(1, 1, |_, _| rng.gen_range(-0.3..0.3)),
            period: 1.0,
            n_fsfh: 1,
        }
        .regularize(REGULARIZATION_RHO, REGULARIZATION_EPS);
        match hinf_synthesize(&plant, 1e-3, 1e4, 1e-3) {
            Ok(ctrl) => {
                let cert = certify(&plant, &ctrl.system).unwrap();
                assert!(cert.stable && cert.norm <= ctrl.gamma * (1.0 + 1e-4));
            }
            Err(_) => failures += 1,
        }
    }
    println!("synthesis over 100 random plants: {failures} failures");
    assert_eq!(failures, 0);
    println!("all stress assertions held");
}
