//! Lifting exactness against a time-domain oracle, synthesis soundness on
//! random plants, the gamma-grid optimality cross-check and the FSFH
//! refinement study.

use loopcancel::lti::{c2d_zoh, ContinuousStateSpace, DiscreteStateSpace};
use loopcancel::relay::{design_canceler, RelayParams};
use loopcancel::sdh::{
    certify, hinf_synthesize, lift_fsfh, DiscreteGeneralizedPlant, SampledDataPlant,
    REGULARIZATION_EPS, REGULARIZATION_RHO,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent time-domain oracle: step the continuous dynamics at the fine
/// grid (exact ZOH per substep), close the tap delay through an explicit
/// sample buffer, and record the fine-grid error outputs.
#[allow(clippy::too_many_arguments)]
fn oracle_fine_response(
    plant: &SampledDataPlant,
    n_fsfh: usize,
    w_fine: &[DVector<f64>],
    u_held: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let delta = plant.period / n_fsfh as f64;
    let fine = c2d_zoh(&plant.dynamics, delta).unwrap();
    let (mw, mu, md) = (plant.n_w, plant.n_u, plant.n_delay);
    let (pz, py) = (plant.n_z, plant.n_y);
    let delay_len = plant.delay_steps * n_fsfh;
    let mut buffer: std::collections::VecDeque<DVector<f64>> =
        (0..delay_len).map(|_| DVector::zeros(md)).collect();
    let mut x = DVector::zeros(fine.n_states());
    let mut outputs = Vec::new();
    for (j, w) in w_fine.iter().enumerate() {
        let u = &u_held[j / n_fsfh];
        let d = if md == 0 {
            DVector::zeros(0)
        } else if delay_len == 0 {
            // Zero-period delay: tap feeds straight back (no feedthrough by
            // construction, so the tap value depends only on the state).
            let mut inp = DVector::zeros(mw + mu + md);
            inp.rows_mut(0, mw).copy_from(w);
            inp.rows_mut(mw, mu).copy_from(u);
            let full = &fine.c * &x + &fine.d * &inp;
            full.rows(pz + py, md).clone_owned()
        } else {
            buffer.front().unwrap().clone()
        };
        let mut inp = DVector::zeros(mw + mu + md);
        inp.rows_mut(0, mw).copy_from(w);
        inp.rows_mut(mw, mu).copy_from(u);
        inp.rows_mut(mw + mu, md).copy_from(&d);
        let y_full = &fine.c * &x + &fine.d * &inp;
        outputs.push(y_full.rows(0, pz).clone_owned());
        if delay_len > 0 {
            buffer.pop_front();
            buffer.push_back(y_full.rows(pz + py, md).clone_owned());
        }
        x = &fine.a * &x + &fine.b * &inp;
    }
    outputs
}

fn random_delay_plant(rng: &mut ChaCha8Rng, delay_steps: usize) -> SampledDataPlant {
    let n = 3;
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a -= DMatrix::identity(n, n) * (a.norm() + 0.5);
    // inputs: w(2), u(1), d(1); outputs: z(2), y(1), s(1)
    let b = DMatrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
    let mut c = DMatrix::from_fn(4, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut d = DMatrix::zeros(4, 4);
    for (r, cc) in [(0usize, 0usize), (0, 2), (1, 1), (2, 0)] {
        d[(r, cc)] = rng.gen_range(-0.5..0.5);
    }
    // Tap row: state-driven with some control feedthrough, never from d.
    c.row_mut(3).copy_from(&DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0)).row(0));
    d[(3, 2)] = rng.gen_range(-0.5..0.5);
    let dynamics = ContinuousStateSpace::new(a, b, c, d).unwrap();
    SampledDataPlant::new(dynamics, 2, 1, 2, 1, 1, 0.5, delay_steps).unwrap()
}

#[test]
fn lifting_reproduces_fine_grid_error_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for delay_steps in [0usize, 1, 2] {
        let plant = random_delay_plant(&mut rng, delay_steps);
        let n_fsfh = 8;
        let lifted = lift_fsfh(&plant, n_fsfh).unwrap();
        let periods = 12;
        let w_fine: Vec<DVector<f64>> = (0..periods * n_fsfh)
            .map(|_| DVector::from_fn(plant.n_w, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let u_held: Vec<DVector<f64>> = (0..periods)
            .map(|_| DVector::from_fn(plant.n_u, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let oracle = oracle_fine_response(&plant, n_fsfh, &w_fine, &u_held);

        // March the lifted plant one period at a time.
        let mut x = DVector::zeros(lifted.n_states());
        let mut worst: f64 = 0.0;
        for p in 0..periods {
            let mut w_stack = DVector::zeros(plant.n_w * n_fsfh);
            for j in 0..n_fsfh {
                w_stack
                    .rows_mut(j * plant.n_w, plant.n_w)
                    .copy_from(&w_fine[p * n_fsfh + j]);
            }
            let z_stack = &lifted.c1 * &x + &lifted.d11 * &w_stack + &lifted.d12 * &u_held[p];
            for j in 0..n_fsfh {
                let z_lift = z_stack.rows(j * plant.n_z, plant.n_z).clone_owned();
                let z_ref = &oracle[p * n_fsfh + j];
                worst = worst.max((&z_lift - z_ref).norm());
            }
            x = &lifted.a * &x + &lifted.b1 * &w_stack + &lifted.b2 * &u_held[p];
        }
        assert!(
            worst < 1e-8,
            "delay {delay_steps}: lifted z deviates by {worst:.2e}"
        );
    }
}

fn random_generalized_plant(rng: &mut ChaCha8Rng, n: usize) -> DiscreteGeneralizedPlant {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let sr = a
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    a *= 0.8 * rng.gen_range(0.3..1.0) / sr.max(1e-9);
    let mw = 2;
    let mu = 1;
    let pz = 2;
    let py = 1;
    DiscreteGeneralizedPlant {
        a,
        b1: DMatrix::from_fn(n, mw, |_, _| rng.gen_range(-1.0..1.0)),
        b2: DMatrix::from_fn(n, mu, |_, _| rng.gen_range(-1.0..1.0)),
        c1: DMatrix::from_fn(pz, n, |_, _| rng.gen_range(-1.0..1.0)),
        c2: DMatrix::from_fn(py, n, |_, _| rng.gen_range(-1.0..1.0)),
        d11: DMatrix::from_fn(pz, mw, |_, _| rng.gen_range(-0.3..0.3)),
        d12: DMatrix::from_fn(pz, mu, |_, _| rng.gen_range(-1.0..1.0)),
        d21: DMatrix::from_fn(py, mw, |_, _| rng.gen_range(-1.0..1.0)),
        d22: DMatrix::zeros(py, mu),
        period: 1.0,
        n_fsfh: 1,
    }
    .regularize(REGULARIZATION_RHO, REGULARIZATION_EPS)
}

#[test]
fn synthesis_is_sound_on_random_plants() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut done = 0;
    let mut attempts = 0;
    while done < 20 && attempts < 40 {
        attempts += 1;
        let plant = random_generalized_plant(&mut rng, 1 + attempts % 4);
        let ctrl = match hinf_synthesize(&plant, 1e-3, 1e3, 1e-3) {
            Ok(c) => c,
            Err(e) => panic!("attempt {attempts}: synthesis failed: {e}"),
        };
        let cert = certify(&plant, &ctrl.system).unwrap();
        assert!(cert.stable, "attempt {attempts}: closed loop unstable");
        assert!(
            cert.norm <= ctrl.gamma * (1.0 + 1e-4),
            "attempt {attempts}: norm {} vs gamma {}",
            cert.norm,
            ctrl.gamma
        );
        // Bracket never inverts: every infeasible gamma below every feasible.
        let max_inf = ctrl
            .history
            .iter()
            .filter(|s| !s.feasible)
            .map(|s| s.gamma)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_feas = ctrl
            .history
            .iter()
            .filter(|s| s.feasible)
            .map(|s| s.gamma)
            .fold(f64::INFINITY, f64::min);
        assert!(max_inf < min_feas, "attempt {attempts}: bracket inverted");
        done += 1;
    }
    assert_eq!(done, 20);
}

#[test]
fn gamma_matches_dense_grid_oracle() {
    // Independent oracle: scan a dense gamma grid, synthesize at each
    // feasible level, keep the smallest certified closed-loop norm.
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let plant = random_generalized_plant(&mut rng, 3);
    let ctrl = hinf_synthesize(&plant, 1e-3, 1e3, 1e-4).unwrap();

    let mut best_norm = f64::INFINITY;
    let decades = (1e-3f64.ln(), 1e3f64.ln());
    let grid = 160;
    for k in 0..=grid {
        let g = (decades.0 + (decades.1 - decades.0) * k as f64 / grid as f64).exp();
        if let Ok(c) = hinf_synthesize(&plant, g * 0.999_999, g, 0.5) {
            if let Ok(cert) = certify(&plant, &c.system) {
                if cert.stable {
                    best_norm = best_norm.min(cert.norm);
                }
            }
        }
    }
    assert!(
        (ctrl.gamma - best_norm).abs() <= 0.05 * best_norm,
        "bisection gamma {} vs grid-oracle optimum {}",
        ctrl.gamma,
        best_norm
    );
}

#[test]
fn certify_flags_destabilizing_static_gain() {
    let params = RelayParams::squared_pulse_defaults();
    let plant = loopcancel::relay::build_design_plant(&params).unwrap();
    let lifted = lift_fsfh(&plant, params.n_fsfh).unwrap();
    let passthrough =
        DiscreteStateSpace::static_gain(DMatrix::identity(2, 2), params.sample_period).unwrap();
    let cert = certify(&lifted, &passthrough).unwrap();
    assert!(!cert.stable, "alpha = 300 passthrough must destabilize");
}

#[test]
fn fsfh_gamma_refinement_16_to_32() {
    let mut p16 = RelayParams::squared_pulse_defaults();
    p16.n_fsfh = 16;
    let g16 = design_canceler(&p16).unwrap().gamma;
    let mut p32 = p16.clone();
    p32.n_fsfh = 32;
    let g32 = design_canceler(&p32).unwrap().gamma;
    let rel = (g32 - g16).abs() / g16;
    assert!(rel < 0.10, "relative gamma change {rel:.4}");
}

/// Slow (about five minutes): full Cauchy-style refinement through N = 64.
/// Last measured: gamma(16) = 0.274536, gamma(32) = 0.271314,
/// gamma(64) = 0.269490.
#[test]
#[ignore = "takes several minutes; run explicitly"]
fn fsfh_gamma_refinement_through_64() {
    let mut gammas = Vec::new();
    for n in [16usize, 32, 64] {
        let mut p = RelayParams::squared_pulse_defaults();
        p.n_fsfh = n;
        gammas.push(design_canceler(&p).unwrap().gamma);
    }
    let d1 = (gammas[1] - gammas[0]).abs();
    let d2 = (gammas[2] - gammas[1]).abs();
    assert!(d1 / gammas[0] < 0.10);
    assert!(d2 < d1, "refinement not contracting: {gammas:?}");
}
