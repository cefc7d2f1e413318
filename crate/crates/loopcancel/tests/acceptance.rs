//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see them). Tolerances are pinned here, not configurable.

use std::sync::OnceLock;
use std::time::Instant;

use loopcancel::lti::DiscreteStateSpace;
use loopcancel::ofdm::{ideal_ber_bpsk, OfdmConfig, Pulse};
use loopcancel::relay::{design_canceler, lifted_design_plant, RelayParams};
use loopcancel::sdh::{certify, Controller};
use loopcancel::sim::{
    data_bits, measure_ber, run_relay_sim, sweep_ebn0, sweep_gain_redesign, BerCurve, SimConfig,
};
use loopcancel::validate::run_all;
use nalgebra::DMatrix;

const EBN0_GRID: [f64; 5] = [0.0, 2.0, 4.0, 6.0, 8.0];

fn squared_params() -> RelayParams {
    RelayParams::squared_pulse_defaults()
}

fn rrc_params() -> RelayParams {
    RelayParams::rrc_defaults()
}

fn squared_ofdm(params: &RelayParams) -> OfdmConfig {
    OfdmConfig {
        n_sub: 64,
        cp_len: 16,
        pulse: Pulse::Squared { symbol_periods: 2 },
        oversample: params.n_fsfh,
        sample_period: params.sample_period,
    }
}

fn rrc_ofdm(params: &RelayParams) -> OfdmConfig {
    OfdmConfig {
        n_sub: 64,
        cp_len: 16,
        pulse: Pulse::RootRaisedCosine {
            symbol_periods: 3,
            rolloff: 0.2,
            span_symbols: 48,
        },
        oversample: params.n_fsfh,
        sample_period: params.sample_period,
    }
}

struct Design {
    ctrl: Controller,
    elapsed_s: f64,
}

fn squared_design() -> &'static Design {
    static CELL: OnceLock<Design> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let ctrl = design_canceler(&squared_params()).expect("squared design");
        Design {
            ctrl,
            elapsed_s: t0.elapsed().as_secs_f64(),
        }
    })
}

fn rrc_design() -> &'static Design {
    static CELL: OnceLock<Design> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let ctrl = design_canceler(&rrc_params()).expect("rrc design");
        Design {
            ctrl,
            elapsed_s: t0.elapsed().as_secs_f64(),
        }
    })
}

fn gain_curve() -> &'static BerCurve {
    static CELL: OnceLock<BerCurve> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = squared_params();
        let ofdm = squared_ofdm(&params);
        let mut cfg = SimConfig::defaults(params, ofdm);
        cfg.a2_sweep = vec![500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0];
        cfg.n_blocks_gain = 900;
        cfg.gain_ebn0_db = 2.0;
        sweep_gain_redesign(&cfg).expect("gain sweep")
    })
}

fn ideal_at_db(db: f64) -> f64 {
    ideal_ber_bpsk(10f64.powf(db / 10.0)).unwrap()
}

fn ebn0_curve(params: RelayParams, ofdm: OfdmConfig, n_blocks: usize) -> BerCurve {
    let pulse = ofdm.pulse;
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.n_blocks = n_blocks;
    cfg.ebn0_db = EBN0_GRID.to_vec();
    let ctrl = match pulse {
        Pulse::Squared { .. } => &squared_design().ctrl,
        Pulse::RootRaisedCosine { .. } => &rrc_design().ctrl,
    };
    sweep_ebn0(&cfg, ctrl).expect("ebn0 sweep")
}

#[test]
fn criterion_1_stability_certificate() {
    let design = squared_design();
    let raw = lifted_design_plant(&squared_params()).unwrap();
    let cert = certify(&raw, &design.ctrl.system).unwrap();
    let pass = cert.stable
        && cert.norm <= design.ctrl.gamma * (1.0 + 1e-4)
        && design.elapsed_s < 60.0;
    println!(
        "{} criterion 1 (stability certificate): gamma = {:.6}, closed-loop norm = {:.6}, stable = {}, design time = {:.1}s (target < 60s)",
        if pass { "PASS" } else { "FAIL" },
        design.ctrl.gamma,
        cert.norm,
        cert.stable,
        design.elapsed_s
    );
    assert!(pass);
}

#[test]
fn criterion_2_squared_pulse_ber_tracks_ideal() {
    let t0 = Instant::now();
    let params = squared_params();
    let curve = ebn0_curve(params.clone(), squared_ofdm(&params), 150);
    let mut pass = true;
    let mut detail = String::new();
    for p in &curve.points {
        let n = p.bits as f64;
        let ideal = ideal_at_db(p.x);
        // Slack: the larger of 3 Monte-Carlo standard errors and the ideal
        // curve shifted by 1 dB, applied on each side.
        let lower_ref = ideal_at_db(p.x + 1.0);
        let upper_ref = ideal_at_db(p.x - 1.0);
        let sig_low = (lower_ref * (1.0 - lower_ref) / n).sqrt();
        let sig_up = (upper_ref * (1.0 - upper_ref) / n).sqrt();
        let lo = (ideal - (ideal - lower_ref).max(3.0 * sig_low)).max(0.0);
        let hi = ideal + (upper_ref - ideal).max(3.0 * sig_up);
        let ok = !p.diverged && p.ber >= lo && p.ber <= hi;
        pass &= ok;
        detail.push_str(&format!(
            " [{} dB: ber {:.5} in ({:.5}, {:.5})]",
            p.x, p.ber, lo, hi
        ));
    }
    let elapsed = t0.elapsed().as_secs_f64() + squared_design().elapsed_s;
    pass &= elapsed < 600.0;
    println!(
        "{} criterion 2 (squared-pulse BER vs ideal):{} total {:.0}s (target < 600s)",
        if pass { "PASS" } else { "FAIL" },
        detail,
        elapsed
    );
    assert!(pass);
}

#[test]
fn criterion_3_rrc_degrades_relative_to_squared() {
    // Block count chosen so the systematic high-Eb/N0 gap resolves above
    // the Monte-Carlo noise; both pulse shapes share the seed substreams.
    let n_blocks = 600;
    let sp = squared_params();
    let squared = ebn0_curve(sp.clone(), squared_ofdm(&sp), n_blocks);
    let rp = rrc_params();
    let rrc = ebn0_curve(rp.clone(), rrc_ofdm(&rp), n_blocks);
    let mut pass = true;
    let mut strictly_greater = 0;
    let mut detail = String::new();
    for (s, r) in squared.points.iter().zip(rrc.points.iter()) {
        let sig = (s.std_err.powi(2) + r.std_err.powi(2)).sqrt();
        let ok = r.ber >= s.ber - 2.0 * sig;
        pass &= ok && !s.diverged && !r.diverged;
        if r.ber > s.ber {
            strictly_greater += 1;
        }
        detail.push_str(&format!(" [{} dB: rrc {:.5} vs sq {:.5}]", s.x, r.ber, s.ber));
    }
    pass &= strictly_greater >= 2;
    println!(
        "{} criterion 3 (rrc degradation):{} strictly greater at {}/5 points (need >= 2)",
        if pass { "PASS" } else { "FAIL" },
        detail,
        strictly_greater
    );
    assert!(pass);
}

#[test]
fn criterion_4_gain_sweep_flatness() {
    let curve = gain_curve();
    let ideal = ideal_at_db(2.0);
    let mut pass = (ideal - 0.0375).abs() < 1e-4;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut sig_max: f64 = 0.0;
    let mut detail = String::new();
    for p in &curve.points {
        pass &= !p.diverged;
        lo = lo.min(p.ber);
        hi = hi.max(p.ber);
        sig_max = sig_max.max(p.std_err);
        let n = p.bits as f64;
        let sig_ideal = (ideal * (1.0 - ideal) / n).sqrt();
        let anchored = (p.ber - ideal).abs() <= 3.0 * sig_ideal;
        pass &= anchored;
        detail.push_str(&format!(" [a2 {}: {:.5}]", p.x, p.ber));
    }
    let spread_ok = (hi - lo) < 4.0 * sig_max;
    pass &= spread_ok;
    println!(
        "{} criterion 4 (gain-sweep flatness):{} spread {:.5} vs 4 sigma {:.5}, ideal anchor {:.5}",
        if pass { "PASS" } else { "FAIL" },
        detail,
        hi - lo,
        4.0 * sig_max,
        ideal
    );
    assert!(pass);
}

#[test]
fn criterion_5_instability_demonstration() {
    let params = squared_params();
    let ofdm = squared_ofdm(&params);
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.n_blocks = 5;
    let passthrough = Controller {
        system: DiscreteStateSpace::static_gain(DMatrix::identity(2, 2), cfg.params.sample_period)
            .unwrap(),
        gamma: f64::NAN,
        n_fsfh: cfg.params.n_fsfh,
        history: vec![],
    };
    let trace = run_relay_sim(&cfg, &passthrough, f64::INFINITY, None).unwrap();
    let within = trace.u.len() <= 10 * cfg.ofdm.oversample;
    let redesigned_ok = gain_curve().points.iter().all(|p| !p.diverged);
    let pass = trace.diverged && within && redesigned_ok;
    println!(
        "{} criterion 5 (instability demonstration): passthrough diverged = {} within {} fine steps (cap {}), designed sweep divergence-free = {}",
        if pass { "PASS" } else { "FAIL" },
        trace.diverged,
        trace.u.len(),
        10 * cfg.ofdm.oversample,
        redesigned_ok
    );
    assert!(pass);
}

#[test]
fn criterion_6_fsfh_convergence() {
    let g16 = squared_design().ctrl.gamma;
    let mut p32 = squared_params();
    p32.n_fsfh = 32;
    let g32 = design_canceler(&p32).unwrap().gamma;
    let rel = (g32 - g16).abs() / g16;
    let pass = rel < 0.10;
    println!(
        "{} criterion 6 (fsfh convergence): gamma(16) = {:.6}, gamma(32) = {:.6}, relative change {:.4} (need < 0.10)",
        if pass { "PASS" } else { "FAIL" },
        g16,
        g32,
        rel
    );
    assert!(pass);
}

#[test]
fn criterion_7_numerics_oracle_suite() {
    let results = run_all(false);
    let mut pass = true;
    for r in &results {
        pass &= r.pass;
        println!(
            "  {} {}: {}",
            if r.pass { "ok " } else { "BAD" },
            r.name,
            r.detail
        );
    }
    println!(
        "{} criterion 7 (numerics oracle suite): {}/{} checks passed",
        if pass { "PASS" } else { "FAIL" },
        results.iter().filter(|r| r.pass).count(),
        results.len()
    );
    assert!(pass);
}

#[test]
fn noise_free_tracking_is_certified_quality() {
    // Companion regression pinned by the first certified run: with the
    // designed canceler, no noise and nominal gain, the relative tracking
    // error stays well under the 0.5 gate and the measured BER is zero.
    let params = squared_params();
    let ofdm = squared_ofdm(&params);
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.n_blocks = 40;
    let trace = run_relay_sim(&cfg, &squared_design().ctrl, f64::INFINITY, None).unwrap();
    let rel = (trace.z.energy() / trace.v.energy()).sqrt();
    let bits = data_bits(cfg.seed, cfg.n_blocks * cfg.ofdm.n_sub);
    let (ber, _) = measure_ber(&trace, &bits, &cfg).unwrap();
    let pass = !trace.diverged && rel < 0.5 && ber == 0.0;
    println!(
        "{} companion (noise-free tracking): ||z||/||v|| = {:.4} (gate 0.5), BER = {}",
        if pass { "PASS" } else { "FAIL" },
        rel,
        ber
    );
    assert!(pass);
}
