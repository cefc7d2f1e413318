//! BER vs relay gain a2 at Eb/N0 = 2 dB, re-synthesizing the canceler at
//! every operating point: the curve sits flat on the ideal value.
//!
//!     cargo run --release --example gain_sweep

use loopcancel::ofdm::{ideal_ber_bpsk, OfdmConfig, Pulse};
use loopcancel::relay::RelayParams;
use loopcancel::sim::{sweep_gain_redesign, SimConfig};

fn main() {
    let params = RelayParams::squared_pulse_defaults();
    let ofdm = OfdmConfig {
        n_sub: 64,
        cp_len: 16,
        pulse: Pulse::Squared { symbol_periods: 2 },
        oversample: params.n_fsfh,
        sample_period: params.sample_period,
    };
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.a2_sweep = vec![0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0];
    cfg.n_blocks_gain = 300; // trimmed for a quick demo

    let ideal = ideal_ber_bpsk(10f64.powf(cfg.gain_ebn0_db / 10.0)).unwrap();
    println!("ideal BER at {} dB = {ideal:.5}", cfg.gain_ebn0_db);
    let curve = sweep_gain_redesign(&cfg).expect("gain sweep");
    for p in &curve.points {
        println!(
            "a2 = {:>6}: BER = {:.5} +- {:.5}{}",
            p.x,
            p.ber,
            p.std_err,
            if p.diverged { "  DIVERGED" } else { "" }
        );
    }
}
