//! BER vs Eb/N0 for the squared-pulse relay with the designed canceler,
//! against the closed-form BPSK reference.
//!
//!     cargo run --release --example ber_vs_ebn0

use loopcancel::ofdm::{ideal_ber_bpsk, OfdmConfig, Pulse};
use loopcancel::relay::{design_canceler, RelayParams};
use loopcancel::sim::{sweep_ebn0, SimConfig};

fn main() {
    let params = RelayParams::squared_pulse_defaults();
    let ctrl = design_canceler(&params).expect("synthesis");
    let ofdm = OfdmConfig {
        n_sub: 64,
        cp_len: 16,
        pulse: Pulse::Squared { symbol_periods: 2 },
        oversample: params.n_fsfh,
        sample_period: params.sample_period,
    };
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.n_blocks = 150; // 9600 bits per point

    let curve = sweep_ebn0(&cfg, &ctrl).expect("sweep");
    println!("{:>8} {:>10} {:>10} {:>8}", "Eb/N0", "ideal", "measured", "errors");
    for p in &curve.points {
        let ideal = ideal_ber_bpsk(10f64.powf(p.x / 10.0)).unwrap();
        println!(
            "{:>6} dB {:>10.5} {:>10.5} {:>8}",
            p.x, ideal, p.ber, p.errors
        );
    }
}
