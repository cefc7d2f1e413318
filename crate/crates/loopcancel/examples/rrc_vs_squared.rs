//! Side-by-side BER of the squared-pulse and root-raised-cosine setups.
//! The RRC canceler carries a much smaller worst-case bound, but its
//! measured BER degrades at high Eb/N0 where the tracking floor bites.
//!
//!     cargo run --release --example rrc_vs_squared

use loopcancel::ofdm::{ideal_ber_bpsk, OfdmConfig, Pulse};
use loopcancel::relay::{design_canceler, RelayParams};
use loopcancel::sim::{sweep_ebn0, SimConfig};

fn run(rrc: bool, n_blocks: usize) -> (f64, Vec<(f64, f64)>) {
    let params = if rrc {
        RelayParams::rrc_defaults()
    } else {
        RelayParams::squared_pulse_defaults()
    };
    let ctrl = design_canceler(&params).expect("synthesis");
    let pulse = if rrc {
        Pulse::RootRaisedCosine {
            symbol_periods: 3,
            rolloff: 0.2,
            span_symbols: 48,
        }
    } else {
        Pulse::Squared { symbol_periods: 2 }
    };
    let ofdm = OfdmConfig {
        n_sub: 64,
        cp_len: 16,
        pulse,
        oversample: params.n_fsfh,
        sample_period: params.sample_period,
    };
    let mut cfg = SimConfig::defaults(params, ofdm);
    cfg.n_blocks = n_blocks;
    let curve = sweep_ebn0(&cfg, &ctrl).expect("sweep");
    (
        ctrl.gamma,
        curve.points.iter().map(|p| (p.x, p.ber)).collect(),
    )
}

fn main() {
    let n_blocks = 150;
    let (g_sq, sq) = run(false, n_blocks);
    let (g_rrc, rrc) = run(true, n_blocks);
    println!("gamma: squared = {g_sq:.4}, rrc = {g_rrc:.4}");
    println!("{:>8} {:>10} {:>10} {:>10}", "Eb/N0", "ideal", "squared", "rrc");
    for ((x, s), (_, r)) in sq.iter().zip(rrc.iter()) {
        let ideal = ideal_ber_bpsk(10f64.powf(x / 10.0)).unwrap();
        println!("{x:>6} dB {ideal:>10.5} {s:>10.5} {r:>10.5}");
    }
}
