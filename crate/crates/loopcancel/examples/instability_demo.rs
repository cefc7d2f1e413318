//! Why the canceler matters: a unit passthrough in the digital path blows
//! up within a few sampling periods at loop gain alpha = 300, while the
//! synthesized canceler keeps the same loop quiet.
//!
//!     cargo run --release --example instability_demo

use loopcancel::lti::DiscreteStateSpace;
use loopcancel::ofdm::{OfdmConfig, Pulse};
use loopcancel::relay::{design_canceler, RelayParams};
use loopcancel::sdh::{Controller, GammaStep};
use loopcancel::sim::{run_relay_sim, SimConfig};
use nalgebra::DMatrix;

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
    cfg.n_blocks = 5;

    let passthrough = Controller {
        system: DiscreteStateSpace::static_gain(DMatrix::identity(2, 2), cfg.params.sample_period)
            .unwrap(),
        gamma: f64::NAN,
        n_fsfh: cfg.params.n_fsfh,
        history: Vec::<GammaStep>::new(),
    };
    let trace = run_relay_sim(&cfg, &passthrough, f64::INFINITY, None).unwrap();
    println!(
        "unit passthrough: diverged = {}, after {} fine steps ({:.1} sampling periods), peak |u| = {:.2e}",
        trace.diverged,
        trace.u.len(),
        trace.u.len() as f64 / cfg.ofdm.oversample as f64,
        trace.peak_u
    );

    let ctrl = design_canceler(&cfg.params).expect("synthesis");
    let trace = run_relay_sim(&cfg, &ctrl, f64::INFINITY, None).unwrap();
    println!(
        "designed canceler: diverged = {}, peak |u| = {:.3}, ||z||/||v|| = {:.3}",
        trace.diverged,
        trace.peak_u,
        (trace.z.energy() / trace.v.energy()).sqrt()
    );
}
