//! Synthesize the H-infinity-optimal digital canceler for the nominal
//! squared-pulse relay and certify the closed loop.
//!
//!     cargo run --release --example design_canceler

use loopcancel::relay::{design_canceler, lifted_design_plant, loop_gain, RelayParams};
use loopcancel::sdh::certify;

fn main() {
    let params = RelayParams::squared_pulse_defaults();
    println!(
        "relay: h = {}, f = {}, L = {}, alpha = a1 a2 r = {}",
        params.sample_period,
        params.carrier_freq,
        params.loop_delay,
        loop_gain(&params)
    );

    let t0 = std::time::Instant::now();
    let ctrl = design_canceler(&params).expect("synthesis");
    println!(
        "synthesized K(z): {} states, gamma = {:.6} in {:.1?}",
        ctrl.system.n_states(),
        ctrl.gamma,
        t0.elapsed()
    );

    println!("gamma iteration:");
    for step in &ctrl.history {
        println!(
            "  gamma = {:>12.6}  {}",
            step.gamma,
            if step.feasible { "feasible" } else { "infeasible" }
        );
    }

    let raw = lifted_design_plant(&params).expect("lifting");
    let cert = certify(&raw, &ctrl.system).expect("certification");
    println!(
        "certificate: internally stable = {}, lifted closed-loop norm = {:.6} (bound {:.6})",
        cert.stable,
        cert.norm,
        ctrl.gamma * (1.0 + 1e-4)
    );
}
