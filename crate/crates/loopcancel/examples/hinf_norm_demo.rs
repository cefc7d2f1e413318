//! The numeric bedrock in action: H-infinity norms by pencil bisection
//! against dense frequency sweeps, and a Riccati equation with a
//! closed-form solution.
//!
//!     cargo run --release --example hinf_norm_demo

use loopcancel::lti::{dare_solve, hinf_norm_discrete, DiscreteStateSpace};
use loopcancel::validate::{random_stable_system, sweep_norm_oracle};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // G(z) = 1/(z - 0.5) peaks at DC with value 2.
    let g = DiscreteStateSpace::new(
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 1),
        1.0,
    )
    .unwrap();
    println!(
        "||1/(z-0.5)||_inf = {:.8} (exact 2)",
        hinf_norm_discrete(&g, 1e-9).unwrap()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{:>6} {:>14} {:>14} {:>12}", "case", "bisection", "4096-sweep", "gap");
    for case in 0..5 {
        let sys = random_stable_system(&mut rng, 4, 2, 2, 0.85);
        let norm = hinf_norm_discrete(&sys, 1e-8).unwrap();
        let sweep = sweep_norm_oracle(&sys, 4096);
        println!("{case:>6} {norm:>14.8} {sweep:>14.8} {:>12.2e}", norm - sweep);
    }

    // x = a'xa - a'xb (r + b'xb)^-1 b'xa + q with a=b=q=r=1 has the golden
    // ratio as its stabilizing solution.
    let one = DMatrix::from_element(1, 1, 1.0);
    let sol = dare_solve(&one, &one, &one, &one, &DMatrix::zeros(1, 1)).unwrap();
    println!(
        "scalar Riccati fixed point: {:.12} (golden ratio {:.12}), residual {:.1e}",
        sol.x[(0, 0)],
        0.5 * (1.0 + 5f64.sqrt()),
        sol.residual
    );
}
