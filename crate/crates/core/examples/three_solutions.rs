//! Positive, negative and nodal solutions of a radial problem in three dimensions.
//!
//! `cargo run --release -p nehari --example three_solutions`

use std::sync::Arc;

use nehari::eigen::{default_init, minimize_rayleigh};
use nehari::optimize::{solve_constant_sign, solve_nodal, SolverConfig};
use nehari::sampling::Sign;
use nehari::{Domain, Geometry, PowerLaw, Profile, ProblemSpec, WeightField, WeightRole};

fn main() -> nehari::Result<()> {
    let d = Domain::new(Geometry::radial(3, 10.0, 500))?;
    let a = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 2.0 }, WeightRole::Linear, &d)?;
    let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, WeightRole::Nonlinear, &d)?;
    let spec = ProblemSpec::new(2.0, -1.0, a, Arc::new(PowerLaw::new(4.0, b)?), &d)?;

    let eig = minimize_rayleigh(&spec, &d, &default_init(&spec, &d), 1e-10, 20_000)?;
    println!("principal eigenvalue estimate {:.6}", eig.lambda_a);

    let cfg = SolverConfig::default();
    let u1 = solve_constant_sign(&spec, &d, &cfg, Sign::Positive)?;
    let u2 = solve_constant_sign(&spec, &d, &cfg, Sign::Negative)?;
    let u3 = solve_nodal(&spec, &d, &cfg)?;
    for (name, s) in [("u1", &u1), ("u2", &u2), ("u3", &u3)] {
        println!(
            "{name}: S = {:.6}, residual {:.2e}, {} iterations, {} nodal domain(s)",
            s.energy.action, s.residual, s.iterations, s.nodal_domains
        );
    }
    Ok(())
}
