//! Boundary control on the two-zone transmission preset: horizon search,
//! fixed-point synthesis, and independent re-simulation for Robin,
//! Dirichlet and Neumann controls.
//!
//! cargo run --release --example control_synthesis

use wavectl::control::{verify_control, ControlProblem, ControlParams, LADDER_THRESHOLD};
use wavectl::scenario::Scenario;

fn main() -> wavectl::Result<()> {
    let s = Scenario::preset("fig4a")?;
    let map = s.zone_map()?;
    let prop = s.propagator(&map)?;
    let rm = s.region_map(&map)?;
    let problem = ControlProblem::new(&map, &prop, &rm, 1)?;
    let f = s.initial_data(&map, &rm.inside)?;

    let (horizon, probes) = problem.select_horizon(&[1.0, 2.0], LADDER_THRESHOLD, 20, 0)?;
    for (t, rho) in probes {
        println!("T = {t}: |K_T| ~ {rho:.3}");
    }
    for (alpha, beta) in [(1.0, 1.0), (1.0, 0.0), (0.0, 1.0)] {
        let params = ControlParams {
            alpha,
            beta,
            ..ControlParams::new(horizon)
        };
        let syn = problem.synthesize(&f, &params)?;
        let check = verify_control(&problem, &f, &syn.signal, horizon)?;
        println!(
            "alpha = {alpha}, beta = {beta}: {} iterations, terminal energy {:.2e}, re-simulated {:.2e}, |g| = {:.3}",
            syn.report.iterations, syn.report.terminal_rel_energy, check.terminal_rel_energy, syn.report.control_l2_norm
        );
    }
    Ok(())
}
