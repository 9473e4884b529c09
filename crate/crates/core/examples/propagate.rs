//! Leapfrog propagation: energy bookkeeping and exact time reversal.
//!
//! cargo run --release --example propagate

use wavectl::propagator::HistorySpec;
use wavectl::scenario::Scenario;

fn main() -> wavectl::Result<()> {
    let s = Scenario::preset("fig4a")?;
    let map = s.zone_map()?;
    let prop = s.propagator(&map)?;
    let rm = s.region_map(&map)?;
    let state = s.initial_data(&map, &rm.inside)?.to_state();
    println!("dt = {:.5e} (stability limit {:.5e})", prop.dt, prop.cfl_limit);

    // each run uses the step that fits its interval exactly
    for t in [0.5, 1.0, 1.5, 2.0] {
        let (steps, dt) = prop.schedule(0.0, t);
        let end = prop.evolve(&state, 0.0, t, &HistorySpec::none())?.0;
        let e0 = prop.conserved_energy(&state, dt);
        let drift = (prop.conserved_energy(&end, dt) - e0).abs() / e0;
        println!(
            "t = {t}: {steps} steps, modified energy drift {drift:.2e}, energy in B_a {:.4}",
            prop.energy(&end, Some(&map.ball))
        );
    }

    let end = prop.evolve(&state, 0.0, 2.0, &HistorySpec::none())?.0;
    let back = prop.evolve_backward(&end, 2.0, &HistorySpec::none())?.0;
    println!("round trip relative error {:.2e}", back.rel_diff(&state));
    Ok(())
}
