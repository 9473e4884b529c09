//! Compare the time stepper with the exact-in-time spectral solution of the
//! same semi-discrete system on a 24 x 24 box.
//!
//! cargo run --release --example oracle_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavectl::domain::ZoneMap;
use wavectl::propagator::{assemble_discrete_operator, HistorySpec, Propagator, SolverConfig, SpectralOracle, State};

fn main() -> wavectl::Result<()> {
    let map = ZoneMap::unit_box(24);
    for safety in [0.9, 0.5, 0.25] {
        let prop = Propagator::new(
            &map,
            SolverConfig {
                cfl_safety: safety,
                ..Default::default()
            },
        )?;
        let oracle = SpectralOracle::new(assemble_discrete_operator(&prop.stencil)?);
        let (f1, f2) = oracle.band_limited_data(2.0 * std::f64::consts::PI, &mut ChaCha8Rng::seed_from_u64(1));
        let numeric = prop.evolve(&State::new(f1.clone(), f2.clone()), 0.0, 1.0, &HistorySpec::none())?.0;
        let exact = oracle.propagate(&f1, &f2, 1.0);
        println!("dt = {safety} x limit: relative error at t = 1: {:.3e}", numeric.rel_diff(&exact));
    }
    Ok(())
}
