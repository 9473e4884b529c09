//! Local energy decay around a disc obstacle and the fitted power law.
//!
//! cargo run --release --example energy_decay

use wavectl::energy_decay::{ensemble_decay, fit_decay, EnsembleConfig, Parity, RegionTag};
use wavectl::scenario::Scenario;

fn main() -> wavectl::Result<()> {
    let mut s = Scenario::preset("convex-obstacle")?;
    s.grid.spacing = 0.0625;
    s.domain.box_half_width = 5.0;
    let map = s.zone_map()?;
    let prop = s.propagator(&map)?;
    let support: Vec<bool> = (0..map.grid.len())
        .map(|k| map.is_fluid(k) && map.grid.point_of(k).norm() < 1.4)
        .collect();
    let times: Vec<f64> = (1..=28).map(|i| 0.25 * i as f64).collect();
    let cfg = EnsembleConfig {
        members: 6,
        ..EnsembleConfig::new((0.35, 0.5))
    };
    let ens = ensemble_decay(&prop, &map, &support, &map.ball, RegionTag::Ball, &times, &cfg)?;
    for s in ens.envelope.samples.iter().step_by(4) {
        println!("t = {:5.2}  E_local / E_initial = {:.3e}", s.t, s.ratio);
    }
    let fit = fit_decay(&ens.envelope, Parity::of_dimension(2), None)?;
    println!(
        "fit C t^p on [{:.2}, {:.2}]: C = {:.3e}, p = {:.3}",
        fit.window[0],
        fit.window[1],
        fit.c,
        fit.slope.unwrap()
    );
    Ok(())
}
