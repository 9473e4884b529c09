//! Ray surveys: a convex obstacle, two discs with a trapped orbit, and the
//! layered medium where split rays lose their weight.
//!
//! cargo run --release --example ray_survey

use wavectl::rays::{escape_time_survey, snell_refract, RayMedium, Refraction};
use wavectl::scenario::Scenario;

fn main() -> wavectl::Result<()> {
    for theta in [10.0f64, 30.0, 45.0] {
        match snell_refract(theta.to_radians(), 1.0, 1.5) {
            Refraction::Transmitted(t) => println!("{theta} deg into a 1.5x faster zone -> {:.2} deg", t.to_degrees()),
            Refraction::TotalInternalReflection => println!("{theta} deg into a 1.5x faster zone -> total internal reflection"),
        }
    }
    for name in ["convex-obstacle", "two-disc", "fig4a"] {
        let s = Scenario::preset(name)?;
        let spec = s.rays.clone().expect("preset has a [rays] section");
        let medium = RayMedium::new(&s.layout(), &s.coefficients, spec.split)?;
        let r = escape_time_survey(&medium, 2000, &spec.probes, spec.t_max, spec.max_splits)?.report;
        println!(
            "{name}: {} branches, {} escaped (latest {:.2}), {} trapped, {} pruned, bound {:?}, nontrapping-consistent {}",
            r.branches, r.escaped, r.max_escape_time, r.trapped, r.pruned, r.chord_bound, r.nontrapping_consistent
        );
    }
    Ok(())
}
