//! Rasterize a preset and inspect zones, coefficients and control-region masks.
//!
//! cargo run --release --example zone_map -- fig4a

use wavectl::geometry::Vec2;
use wavectl::scenario::Scenario;

fn main() -> wavectl::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig4a".into());
    let s = Scenario::preset(&name)?;
    let map = s.zone_map()?;
    let g = map.grid;
    println!("{name}: {} x {} nodes, h = {}", g.nx, g.ny, g.h);
    for (k, area) in map.zone_areas().iter().enumerate() {
        println!("  zone {}: area {area:.4}", k + 1);
    }
    for p in [[0.3, 0.0], [0.6, 0.0], [0.9, 0.0], [2.0, 0.0]] {
        let (c, metric) = s.layout().coefficient_at(&s.coefficients, Vec2::from(p))?;
        println!("  at {p:?}: zone {}, c = {c:.4}, g = {:?}", s.layout().zone_of(Vec2::from(p)), metric.as_rows());
    }
    if s.control_region.is_some() {
        let rm = s.region_map(&map)?;
        let collar = rm.collar.iter().filter(|&&b| b).count();
        println!("  control region: {} nodes, collar {collar} nodes, delta {}", rm.inside_count(), rm.delta);
        for seg in s.region()?.segments(&map.layout, g.h) {
            println!("    segment {} ({:?}): length {:.4}", seg.id, seg.tag, seg.piece.length());
        }
    }
    Ok(())
}
