use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavectl::control::{read_control_csv, solve_neumann, write_control_csv, ControlProblem, ControlSignal};
use wavectl::data::DataPair;
use wavectl::domain::{RegionMap, ZoneMap};
use wavectl::geometry::Vec2;
use wavectl::propagator::{HistorySpec, Propagator, State};
use wavectl::rays::{snell_refract, trace, EventKind, Outcome, Ray, RayMedium, Refraction, SplitRule};
use wavectl::scenario::Scenario;

struct Layered {
    map: ZoneMap,
    prop: Propagator,
    region: RegionMap,
}

fn layered() -> &'static Layered {
    static CELL: OnceLock<Layered> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = Scenario::preset("fig4a").unwrap();
        let map = s.zone_map().unwrap();
        let prop = s.propagator(&map).unwrap();
        let region = s.region_map(&map).unwrap();
        Layered { map, prop, region }
    })
}

fn medium(split: SplitRule) -> RayMedium {
    let s = Scenario::preset("fig4a").unwrap();
    RayMedium::new(&s.layout(), &s.coefficients, split).unwrap()
}

fn noise(map: &ZoneMap, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = map.grid.len();
    let mut draw = |k: usize| if map.is_fluid(k) && map.ball[k] { rng.gen_range(-1.0..1.0) } else { 0.0 };
    let u = (0..n).map(&mut draw).collect();
    let v = (0..n).map(&mut draw).collect();
    State::new(u, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snell_preserves_tangential_slowness(theta in -1.5f64..1.5, c_i in 0.3f64..3.0, c_t in 0.3f64..3.0) {
        match snell_refract(theta, c_i, c_t) {
            Refraction::Transmitted(t) => {
                prop_assert!((t.sin() / c_t - theta.sin() / c_i).abs() <= 1e-12);
                prop_assert!(t.abs() <= std::f64::consts::FRAC_PI_2);
            }
            Refraction::TotalInternalReflection => prop_assert!(c_t / c_i * theta.sin().abs() > 1.0),
        }
    }

    #[test]
    fn neumann_scalar_contraction_sums_geometric_series(
        q in 0.05f64..0.9,
        values in proptest::collection::vec(-1.0f64..1.0, 4..40),
    ) {
        prop_assume!(values.iter().any(|x| x.abs() > 1e-3));
        let f = DataPair { w0: values.clone(), w1: values.iter().map(|x| -x).collect() };
        let (w, rep) = solve_neumann(&f, |x| Ok(x.scaled(q)), |p| p.norm_l2(), 1e-12, 2000).unwrap();
        let exact = f.scaled(1.0 / (1.0 - q));
        prop_assert!(w.combine(1.0, &exact, -1.0).norm_l2() <= 1e-10 * exact.norm_l2());
        // the last ratio is taken near roundoff of |w|
        prop_assert!((rep.rho_estimate - q).abs() <= 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traced_rays_keep_unit_directions_and_conserve_weight(
        angle in 0.0f64..std::f64::consts::TAU,
        aim in -0.8f64..0.8,
        acoustic in any::<bool>(),
    ) {
        let m = medium(if acoustic { SplitRule::Acoustic } else { SplitRule::EqualHalves });
        let start = Vec2::new(1.4 * angle.cos(), 1.4 * angle.sin());
        let direction = (-start).normalized().rotate(aim);
        let ray = Ray { position: start, direction, zone: m.layout.zone_of(start), time: 0.0, amplitude: 1.0, generation: 0 };
        let branches = trace(&m, ray, 12.0, 10).unwrap();
        let mut leaves = 0.0;
        for b in &branches {
            for e in &b.events {
                prop_assert!((e.outgoing.norm() - 1.0).abs() <= 1e-12);
                prop_assert!(e.amplitude >= 0.0 && e.amplitude <= 1.0);
            }
            for w in b.events.windows(2) {
                prop_assert!(w[1].amplitude <= w[0].amplitude + 1e-15);
                prop_assert!(w[1].t >= w[0].t);
            }
            let last = b.events.last().unwrap();
            match b.outcome {
                Outcome::Escaped { t } => prop_assert_eq!(t, last.t),
                Outcome::Pruned => prop_assert_eq!(last.kind, EventKind::Prune),
                Outcome::Trapped => {}
            }
            leaves += last.amplitude;
        }
        prop_assert!((leaves - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extension_then_restriction_is_identity(seed in any::<u64>()) {
        let l = layered();
        let problem = ControlProblem::new(&l.map, &l.prop, &l.region, 1).unwrap();
        let f = problem.random_data(seed);
        let back = problem.restrict(&problem.extend(&f).unwrap());
        prop_assert_eq!(back, f);
    }

    #[test]
    fn evolution_conserves_energy_and_reverses(seed in any::<u64>(), steps in 20usize..80) {
        let l = layered();
        let start = noise(&l.map, seed);
        let t1 = steps as f64 * l.prop.dt;
        let (_, dt) = l.prop.schedule(0.0, t1);
        let end = l.prop.evolve(&start, 0.0, t1, &HistorySpec::none()).unwrap().0;
        let e0 = l.prop.conserved_energy(&start, dt);
        prop_assert!((l.prop.conserved_energy(&end, dt) - e0).abs() <= 1e-10 * e0);
        let back = l.prop.evolve_backward(&end, t1, &HistorySpec::none()).unwrap().0;
        prop_assert!(back.rel_diff(&start) <= 1e-10);
    }

    #[test]
    fn control_csv_round_trips(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in 0.1f64..2.0) {
        let l = layered();
        let problem = ControlProblem::new(&l.map, &l.prop, &l.region, 1).unwrap();
        let mut sig = ControlSignal::zeros(&problem.stations, &[0.0, 0.1, 0.2], alpha, beta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for seg in &mut sig.segments {
            for x in seg.u.iter_mut().chain(seg.dnu.iter_mut()) {
                *x = rng.gen_range(-1e3..1e3);
            }
            for k in 0..seg.g.len() {
                seg.g[k] = alpha * seg.u[k] + beta * seg.dnu[k];
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("control.csv");
        write_control_csv(&path, &sig).unwrap();
        prop_assert_eq!(read_control_csv(&path, alpha, beta).unwrap(), sig);
    }
}

#[test]
fn conserved_energy_is_independent_of_data_scale() {
    let l = layered();
    let s = noise(&l.map, 11);
    let dt = l.prop.dt;
    let e1 = l.prop.conserved_energy(&s, dt);
    let e2 = l.prop.conserved_energy(&s.scaled(3.0), dt);
    assert!((e2 / e1 - 9.0).abs() < 1e-12);
}
