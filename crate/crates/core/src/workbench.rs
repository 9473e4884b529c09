//! Command drivers behind the `wavectl` binary: scenario loading, run
//! directories, CSV and JSON artifacts, and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{read_control_csv, verify_control, write_control_csv, ControlProblem, SynthesisReport};
use crate::data::DataPair;
use crate::domain::ZoneMap;
use crate::energy_decay::{ensemble_decay, fit_decay, write_decay_csv, Parity, RegionTag};
use crate::error::{Error, Result};
use crate::propagator::{
    assemble_discrete_operator, write_snapshot, HistorySpec, Propagator, Snapshot, SolverConfig, SpectralOracle,
    State,
};
use crate::rays::{escape_time_survey, write_rays_csv, RayMedium};
use crate::scenario::Scenario;

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "WAVECTL_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 5;

/// Relative error above which `oracle-check` reports failure.
pub const ORACLE_TOLERANCE: f64 = 1e-3;
/// Frequency cutoff of the default oracle-check data.
pub const ORACLE_OMEGA_MAX: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Decay,
    Control,
    Verify,
    Rays,
    OracleCheck,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Decay => "decay",
            Command::Control => "control",
            Command::Verify => "verify",
            Command::Rays => "rays",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Command-line overrides on top of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Scenario file, or a preset name.
    pub scenario: Option<String>,
    pub out: Option<PathBuf>,
    pub horizon: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub grid: Option<f64>,
    pub time_step: Option<f64>,
    /// `control.csv` for `verify`.
    pub control: Option<PathBuf>,
    pub n_rays: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub command: Command,
    /// Resolved scenario with all overrides applied.
    pub parameters: serde_json::Value,
    pub output_dir: String,
    pub artifacts: Vec<Artifact>,
    pub timings: BTreeMap<String, f64>,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: Option<PathBuf>,
    pub message: String,
}

struct Run {
    scenario: Scenario,
    source: String,
    out: PathBuf,
    timings: BTreeMap<String, f64>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let r = f();
        self.timings.insert(label.to_string(), t0.elapsed().as_secs_f64());
        r
    }
}

fn default_oracle_scenario() -> Scenario {
    Scenario::from_toml(
        r#"
name = "oracle-box"
description = "Unit square with Dirichlet walls, 24 x 24 interior nodes."

[domain]
measurement_radius = 0.45
box_half_width = 0.48

[grid]
spacing = 0.04

[solver]
cfl_safety = 0.25
"#,
    )
    .expect("built-in oracle scenario parses")
}

fn resolve(cmd: Command, opts: &RunOptions) -> Result<(Scenario, String)> {
    let (mut s, source) = match &opts.scenario {
        Some(spec) => (Scenario::load(spec)?, spec.clone()),
        None if cmd == Command::OracleCheck => (default_oracle_scenario(), "builtin:oracle-box".to_string()),
        None => return Err(Error::Config("--scenario is required".into())),
    };
    if let Some(h) = opts.grid {
        s.grid.spacing = h;
    }
    if let Some(dt) = opts.time_step {
        s.solver.time_step = Some(dt);
    }
    let mut control = s.control_spec();
    if let Some(t) = opts.horizon {
        control.horizon = Some(t);
    }
    if let Some(a) = opts.alpha {
        control.alpha = a;
    }
    if let Some(b) = opts.beta {
        control.beta = b;
    }
    if let Some(t) = opts.tol {
        control.tol = t;
    }
    if let Some(seed) = opts.seed {
        control.seed = seed;
        if let Some(r) = s.data.random.as_mut() {
            r.seed = seed;
        }
        if let Some(d) = s.decay.as_mut() {
            d.ensemble.seed = seed;
        }
    }
    if matches!(cmd, Command::Control | Command::Verify) {
        s.control = Some(control);
    }
    if let (Some(n), Some(r)) = (opts.n_rays, s.rays.as_mut()) {
        r.n_rays = n;
    }
    Ok((s, source))
}

fn output_dir(cmd: Command, opts: &RunOptions, name: &str) -> PathBuf {
    match &opts.out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            root.join(format!("{name}-{}", cmd.as_str()))
        }
    }
}

/// Run one command end to end and write its manifest.
pub fn run(cmd: Command, opts: &RunOptions) -> RunOutcome {
    let (scenario, source) = match resolve(cmd, opts) {
        Ok(x) => x,
        Err(e) => {
            return RunOutcome {
                exit_code: e.exit_code(),
                out_dir: None,
                message: e.to_string(),
            }
        }
    };
    let out = output_dir(cmd, opts, &scenario.name);
    if let Err(e) = fs::create_dir_all(&out) {
        return RunOutcome {
            exit_code: 1,
            out_dir: None,
            message: format!("cannot create {}: {e}", out.display()),
        };
    }
    let mut run = Run {
        scenario,
        source,
        out,
        timings: BTreeMap::new(),
    };
    let t0 = Instant::now();
    let result = fs::write(run.path("scenario.toml"), run.scenario.to_toml())
        .map_err(Error::from)
        .and_then(|_| match cmd {
            Command::Simulate => cmd_simulate(&mut run),
            Command::Decay => cmd_decay(&mut run),
            Command::Control => cmd_control(&mut run),
            Command::Verify => cmd_verify(&mut run, opts),
            Command::Rays => cmd_rays(&mut run),
            Command::OracleCheck => cmd_oracle_check(&mut run),
        });
    run.timings.insert("total".into(), t0.elapsed().as_secs_f64());
    let (exit_code, message) = match result {
        Ok((code, msg)) => (code, msg),
        Err(e) => (e.exit_code(), e.to_string()),
    };
    let manifest = write_manifest(&run, cmd, exit_code, &message);
    let message = match manifest {
        Ok(()) => message,
        Err(e) => format!("{message}; manifest not written: {e}"),
    };
    RunOutcome {
        exit_code,
        out_dir: Some(run.out),
        message,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn list_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            list_files(&p, base, out)?;
        } else if p.strip_prefix(base).map_or(true, |r| r != Path::new("manifest.json")) {
            out.push(p);
        }
    }
    Ok(())
}

fn write_manifest(run: &Run, cmd: Command, exit_code: i32, message: &str) -> Result<()> {
    let mut files = Vec::new();
    list_files(&run.out, &run.out, &mut files)?;
    let artifacts = files
        .iter()
        .map(|p| {
            let (sha256, bytes) = sha256_file(p)?;
            Ok(Artifact {
                path: p.strip_prefix(&run.out).unwrap_or(p).to_string_lossy().into_owned(),
                sha256,
                bytes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        scenario: run.source.clone(),
        command: cmd,
        parameters: serde_json::to_value(&run.scenario).map_err(|e| Error::Config(e.to_string()))?,
        output_dir: run.out.to_string_lossy().into_owned(),
        artifacts,
        timings: run.timings.clone(),
        exit_code,
        message: message.to_string(),
    };
    write_json(&run.path("manifest.json"), &manifest)
}

/// Nodes where scenario data may live: `Ω*` if the scenario has one,
/// otherwise the fluid part of `B_a`.
fn data_support(s: &Scenario, map: &ZoneMap) -> Result<Vec<bool>> {
    if s.control_region.is_some() {
        Ok(s.region_map(map)?.inside)
    } else {
        Ok(map.ball.clone())
    }
}

fn cmd_simulate(run: &mut Run) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let map = run.time("zone_map", || s.zone_map())?;
    let base = s.propagator(&map)?;
    let spec = s.simulate;
    let (n_steps, dt) = base.schedule(0.0, spec.duration);
    let prop = Propagator::new(
        &map,
        SolverConfig {
            time_step: Some(dt),
            ..s.solver
        },
    )?;
    let support = data_support(&s, &map)?;
    let data = s.initial_data(&map, &support)?;
    let snap_dir = run.path("snapshots");
    fs::create_dir_all(&snap_dir)?;
    let grid = map.grid;
    let mut state = data.to_state();
    let mut energy = std::io::BufWriter::new(fs::File::create(run.path("energy.csv"))?);
    writeln!(energy, "step,t,energy,conserved_energy,ball_energy")?;
    let mut emit = |state: &State, step: usize| -> Result<()> {
        writeln!(
            energy,
            "{step},{:?},{:?},{:?},{:?}",
            state.time,
            prop.energy(state, None),
            prop.conserved_energy(state, dt),
            prop.energy(state, Some(&map.ball))
        )?;
        Ok(())
    };
    emit(&state, 0)?;
    let every = spec.energy_every.max(1);
    let snap_every = spec.snapshot_every;
    let t0 = Instant::now();
    let mut step = 0;
    let mut warnings = Vec::new();
    while step < n_steps {
        let next = (step + every).min(n_steps);
        let t1 = if next == n_steps { spec.duration } else { next as f64 * dt };
        let (s1, hist) = prop.evolve(&state, state.time, t1, &HistorySpec::none())?;
        warnings.extend(hist.warnings);
        state = s1;
        step = next;
        emit(&state, step)?;
        if snap_every > 0 && (step % snap_every == 0 || step == n_steps) {
            let snap = Snapshot::from_padded(&grid, dt, state.time, "u", &state.u);
            write_snapshot(&snap_dir.join(format!("u_{step:06}.txt")), &snap, spec.snapshot_format)?;
        }
    }
    energy.flush()?;
    drop(energy);
    let last = Snapshot::from_padded(&grid, dt, state.time, "u", &state.u);
    write_snapshot(&snap_dir.join("final_u.txt"), &last, spec.snapshot_format)?;
    let last_v = Snapshot::from_padded(&grid, dt, state.time, "v", &state.v);
    write_snapshot(&snap_dir.join("final_v.txt"), &last_v, spec.snapshot_format)?;
    run.timings.insert("evolve".into(), t0.elapsed().as_secs_f64());
    let mut msg = format!("{n_steps} steps of dt = {dt:.6e} to t = {}", spec.duration);
    for w in warnings {
        msg.push_str(&format!("; warning: {w}"));
    }
    Ok((EXIT_OK, msg))
}

fn cmd_decay(run: &mut Run) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let spec = s
        .decay
        .clone()
        .ok_or_else(|| Error::Config("scenario has no [decay] section".into()))?;
    if !(spec.dt_sample > 0.0 && spec.t_end > spec.dt_sample) {
        return Err(Error::Config("decay needs 0 < dt_sample < t_end".into()));
    }
    let map = run.time("zone_map", || s.zone_map())?;
    let prop = s.propagator(&map)?;
    let mask = match spec.region {
        RegionTag::Ball => map.ball.clone(),
        RegionTag::ControlRegion => s.region_map(&map)?.inside,
        RegionTag::Collar => s.region_map(&map)?.collar,
    };
    let support: Vec<bool> = (0..map.grid.len())
        .map(|k| map.is_fluid(k) && map.grid.point_of(k).norm() < spec.support_radius)
        .collect();
    let n = (spec.t_end / spec.dt_sample + 1e-9).floor() as usize;
    let times: Vec<f64> = (1..=n).map(|i| i as f64 * spec.dt_sample).collect();
    let ens = run.time("ensemble", || {
        ensemble_decay(&prop, &map, &support, &mask, spec.region, &times, &spec.ensemble)
    })?;
    let mut runs: Vec<(String, _)> = ens
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| (format!("member{i:02}"), m))
        .collect();
    runs.push(("envelope".to_string(), &ens.envelope));
    write_decay_csv(&run.path("decay.csv"), &runs)?;
    let parity = Parity::of_dimension(2);
    let envelope = fit_decay(&ens.envelope, parity, spec.window)?;
    let members = ens
        .members
        .iter()
        .map(|m| fit_decay(m, parity, spec.window))
        .collect::<Result<Vec<_>>>()?;
    #[derive(Serialize)]
    struct FitReport<'a> {
        envelope: &'a crate::energy_decay::DecayFit,
        members: &'a [crate::energy_decay::DecayFit],
        region: RegionTag,
    }
    write_json(
        &run.path("fit.json"),
        &FitReport {
            envelope: &envelope,
            members: &members,
            region: spec.region,
        },
    )?;
    Ok((
        EXIT_OK,
        format!(
            "envelope slope {:.3} over [{:.2}, {:.2}] (residual {:.3})",
            envelope.slope.unwrap_or(f64::NAN),
            envelope.window[0],
            envelope.window[1],
            envelope.residual
        ),
    ))
}

fn cmd_control(run: &mut Run) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let spec = s.control_spec();
    let map = run.time("zone_map", || s.zone_map())?;
    let prop = s.propagator(&map)?;
    let rm = s.region_map(&map)?;
    let problem = ControlProblem::new(&map, &prop, &rm, spec.filter_passes)?;
    let f = s.initial_data(&map, &rm.inside)?;
    let (horizon, probes) = match spec.horizon {
        Some(t) => (t, Vec::new()),
        None => {
            if spec.ladder.is_empty() {
                return Err(Error::Config("[control] needs a horizon or a ladder".into()));
            }
            run.time("horizon_search", || {
                problem.select_horizon(&spec.ladder, spec.threshold, spec.power_steps, spec.seed)
            })?
        }
    };
    let syn = run.time("synthesis", || problem.synthesize(&f, &spec.params(horizon)))?;
    let mut report = syn.report;
    report.contraction_probes = probes;
    write_control_csv(&run.path("control.csv"), &syn.signal)?;
    write_json(&run.path("synthesis_report.json"), &report)?;
    Ok((
        EXIT_OK,
        format!(
            "T = {horizon}: {} iterations, rho ~ {:.4}, terminal relative energy {:.3e}",
            report.iterations, report.rho_estimate, report.terminal_rel_energy
        ),
    ))
}

fn cmd_verify(run: &mut Run, opts: &RunOptions) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let spec = s.control_spec();
    let csv = opts
        .control
        .clone()
        .ok_or_else(|| Error::Config("verify needs --control <control.csv>".into()))?;
    // α, β and T come from a neighbouring synthesis report unless overridden
    let report: Option<SynthesisReport> = csv
        .parent()
        .map(|d| d.join("synthesis_report.json"))
        .filter(|p| p.exists())
        .map(|p| -> Result<SynthesisReport> {
            serde_json::from_str(&fs::read_to_string(&p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .transpose()?;
    let (alpha, beta) = match &report {
        Some(r) => (opts.alpha.unwrap_or(r.alpha), opts.beta.unwrap_or(r.beta)),
        None => (spec.alpha, spec.beta),
    };
    let signal = read_control_csv(&csv, alpha, beta)?;
    let horizon = match (opts.horizon, &report) {
        (Some(t), _) => t,
        (None, Some(r)) => r.horizon,
        (None, None) => *signal
            .t
            .last()
            .ok_or_else(|| Error::IncompatibleSignal("control.csv has no rows".into()))?,
    };
    let map = run.time("zone_map", || s.zone_map())?;
    let prop = s.propagator(&map)?;
    let rm = s.region_map(&map)?;
    let problem = ControlProblem::new(&map, &prop, &rm, spec.filter_passes)?;
    let f = s.initial_data(&map, &rm.inside)?;
    let v = run.time("verify", || verify_control(&problem, &f, &signal, horizon))?;
    write_json(&run.path("verify_report.json"), &v)?;
    let ok = v.terminal_rel_energy <= spec.verify_threshold;
    let msg = format!(
        "terminal relative energy {:.3e} (threshold {:.1e}, alpha {alpha}, beta {beta}, T {horizon})",
        v.terminal_rel_energy, spec.verify_threshold
    );
    Ok((if ok { EXIT_OK } else { EXIT_VERIFY_FAILED }, msg))
}

fn cmd_rays(run: &mut Run) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let spec = s
        .rays
        .clone()
        .ok_or_else(|| Error::Config("scenario has no [rays] section".into()))?;
    let medium = RayMedium::new(&s.layout(), &s.coefficients, spec.split)?;
    let survey = run.time("survey", || {
        escape_time_survey(&medium, spec.n_rays, &spec.probes, spec.t_max, spec.max_splits)
    })?;
    write_rays_csv(&run.path("rays.csv"), &survey.traces)?;
    write_json(&run.path("escape_report.json"), &survey.report)?;
    let r = &survey.report;
    Ok((
        EXIT_OK,
        format!(
            "{} rays: {} escaped (max t {:.3}), {} trapped, {} pruned; nontrapping-consistent: {}",
            r.rays, r.escaped, r.max_escape_time, r.trapped, r.pruned, r.nontrapping_consistent
        ),
    ))
}

fn cmd_oracle_check(run: &mut Run) -> Result<(i32, String)> {
    let s = run.scenario.clone();
    let map = s.zone_map()?;
    let prop = s.propagator(&map)?;
    let op = assemble_discrete_operator(&prop.stencil)?;
    let oracle = run.time("eigendecomposition", || Ok(SpectralOracle::new(op)))?;
    // without explicit data: smooth random data, band-limited to ω ≤ 2π
    let data = if s.data.position.is_empty() && s.data.velocity.is_empty() && s.data.random.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(s.control_spec().seed);
        let (w0, w1) = oracle.band_limited_data(ORACLE_OMEGA_MAX, &mut rng);
        DataPair { w0, w1 }
    } else {
        let fluid: Vec<bool> = (0..map.grid.len()).map(|k| map.is_fluid(k)).collect();
        s.initial_data(&map, &fluid)?
    };
    let times = [0.25, 0.5, 0.75, 1.0];
    let mut csv = std::io::BufWriter::new(fs::File::create(run.path("oracle.csv"))?);
    writeln!(csv, "t,rel_error_u,rel_error_state")?;
    let mut state = data.to_state();
    let mut worst: f64 = 0.0;
    for &t in &times {
        state = prop.evolve(&state, state.time, t, &HistorySpec::none())?.0;
        let exact = oracle.propagate(&data.w0, &data.w1, t);
        let du: f64 = state.u.iter().zip(&exact.u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let nu: f64 = exact.u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel_u = du / nu.max(f64::MIN_POSITIVE);
        let rel = state.rel_diff(&exact);
        worst = worst.max(rel);
        writeln!(csv, "{t:?},{rel_u:?},{rel:?}")?;
    }
    csv.flush()?;
    let msg = format!(
        "max relative error {worst:.3e} over t in [0.25, 1] ({} unknowns)",
        prop.stencil.unknowns()
    );
    println!("{msg}");
    Ok((if worst < ORACLE_TOLERANCE { EXIT_OK } else { EXIT_VERIFY_FAILED }, msg))
}
