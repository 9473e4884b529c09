//! Local energy decay: sampled ratios `E_local(t) / E_initial` and fits of
//! the parity-dependent laws (exponential for odd dimension, power for even).

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{random_smooth_pair, DataPair};
use crate::domain::ZoneMap;
use crate::error::{Error, Result};
use crate::propagator::{HistorySpec, Propagator, State};

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    /// `B_a ∩ Ω`
    Ball,
    /// `Ω*`
    ControlRegion,
    /// `Ω*_δ`
    Collar,
}

impl RegionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionTag::Ball => "ball",
            RegionTag::ControlRegion => "control_region",
            RegionTag::Collar => "collar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Square roots of energies (norm ratios).
    Amplitude,
    Energy,
}

impl Convention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::Amplitude => "amplitude",
            Convention::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of_dimension(n: usize) -> Parity {
        if n % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub t: f64,
    pub e_local: f64,
    pub e_initial: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub samples: Vec<DecaySample>,
    pub region: RegionTag,
    pub convention: Convention,
}

impl DecaySeries {
    /// The same series in the other convention.
    pub fn converted(&self, to: Convention) -> DecaySeries {
        let f: fn(f64) -> f64 = match (self.convention, to) {
            (a, b) if a == b => |x| x,
            (Convention::Energy, Convention::Amplitude) => f64::sqrt,
            _ => |x| x * x,
        };
        DecaySeries {
            samples: self
                .samples
                .iter()
                .map(|s| DecaySample {
                    t: s.t,
                    e_local: f(s.e_local),
                    e_initial: f(s.e_initial),
                    ratio: f(s.e_local) / f(s.e_initial),
                })
                .collect(),
            region: self.region,
            convention: to,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ratio).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Exponential,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    #[serde(rename = "C")]
    pub c: f64,
    /// `γ` in `C e^{-γ t}` (exponential model only).
    pub rate: Option<f64>,
    /// Exponent in `C t^{slope}` (power model only).
    pub slope: Option<f64>,
    pub window: [f64; 2],
    /// Root-mean-square misfit of `log(ratio)`.
    pub residual: f64,
    /// First time in the window.
    pub onset: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn predict(&self, t: f64) -> f64 {
        match self.model {
            DecayModel::Exponential => self.c * (-self.rate.unwrap_or(0.0) * t).exp(),
            DecayModel::Power => self.c * t.powf(self.slope.unwrap_or(0.0)),
        }
    }
}

/// Latest time at which no reflection off the box walls can have re-entered
/// `B_a`, for data supported within `support_radius` of the origin.
pub fn clean_horizon(prop: &Propagator, map: &ZoneMap, support_radius: f64) -> f64 {
    let g = map.grid;
    let half = 0.5 * (g.nx.min(g.ny) as f64) * g.h;
    let a = map.layout.measurement_radius;
    ((half - support_radius) + (half - a)).max(0.0) / prop.max_speed
}

/// Evolve `data` and record energy on `mask` at each sample time.
pub fn measure_decay(
    prop: &Propagator,
    map: &ZoneMap,
    data: &DataPair,
    mask: &[bool],
    region: RegionTag,
    sample_times: &[f64],
) -> Result<DecaySeries> {
    if data.is_zero() {
        return Err(Error::ZeroInitialData);
    }
    let mut state = data.to_state();
    let e_initial = prop.energy(&state, Some(mask));
    if e_initial <= 0.0 {
        return Err(Error::ZeroInitialData);
    }
    let horizon = clean_horizon(prop, map, prop.support_radius(&state));
    if let Some(&t) = sample_times.iter().find(|&&t| t > horizon) {
        return Err(Error::BoxContamination(format!(
            "sample time {t} exceeds the clean horizon {horizon:.3}"
        )));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("sample times must be strictly increasing".into()));
    }
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut t_now = 0.0;
    for &t in sample_times {
        if t > t_now {
            state = prop.evolve(&state, t_now, t, &HistorySpec::none())?.0;
            t_now = t;
        }
        let e = prop.energy(&state, Some(mask));
        samples.push(DecaySample {
            t,
            e_local: e,
            e_initial,
            ratio: e / e_initial,
        });
    }
    Ok(DecaySeries {
        samples,
        region,
        convention: Convention::Energy,
    })
}

/// Least-squares fit of `log(ratio)` against `t` (odd) or `log t` (even).
/// `window` defaults to the last two thirds of the sampled range.
pub fn fit_decay(series: &DecaySeries, parity: Parity, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (t_first, t_last) = match (series.samples.first(), series.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::InsufficientSamples { needed: MIN_FIT_SAMPLES, got: 0 }),
    };
    let (lo, hi) = window.unwrap_or((t_first + (t_last - t_first) / 3.0, t_last));
    let pts: Vec<&DecaySample> = series.samples.iter().filter(|s| s.t >= lo && s.t <= hi).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: pts.len(),
        });
    }
    if let Some(bad) = pts.iter().find(|s| !(s.ratio > 0.0)) {
        return Err(Error::NonPositiveRatio(bad.ratio));
    }
    let model = match parity {
        Parity::Odd => DecayModel::Exponential,
        Parity::Even => DecayModel::Power,
    };
    if model == DecayModel::Power && pts.iter().any(|s| s.t <= 0.0) {
        return Err(Error::Config("power-law fit needs positive sample times".into()));
    }
    let xs: Vec<f64> = pts
        .iter()
        .map(|s| if model == DecayModel::Power { s.t.ln() } else { s.t })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|s| s.ratio.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let (rate, slope) = match model {
        DecayModel::Exponential => (Some(-slope), None),
        DecayModel::Power => (None, Some(slope)),
    };
    Ok(DecayFit {
        model,
        c: intercept.exp(),
        rate,
        slope,
        window: [lo, hi],
        residual,
        onset: pts[0].t,
        samples: pts.len(),
    })
}

/// Local energy ratio `E(0)/E(T)` when `data` is imposed at time `T` and the
/// flow is run backwards to time 0.
pub fn backward_decay_check(prop: &Propagator, data: &DataPair, horizon: f64, mask: &[bool]) -> Result<f64> {
    if data.is_zero() {
        return Err(Error::ZeroInitialData);
    }
    let terminal = State {
        time: horizon,
        ..data.to_state()
    };
    let e_t = prop.energy(&terminal, Some(mask));
    if e_t <= 0.0 {
        return Err(Error::ZeroInitialData);
    }
    let (s0, _) = prop.evolve_backward(&terminal, horizon, &HistorySpec::none())?;
    Ok(prop.energy(&s0, Some(mask)) / e_t)
}

/// Ensemble of smooth random data: per-member series and the pointwise
/// maximum ratio (a lower envelope of the supremum over all data).
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<DecaySeries>,
    pub envelope: DecaySeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_bumps")]
    pub bumps: usize,
    pub radius_range: (f64, f64),
}

fn default_members() -> usize {
    16
}
fn default_seed() -> u64 {
    20240917
}
fn default_bumps() -> usize {
    2
}

impl EnsembleConfig {
    pub fn new(radius_range: (f64, f64)) -> Self {
        Self {
            members: default_members(),
            seed: default_seed(),
            bumps: default_bumps(),
            radius_range,
        }
    }
}

pub fn ensemble_decay(
    prop: &Propagator,
    map: &ZoneMap,
    support: &[bool],
    mask: &[bool],
    region: RegionTag,
    sample_times: &[f64],
    cfg: &EnsembleConfig,
) -> Result<Ensemble> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut members = Vec::with_capacity(cfg.members);
    for _ in 0..cfg.members {
        let data = random_smooth_pair(map, support, cfg.bumps, cfg.radius_range, &mut rng);
        members.push(measure_decay(prop, map, &data, mask, region, sample_times)?);
    }
    let envelope = DecaySeries {
        samples: (0..sample_times.len())
            .map(|i| {
                let best = members
                    .iter()
                    .map(|m| m.samples[i])
                    .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
                    .expect("ensemble has members");
                best
            })
            .collect(),
        region,
        convention: Convention::Energy,
    };
    Ok(Ensemble { members, envelope })
}

/// Append series as `decay.csv` rows:
/// `run_id,t,E_local,E_initial,ratio,region,convention`.
pub fn write_decay_csv(path: &Path, runs: &[(String, &DecaySeries)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "run_id,t,E_local,E_initial,ratio,region,convention")?;
    for (id, s) in runs {
        for x in &s.samples {
            writeln!(
                f,
                "{id},{:?},{:?},{:?},{:?},{},{}",
                x.t,
                x.e_local,
                x.e_initial,
                x.ratio,
                s.region.as_str(),
                s.convention.as_str()
            )?;
        }
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, ts: impl Iterator<Item = f64>) -> DecaySeries {
        DecaySeries {
            samples: ts
                .map(|t| DecaySample {
                    t,
                    e_local: f(t),
                    e_initial: 1.0,
                    ratio: f(t),
                })
                .collect(),
            region: RegionTag::Ball,
            convention: Convention::Energy,
        }
    }

    #[test]
    fn exponential_fit_is_exact() {
        let s = synthetic(|t| 5.0 * (-3.0 * t).exp(), (0..30).map(|i| 0.1 * i as f64));
        let fit = fit_decay(&s, Parity::Odd, Some((0.0, 3.0))).unwrap();
        assert!((fit.c - 5.0).abs() < 1e-6);
        assert!((fit.rate.unwrap() - 3.0).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn power_fit_is_exact() {
        let s = synthetic(|t| t.powi(-4), (1..30).map(|i| 0.5 * i as f64));
        let fit = fit_decay(&s, Parity::Even, None).unwrap();
        assert!((fit.slope.unwrap() + 4.0).abs() < 1e-6);
        assert!((fit.c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_series_has_no_decay() {
        let s = synthetic(|_| 0.7, (1..12).map(|i| i as f64));
        for p in [Parity::Odd, Parity::Even] {
            let fit = fit_decay(&s, p, None).unwrap();
            assert_eq!(fit.rate.or(fit.slope).unwrap(), 0.0);
            assert!(fit.residual < 1e-15);
        }
    }

    #[test]
    fn fit_errors() {
        let s = synthetic(|t| t, (1..4).map(|i| i as f64));
        assert!(matches!(
            fit_decay(&s, Parity::Odd, None),
            Err(Error::InsufficientSamples { .. })
        ));
        let s = synthetic(|t| 1.0 - t, (0..10).map(|i| 0.2 * i as f64));
        assert!(matches!(
            fit_decay(&s, Parity::Odd, Some((0.0, 2.0))),
            Err(Error::NonPositiveRatio(_))
        ));
    }

    #[test]
    fn conventions_convert() {
        let s = synthetic(|t| (-t).exp(), (0..10).map(|i| i as f64));
        let a = s.converted(Convention::Amplitude);
        for (x, y) in a.samples.iter().zip(&s.samples) {
            assert!((x.ratio * x.ratio - y.ratio).abs() < 1e-15);
        }
        let fa = fit_decay(&a, Parity::Odd, None).unwrap();
        let fe = fit_decay(&s, Parity::Odd, None).unwrap();
        assert!((2.0 * fa.rate.unwrap() - fe.rate.unwrap()).abs() < 1e-12);
    }
}
