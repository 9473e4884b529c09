//! Boundary trace stations and Robin control signals on `∂Ω*`.
//!
//! Every fluid node `p` outside `Ω*` with a 4-neighbour `q` inside is a
//! ghost node carrying one station. The station value is
//! `g = α (u_p + u_q)/2 + β νᵀG∇u`, where the gradient uses `(u_p − u_q)/h`
//! along the axis `q → p` and an interior-only difference along the other
//! axis. Since `g` is affine in `u_p` with the other values taken inside
//! `Ω*`, a Robin solve can recover `u_p` from `g` exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, Metric, RegionMap, Segment, SegmentTag, ZoneMap};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::propagator::SolutionHistory;

#[derive(Debug, Clone)]
pub struct Station {
    pub segment: usize,
    /// Arclength of the station along its segment.
    pub s: f64,
    pub point: Vec2,
    pub normal: Vec2,
    pub ghost: usize,
    pub interior: usize,
    /// Unit grid axis from `interior` to `ghost`.
    pub axis: Vec2,
    /// Neighbours of `interior` along the other axis, `+` then `−`, kept only
    /// if they lie in `Ω*`.
    pub tangential: (Option<usize>, Option<usize>),
    pub tangent_axis: Vec2,
    pub metric: Metric,
    /// Within two cells of a polygon corner: no control is applied.
    pub near_corner: bool,
}

impl Station {
    /// `(coefficient of u_p, remainder)` with `g = coeff·u_p + rest`.
    pub fn affine(&self, u: impl Fn(usize) -> f64, h: f64, alpha: f64, beta: f64) -> (f64, f64) {
        let ge = self.metric.bilinear(self.normal, self.axis);
        let gt = self.metric.bilinear(self.normal, self.tangent_axis);
        let uq = u(self.interior);
        let dt = self.tangential_derivative(&u, h);
        let coeff = 0.5 * alpha + beta * ge / h;
        let rest = 0.5 * alpha * uq - beta * ge * uq / h + beta * gt * dt;
        (coeff, rest)
    }

    fn tangential_derivative(&self, u: &impl Fn(usize) -> f64, h: f64) -> f64 {
        let q = u(self.interior);
        match self.tangential {
            (Some(a), Some(b)) => (u(a) - u(b)) / (2.0 * h),
            (Some(a), None) => (u(a) - q) / h,
            (None, Some(b)) => (q - u(b)) / h,
            (None, None) => 0.0,
        }
    }

    /// `(u at the station, conormal derivative)`.
    pub fn evaluate(&self, u: impl Fn(usize) -> f64, h: f64) -> (f64, f64) {
        let up = u(self.ghost);
        let uq = u(self.interior);
        let de = (up - uq) / h;
        let dt = self.tangential_derivative(&u, h);
        let grad = self.axis * de + self.tangent_axis * dt;
        (0.5 * (up + uq), self.metric.bilinear(self.normal, grad))
    }

    /// Nodes whose values the station reads.
    pub fn nodes(&self) -> Vec<usize> {
        let mut v = vec![self.ghost, self.interior];
        v.extend(self.tangential.0);
        v.extend(self.tangential.1);
        v
    }
}

/// Build one station per ghost node. Segments tagged `Obstacle` carry no
/// stations.
pub fn build_stations(map: &ZoneMap, region: &RegionMap, segments: &[Segment]) -> Result<Vec<Station>> {
    let grid = &map.grid;
    let h = grid.h;
    let s = grid.stride();
    let inside = &region.inside;
    let controllable: Vec<&Segment> = segments.iter().filter(|g| g.tag != SegmentTag::Obstacle).collect();
    if controllable.is_empty() {
        return Err(Error::TraceExtractionFailure("control region has no controllable boundary".into()));
    }
    let corners = region.region.shape.corners();
    let dirs: [(isize, Vec2); 4] = [
        (1, Vec2::new(1.0, 0.0)),
        (-1, Vec2::new(-1.0, 0.0)),
        (s as isize, Vec2::new(0.0, 1.0)),
        (-(s as isize), Vec2::new(0.0, -1.0)),
    ];
    let mut out = Vec::new();
    for p in grid.nodes() {
        if !map.is_fluid(p) || inside[p] {
            continue;
        }
        let pp = grid.point_of(p);
        // (score, interior node, axis, segment, arclength, foot, normal)
        let mut best: Option<(f64, usize, Vec2, usize, f64, Vec2, Vec2)> = None;
        for &(off, dir) in &dirs {
            let q = (p as isize - off) as usize;
            if !inside[q] {
                continue;
            }
            let mid = pp - dir * (0.5 * h);
            let (seg, sarc, foot) = nearest_segment(&controllable, mid);
            let normal = region.region.shape.outward_normal(foot);
            let score = map.metric[q].bilinear(normal, dir);
            if best.map_or(true, |b| score > b.0) {
                best = Some((score, q, dir, seg, sarc, foot, normal));
            }
        }
        let Some((_, q, axis, seg, sarc, foot, normal)) = best else { continue };
        let tangent_axis = Vec2::new(axis.y.abs(), axis.x.abs());
        let step = if tangent_axis.x > 0.5 { 1 } else { s };
        let plus = Some(q + step).filter(|&k| inside[k]);
        let minus = Some(q - step).filter(|&k| inside[k]);
        let near_corner = corners.iter().any(|&c| (c - foot).norm() < 2.0 * h);
        out.push(Station {
            segment: controllable[seg].id,
            s: sarc,
            point: foot,
            normal,
            ghost: p,
            interior: q,
            axis,
            tangential: (plus, minus),
            tangent_axis,
            metric: map.metric[q],
            near_corner,
        });
    }
    if out.is_empty() {
        return Err(Error::TraceExtractionFailure("no ghost nodes around the control region".into()));
    }
    out.sort_by(|a, b| (a.segment, a.s).partial_cmp(&(b.segment, b.s)).unwrap());
    Ok(out)
}

fn nearest_segment(segs: &[&Segment], p: Vec2) -> (usize, f64, Vec2) {
    let mut best = (0, 0.0, p, f64::INFINITY);
    for (i, g) in segs.iter().enumerate() {
        let (d, s, foot) = g.piece.project(p);
        if d < best.3 {
            best = (i, s, foot, d);
        }
    }
    (best.0, best.1, best.2)
}

/// Sampled control on one boundary segment. Values are stored row-major
/// `[time][station]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSignal {
    pub segment_id: usize,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub dnu: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub alpha: f64,
    pub beta: f64,
    pub t: Vec<f64>,
    pub segments: Vec<SegmentSignal>,
}

impl ControlSignal {
    /// Zero signal on the lattice of `stations` and `times`.
    pub fn zeros(stations: &[Station], times: &[f64], alpha: f64, beta: f64) -> ControlSignal {
        let mut segments: BTreeMap<usize, SegmentSignal> = BTreeMap::new();
        for st in stations.iter().filter(|s| !s.near_corner) {
            segments
                .entry(st.segment)
                .or_insert_with(|| SegmentSignal {
                    segment_id: st.segment,
                    s: vec![],
                    u: vec![],
                    dnu: vec![],
                    g: vec![],
                })
                .s
                .push(st.s);
        }
        let nt = times.len();
        let segments = segments
            .into_values()
            .map(|mut g| {
                let n = g.s.len() * nt;
                g.u = vec![0.0; n];
                g.dnu = vec![0.0; n];
                g.g = vec![0.0; n];
                g
            })
            .collect();
        ControlSignal {
            alpha,
            beta,
            t: times.to_vec(),
            segments,
        }
    }

    pub fn scaled(&self, a: f64) -> ControlSignal {
        let mut out = self.clone();
        for seg in &mut out.segments {
            for v in seg.u.iter_mut().chain(seg.dnu.iter_mut()).chain(seg.g.iter_mut()) {
                *v *= a;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.g.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete `L²(∂Ω* × (0, T))` norm with trapezoid weights in `t` and
    /// half-gap weights in `s`.
    pub fn l2_norm(&self, lengths: &BTreeMap<usize, (f64, bool)>) -> f64 {
        let nt = self.t.len();
        let tw: Vec<f64> = (0..nt)
            .map(|j| {
                let lo = if j > 0 { self.t[j] - self.t[j - 1] } else { 0.0 };
                let hi = if j + 1 < nt { self.t[j + 1] - self.t[j] } else { 0.0 };
                0.5 * (lo + hi)
            })
            .collect();
        let mut total = 0.0;
        for seg in &self.segments {
            let (len, closed) = lengths.get(&seg.segment_id).copied().unwrap_or((0.0, false));
            let sw = arc_weights(&seg.s, len, closed);
            let ns = seg.s.len();
            for (j, w_t) in tw.iter().enumerate() {
                for (i, w_s) in sw.iter().enumerate() {
                    let g = seg.g[j * ns + i];
                    total += w_t * w_s * g * g;
                }
            }
        }
        total.sqrt()
    }

    /// Value at station arclength `s` on `segment_id` at sample row `j`,
    /// interpolating linearly in `s` when the station is off-lattice.
    pub fn value_at(&self, segment_id: usize, s: f64, j: usize, period: Option<f64>) -> Result<f64> {
        let seg = self
            .segments
            .iter()
            .find(|g| g.segment_id == segment_id)
            .ok_or_else(|| Error::IncompatibleSignal(format!("no samples for segment {segment_id}")))?;
        let ns = seg.s.len();
        if ns == 0 {
            return Ok(0.0);
        }
        let row = &seg.g[j * ns..(j + 1) * ns];
        let idx = seg.s.partition_point(|&x| x < s);
        if idx < ns && seg.s[idx] == s {
            return Ok(row[idx]);
        }
        let (i0, i1, s0, s1) = match (idx, period) {
            (0, Some(p)) => (ns - 1, 0, seg.s[ns - 1] - p, seg.s[0]),
            (i, Some(p)) if i == ns => (ns - 1, 0, seg.s[ns - 1], seg.s[0] + p),
            (0, None) => return Ok(row[0]),
            (i, None) if i == ns => return Ok(row[ns - 1]),
            (i, _) => (i - 1, i, seg.s[i - 1], seg.s[i]),
        };
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        Ok(row[i0] * (1.0 - w) + row[i1] * w)
    }
}

fn arc_weights(s: &[f64], len: f64, closed: bool) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 {
                s[i] - s[i - 1]
            } else if closed {
                s[0] + len - s[n - 1]
            } else {
                s[0]
            };
            let next = if i + 1 < n {
                s[i + 1] - s[i]
            } else if closed {
                s[0] + len - s[n - 1]
            } else {
                (len - s[n - 1]).max(0.0)
            };
            let (prev, next) = if closed || (i > 0 && i + 1 < n) {
                (0.5 * prev, 0.5 * next)
            } else if i == 0 && i + 1 < n {
                (prev, 0.5 * next)
            } else if i + 1 == n && i > 0 {
                (0.5 * prev, next)
            } else {
                (prev, next)
            };
            prev + next
        })
        .collect()
}

/// Evaluate the Robin trace at every recorded step of `history`.
pub fn boundary_trace(history: &SolutionHistory, stations: &[Station], grid: &Grid, alpha: f64, beta: f64) -> Result<ControlSignal> {
    if alpha * alpha + beta * beta == 0.0 {
        return Err(Error::Config("alpha and beta cannot both vanish".into()));
    }
    let mut sig = ControlSignal::zeros(stations, &history.times, alpha, beta);
    let nt = history.steps();
    let slot_of = |k: usize| {
        history.slot(k).ok_or_else(|| {
            let (i, j) = grid.coords(k).unwrap_or((usize::MAX, usize::MAX));
            Error::TraceExtractionFailure(format!("history has no slab value at node ({i}, {j})"))
        })
    };
    let seg_pos: BTreeMap<usize, usize> = sig.segments.iter().enumerate().map(|(i, g)| (g.segment_id, i)).collect();
    let mut col = BTreeMap::new();
    for st in stations.iter().filter(|s| !s.near_corner) {
        let counter = col.entry(st.segment).or_insert(0usize);
        let slots: Vec<(usize, usize)> = st.nodes().into_iter().map(|k| slot_of(k).map(|s| (k, s))).collect::<Result<_>>()?;
        let seg = &mut sig.segments[seg_pos[&st.segment]];
        let ns = seg.s.len();
        for j in 0..nt {
            let slab = history.slab(j);
            let lookup = |k: usize| slots.iter().find(|(n, _)| *n == k).map(|(_, s)| slab[*s]).unwrap_or(0.0);
            let (ub, dnu) = st.evaluate(lookup, grid.h);
            let idx = j * ns + *counter;
            seg.u[idx] = ub;
            seg.dnu[idx] = dnu;
            seg.g[idx] = alpha * ub + beta * dnu;
        }
        *counter += 1;
    }
    Ok(sig)
}

/// `control.csv`: `segment_id,s,t,u,dnu,g`, one row per sample, values in
/// shortest round-trip form.
pub fn write_control_csv(path: &Path, sig: &ControlSignal) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "segment_id,s,t,u,dnu,g")?;
    for seg in &sig.segments {
        let ns = seg.s.len();
        for (j, t) in sig.t.iter().enumerate() {
            for i in 0..ns {
                let k = j * ns + i;
                writeln!(
                    f,
                    "{},{:?},{:?},{:?},{:?},{:?}",
                    seg.segment_id, seg.s[i], t, seg.u[k], seg.dnu[k], seg.g[k]
                )?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_control_csv(path: &Path, alpha: f64, beta: f64) -> Result<ControlSignal> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let bad = |line: usize, msg: &str| Error::IncompatibleSignal(format!("{}:{line}: {msg}", path.display()));
    let mut rows: BTreeMap<usize, Vec<(f64, f64, [f64; 3])>> = BTreeMap::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "segment_id,s,t,u,dnu,g" {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(n + 1, "expected 6 columns"));
        }
        let id: usize = cols[0].parse().map_err(|_| bad(n + 1, "segment_id"))?;
        let num = |c: &str| c.trim().parse::<f64>().map_err(|_| bad(n + 1, "number"));
        rows.entry(id)
            .or_default()
            .push((num(cols[1])?, num(cols[2])?, [num(cols[3])?, num(cols[4])?, num(cols[5])?]));
    }
    let mut times: Option<Vec<f64>> = None;
    let mut segments = Vec::new();
    for (id, mut r) in rows {
        r.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
        let mut ts: Vec<f64> = r.iter().map(|x| x.1).collect();
        ts.dedup();
        let mut ss: Vec<f64> = r.iter().map(|x| x.0).collect();
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        if ss.len() * ts.len() != r.len() {
            return Err(Error::IncompatibleSignal(format!("segment {id}: samples do not form a lattice")));
        }
        match &times {
            Some(t0) if *t0 != ts => {
                return Err(Error::IncompatibleSignal(format!("segment {id}: time samples differ")));
            }
            _ => times = Some(ts),
        }
        segments.push(SegmentSignal {
            segment_id: id,
            s: ss,
            u: r.iter().map(|x| x.2[0]).collect(),
            dnu: r.iter().map(|x| x.2[1]).collect(),
            g: r.iter().map(|x| x.2[2]).collect(),
        });
    }
    Ok(ControlSignal {
        alpha,
        beta,
        t: times.unwrap_or_default(),
        segments,
    })
}
