//! Relative entropy between a grid solution and a calibrated network, bulk
//! error, calibration residuals at probe points, the terms of the relative
//! entropy inequality, weak curvature residuals, Gronwall fits and inclusion
//! margins.

use crate::geom::{M2, V2};
use crate::localfields::Residuals;
use crate::netcalib::{CalibError, CalibParams, Calibration, Sample};
use crate::network::{phase_at, EndSpec, Network, PhaseAt};
use crate::par::map_range;
use crate::tensions::SurfaceTensions;
use crate::weakmbo::{extract_interfaces, InterfaceSoup, PhaseGrid, Segment};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("need at least {need} snapshots, got {got}")]
    Snapshots { need: usize, got: usize },
    #[error("junction count changes along the trajectory")]
    Topology,
    #[error("{0} soups for {1} calibrated snapshots")]
    Mismatch(usize, usize),
    #[error(transparent)]
    Calib(#[from] CalibError),
}

/// Match-mode threshold `2h·E` for a strong solution of energy `energy`.
pub fn grid_floor(h: f64, energy: f64) -> f64 {
    2.0 * h * energy
}

/// Calibrations of consecutive snapshots of one strong solution, sharing
/// localization parameters.
#[derive(Clone, Debug)]
pub struct CalibratedTrajectory {
    pub times: Vec<f64>,
    pub cals: Vec<Calibration>,
    /// Spatial finite-difference step.
    pub h_fd: f64,
}

/// Field values and first derivatives of one pair field at a point.
#[derive(Clone, Copy, Debug)]
pub struct PairDerivs {
    pub xi: V2,
    /// `∂_b ξ_a` at row `a`, column `b`.
    pub grad_xi: M2,
    pub dt_xi: V2,
    pub b: V2,
    pub grad_b: M2,
}

impl PairDerivs {
    pub fn div_xi(&self) -> f64 {
        self.grad_xi.trace()
    }

    pub fn div_b(&self) -> f64 {
        self.grad_b.trace()
    }

    /// `(B·∇)ξ`
    pub fn advection(&self) -> V2 {
        self.grad_xi.apply(self.b)
    }

    /// `∂_t ξ + (B·∇)ξ + (∇B)ᵀξ`
    pub fn transport(&self) -> V2 {
        self.dt_xi + self.advection() + self.grad_b.transpose().apply(self.xi)
    }

    pub fn residuals(&self) -> Residuals {
        Residuals {
            transport: self.transport().norm(),
            length: (2.0 * self.xi.dot(self.dt_xi) + 2.0 * self.xi.dot(self.advection())).abs(),
            dissipation: (self.b.dot(self.xi) + self.div_xi()).abs(),
        }
    }
}

impl CalibratedTrajectory {
    /// Calibrates every snapshot. Junction velocities come from central
    /// differences of the junction positions (one-sided at the ends); the
    /// localization parameters of the first snapshot are reused throughout
    /// unless `params` is given.
    pub fn build(snapshots: &[Network], params: Option<CalibParams>) -> Result<Self, EntropyError> {
        let n = snapshots.len();
        if n == 0 {
            return Err(EntropyError::Snapshots { need: 1, got: 0 });
        }
        let nj = snapshots[0].junctions.len();
        if snapshots.iter().any(|s| s.junctions.len() != nj) {
            return Err(EntropyError::Topology);
        }
        let vel = |k: usize| -> Option<Vec<V2>> {
            if n < 2 {
                return None;
            }
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            let dt = snapshots[b].t - snapshots[a].t;
            Some((0..nj).map(|j| (snapshots[b].junctions[j].position - snapshots[a].junctions[j].position) / dt).collect())
        };
        let first = Calibration::build(&snapshots[0], params, vel(0).as_deref())?;
        let params = first.params;
        let rest = map_range(n - 1, |k| Calibration::build(&snapshots[k + 1], Some(params), vel(k + 1).as_deref()));
        let mut cals = vec![first];
        for c in rest {
            cals.push(c?);
        }
        Ok(CalibratedTrajectory { times: snapshots.iter().map(|s| s.t).collect(), cals, h_fd: 1e-4 * snapshots[0].r_c })
    }

    pub fn len(&self) -> usize {
        self.cals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cals.is_empty()
    }

    /// Snapshots and weights of the second-order time derivative at snapshot
    /// `k`: three-point central inside, three-point one-sided at the ends.
    pub fn time_stencil(&self, k: usize) -> Vec<(usize, f64)> {
        let n = self.len();
        match n {
            0 | 1 => vec![],
            2 => {
                let w = 1.0 / (self.times[1] - self.times[0]);
                vec![(0, -w), (1, w)]
            }
            _ => {
                let a = k.saturating_sub(1).min(n - 3);
                let ts = [self.times[a], self.times[a + 1], self.times[a + 2]];
                let t = self.times[k];
                (0..3)
                    .map(|m| {
                        let (p, q) = ((m + 1) % 3, (m + 2) % 3);
                        (a + m, ((t - ts[p]) + (t - ts[q])) / ((ts[m] - ts[p]) * (ts[m] - ts[q])))
                    })
                    .collect()
            }
        }
    }

    /// Derivatives of `ξ_{i,j}` and `B` at snapshot `k`.
    pub fn derivs(&self, k: usize, x: V2, i: usize, j: usize) -> PairDerivs {
        let c = &self.cals[k];
        let h = self.h_fd;
        let s = |y: V2| c.eval(y);
        let (px, mx, py, my) = (s(x + V2::new(h, 0.0)), s(x - V2::new(h, 0.0)), s(x + V2::new(0.0, h)), s(x - V2::new(0.0, h)));
        let d = |a: &Sample, b: &Sample, f: &dyn Fn(&Sample) -> V2| (f(a) - f(b)) / (2.0 * h);
        let xi_of = |q: &Sample| q.pair(i, j);
        let b_of = |q: &Sample| q.b;
        let here = s(x);
        let dt_xi = self.time_stencil(k).into_iter().fold(V2::ZERO, |acc, (m, w)| acc + self.cals[m].xi(x, i, j) * w);
        PairDerivs {
            xi: here.pair(i, j),
            grad_xi: M2::from_cols(d(&px, &mx, &xi_of), d(&py, &my, &xi_of)),
            dt_xi,
            b: here.b,
            grad_b: M2::from_cols(d(&px, &mx, &b_of), d(&py, &my, &b_of)),
        }
    }
}

/// Per-segment contributions `2σ_{i,j}|S|(1 − ξ_{i,j}·n)`.
pub fn segment_entropy(soup: &InterfaceSoup, cal: &Calibration) -> Vec<f64> {
    let sigma = &cal.net.sigma;
    map_range(soup.segments.len(), |k| {
        let s = &soup.segments[k];
        let (i, j) = s.pair;
        2.0 * sigma.get(i, j) * s.len * (1.0 - cal.xi(s.mid, i, j).dot(s.normal))
    })
}

/// Surface form `Σ_{i≠j} σ_{i,j} ∫_{I_{i,j}} (1 − ξ_{i,j}·n_{i,j})`, midpoint rule.
pub fn relative_entropy(soup: &InterfaceSoup, cal: &Calibration) -> f64 {
    segment_entropy(soup, cal).iter().sum()
}

/// Volume form `E[χ] − 2 Σ_i ∫ χ_i ∇·ξ_i`, with `E[χ]` from the extracted
/// interfaces and `∇·ξ_i` by central differences of step `h_fd` at cell centres.
pub fn entropy_divergence_form(grid: &PhaseGrid, cal: &Calibration, h_fd: f64) -> f64 {
    let energy = extract_interfaces(grid).energy(&cal.net.sigma);
    energy - 2.0 * divergence_integral(grid, cal, h_fd)
}

/// `Σ_i ∫ χ_i ∇·ξ_i` by the midpoint rule on the grid cells. Cells whose
/// centre lies outside every localization support are skipped.
pub fn divergence_integral(grid: &PhaseGrid, cal: &Calibration, h_fd: f64) -> f64 {
    let nx = grid.nx;
    let p = cal.net.phases;
    let rows = map_range(grid.ny, |j| {
        let mut acc = 0.0;
        for i in 0..nx {
            let ph = grid.get(i, j);
            let x = grid.center(i, j);
            if ph >= p || cal.eta(x).is_empty() {
                continue;
            }
            let xi = |y: V2| cal.eval(y).xi_phase[ph];
            let dx = (xi(x + V2::new(h_fd, 0.0)) - xi(x - V2::new(h_fd, 0.0))).x;
            let dy = (xi(x + V2::new(0.0, h_fd)) - xi(x - V2::new(0.0, h_fd))).y;
            acc += (dx + dy) / (2.0 * h_fd);
        }
        acc * grid.h * grid.h
    });
    rows.iter().sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct VolumeError {
    /// `Σ_i ∫ |χ_i − χ̄_i| min{dist(x, ∂Ω̄_i), 1}`
    pub dist_form: f64,
    /// `Σ_i ∫ |χ_i − χ̄_i| |ϑ_i|`
    pub weight_form: f64,
    /// Area where the grid phase differs from the strong phase.
    pub mismatch_area: f64,
}

fn boundary_distance(cal: &Calibration, x: V2, i: usize) -> f64 {
    cal.net
        .curves
        .iter()
        .enumerate()
        .filter(|(_, c)| c.left == i || c.right == i)
        .map(|(m, _)| cal.geoms[m].project(x).dist)
        .fold(f64::INFINITY, f64::min)
}

/// Bulk error of `grid` against the snapshot calibrated by `cal`.
pub fn volume_error(grid: &PhaseGrid, cal: &Calibration) -> VolumeError {
    let nx = grid.nx;
    let a = grid.h * grid.h;
    let parts = map_range(grid.ny, |j| {
        let mut v = VolumeError::default();
        for i in 0..nx {
            let x = grid.center(i, j);
            let p = grid.get(i, j);
            let q = match phase_at(&cal.net, &cal.geoms, x) {
                Ok(PhaseAt::Phase(q)) => q,
                _ => continue,
            };
            if p == q {
                continue;
            }
            v.mismatch_area += a;
            let w = cal.weights(x);
            for ph in [p, q] {
                if ph < cal.net.phases {
                    v.dist_form += a * boundary_distance(cal, x, ph).min(1.0);
                    v.weight_form += a * w[ph].abs();
                }
            }
        }
        v
    });
    parts.iter().fold(VolumeError::default(), |s, v| VolumeError {
        dist_form: s.dist_form + v.dist_form,
        weight_form: s.weight_form + v.weight_form,
        mismatch_area: s.mismatch_area + v.mismatch_area,
    })
}

/// Probe layout for residual sweeps: points at distances
/// `r_loc·10^u`, `u` evenly spaced in `[log10 d_min, log10 d_max]`, on both
/// sides of every curve.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ProbeSpec {
    /// Smallest and largest distance as fractions of the localization radius.
    pub d_min: f64,
    pub d_max: f64,
    pub levels: usize,
    /// Evenly spaced foot points per curve.
    pub along: usize,
    /// Extra foot points at these multiples of the localization radius from
    /// each junction end. Foot points stay clear of free ends.
    pub near_ends: Vec<f64>,
    /// Snapshot to probe; defaults to the middle one.
    pub snapshot: Option<usize>,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec { d_min: 0.004, d_max: 0.4, levels: 7, along: 8, near_ends: vec![0.1, 0.5, 1.0, 2.0], snapshot: None }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProbeRow {
    pub x: f64,
    pub y: f64,
    pub pair: (usize, usize),
    pub level: usize,
    pub dist: f64,
    pub transport: f64,
    pub length: f64,
    pub dissipation: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Stat {
    pub max: f64,
    pub l2: f64,
    /// Log-log slope of the per-level maximum against distance, fitted over
    /// levels above `RESIDUAL_FLOOR`; `None` when fewer than two qualify.
    pub slope: Option<f64>,
}

/// Residuals below this are treated as exact zeros when fitting slopes.
pub const RESIDUAL_FLOOR: f64 = 1e-11;

#[derive(Clone, Debug, Serialize)]
pub struct PairResiduals {
    pub pair: (usize, usize),
    pub transport: Stat,
    pub length: Stat,
    pub dissipation: Stat,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    pub pairs: Vec<PairResiduals>,
    /// Max over probes and phase triples of `|σ_ij ξ_ij + σ_jk ξ_jk + σ_ki ξ_ki|`.
    pub herring_max: f64,
    /// Max over probes and pairs of `|σ_ij ξ_ij − (ξ_i − ξ_j)|`.
    pub frame_max: f64,
    /// Min over probes and all pairs of `(1 − |ξ_ij|) / min(dist², 1)`.
    pub coercivity_min: f64,
    /// Largest `|ξ_ij|` over probes for pairs without an interface.
    pub absent_max_norm: f64,
    pub decades: f64,
    #[serde(skip)]
    pub rows: Vec<ProbeRow>,
}

impl ResidualReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("x,y,i,j,level,dist,transport,length,dissipation\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{},{},{},{:e},{:e},{:e},{:e}\n",
                r.x, r.y, r.pair.0, r.pair.1, r.level, r.dist, r.transport, r.length, r.dissipation
            ));
        }
        s
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pts.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    linear_fit(&pts).map(|f| f.0)
}

/// Slope, intercept and R² of the least-squares line through `pts`.
fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

fn stat(rows: &[&ProbeRow], levels: &[f64], f: impl Fn(&ProbeRow) -> f64) -> Stat {
    let max = rows.iter().map(|r| f(r)).fold(0.0, f64::max);
    let l2 = (rows.iter().map(|r| f(r).powi(2)).sum::<f64>() / rows.len().max(1) as f64).sqrt();
    let per_level: Vec<(f64, f64)> = levels
        .iter()
        .enumerate()
        .map(|(l, &d)| (d, rows.iter().filter(|r| r.level == l).map(|r| f(r)).fold(0.0, f64::max)))
        .filter(|p| p.1 > RESIDUAL_FLOOR)
        .collect();
    Stat { max, l2, slope: loglog_slope(&per_level) }
}

/// Pinned free ends do not move by curvature; probes keep this many
/// localization radii away from them.
const FREE_END_MARGIN: f64 = 3.0;

fn probe_points(cal: &Calibration, spec: &ProbeSpec) -> (Vec<(V2, (usize, usize), usize)>, Vec<f64>) {
    let r = cal.params.r_loc;
    let levels: Vec<f64> = (0..spec.levels)
        .map(|l| {
            let u = if spec.levels > 1 { l as f64 / (spec.levels - 1) as f64 } else { 0.0 };
            r * spec.d_min * (spec.d_max / spec.d_min).powf(u)
        })
        .collect();
    let mut out = Vec::new();
    for (m, c) in cal.net.curves.iter().enumerate() {
        let g = &cal.geoms[m];
        let margin = |e: usize| if c.ends[e] == EndSpec::Free { FREE_END_MARGIN * r } else { 0.0 };
        let (lo, hi) = (margin(0), g.length - margin(1));
        if hi <= lo {
            continue;
        }
        let mut s: Vec<f64> = (0..spec.along).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / spec.along as f64).collect();
        for (e, end_s, dir) in [(0, 0.0, 1.0), (1, g.length, -1.0)] {
            if matches!(c.ends[e], EndSpec::Junction(_)) {
                for &f in &spec.near_ends {
                    let sv = end_s + dir * f * r;
                    if sv > lo && sv < hi {
                        s.push(sv);
                    }
                }
            }
        }
        let pair = (c.left.min(c.right), c.left.max(c.right));
        for &sv in &s {
            let f = g.at(sv);
            for (l, &d) in levels.iter().enumerate() {
                for side in [-1.0, 1.0] {
                    out.push((f.point + f.normal * (side * d), pair, l));
                }
            }
        }
    }
    (out, levels)
}

/// Residuals of the calibration identities on probes around the snapshot
/// chosen by `spec` (interior snapshots get central time differences).
pub fn calibration_residuals(traj: &CalibratedTrajectory, spec: &ProbeSpec) -> Result<ResidualReport, EntropyError> {
    if traj.len() < 3 {
        return Err(EntropyError::Snapshots { need: 3, got: traj.len() });
    }
    let k = spec.snapshot.unwrap_or(traj.len() / 2).clamp(1, traj.len() - 2);
    let cal = &traj.cals[k];
    let sigma = &cal.net.sigma;
    let p = cal.net.phases;
    let (probes, levels) = probe_points(cal, spec);
    struct Out {
        row: ProbeRow,
        herring: f64,
        frame: f64,
        coercive: f64,
        absent: f64,
    }
    let outs = map_range(probes.len(), |n| {
        let (x, pair, level) = probes[n];
        let d = traj.derivs(k, x, pair.0, pair.1).residuals();
        let s = cal.eval(x);
        let mut herring: f64 = 0.0;
        let mut frame: f64 = 0.0;
        let mut coercive = f64::INFINITY;
        let mut absent: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                if i == j {
                    continue;
                }
                frame = frame.max((s.pair(i, j) * sigma.get(i, j) - (s.xi_phase[i] - s.xi_phase[j])).norm());
                let dist = cal.pair_distance(x, i, j);
                if dist.is_infinite() {
                    absent = absent.max(s.pair(i, j).norm());
                }
                if dist > 0.0 {
                    coercive = coercive.min((1.0 - s.pair(i, j).norm()) / (dist * dist).min(1.0));
                }
                for l in 0..p {
                    if l != i && l != j {
                        let v = s.pair(i, j) * sigma.get(i, j) + s.pair(j, l) * sigma.get(j, l) + s.pair(l, i) * sigma.get(l, i);
                        herring = herring.max(v.norm());
                    }
                }
            }
        }
        Out {
            row: ProbeRow {
                x: x.x,
                y: x.y,
                pair,
                level,
                dist: cal.pair_distance(x, pair.0, pair.1),
                transport: d.transport,
                length: d.length,
                dissipation: d.dissipation,
            },
            herring,
            frame,
            coercive,
            absent,
        }
    });
    let rows: Vec<ProbeRow> = outs.iter().map(|o| o.row).collect();
    let mut pairs: Vec<(usize, usize)> = rows.iter().map(|r| r.pair).collect();
    pairs.sort();
    pairs.dedup();
    let pairs = pairs
        .into_iter()
        .map(|pr| {
            let rs: Vec<&ProbeRow> = rows.iter().filter(|r| r.pair == pr).collect();
            PairResiduals {
                pair: pr,
                transport: stat(&rs, &levels, |r| r.transport),
                length: stat(&rs, &levels, |r| r.length),
                dissipation: stat(&rs, &levels, |r| r.dissipation),
            }
        })
        .collect();
    Ok(ResidualReport {
        t: traj.times[k],
        pairs,
        herring_max: outs.iter().map(|o| o.herring).fold(0.0, f64::max),
        frame_max: outs.iter().map(|o| o.frame).fold(0.0, f64::max),
        coercivity_min: outs.iter().map(|o| o.coercive).fold(f64::INFINITY, f64::min),
        absent_max_norm: outs.iter().map(|o| o.absent).fold(0.0, f64::max),
        decades: (spec.d_max / spec.d_min).log10(),
        rows,
    })
}

/// Integrands of the relative entropy inequality at one segment, before the
/// factor `2σ|S|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Integrands {
    pub entropy: f64,
    /// `½|V + ∇·ξ|²`
    pub lhs_curvature: f64,
    /// `½|V n − (B·ξ)ξ|²`
    pub lhs_velocity: f64,
    pub r_dt: [f64; 2],
    pub r_dissip: [f64; 6],
}

impl Integrands {
    pub fn at(d: &PairDerivs, n: V2, v: f64) -> Integrands {
        let xi = d.xi;
        let div = d.div_xi();
        let bx = d.b.dot(xi);
        let w = n - xi;
        let ndx = 1.0 - n.dot(xi);
        Integrands {
            entropy: ndx,
            lhs_curvature: 0.5 * (v + div).powi(2),
            lhs_velocity: 0.5 * (n * v - xi * bx).norm2(),
            r_dt: [-(xi.dot(d.dt_xi) + xi.dot(d.advection())), -d.transport().dot(w)],
            r_dissip: [
                0.5 * (div + bx).powi(2),
                -0.5 * bx * bx * (1.0 - xi.norm2()),
                -ndx * div * bx,
                (d.b - xi * bx).dot(n) * (v + div),
                ndx * d.div_b(),
                -w.dot(d.grad_b.apply(w)),
            ],
        }
    }

    fn scaled_add(&mut self, o: &Integrands, s: f64) {
        self.entropy += s * o.entropy;
        self.lhs_curvature += s * o.lhs_curvature;
        self.lhs_velocity += s * o.lhs_velocity;
        for k in 0..2 {
            self.r_dt[k] += s * o.r_dt[k];
        }
        for k in 0..6 {
            self.r_dissip[k] += s * o.r_dissip[k];
        }
    }

    pub fn lhs(&self) -> f64 {
        self.lhs_curvature + self.lhs_velocity
    }

    pub fn r_dt_total(&self) -> f64 {
        self.r_dt.iter().sum()
    }

    pub fn r_dissip_total(&self) -> f64 {
        self.r_dissip.iter().sum()
    }
}

/// Interface integrals of every term at one time.
pub fn interface_terms(soup: &InterfaceSoup, traj: &CalibratedTrajectory, k: usize) -> (Integrands, f64) {
    let sigma = &traj.cals[k].net.sigma;
    let segs: Vec<&Segment> = soup.segments.iter().filter(|s| s.velocity.is_some()).collect();
    let parts = map_range(segs.len(), |n| {
        let s = segs[n];
        let d = traj.derivs(k, s.mid, s.pair.0, s.pair.1);
        (Integrands::at(&d, s.normal, s.velocity.unwrap_or(0.0)), 2.0 * sigma.get(s.pair.0, s.pair.1) * s.len)
    });
    let mut tot = Integrands::default();
    for (g, w) in &parts {
        tot.scaled_add(g, *w);
    }
    (tot, soup.velocity_coverage())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TermRow {
    pub t: f64,
    /// Relative entropy on the segments carrying velocities.
    pub entropy: f64,
    pub at_t: Integrands,
    /// Time integrals from the first time up to `t`.
    pub lhs: f64,
    pub r_dt: f64,
    pub r_dissip: f64,
    /// `E(0) + R_dt + R_dissip − E(t) − LHS`
    pub slack: f64,
    pub coverage: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipationReport {
    pub rows: Vec<TermRow>,
    pub min_slack: f64,
    pub coverage_warning: bool,
}

/// Terms of the relative entropy inequality along a trajectory of soups with
/// velocities matched one-to-one with the calibrated snapshots. Time
/// integrals use the trapezoid rule.
pub fn dissipation_terms(soups: &[InterfaceSoup], traj: &CalibratedTrajectory) -> Result<DissipationReport, EntropyError> {
    if soups.len() != traj.len() {
        return Err(EntropyError::Mismatch(soups.len(), traj.len()));
    }
    let per: Vec<(Integrands, f64)> = (0..soups.len()).map(|k| interface_terms(&soups[k], traj, k)).collect();
    let mut rows = Vec::with_capacity(per.len());
    let (mut lhs, mut rdt, mut rdi) = (0.0, 0.0, 0.0);
    let e0 = per.first().map_or(0.0, |p| p.0.entropy);
    for k in 0..per.len() {
        if k > 0 {
            let dt = traj.times[k] - traj.times[k - 1];
            let (a, b) = (&per[k - 1].0, &per[k].0);
            lhs += 0.5 * dt * (a.lhs() + b.lhs());
            rdt += 0.5 * dt * (a.r_dt_total() + b.r_dt_total());
            rdi += 0.5 * dt * (a.r_dissip_total() + b.r_dissip_total());
        }
        let e = per[k].0.entropy;
        rows.push(TermRow {
            t: traj.times[k],
            entropy: e,
            at_t: per[k].0,
            lhs,
            r_dt: rdt,
            r_dissip: rdi,
            slack: e0 + rdt + rdi - e - lhs,
            coverage: per[k].1,
        });
    }
    Ok(DissipationReport {
        min_slack: rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min),
        coverage_warning: rows.iter().any(|r| r.coverage < 0.95),
        rows,
    })
}

/// Smooth bump `exp(1 − 1/(1 − |x−c|²/ρ²))` of height one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Bump {
    pub center: V2,
    pub radius: f64,
}

impl Bump {
    pub fn value_grad(&self, x: V2) -> (f64, V2) {
        let d = x - self.center;
        let r2 = d.norm2() / (self.radius * self.radius);
        if r2 >= 1.0 {
            return (0.0, V2::ZERO);
        }
        let q = 1.0 - r2;
        let phi = (1.0 - 1.0 / q).exp();
        (phi, d * (-2.0 * phi / (q * q * self.radius * self.radius)))
    }
}

/// For each bump `φ` and direction `e_k`, `Σ 2σ ∫ (V n·B + (Id − n⊗n):∇B)`
/// with `B = φ e_k`, divided by `Σ 2σ|S|`. Segments without velocity are skipped.
pub fn weak_mcf_residual(soup: &InterfaceSoup, sigma: &SurfaceTensions, bumps: &[Bump]) -> Vec<[f64; 2]> {
    let segs: Vec<&Segment> = soup.segments.iter().filter(|s| s.velocity.is_some()).collect();
    let norm: f64 = segs.iter().map(|s| 2.0 * sigma.get(s.pair.0, s.pair.1) * s.len).sum();
    bumps
        .iter()
        .map(|b| {
            let mut acc = [0.0; 2];
            for s in &segs {
                let w = 2.0 * sigma.get(s.pair.0, s.pair.1) * s.len;
                let v = s.velocity.unwrap_or(0.0);
                let (phi, g) = b.value_grad(s.mid);
                let n = s.normal;
                let nd = n.dot(g);
                acc[0] += w * (v * n.x * phi + g.x - n.x * nd);
                acc[1] += w * (v * n.y * phi + g.y - n.y * nd);
            }
            if norm > 0.0 {
                [acc[0] / norm, acc[1] / norm]
            } else {
                acc
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GronwallFit {
    /// `E(0)` vanishes; only the largest value is meaningful.
    Uniqueness { max_e: f64 },
    Exponential {
        c: f64,
        log_e0: f64,
        r2: f64,
        /// Rate used for the envelope check, `C + 0.1|C|`.
        envelope_c: f64,
        /// `max_t E(t) / (E(0) e^{envelope_c · t})`.
        worst_ratio: f64,
        envelope_holds: bool,
        clipped: usize,
    },
}

impl GronwallFit {
    pub fn rate(&self) -> Option<f64> {
        match self {
            GronwallFit::Exponential { c, .. } => Some(*c),
            GronwallFit::Uniqueness { .. } => None,
        }
    }
}

/// Least-squares fit of `ln E(t)` by a line over the run, with the envelope
/// check `E(t) ≤ E(0) e^{1.1 C t}`. Non-positive values are clipped to
/// `1e-12·max E`.
pub fn gronwall_fit(times: &[f64], e: &[f64]) -> GronwallFit {
    let max_e = e.iter().cloned().fold(0.0, f64::max);
    if e.first().is_none_or(|&e0| e0 <= 0.0) || times.len() < 2 {
        return GronwallFit::Uniqueness { max_e };
    }
    let eps = 1e-12 * max_e;
    let clipped = e.iter().filter(|&&v| v <= 0.0).count();
    let pts: Vec<(f64, f64)> = times.iter().zip(e).map(|(&t, &v)| (t - times[0], v.max(eps).ln())).collect();
    let (c, log_e0, r2) = linear_fit(&pts).unwrap_or((0.0, e[0].ln(), 1.0));
    let envelope_c = c + 0.1 * c.abs();
    let worst_ratio = pts.iter().map(|&(t, le)| (le - e[0].ln() - envelope_c * t).exp()).fold(0.0, f64::max);
    GronwallFit::Exponential { c, log_e0, r2, envelope_c, worst_ratio, envelope_holds: worst_ratio <= 1.0 + 1e-12, clipped }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionMargin {
    pub pair: (usize, usize),
    pub length: f64,
    /// Fraction of weak interface length within `tol` of the strong interface of the same pair.
    pub fraction: f64,
    pub max_dist: f64,
}

/// Per-pair inclusion of weak interfaces in the `tol`-neighbourhood of the
/// strong ones. Pairs of the strong network without weak interface report
/// fraction one.
pub fn inclusion_check(soup: &InterfaceSoup, net: &Network, tol: f64) -> Vec<InclusionMargin> {
    let geoms = net.geometry();
    let mut pairs: Vec<(usize, usize)> = soup.segments.iter().map(|s| s.pair).collect();
    pairs.extend(net.curves.iter().map(|c| (c.left.min(c.right), c.left.max(c.right))));
    pairs.sort();
    pairs.dedup();
    pairs
        .into_iter()
        .map(|pr| {
            let curves: Vec<usize> =
                (0..net.curves.len()).filter(|&m| (net.curves[m].left.min(net.curves[m].right), net.curves[m].left.max(net.curves[m].right)) == pr).collect();
            let segs: Vec<&Segment> = soup.segments.iter().filter(|s| s.pair == pr).collect();
            let dists = map_range(segs.len(), |k| curves.iter().map(|&m| geoms[m].project(segs[k].mid).dist).fold(f64::INFINITY, f64::min));
            let length: f64 = segs.iter().map(|s| s.len).sum();
            let inside: f64 = segs.iter().zip(&dists).filter(|(_, &d)| d <= tol).map(|(s, _)| s.len).sum();
            InclusionMargin {
                pair: pr,
                length,
                fraction: if length > 0.0 { inside / length } else { 1.0 },
                max_dist: dists.iter().cloned().fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Interfaces of a network as a segment soup: one segment per polygon edge,
/// normals from phase `i` into `j`, and normal velocity `−κ` along
/// `n̄_{left,right}` from the nodal curvature.
pub fn network_soup(net: &Network) -> InterfaceSoup {
    let geoms = net.geometry();
    let mut segments = Vec::new();
    for (m, c) in net.curves.iter().enumerate() {
        let g = &geoms[m];
        let k = g.nodes.len();
        let n_seg = g.num_segments();
        let flip = c.left > c.right;
        for e in 0..n_seg {
            let (a, b) = (g.nodes[e], g.nodes[(e + 1) % k]);
            let len = (b - a).norm();
            if len <= 0.0 {
                continue;
            }
            let right_normal = (b - a).perp_cw() / len;
            let kappa = 0.5 * (g.kappa[e] + g.kappa[(e + 1) % k]);
            let (normal, v) = if flip { (-right_normal, kappa) } else { (right_normal, -kappa) };
            segments.push(Segment {
                a,
                b,
                pair: (c.left.min(c.right), c.left.max(c.right)),
                normal,
                mid: (a + b) * 0.5,
                len,
                velocity: Some(v),
            });
        }
    }
    InterfaceSoup { segments, t: net.t, phases: net.phases }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_is_recovered() {
        let t: Vec<f64> = (0..20).map(|k| 0.05 * k as f64).collect();
        let e: Vec<f64> = t.iter().map(|t| 0.3 * (2.0 * t).exp()).collect();
        let c = gronwall_fit(&t, &e).rate().unwrap();
        assert!((c - 2.0).abs() < 1e-6);
    }

    #[test]
    fn bump_gradient_matches_differences() {
        let b = Bump { center: V2::new(0.1, -0.2), radius: 0.5 };
        let x = V2::new(0.3, 0.0);
        let h = 1e-6;
        let (_, g) = b.value_grad(x);
        let gx = (b.value_grad(x + V2::new(h, 0.0)).0 - b.value_grad(x - V2::new(h, 0.0)).0) / (2.0 * h);
        let gy = (b.value_grad(x + V2::new(0.0, h)).0 - b.value_grad(x - V2::new(0.0, h)).0) / (2.0 * h);
        assert!((g - V2::new(gx, gy)).norm() < 1e-8);
    }
}
