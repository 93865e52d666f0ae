//! Composite runs pairing threshold dynamics with front-tracked reference
//! solutions, and the grain-growth statistics.

use crate::entropy::{
    calibration_residuals, dissipation_terms, gronwall_fit, grid_floor, inclusion_check, relative_entropy, volume_error,
    CalibratedTrajectory, DissipationReport, EntropyError, GronwallFit, ProbeSpec, ResidualReport, Stat,
};
use crate::geom::{Aabb, V2};
use crate::netcalib::{CalibParams, Calibration, PartitionCheck};
use crate::network::Network;
use crate::scenes::Voronoi;
use crate::strongflow::{run, FlowError, FlowParams, Status, Trajectory};
use crate::weakmbo::{
    estimate_velocity, extract_interfaces, mbo_step, perturb, rasterize, GridError, GridSpec, InterfaceSoup, Perturbation,
    PhaseGrid,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("reference flow stopped at t = {t}: {reason}")]
    Singular { t: f64, reason: String },
    #[error("{0}")]
    Setup(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationCheck {
    pub params: CalibParams,
    pub residuals: ResidualReport,
    pub partition: PartitionCheck,
    /// Largest `|V|` of the network at the probed snapshot, from the nodal curvatures.
    pub max_speed: f64,
}

/// Slope and size thresholds for the residual suites.
#[derive(Clone, Copy, Debug)]
pub struct ResidualTargets {
    pub transport_slope: f64,
    pub length_slope: f64,
    pub dissipation_slope: f64,
    /// Residuals whose maximum is below this count as satisfied.
    pub exact: f64,
    pub herring: f64,
}

impl Default for ResidualTargets {
    fn default() -> Self {
        ResidualTargets { transport_slope: 0.9, length_slope: 1.8, dissipation_slope: 0.9, exact: 1e-8, herring: 1e-12 }
    }
}

fn stat_ok(s: &Stat, slope: f64, exact: f64) -> bool {
    s.max <= exact || s.slope.is_some_and(|v| v >= slope)
}

impl CalibrationCheck {
    pub fn failures(&self, t: &ResidualTargets) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.residuals.pairs {
            for (name, st, sl) in [("transport", &p.transport, t.transport_slope), ("length", &p.length, t.length_slope), ("dissipation", &p.dissipation, t.dissipation_slope)] {
                if !stat_ok(st, sl, t.exact) {
                    out.push(format!("{name} residual of pair {:?}: max {:e}, slope {:?} (need {sl})", p.pair, st.max, st.slope));
                }
            }
        }
        if self.residuals.herring_max > t.herring {
            out.push(format!("Herring identity {:e}", self.residuals.herring_max));
        }
        if !(self.residuals.coercivity_min > 0.0) {
            out.push(format!("coercivity margin {:e}", self.residuals.coercivity_min));
        }
        if self.residuals.decades < 2.0 {
            out.push(format!("probes span {:.2} decades", self.residuals.decades));
        }
        if !self.partition.pass {
            out.push(format!("partition of unity: {:?}", self.partition));
        }
        out
    }
}

/// Relaxes the network for `relax` steps, then calibrates three consecutive
/// snapshots taken without redistribution and probes the middle one.
pub fn calibrate_check(net: &Network, dt: f64, relax: usize, flow: &FlowParams, calib: Option<CalibParams>, probe: &ProbeSpec) -> Result<CalibrationCheck, ExperimentError> {
    let mut start = net.clone();
    if relax > 0 {
        let tr = run(net, relax as f64 * dt, dt, flow)?;
        if tr.status == Status::StoppedSingular {
            return Err(ExperimentError::Singular { t: tr.snapshots.last().map_or(0.0, |s| s.t), reason: tr.reason.unwrap_or_default() });
        }
        start = tr.snapshots.last().cloned().unwrap_or(start);
    }
    let fixed = FlowParams { redistribute_every: 0, snapshot_stride: 1, ..flow.clone() };
    let tr = run(&start, 2.0 * dt, dt, &fixed)?;
    let traj = CalibratedTrajectory::build(&tr.snapshots, calib)?;
    let residuals = calibration_residuals(&traj, probe)?;
    let k = probe.snapshot.unwrap_or(traj.len() / 2).min(traj.len() - 1);
    let cal: &Calibration = &traj.cals[k];
    let max_speed = cal.geoms.iter().flat_map(|g| g.kappa.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CalibrationCheck { params: cal.params, residuals, partition: cal.check_partition(), max_speed })
}

/// Calibration fields on an `n × n` lattice over `bounds`:
/// `x, y, Ση, B_x, B_y` and then `ξ_i` for every phase.
pub fn field_csv(cal: &Calibration, bounds: Aabb, n: usize) -> String {
    let p = cal.net.phases;
    let mut s = String::from("x,y,eta_sum,bx,by");
    for i in 0..p {
        s.push_str(&format!(",xi{i}_x,xi{i}_y"));
    }
    s.push('\n');
    let step = V2::new((bounds.max.x - bounds.min.x) / (n - 1).max(1) as f64, (bounds.max.y - bounds.min.y) / (n - 1).max(1) as f64);
    let rows = crate::par::map_range(n, |j| {
        let mut line = String::new();
        for i in 0..n {
            let x = bounds.min + V2::new(step.x * i as f64, step.y * j as f64);
            let v = cal.eval(x);
            line.push_str(&format!("{:e},{:e},{:e},{:e},{:e}", x.x, x.y, v.eta_sum(), v.b.x, v.b.y));
            for xi in &v.xi_phase {
                line.push_str(&format!(",{:e},{:e}", xi.x, xi.y));
            }
            line.push('\n');
        }
        line
    });
    s.push_str(&rows.concat());
    s
}

/// Front-tracked reference with snapshots every `sample_dt`, substepping to
/// stay below the stability bound.
pub fn strong_samples(net: &Network, sample_dt: f64, samples: usize, params: &FlowParams) -> Result<Trajectory, ExperimentError> {
    let h_min = net.min_spacing().min(params.target_spacing.unwrap_or(f64::INFINITY));
    let sub = (sample_dt / (0.8 * params.stability * h_min * h_min)).ceil().max(1.0) as usize;
    let p = FlowParams { snapshot_stride: sub, ..params.clone() };
    let traj = run(net, sample_dt * samples as f64, sample_dt / sub as f64, &p)?;
    if traj.status == Status::StoppedSingular {
        let t = traj.snapshots.last().map_or(0.0, |s| s.t);
        return Err(ExperimentError::Singular { t, reason: traj.reason.unwrap_or_default() });
    }
    Ok(traj)
}

#[derive(Clone, Debug)]
pub struct WeakStrongSetup {
    pub spec: GridSpec,
    pub pad: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Evaluate diagnostics every this many thresholding steps.
    pub eval_stride: usize,
    pub perturbation: Option<(Perturbation, u64)>,
    pub flow: FlowParams,
    pub calib: Option<CalibParams>,
    /// Inclusion tolerance in cells.
    pub tol_cells: f64,
    /// Cells outside this box keep their initial phase, and only interfaces
    /// inside it enter the diagnostics. Defaults to the network's domain.
    pub window: Option<Aabb>,
}

impl WeakStrongSetup {
    pub fn new(spec: GridSpec, t_end: f64, flow: FlowParams) -> WeakStrongSetup {
        WeakStrongSetup {
            spec,
            pad: 0.1,
            dt: 4.0 * spec.h * spec.h,
            t_end,
            eval_stride: 1,
            perturbation: None,
            flow,
            calib: None,
            tol_cells: 3.0,
            window: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStrongRow {
    pub t: f64,
    pub entropy: f64,
    pub volume: f64,
    pub volume_weighted: f64,
    pub floor: f64,
    pub inclusion_min: f64,
    pub energy_weak: f64,
    pub energy_strong: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStrongReport {
    pub h: f64,
    pub dt: f64,
    pub rows: Vec<WeakStrongRow>,
    /// Energy of the thresholding run at the evaluation steps and the steps after them.
    pub energies: Vec<(f64, f64)>,
    pub max_entropy_over_floor: f64,
    pub min_inclusion: f64,
    pub gronwall: GronwallFit,
    pub dissipation: Option<DissipationReport>,
}

impl WeakStrongReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,entropy,volume,volume_weighted,floor,inclusion_min,energy_weak,energy_strong\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.t, r.entropy, r.volume, r.volume_weighted, r.floor, r.inclusion_min, r.energy_weak, r.energy_strong
            ));
        }
        s
    }

    /// Largest relative energy increase between consecutive recorded energies.
    pub fn max_energy_increase(&self) -> f64 {
        max_relative_increase(&self.energies)
    }

    pub fn uniqueness_holds(&self, factor: f64, min_fraction: f64) -> bool {
        self.max_entropy_over_floor <= factor && self.min_inclusion >= min_fraction
    }
}

pub fn max_relative_increase(series: &[(f64, f64)]) -> f64 {
    series.windows(2).map(|w| (w[1].1 - w[0].1) / w[0].1.abs().max(f64::MIN_POSITIVE)).fold(f64::NEG_INFINITY, f64::max)
}

/// Thresholding from the rasterized (optionally perturbed) network compared
/// against the calibrated front-tracked flow of the same network.
pub fn weak_strong(net: &Network, setup: &WeakStrongSetup) -> Result<WeakStrongReport, ExperimentError> {
    let steps = (setup.t_end / setup.dt).round() as usize;
    let stride = setup.eval_stride.max(1);
    if steps < 2 * stride {
        return Err(ExperimentError::Setup(format!("{steps} steps leave fewer than three evaluation times")));
    }
    let evals = steps / stride;
    let strong = strong_samples(net, setup.dt * stride as f64, evals, &setup.flow)?;
    let traj = CalibratedTrajectory::build(&strong.snapshots, setup.calib)?;
    let mut g = match &setup.perturbation {
        Some((mode, seed)) => perturb(net, setup.spec, setup.pad, mode, *seed)?,
        None => rasterize(net, setup.spec, setup.pad)?,
    };
    let h = setup.spec.h;
    let sigma = &net.sigma;
    let window = setup.window.or(net.domain);
    let g0 = g.clone();
    let extract = |g: &PhaseGrid| {
        let mut s = extract_interfaces(g);
        if let Some(w) = window {
            s.segments.retain(|seg| w.contains(seg.mid));
        }
        s
    };
    let mut soup = extract(&g);
    let mut energies = vec![(g.t, soup.energy(sigma))];
    let mut rows = Vec::new();
    let mut soups: Vec<InterfaceSoup> = Vec::new();
    let mut pending: Option<InterfaceSoup> = None;
    for n in 0..=steps {
        if n % stride == 0 && n / stride < traj.len() {
            let k = n / stride;
            let cal = &traj.cals[k];
            let ref_net = &strong.snapshots[k];
            let e_strong = ref_net.energy(&ref_net.geometry());
            let vol = volume_error(&g, cal);
            let inc = inclusion_check(&soup, ref_net, setup.tol_cells * h);
            rows.push(WeakStrongRow {
                t: g.t,
                entropy: relative_entropy(&soup, cal),
                volume: vol.dist_form,
                volume_weighted: vol.weight_form,
                floor: grid_floor(h, e_strong),
                inclusion_min: inc.iter().map(|m| m.fraction).fold(1.0, f64::min),
                energy_weak: soup.energy(sigma),
                energy_strong: e_strong,
            });
            pending = Some(soup.clone());
        }
        if n == steps {
            break;
        }
        g = mbo_step(&g, setup.dt, sigma)?;
        if let Some(w) = window {
            freeze_outside(&mut g, &g0, w);
        }
        if pending.is_some() || (n + 1) % stride == 0 {
            let next = extract(&g);
            energies.push((g.t, next.energy(sigma)));
            if let Some(p) = pending.take() {
                soups.push(estimate_velocity(&p, &next, setup.dt, 5.0 * h));
            }
            soup = next;
        }
    }
    let dissipation = if soups.len() == traj.len() { Some(dissipation_terms(&soups, &traj)?) } else { None };
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let ents: Vec<f64> = rows.iter().map(|r| r.entropy).collect();
    Ok(WeakStrongReport {
        h,
        dt: setup.dt,
        max_entropy_over_floor: rows.iter().map(|r| r.entropy / r.floor).fold(0.0, f64::max),
        min_inclusion: rows.iter().map(|r| r.inclusion_min).fold(1.0, f64::min),
        gronwall: gronwall_fit(&times, &ents),
        energies,
        dissipation,
        rows,
    })
}

/// Resets every cell whose centre lies outside `window` to its phase in `reference`.
pub fn freeze_outside(g: &mut PhaseGrid, reference: &PhaseGrid, window: Aabb) {
    for j in 0..g.ny {
        for i in 0..g.nx {
            if !window.contains(g.center(i, j)) {
                g.cells[j * g.nx + i] = reference.cells[j * g.nx + i];
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub delta: f64,
    pub e0: f64,
    pub e0_over_delta2: f64,
    pub gronwall: GronwallFit,
    pub rows: Vec<WeakStrongRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Largest over smallest `E(0)/δ²`.
    pub quadratic_spread: f64,
    pub envelopes_hold: bool,
    /// `(max C − min C) / max |C|` over the sweep.
    pub rate_spread: f64,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("delta,t,entropy,volume,floor\n");
        for e in &self.entries {
            for r in &e.rows {
                s.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", e.delta, r.t, r.entropy, r.volume, r.floor));
            }
        }
        s
    }
}

/// Weak-strong runs from horizontally shifted initial data.
pub fn stability_sweep(net: &Network, setup: &WeakStrongSetup, deltas: &[f64]) -> Result<SweepReport, ExperimentError> {
    let mut entries = Vec::new();
    for &d in deltas {
        let s = WeakStrongSetup { perturbation: Some((Perturbation::Shift(V2::new(d, 0.0)), 0)), ..setup.clone() };
        let rep = weak_strong(net, &s)?;
        let e0 = rep.rows[0].entropy;
        entries.push(SweepEntry { delta: d, e0, e0_over_delta2: e0 / (d * d), gronwall: rep.gronwall, rows: rep.rows });
    }
    let q: Vec<f64> = entries.iter().map(|e| e.e0_over_delta2).collect();
    let quadratic_spread = q.iter().cloned().fold(0.0, f64::max) / q.iter().cloned().fold(f64::INFINITY, f64::min);
    let envelopes_hold = entries.iter().all(|e| matches!(e.gronwall, GronwallFit::Exponential { envelope_holds: true, .. }));
    let rates: Vec<f64> = entries.iter().filter_map(|e| e.gronwall.rate()).collect();
    let rate_spread = if rates.len() == entries.len() && !rates.is_empty() {
        let (lo, hi) = (rates.iter().cloned().fold(f64::INFINITY, f64::min), rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        (hi - lo) / rates.iter().map(|c| c.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    } else {
        f64::INFINITY
    };
    Ok(SweepReport { entries, quadratic_spread, envelopes_hold, rate_spread })
}

#[derive(Clone, Debug)]
pub struct GrainSetup {
    pub cells: usize,
    pub dt: f64,
    pub steps: usize,
    /// Steps skipped before fitting area rates.
    pub skip: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrainRow {
    pub grain: usize,
    pub neighbours: usize,
    pub area0: f64,
    pub rate: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrainReport {
    pub h: f64,
    pub dt: f64,
    pub grains: Vec<GrainRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub energies: Vec<(f64, f64)>,
}

impl GrainReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("grain,neighbours,area0,rate,predicted\n");
        for g in &self.grains {
            s.push_str(&format!("{},{},{:e},{:e},{:e}\n", g.grain, g.neighbours, g.area0, g.rate, g.predicted));
        }
        s
    }
}

/// Grid whose cells take the phase of the nearest seed.
pub fn voronoi_grid(vor: &Voronoi, cells: usize) -> PhaseGrid {
    let d: Aabb = vor.domain;
    let h = (d.max.x - d.min.x).max(d.max.y - d.min.y) / cells as f64;
    let spec = GridSpec { nx: ((d.max.x - d.min.x) / h).round() as usize, ny: ((d.max.y - d.min.y) / h).round() as usize, h, origin: d.min };
    let mut g = PhaseGrid::uniform(spec, vor.seeds.len(), 0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            g.cells[j * g.nx + i] = vor.nearest(g.center(i, j)) as u8;
        }
    }
    g
}

/// Neighbour sets of every phase: pairs sharing at least `min_contact` cell faces.
pub fn grid_adjacency(g: &PhaseGrid, min_contact: usize) -> Vec<Vec<usize>> {
    let mut count: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    let mut bump = |a: usize, b: usize| {
        if a != b {
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            if i + 1 < g.nx {
                bump(g.get(i, j), g.get(i + 1, j));
            }
            if j + 1 < g.ny {
                bump(g.get(i, j), g.get(i, j + 1));
            }
        }
    }
    let mut out = vec![Vec::new(); g.phases];
    for (&(a, b), &c) in &count {
        if c >= min_contact {
            out[a].push(b);
            out[b].push(a);
        }
    }
    out
}

fn touches_border(g: &PhaseGrid) -> Vec<bool> {
    let mut out = vec![false; g.phases];
    for i in 0..g.nx {
        out[g.get(i, 0)] = true;
        out[g.get(i, g.ny - 1)] = true;
    }
    for j in 0..g.ny {
        out[g.get(0, j)] = true;
        out[g.get(g.nx - 1, j)] = true;
    }
    out
}

/// Thresholding of a Voronoi microstructure. Area rates of grains that stay
/// off the box and keep their neighbours over the fitting window are compared
/// with `(π/3)(n − 6)`.
pub fn grain_growth(vor: &Voronoi, setup: &GrainSetup) -> Result<GrainReport, ExperimentError> {
    let p = vor.seeds.len();
    if p > 255 {
        return Err(ExperimentError::Setup(format!("{p} grains exceed the 255 phase limit")));
    }
    if setup.skip + 2 > setup.steps {
        return Err(ExperimentError::Setup("fitting window needs at least two steps".into()));
    }
    let sigma = crate::tensions::SurfaceTensions::equal(p);
    let mut g = voronoi_grid(vor, setup.cells);
    let min_contact = 3;
    let mut areas = vec![(g.t, g.areas())];
    let mut energies = vec![(g.t, extract_interfaces(&g).energy(&sigma))];
    let mut stable = vec![true; p];
    let mut first_nb = None;
    let mut last_nb = Vec::new();
    for n in 0..setup.steps {
        g = mbo_step(&g, setup.dt, &sigma)?;
        areas.push((g.t, g.areas()));
        energies.push((g.t, extract_interfaces(&g).energy(&sigma)));
        if n + 1 >= setup.skip {
            let nb = grid_adjacency(&g, min_contact);
            for (q, b) in touches_border(&g).into_iter().enumerate() {
                if b {
                    stable[q] = false;
                }
            }
            match &first_nb {
                None => first_nb = Some(nb.clone()),
                Some(f) => {
                    for q in 0..p {
                        if f[q] != nb[q] {
                            stable[q] = false;
                        }
                    }
                }
            }
            last_nb = nb;
        }
    }
    let window = &areas[setup.skip..];
    let mut grains = Vec::new();
    for q in 0..p {
        if !stable[q] || window.iter().any(|(_, a)| a[q] <= 0.0) {
            continue;
        }
        let pts: Vec<(f64, f64)> = window.iter().map(|(t, a)| (*t, a[q])).collect();
        let Some((rate, _, _)) = line_fit(&pts) else { continue };
        let n = last_nb[q].len();
        grains.push(GrainRow { grain: q, neighbours: n, area0: window[0].1[q], rate, predicted: std::f64::consts::FRAC_PI_3 * (n as f64 - 6.0) });
    }
    let pts: Vec<(f64, f64)> = grains.iter().map(|r| (r.predicted, r.rate)).collect();
    let (slope, intercept, r2) = line_fit(&pts).unwrap_or((f64::NAN, f64::NAN, 0.0));
    Ok(GrainReport { h: g.h, dt: setup.dt, grains, slope, intercept, r2, energies })
}

/// Least-squares line `y = a x + b`, returning `(a, b, r²)`.
pub fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let a = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((a, my - a * mx, r2))
}

/// Thresholding run from an arbitrary grid, recording the energy per step.
pub fn evolve_grid(g0: &PhaseGrid, dt: f64, steps: usize, sigma: &crate::tensions::SurfaceTensions, keep_every: usize) -> Result<(Vec<PhaseGrid>, Vec<(f64, f64)>), ExperimentError> {
    let mut g = g0.clone();
    let mut kept = vec![g.clone()];
    let mut energies = vec![(g.t, extract_interfaces(&g).energy(sigma))];
    for n in 0..steps {
        g = mbo_step(&g, dt, sigma)?;
        energies.push((g.t, extract_interfaces(&g).energy(sigma)));
        if keep_every > 0 && ((n + 1) % keep_every == 0 || n + 1 == steps) {
            kept.push(g.clone());
        }
    }
    Ok((kept, energies))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 2.0 * k as f64 - 1.0)).collect();
        let (a, b, r2) = line_fit(&pts).unwrap();
        assert!((a - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn relative_increase_of_decreasing_series_is_negative() {
        assert!(max_relative_increase(&[(0.0, 3.0), (1.0, 2.0), (2.0, 1.5)]) < 0.0);
    }
}
