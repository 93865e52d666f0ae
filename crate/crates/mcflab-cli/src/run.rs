//! Experiment dispatch and artifact emission.

use crate::config::{ExperimentConfig, Kind, Scene, Solver};
use mcflab::entropy::GronwallFit;
use mcflab::experiments::{
    calibrate_check, evolve_grid, field_csv, grain_growth, max_relative_increase, stability_sweep, weak_strong, ExperimentError,
    GrainSetup, ResidualTargets, WeakStrongSetup,
};
use mcflab::geom::V2;
use mcflab::netcalib::Calibration;
use mcflab::network::Network;
use mcflab::scenes::{fourgrains_phase, Voronoi};
use mcflab::strongflow::{run, FlowParams, Status};
use mcflab::svg;
use mcflab::weakmbo::{extract_interfaces, perturb, rasterize, GridSpec, PhaseGrid};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum RunError {
    Input(String),
    Numerical(String),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Input(m) => write!(f, "input error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<ExperimentError> for RunError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Grid(g @ mcflab::weakmbo::GridError::Pad { .. }) => RunError::Input(g.to_string()),
            ExperimentError::Setup(m) => RunError::Input(m),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

/// Files written into the output directory, in emission order.
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> std::io::Result<Artifacts> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
        self.write(name, text + "\n")
    }

    pub fn grid(&mut self, stem: &str, g: &PhaseGrid) -> Result<(), RunError> {
        let p = self.dir.join(format!("{stem}.mcfg"));
        g.save(&p).map_err(|e| RunError::Numerical(e.to_string()))?;
        self.files.push(format!("{stem}.mcfg"));
        self.files.push(format!("{stem}.json"));
        Ok(())
    }

    /// Writes `manifest.json` with the SHA-256 of every emitted file.
    pub fn manifest(&mut self, kind: &str, status: &str) -> std::io::Result<()> {
        let mut entries = Vec::new();
        for f in &self.files {
            let bytes = std::fs::read(self.dir.join(f))?;
            let digest = Sha256::digest(&bytes);
            entries.push(json!({ "file": f, "bytes": bytes.len(), "sha256": hex::encode(digest) }));
        }
        let m = json!({ "experiment": kind, "status": status, "files": entries });
        std::fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&m).map_err(std::io::Error::other)? + "\n")
    }
}

pub struct Outcome {
    pub pass: bool,
    pub summary: Value,
}

fn need_network(cfg: &ExperimentConfig, kind: Kind) -> Result<&Network, RunError> {
    cfg.network().ok_or_else(|| RunError::Input(format!("{} needs a curve-network scene", kind.name())))
}

fn flow_params(cfg: &ExperimentConfig, net: &Network) -> FlowParams {
    FlowParams {
        redistribute_every: cfg.redistribute_every,
        snapshot_stride: cfg.snapshot_stride,
        ..FlowParams::for_spacing(cfg.spacing, net.r_c.min(cfg.spacing * 10.0))
    }
}

fn energy_csv(series: &[(f64, f64)]) -> String {
    let mut s = String::from("t,energy\n");
    for (t, e) in series {
        s.push_str(&format!("{t:e},{e:e}\n"));
    }
    s
}

/// Initial phase grid of the configured scene on the configured lattice.
pub fn initial_grid(cfg: &ExperimentConfig) -> Result<PhaseGrid, RunError> {
    let spec = cfg.grid;
    let seed = cfg.seed.unwrap_or(0);
    let g = match &cfg.scene {
        Scene::Network(net) => match &cfg.perturbation {
            Some(p) => perturb(net, spec, cfg.pad, p, seed),
            None => rasterize(net, spec, cfg.pad),
        }
        .map_err(|e| RunError::Input(e.to_string()))?,
        Scene::Voronoi(v) => fill(spec, v.seeds.len(), |x| v.nearest(x)),
        Scene::FourGrains { .. } => fill(spec, 4, fourgrains_phase),
    };
    Ok(match (&cfg.scene, &cfg.perturbation) {
        (Scene::Network(_), _) | (_, None) => g,
        (_, Some(p)) => mcflab::weakmbo::perturb_grid(&g, p, seed),
    })
}

fn fill(spec: GridSpec, phases: usize, f: impl Fn(V2) -> usize) -> PhaseGrid {
    let mut g = PhaseGrid::uniform(spec, phases, 0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            g.cells[j * g.nx + i] = f(g.center(i, j)) as u8;
        }
    }
    g
}

pub fn run_experiment(kind: Kind, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    match kind {
        Kind::Evolve => evolve(cfg, out),
        Kind::CalibrateCheck => calibrate(cfg, out),
        Kind::WeakStrong => weak_strong_run(cfg, out),
        Kind::StabilitySweep => sweep(cfg, out),
        Kind::GrainGrowth => grains(cfg, out),
        Kind::ExportFields => export(cfg, out),
    }
}

fn evolve(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    match (cfg.solver, &cfg.scene) {
        (Solver::Strong, Scene::Network(net)) => {
            let params = flow_params(cfg, net);
            let dt = cfg.dt.unwrap_or(0.8 * params.stability * net.min_spacing().powi(2));
            let traj = run(net, cfg.t_end, dt, &params).map_err(|e| RunError::Numerical(e.to_string()))?;
            out.write("index.csv", traj.index_csv())?;
            out.write("energy.csv", energy_csv(&traj.energies))?;
            let mut lines = String::new();
            for s in &traj.snapshots {
                lines.push_str(&s.to_json().replace('\n', ""));
                lines.push('\n');
            }
            out.write("snapshots.jsonl", lines)?;
            let last = traj.snapshots.last().unwrap_or(net);
            out.write("final.svg", svg::overlay(net.bbox().pad(0.1), None, Some(last)))?;
            let increase = max_relative_increase(&traj.energies);
            Ok(Outcome {
                pass: increase <= 0.0 && traj.status == Status::Finished,
                summary: json!({
                    "solver": "strong",
                    "dt": dt,
                    "steps": traj.energies.len() - 1,
                    "status": format!("{:?}", traj.status),
                    "reason": traj.reason,
                    "max_relative_energy_increase": increase,
                }),
            })
        }
        (Solver::Strong, _) => Err(RunError::Input("front tracking needs a curve-network scene".into())),
        (Solver::Mbo, _) => {
            let g0 = initial_grid(cfg)?;
            let dt = cfg.mbo_dt();
            let steps = (cfg.t_end / dt).round() as usize;
            let (kept, energies) = evolve_grid(&g0, dt, steps, &cfg.sigma, cfg.snapshot_stride).map_err(RunError::from)?;
            out.write("energy.csv", energy_csv(&energies))?;
            out.grid("initial", &g0)?;
            let last = kept.last().unwrap_or(&g0);
            out.grid("final", last)?;
            out.write("final.svg", svg::overlay(last.spec().bounds(), Some(&extract_interfaces(last)), cfg.network()))?;
            let increase = max_relative_increase(&energies);
            Ok(Outcome {
                pass: increase <= 0.02,
                summary: json!({
                    "solver": "mbo",
                    "dt": dt,
                    "h": g0.h,
                    "steps": steps,
                    "areas_initial": g0.areas(),
                    "areas_final": last.areas(),
                    "max_relative_energy_increase": increase,
                }),
            })
        }
    }
}

fn calibrate(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    let net = need_network(cfg, Kind::CalibrateCheck)?;
    let params = flow_params(cfg, net);
    let dt = cfg.dt.unwrap_or(0.15 * net.min_spacing().powi(2));
    let check = calibrate_check(net, dt, cfg.relax_steps, &params, cfg.calib, &cfg.probe)?;
    out.write("residuals.csv", check.residuals.csv())?;
    let failures = check.failures(&ResidualTargets::default());
    Ok(Outcome { pass: failures.is_empty(), summary: json!({ "dt": dt, "check": check, "failures": failures }) })
}

fn weak_setup(cfg: &ExperimentConfig, net: &Network) -> WeakStrongSetup {
    let mut s = WeakStrongSetup::new(cfg.grid, cfg.t_end, flow_params(cfg, net));
    s.pad = cfg.pad;
    s.dt = cfg.mbo_dt();
    s.eval_stride = cfg.eval_stride;
    s.calib = cfg.calib;
    s.perturbation = cfg.perturbation.clone().map(|p| (p, cfg.seed.unwrap_or(0)));
    s
}

fn weak_strong_run(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    let net = need_network(cfg, Kind::WeakStrong)?;
    let setup = weak_setup(cfg, net);
    let rep = weak_strong(net, &setup)?;
    out.write("weak_strong.csv", rep.csv())?;
    out.write("energy.csv", energy_csv(&rep.energies))?;
    if let Some(d) = &rep.dissipation {
        let mut s = String::from("t,entropy,lhs,r_dt,r_dissip,slack,coverage\n");
        for r in &d.rows {
            s.push_str(&format!("{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n", r.t, r.entropy, r.lhs, r.r_dt, r.r_dissip, r.slack, r.coverage));
        }
        out.write("dissipation.csv", s)?;
    }
    let g0 = initial_grid(cfg)?;
    out.write("initial.svg", svg::overlay(g0.spec().bounds(), Some(&extract_interfaces(&g0)), Some(net)))?;
    let pass = match (&cfg.perturbation, &rep.gronwall) {
        (None, _) => rep.uniqueness_holds(3.0, 0.99),
        (Some(_), GronwallFit::Exponential { envelope_holds, .. }) => *envelope_holds,
        (Some(_), GronwallFit::Uniqueness { .. }) => rep.uniqueness_holds(3.0, 0.99),
    };
    Ok(Outcome {
        pass,
        summary: json!({
            "h": rep.h,
            "dt": rep.dt,
            "max_entropy_over_floor": rep.max_entropy_over_floor,
            "min_inclusion": rep.min_inclusion,
            "gronwall": rep.gronwall,
            "min_slack": rep.dissipation.as_ref().map(|d| d.min_slack),
            "coverage_warning": rep.dissipation.as_ref().map(|d| d.coverage_warning),
        }),
    })
}

fn sweep(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    let net = need_network(cfg, Kind::StabilitySweep)?;
    let setup = weak_setup(cfg, net);
    let rep = stability_sweep(net, &setup, &cfg.deltas)?;
    out.write("sweep.csv", rep.csv())?;
    let fits: Vec<Value> = rep.entries.iter().map(|e| json!({ "delta": e.delta, "e0": e.e0, "e0_over_delta2": e.e0_over_delta2, "gronwall": e.gronwall })).collect();
    Ok(Outcome {
        pass: rep.quadratic_spread <= 1.3 && rep.envelopes_hold && rep.rate_spread <= 0.3,
        summary: json!({
            "entries": fits,
            "quadratic_spread": rep.quadratic_spread,
            "envelopes_hold": rep.envelopes_hold,
            "rate_spread": rep.rate_spread,
        }),
    })
}

fn grains(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    let Scene::Voronoi(vor) = &cfg.scene else {
        return Err(RunError::Input("grain-growth needs a voronoi scene".into()));
    };
    let vor: &Voronoi = vor;
    let h = cfg.grid.h;
    let dt = cfg.mbo_dt();
    let steps = (cfg.t_end / dt).round() as usize;
    let cells = ((vor.domain.max.x - vor.domain.min.x).max(vor.domain.max.y - vor.domain.min.y) / h).round() as usize;
    let setup = GrainSetup { cells, dt, steps, skip: cfg.relax_steps.max(steps / 6) };
    let rep = grain_growth(vor, &setup)?;
    out.write("grains.csv", rep.csv())?;
    out.write("energy.csv", energy_csv(&rep.energies))?;
    let increase = max_relative_increase(&rep.energies);
    Ok(Outcome {
        pass: (rep.slope - 1.0).abs() <= 0.15 && increase <= 0.02,
        summary: json!({
            "h": rep.h,
            "dt": rep.dt,
            "grains_fitted": rep.grains.len(),
            "slope": rep.slope,
            "intercept": rep.intercept,
            "r2": rep.r2,
            "max_relative_energy_increase": increase,
        }),
    })
}

fn export(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Outcome, RunError> {
    let net = need_network(cfg, Kind::ExportFields)?;
    let cal = Calibration::build(net, cfg.calib, None).map_err(|e| RunError::Numerical(e.to_string()))?;
    let bounds = cfg.grid.bounds();
    out.write("fields.csv", field_csv(&cal, bounds, cfg.samples))?;
    out.write("network.svg", svg::overlay(bounds, None, Some(net)))?;
    Ok(Outcome { pass: true, summary: json!({ "params": cal.params, "partition": cal.check_partition(), "samples": cfg.samples }) })
}
