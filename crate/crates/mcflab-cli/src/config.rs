//! Experiment configuration: strict JSON parsing and range validation.

use mcflab::entropy::ProbeSpec;
use mcflab::geom::{Aabb, V2};
use mcflab::netcalib::CalibParams;
use mcflab::network::Network;
use mcflab::scenes;
use mcflab::tensions::{validate_admissible, SurfaceTensions};
use mcflab::weakmbo::{GridSpec, Perturbation};
use serde::Deserialize;
use serde_json::{Map, Value};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Evolve,
    CalibrateCheck,
    WeakStrong,
    StabilitySweep,
    GrainGrowth,
    ExportFields,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::CalibrateCheck => "calibrate-check",
            Kind::WeakStrong => "weak-strong",
            Kind::StabilitySweep => "stability-sweep",
            Kind::GrainGrowth => "grain-growth",
            Kind::ExportFields => "export-fields",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SceneType {
    Circle,
    Triod,
    CurvedTriod,
    Lens,
    Voronoi,
    FourgrainsDemo,
    File,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SceneConf {
    #[serde(rename = "type")]
    pub kind: SceneType,
    pub radius: Option<f64>,
    pub nodes: Option<usize>,
    pub center: Option<[f64; 2]>,
    pub half: Option<f64>,
    pub spacing: Option<f64>,
    pub arm_length: Option<f64>,
    pub curvatures: Option<[f64; 3]>,
    pub a: Option<f64>,
    pub seeds: Option<usize>,
    #[serde(rename = "box")]
    pub bbox: Option<[f64; 4]>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum SigmaConf {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct GridConf {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub h: Option<f64>,
    /// Distance between the scene box and the grid boundary.
    pub margin: Option<f64>,
    /// Rasterization pad.
    pub pad: Option<f64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Mbo,
    Strong,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct FlowConf {
    pub solver: Option<Solver>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub snapshot_stride: Option<usize>,
    pub redistribute_every: Option<usize>,
    pub spacing: Option<f64>,
    /// Front-tracking steps before probing in `calibrate-check`.
    pub relax_steps: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct ProbeConf {
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub levels: Option<usize>,
    pub along: Option<usize>,
    pub near_ends: Option<Vec<f64>>,
    pub snapshot: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct CalibConf {
    pub r_loc: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub probe: Option<ProbeConf>,
    /// Lattice size of `export-fields`.
    pub samples: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbType {
    Shift,
    Noise,
    Seed,
}

#[derive(Clone, Debug, Deserialize)]
pub struct PerturbConf {
    #[serde(rename = "type")]
    pub kind: PerturbType,
    pub dx: Option<f64>,
    pub dy: Option<f64>,
    pub band: Option<f64>,
    pub p: Option<f64>,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub phase: Option<usize>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct RawConfig {
    pub kind: Option<Kind>,
    pub scene: SceneConf,
    pub sigma: Option<SigmaConf>,
    #[serde(default)]
    pub grid: GridConf,
    #[serde(default)]
    pub flow: FlowConf,
    #[serde(default)]
    pub calibration: CalibConf,
    pub perturbation: Option<PerturbConf>,
    pub deltas: Option<Vec<f64>>,
    /// Diagnostics every this many steps in weak-strong runs.
    pub eval_stride: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Initial data: a curve network or, for grid-only scenes, a phase grid.
#[derive(Clone, Debug)]
pub enum Scene {
    Network(Network),
    Voronoi(scenes::Voronoi),
    FourGrains { half: f64 },
}

/// Validated configuration with every default resolved.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub scene: Scene,
    pub sigma: SurfaceTensions,
    pub grid: GridSpec,
    pub pad: f64,
    pub solver: Solver,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub redistribute_every: usize,
    pub spacing: f64,
    pub relax_steps: usize,
    pub calib: Option<CalibParams>,
    pub probe: ProbeSpec,
    pub samples: usize,
    pub perturbation: Option<Perturbation>,
    pub deltas: Vec<f64>,
    pub eval_stride: usize,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Threshold-dynamics step, `4h²` unless configured.
    pub fn mbo_dt(&self) -> f64 {
        self.dt.unwrap_or(4.0 * self.grid.h * self.grid.h)
    }

    pub fn network(&self) -> Option<&Network> {
        match &self.scene {
            Scene::Network(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration violation(s): {}", self.violations.len(), self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

struct Checker {
    v: Vec<String>,
}

impl Checker {
    fn unknown(&mut self, prefix: &str, extra: &Map<String, Value>) {
        for k in extra.keys() {
            self.v.push(format!("unknown key `{prefix}{k}`"));
        }
    }

    fn positive(&mut self, key: &str, x: Option<f64>) {
        if let Some(x) = x {
            if !(x > 0.0 && x.is_finite()) {
                self.v.push(format!("`{key}` must be positive and finite, got {x}"));
            }
        }
    }

    fn range(&mut self, key: &str, x: Option<f64>, lo: f64, hi: f64) {
        if let Some(x) = x {
            if !(x >= lo && x <= hi) {
                self.v.push(format!("`{key}` must lie in [{lo}, {hi}], got {x}"));
            }
        }
    }

    fn at_least(&mut self, key: &str, x: Option<usize>, lo: usize) {
        if let Some(x) = x {
            if x < lo {
                self.v.push(format!("`{key}` must be at least {lo}, got {x}"));
            }
        }
    }

    fn not_for(&mut self, key: &str, present: bool, what: &str) {
        if present {
            self.v.push(format!("`{key}` does not apply to {what}"));
        }
    }
}

/// Parses and validates a configuration. Paths in file scenes are resolved
/// against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError { violations: vec![format!("malformed configuration: {e}")] })?;
    let mut c = Checker { v: Vec::new() };
    c.unknown("", &raw.extra);
    c.unknown("grid.", &raw.grid.extra);
    c.unknown("flow.", &raw.flow.extra);
    c.unknown("calibration.", &raw.calibration.extra);
    if let Some(p) = &raw.calibration.probe {
        c.unknown("calibration.probe.", &p.extra);
    }
    if let Some(p) = &raw.perturbation {
        c.unknown("perturbation.", &p.extra);
    }
    c.unknown("scene.", &raw.scene.extra);

    let s = &raw.scene;
    let name = format!("{:?} scenes", s.kind).to_lowercase();
    let allowed: &[&str] = match s.kind {
        SceneType::Circle => &["radius", "nodes", "center"],
        SceneType::Triod => &["half", "spacing"],
        SceneType::CurvedTriod => &["arm_length", "curvatures", "spacing"],
        SceneType::Lens => &["a", "half", "spacing"],
        SceneType::Voronoi => &["seeds", "box", "seed"],
        SceneType::FourgrainsDemo => &["half"],
        SceneType::File => &["path"],
    };
    let given = [
        ("radius", s.radius.is_some()),
        ("nodes", s.nodes.is_some()),
        ("center", s.center.is_some()),
        ("half", s.half.is_some()),
        ("spacing", s.spacing.is_some()),
        ("arm_length", s.arm_length.is_some()),
        ("curvatures", s.curvatures.is_some()),
        ("a", s.a.is_some()),
        ("seeds", s.seeds.is_some()),
        ("box", s.bbox.is_some()),
        ("seed", s.seed.is_some()),
        ("path", s.path.is_some()),
    ];
    for (k, present) in given {
        c.not_for(&format!("scene.{k}"), present && !allowed.contains(&k), &name);
    }
    c.positive("scene.radius", s.radius);
    c.at_least("scene.nodes", s.nodes, 8);
    c.positive("scene.half", s.half);
    c.positive("scene.spacing", s.spacing);
    c.positive("scene.arm_length", s.arm_length);
    c.positive("scene.a", s.a);
    c.at_least("scene.seeds", s.seeds, 2);
    if let Some(n) = s.seeds {
        if n > 255 {
            c.v.push(format!("`scene.seeds` must be at most 255, got {n}"));
        }
    }
    if let Some(b) = s.bbox {
        if !(b[2] > b[0] && b[3] > b[1]) {
            c.v.push("`scene.box` must be [xmin, ymin, xmax, ymax] with positive extent".into());
        }
    }
    if s.kind == SceneType::Voronoi && s.seed.is_none() && raw.seed.is_none() {
        c.v.push("voronoi scenes need `scene.seed` or a global `seed`".into());
    }
    if s.kind == SceneType::File && s.path.is_none() {
        c.v.push("file scenes need `scene.path`".into());
    }
    if let (Some(a), Some(h)) = (s.a, s.half) {
        if a >= h {
            c.v.push(format!("`scene.a` ({a}) must be smaller than `scene.half` ({h})"));
        }
    }

    let g = &raw.grid;
    c.at_least("grid.nx", g.nx, 8);
    c.at_least("grid.ny", g.ny, 8);
    c.positive("grid.h", g.h);
    c.range("grid.margin", g.margin, 0.0, f64::INFINITY);
    c.range("grid.pad", g.pad, 0.0, f64::INFINITY);
    let f = &raw.flow;
    c.positive("flow.dt", f.dt);
    c.positive("flow.t_end", f.t_end);
    c.at_least("flow.snapshot_stride", f.snapshot_stride, 1);
    c.positive("flow.spacing", f.spacing);
    let cal = &raw.calibration;
    c.positive("calibration.r_loc", cal.r_loc);
    c.range("calibration.c1", cal.c1, 1e-6, 1.0);
    c.range("calibration.c2", cal.c2, 1e-6, 1.0);
    c.at_least("calibration.samples", cal.samples, 2);
    if (cal.c1.is_some() || cal.c2.is_some()) && cal.r_loc.is_none() {
        c.v.push("`calibration.c1`/`calibration.c2` need `calibration.r_loc`".into());
    }
    if let Some(p) = &cal.probe {
        c.positive("calibration.probe.d_min", p.d_min);
        c.positive("calibration.probe.d_max", p.d_max);
        c.at_least("calibration.probe.levels", p.levels, 2);
        c.at_least("calibration.probe.along", p.along, 1);
        if let (Some(a), Some(b)) = (p.d_min, p.d_max) {
            if a >= b {
                c.v.push("`calibration.probe.d_min` must be below `calibration.probe.d_max`".into());
            }
        }
        if let Some(v) = &p.near_ends {
            if v.iter().any(|x| !(*x > 0.0)) {
                c.v.push("`calibration.probe.near_ends` entries must be positive".into());
            }
        }
    }
    if let Some(p) = &raw.perturbation {
        let allowed: &[&str] = match p.kind {
            PerturbType::Shift => &["dx", "dy"],
            PerturbType::Noise => &["band", "p"],
            PerturbType::Seed => &["center", "radius", "phase"],
        };
        for (k, present) in [
            ("dx", p.dx.is_some()),
            ("dy", p.dy.is_some()),
            ("band", p.band.is_some()),
            ("p", p.p.is_some()),
            ("center", p.center.is_some()),
            ("radius", p.radius.is_some()),
            ("phase", p.phase.is_some()),
        ] {
            c.not_for(&format!("perturbation.{k}"), present && !allowed.contains(&k), &format!("{:?} perturbations", p.kind).to_lowercase());
        }
        c.range("perturbation.p", p.p, 0.0, 1.0);
        c.positive("perturbation.band", p.band);
        c.positive("perturbation.radius", p.radius);
        if p.kind == PerturbType::Noise && raw.seed.is_none() {
            c.v.push("noise perturbations need an explicit `seed`".into());
        }
        if p.kind == PerturbType::Noise && p.p.is_none() {
            c.v.push("noise perturbations need `perturbation.p`".into());
        }
        if p.kind == PerturbType::Seed && (p.center.is_none() || p.radius.is_none() || p.phase.is_none()) {
            c.v.push("seed perturbations need `center`, `radius` and `phase`".into());
        }
    }
    if let Some(d) = &raw.deltas {
        if d.is_empty() {
            c.v.push("`deltas` must not be empty".into());
        }
        for (k, x) in d.iter().enumerate() {
            c.positive(&format!("deltas[{k}]"), Some(*x));
        }
    }
    c.at_least("eval_stride", raw.eval_stride, 1);

    let sigma_rows = match &raw.sigma {
        None => None,
        Some(SigmaConf::Named(n)) if n == "equal" => None,
        Some(SigmaConf::Named(n)) => {
            c.v.push(format!("`sigma` must be \"equal\" or a matrix, got \"{n}\""));
            None
        }
        Some(SigmaConf::Matrix(m)) => Some(m.clone()),
    };
    if !c.v.is_empty() {
        return Err(ConfigError { violations: c.v });
    }

    let scene = match build_scene(&raw, base) {
        Ok(s) => s,
        Err(e) => return Err(ConfigError { violations: vec![e] }),
    };
    let phases = match &scene {
        Scene::Network(n) => n.phases,
        Scene::Voronoi(v) => v.seeds.len(),
        Scene::FourGrains { .. } => 4,
    };
    let sigma = match sigma_rows {
        None => match &scene {
            Scene::Network(n) => n.sigma.clone(),
            _ => SurfaceTensions::equal(phases),
        },
        Some(rows) => match SurfaceTensions::from_rows(&rows) {
            Ok(s) => {
                let rep = validate_admissible(&s);
                if !rep.pass {
                    let v = rep.violations.iter().map(|x| format!("sigma: {x}")).collect();
                    return Err(ConfigError { violations: v });
                }
                s
            }
            Err(e) => return Err(ConfigError { violations: vec![format!("sigma: {e}")] }),
        },
    };
    if sigma.phases() != phases {
        return Err(ConfigError { violations: vec![format!("sigma has {} phases but the scene has {phases}", sigma.phases())] });
    }
    let scene = match scene {
        Scene::Network(mut n) => {
            n.sigma = sigma.clone();
            Scene::Network(n)
        }
        other => other,
    };

    let scene_box = match &scene {
        Scene::Network(n) => n.domain.unwrap_or_else(|| n.bbox()),
        Scene::Voronoi(v) => v.domain,
        Scene::FourGrains { half } => Aabb { min: V2::new(-half, -half), max: V2::new(*half, *half) },
    };
    let size = (scene_box.max.x - scene_box.min.x).max(scene_box.max.y - scene_box.min.y);
    let default_margin = match &scene {
        Scene::Network(n) if n.domain.is_none() => 0.2 * size,
        _ => 0.0,
    };
    let margin = g.margin.unwrap_or(default_margin);
    let outer = scene_box.pad(margin);
    let (w, hgt) = (outer.max.x - outer.min.x, outer.max.y - outer.min.y);
    let h = g.h.unwrap_or_else(|| w / g.nx.unwrap_or(256) as f64);
    let nx = g.nx.unwrap_or((w / h).round() as usize);
    let ny = g.ny.unwrap_or((hgt / h).round() as usize);
    let grid = GridSpec { nx, ny, h, origin: outer.min };
    let pad = g.pad.unwrap_or(0.5 * margin);

    let spacing = f.spacing.or(s.spacing).unwrap_or_else(|| match &scene {
        Scene::Network(n) => n.min_spacing(),
        _ => h,
    });
    let calib = cal.r_loc.map(|r| CalibParams { r_loc: r, c1: cal.c1.unwrap_or(0.5), c2: cal.c2.unwrap_or(0.5) });
    let d = ProbeSpec::default();
    let probe = match &cal.probe {
        None => d,
        Some(p) => ProbeSpec {
            d_min: p.d_min.unwrap_or(d.d_min),
            d_max: p.d_max.unwrap_or(d.d_max),
            levels: p.levels.unwrap_or(d.levels),
            along: p.along.unwrap_or(d.along),
            near_ends: p.near_ends.clone().unwrap_or(d.near_ends),
            snapshot: p.snapshot,
        },
    };
    let perturbation = raw.perturbation.as_ref().map(|p| match p.kind {
        PerturbType::Shift => Perturbation::Shift(V2::new(p.dx.unwrap_or(0.0), p.dy.unwrap_or(0.0))),
        PerturbType::Noise => Perturbation::Noise { band: p.band.unwrap_or(2.0 * h), p: p.p.unwrap_or(0.0) },
        PerturbType::Seed => {
            let c = p.center.unwrap_or([0.0, 0.0]);
            Perturbation::Seed { center: V2::new(c[0], c[1]), radius: p.radius.unwrap_or(0.0), phase: p.phase.unwrap_or(0) }
        }
    });
    if let Some(Perturbation::Seed { phase, .. }) = perturbation {
        if phase >= phases {
            return Err(ConfigError { violations: vec![format!("`perturbation.phase` {phase} exceeds the {phases} phases of the scene")] });
        }
    }
    Ok(ExperimentConfig {
        kind: raw.kind,
        scene,
        sigma,
        grid,
        pad,
        solver: f.solver.unwrap_or_default(),
        dt: f.dt,
        t_end: f.t_end.unwrap_or(0.1),
        snapshot_stride: f.snapshot_stride.unwrap_or(10),
        redistribute_every: f.redistribute_every.unwrap_or(10),
        spacing,
        relax_steps: f.relax_steps.unwrap_or(0),
        calib,
        probe,
        samples: cal.samples.unwrap_or(101),
        perturbation,
        deltas: raw.deltas.clone().unwrap_or_else(|| vec![0.02, 0.04, 0.08]),
        eval_stride: raw.eval_stride.unwrap_or(1),
        seed: raw.seed.or(s.seed),
        output: raw.output.clone(),
    })
}

fn build_scene(raw: &RawConfig, base: Option<&Path>) -> Result<Scene, String> {
    let s = &raw.scene;
    Ok(match s.kind {
        SceneType::Circle => {
            let c = s.center.unwrap_or([0.0, 0.0]);
            Scene::Network(scenes::circle(s.radius.unwrap_or(1.0), s.nodes.unwrap_or(256), V2::new(c[0], c[1])))
        }
        SceneType::Triod => Scene::Network(scenes::triod(s.spacing.unwrap_or(0.02), s.half.unwrap_or(1.0), None)),
        SceneType::CurvedTriod => Scene::Network(scenes::curved_triod(
            s.spacing.unwrap_or(0.02),
            s.arm_length.unwrap_or(1.0),
            s.curvatures.unwrap_or([0.5, -0.3, -0.2]),
        )),
        SceneType::Lens => Scene::Network(scenes::lens(s.a.unwrap_or(0.5), s.half.unwrap_or(1.5), s.spacing.unwrap_or(0.02))),
        SceneType::Voronoi => {
            let b = s.bbox.unwrap_or([0.0, 0.0, 1.0, 1.0]);
            let domain = Aabb { min: V2::new(b[0], b[1]), max: V2::new(b[2], b[3]) };
            let seed = s.seed.or(raw.seed).unwrap_or(0);
            Scene::Voronoi(scenes::Voronoi::random(s.seeds.unwrap_or(30), domain, seed))
        }
        SceneType::FourgrainsDemo => Scene::FourGrains { half: s.half.unwrap_or(1.0) },
        SceneType::File => {
            let p = s.path.clone().unwrap_or_default();
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            let text = std::fs::read_to_string(&p).map_err(|e| format!("cannot read scene file {}: {e}", p.display()))?;
            let net = Network::from_json(&text).map_err(|e| format!("scene file {}: {e}", p.display()))?;
            Scene::Network(net)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_circle_gets_defaults() {
        let c = parse_config(r#"{"scene": {"type": "circle"}}"#, None).unwrap();
        assert_eq!(c.grid.nx, 256);
        assert!((c.mbo_dt() - 4.0 * c.grid.h * c.grid.h).abs() < 1e-18);
        assert_eq!(c.solver, Solver::Mbo);
    }

    #[test]
    fn all_violations_are_reported() {
        let e = parse_config(r#"{"scene": {"type": "circle", "radius": -1, "half": 2}, "flow": {"dt": -0.1, "speed": 1}, "colour": 3}"#, None).unwrap_err();
        let all = e.violations.join("\n");
        for needle in ["scene.radius", "scene.half", "flow.dt", "flow.speed", "colour"] {
            assert!(all.contains(needle), "{needle} missing from {all}");
        }
    }
}
