use clap::{Parser, Subcommand};
use mcflab_cli::config::{parse_config, ExperimentConfig, Kind};
use mcflab_cli::run::{run_experiment, Artifacts, RunError};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_PASS: u8 = 0;
const EXIT_CRITERION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mcflab", version, about = "Multiphase mean curvature flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Random seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse and validate a configuration without running it.
    Validate,
    /// Evolve the scene by front tracking or thresholding.
    Evolve,
    /// Calibration residual suites on a front-tracked scene.
    CalibrateCheck,
    /// Thresholding against the calibrated front-tracked solution.
    WeakStrong,
    /// Relative entropy of shifted initial data over time.
    StabilitySweep,
    /// Grain area rates on a Voronoi microstructure.
    GrainGrowth,
    /// Sample the calibration fields on a lattice.
    ExportFields,
}

impl Command {
    fn kind(self) -> Option<Kind> {
        match self {
            Command::Validate => None,
            Command::Evolve => Some(Kind::Evolve),
            Command::CalibrateCheck => Some(Kind::CalibrateCheck),
            Command::WeakStrong => Some(Kind::WeakStrong),
            Command::StabilitySweep => Some(Kind::StabilitySweep),
            Command::GrainGrowth => Some(Kind::GrainGrowth),
            Command::ExportFields => Some(Kind::ExportFields),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Vec<String>> {
    let Some(path) = &cli.config else {
        return Err(vec!["--config is required".into()]);
    };
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
    let text = match cli.seed {
        Some(seed) => {
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| vec![format!("malformed configuration: {e}")])?;
            if let Some(obj) = v.as_object_mut() {
                obj.insert("seed".into(), seed.into());
            }
            v.to_string()
        }
        None => text,
    };
    let cfg = parse_config(&text, path.parent()).map_err(|e| e.violations)?;
    if let Some(net) = cfg.network() {
        net.validate().map_err(|e| vec![format!("scene: {e}")])?;
    }
    Ok(cfg)
}

fn write_error(dir: &Path, kind: &str, messages: &[String]) {
    let _ = std::fs::create_dir_all(dir);
    let body = json!({ "error": kind, "messages": messages });
    let _ = std::fs::write(dir.join("error.json"), serde_json::to_string_pretty(&body).unwrap_or_default() + "\n");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("cannot set worker count: {e}");
        }
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(v) => {
            for m in &v {
                eprintln!("error: {m}");
            }
            if let Some(dir) = &cli.out {
                write_error(dir, "input", &v);
            }
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let Some(kind) = cli.command.kind() else {
        println!("configuration is valid");
        return ExitCode::from(EXIT_PASS);
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            let m = vec![format!("configuration is for `{}` but `{}` was requested", k.name(), kind.name())];
            eprintln!("error: {}", m[0]);
            if let Some(dir) = &cli.out {
                write_error(dir, "input", &m);
            }
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let dir = cli.out.clone().or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("mcflab-out"));
    let mut out = match Artifacts::new(&dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let result = run_experiment(kind, &cfg, &mut out);
    let (code, status) = match result {
        Ok(o) => {
            let status = if o.pass { "pass" } else { "fail" };
            let summary = json!({ "experiment": kind.name(), "status": status, "seed": cfg.seed, "result": o.summary });
            if let Err(e) = out.json("summary.json", &summary) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_NUMERICAL);
            }
            println!("{}: {status}", kind.name());
            (if o.pass { EXIT_PASS } else { EXIT_CRITERION }, status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let (code, label) = match e {
                RunError::Input(_) => (EXIT_INPUT, "input"),
                RunError::Numerical(_) | RunError::Io(_) => (EXIT_NUMERICAL, "numerical"),
            };
            let body = json!({ "error": label, "messages": [e.to_string()] });
            let _ = out.json("error.json", &body);
            (code, "error")
        }
    };
    if let Err(e) = out.manifest(kind.name(), status) {
        eprintln!("error: cannot write manifest: {e}");
    }
    ExitCode::from(code)
}
