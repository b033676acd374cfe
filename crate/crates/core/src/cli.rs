//! Command-line front end. `main` only forwards to [`run`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ResolvedSeries, RunConfig, PRESET_NAMES};
use crate::detect::DetectorKind;
use crate::geometry::{validate_design, RuleStatus};
use crate::mapping::Scheme;
use crate::plot::{log_chart, Series};
use crate::sim::{bound_sweep, run_sweep_with_bank, BerCurve, BoundPoint, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Sim(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(name = "irsbim", version, about = "Twin-IRS beam-index modulation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the layout design rules of every series.
    Validate(Common),
    /// Monte-Carlo BER sweep, one CSV per curve.
    Sweep(Common),
    /// Analytical BER upper bound over the sweep grid.
    Bound(Common),
    /// Sweep and bound side by side.
    Compare(Common),
    /// Print a built-in preset as TOML.
    Preset {
        /// fig2 .. fig8
        name: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset name (fig2 .. fig8).
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `sim.trials`.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write an SVG chart.
    #[arg(long)]
    pub plot: bool,
}

impl Common {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), None) => RunConfig::from_path(p)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            _ => return Err(CliError::Usage("exactly one of --config or --preset is required".into())),
        };
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(t) = self.trials {
            if t == 0 {
                return Err(CliError::Usage("--trials must be >= 1".into()));
            }
            cfg.sim.trials = t;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    name: &'a str,
    config_hash: String,
    seed: u64,
    trials: u64,
    code_version: &'static str,
    schema_version: u32,
    outputs: Vec<String>,
    config: String,
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' }).collect()
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::S1 => "s1",
        Scheme::S2 => "s2",
        Scheme::S3 => "s3",
    }
}

fn detector_name(d: DetectorKind) -> &'static str {
    match d {
        DetectorKind::Ml => "ml",
        DetectorKind::Cs => "cs",
    }
}

pub const SWEEP_HEADER: &str = "sweep_var,value,detector,scheme,ber,stderr,trials";
pub const BOUND_HEADER: &str = "sweep_var,value,ber_upper,stderr,omega,pairs_evaluated,method";
pub const COMPARE_HEADER: &str = "sweep_var,value,detector,scheme,ber,stderr,trials,ub,ub_stderr";

pub fn sweep_csv(curve: &BerCurve, bound: Option<&[BoundPoint]>) -> String {
    let mut s = String::new();
    s.push_str(if bound.is_some() { COMPARE_HEADER } else { SWEEP_HEADER });
    s.push('\n');
    for (n, p) in curve.points.iter().enumerate() {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            curve.sweep_var,
            p.value,
            detector_name(curve.detector),
            scheme_name(curve.scheme),
            p.ber,
            p.stderr,
            p.trials
        );
        if let Some(b) = bound {
            let r = &b[n].result;
            let _ = write!(s, ",{},{}", r.ber_upper, r.stderr);
        }
        s.push('\n');
    }
    s
}

pub fn bound_csv(var: &str, points: &[BoundPoint]) -> String {
    let mut s = String::from(BOUND_HEADER);
    s.push('\n');
    for p in points {
        let r = &p.result;
        let _ = writeln!(s, "{var},{},{},{},{},{},{}", p.value, r.ber_upper, r.stderr, r.omega, r.pairs_evaluated, p.method);
    }
    s
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(format!("cannot create {}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(io_err(format!("cannot write {}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn validate(cfg: &RunConfig, out: &mut String) -> Result<i32, CliError> {
    let mut failed = false;
    for s in cfg.resolve()? {
        let _ = writeln!(out, "[{}]", s.label);
        for r in validate_design(&s.trial.link) {
            let tag = match r.status {
                RuleStatus::Pass => "PASS",
                RuleStatus::Fail => "FAIL",
                RuleStatus::Info => "INFO",
            };
            failed |= r.is_failure();
            let _ = writeln!(out, "  rule {} {:<14} {tag}  {}", r.rule, r.name, r.detail);
        }
    }
    Ok(if failed { EXIT_VALIDATION } else { EXIT_OK })
}

struct SeriesRun {
    series: ResolvedSeries,
    curves: Vec<BerCurve>,
    bound: Option<Vec<BoundPoint>>,
}

fn execute(cfg: &RunConfig, simulate: bool, bound: bool) -> Result<Vec<SeriesRun>, CliError> {
    let var = cfg.sim.sweep;
    let grid = &cfg.sim.grid;
    let bc = cfg.bound.to_bound_config();
    cfg.resolve()?
        .into_iter()
        .map(|series| {
            let bank = series.trial.build_bank()?;
            let curves = if simulate {
                run_sweep_with_bank(&series.trial, &bank, &cfg.name, var, grid)?
            } else {
                Vec::new()
            };
            let bound = if bound { Some(bound_sweep(&series.trial, &bank, var, grid, &bc)?) } else { None };
            Ok(SeriesRun { series, curves, bound })
        })
        .collect()
}

fn x_label(cfg: &RunConfig) -> &'static str {
    match cfg.sim.sweep.name() {
        "snr_db" => "SNR (dB)",
        "k_db" => "Rician factor K (dB)",
        _ => "receive antennas N_R",
    }
}

fn emit(cfg: &RunConfig, command: &str, runs: &[SeriesRun], plot: bool, w: &mut Writer) -> Result<(), CliError> {
    let var = cfg.sim.sweep.name();
    let mut chart = Vec::new();
    for run in runs {
        let label = slug(&run.series.label);
        let compare = command == "compare";
        for c in &run.curves {
            let name = format!("{}_{label}_{}.csv", slug(&cfg.name), detector_name(c.detector));
            w.write(&name, &sweep_csv(c, if compare { run.bound.as_deref() } else { None }))?;
            chart.push(Series {
                label: format!("{} {}", run.series.label, detector_name(c.detector).to_uppercase()),
                points: c.points.iter().map(|p| (p.value, p.ber)).collect(),
                dashed: false,
            });
        }
        if let Some(b) = &run.bound {
            if !compare {
                w.write(&format!("{}_{label}_bound.csv", slug(&cfg.name)), &bound_csv(var, b))?;
            }
            chart.push(Series {
                label: format!("{} UB", run.series.label),
                points: b.iter().map(|p| (p.value, p.result.ber_upper)).collect(),
                dashed: true,
            });
        }
    }
    if plot {
        let svg = log_chart(&cfg.name, x_label(cfg), "BER", &chart);
        w.write(&format!("{}_{command}.svg", slug(&cfg.name)), &svg)?;
    }
    Ok(())
}

fn write_manifest(cfg: &RunConfig, command: &str, w: &mut Writer) -> Result<(), CliError> {
    let m = Manifest {
        command,
        name: &cfg.name,
        config_hash: cfg.hash(),
        seed: cfg.sim.seed,
        trials: cfg.sim.trials,
        code_version: env!("CARGO_PKG_VERSION"),
        schema_version: cfg.schema_version,
        outputs: w.outputs.clone(),
        config: cfg.to_toml(),
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    w.write("manifest.json", &(text + "\n"))
}

/// Runs one parsed command; informational output goes to `out`.
pub fn dispatch(cli: &Cli, out: &mut String) -> Result<i32, CliError> {
    let (common, command) = match &cli.command {
        Command::Preset { name } => {
            let text = crate::config::preset_text(name)
                .ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", "))))?;
            out.push_str(text.trim_start());
            return Ok(EXIT_OK);
        }
        Command::Validate(c) => (c, "validate"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Bound(c) => (c, "bound"),
        Command::Compare(c) => (c, "compare"),
    };
    let cfg = common.load()?;
    if command == "validate" {
        return validate(&cfg, out);
    }
    let work = || -> Result<Vec<SeriesRun>, CliError> {
        let simulate = command != "bound";
        let bound = command == "bound" || command == "compare" || (command == "sweep" && cfg.bound.enabled);
        execute(&cfg, simulate, bound)
    };
    let runs = match common.workers {
        Some(0) => return Err(CliError::Usage("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut w = Writer::new(&common.out)?;
    emit(&cfg, command, &runs, common.plot, &mut w)?;
    write_manifest(&cfg, command, &mut w)?;
    for f in &w.outputs {
        let _ = writeln!(out, "wrote {}", common.out.join(f).display());
    }
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command, printing to stdout/stderr. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_RUNTIME } else { EXIT_OK };
        }
    };
    let mut out = String::new();
    let code = match dispatch(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    print!("{out}");
    code
}
