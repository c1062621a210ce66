use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use levyepi::engine;
use levyepi::estimators::{self, EstimatorError};
use levyepi::output::{self, Metadata};
use levyepi::scenario::{self, Scenario, ScenarioError};
use levyepi::thresholds::{self, ThresholdError, Verdict};
use levyepi::verify::{self, Target, VerifyError};

const EXIT_USAGE: u8 = 64;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(
    name = "levyepi",
    version,
    about = "Stochastic dengue model with Lévy jumps: thresholds, simulation, ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the extinction and persistence thresholds.
    /// Exit code 0: extinction certified, 1: persistence certified, 2: indeterminate.
    Thresholds {
        #[command(flatten)]
        common: Common,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Jump events CSV path.
        #[arg(long)]
        jumps_out: Option<PathBuf>,
        /// Four-panel SVG plot path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run an ensemble and write its JSON summary.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        /// Summary JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-path metrics CSV path.
        #[arg(long)]
        paths_out: Option<PathBuf>,
    },
    /// Run a verification suite. Exit code 0 when every check passes, 1 otherwise.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        target: TargetArg,
        #[arg(long, default_value_t = 100)]
        paths: usize,
        /// Report JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in scenario: table1-extinction or table1-persistence.
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario file in `key = value` format.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Lemma2,
    Comparison,
    Slln,
    Tables,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Lemma2 => Target::Lemma2,
            TargetArg::Comparison => Target::Comparison,
            TargetArg::Slln => Target::Slln,
            TargetArg::Tables => Target::Tables,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Internal(_) => EXIT_SOFTWARE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<ThresholdError> for Failure {
    fn from(e: ThresholdError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<engine::SimError> for Failure {
    fn from(e: engine::SimError) -> Self {
        match e {
            engine::SimError::Negative { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Sim(s) => s.into(),
            EstimatorError::NoPaths => Failure::Usage(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Sim(s) => s.into(),
            VerifyError::Threshold(t) => t.into(),
            VerifyError::Estimator(x) => x.into(),
            VerifyError::NoReferenceColumn | VerifyError::NoPaths => Failure::Usage(e.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut s = match (&common.preset, &common.scenario) {
        (Some(name), None) => Scenario::preset(name)?,
        (None, Some(path)) => scenario::load_file(path)?,
        _ => return Err(Failure::Usage("exactly one of --preset or --scenario is required".into())),
    };
    if let Some(seed) = common.seed {
        s.sim.seed = seed;
    }
    if let Some(dt) = common.dt {
        s.sim.dt = dt;
    }
    if let Some(t) = common.t_end {
        s.sim.t_end = t;
    }
    s.validate()?;
    Ok(s)
}

fn io_err(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, |w| w.write_all(text.as_bytes())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
    }
}

fn warn(messages: &[String]) {
    for m in messages {
        eprintln!("warning: {m}");
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Thresholds { common, out } => {
            let s = load(&common)?;
            let report = thresholds::classify(&s.model, &s.noise, &s.jumps, s.p)?;
            warn(&report.warnings);
            let json = output::to_json(&Metadata::new(&s, s.sim.seed, None), &report);
            emit(None, &json)?;
            if let Some(p) = out {
                emit(Some(&p), &json)?;
            }
            Ok(match report.verdict {
                Verdict::ExtinctionCertified => 0,
                Verdict::PersistenceCertified => 1,
                Verdict::Indeterminate => 2,
            })
        }
        Command::Simulate { common, out, jumps_out, svg } => {
            let s = load(&common)?;
            warn(&s.sim.warnings(&s.jumps));
            let traj = engine::simulate(&s.model, &s.noise, &s.jumps, &s.sim, &s.init)?;
            if traj.clamp_count > 0 {
                eprintln!("clamped {} times over {} steps", traj.clamp_count, traj.steps);
            }
            let meta = Metadata::new(&s, s.sim.seed, None);
            match &out {
                Some(p) => write_file(p, |w| output::write_trajectory_csv(w, &meta, &traj))?,
                None => {
                    let mut w = BufWriter::new(io::stdout().lock());
                    output::write_trajectory_csv(&mut w, &meta, &traj)
                        .and_then(|_| w.flush())
                        .map_err(|e| Failure::Io(format!("stdout: {e}")))?;
                }
            }
            if let Some(p) = &jumps_out {
                write_file(p, |w| output::write_jumps_csv(w, &meta, &traj))?;
            }
            if let Some(p) = &svg {
                emit(Some(p), &output::render_svg(&meta, &traj))?;
            }
            Ok(0)
        }
        Command::Ensemble { common, paths, out, paths_out } => {
            let s = load(&common)?;
            warn(&s.sim.warnings(&s.jumps));
            let e = estimators::ensemble_run(&s, paths, s.sim.seed)?;
            let meta = Metadata::new(&s, s.sim.seed, Some(paths));
            for f in &e.summary.failures {
                eprintln!("path {} failed: {}", f.path, f.error);
            }
            emit(out.as_deref(), &output::to_json(&meta, &e.summary))?;
            if let Some(p) = &paths_out {
                write_file(p, |w| output::write_paths_csv(w, &meta, &e.paths))?;
            }
            Ok(0)
        }
        Command::Verify { common, target, paths, out } => {
            let s = load(&common)?;
            let report = verify::run(&s, target.into(), paths, s.sim.seed)?;
            for c in &report.checks {
                eprintln!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let meta = Metadata::new(&s, s.sim.seed, Some(report.n_paths));
            emit(out.as_deref(), &output::to_json(&meta, &report))?;
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = estimators::workers_from_env() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
