//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
//! Failures print one line to stderr of the form
//! `nhchain-error code=<c> kind=<kind> key=<key> message=<text>`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::io::{load_config, write_artifacts, write_atomic};
use crate::protocols::{preset, preset_group, run, ExperimentConfig, ExperimentKind, Metrics, TimingConfig, PRESET_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nhchain", version, about = "Non-Hermitian tight-binding chain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form dispersion scan.
    Dispersion(RunArgs),
    /// Single-site or Gaussian transport run.
    Transport(RunArgs),
    /// Capture, storage and release run.
    Storage(RunArgs),
    /// Two-sublattice model versus its reduced chain.
    ReduceCheck(RunArgs),
    /// Run a named preset of any kind; `--list` prints the names.
    Preset {
        /// Preset name (alternative to --preset).
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    #[arg(long, value_enum, default_value = "csv+svg")]
    format: Format,
}

struct Failure {
    code: i32,
    kind: &'static str,
    key: String,
    message: String,
}

impl Failure {
    fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            kind: "config",
            key: key.into(),
            message: message.into(),
        }
    }

    fn line(&self) -> String {
        format!(
            "nhchain-error code={} kind={} key={} message={}",
            self.code,
            self.kind,
            self.key,
            self.message.replace('\n', " ")
        )
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind, key) = match &e {
            Error::GainRunaway { .. } | Error::ZeroNorm => (EXIT_NUMERICAL, "numerical", "dynamics".to_string()),
            Error::Config { key, .. } => (EXIT_CONFIG, "config", key.clone()),
            Error::Io { path, .. } => (EXIT_CONFIG, "io", path.display().to_string()),
            Error::Parse { line, .. } => (EXIT_CONFIG, "parse", format!("line{line}")),
            Error::InvalidParameter { name, .. } => (EXIT_CONFIG, "config", name.clone()),
            Error::DefectOutOfRange { .. } | Error::DuplicateDefect(_) => {
                (EXIT_CONFIG, "config", "lattice.defects".into())
            }
            Error::StepTooLarge { .. } => (EXIT_CONFIG, "config", "timing.dt".into()),
            Error::SampleNotMultiple { .. } => (EXIT_CONFIG, "config", "timing.sample_dt".into()),
            Error::TooFewSamples { .. } | Error::TimeOutOfRange { .. } => (EXIT_CONFIG, "config", "window".into()),
            Error::SiteOutOfRange { .. } | Error::InvalidRegion { .. } => (EXIT_CONFIG, "config", "region".into()),
            Error::DimensionMismatch { .. } | Error::InvalidSchedule(_) | Error::EmptyTrajectory => {
                (EXIT_CONFIG, "config", "document".into())
            }
        };
        Failure {
            code,
            kind,
            key,
            message,
        }
    }
}

fn expected_kinds(cmd: &Command) -> Option<&'static [ExperimentKind]> {
    match cmd {
        Command::Dispersion(_) => Some(&[ExperimentKind::DispersionScan]),
        Command::Transport(_) => Some(&[ExperimentKind::TransportSingleSite, ExperimentKind::TransportGaussian]),
        Command::Storage(_) => Some(&[ExperimentKind::Storage]),
        Command::ReduceCheck(_) => Some(&[ExperimentKind::ReductionCheck]),
        Command::Preset { .. } => None,
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, args: &RunArgs) -> Result<(), Failure> {
    if args.dt.is_none() && args.t_final.is_none() {
        return Ok(());
    }
    if cfg.experiment == ExperimentKind::DispersionScan {
        let key = if args.dt.is_some() { "dt" } else { "t-final" };
        return Err(Failure::config(key, "dispersion scans have no time axis"));
    }
    let timing = cfg.timing.get_or_insert_with(TimingConfig::default);
    if let Some(dt) = args.dt {
        timing.dt = dt;
    }
    if let Some(t) = args.t_final {
        timing.t_final = t;
    }
    Ok(())
}

fn run_one(cfg: &ExperimentConfig, out: &Path, svg: bool, log: &mut String) -> Result<Metrics, Failure> {
    let result = run(cfg)?;
    for p in write_artifacts(&result, out, svg)? {
        let _ = writeln!(log, "wrote {}", p.display());
    }
    Ok(result.metrics)
}

fn execute(cmd: Command, log: &mut String) -> Result<(), Failure> {
    let expected = expected_kinds(&cmd);
    let (name, list, args) = match cmd {
        Command::Preset { name, list, args } => (name, list, args),
        Command::Dispersion(a) | Command::Transport(a) | Command::Storage(a) | Command::ReduceCheck(a) => {
            (None, false, a)
        }
    };
    if list {
        for n in PRESET_NAMES.iter().chain(["fig7"].iter()) {
            let _ = writeln!(log, "{n}");
        }
        return Ok(());
    }
    let preset_name = match (name, args.preset.clone()) {
        (Some(a), Some(b)) if a != b => return Err(Failure::config("preset", "given twice with different values")),
        (a, b) => a.or(b),
    };
    let out = args.out.clone().ok_or_else(|| Failure::config("out", "--out <dir> is required"))?;
    let svg = args.format == Format::CsvSvg;

    let configs: Vec<(Option<&str>, ExperimentConfig)> = match (&args.config, &preset_name) {
        (Some(path), _) => vec![(None, load_config(path)?)],
        (None, Some(p)) => match preset_group(p) {
            Some(members) => members.iter().map(|m| (Some(*m), preset(m).expect("known member"))).collect(),
            None => vec![(None, preset(p).ok_or_else(|| Failure::config("preset", format!("unknown preset `{p}`")))?)],
        },
        (None, None) => return Err(Failure::config("config", "either --config or --preset is required")),
    };
    for (_, cfg) in &configs {
        if let Some(kinds) = expected {
            if !kinds.contains(&cfg.experiment) {
                return Err(Failure::config(
                    "experiment",
                    format!("`{}` cannot be run by this subcommand", cfg.experiment.as_str()),
                ));
            }
        }
    }

    if configs.len() == 1 && configs[0].0.is_none() {
        let mut cfg = configs.into_iter().next().expect("one").1;
        apply_overrides(&mut cfg, &args)?;
        run_one(&cfg, &out, svg, log)?;
        return Ok(());
    }

    let mut table = String::from("xi,efficiency\n");
    for (member, mut cfg) in configs {
        apply_overrides(&mut cfg, &args)?;
        let xi = cfg.storage.as_ref().map_or(f64::NAN, |s| s.xi);
        let metrics = run_one(&cfg, &out.join(member.expect("group member")), svg, log)?;
        if let Metrics::Storage(m) = metrics {
            let _ = writeln!(table, "{:.16e},{:.16e}", xi, m.efficiency);
        }
    }
    let path = out.join("efficiency.csv");
    write_atomic(&path, table.as_bytes())?;
    let _ = writeln!(log, "wrote {}", path.display());
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let key = e
                .get(clap::error::ContextKind::InvalidArg)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "argv".into());
            let f = Failure {
                code: EXIT_CONFIG,
                kind: "usage",
                key,
                message: e.kind().to_string(),
            };
            eprintln!("{}", f.line());
            return f.code;
        }
    };
    let mut log = String::new();
    let outcome = execute(cli.command, &mut log);
    print!("{log}");
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code
        }
    }
}
