//! Command-line front end: `chm oracle | run | sweep | selftest`.

pub mod config;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::run_batch;
use crate::oracle::{brute_force_game, characteristic_time, lower_bound, Query};
use config::{ConfigError, Entry, ExperimentConfig, FamilyKind, Origin, BENCHMARK_MEANS};
use output::SummaryRow;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SELFTEST: i32 = 4;

/// Gamma values of the sample-complexity sweep: six inside the benchmark
/// hull and five above it.
pub const FIGURE1_GAMMAS: [f64; 11] = [0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const FIGURE2_GAMMAS: [f64; 2] = [0.25, 0.9];

#[derive(Debug, Parser)]
#[command(name = "chm", version, about = "Convex hull membership testing with Thompson-CHM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print feasibility, T*, w*, gamma* and the lower bound for each query and delta.
    Oracle {
        #[command(flatten)]
        opts: ExperimentOpts,
        /// Also solve the exploration game on a simplex grid of resolution N.
        #[arg(long, value_name = "N")]
        brute_force: Option<usize>,
    },
    /// Simulate a batch for one query and one delta; writes runs.csv and summary.csv.
    Run {
        #[command(flatten)]
        opts: ExperimentOpts,
    },
    /// One summary row per (query, delta) pair.
    Sweep {
        #[command(flatten)]
        opts: ExperimentOpts,
        /// Sample-complexity preset on the 7-arm benchmark (11 gamma values).
        #[arg(long, conflicts_with = "figure2")]
        figure1: bool,
        /// Allocation preset on the 7-arm benchmark (gamma 0.25 and 0.9).
        #[arg(long)]
        figure2: bool,
    },
    /// Run the fast invariant suite.
    Selftest,
}

/// Settings shared by the experiment subcommands. Each overrides the
/// matching key of `--config`.
#[derive(Debug, Default, Args)]
pub struct ExperimentOpts {
    /// Config file: `key = value` lines or a JSON object.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// thompson-chm, uniform or two-pass.
    #[arg(long)]
    pub policy: Option<String>,
    /// Risk level, or a comma-separated list for sweeps.
    #[arg(long)]
    pub delta: Option<String>,
    /// Point query, or a comma-separated list for sweeps.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Lower end of an interval query ("-inf" allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_minus: Option<String>,
    /// Upper end of an interval query ("inf" allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_plus: Option<String>,
    /// Comma-separated arm means.
    #[arg(long, allow_hyphen_values = true)]
    pub means: Option<String>,
    /// bernoulli or gaussian.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub max_steps: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Forced round-robin sweeps before the policy starts.
    #[arg(long, value_name = "N")]
    pub init_rounds: Option<String>,
    #[arg(long, value_name = "N")]
    pub trace_stride: Option<String>,
    /// Any other config key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    pub set: Vec<String>,
}

impl ExperimentOpts {
    fn entries(&self) -> Result<Vec<Entry>, CliError> {
        let mut out = Vec::new();
        let flags = [
            ("--policy", "policy", &self.policy),
            ("--delta", "delta", &self.delta),
            ("--gamma", "gamma", &self.gamma),
            ("--gamma-minus", "gamma_minus", &self.gamma_minus),
            ("--gamma-plus", "gamma_plus", &self.gamma_plus),
            ("--means", "means", &self.means),
            ("--family", "family", &self.family),
            ("--reps", "reps", &self.reps),
            ("--seed", "seed", &self.seed),
            ("--max-steps", "max_steps", &self.max_steps),
            ("--out", "out", &self.out),
            ("--init-rounds", "init_rounds", &self.init_rounds),
            ("--trace-stride", "trace_stride", &self.trace_stride),
        ];
        for (flag, key, value) in flags {
            if let Some(v) = value {
                out.push(Entry::flag(flag, key, v.clone()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                CliError::Config(ConfigError {
                    origin: Some(Origin::Flag("--set".into())),
                    message: format!("expected KEY=VALUE, found '{kv}'"),
                })
            })?;
            out.push(Entry::flag("--set", &k.trim().replace('-', "_"), v.trim()));
        }
        Ok(out)
    }

    /// File settings overlaid with flags, not yet validated.
    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut entries = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                config::parse_text(path, &text)?
            }
            None => Vec::new(),
        };
        entries.extend(self.entries()?);
        Ok(ExperimentConfig::from_entries(&entries)?)
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Io { path: PathBuf, source: std::io::Error },
    Selftest { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Selftest { .. } => EXIT_SELFTEST,
        }
    }

    fn config(origin: Origin, message: impl Into<String>) -> Self {
        CliError::Config(ConfigError {
            origin: Some(origin),
            message: message.into(),
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Io { path, source } => write!(f, "I/O error on {}: {source}", path.display()),
            CliError::Selftest { failed } => write!(f, "selftest: {failed} check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

/// Worker cap from `CHM_THREADS`; unset means the global pool.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("CHM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::config(
                Origin::Flag("CHM_THREADS".into()),
                format!("expected a positive integer, found '{v}'"),
            )),
        },
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn engine_error(e: crate::error::ChmError) -> CliError {
    CliError::config(Origin::Default, e.to_string())
}

pub fn cmd_oracle(cfg: &ExperimentConfig, brute_force: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let model = cfg.model()?;
    let stdout_err = |source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    writeln!(out, "{}", output::oracle_header(cfg.means.len(), brute_force.is_some())).map_err(stdout_err)?;
    for q in cfg.queries()? {
        let oracle = characteristic_time(&model, &cfg.means, &q).map_err(engine_error)?;
        let grid = match brute_force {
            Some(n) => Some(
                brute_force_game(&model, &cfg.means, &q, n)
                    .map_err(|e| CliError::config(Origin::Flag("--brute-force".into()), e.to_string()))?
                    .value,
            ),
            None => None,
        };
        for &delta in &cfg.deltas {
            let lb = lower_bound(oracle.t_star, delta).map_err(engine_error)?;
            writeln!(out, "{}", output::oracle_line(&q, delta, &oracle, lb, grid)).map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn summary_for(
    cfg: &ExperimentConfig,
    q: Query,
    delta: f64,
    threads: Option<usize>,
) -> Result<(String, Vec<crate::engine::RunRecord>), CliError> {
    let instance = cfg.instance(q)?;
    let rc = cfg.run_config(delta)?;
    let batch = run_batch(&instance, &rc, cfg.reps, cfg.seed, threads).map_err(engine_error)?;
    let oracle = characteristic_time(instance.model(), &cfg.means, &q).map_err(engine_error)?;
    let lb = lower_bound(oracle.t_star, delta).map_err(engine_error)?;
    let line = output::summary_line(&SummaryRow {
        hash: output::config_hash(&cfg.canonical(&q, delta)),
        policy: cfg.policy.as_str(),
        family: cfg.family.as_str(),
        query: q,
        delta,
        stats: &batch.stats,
        oracle: &oracle,
        lower_bound: lb,
    });
    Ok((line, batch.records))
}

/// Paths written by [`cmd_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub runs: PathBuf,
    pub summary: PathBuf,
}

pub fn cmd_run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunFiles, CliError> {
    cfg.validate()?;
    let queries = cfg.queries()?;
    if queries.len() != 1 || cfg.deltas.len() != 1 {
        return Err(CliError::config(
            Origin::Default,
            "run takes exactly one query and one delta; use sweep for lists",
        ));
    }
    let (line, records) = summary_for(cfg, queries[0], cfg.deltas[0], threads)?;
    let k = cfg.means.len();
    ensure_dir(&cfg.out)?;
    let files = RunFiles {
        runs: cfg.out.join("runs.csv"),
        summary: cfg.out.join("summary.csv"),
    };
    write_file(&files.runs, &output::runs_csv(&records, k))?;
    write_file(&files.summary, &format!("{}\n{}\n", output::summary_header(k), line))?;
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Figure1,
    Figure2,
}

impl Preset {
    fn flag(self) -> &'static str {
        match self {
            Preset::Figure1 => "--figure1",
            Preset::Figure2 => "--figure2",
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            Preset::Figure1 => "figure1.csv",
            Preset::Figure2 => "figure2.csv",
        }
    }

    /// Fixes the benchmark instance and its gamma list; explicit settings of
    /// those keys are rejected.
    pub fn apply(self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        for key in ["means", "family", "gamma", "gamma_minus", "gamma_plus"] {
            if cfg.is_set(key) {
                return Err(CliError::config(
                    Origin::Flag(self.flag().into()),
                    format!("the preset fixes '{key}'; remove it from the config or flags"),
                ));
            }
        }
        cfg.family = FamilyKind::Bernoulli;
        cfg.means = BENCHMARK_MEANS.to_vec();
        cfg.gammas = match self {
            Preset::Figure1 => FIGURE1_GAMMAS.to_vec(),
            Preset::Figure2 => FIGURE2_GAMMAS.to_vec(),
        };
        Ok(())
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig, preset: Option<Preset>, threads: Option<usize>) -> Result<PathBuf, CliError> {
    let mut cfg = cfg.clone();
    if let Some(p) = preset {
        p.apply(&mut cfg)?;
    }
    cfg.validate()?;
    let k = cfg.means.len();
    let mut csv = output::summary_header(k);
    csv.push('\n');
    for q in cfg.queries()? {
        for &delta in &cfg.deltas {
            let (line, _) = summary_for(&cfg, q, delta, threads)?;
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join(preset.map_or("sweep.csv", Preset::file_name));
    write_file(&path, &csv)?;
    Ok(path)
}

pub fn cmd_selftest(out: &mut dyn Write) -> Result<(), CliError> {
    cmd_selftest_with(crate::exp_family::ExpFamilyModel::kl_div, out)
}

/// [`cmd_selftest`] with a substitute divergence.
pub fn cmd_selftest_with(kl: selftest::KlFn, out: &mut dyn Write) -> Result<(), CliError> {
    let report = selftest::run_with(kl);
    for c in &report.checks {
        let status = if c.passed { "ok  " } else { "FAIL" };
        let _ = if c.detail.is_empty() {
            writeln!(out, "{status} {}", c.name)
        } else {
            writeln!(out, "{status} {}: {}", c.name, c.detail)
        };
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Selftest { failed });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Oracle { opts, brute_force } => {
            let cfg = opts.load()?;
            cmd_oracle(&cfg, brute_force, &mut std::io::stdout().lock())
        }
        Command::Run { opts } => {
            let cfg = opts.load()?;
            let files = cmd_run(&cfg, threads_from_env()?)?;
            println!("wrote {} and {}", files.runs.display(), files.summary.display());
            Ok(())
        }
        Command::Sweep { opts, figure1, figure2 } => {
            let cfg = opts.load()?;
            let preset = match (figure1, figure2) {
                (true, _) => Some(Preset::Figure1),
                (_, true) => Some(Preset::Figure2),
                _ => None,
            };
            let path = cmd_sweep(&cfg, preset, threads_from_env()?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Selftest => cmd_selftest(&mut std::io::stdout().lock()),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("chm: {e}");
            e.exit_code()
        }
    }
}
