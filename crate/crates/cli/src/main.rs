mod commands;
mod pretty;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "symforest", version, about = "Bayesian symbolic regression with symbolic forests")]
struct Cli {
    /// JSON file whose keys mirror the subcommand's flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a benchmark dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run the sampler and rank the visited forests.
    Fit(FitArgs),
    /// RMSE of given forests under conjugate fitted values.
    Eval(EvalArgs),
    /// Edit distance between two expressions.
    Ged(GedArgs),
    /// Geweke and Gelman-Rubin diagnostics for saved traces.
    Diagnose(DiagnoseArgs),
}

/// Fills every unset field from `other`.
macro_rules! mergeable {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $t {
            fn merge(self, other: Self) -> Self {
                $t { $($f: self.$f.or(other.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    /// sim5x, gpe, coulomb or lorentz.
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(SimulateArgs { benchmark, n, sigma2, seed, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column; the last column by default.
    #[arg(long)]
    pub target: Option<String>,
    /// Number of trees.
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<i64>,
    #[arg(long)]
    pub niter: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub p_grow: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains with seeds `seed, seed+1, ...`.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Number of ranked forests to report.
    #[arg(long)]
    pub r: Option<usize>,
    /// Comma-separated operator names.
    #[arg(long)]
    pub ops: Option<String>,
    /// `exact` or `published` GROW density.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Ground-truth expression; adds mGED to the report.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// CSV of `chain,iter,log_jmp`.
    #[arg(long)]
    pub series_out: Option<PathBuf>,
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub pretty: Option<bool>,
}
mergeable!(FitArgs {
    data, target, k, niter, alpha, delta0, p_grow, max_depth, seed, chains, r, ops, kernel, truth,
    trace_out, report_out, series_out, pretty,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Forests separated by `;`, trees within a forest by `,`.
    #[arg(long)]
    pub expr_list: Option<String>,
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub pretty: Option<bool>,
}
mergeable!(EvalArgs { data, target, expr_list, pretty });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GedArgs {
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub pretty: Option<bool>,
}
mergeable!(GedArgs { a, b, pretty });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// Comma-separated trace files.
    #[arg(long)]
    pub trace: Option<String>,
    /// `log_jmp`, `sigma2` or `beta<i>`.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long)]
    pub geweke_threshold: Option<f64>,
    #[arg(long)]
    pub rhat_threshold: Option<f64>,
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub pretty: Option<bool>,
}
mergeable!(DiagnoseArgs { trace, functional, geweke_threshold, rhat_threshold, pretty });

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Engine(symforest::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        use symforest::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Engine(e) => match e {
                E::Structure(_) => "structure",
                E::Syntax { .. } | E::UnknownOperator(_) | E::Parse { .. } => "parse",
                E::Domain(_) => "domain",
                E::Degenerate(_) => "degenerate",
                E::NotApplicable(_) => "not_applicable",
                E::Config(_) => "config",
                E::Diagnostic(_) => "diagnostic",
                E::Io(_) => "io",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Engine(e) => e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Engine(_) => 1,
        }
    }
}

impl From<symforest::Error> for CliError {
    fn from(e: symforest::Error) -> Self {
        CliError::Engine(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Engine(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn load_config<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_ref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(a.merge(load_config(cfg)?)),
        Command::Fit(a) => commands::fit(a.merge(load_config(cfg)?)),
        Command::Eval(a) => commands::eval(a.merge(load_config(cfg)?)),
        Command::Ged(a) => commands::ged(a.merge(load_config(cfg)?)),
        Command::Diagnose(a) => commands::diagnose(a.merge(load_config(cfg)?)),
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", json!({ "error": err.kind(), "message": err.message() }));
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.kind().to_string() + ": " + e.render().to_string().trim())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
