mod ingest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use envkit::{
    fit_envelope, run_bootstrap_from, run_ratio_table, summarize, BootstrapConfig, CandidateRange,
    Family, PathMethod, Setting, SolverOptions,
};

#[derive(Parser)]
#[command(name = "envkit", about = "Weighted envelope estimation for GLMs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    Logistic,
    Poisson,
}

impl FamilyArg {
    fn to_family(self) -> Family {
        match self {
            FamilyArg::Linear => Family::Linear,
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::Poisson => Family::Poisson,
        }
    }
    fn name(self) -> &'static str {
        match self {
            FamilyArg::Linear => "linear",
            FamilyArg::Logistic => "logistic",
            FamilyArg::Poisson => "poisson",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    #[value(name = "1d")]
    OneD,
    Fg,
}

impl MethodArg {
    fn to_method(self) -> PathMethod {
        match self {
            MethodArg::OneD => PathMethod::OneD,
            MethodArg::Fg => PathMethod::Fg,
        }
    }
    fn name(self) -> &'static str {
        match self {
            MethodArg::OneD => "1d",
            MethodArg::Fg => "fg",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    #[value(name = "0p")]
    ZeroP,
    #[value(name = "1p")]
    OneP,
}

impl RangeArg {
    fn to_range(self) -> CandidateRange {
        match self {
            RangeArg::ZeroP => CandidateRange::ZeroToP,
            RangeArg::OneP => CandidateRange::OneToP,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    A,
    B,
}

impl SettingArg {
    fn to_setting(self) -> Setting {
        match self {
            SettingArg::A => Setting::A,
            SettingArg::B => Setting::B,
        }
    }
    fn name(self) -> &'static str {
        match self {
            SettingArg::A => "A",
            SettingArg::B => "B",
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV (first row headers)
    #[arg(long)]
    input: PathBuf,
    /// Response column name
    #[arg(long)]
    response: String,
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Fit an intercept
    #[arg(long)]
    intercept: bool,
    #[arg(long, value_enum, default_value = "1d")]
    method: MethodArg,
    /// Penalty multiplier in the information criterion
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    /// Candidate dimension range
    #[arg(long, value_enum, default_value = "1p")]
    range: RangeArg,
}

#[derive(Args)]
struct OutputArgs {
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the weighted envelope estimator on CSV data
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit, then run a nonparametric pairs bootstrap
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        /// Number of bootstrap replicates
        #[arg(long = "B", default_value_t = 1000)]
        b: usize,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        /// Worker threads (ENVKIT_WORKERS as fallback)
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the built-in simulation designs and report SD ratios
    Simulate {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, value_enum)]
        setting: SettingArg,
        /// Sample sizes (repeatable)
        #[arg(long, required = true)]
        n: Vec<usize>,
        #[arg(long = "B", default_value_t = 1000)]
        b: usize,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn workers_or_env(cli: Option<usize>) -> Option<usize> {
    cli.or_else(|| {
        std::env::var("ENVKIT_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn emit(output: &OutputArgs, json: String, csv: String) -> Result<(), Box<dyn std::error::Error>> {
    let body = match output.format {
        FormatArg::Json => json,
        FormatArg::Csv => csv,
    };
    match &output.out {
        Some(path) => std::fs::write(path, body)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit { data, output } => {
            let loaded = ingest::load_csv(
                &data.input,
                &data.response,
                data.family.to_family(),
                data.intercept,
            )?;
            let est = fit_envelope(
                &loaded.dataset,
                data.method.to_method(),
                data.c,
                data.range.to_range(),
                &SolverOptions::default(),
            )?;
            let rep = report::fit_report(
                &est,
                data.family.name(),
                data.method.name(),
                loaded.dataset.n(),
                loaded.predictor_names,
                data.intercept,
            );
            emit(&output, serde_json::to_string_pretty(&rep)?, report::fit_to_csv(&rep)?)
        }
        Command::Bootstrap {
            data,
            b,
            seed,
            workers,
            output,
        } => {
            let loaded = ingest::load_csv(
                &data.input,
                &data.response,
                data.family.to_family(),
                data.intercept,
            )?;
            let mut cfg = BootstrapConfig::new(b, seed);
            cfg.method = data.method.to_method();
            cfg.c = data.c;
            cfg.candidate_range = data.range.to_range();
            cfg.workers = workers_or_env(workers);
            let est = fit_envelope(
                &loaded.dataset,
                cfg.method,
                cfg.c,
                cfg.candidate_range,
                &cfg.solver,
            )?;
            let reps = run_bootstrap_from(&loaded.dataset, &cfg, &est)?;
            let summary = summarize(&reps, loaded.dataset.p());
            let mut fit = report::fit_report(
                &est,
                data.family.name(),
                data.method.name(),
                loaded.dataset.n(),
                loaded.predictor_names,
                data.intercept,
            );
            fit.command = "bootstrap".to_string();
            let rep = report::BootstrapReport {
                fit,
                b,
                seed,
                bootstrap: report::bootstrap_tables(&est, &summary),
            };
            emit(&output, serde_json::to_string_pretty(&rep)?, report::bootstrap_to_csv(&rep)?)
        }
        Command::Simulate {
            family,
            setting,
            n,
            b,
            seed,
            workers,
            output,
        } => {
            if matches!(family, FamilyArg::Linear) {
                return Err("simulate supports --family logistic|poisson".into());
            }
            let cells = run_ratio_table(
                &[(family.to_family(), setting.to_setting())],
                &n,
                b,
                seed,
                workers_or_env(workers),
            )?;
            let rep = report::SimulateReport {
                schema: report::SCHEMA.to_string(),
                command: "simulate".to_string(),
                b,
                seed,
                cells: cells
                    .into_iter()
                    .map(|c| report::SimCellReport {
                        family: family.name().to_string(),
                        setting: setting.name().to_string(),
                        n: c.n,
                        ratio_w: c.ratio_w,
                        ratio_varu: c.ratio_varu,
                        ratio_fixu: c.ratio_fixu,
                        u_distribution: c.summary.u_distribution.clone(),
                        replicates_used: c.summary.replicates_used,
                        skipped: c.summary.skipped,
                    })
                    .collect(),
            };
            emit(&output, serde_json::to_string_pretty(&rep)?, report::simulate_to_csv(&rep)?)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
