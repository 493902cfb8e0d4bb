//! `analysis-success`: evaluate, correct and sweep scenario files, or serve
//! the HTTP API.
//!
//! Exit status is 0 on success, 2 for invalid input and 3 for runtime
//! failures. Errors are written to stderr as a JSON object with an `errors`
//! array of `{path, message}`.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use analysis_success::engine::{run_correct, run_evaluate, run_sweep, SweepParam};
use analysis_success::montecarlo::MIN_REPLICATES;
use analysis_success::scenario::load_scenario;
use analysis_success::{Error, Issue, Scenario};
use analysis_success_service::{ServiceConfig, DEFAULT_PORT, MAX_REPLICATES, PORT_ENV};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "analysis-success",
    version,
    about = "Analyst/audience success scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario file.
    Evaluate {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a scenario across a grid of one parameter.
    Sweep {
        file: PathBuf,
        /// epsilon, rho or audience-size
        #[arg(long)]
        param: String,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Apply the scenario's correction plan and re-evaluate.
    Correct {
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Monte Carlo threads shared by all requests.
        #[arg(long)]
        workers: Option<usize>,
        /// Origin of the planner UI, allowed cross-origin access.
        #[arg(long)]
        ui_origin: Option<String>,
        /// Directory of UI assets to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Override `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `mc.replicates`.
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// JSON document
    Structured,
    /// CSV, one row per principle
    Table,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            report(&Error::Validation(vec![Issue::new(
                "",
                e.to_string().trim_end(),
            )]));
            return ExitCode::from(2);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn report(e: &Error) {
    let kind = if e.is_validation() {
        "validation"
    } else {
        "runtime"
    };
    let body = serde_json::json!({ "kind": kind, "errors": e.issues() });
    eprintln!("{body}");
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Evaluate { file, run } => {
            let s = scenario(&file, &run)?;
            let r = run_evaluate(&s)?;
            let text = match run.format {
                Format::Structured => r.to_json(),
                Format::Table => r.to_csv()?,
            };
            emit(&run, &text)
        }
        Command::Correct { file, run } => {
            let s = scenario(&file, &run)?;
            let out = run_correct(&s)?;
            let text = match run.format {
                Format::Structured => out.to_json(),
                Format::Table => out.report.to_csv()?,
            };
            emit(&run, &text)
        }
        Command::Sweep {
            file,
            param,
            grid,
            run,
        } => {
            let param: SweepParam = param.parse().map_err(|e: Error| {
                Error::Validation(vec![Issue::new("--param", e.to_string())])
            })?;
            let s = scenario(&file, &run)?;
            let table = run_sweep(&s, param, &grid)?;
            let text = match run.format {
                Format::Structured => table.to_json(),
                Format::Table => table.to_csv()?,
            };
            emit(&run, &text)
        }
        Command::Serve {
            port,
            host,
            workers,
            ui_origin,
            static_dir,
        } => serve(SocketAddr::new(host, port), workers, ui_origin, static_dir),
    }
}

fn scenario(file: &std::path::Path, run: &RunArgs) -> Result<Scenario, Error> {
    let mut s = load_scenario(file)?;
    if let Some(seed) = run.seed {
        s.mc.seed = seed;
    }
    if let Some(r) = run.replicates {
        if r < MIN_REPLICATES {
            return Err(Error::Validation(vec![Issue::new(
                "--replicates",
                format!("at least {MIN_REPLICATES} replicates are required, got {r}"),
            )]));
        }
        s.mc.replicates = r;
    }
    Ok(s)
}

fn emit(run: &RunArgs, text: &str) -> Result<(), Error> {
    let io = |e: std::io::Error| Error::Runtime(format!("writing output failed: {e}"));
    match &run.out {
        Some(path) => std::fs::write(path, text).map_err(io),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(io)?;
            stdout.flush().map_err(io)
        }
    }
}

fn serve(
    addr: SocketAddr,
    workers: Option<usize>,
    ui_origin: Option<String>,
    static_dir: Option<PathBuf>,
) -> Result<(), Error> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let mut config = ServiceConfig {
        max_replicates: MAX_REPLICATES,
        static_dir,
        ..ServiceConfig::default()
    };
    if let Some(w) = workers {
        config.workers = w;
    }
    if let Some(origin) = ui_origin {
        config.ui_origin = Some(origin.parse().map_err(|_| {
            Error::Validation(vec![Issue::new(
                "--ui-origin",
                format!("invalid origin `{origin}`"),
            )])
        })?);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Runtime(e.to_string()))?;
    runtime
        .block_on(analysis_success_service::serve(addr, config))
        .map_err(|e| Error::Runtime(format!("server failed: {e}")))
}
