use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geocircle_core::api::{self, ApiDefaults, Endpoint, Format};
use geocircle_core::{ingest_files, snapshot, Engine, IngestPaths};
use geocircle_server::ServerConfig;

#[derive(Parser)]
#[command(name = "geocircle", version, about = "Ingest, serve and query epidemic geocircle snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean JHU-layout CSVs and write a snapshot plus ingest report.
    Ingest {
        #[arg(long)]
        confirmed: Option<PathBuf>,
        #[arg(long)]
        deaths: Option<PathBuf>,
        #[arg(long)]
        recovered: Option<PathBuf>,
        #[arg(long)]
        vaccinations: Option<PathBuf>,
        /// UID lookup table with a Population column.
        #[arg(long)]
        population: Option<PathBuf>,
        /// GeoJSON outlines keyed by `properties.region`.
        #[arg(long)]
        boundaries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one API request against a snapshot and print the body.
    Query {
        #[arg(long)]
        snapshot: PathBuf,
        /// Server config supplying scaling and cluster defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
        #[arg(value_enum)]
        endpoint: QueryEndpoint,
        /// Request parameters as key=value.
        params: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryEndpoint {
    Meta,
    Regions,
    Frame,
    Series,
    Pick,
    Threshold,
}

impl From<QueryEndpoint> for Endpoint {
    fn from(e: QueryEndpoint) -> Self {
        match e {
            QueryEndpoint::Meta => Endpoint::Meta,
            QueryEndpoint::Regions => Endpoint::Regions,
            QueryEndpoint::Frame => Endpoint::Frame,
            QueryEndpoint::Series => Endpoint::Series,
            QueryEndpoint::Pick => Endpoint::Pick,
            QueryEndpoint::Threshold => Endpoint::Threshold,
        }
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn ingest(paths: IngestPaths, out: PathBuf) -> ExitCode {
    if paths.series().next().is_none() {
        return fail(1, "no time-series file given (use --confirmed, --deaths, --recovered or --vaccinations)");
    }
    let (dataset, report) = match ingest_files(&paths) {
        Ok(r) => r,
        Err(e) => return fail(1, e),
    };
    if let Err(e) = snapshot::write_dir(&out, &dataset, &report) {
        return fail(1, e);
    }
    let mut stdout = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let _ = writeln!(stdout, "{text}");
    ExitCode::SUCCESS
}

fn load_config(path: Option<&PathBuf>) -> Result<ServerConfig, geocircle_server::ConfigError> {
    let mut config = match path {
        Some(p) => ServerConfig::load(p)?,
        None => ServerConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok());
    Ok(config)
}

fn serve(config: Option<PathBuf>) -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let config = match load_config(config.as_ref()) {
        Ok(c) => c,
        Err(e) => return fail(1, e),
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(1, e),
    };
    let result = runtime.block_on(geocircle_server::serve(config, |addr| {
        eprintln!("listening on http://{addr}");
    }));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn query(snapshot_dir: PathBuf, config: Option<PathBuf>, format: OutputFormat, endpoint: QueryEndpoint, params: Vec<String>) -> ExitCode {
    let defaults = match config {
        Some(path) => match load_config(Some(&path)).and_then(|c| c.validate().map(|()| c)) {
            Ok(c) => c.api_defaults(),
            Err(e) => return fail(1, e),
        },
        None => ApiDefaults::default(),
    };
    let params = match api::parse_kv_args(&params) {
        Ok(p) => p,
        Err(e) => return fail(2, e.message),
    };
    let engine = match Engine::load_dir(&snapshot_dir) {
        Ok(e) => e,
        Err(e) => return fail(1, e),
    };
    let format = match format {
        OutputFormat::Json => Format::Json,
        OutputFormat::Csv => Format::Csv,
    };
    match api::handle(&engine, &defaults, endpoint.into(), &params, format) {
        Ok(body) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(&body).and_then(|()| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(2, e.message),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Ingest {
            confirmed,
            deaths,
            recovered,
            vaccinations,
            population,
            boundaries,
            out,
        } => ingest(
            IngestPaths {
                confirmed,
                deaths,
                recovered,
                vaccinations,
                population,
                boundaries,
            },
            out,
        ),
        Command::Serve { config } => serve(config),
        Command::Query {
            snapshot,
            config,
            format,
            endpoint,
            params,
        } => query(snapshot, config, format, endpoint, params),
    }
}
