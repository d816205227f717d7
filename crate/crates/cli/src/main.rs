//! `ecoforge`: validate, compile and simulate conceptual ecology models,
//! look up species traits, and run the HTTP service.
//!
//! Exit codes: 0 success, 1 usage, 2 validation failure, 3 runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use ecoforge_core::canonical::to_canonical_string;
use ecoforge_core::compiler::{compile_for_engine, compile_model, emit_netlogo, CompileError};
use ecoforge_core::engine::{run, SimConfig};
use ecoforge_core::model::{parse_document, parse_model, validate_model, ConceptualModel, ValidationIssue};
use ecoforge_core::ontology::{map_interaction, Sign};
use ecoforge_core::traits::{backend_from_env, backend_from_spec, derive_for_taxon, TraitBackend};
use ecoforge_service::error::{codes, ApiError};
use ecoforge_service::{port_from_env, router, ServiceConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ecoforge", version, about = "Conceptual ecology models: validate, compile, simulate")]
struct Cli {
    /// Diagnostics on stderr as single-line JSON; payloads as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Trait backend, `fixtures:<dir>` or `live:<base-url>`; overrides ECOFORGE_TRAIT_BACKEND.
    #[arg(long, global = true, value_name = "SPEC")]
    backend: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model and print its findings.
    Validate { model: PathBuf },
    /// Compile a model to NetLogo source or the engine program.
    Compile {
        model: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in engine and write the time series as CSV.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        months: u64,
        #[arg(long)]
        seed: u64,
        /// CSV output file; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        grid_width: Option<u32>,
        #[arg(long)]
        grid_height: Option<u32>,
        #[arg(long)]
        snapshot_every: Option<u64>,
    },
    /// Search taxa by scientific or common name.
    Lookup { name: String },
    /// Derive the thirteen biotic parameters for a taxon id.
    Derive { taxon: String },
    /// Map an interaction name to a relationship kind.
    MapInteraction {
        name: String,
        /// Required for `affects`-style aliases; `+` or `-`.
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        /// Defaults to ECOFORGE_PORT, then 8080.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Netlogo,
    Engine,
}

/// A failure with its exit code.
struct Failure {
    exit: u8,
    error: Box<ApiError>,
}

impl Failure {
    fn validation(error: impl Into<ApiError>) -> Self {
        Failure {
            exit: 2,
            error: Box::new(error.into()),
        }
    }

    fn runtime(error: impl Into<ApiError>) -> Self {
        Failure {
            exit: 3,
            error: Box::new(error.into()),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::runtime(ApiError::new(500, "IO", format!("{}: {e}", path.display())))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json {
                let mut line = json!({"level": "error", "code": f.error.code, "message": f.error.message});
                if let Some(subject) = f.error.subject {
                    line["subject"] = json!(subject);
                }
                eprintln!("{line}");
            } else {
                eprintln!("error: {}", f.error.message);
            }
            ExitCode::from(f.exit)
        }
    }
}

fn dispatch(cli: Cli) -> Outcome {
    let json = cli.json;
    let backend = || -> Result<Arc<dyn TraitBackend>, Failure> {
        match &cli.backend {
            Some(spec) => backend_from_spec(spec),
            None => backend_from_env(),
        }
        .map_err(Failure::runtime)
    };
    match &cli.command {
        Cmd::Validate { model } => validate(model, json),
        Cmd::Compile { model, target, output } => compile(model, *target, output.as_deref()),
        Cmd::Simulate {
            model,
            months,
            seed,
            csv,
            grid_width,
            grid_height,
            snapshot_every,
        } => {
            let defaults = SimConfig::default();
            let cfg = SimConfig {
                seed: *seed,
                max_ticks: *months,
                grid_width: grid_width.unwrap_or(defaults.grid_width),
                grid_height: grid_height.unwrap_or(defaults.grid_height),
                snapshot_every: snapshot_every.unwrap_or(defaults.snapshot_every),
            };
            simulate(model, &cfg, csv.as_deref())
        }
        Cmd::Lookup { name } => {
            let matches = backend()?.search_taxa(name).map_err(Failure::runtime)?;
            if json {
                print_json(&matches);
            } else {
                for m in &matches {
                    println!("{}\t{}\t{}", m.taxon_id, m.canonical_name, m.common_names.join(", "));
                }
            }
            Ok(())
        }
        Cmd::Derive { taxon } => {
            let (properties, report) = derive_for_taxon(backend()?.as_ref(), taxon).map_err(Failure::runtime)?;
            if json {
                print_json(&json!({"taxon_id": report.taxon_id, "properties": properties, "report": report}));
            } else {
                for e in &report.entries {
                    println!("{:<24} {:>14} {:?}", e.parameter, ecoforge_core::canonical::format_number(e.value), e.method);
                }
            }
            Ok(())
        }
        Cmd::MapInteraction { name, sign } => {
            let sign = sign
                .as_deref()
                .map(str::parse::<Sign>)
                .transpose()
                .map_err(|m| Failure::validation(ApiError::new(400, codes::MISSING_SIGN, m)))?;
            let mapping = map_interaction(name, sign).map_err(Failure::validation)?;
            print_json(&mapping);
            Ok(())
        }
        Cmd::Serve { port, host } => serve(*port, host, backend()?),
    }
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) {
    let text = to_canonical_string(value).expect("payloads serialize");
    println!("{}", text.trim_end());
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::io(path, e))
}

fn write_out(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::io(Path::new("<stdout>"), e)),
    }
}

fn load(path: &Path) -> Result<ConceptualModel, Failure> {
    parse_model(&read(path)?).map_err(Failure::validation)
}

fn issue_line(severity: &str, i: &ValidationIssue) -> String {
    match &i.field {
        Some(f) => format!("{severity} {} {}.{f}: {}", i.code, i.subject, i.message),
        None => format!("{severity} {} {}: {}", i.code, i.subject, i.message),
    }
}

fn validate(path: &Path, json: bool) -> Outcome {
    // lenient parse so dangling endpoints are reported as findings
    let model = parse_document(&read(path)?).map_err(Failure::validation)?;
    let report = validate_model(&model);
    if json {
        print_json(&report);
    } else {
        for i in &report.errors {
            println!("{}", issue_line("error", i));
        }
        for i in &report.warnings {
            println!("{}", issue_line("warning", i));
        }
        if report.errors.is_empty() {
            println!("ok: {} components, {} relationships", model.components.len(), model.relationships.len());
        }
    }
    if report.errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::validation(ApiError::invalid(report)))
    }
}

fn compile_failure(e: CompileError) -> Failure {
    match e {
        CompileError::Invalid(_) => Failure::validation(e),
        _ => Failure::runtime(e),
    }
}

fn compile(path: &Path, target: Target, output: Option<&Path>) -> Outcome {
    let prog = compile_model(&load(path)?).map_err(compile_failure)?;
    let text = match target {
        Target::Netlogo => emit_netlogo(&prog),
        Target::Engine => to_canonical_string(&compile_for_engine(&prog)).expect("programs serialize"),
    };
    write_out(output, &text)
}

fn simulate(path: &Path, cfg: &SimConfig, csv: Option<&Path>) -> Outcome {
    let prog = compile_for_engine(&compile_model(&load(path)?).map_err(compile_failure)?);
    let series = run(&prog, cfg).map_err(|e| match e {
        ecoforge_core::engine::EngineError::InvalidConfig(_) => Failure {
            exit: 1,
            error: Box::new(e.into()),
        },
        _ => Failure::runtime(e),
    })?;
    write_out(csv, &series.to_csv())
}

fn serve(port: Option<u16>, host: &str, backend: Arc<dyn TraitBackend>) -> Outcome {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let port = match port {
        Some(p) => p,
        None => port_from_env().map_err(|m| Failure {
            exit: 1,
            error: Box::new(ApiError::bad_request(m)),
        })?,
    };
    let mut cfg = ServiceConfig::from_env().map_err(Failure::runtime)?;
    cfg.backend = backend;
    let app = router(cfg).map_err(Failure::runtime)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(Path::new("<runtime>"), e))?;
    runtime.block_on(async {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::io(Path::new(&addr), e))?;
        ecoforge_service::serve(listener, app)
            .await
            .map_err(|e| Failure::io(Path::new(&addr), e))
    })
}
