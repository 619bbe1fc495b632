use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use zfdt::bounds::BoundsConfig;
use zfdt::dataset::DatasetKind;
use zfdt::engine::{self, Clients, Config, EngineError, EngineState, Overrides, QueryResponse};
use zfdt::service::{self, AppState};

#[derive(Parser, Debug)]
#[command(name = "zfdt", version, about = "Graph-based retrieval and evaluation for formula-recommendation corpora")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    chunk_size: Option<usize>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    /// Leiden resolution.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Base URL of the remote generation and embedding service.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Environment variable holding the remote api key.
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    /// Force the deterministic in-process clients.
    #[arg(long, global = true)]
    stub: bool,
    /// Print the stage trace after the answer.
    #[arg(long, global = true)]
    trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a workspace from a JSONL corpus.
    Build {
        corpus: PathBuf,
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
    },
    /// Answer one symptom description.
    Query {
        symptoms: String,
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
        /// Print the response as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP query API.
    Serve {
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Score generated outputs against references.
    Eval {
        outputs: PathBuf,
        refs: PathBuf,
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
        /// Directory for report.json and report.tsv.
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Export an SFT or DPO dataset.
    Dataset {
        kind: DatasetKind,
        out: PathBuf,
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Check one theoretical bound on its toy instance.
    Bounds {
        proposition: u8,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// DPO objective without β on the dispreferred log-ratio.
        #[arg(long)]
        asymmetric_eq2: bool,
        /// Print the reports as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(g: &GlobalArgs) -> Result<Config, EngineError> {
    let mut cfg = Config::load(g.config.as_deref())?;
    cfg.apply(&Overrides {
        chunk_size: g.chunk_size,
        top_k: g.top_k,
        beam_width: g.beam_width,
        resolution: g.resolution,
        seed: g.seed,
        endpoint: g.endpoint.clone(),
        api_key_env: g.api_key_env.clone(),
        stub: g.stub,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn load_state(workspace: &Path) -> Result<EngineState, EngineError> {
    EngineState::load(workspace)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable output"));
}

fn run(cli: Cli) -> Result<ExitCode, EngineError> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Build { corpus, workspace } => {
            let clients = Clients::from_config(&cfg)?;
            let out = engine::cmd_build(&corpus, &workspace, &cfg, &clients)?;
            if out.rebuilt {
                println!("built {} ({} artifacts)", workspace.display(), out.manifest.artifacts.len());
            } else {
                println!("{} is up to date", workspace.display());
            }
        }
        Command::Query { symptoms, workspace, json } => {
            let state = load_state(&workspace)?;
            let clients = Clients::from_config(&cfg)?;
            let out = engine::cmd_query(&state, &clients, &symptoms, &cfg)?;
            if json {
                print_json(&QueryResponse::from(&out));
            } else {
                println!("{}", out.answer);
                if cli.global.trace {
                    println!();
                    print_json(&out.trace);
                }
            }
        }
        Command::Serve { workspace, bind } => {
            let state = load_state(&workspace)?;
            let clients = Clients::from_config(&cfg)?;
            let app = AppState { engine: Arc::new(state), clients: Arc::new(clients), config: Arc::new(cfg) };
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| EngineError::Io { path: PathBuf::from(&bind), message: e.to_string() })?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .map_err(|e| EngineError::Io { path: PathBuf::from(&bind), message: e.to_string() })?;
                tracing::info!(addr = %bind, "serving");
                service::serve(app, listener)
                    .await
                    .map_err(|e| EngineError::Io { path: PathBuf::from(&bind), message: e.to_string() })
            })?;
        }
        Command::Eval { outputs, refs, workspace, out } => {
            let state = load_state(&workspace)?;
            let clients = Clients::from_config(&cfg)?;
            let res = engine::cmd_eval(&state, &clients, &cfg, &outputs, &refs, &out)?;
            print!("{}", res.report.to_tsv());
        }
        Command::Dataset { kind, out, workspace, limit } => {
            let state = load_state(&workspace)?;
            let clients = Clients::from_config(&cfg)?;
            let recs = engine::cmd_dataset(&state, &clients, &cfg, kind, &out, limit)?;
            println!("wrote {} records to {}", recs.len(), out.display());
        }
        Command::Bounds { proposition, beta, gamma, learning_rate, steps, asymmetric_eq2, json } => {
            let mut b: BoundsConfig = cfg.bounds.clone();
            if let Some(v) = beta {
                b.beta = v;
            }
            if let Some(v) = gamma {
                b.gamma_threshold = v;
            }
            if let Some(v) = learning_rate {
                b.learning_rate = v;
            }
            if let Some(v) = steps {
                b.steps = v;
            }
            b.asymmetric_eq2 |= asymmetric_eq2;
            let reports = engine::cmd_bounds(proposition, &b, steps.is_some())?;
            if json {
                print_json(&reports);
            } else {
                print!("{}", engine::render_bound_table(&reports));
            }
            if !reports.iter().all(|r| r.satisfied) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
