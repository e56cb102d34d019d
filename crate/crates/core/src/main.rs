use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icu_agents::evaluation::ReportFormat;
use icu_agents::experiment::{cmd_compare, cmd_run, cmd_score, cmd_synth, Backend, CliError, ExperimentConfig};
use icu_agents::ingestion::SchemaConfig;
use icu_agents::orchestrator::GraphLabel;
use icu_agents::prediction::{Scoring, DEFAULT_THRESHOLD};
use icu_agents::transparency::Rubric;

#[derive(Parser)]
#[command(name = "icu-agents", version, about = "Multi-agent ICU outcome prediction experiments")]
struct Cli {
    /// Log filter, e.g. "info" or "icu_agents=debug". RUST_LOG also works.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort in the source CSV layout.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 170)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        expired_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        /// JSON schema mapping; defaults to the standard column names.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Run a pipeline over a sampled cohort, once per seed.
    Run(RunArgs),
    /// Compare persisted MAS and SAS runs.
    Compare {
        #[arg(long)]
        mas: PathBuf,
        #[arg(long)]
        sas: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Weight of APACHE predicted mortality blended into the agent probability.
        #[arg(long, default_value_t = 0.0)]
        apache_blend: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score transparency of persisted records with a rubric.
    Score {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        rubric: Option<PathBuf>,
        /// mas, sas, or both.
        #[arg(long, default_value = "both")]
        graph: String,
    },
}

/// Flags override values from --config.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    n_expired: Option<usize>,
    #[arg(long)]
    n_survived: Option<usize>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    apache_blend: Option<f64>,
    #[arg(long)]
    rubric: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "mock" => Ok(Backend::Mock),
        "http" => Ok(Backend::Http),
        _ => Err(format!("unknown backend {s:?} (mock or http)")),
    }
}

impl RunArgs {
    fn config(self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set!(
            graph => c.graph,
            runs => c.runs,
            seed => c.seed,
            data_dir => c.data_dir,
            output_dir => c.output_dir,
            n_expired => c.n_expired,
            n_survived => c.n_survived,
            backend => c.provider.backend,
            max_parallel => c.max_parallel,
            token_budget => c.token_budget,
            threshold => c.threshold,
            apache_blend => c.apache_blend,
        );
        if self.model.is_some() {
            c.provider.model_id = self.model;
        }
        if self.rubric.is_some() {
            c.rubric_path = self.rubric;
        }
        Ok(c)
    }
}

fn read_schema(path: Option<&PathBuf>) -> Result<SchemaConfig, CliError> {
    let Some(path) = path else { return Ok(SchemaConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_out(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

async fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { seed, n, expired_fraction, out, schema } => {
            let schema = read_schema(schema.as_ref())?;
            let files = cmd_synth(seed, n, expired_fraction, &out, &schema)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Run(args) => {
            let config = args.config()?;
            for r in cmd_run(&config).await? {
                let summary = match &r.metrics {
                    Some(d) => format!(
                        "accuracy {:.1}%, LOS MAE {:.2}, transparency {:.2}",
                        d.metrics.accuracy_percent, d.metrics.los_mae_days, d.metrics.mean_transparency
                    ),
                    None => "no metrics".into(),
                };
                println!("{} seed {}: {} ok, {} failed; {}", r.dir.display(), r.seed, r.succeeded, r.failed, summary);
            }
        }
        Command::Compare { mas, sas, format, threshold, apache_blend, out } => {
            let report = cmd_compare(&mas, &sas, Scoring { threshold, apache_blend }, format)?;
            write_out(&report, out.as_ref())?;
        }
        Command::Score { runs, rubric, graph } => {
            let rubric = match rubric {
                Some(p) => Rubric::from_path(&p).map_err(|e| CliError::Usage(format!("invalid rubric: {e}")))?,
                None => Rubric::default_rubric(),
            };
            let labels = match graph.to_ascii_lowercase().as_str() {
                "both" => vec![GraphLabel::Mas, GraphLabel::Sas],
                other => vec![GraphLabel::parse(other)],
            };
            let scored = cmd_score(&runs, &labels, &rubric)?;
            println!("{}", serde_json::to_string_pretty(&scored).expect("scores serialize"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(&cli.log));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    match runtime.block_on(dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
