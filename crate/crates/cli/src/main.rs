use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vaps_pipeline::{collect_reports, discover, render_report, run_stage, PipelineError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "vaps", version, about = "Consultation-value-aware personalized search pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and manifests.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted consultation patterns.
    Datagen(Common),
    /// Validate raw items/events and write the canonical corpus.
    Ingest(Common),
    /// Build the inverted index over item text.
    Index(Common),
    /// Link consultations to later related actions.
    Link(Common),
    /// Score every (search, consultation) pair.
    Assess(Common),
    /// Train the ranking model.
    Train(Common),
    /// Evaluate the model or a baseline.
    Eval(Common),
    /// Collate metrics.json files into one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// `label=path/to/metrics.json`; default: every `<out>/*/reports/metrics.json`.
        runs: Vec<String>,
        /// Row other rows are compared against.
        #[arg(long, default_value = "vaps")]
        reference: String,
    },
}

fn config(c: &Common) -> Result<RunConfig, PipelineError> {
    let mut set = c.set.clone();
    if let Some(seed) = c.seed {
        set.push(format!("seed={seed}"));
    }
    RunConfig::load(c.config.as_deref(), &set)
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    let (stage, common) = match &cli.command {
        Command::Datagen(c) => (Stage::Datagen, c),
        Command::Ingest(c) => (Stage::Ingest, c),
        Command::Index(c) => (Stage::Index, c),
        Command::Link(c) => (Stage::Link, c),
        Command::Assess(c) => (Stage::Assess, c),
        Command::Train(c) => (Stage::Train, c),
        Command::Eval(c) => (Stage::Eval, c),
        Command::Report {
            common,
            runs,
            reference,
        } => {
            config(common)?;
            let sources = if runs.is_empty() {
                discover(&common.out)
            } else {
                runs.iter()
                    .map(|r| match r.split_once('=') {
                        Some((l, p)) => Ok((l.to_string(), PathBuf::from(p))),
                        None => Err(PipelineError::Config(vec![format!("run `{r}` is not label=path")])),
                    })
                    .collect::<Result<_, _>>()?
            };
            if sources.is_empty() {
                return Err(PipelineError::Missing {
                    path: common.out.join("<run>/reports/metrics.json"),
                    stage: "eval",
                });
            }
            let table = render_report(&collect_reports(&sources)?, reference);
            let path = common.out.join("report.txt");
            std::fs::create_dir_all(&common.out).map_err(|e| PipelineError::Io(e.to_string()))?;
            std::fs::write(&path, &table).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
            return Ok(table);
        }
    };
    let cfg = config(common)?;
    let out = run_stage(stage, &cfg, &common.out)?;
    Ok(format!("{stage}: {} ({:.2}s)", out.summary.trim_end(), out.manifest.elapsed_secs))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
