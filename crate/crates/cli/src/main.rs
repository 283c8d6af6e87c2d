mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::CliError;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "ltrk", version, about = "Logic-regularized multimodal reasoning on a synthetic diagnostic world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the pipeline subcommands. Precedence: defaults, then
/// `--config`, then flags, then `--set`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding world.json and cases.jsonl
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lambda_logic: Option<f64>,
    #[arg(long)]
    lambda_align: Option<f64>,
    #[arg(long)]
    w_acc: Option<f64>,
    #[arg(long)]
    w_logic: Option<f64>,
    #[arg(long)]
    w_ground: Option<f64>,
    /// Synonym table, one `surface<TAB>canonical` pair per line
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Zero every slice (vision ablation)
    #[arg(long)]
    no_vision: bool,
    /// Use raw rewards as advantages and keep degenerate groups
    #[arg(long)]
    no_group_normalize: bool,
    /// Any configuration key, as KEY=VALUE
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = commands::read_text(path)?;
            cfg.apply_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        put("seed", self.seed.map(|x| x.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        put("cases", self.cases.map(|x| x.to_string()));
        put("epochs", self.epochs.map(|x| x.to_string()));
        put("rollouts", self.rollouts.map(|x| x.to_string()));
        put("steps", self.steps.map(|x| x.to_string()));
        put("lambda_logic", self.lambda_logic.map(|x| x.to_string()));
        put("lambda_align", self.lambda_align.map(|x| x.to_string()));
        put("w_acc", self.w_acc.map(|x| x.to_string()));
        put("w_logic", self.w_logic.map(|x| x.to_string()));
        put("w_ground", self.w_ground.map(|x| x.to_string()));
        put("synonyms", self.synonyms.as_ref().map(|p| p.display().to_string()));
        if self.no_vision {
            put("use_vision", Some("false".into()));
        }
        if self.no_group_normalize {
            put("group_normalize", Some("false".into()));
        }
        for (k, v) in pairs {
            cfg.set(k, &v).map_err(CliError::Usage)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(CliError::Usage)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world and write world.json plus cases.jsonl
    Synth(Overrides),
    /// Train a policy; writes checkpoint.ltrk, report.jsonl and run_config.json
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Greedy-rollout evaluation on a dataset
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Second checkpoint for McNemar and paired-bootstrap comparison
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Score every triad of a rollout file
    Verify { file: PathBuf },
    /// Build logic trees from a rollout file
    Render {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
        /// Input facts, one proposition per line
        #[arg(long)]
        facts: Option<PathBuf>,
        /// Take input facts from this dataset's world
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Write here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LTRK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("LTRK_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Synth(o) => commands::synth(&o.resolve()?),
        Command::Train { overrides, resume } => commands::train(&overrides.resolve()?, resume.as_deref()),
        Command::Eval {
            overrides,
            checkpoint,
            baseline,
        } => commands::eval(&overrides.resolve()?, &checkpoint, baseline.as_deref()),
        Command::Verify { file } => commands::verify(&file),
        Command::Render {
            file,
            format,
            facts,
            dataset,
            out,
        } => commands::render(&file, format, facts.as_deref(), dataset.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
