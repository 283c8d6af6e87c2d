use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use ltrk::dapo::{self, TrainError};
use ltrk::eval::{self, EvalOptions};
use ltrk::logic::{build_tree, parse_proposition, parse_rollouts, LogicError, Proposition, ReasoningTrace};
use ltrk::metrics::SynonymTable;
use ltrk::model::TinyPolicy;
use ltrk::numerics::{Checkpoint, NumericError};
use ltrk::synth::{generate_dataset, generate_world, SyntheticCase, SyntheticWorld};
use ltrk::verifier::{loss_from_scores, score_trace};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::Format;

pub const WORLD_FILE: &str = "world.json";
pub const CASES_FILE: &str = "cases.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.ltrk";
pub const REPORT_FILE: &str = "report.jsonl";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, or input text. Exit 2.
    Usage(String),
    /// Exit 3.
    Io(String),
    /// Training diverged. Exit 4.
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            _ if e.is_numeric() => CliError::Numeric(e.to_string()),
            TrainError::Numeric(NumericError::Io(m)) => CliError::Io(m.clone()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LogicError> for CliError {
    fn from(e: LogicError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

fn emit(line: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn load_world(dir: &Path) -> Result<SyntheticWorld, CliError> {
    let path = dir.join(WORLD_FILE);
    let text = read_text(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_cases(dir: &Path) -> Result<Vec<SyntheticCase>, CliError> {
    let path = dir.join(CASES_FILE);
    let text = read_text(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Usage(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn load_synonyms(path: Option<&Path>) -> Result<SynonymTable, CliError> {
    match path {
        None => Ok(SynonymTable::new()),
        Some(p) => SynonymTable::parse(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

fn load_checkpoint(path: &Path) -> Result<(TinyPolicy, u32), CliError> {
    let map = |e: NumericError| match e {
        NumericError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    };
    let ck = Checkpoint::load(path).map_err(map)?;
    TinyPolicy::from_checkpoint(&ck).map_err(map)
}

fn world_for(cfg: &RunConfig) -> Result<SyntheticWorld, CliError> {
    match &cfg.dataset {
        Some(dir) => load_world(dir),
        None => generate_world(cfg.world).map_err(|e| CliError::Usage(e.to_string())),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let world = generate_world(cfg.world).map_err(|e| CliError::Usage(e.to_string()))?;
    let cases = generate_dataset(&world, cfg.world.seed, cfg.cases);
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join(WORLD_FILE), (to_json(&world) + "\n").as_bytes())?;
    let lines: String = cases.iter().map(|c| to_json(c) + "\n").collect();
    write_file(&cfg.out.join(CASES_FILE), lines.as_bytes())?;
    eprintln!(
        "wrote {} cases over {} diagnoses to {}",
        cases.len(),
        world.n_classes(),
        cfg.out.display()
    );
    emit(&to_json(&json!({ "cases": cases.len(), "out": cfg.out })))
}

#[derive(Serialize)]
struct RunHeader<'a> {
    config: &'a RunConfig,
    start_epoch: u32,
    resume: Option<&'a Path>,
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    cfg.train.validate()?;
    let world = world_for(cfg)?;
    let (mut policy, start) = match resume {
        Some(path) => load_checkpoint(path)?,
        None => (dapo::initial_policy(&cfg.train, &world)?, 0),
    };
    create_dir(&cfg.out)?;
    let header = RunHeader {
        config: cfg,
        start_epoch: start,
        resume,
    };
    write_file(
        &cfg.out.join(RUN_CONFIG_FILE),
        (serde_json::to_string_pretty(&header).expect("header serializes") + "\n").as_bytes(),
    )?;

    let report = dapo::train(&cfg.train, &world, &mut policy, start, |r| {
        eprintln!(
            "epoch {:>4}  reward {:.4}  acc {:.3}  f_logic {:.3}  L_total {:.4}",
            r.epoch, r.mean_reward, r.accuracy, r.mean_f_logic, r.l_total
        );
    })?;
    let done = start + cfg.train.epochs;
    let ck_path = cfg.out.join(CHECKPOINT_FILE);
    policy.to_checkpoint(done).save(&ck_path).map_err(|e| io_err(&ck_path, e))?;
    write_file(&cfg.out.join(REPORT_FILE), report.to_jsonl().as_bytes())?;
    match report.epochs.last() {
        Some(last) => emit(&to_json(last)),
        None => emit(&to_json(&json!({ "epoch": done }))),
    }
}

pub fn eval(cfg: &RunConfig, checkpoint: &Path, baseline: Option<&Path>) -> Result<(), CliError> {
    let dir = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| CliError::Usage("eval needs --dataset".into()))?;
    let world = load_world(dir)?;
    let cases = load_cases(dir)?;
    let synonyms = load_synonyms(cfg.synonyms.as_deref())?;
    let options = EvalOptions {
        use_vision: cfg.train.use_vision,
        seed: cfg.train.seed,
    };
    let (policy, _) = load_checkpoint(checkpoint)?;
    let primary = eval::evaluate_cases(&policy, &world, &cases, &synonyms, options)?;
    let report = match baseline {
        None => eval::summarize(&primary),
        Some(path) => {
            let (base, _) = load_checkpoint(path)?;
            let other = eval::evaluate_cases(&base, &world, &cases, &synonyms, options)?;
            eval::compare(&primary, &other, cfg.train.seed)?
        }
    };
    eprintln!(
        "{} cases: accuracy {:.3}, ROUGE-L {:.3}, f_logic {:.3}",
        report.n_cases, report.accuracy, report.rouge_l_f1, report.mean_f_logic
    );
    emit(&to_json(&report))
}

fn read_traces(path: &Path) -> Result<Vec<ReasoningTrace>, CliError> {
    let text = read_text(path)?;
    parse_rollouts(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn verify(file: &Path) -> Result<(), CliError> {
    for trace in read_traces(file)? {
        let scores = score_trace(&trace).map_err(|e| CliError::Usage(e.to_string()))?;
        let steps: Vec<_> = trace
            .triads
            .iter()
            .zip(&scores)
            .map(|(t, s)| json!({ "step": t.step_index, "score": s.value, "rule": s.rule_fired }))
            .collect();
        emit(&to_json(&json!({
            "case_id": trace.case_id,
            "steps": steps,
            "logic_loss": loss_from_scores(&scores),
        })))?;
    }
    Ok(())
}

/// Premises not concluded by an earlier step of the trace.
fn implied_facts(trace: &ReasoningTrace) -> Vec<Proposition> {
    let mut concluded = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut facts = Vec::new();
    for t in &trace.triads {
        for p in [&t.major, &t.minor] {
            if !concluded.contains(p) && seen.insert(p.clone()) {
                facts.push(p.clone());
            }
        }
        concluded.insert(t.conclusion.clone());
    }
    facts
}

fn read_facts(path: &Path) -> Result<Vec<Proposition>, CliError> {
    let text = read_text(path)?;
    let mut facts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = parse_proposition(line)
            .map_err(|e| CliError::Usage(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        facts.push(p);
    }
    Ok(facts)
}

pub fn render(
    file: &Path,
    format: Format,
    facts: Option<&Path>,
    dataset: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let fixed = match (facts, dataset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --facts or --dataset, not both".into())),
        (Some(path), None) => Some(read_facts(path)?),
        (None, Some(dir)) => Some(load_world(dir)?.rollout_facts()),
        (None, None) => None,
    };
    let mut text = String::new();
    for trace in read_traces(file)? {
        let facts = fixed.clone().unwrap_or_else(|| implied_facts(&trace));
        let mut tree = build_tree(&trace, &facts)?;
        tree.annotate(&score_trace(&trace).map_err(|e| CliError::Usage(e.to_string()))?);
        match format {
            Format::Dot => text.push_str(&tree.to_dot()),
            Format::Json => {
                text.push_str(&to_json(&tree));
                text.push('\n');
            }
        }
    }
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}
