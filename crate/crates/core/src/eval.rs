//! Greedy-rollout evaluation of a policy against gold traces, with optional
//! significance tests against a baseline policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dapo::{answer_matches, TrainError};
use crate::metrics::{mcnemar, paired_bootstrap, rouge_l_text, EvalReport, SynonymTable};
use crate::model::{sample_rollouts, RolloutContext, TinyPolicy};
use crate::synth::{SyntheticCase, SyntheticWorld};
use crate::verifier::logic_loss;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub answer: String,
    pub correct: bool,
    pub rouge_l_f1: f64,
    pub f_logic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub use_vision: bool,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { use_vision: true, seed: 0 }
    }
}

fn check_shapes(policy: &TinyPolicy, world: &SyntheticWorld) -> Result<(), TrainError> {
    let c = policy.config;
    let mut problems = Vec::new();
    if c.vocab != world.vocab.len() {
        problems.push(format!("vocabulary {} vs dataset {}", c.vocab, world.vocab.len()));
    }
    if c.d_v != world.d_v() {
        problems.push(format!("d_v {} vs dataset {}", c.d_v, world.d_v()));
    }
    if c.classes != world.n_classes() {
        problems.push(format!("classes {} vs dataset {}", c.classes, world.n_classes()));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(TrainError::Config(format!(
            "checkpoint does not fit the dataset: {}",
            problems.join(", ")
        )))
    }
}

/// One greedy rollout per case.
pub fn evaluate_cases(
    policy: &TinyPolicy,
    world: &SyntheticWorld,
    cases: &[SyntheticCase],
    synonyms: &SynonymTable,
    options: EvalOptions,
) -> Result<Vec<CaseResult>, TrainError> {
    check_shapes(policy, world)?;
    let ctx = RolloutContext::for_world(world)?;
    cases
        .par_iter()
        .map(|case| {
            let input = if options.use_vision {
                case.input.clone()
            } else {
                case.input.without_vision()
            };
            let rollout = sample_rollouts(policy, &input, &case.case_id, &ctx, 1, options.seed, 0.0)?.remove(0);
            let trace = rollout.trace;
            let truth = &world.diagnoses[case.label];
            let rouge = rouge_l_text(&trace.render_body(), &case.gold_trace.render_body(), synonyms)
                .map(|r| r.f1)
                .unwrap_or(0.0);
            Ok(CaseResult {
                case_id: case.case_id.clone(),
                correct: answer_matches(&trace.final_answer, truth, synonyms),
                f_logic: 1.0 - logic_loss(&trace)?,
                answer: trace.final_answer,
                rouge_l_f1: rouge,
            })
        })
        .collect()
}

pub fn summarize(results: &[CaseResult]) -> EvalReport {
    let n = results.len().max(1) as f64;
    EvalReport {
        n_cases: results.len(),
        accuracy: results.iter().filter(|r| r.correct).count() as f64 / n,
        rouge_l_f1: results.iter().map(|r| r.rouge_l_f1).sum::<f64>() / n,
        mean_f_logic: results.iter().map(|r| r.f_logic).sum::<f64>() / n,
        mcnemar_stat: None,
        bootstrap_p: None,
    }
}

/// Adds McNemar on correctness and a paired bootstrap on ROUGE-L, with the
/// primary system as A.
pub fn compare(primary: &[CaseResult], baseline: &[CaseResult], seed: u64) -> Result<EvalReport, TrainError> {
    let mut report = summarize(primary);
    let b = primary.iter().zip(baseline).filter(|(p, q)| p.correct && !q.correct).count() as u64;
    let c = primary.iter().zip(baseline).filter(|(p, q)| !p.correct && q.correct).count() as u64;
    report.mcnemar_stat = Some(mcnemar(b, c));
    let a: Vec<f64> = primary.iter().map(|r| r.rouge_l_f1).collect();
    let z: Vec<f64> = baseline.iter().map(|r| r.rouge_l_f1).collect();
    report.bootstrap_p = Some(
        paired_bootstrap(&a, &z, BOOTSTRAP_RESAMPLES, seed).map_err(|e| TrainError::Config(e.to_string()))?,
    );
    Ok(report)
}
