//! Answer normalization, accuracy, ROUGE-L, McNemar's test and the paired
//! bootstrap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, domain};

/// Replacement passes before normalization gives up looking for a fixed point.
const MAX_PASSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("LengthMismatchError: {0} vs {1} items")]
    LengthMismatch(usize, usize),
    #[error("EmptySequenceError")]
    EmptySequence,
    #[error("{0}")]
    Invalid(String),
    #[error("synonym table line {line}: {reason}")]
    SynonymFile { line: usize, reason: String },
}

/// Lowercase, drop ASCII punctuation, collapse whitespace.
fn clean(text: &str) -> Vec<String> {
    let kept: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    kept.split_whitespace().map(str::to_string).collect()
}

/// Surface phrase -> canonical phrase, both stored normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    entries: BTreeMap<Vec<String>, Vec<String>>,
    longest: usize,
}

impl SynonymTable {
    pub fn new() -> Self {
        SynonymTable::default()
    }

    /// Rejects entries that would make a canonical phrase rewrite itself.
    pub fn insert(&mut self, surface: &str, canonical: &str) -> Result<(), MetricError> {
        let s = clean(surface);
        let c = clean(canonical);
        if s.is_empty() || c.is_empty() {
            return Err(MetricError::Invalid("synonym phrases must be nonempty".into()));
        }
        if s != c {
            if let Some(existing) = self.entries.get(&c) {
                if *existing != c {
                    return Err(MetricError::Invalid(format!(
                        "canonical `{}` is itself mapped to `{}`",
                        c.join(" "),
                        existing.join(" ")
                    )));
                }
            }
            if self.entries.values().any(|v| *v == s) {
                return Err(MetricError::Invalid(format!("`{}` is already a canonical phrase", s.join(" "))));
            }
        }
        self.longest = self.longest.max(s.len());
        self.entries.insert(s, c);
        Ok(())
    }

    /// Parses `surface<TAB>canonical` lines. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, MetricError> {
        let mut table = SynonymTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (s, c) = line.split_once('\t').ok_or_else(|| MetricError::SynonymFile {
                line: i + 1,
                reason: "expected `surface<TAB>canonical`".into(),
            })?;
            table.insert(s, c).map_err(|e| MetricError::SynonymFile {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One left-to-right pass of longest-match replacement.
    fn rewrite(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            for len in (1..=self.longest.min(tokens.len() - i)).rev() {
                if let Some(c) = self.entries.get(&tokens[i..i + len]) {
                    out.extend(c.iter().cloned());
                    i += len;
                    continue 'outer;
                }
            }
            out.push(tokens[i].clone());
            i += 1;
        }
        out
    }
}

pub fn normalize_answer(text: &str, synonyms: &SynonymTable) -> String {
    let mut tokens = clean(text);
    if !synonyms.is_empty() {
        for _ in 0..MAX_PASSES {
            let next = synonyms.rewrite(&tokens);
            if next == tokens {
                break;
            }
            tokens = next;
        }
    }
    tokens.join(" ")
}

pub fn accuracy(predictions: &[String], references: &[String], synonyms: &SynonymTable) -> Result<f64, MetricError> {
    if predictions.len() != references.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), references.len()));
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| normalize_answer(p, synonyms) == normalize_answer(r, synonyms))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Result<RougeL, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let l = lcs_len(candidate, reference) as f64;
    let precision = l / candidate.len() as f64;
    let recall = l / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RougeL { precision, recall, f1 })
}

/// ROUGE-L F1 over whitespace tokens of the normalized texts.
pub fn rouge_l_text(candidate: &str, reference: &str, synonyms: &SynonymTable) -> Result<RougeL, MetricError> {
    let c = normalize_answer(candidate, synonyms);
    let r = normalize_answer(reference, synonyms);
    let ct: Vec<&str> = c.split_whitespace().collect();
    let rt: Vec<&str> = r.split_whitespace().collect();
    rouge_l(&ct, &rt)
}

/// Continuity-corrected McNemar statistic on the discordant counts.
pub fn mcnemar(b: u64, c: u64) -> f64 {
    if b + c == 0 {
        return 0.0;
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    diff.max(0.0).powi(2) / (b + c) as f64
}

/// One-sided paired bootstrap: the fraction of resamples where
/// `mean(a) - mean(b) <= 0`. Resample `r` draws from its own stream.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::Invalid("paired bootstrap needs at least 2 cases".into()));
    }
    if n_resamples < 100 {
        return Err(MetricError::Invalid(format!("n_resamples must be >= 100, got {n_resamples}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let not_better = (0..n_resamples)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = rng::stream(seed, domain::BOOTSTRAP, r as u64);
            let total: f64 = (0..n).map(|_| diffs[rng.gen_range(0..n)]).sum();
            total / n as f64 <= 0.0
        })
        .count();
    Ok(not_better as f64 / n_resamples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_cases: usize,
    pub accuracy: f64,
    pub rouge_l_f1: f64,
    pub mean_f_logic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcnemar_stat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_p: Option<f64>,
}
