//! Synthetic diagnostic world: a hidden rule base from visual and text
//! findings to diagnoses, and cases carrying gold reasoning chains.
//!
//! Each pathway rule is curried, `if v then if t then m_d`, where `v` is a
//! visual finding, `t` a text finding and `m_d` the pattern atom of a
//! diagnosis `d`. Every diagnosis also has `if m_d then d`. A case activates
//! one visual and one text finding and its gold trace is the three-step
//! modus ponens chain down to the label.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Proposition, ReasoningTrace, Triad};
use crate::model::CaseInput;
use crate::rng::{self, domain};

const VISUAL_NAMES: &[&str] = &[
    "nodule", "opacity", "effusion", "calcification", "cavity", "consolidation", "mass", "atelectasis",
];
const TEXT_NAMES: &[&str] = &[
    "cough", "fever", "dyspnea", "hemoptysis", "weight_loss", "chest_pain", "night_sweats", "fatigue",
];
const DIAGNOSIS_NAMES: &[&str] = &[
    "pneumonia", "tuberculosis", "lung_cancer", "pleuritis", "sarcoidosis", "bronchitis", "edema", "embolism",
];
const FILLER: &[&str] = &["patient", "reports", "with", "history", "of", "recent", "and", "notes"];

const RETRY_BUDGET: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("UnsatisfiableWorldError: {0}")]
    Unsatisfiable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    /// Total findings, split into visual and text halves (visual gets the odd one).
    pub n_atoms: usize,
    /// Pathway rules, each a distinct (visual, text) pair.
    pub n_rules: usize,
    pub n_classes: usize,
    pub d_v: usize,
    pub noise_sigma: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            n_atoms: 4,
            n_rules: 4,
            n_classes: 4,
            d_v: 8,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pathway {
    pub visual: usize,
    pub text: usize,
    pub diagnosis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub visual_findings: Vec<String>,
    pub text_findings: Vec<String>,
    pub diagnoses: Vec<String>,
    pub pathways: Vec<Pathway>,
    /// Pathway rules in pathway order, then one `if m_d then d` per diagnosis.
    pub rules: Vec<Proposition>,
    /// One `d_v` prototype per visual finding.
    pub prototypes: Vec<Vec<f64>>,
    pub vocab: Vec<String>,
    /// Token ids spelling each text finding.
    pub finding_tokens: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub case_id: String,
    pub input: CaseInput,
    pub active_findings: Vec<Proposition>,
    pub label: usize,
    pub gold_trace: ReasoningTrace,
}

fn names(pool: &[&str], n: usize, fallback: &str) -> Vec<String> {
    (0..n)
        .map(|i| pool.get(i).map_or_else(|| format!("{fallback}_{i}"), |s| s.to_string()))
        .collect()
}

pub fn pattern_atom(diagnosis: &str) -> String {
    format!("{diagnosis}_pattern")
}

/// True when every finding used by the pathways feeds at least two diagnoses,
/// so no single modality settles the label.
fn needs_both_modalities(pathways: &[Pathway]) -> bool {
    let mut by_visual: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut by_text: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for p in pathways {
        by_visual.entry(p.visual).or_default().insert(p.diagnosis);
        by_text.entry(p.text).or_default().insert(p.diagnosis);
    }
    by_visual.values().chain(by_text.values()).all(|d| d.len() >= 2)
}

pub fn generate_world(config: WorldConfig) -> Result<SyntheticWorld, SynthError> {
    let WorldConfig {
        n_atoms,
        n_rules,
        n_classes: c,
        d_v,
        noise_sigma,
        ..
    } = config;
    if c < 2 {
        return Err(SynthError::Config(format!("need at least 2 diagnoses, got {c}")));
    }
    if n_atoms < c {
        return Err(SynthError::Config(format!("n_atoms {n_atoms} is below the class count {c}")));
    }
    if n_rules < c {
        return Err(SynthError::Config(format!("n_rules {n_rules} is below the class count {c}")));
    }
    if d_v == 0 {
        return Err(SynthError::Config("d_v must be positive".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(SynthError::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let nv = n_atoms.div_ceil(2);
    let nt = n_atoms - nv;
    if n_rules > nv * nt {
        return Err(SynthError::Unsatisfiable(format!(
            "{n_rules} pathways need distinct (visual, text) pairs but only {} exist",
            nv * nt
        )));
    }

    let mut rng = rng::stream(config.seed, domain::WORLD, 0);
    let all_pairs: Vec<(usize, usize)> = (0..nv).flat_map(|v| (0..nt).map(move |t| (v, t))).collect();
    let mut pathways = Vec::new();
    for _ in 0..RETRY_BUDGET {
        let picked: Vec<(usize, usize)> = all_pairs.choose_multiple(&mut rng, n_rules).cloned().collect();
        let mut diagnosis_order: Vec<usize> = (0..c).collect();
        diagnosis_order.shuffle(&mut rng);
        pathways = picked
            .iter()
            .enumerate()
            .map(|(r, &(visual, text))| Pathway {
                visual,
                text,
                diagnosis: diagnosis_order[r % c],
            })
            .collect();
        if needs_both_modalities(&pathways) {
            break;
        }
    }

    let visual_findings = names(VISUAL_NAMES, nv, "visual");
    let text_findings = names(TEXT_NAMES, nt, "text");
    let diagnoses = names(DIAGNOSIS_NAMES, c, "diagnosis");

    let mut rules: Vec<Proposition> = pathways
        .iter()
        .map(|p| {
            Proposition::implies(
                Proposition::atom(&visual_findings[p.visual]),
                Proposition::implies(
                    Proposition::atom(&text_findings[p.text]),
                    Proposition::atom(pattern_atom(&diagnoses[p.diagnosis])),
                ),
            )
        })
        .collect();
    rules.extend(
        diagnoses
            .iter()
            .map(|d| Proposition::implies(Proposition::atom(pattern_atom(d)), Proposition::atom(d))),
    );

    let normal = Normal::new(0.0, 1.0).unwrap();
    let prototypes = (0..nv)
        .map(|_| (0..d_v).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    let mut vocab: Vec<String> = FILLER.iter().map(|s| s.to_string()).collect();
    vocab.extend(visual_findings.iter().cloned());
    vocab.extend(text_findings.iter().cloned());
    vocab.extend(diagnoses.iter().map(|d| pattern_atom(d)));
    vocab.extend(diagnoses.iter().cloned());
    let finding_tokens = text_findings
        .iter()
        .map(|t| (t.clone(), vec![vocab.iter().position(|w| w == t).unwrap()]))
        .collect();

    let world = SyntheticWorld {
        config,
        visual_findings,
        text_findings,
        diagnoses,
        pathways,
        rules,
        prototypes,
        vocab,
        finding_tokens,
    };
    for (i, d) in world.diagnoses.iter().enumerate() {
        if !world.pathways.iter().any(|p| p.diagnosis == i) {
            return Err(SynthError::Unsatisfiable(format!("diagnosis {d} has no pathway")));
        }
    }
    Ok(world)
}

impl SyntheticWorld {
    pub fn n_classes(&self) -> usize {
        self.diagnoses.len()
    }

    pub fn d_v(&self) -> usize {
        self.config.d_v
    }

    pub fn findings(&self) -> impl Iterator<Item = &String> {
        self.visual_findings.iter().chain(&self.text_findings)
    }

    /// What a rollout may start from: every finding atom and every rule.
    pub fn rollout_facts(&self) -> Vec<Proposition> {
        self.findings()
            .map(Proposition::atom)
            .chain(self.rules.iter().cloned())
            .collect()
    }

    pub fn token_id(&self, word: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == word)
    }

    pub fn label_of(&self, name: &str) -> Option<usize> {
        self.diagnoses.iter().position(|d| d == name)
    }

    pub fn gold_trace(&self, case_id: &str, pathway: &Pathway) -> ReasoningTrace {
        let v = Proposition::atom(&self.visual_findings[pathway.visual]);
        let t = Proposition::atom(&self.text_findings[pathway.text]);
        let diagnosis = &self.diagnoses[pathway.diagnosis];
        let m = Proposition::atom(pattern_atom(diagnosis));
        let d = Proposition::atom(diagnosis);
        let t_to_m = Proposition::implies(t.clone(), m.clone());
        let triads = vec![
            Triad::new(Proposition::implies(v.clone(), t_to_m.clone()), v, t_to_m.clone(), 1),
            Triad::new(t_to_m, t, m.clone(), 2),
            Triad::new(Proposition::implies(m.clone(), d.clone()), m, d, 3),
        ];
        ReasoningTrace::new(case_id, triads, diagnosis.clone()).expect("gold trace is well formed")
    }
}

/// Draws one case: a uniform target diagnosis, then a uniform pathway to it.
pub fn generate_case(world: &SyntheticWorld, case_id: &str, rng: &mut ChaCha8Rng) -> SyntheticCase {
    let label = rng.gen_range(0..world.n_classes());
    let routes: Vec<&Pathway> = world.pathways.iter().filter(|p| p.diagnosis == label).collect();
    let pathway = **routes.choose(rng).expect("every diagnosis has a pathway");

    let sigma = world.config.noise_sigma;
    let n_slices = rng.gen_range(1..=3);
    let proto = &world.prototypes[pathway.visual];
    let slices = (0..n_slices)
        .map(|_| {
            proto
                .iter()
                .map(|&x| {
                    if sigma > 0.0 {
                        x + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();

    let text = &world.text_findings[pathway.text];
    let n_filler = rng.gen_range(1..=2);
    let mut tokens: Vec<usize> = (0..n_filler).map(|_| rng.gen_range(0..FILLER.len())).collect();
    tokens.extend(&world.finding_tokens[text]);

    SyntheticCase {
        case_id: case_id.to_string(),
        input: CaseInput { slices, tokens },
        active_findings: vec![
            Proposition::atom(&world.visual_findings[pathway.visual]),
            Proposition::atom(text),
        ],
        label,
        gold_trace: world.gold_trace(case_id, &pathway),
    }
}

/// Case `i` is drawn from its own stream, so the set is independent of thread count.
pub fn generate_cases(world: &SyntheticWorld, seed: u64, stream_domain: u64, n: usize) -> Vec<SyntheticCase> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, stream_domain, i as u64);
            generate_case(world, &format!("case_{i:05}"), &mut rng)
        })
        .collect()
}

pub fn generate_dataset(world: &SyntheticWorld, seed: u64, n: usize) -> Vec<SyntheticCase> {
    generate_cases(world, seed, domain::CASES, n)
}

fn holds(p: &Proposition, known: &HashSet<Proposition>) -> bool {
    match p {
        Proposition::And { left, right } => holds(left, known) && holds(right, known),
        other => known.contains(other),
    }
}

/// Forward chaining to a fixed point from `findings` plus the world's rules;
/// returns the diagnoses reached.
pub fn apply_rules(world: &SyntheticWorld, findings: &[Proposition]) -> BTreeSet<String> {
    let mut known: HashSet<Proposition> = findings.iter().cloned().collect();
    known.extend(world.rules.iter().cloned());
    loop {
        let fresh: Vec<Proposition> = known
            .iter()
            .filter_map(|p| p.as_implication())
            .filter(|(a, c)| holds(a, &known) && !known.contains(*c))
            .map(|(_, c)| c.clone())
            .collect();
        if fresh.is_empty() {
            break;
        }
        known.extend(fresh);
    }
    world
        .diagnoses
        .iter()
        .filter(|d| known.contains(&Proposition::atom(d.as_str())))
        .cloned()
        .collect()
}
