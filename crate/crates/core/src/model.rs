//! The tiny multimodal policy: visual projection, slice-fusion attention,
//! mean-pooled text embedding, a diagnosis head, and a template-constrained
//! reasoning head that samples rollouts triad by triad.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Proposition, ReasoningTrace, Triad};
use crate::numerics::{Checkpoint, Graph, NodeId, NumericError, Tensor};
use crate::rng::{self, domain};
use crate::synth::SyntheticWorld;

pub const NO_ANSWER: &str = "none";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("EmptyFactSetError: rollouts need at least one fact")]
    EmptyFactSet,
    #[error("no candidate triad can be formed from the facts")]
    NoCandidates,
    #[error("atom `{0}` has no token in the vocabulary")]
    UnknownAtom(String),
    #[error("ConfigError: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// A synthetic "image" (rows of `d_v` slice features) and its text tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseInput {
    pub slices: Vec<Vec<f64>>,
    pub tokens: Vec<usize>,
}

impl CaseInput {
    pub fn check(&self, config: &ModelConfig) -> Result<(), NumericError> {
        let mismatch = |detail: String| NumericError::ShapeMismatch { op: "forward", detail };
        if self.slices.is_empty() {
            return Err(mismatch("case has no slices".into()));
        }
        if let Some(s) = self.slices.iter().find(|s| s.len() != config.d_v) {
            return Err(mismatch(format!("slice of length {} but model d_v is {}", s.len(), config.d_v)));
        }
        if self.tokens.is_empty() {
            return Err(mismatch("case has no tokens".into()));
        }
        if let Some(t) = self.tokens.iter().find(|&&t| t >= config.vocab) {
            return Err(mismatch(format!("token id {t} but vocabulary size is {}", config.vocab)));
        }
        Ok(())
    }

    pub fn slice_tensor(&self) -> Result<Tensor, NumericError> {
        Tensor::from_rows(&self.slices)
    }

    /// Same shape, all visual features zeroed.
    pub fn without_vision(&self) -> CaseInput {
        CaseInput {
            slices: self.slices.iter().map(|s| vec![0.0; s.len()]).collect(),
            tokens: self.tokens.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab: usize,
    pub d_v: usize,
    pub d_h: usize,
    pub heads: usize,
    pub classes: usize,
    /// Maximum reasoning steps per rollout.
    pub steps: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ModelConfig {
            vocab,
            d_v,
            d_h,
            heads,
            classes,
            steps,
        } = *self;
        if vocab == 0 || d_v == 0 || d_h == 0 || heads == 0 || steps == 0 {
            return Err(ModelError::Config("model dimensions must be positive".into()));
        }
        if classes < 2 {
            return Err(ModelError::Config(format!("need at least 2 classes, got {classes}")));
        }
        if d_h % heads != 0 {
            return Err(ModelError::Config(format!("d_h {d_h} is not divisible by {heads} heads")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Template {
    ModusPonens,
    ModusTollens,
    AffirmConsequent,
    Distractor,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::ModusPonens,
        Template::ModusTollens,
        Template::AffirmConsequent,
        Template::Distractor,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

pub const PARAM_NAMES: [&str; 11] = [
    "token_embeddings",
    "w_proj",
    "attn.wq",
    "attn.wk",
    "attn.wv",
    "attn.wo",
    "classifier.w",
    "classifier.b",
    "reason.template_logits",
    "reason.w",
    "reason.gain",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TinyPolicy {
    pub config: ModelConfig,
    /// `V x d_h`
    pub token_embeddings: Tensor,
    /// `d_h x d_v`
    pub w_proj: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    /// `d_h x C`
    pub classifier_w: Tensor,
    /// `1 x C`
    pub classifier_b: Tensor,
    /// `K x 4`, one row of template preferences per step.
    pub template_logits: Tensor,
    /// `d_h x d_h` bilinear map between conclusion and case features.
    pub w_reason: Tensor,
    /// `1 x 1` weight on the diagnosis head's log-probability.
    pub relevance_gain: Tensor,
}

/// Graph handles for every parameter, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct Bound {
    pub token_embeddings: NodeId,
    pub w_proj: NodeId,
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
    pub classifier_w: NodeId,
    pub classifier_b: NodeId,
    pub template_logits: NodeId,
    pub w_reason: NodeId,
    pub relevance_gain: NodeId,
}

impl Bound {
    pub fn from_ids(ids: &[NodeId]) -> Bound {
        assert_eq!(ids.len(), PARAM_NAMES.len());
        Bound {
            token_embeddings: ids[0],
            w_proj: ids[1],
            wq: ids[2],
            wk: ids[3],
            wv: ids[4],
            wo: ids[5],
            classifier_w: ids[6],
            classifier_b: ids[7],
            template_logits: ids[8],
            w_reason: ids[9],
            relevance_gain: ids[10],
        }
    }

    pub fn ids(&self) -> [NodeId; 11] {
        [
            self.token_embeddings,
            self.w_proj,
            self.wq,
            self.wk,
            self.wv,
            self.wo,
            self.classifier_w,
            self.classifier_b,
            self.template_logits,
            self.w_reason,
            self.relevance_gain,
        ]
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).unwrap();
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Tensor::from_parts(vec![rows, cols], data)
}

impl TinyPolicy {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let ModelConfig {
            vocab,
            d_v,
            d_h,
            classes,
            steps,
            ..
        } = config;
        let mut rng = rng::stream(seed, domain::INIT, 0);
        let attn = 1.0 / (d_h as f64).sqrt();
        Ok(TinyPolicy {
            config,
            token_embeddings: gaussian(&mut rng, vocab, d_h, 1.0),
            w_proj: gaussian(&mut rng, d_h, d_v, 1.0 / (d_v as f64).sqrt()),
            wq: gaussian(&mut rng, d_h, d_h, attn),
            wk: gaussian(&mut rng, d_h, d_h, attn),
            wv: gaussian(&mut rng, d_h, d_h, attn),
            wo: gaussian(&mut rng, d_h, d_h, attn),
            classifier_w: gaussian(&mut rng, d_h, classes, 0.1),
            classifier_b: Tensor::zeros(1, classes),
            template_logits: Tensor::zeros(steps, Template::ALL.len()),
            w_reason: gaussian(&mut rng, d_h, d_h, 0.1 * attn),
            relevance_gain: Tensor::scalar(3.0),
        })
    }

    pub fn for_world(world: &SyntheticWorld, d_h: usize, heads: usize, steps: usize, seed: u64) -> Result<Self, ModelError> {
        TinyPolicy::new(
            ModelConfig {
                vocab: world.vocab.len(),
                d_v: world.d_v(),
                d_h,
                heads,
                classes: world.n_classes(),
                steps,
            },
            seed,
        )
    }

    pub fn params(&self) -> [&Tensor; 11] {
        [
            &self.token_embeddings,
            &self.w_proj,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.classifier_w,
            &self.classifier_b,
            &self.template_logits,
            &self.w_reason,
            &self.relevance_gain,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 11] {
        [
            &mut self.token_embeddings,
            &mut self.w_proj,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.classifier_w,
            &mut self.classifier_b,
            &mut self.template_logits,
            &mut self.w_reason,
            &mut self.relevance_gain,
        ]
    }

    pub fn param_tensors(&self) -> Vec<Tensor> {
        self.params().into_iter().cloned().collect()
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        let ids: Vec<NodeId> = self.params().into_iter().map(|t| g.leaf(t.clone())).collect();
        Bound::from_ids(&ids)
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }

    pub fn to_checkpoint(&self, epochs_done: u32) -> Checkpoint {
        let c = self.config;
        let mut ck = Checkpoint::new();
        let dims = [c.vocab, c.d_v, c.d_h, c.heads, c.classes, c.steps].map(|x| x as f64);
        ck.push("meta.dims", Tensor::row(&dims));
        ck.push("meta.epochs", Tensor::scalar(epochs_done as f64));
        for (name, t) in PARAM_NAMES.iter().zip(self.params()) {
            ck.push(*name, t.clone());
        }
        ck
    }

    /// Returns the policy and the number of epochs it had completed.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, u32), NumericError> {
        let missing = |name: &str| NumericError::Checkpoint(format!("missing tensor `{name}`"));
        let dims = ck.get("meta.dims").ok_or_else(|| missing("meta.dims"))?.data();
        if dims.len() != 6 {
            return Err(NumericError::Checkpoint("meta.dims must hold 6 values".into()));
        }
        let d = dims.iter().map(|&x| x as usize).collect::<Vec<_>>();
        let config = ModelConfig {
            vocab: d[0],
            d_v: d[1],
            d_h: d[2],
            heads: d[3],
            classes: d[4],
            steps: d[5],
        };
        config.validate().map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        let epochs = ck.get("meta.epochs").ok_or_else(|| missing("meta.epochs"))?.item() as u32;
        let mut policy = TinyPolicy::new(config, 0).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
        for (name, slot) in PARAM_NAMES.iter().zip(policy.params_mut()) {
            let t = ck.get(name).ok_or_else(|| missing(name))?;
            if t.shape() != slot.shape() {
                return Err(NumericError::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok((policy, epochs))
    }
}

/// `h = W_proj v`.
pub fn project_visual(v: &[f64], w_proj: &Tensor) -> Result<Vec<f64>, NumericError> {
    if w_proj.shape().len() != 2 || w_proj.cols() != v.len() {
        return Err(NumericError::ShapeMismatch {
            op: "project_visual",
            detail: format!("W_proj {:?} with vector of length {}", w_proj.shape(), v.len()),
        });
    }
    Ok((0..w_proj.rows())
        .map(|r| w_proj.row_slice(r).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect())
}

/// Multi-head self-attention over slice rows (`M x d_h`), no positional
/// encoding, then a mean over slices. Returns a `1 x d_h` node.
pub fn fuse_slices(g: &mut Graph, b: &Bound, heads: usize, feats: NodeId) -> NodeId {
    let d_h = g.value(feats).cols();
    let dk = d_h / heads;
    let q = g.matmul(feats, b.wq);
    let k = g.matmul(feats, b.wk);
    let v = g.matmul(feats, b.wv);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dk, dk);
        let kh = g.slice_cols(k, h * dk, dk);
        let vh = g.slice_cols(v, h * dk, dk);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scaled = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let attn = g.softmax_rows(scaled);
        outs.push(g.matmul(attn, vh));
    }
    let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    let mixed = g.matmul(cat, b.wo);
    g.mean_rows(mixed)
}

#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `1 x C`
    pub logits: NodeId,
    pub z_v: NodeId,
    pub z_t: NodeId,
    /// `(z_v + z_t) / 2`, the feature the heads read.
    pub joint: NodeId,
}

pub fn forward(g: &mut Graph, b: &Bound, config: &ModelConfig, case: &CaseInput) -> Result<Forward, NumericError> {
    case.check(config)?;
    let x = g.leaf(case.slice_tensor()?);
    let wpt = g.transpose(b.w_proj);
    let feats = g.matmul(x, wpt);
    let z_v = fuse_slices(g, b, config.heads, feats);
    let emb = g.gather_rows(b.token_embeddings, &case.tokens);
    let z_t = g.mean_rows(emb);
    let sum = g.add(z_v, z_t);
    let joint = g.scale(sum, 0.5);
    let scores = g.matmul(joint, b.classifier_w);
    let logits = g.add_row(scores, b.classifier_b);
    Ok(Forward { logits, z_v, z_t, joint })
}

/// Plain-value forward pass: `(logits, z_v, z_t)`.
pub fn predict(policy: &TinyPolicy, case: &CaseInput) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NumericError> {
    let mut g = Graph::new();
    let b = policy.bind(&mut g);
    let f = forward(&mut g, &b, &policy.config, case)?;
    Ok((
        g.value(f.logits).data().to_vec(),
        g.value(f.z_v).data().to_vec(),
        g.value(f.z_t).data().to_vec(),
    ))
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}

/// Facts plus the symbol tables the reasoning head needs.
#[derive(Debug, Clone)]
pub struct RolloutContext {
    facts: Vec<Proposition>,
    diagnoses: Vec<String>,
    tokens: HashMap<String, usize>,
    /// atom antecedent -> consequent, for looking ahead to a diagnosis
    chain: HashMap<Proposition, Proposition>,
}

impl RolloutContext {
    pub fn new(facts: Vec<Proposition>, diagnoses: Vec<String>, vocab: &[String]) -> Result<Self, ModelError> {
        if facts.is_empty() {
            return Err(ModelError::EmptyFactSet);
        }
        let tokens: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        for atom in facts.iter().flat_map(|f| f.atoms()).chain(diagnoses.iter().map(String::as_str)) {
            if !tokens.contains_key(atom) {
                return Err(ModelError::UnknownAtom(atom.to_string()));
            }
        }
        let chain = facts
            .iter()
            .filter_map(Proposition::as_implication)
            .filter(|(a, _)| a.as_atom().is_some())
            .map(|(a, c)| (a.clone(), c.clone()))
            .collect();
        Ok(RolloutContext {
            facts,
            diagnoses,
            tokens,
            chain,
        })
    }

    pub fn for_world(world: &SyntheticWorld) -> Result<Self, ModelError> {
        RolloutContext::new(world.rollout_facts(), world.diagnoses.clone(), &world.vocab)
    }

    pub fn facts(&self) -> &[Proposition] {
        &self.facts
    }

    pub fn diagnosis_of(&self, p: &Proposition) -> Option<usize> {
        p.as_atom().and_then(|a| self.diagnoses.iter().position(|d| d == a))
    }

    /// The diagnosis a conclusion points at: follow nested consequents, then
    /// atom rules, until a diagnosis atom turns up.
    fn lookahead(&self, conclusion: &Proposition) -> Option<usize> {
        let mut cur = conclusion;
        while let Some((_, c)) = cur.as_implication() {
            cur = c;
        }
        for _ in 0..=self.chain.len() {
            if let Some(d) = self.diagnosis_of(cur) {
                return Some(d);
            }
            cur = self.chain.get(cur)?;
        }
        None
    }

    fn candidate(&self, template: Template, major: &Proposition, minor: &Proposition, conclusion: Proposition) -> Candidate {
        let atoms = conclusion.atoms().into_iter().map(|a| self.tokens[a]).collect();
        Candidate {
            template,
            lookahead: self.lookahead(&conclusion),
            triad: Triad::new(major.clone(), minor.clone(), conclusion, 0),
            atoms,
        }
    }

    /// Every candidate triad over the available propositions. None restates
    /// something already available.
    pub fn candidates(&self, derived: &[Proposition]) -> Vec<Candidate> {
        let available: Vec<&Proposition> = self.facts.iter().chain(derived).collect();
        let known: HashSet<&Proposition> = available.iter().copied().collect();
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut push = |c: Candidate, out: &mut Vec<Candidate>| {
            if seen.insert(c.triad.clone()) {
                out.push(c);
            }
        };
        for r in &available {
            let Some((a, c)) = r.as_implication() else { continue };
            if known.contains(a) && !known.contains(c) {
                push(self.candidate(Template::ModusPonens, r, a, c.clone()), &mut out);
            }
            let not_c = Proposition::not(c.clone());
            let not_a = Proposition::not(a.clone());
            if known.contains(&not_c) && !known.contains(&not_a) {
                push(self.candidate(Template::ModusTollens, r, &not_c, not_a), &mut out);
            }
            if known.contains(c) && !known.contains(a) {
                push(self.candidate(Template::AffirmConsequent, r, c, a.clone()), &mut out);
            }
        }
        // jump straight to a diagnosis from whatever was concluded last
        let anchor = derived
            .last()
            .or_else(|| self.facts.iter().find(|f| f.as_atom().is_some()))
            .unwrap_or(&self.facts[0]);
        for d in &self.diagnoses {
            let target = Proposition::atom(d);
            if known.contains(&target) {
                continue;
            }
            let rule = available
                .iter()
                .find(|r| matches!(r.as_implication(), Some((_, c)) if *c == target));
            if let Some(rule) = rule {
                if rule.as_implication().map(|(a, _)| a) != Some(anchor) {
                    push(self.candidate(Template::Distractor, rule, anchor, target), &mut out);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub template: Template,
    pub triad: Triad,
    /// Token ids of the conclusion's atoms.
    pub atoms: Vec<usize>,
    pub lookahead: Option<usize>,
}

/// One sampling decision: the template kind, then a candidate of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub kinds: Vec<Template>,
    pub kind_choice: usize,
    pub candidates: Vec<Candidate>,
    pub choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub trace: ReasoningTrace,
    /// Log-probability of the trace under the sampling policy (temperature 1).
    pub logp: f64,
    pub steps: Vec<StepRecord>,
}

/// `(log p(kind) row, log p(candidate | kind) row)` for one step.
fn step_rows(
    g: &mut Graph,
    b: &Bound,
    joint: NodeId,
    diag_logp: NodeId,
    step: usize,
    kinds: &[Template],
    candidates: &[Candidate],
) -> (NodeId, NodeId) {
    let positions: Vec<(usize, usize)> = kinds.iter().map(|k| (step, k.index())).collect();
    let kind_logits = g.gather(b.template_logits, &positions);
    let kind_logp = g.log_softmax_rows(kind_logits);

    let phis: Vec<NodeId> = candidates
        .iter()
        .map(|c| {
            let rows = g.gather_rows(b.token_embeddings, &c.atoms);
            g.mean_rows(rows)
        })
        .collect();
    let phi = g.concat_rows(&phis);
    let mapped = g.matmul(phi, b.w_reason);
    let joint_t = g.transpose(joint);
    let bilinear = g.matmul(mapped, joint_t);
    let bilinear = g.transpose(bilinear);
    // conclusions that lead nowhere get the uniform log-probability
    let classes = g.value(diag_logp).cols();
    let uninformed = g.leaf(Tensor::scalar(-(classes as f64).ln()));
    let padded = g.concat_cols(&[diag_logp, uninformed]);
    let picks: Vec<(usize, usize)> = candidates.iter().map(|c| (0, c.lookahead.unwrap_or(classes))).collect();
    let rel = g.gather(padded, &picks);
    let rel = g.scale_by(rel, b.relevance_gain);
    let cand_logits = g.add(bilinear, rel);
    let cand_logp = g.log_softmax_rows(cand_logits);
    (kind_logp, cand_logp)
}

fn draw(logp: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &x) in logp.iter().enumerate() {
            if x > logp[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = log_softmax(&logp.iter().map(|x| x / temperature).collect::<Vec<_>>());
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in scaled.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    scaled.len() - 1
}

fn kinds_of(candidates: &[Candidate]) -> Vec<Template> {
    Template::ALL
        .into_iter()
        .filter(|k| candidates.iter().any(|c| c.template == *k))
        .collect()
}

/// Per-candidate sampling probabilities at one step, after `derived` has been
/// concluded.
pub fn step_distribution(
    policy: &TinyPolicy,
    case: &CaseInput,
    ctx: &RolloutContext,
    derived: &[Proposition],
    step: usize,
) -> Result<Vec<(Candidate, f64)>, ModelError> {
    let mut g = Graph::new();
    let b = policy.bind(&mut g);
    let f = forward(&mut g, &b, &policy.config, case)?;
    let diag_logp = g.log_softmax_rows(f.logits);
    let all = ctx.candidates(derived);
    let mut out = Vec::new();
    for (ki, kind) in kinds_of(&all).iter().enumerate() {
        let kinds = kinds_of(&all);
        let members: Vec<Candidate> = all.iter().filter(|c| c.template == *kind).cloned().collect();
        let (kl, cl) = step_rows(&mut g, &b, f.joint, diag_logp, step, &kinds, &members);
        let pk = g.value(kl).data()[ki].exp();
        for (c, lp) in members.into_iter().zip(g.value(cl).data()) {
            out.push((c, pk * lp.exp()));
        }
    }
    Ok(out)
}

/// Samples `count` rollouts for one case. Rollout `i` draws from the stream
/// `(seed, case_id, i)`. A temperature of 0 is greedy.
pub fn sample_rollouts(
    policy: &TinyPolicy,
    case: &CaseInput,
    case_id: &str,
    ctx: &RolloutContext,
    count: usize,
    seed: u64,
    temperature: f64,
) -> Result<Vec<Rollout>, ModelError> {
    let mut g = Graph::new();
    let b = policy.bind(&mut g);
    let f = forward(&mut g, &b, &policy.config, case)?;
    let diag_logp = g.log_softmax_rows(f.logits);
    let case_domain = rng::mix(domain::ROLLOUT, rng::hash_str(case_id));

    (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, case_domain, i as u64);
            let mut derived: Vec<Proposition> = Vec::new();
            let mut triads = Vec::new();
            let mut steps = Vec::new();
            let mut logp = 0.0;
            let mut answer = NO_ANSWER.to_string();
            for step in 0..policy.config.steps {
                let all = ctx.candidates(&derived);
                if all.is_empty() {
                    if step == 0 {
                        return Err(ModelError::NoCandidates);
                    }
                    break;
                }
                let kinds = kinds_of(&all);
                let kind_rows = log_softmax(&kinds.iter().map(|k| policy.template_logits.get(step, k.index())).collect::<Vec<_>>());
                let kind_choice = draw(&kind_rows, temperature, &mut rng);
                let members: Vec<Candidate> = all
                    .into_iter()
                    .filter(|c| c.template == kinds[kind_choice])
                    .collect();
                let (kl, cl) = step_rows(&mut g, &b, f.joint, diag_logp, step, &kinds, &members);
                let cand_rows = g.value(cl).data().to_vec();
                let choice = draw(&cand_rows, temperature, &mut rng);
                logp += g.value(kl).data()[kind_choice] + cand_rows[choice];

                let picked = &members[choice];
                let t = &picked.triad;
                triads.push(Triad::new(t.major.clone(), t.minor.clone(), t.conclusion.clone(), step as u32 + 1));
                derived.push(t.conclusion.clone());
                let done = ctx.diagnosis_of(&t.conclusion);
                steps.push(StepRecord {
                    step,
                    kinds,
                    kind_choice,
                    candidates: members,
                    choice,
                });
                if let Some(d) = done {
                    answer = ctx.diagnoses[d].clone();
                    break;
                }
            }
            let trace = ReasoningTrace::new(case_id, triads, answer).expect("steps are numbered in order");
            Ok(Rollout { trace, logp, steps })
        })
        .collect()
}

/// Rebuilds a rollout's log-probability as a `1 x 1` node under the bound
/// parameters.
pub fn rollout_logp(g: &mut Graph, b: &Bound, f: &Forward, rollout: &Rollout) -> NodeId {
    let diag_logp = g.log_softmax_rows(f.logits);
    let mut terms = Vec::with_capacity(rollout.steps.len() * 2);
    for s in &rollout.steps {
        let (kl, cl) = step_rows(g, b, f.joint, diag_logp, s.step, &s.kinds, &s.candidates);
        terms.push(g.gather(kl, &[(0, s.kind_choice)]));
        terms.push(g.gather(cl, &[(0, s.choice)]));
    }
    let row = g.concat_cols(&terms);
    g.sum(row)
}
