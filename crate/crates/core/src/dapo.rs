//! Composite rewards, group-relative advantages with degenerate-group
//! filtering, the asymmetric clipped surrogate, and the training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::ReasoningTrace;
use crate::metrics::{normalize_answer, SynonymTable};
use crate::model::{
    forward, predict, rollout_logp, sample_rollouts, ModelError, Rollout, RolloutContext, TinyPolicy,
};
use crate::numerics::{cosine_similarity, losses, Graph, NodeId, NumericError, Tensor};
use crate::rng::{self, domain};
use crate::synth::{generate_cases, SyntheticCase, SyntheticWorld};
use crate::verifier::{logic_loss, VerifierError};

/// Groups whose reward variance falls below this carry no signal.
pub const MIN_GROUP_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
}

impl TrainError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::Numeric(_) | TrainError::Model(ModelError::Numeric(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub acc: f64,
    pub logic: f64,
    pub ground: f64,
}

impl RewardWeights {
    /// Scales nonnegative weights to sum to one.
    pub fn new(acc: f64, logic: f64, ground: f64) -> Result<Self, TrainError> {
        let all = [acc, logic, ground];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TrainError::Config(format!("reward weights must be >= 0, got {all:?}")));
        }
        let total: f64 = all.iter().sum();
        if total <= 0.0 {
            return Err(TrainError::Config("reward weights sum to zero".into()));
        }
        Ok(RewardWeights {
            acc: acc / total,
            logic: logic / total,
            ground: ground / total,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_logic: f64,
    pub r_ground: f64,
    pub weights: RewardWeights,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn combine(r_acc: f64, r_logic: f64, r_ground: f64, weights: RewardWeights) -> Self {
        RewardBreakdown {
            r_acc,
            r_logic,
            r_ground,
            weights,
            total: weights.acc * r_acc + weights.logic * r_logic + weights.ground * r_ground,
        }
    }
}

pub fn answer_matches(answer: &str, truth: &str, synonyms: &SynonymTable) -> bool {
    normalize_answer(answer, synonyms) == normalize_answer(truth, synonyms)
}

pub fn composite_reward(
    trace: &ReasoningTrace,
    truth: &str,
    z_v: &[f64],
    z_t: &[f64],
    weights: RewardWeights,
    synonyms: &SynonymTable,
) -> Result<RewardBreakdown, TrainError> {
    let r_acc = if answer_matches(&trace.final_answer, truth, synonyms) { 1.0 } else { 0.0 };
    let r_logic = 1.0 - logic_loss(trace)?;
    let r_ground = cosine_similarity(z_v, z_t)?;
    Ok(RewardBreakdown::combine(r_acc, r_logic, r_ground, weights))
}

/// `(r_i - mean) / max(std, 1e-8)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    if var < MIN_GROUP_VARIANCE {
        return vec![0.0; rewards.len()];
    }
    let std = var.sqrt().max(1e-8);
    rewards.iter().map(|r| (r - mean) / std).collect()
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Keeps groups with reward variance at least [`MIN_GROUP_VARIANCE`];
/// returns them with the number dropped.
pub fn filter_degenerate_groups<G: AsRef<[f64]>>(groups: Vec<G>) -> (Vec<G>, usize) {
    let before = groups.len();
    let kept: Vec<G> = groups
        .into_iter()
        .filter(|g| variance(g.as_ref()) >= MIN_GROUP_VARIANCE)
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// `-min(rho A, clip(rho, 1 - low, 1 + high) A)` with `rho = exp(new - old)`.
pub fn clipped_surrogate(logp_new: f64, logp_old: f64, advantage: f64, low: f64, high: f64) -> f64 {
    crate::numerics::surrogate_term(logp_new, logp_old, advantage, low, high).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub cases_per_epoch: usize,
    pub batch_size: usize,
    /// Gradient steps per batch of sampled rollouts.
    pub ppo_epochs: usize,
    pub rollouts: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub lambda_logic: f64,
    pub lambda_align: f64,
    pub w_acc: f64,
    pub w_logic: f64,
    pub w_ground: f64,
    pub tau: f64,
    pub temperature: f64,
    pub d_h: usize,
    pub heads: usize,
    pub seed: u64,
    /// z-scored advantages with degenerate-group filtering; raw rewards otherwise.
    pub group_normalize: bool,
    /// Zeroes every slice and drops the alignment loss and grounding reward.
    pub use_vision: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            cases_per_epoch: 64,
            batch_size: 16,
            ppo_epochs: 2,
            rollouts: 4,
            steps: 3,
            learning_rate: 0.05,
            clip_low: 0.2,
            clip_high: 0.28,
            lambda_logic: 1.0,
            lambda_align: 0.1,
            w_acc: 0.5,
            w_logic: 0.4,
            w_ground: 0.1,
            tau: 0.07,
            temperature: 1.0,
            d_h: 16,
            heads: 2,
            seed: 0,
            group_normalize: true,
            use_vision: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<RewardWeights, TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 || self.cases_per_epoch == 0 || self.batch_size == 0 || self.ppo_epochs == 0 {
            return bad("epochs, cases_per_epoch, batch_size and ppo_epochs must be >= 1".into());
        }
        if self.rollouts == 0 || self.steps == 0 {
            return bad("rollouts and steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.clip_low > 0.0 && self.clip_low <= self.clip_high && self.clip_low < 1.0) {
            return bad(format!(
                "need 0 < clip_low <= clip_high and clip_low < 1, got {} and {}",
                self.clip_low, self.clip_high
            ));
        }
        if !(self.lambda_logic >= 0.0 && self.lambda_align >= 0.0) {
            return bad("lambda weights must be >= 0".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.d_h == 0 || self.heads == 0 || self.d_h % self.heads != 0 {
            return bad(format!("d_h {} must be a positive multiple of heads {}", self.d_h, self.heads));
        }
        RewardWeights::new(self.w_acc, self.w_logic, self.w_ground)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub mean_f_logic: f64,
    pub l_diag: f64,
    pub l_logic: f64,
    pub l_align: f64,
    pub l_total: f64,
    pub dropped_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("records serialize") + "\n")
            .collect()
    }
}

struct Group {
    case: usize,
    rollouts: Vec<Rollout>,
    rewards: Vec<f64>,
}

impl AsRef<[f64]> for Group {
    fn as_ref(&self) -> &[f64] {
        &self.rewards
    }
}

#[derive(Default)]
struct Tally {
    rewards: Vec<f64>,
    acc: Vec<f64>,
    f_logic: Vec<f64>,
    l_diag: Vec<f64>,
    l_logic: Vec<f64>,
    l_align: Vec<f64>,
    dropped: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// The policy a run starts from: a fresh one or a resumed checkpoint.
pub fn initial_policy(config: &TrainConfig, world: &SyntheticWorld) -> Result<TinyPolicy, TrainError> {
    Ok(TinyPolicy::for_world(world, config.d_h, config.heads, config.steps, config.seed)?)
}

/// Trains for `config.epochs` epochs after `start_epoch` already completed
/// ones. Epoch numbers in the report continue from `start_epoch`.
pub fn train(
    config: &TrainConfig,
    world: &SyntheticWorld,
    policy: &mut TinyPolicy,
    start_epoch: u32,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport, TrainError> {
    let weights = config.validate()?;
    if policy.config.steps != config.steps {
        return Err(TrainError::Config(format!(
            "policy was built for {} steps but config asks for {}",
            policy.config.steps, config.steps
        )));
    }
    let ctx = RolloutContext::for_world(world)?;
    let synonyms = SynonymTable::new();
    let mut records = Vec::with_capacity(config.epochs as usize);

    for epoch in start_epoch + 1..=start_epoch + config.epochs {
        let mut cases = generate_cases(
            world,
            config.seed,
            rng::mix(domain::TRAIN_CASES, epoch as u64),
            config.cases_per_epoch,
        );
        if !config.use_vision {
            for c in &mut cases {
                c.input = c.input.without_vision();
            }
        }
        let epoch_seed = rng::mix(config.seed, epoch as u64);
        let mut tally = Tally::default();
        for (b, batch) in cases.chunks(config.batch_size).enumerate() {
            let batch_seed = rng::mix(epoch_seed, b as u64);
            train_batch(config, weights, world, &ctx, &synonyms, policy, batch, batch_seed, &mut tally)?;
        }
        let l_diag = mean(&tally.l_diag);
        let l_logic = mean(&tally.l_logic);
        let l_align = mean(&tally.l_align);
        let record = EpochRecord {
            epoch,
            mean_reward: mean(&tally.rewards),
            accuracy: mean(&tally.acc),
            mean_f_logic: mean(&tally.f_logic),
            l_diag,
            l_logic,
            l_align,
            l_total: losses::total_loss(l_diag, l_logic, l_align, config.lambda_logic, config.lambda_align),
            dropped_groups: tally.dropped,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(TrainReport { epochs: records })
}

#[allow(clippy::too_many_arguments)]
fn train_batch(
    config: &TrainConfig,
    weights: RewardWeights,
    world: &SyntheticWorld,
    ctx: &RolloutContext,
    synonyms: &SynonymTable,
    policy: &mut TinyPolicy,
    batch: &[SyntheticCase],
    seed: u64,
    tally: &mut Tally,
) -> Result<(), TrainError> {
    let grounded = config.use_vision;
    let frozen: &TinyPolicy = policy;
    let groups: Vec<Group> = batch
        .par_iter()
        .enumerate()
        .map(|(i, case)| -> Result<Group, TrainError> {
            let rollouts = sample_rollouts(
                frozen,
                &case.input,
                &case.case_id,
                ctx,
                config.rollouts,
                seed,
                config.temperature,
            )?;
            let r_ground = if grounded {
                let (_, zv, zt) = predict(frozen, &case.input)?;
                cosine_similarity(&zv, &zt)?
            } else {
                0.0
            };
            let truth = &world.diagnoses[case.label];
            let rewards = rollouts
                .iter()
                .map(|r| {
                    let r_acc = if answer_matches(&r.trace.final_answer, truth, synonyms) { 1.0 } else { 0.0 };
                    let r_logic = 1.0 - logic_loss(&r.trace)?;
                    Ok(RewardBreakdown::combine(r_acc, r_logic, r_ground, weights))
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            Ok(Group {
                case: i,
                rewards: rewards.iter().map(|r| r.total).collect(),
                rollouts,
            })
        })
        .collect::<Result<_, _>>()?;

    // the highest-reward rollout of each case feeds the logic term
    let mut l_logic = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut best = 0;
        for (i, r) in g.rewards.iter().enumerate() {
            if *r > g.rewards[best] {
                best = i;
            }
        }
        l_logic.push(logic_loss(&g.rollouts[best].trace)?);
        for (r, rollout) in g.rewards.iter().zip(&g.rollouts) {
            tally.rewards.push(*r);
            let truth = &world.diagnoses[batch[g.case].label];
            tally.acc.push(if answer_matches(&rollout.trace.final_answer, truth, synonyms) { 1.0 } else { 0.0 });
            tally.f_logic.push(1.0 - logic_loss(&rollout.trace)?);
        }
    }
    let l_logic = mean(&l_logic);
    tally.l_logic.push(l_logic);

    let (retained, advantages): (Vec<Group>, Vec<Vec<f64>>) = if config.group_normalize {
        let (kept, dropped) = filter_degenerate_groups(groups);
        tally.dropped += dropped;
        let adv = kept.iter().map(|g| group_advantages(&g.rewards)).collect();
        (kept, adv)
    } else {
        let adv = groups.iter().map(|g| g.rewards.clone()).collect();
        (groups, adv)
    };
    let old: Vec<f64> = retained.iter().flat_map(|g| g.rollouts.iter().map(|r| r.logp)).collect();
    let adv: Vec<f64> = advantages.into_iter().flatten().collect();

    for pass in 0..config.ppo_epochs {
        let mut g = Graph::new();
        let b = policy.bind(&mut g);
        let mut fwds = Vec::with_capacity(batch.len());
        for case in batch {
            fwds.push(forward(&mut g, &b, &policy.config, &case.input)?);
        }
        let logits: Vec<NodeId> = fwds.iter().map(|f| f.logits).collect();
        let logits = g.concat_rows(&logits);
        let labels: Vec<usize> = batch.iter().map(|c| c.label).collect();
        let l_diag = losses::cross_entropy_node(&mut g, logits, &labels)?;
        let mut loss = l_diag;

        let mut l_align_value = 0.0;
        if grounded && batch.len() >= 2 {
            let zv: Vec<NodeId> = fwds.iter().map(|f| f.z_v).collect();
            let zt: Vec<NodeId> = fwds.iter().map(|f| f.z_t).collect();
            let zv = g.concat_rows(&zv);
            let zt = g.concat_rows(&zt);
            let align = losses::infonce_node(&mut g, zv, zt, config.tau)?;
            l_align_value = g.scalar(align);
            if config.lambda_align > 0.0 {
                let weighted = g.scale(align, config.lambda_align);
                loss = g.add(loss, weighted);
            }
        }

        if !old.is_empty() {
            let mut lps = Vec::with_capacity(old.len());
            for grp in &retained {
                for r in &grp.rollouts {
                    lps.push(rollout_logp(&mut g, &b, &fwds[grp.case], r));
                }
            }
            let row = g.concat_cols(&lps);
            let surrogate = g.clipped_surrogate(row, &old, &adv, config.clip_low, config.clip_high);
            loss = g.add(loss, surrogate);
        }
        if pass == 0 {
            tally.l_diag.push(g.scalar(l_diag));
            tally.l_align.push(l_align_value);
        }

        let grads = g.backward(loss)?;
        let ids = b.ids();
        for (slot, id) in policy.params_mut().into_iter().zip(ids) {
            if let Some(grad) = grads.get(id) {
                for (p, d) in slot.data_mut().iter_mut().zip(grad.data()) {
                    *p -= config.learning_rate * d;
                }
            }
        }
        if !policy.is_finite() {
            return Err(NumericError::NonFinite {
                context: "parameters after a gradient step".into(),
            }
            .into());
        }
    }
    Ok(())
}

/// Scalar `L_total` for one batch, built on a fresh graph from `params`;
/// exposed for gradient checking.
pub fn total_loss_node(
    g: &mut Graph,
    ids: &[NodeId],
    policy: &TinyPolicy,
    cases: &[SyntheticCase],
    l_logic: f64,
    lambda_logic: f64,
    lambda_align: f64,
    tau: f64,
) -> Result<NodeId, TrainError> {
    let b = crate::model::Bound::from_ids(ids);
    let mut fwds = Vec::new();
    for c in cases {
        fwds.push(forward(g, &b, &policy.config, &c.input)?);
    }
    let logits: Vec<NodeId> = fwds.iter().map(|f| f.logits).collect();
    let logits = g.concat_rows(&logits);
    let labels: Vec<usize> = cases.iter().map(|c| c.label).collect();
    let l_diag = losses::cross_entropy_node(g, logits, &labels)?;
    let zv: Vec<NodeId> = fwds.iter().map(|f| f.z_v).collect();
    let zt: Vec<NodeId> = fwds.iter().map(|f| f.z_t).collect();
    let zv = g.concat_rows(&zv);
    let zt = g.concat_rows(&zt);
    let align = losses::infonce_node(g, zv, zt, tau)?;
    let align = g.scale(align, lambda_align);
    let logic = g.leaf(Tensor::scalar(lambda_logic * l_logic));
    let partial = g.add(l_diag, align);
    Ok(g.add(partial, logic))
}
