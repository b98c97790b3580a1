use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbc_grad::{Adam, Graph, Tensor, Var};

use crate::error::{CoreError, Result};
use crate::policy::{ChunkInput, Policy};
use crate::seeds::{self, TAG_SHUFFLE};

use super::rollout::RolloutBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub epochs: usize,
    /// Target number of steps per optimizer step.
    pub minibatch: usize,
    /// Global gradient-norm clip; 0 disables.
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            value_coef: 0.5,
            epochs: 4,
            minibatch: 32,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(CoreError::InvalidArgument(format!("clip {} outside (0, 1)", self.clip)));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(CoreError::InvalidArgument("epochs and minibatch must be positive".into()));
        }
        if self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err(CoreError::InvalidArgument("negative loss weight or clip norm".into()));
        }
        Ok(())
    }
}

/// Importance ratio of the current policy against the rollout behavior.
pub fn ppo_ratio(pi: f64, behavior_prob: f64) -> f64 {
    pi / behavior_prob
}

/// Per-sample clipped surrogate `min(rho A, clip(rho, 1-eps, 1+eps) A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Averages over all optimizer steps of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Loss graph of one minibatch.
pub struct LossTerms {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    /// Per-step ratios in minibatch order.
    pub ratios: Vec<f64>,
    /// Per-step `log pi(a)` in minibatch order.
    pub log_probs: Vec<f64>,
}

/// Segment references `(trajectory, segment)` grouped so each group holds
/// roughly `target` steps.
pub fn minibatches(batch: &RolloutBatch, target: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<Vec<(usize, usize)>> {
    let mut refs: Vec<(usize, usize)> = batch
        .trajectories
        .iter()
        .enumerate()
        .flat_map(|(w, tr)| (0..tr.segments.len()).map(move |s| (w, s)))
        .collect();
    if let Some(rng) = rng {
        refs.shuffle(rng);
    }
    let mut groups = Vec::new();
    let mut cur = Vec::new();
    let mut steps = 0;
    for (w, s) in refs {
        let seg = &batch.trajectories[w].segments[s];
        cur.push((w, s));
        steps += seg.end - seg.begin;
        if steps >= target {
            groups.push(std::mem::take(&mut cur));
            steps = 0;
        }
    }
    if !cur.is_empty() {
        groups.push(cur);
    }
    groups
}

/// Build the PPO loss over the given segments; advantages and returns must
/// already be filled.
pub fn minibatch_loss(
    g: &mut Graph<'_, f32>,
    policy: &Policy,
    batch: &RolloutBatch,
    group: &[(usize, usize)],
    cfg: &PpoConfig,
    entropy_coef: f64,
) -> Result<LossTerms> {
    if batch.advantages.len() != batch.len() {
        return Err(CoreError::InvalidArgument("advantages not computed".into()));
    }
    let net = policy.net();
    let offsets = batch.offsets();
    let mut logits = Vec::new();
    let mut values = Vec::new();
    let (mut actions, mut log_mu, mut adv, mut ret) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &(w, s) in group {
        let tr = &batch.trajectories[w];
        let seg = &tr.segments[s];
        let steps = &tr.steps[seg.begin..seg.end];
        let mut patches = Vec::new();
        for st in steps {
            patches.extend(net.frame_patches(&st.rgb, st.prev_action)?);
        }
        let input = ChunkInput {
            patches,
            steps: steps.len(),
            goal: seg.goal.as_deref().map(|im| net.goal_patches(im)).transpose()?,
        };
        let (vars, _) = net.forward_chunk(g, &seg.start, &input)?;
        logits.push(vars.logits);
        values.push(vars.values);
        for (k, st) in steps.iter().enumerate() {
            let i = offsets[w] + seg.begin + k;
            actions.push(st.action.index());
            log_mu.push(st.behavior_prob.ln() as f32);
            adv.push(batch.advantages[i] as f32);
            ret.push(batch.returns[i] as f32);
        }
    }
    let n = actions.len();
    let logits = g.concat(&logits, 0)?;
    let values = g.concat(&values, 0)?;

    let logp = g.log_softmax(logits)?;
    let lp_a = g.pick(logp, &actions)?;
    let log_mu = g.constant(Tensor::new(vec![n], log_mu)?);
    let adv = g.constant(Tensor::new(vec![n], adv)?);
    let ret = g.constant(Tensor::new(vec![n], ret)?);

    let diff = g.sub(lp_a, log_mu)?;
    let ratio = g.exp(diff);
    let s1 = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, (1.0 - cfg.clip) as f32, (1.0 + cfg.clip) as f32);
    let s2 = g.mul(clipped, adv)?;
    let surr = g.minimum(s1, s2)?;
    let surr = g.mean(surr);
    let policy_loss = g.neg(surr);

    let err = g.sub(values, ret)?;
    let sq = g.square(err);
    let value_loss = g.mean(sq);

    let p = g.softmax(logits)?;
    let plogp = g.mul(p, logp)?;
    let neg_h = g.sum_last(plogp)?;
    let neg_h = g.mean(neg_h);
    let entropy = g.neg(neg_h);

    let v_term = g.scale(value_loss, cfg.value_coef as f32);
    let e_term = g.scale(neg_h, entropy_coef as f32);
    let total = g.add(policy_loss, v_term)?;
    let total = g.add(total, e_term)?;

    let ratios = g.data(ratio).iter().map(|&r| r as f64).collect();
    let log_probs = g.data(lp_a).iter().map(|&r| r as f64).collect();
    Ok(LossTerms {
        total,
        policy: policy_loss,
        value: value_loss,
        entropy,
        ratios,
        log_probs,
    })
}

/// Ratios of every step under the current parameters, in flattened batch
/// order.
pub fn batch_ratios(policy: &Policy, batch: &RolloutBatch) -> Result<Vec<f64>> {
    let mut out = vec![0.0; batch.len()];
    let offsets = batch.offsets();
    let mut probe = batch.clone();
    if probe.advantages.len() != probe.len() {
        probe.advantages = vec![0.0; probe.len()];
        probe.returns = vec![0.0; probe.len()];
    }
    for (w, tr) in batch.trajectories.iter().enumerate() {
        for (s, seg) in tr.segments.iter().enumerate() {
            let mut g = Graph::new(policy.params());
            let terms = minibatch_loss(&mut g, policy, &probe, &[(w, s)], &PpoConfig::default(), 0.0)?;
            let o = offsets[w] + seg.begin;
            out[o..o + terms.ratios.len()].copy_from_slice(&terms.ratios);
        }
    }
    Ok(out)
}

/// Clipped-surrogate updates over `epochs` passes of shuffled minibatches.
///
/// A non-finite loss aborts the update before that minibatch's step and
/// writes the batch to `dump_dir`.
pub fn ppo_update(
    policy: &mut Policy,
    adam: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    entropy_coef: f64,
    shuffle_seed: u64,
    update: u64,
    dump_dir: &Path,
) -> Result<PpoStats> {
    cfg.validate()?;
    let mut stats = PpoStats::default();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[TAG_SHUFFLE, shuffle_seed, update, epoch as u64]));
        for group in minibatches(batch, cfg.minibatch, Some(&mut rng)) {
            let (vals, mut grads, kl, clip_frac) = {
                let mut g = Graph::new(policy.params());
                let terms = minibatch_loss(&mut g, policy, batch, &group, cfg, entropy_coef)?;
                let vals = [terms.total, terms.policy, terms.value, terms.entropy].map(|v| g.value(v).item() as f64);
                if vals.iter().any(|v| !v.is_finite()) {
                    let path = dump_dir.join(format!("nan_batch_{update:06}.csv"));
                    batch.dump(&path)?;
                    return Err(CoreError::NonFiniteLoss { update, path });
                }
                let n = terms.ratios.len() as f64;
                let kl = terms.ratios.iter().map(|r| (r - 1.0) - r.ln()).sum::<f64>() / n;
                let clip_frac = terms.ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip).count() as f64 / n;
                (vals, g.backward(terms.total)?, kl, clip_frac)
            };
            let norm = if cfg.max_grad_norm > 0.0 {
                grads.clip_global_norm(cfg.max_grad_norm)
            } else {
                grads.global_norm()
            };
            adam.step(policy.params_mut(), &grads)?;
            stats.total_loss += vals[0];
            stats.policy_loss += vals[1];
            stats.value_loss += vals[2];
            stats.entropy += vals[3];
            stats.approx_kl += kl;
            stats.clip_fraction += clip_frac;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    for v in [
        &mut stats.total_loss,
        &mut stats.policy_loss,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.approx_kl,
        &mut stats.clip_fraction,
        &mut stats.grad_norm,
    ] {
        *v /= k;
    }
    Ok(stats)
}
