//! Group-relative advantages, the clipped surrogate with a difficulty-scaled
//! KL penalty, its analytic gradient, and the Adam update.

use serde::{Deserialize, Serialize};

use crate::curriculum::{DifficultyLabel, MixBatch};
use crate::error::{Error, Result};
use crate::policy::{
    grad_logprob, grad_token_kl, grad_token_kl_k3, token_kl, token_kl_k3, visited_states, KlMode,
    PolicyParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Clpo,
    Grpo,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clpo" => Ok(Mode::Clpo),
            "grpo" => Ok(Mode::Grpo),
            other => Err(Error::Config(format!(
                "mode: unknown value {other:?} (expected clpo or grpo)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Clpo => "clpo",
            Mode::Grpo => "grpo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub mode: Mode,
    pub clip_eps: f64,
    pub beta: f64,
    pub lambda_hard: f64,
    pub lambda_non_hard: f64,
    /// When false every item uses `beta` regardless of difficulty.
    pub dynamic_kl: bool,
    pub kl_mode: KlMode,
    pub inner_epochs: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            mode: Mode::Clpo,
            clip_eps: 0.2,
            beta: 0.001,
            lambda_hard: 0.3,
            lambda_non_hard: 1.0,
            dynamic_kl: true,
            kl_mode: KlMode::Exact,
            inner_epochs: 1,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0) {
            return Err(Error::Config(format!(
                "objective.clip_eps: must be > 0, got {}",
                self.clip_eps
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "objective.beta: must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if !(self.lambda_hard >= 0.0 && self.lambda_non_hard >= 0.0) {
            return Err(Error::Config("objective.lambda_*: must be >= 0".into()));
        }
        if self.lambda_hard > self.lambda_non_hard {
            return Err(Error::Config(format!(
                "objective.lambda_hard ({}) must not exceed lambda_non_hard ({})",
                self.lambda_hard, self.lambda_non_hard
            )));
        }
        if self.inner_epochs < 1 {
            return Err(Error::Config("objective.inner_epochs: must be >= 1".into()));
        }
        Ok(())
    }
}

/// `(r_i - mean) / std` with population statistics.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Input(format!(
            "advantages need at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::Invariant(
            "zero reward variance in a training group".into(),
        ));
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `lambda_d * beta` for CLPO with dynamic KL, plain `beta` otherwise.
pub fn effective_kl_coeff(difficulty: DifficultyLabel, cfg: &ObjectiveConfig) -> f64 {
    if cfg.mode == Mode::Grpo || !cfg.dynamic_kl {
        return cfg.beta;
    }
    if difficulty.is_hard() {
        cfg.lambda_hard * cfg.beta
    } else {
        cfg.lambda_non_hard * cfg.beta
    }
}

/// `min(k A, clip(k, 1-eps, 1+eps) A)`.
pub fn surrogate_term(k: f64, adv: f64, eps: f64) -> f64 {
    (k * adv).min(k.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Loss, gradient, and token statistics for one pass over a batch.
///
/// Terms are reduced in a fixed order (item, rollout, token), so the result is
/// bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    /// Gradient of the loss (`-J`) with respect to every logit.
    pub grad: Vec<f64>,
    pub loss_value: f64,
    pub token_count: usize,
    pub kl_sum: f64,
    pub entropy_sum: f64,
    pub ratio_sum: f64,
    pub clipped_tokens: usize,
}

impl GradientAccumulator {
    fn zeros(n: usize) -> Self {
        GradientAccumulator {
            grad: vec![0.0; n],
            loss_value: 0.0,
            token_count: 0,
            kl_sum: 0.0,
            entropy_sum: 0.0,
            ratio_sum: 0.0,
            clipped_tokens: 0,
        }
    }

    pub fn grad_norm(&self) -> f64 {
        l2_norm(&self.grad)
    }

    fn per_token(&self, x: f64) -> f64 {
        if self.token_count == 0 {
            0.0
        } else {
            x / self.token_count as f64
        }
    }

    pub fn mean_kl(&self) -> f64 {
        self.per_token(self.kl_sum)
    }

    pub fn mean_entropy(&self) -> f64 {
        self.per_token(self.entropy_sum)
    }

    pub fn mean_ratio(&self) -> f64 {
        self.per_token(self.ratio_sum)
    }

    pub fn clip_frac(&self) -> f64 {
        self.per_token(self.clipped_tokens as f64)
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-rollout weight denominator: the group's total token count for CLPO,
/// `G * |y_i|` for GRPO.
fn normalizer(mode: Mode, lengths: &[usize], i: usize) -> usize {
    match mode {
        Mode::Clpo => lengths.iter().sum(),
        Mode::Grpo => lengths.len() * lengths[i],
    }
}

/// Per-group objective pieces, exposed so callers can inspect how the KL
/// penalty of one item compares with another's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupObjective {
    pub surrogate: f64,
    pub kl_penalty: f64,
}

impl GroupObjective {
    pub fn value(&self) -> f64 {
        self.surrogate - self.kl_penalty
    }
}

/// Evaluates the normalized objective of one batch item without gradients.
pub fn group_objective(
    item: &crate::curriculum::BatchItem,
    theta: &PolicyParams,
    theta_ref: &PolicyParams,
    cfg: &ObjectiveConfig,
) -> Result<GroupObjective> {
    let group = &item.group;
    let adv = compute_advantages(&group.rewards())?;
    let beta_eff = effective_kl_coeff(item.difficulty, cfg);
    let lengths: Vec<usize> = group.rollouts.iter().map(|r| r.len()).collect();
    let mut out = GroupObjective {
        surrogate: 0.0,
        kl_penalty: 0.0,
    };
    for (i, ro) in group.rollouts.iter().enumerate() {
        let w = 1.0 / normalizer(cfg.mode, &lengths, i) as f64;
        let states = visited_states(&group.problem, &ro.actions);
        let (mut s_sum, mut kl_sum) = (0.0, 0.0);
        for (t, (&s, &a)) in states.iter().zip(&ro.actions).enumerate() {
            let k = (theta.log_probs(s)[a as usize] - ro.logp_old[t]).exp();
            s_sum += surrogate_term(k, adv[i], cfg.clip_eps);
            kl_sum += match cfg.kl_mode {
                KlMode::Exact => token_kl(theta, theta_ref, s),
                KlMode::K3 => token_kl_k3(theta, theta_ref, s, a),
            };
        }
        out.surrogate += w * s_sum;
        out.kl_penalty += w * beta_eff * kl_sum;
    }
    Ok(out)
}

/// Loss `-J` and its analytic gradient over a mixed batch.
///
/// Each group's objective is normalized per `cfg.mode`; groups are averaged
/// uniformly across the batch. The ratio uses the `logp_old` recorded in each
/// rollout, so `theta_old` only needs to agree with those values.
pub fn batch_loss_and_grad(
    mix: &MixBatch,
    theta: &PolicyParams,
    theta_old: &PolicyParams,
    theta_ref: &PolicyParams,
    cfg: &ObjectiveConfig,
) -> Result<GradientAccumulator> {
    if mix.is_empty() {
        return Err(Error::Input("empty training batch".into()));
    }
    if !theta.same_shape(theta_old) || !theta.same_shape(theta_ref) {
        return Err(Error::Input("policy snapshots differ in shape".into()));
    }
    let n_actions = theta.n_actions();
    let batch_scale = 1.0 / mix.len() as f64;
    let mut acc = GradientAccumulator::zeros(theta.n_params());
    let mut objective = 0.0;

    for item in &mix.items {
        let group = &item.group;
        let adv = compute_advantages(&group.rewards())?;
        let beta_eff = effective_kl_coeff(item.difficulty, cfg);
        let lengths: Vec<usize> = group.rollouts.iter().map(|r| r.len()).collect();
        let mut group_obj = 0.0;

        for (i, ro) in group.rollouts.iter().enumerate() {
            let w = 1.0 / normalizer(cfg.mode, &lengths, i) as f64;
            let scale = w * batch_scale;
            let states = visited_states(&group.problem, &ro.actions);
            let mut term_sum = 0.0;

            for (t, (&s, &a)) in states.iter().zip(&ro.actions).enumerate() {
                let logp = theta.log_probs(s);
                let k = (logp[a as usize] - ro.logp_old[t]).exp();
                let unclipped = k * adv[i];
                let clipped = k.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv[i];
                let kl_exact = token_kl(theta, theta_ref, s);
                let (kl, kl_grad) = match cfg.kl_mode {
                    KlMode::Exact => (kl_exact, grad_token_kl(theta, theta_ref, s)),
                    KlMode::K3 => (
                        token_kl_k3(theta, theta_ref, s, a),
                        grad_token_kl_k3(theta, theta_ref, s, a),
                    ),
                };
                term_sum += unclipped.min(clipped) - beta_eff * kl;

                acc.token_count += 1;
                acc.kl_sum += kl_exact;
                acc.entropy_sum -= logp.iter().map(|l| l.exp() * l).sum::<f64>();
                acc.ratio_sum += k;

                // loss gradient = -(dJ); J's surrogate moves only on the unclipped branch
                let base = kl_grad.row * n_actions;
                if unclipped <= clipped {
                    let g = grad_logprob(theta, s, a);
                    let c = adv[i] * k;
                    for (b, gv) in g.values.iter().enumerate() {
                        acc.grad[base + b] -= scale * c * gv;
                    }
                } else {
                    acc.clipped_tokens += 1;
                }
                if beta_eff != 0.0 {
                    for (b, kv) in kl_grad.values.iter().enumerate() {
                        acc.grad[base + b] += scale * beta_eff * kv;
                    }
                }
            }
            group_obj += w * term_sum;
        }
        objective += group_obj;
    }
    acc.loss_value = -(objective * batch_scale);

    if !acc.loss_value.is_finite() || acc.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Invariant(format!(
            "non-finite loss or gradient (loss = {}, batch of {} items)",
            acc.loss_value,
            mix.len()
        )));
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (AdamW); zero keeps a zero gradient a fixed point.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Scales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Clips the gradient and takes one AdamW step. Returns the pre-clip norm.
pub fn apply_update(
    theta: &mut PolicyParams,
    grad: &GradientAccumulator,
    state: &mut AdamState,
    lr: f64,
    grad_clip: f64,
    adam: &AdamConfig,
) -> Result<f64> {
    if grad.grad.len() != theta.n_params() || state.m.len() != theta.n_params() {
        return Err(Error::Input("gradient and optimizer state shapes differ".into()));
    }
    let mut g = grad.grad.clone();
    let norm = clip_grad_norm(&mut g, grad_clip);
    state.t += 1;
    let bc1 = 1.0 - adam.beta1.powi(state.t as i32);
    let bc2 = 1.0 - adam.beta2.powi(state.t as i32);
    for (j, gj) in g.iter().enumerate() {
        let m = adam.beta1 * state.m[j] + (1.0 - adam.beta1) * gj;
        let v = adam.beta2 * state.v[j] + (1.0 - adam.beta2) * gj * gj;
        state.m[j] = m;
        state.v[j] = v;
        let step = (m / bc1) / ((v / bc2).sqrt() + adam.eps);
        let z = &mut theta.logits[j];
        if adam.weight_decay != 0.0 {
            *z -= lr * adam.weight_decay * *z;
        }
        *z -= lr * step;
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::{Accuracy, BatchItem, Group};
    use crate::policy::{init_policy, Rollout};
    use crate::task::{Lineage, OpToken, Problem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(
            compute_advantages(&[1.0, 1.0, -1.0, -1.0]).unwrap(),
            vec![1.0, 1.0, -1.0, -1.0]
        );
        let a = compute_advantages(&[1.0, -1.0, -1.0, -1.0]).unwrap();
        let s = 0.75f64.sqrt();
        assert_relative_eq!(a[0], 1.5 / s, epsilon = 1e-12);
        assert_relative_eq!(a[0], 1.7321, epsilon = 1e-4);
        for x in &a[1..] {
            assert_relative_eq!(*x, -0.5 / s, epsilon = 1e-12);
            assert_relative_eq!(*x, -0.5774, epsilon = 1e-4);
        }
        assert!(compute_advantages(&[1.0; 4]).unwrap_err().is_invariant());
        assert!(compute_advantages(&[1.0]).is_err());
    }

    #[test]
    fn kl_coefficient_examples() {
        let cfg = ObjectiveConfig::default();
        assert_relative_eq!(effective_kl_coeff(DifficultyLabel::Hard, &cfg), 0.0003, epsilon = 1e-18);
        assert_eq!(effective_kl_coeff(DifficultyLabel::Medium, &cfg), 0.001);
        assert_eq!(effective_kl_coeff(DifficultyLabel::Easy, &cfg), 0.001);
        let grpo = ObjectiveConfig {
            mode: Mode::Grpo,
            ..cfg.clone()
        };
        assert_eq!(effective_kl_coeff(DifficultyLabel::Hard, &grpo), 0.001);
        let static_kl = ObjectiveConfig {
            dynamic_kl: false,
            ..cfg
        };
        assert_eq!(effective_kl_coeff(DifficultyLabel::Hard, &static_kl), 0.001);
    }

    #[test]
    fn surrogate_examples() {
        assert_relative_eq!(surrogate_term(1.5, 2.0, 0.2), 2.4, epsilon = 1e-15);
        assert_relative_eq!(surrogate_term(0.5, -1.0, 0.2), -0.8, epsilon = 1e-15);
        for eps in [0.01, 0.2, 5.0] {
            assert_eq!(surrogate_term(1.0, 0.37, eps), 0.37);
        }
    }

    #[test]
    fn lambda_order_is_validated() {
        let cfg = ObjectiveConfig {
            lambda_hard: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let alpha_one = ObjectiveConfig {
            lambda_hard: 1.0,
            ..Default::default()
        };
        assert!(alpha_one.validate().is_ok());
    }

    fn single_item(rewards: &[f64], difficulty: DifficultyLabel) -> MixBatch {
        let p = Problem::new("o", 10, 2, vec![OpToken::add(3)], Lineage::Original, 0).unwrap();
        let rollouts = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| Rollout {
                problem_id: "o".into(),
                actions: vec![if r > 0.0 { 5 } else { i as u32 }],
                logp_old: crate::policy::log_softmax(&[0.0; 10])[..1].to_vec(),
                reward: r,
                correct: r > 0.0,
            })
            .collect();
        let correct = rewards.iter().filter(|&&r| r > 0.0).count();
        MixBatch {
            items: vec![BatchItem {
                group: Group {
                    problem: p,
                    rollouts,
                    acc: Accuracy::new(correct, rewards.len()).unwrap(),
                },
                difficulty,
                restructured: false,
            }],
            n_base: 1,
        }
    }

    #[test]
    fn first_epoch_reduces_to_reinforce_with_baseline() {
        // rewards [1,-1,-1,-1] on a single-op problem with distinct wrong actions
        let mix = single_item(&[1.0, -1.0, -1.0, -1.0], DifficultyLabel::Hard);
        let theta = init_policy(10);
        let cfg = ObjectiveConfig::default();
        let acc = batch_loss_and_grad(&mix, &theta, &theta, &theta, &cfg).unwrap();
        let adv = compute_advantages(&[1.0, -1.0, -1.0, -1.0]).unwrap();
        assert_relative_eq!(acc.loss_value, -adv.iter().sum::<f64>() / 4.0, epsilon = 1e-15);
        assert_eq!(acc.mean_ratio(), 1.0);
        assert_eq!(acc.mean_kl(), 0.0);

        // closed form: dJ/dz_b = (1/G) sum_i A_i (1{b = a_i} - 0.1)
        let row = theta.state_index(crate::policy::State {
            value: 2,
            op: OpToken::add(3),
        }) * 10;
        let actions = [5usize, 1, 2, 3];
        for b in 0..10 {
            let mut dj = 0.0;
            for (i, &a) in actions.iter().enumerate() {
                dj += adv[i] * (if a == b { 1.0 } else { 0.0 } - 0.1);
            }
            dj /= 4.0;
            assert_relative_eq!(acc.grad[row + b], -dj, epsilon = 1e-15);
        }
    }

    #[test]
    fn modes_coincide_on_equal_lengths() {
        let mix = single_item(&[1.0, 1.0, -1.0, -1.0], DifficultyLabel::Medium);
        let mut theta = init_policy(10);
        theta.logits[37] = 0.4;
        let clpo = ObjectiveConfig::default();
        let grpo = ObjectiveConfig {
            mode: Mode::Grpo,
            ..clpo.clone()
        };
        let reference = init_policy(10);
        let a = batch_loss_and_grad(&mix, &theta, &reference, &reference, &clpo).unwrap();
        let b = batch_loss_and_grad(&mix, &theta, &reference, &reference, &grpo).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_items_pay_a_smaller_kl_penalty() {
        let mut theta = init_policy(10);
        theta.logits.iter_mut().enumerate().for_each(|(i, z)| *z = (i % 7) as f64 * 0.1);
        let reference = init_policy(10);
        let cfg = ObjectiveConfig::default();
        let hard = single_item(&[1.0, -1.0, -1.0, 1.0], DifficultyLabel::Hard);
        let medium = single_item(&[1.0, -1.0, -1.0, 1.0], DifficultyLabel::Medium);
        let h = group_objective(&hard.items[0], &theta, &reference, &cfg).unwrap();
        let m = group_objective(&medium.items[0], &theta, &reference, &cfg).unwrap();
        assert!(h.kl_penalty > 0.0);
        assert!(h.kl_penalty < m.kl_penalty);
        assert_relative_eq!(h.kl_penalty, 0.3 * m.kl_penalty, epsilon = 1e-15);
        assert_eq!(h.surrogate, m.surrogate);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let t = init_policy(10);
        assert!(batch_loss_and_grad(&MixBatch::default(), &t, &t, &t, &ObjectiveConfig::default())
            .is_err());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut theta = init_policy(10);
        theta.logits[3] = 0.25;
        let before = theta.clone();
        let mut st = AdamState::new(theta.n_params());
        let g = GradientAccumulator::zeros(theta.n_params());
        apply_update(&mut theta, &g, &mut st, 1e-2, 1.0, &AdamConfig::default()).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn clipping_scales_to_threshold() {
        let mut g = vec![0.0; 100];
        g[0] = 6.0;
        g[1] = 8.0;
        let norm = clip_grad_norm(&mut g, 1.0);
        assert_eq!(norm, 10.0);
        assert_relative_eq!(l2_norm(&g), 1.0, epsilon = 1e-15);
        let mut small = vec![0.3, 0.4];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut theta = init_policy(10);
        let mut g = GradientAccumulator::zeros(theta.n_params());
        g.grad[5] = 0.5;
        g.grad[6] = -0.25;
        let mut st = AdamState::new(theta.n_params());
        apply_update(&mut theta, &g, &mut st, 0.01, 1.0, &AdamConfig::default()).unwrap();
        assert_relative_eq!(theta.logits[5], -0.01, epsilon = 1e-9);
        assert_relative_eq!(theta.logits[6], 0.01, epsilon = 1e-9);
        assert_eq!(theta.logits[7], 0.0);
    }

    proptest! {
        #[test]
        fn advantages_are_standardized(rewards in prop::collection::vec(prop::bool::ANY, 2..16)) {
            prop_assume!(rewards.iter().any(|&b| b) && rewards.iter().any(|&b| !b));
            let r: Vec<f64> = rewards.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let a = compute_advantages(&r).unwrap();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9);
        }
    }
}
