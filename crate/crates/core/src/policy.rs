//! Tabular softmax policy.
//!
//! A state is the value currently held plus the next operation token; an
//! action is the value the policy claims after applying that operation. The
//! policy conditions on its own emitted value, so one wrong step derails the
//! rest of the chain. All quantities are exact: log-softmax, KL against a
//! reference row, and the analytic log-probability gradient.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::task::{verify, OpKind, OpToken, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub value: u32,
    pub op: OpToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub modulus: u32,
    pub op_vocab: usize,
    /// Row-major `(m * op_vocab) x m` table.
    pub logits: Vec<f64>,
}

/// Immutable, shareable copy of the parameters (`pi_old`, `pi_ref`).
pub type Snapshot = Arc<PolicyParams>;

impl PolicyParams {
    /// All-zero logits: the uniform policy.
    pub fn uniform(modulus: u32) -> Self {
        let op_vocab = OpKind::ALL.len() * modulus as usize;
        let rows = modulus as usize * op_vocab;
        PolicyParams {
            modulus,
            op_vocab,
            logits: vec![0.0; rows * modulus as usize],
        }
    }

    /// A policy that puts logit `margin` on the correct transition of every state.
    pub fn oracle(modulus: u32, margin: f64) -> Self {
        let mut p = Self::uniform(modulus);
        for kind in OpKind::ALL {
            for operand in 0..modulus {
                let op = OpToken { kind, operand };
                for value in 0..modulus {
                    let s = State { value, op };
                    let base = p.row_offset(s);
                    p.logits[base + op.apply(value, modulus) as usize] = margin;
                }
            }
        }
        p
    }

    pub fn n_rows(&self) -> usize {
        self.modulus as usize * self.op_vocab
    }

    pub fn n_actions(&self) -> usize {
        self.modulus as usize
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    pub fn state_index(&self, s: State) -> usize {
        s.op.vocab_index(self.modulus) * self.modulus as usize + s.value as usize
    }

    fn row_offset(&self, s: State) -> usize {
        self.state_index(s) * self.n_actions()
    }

    pub fn row(&self, s: State) -> &[f64] {
        let o = self.row_offset(s);
        &self.logits[o..o + self.n_actions()]
    }

    pub fn row_by_index(&self, row: usize) -> &[f64] {
        let n = self.n_actions();
        &self.logits[row * n..(row + 1) * n]
    }

    pub fn snapshot(&self) -> Snapshot {
        Arc::new(self.clone())
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.modulus == other.modulus
            && self.op_vocab == other.op_vocab
            && self.logits.len() == other.logits.len()
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().all(|x| x.is_finite())
    }

    pub fn probs(&self, s: State) -> Vec<f64> {
        softmax(self.row(s), 1.0)
    }

    pub fn log_probs(&self, s: State) -> Vec<f64> {
        log_softmax(self.row(s))
    }

    pub fn entropy(&self, s: State) -> f64 {
        let lp = self.log_probs(s);
        -lp.iter().map(|l| l.exp() * l).sum::<f64>()
    }
}

pub fn init_policy(modulus: u32) -> PolicyParams {
    PolicyParams::uniform(modulus)
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .map(|z| ((z - max) / temperature).exp())
        .collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub problem_id: String,
    /// Claimed value after each op; the last one is the final answer.
    pub actions: Vec<u32>,
    /// Per-token log-probabilities under the sampling policy at temperature 1.
    pub logp_old: Vec<f64>,
    pub reward: f64,
    pub correct: bool,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_INCORRECT: f64 = -1.0;

/// States visited when the policy emits `actions` on `problem`.
pub fn visited_states(problem: &Problem, actions: &[u32]) -> Vec<State> {
    let mut value = problem.start;
    problem
        .ops
        .iter()
        .zip(actions)
        .map(|(&op, &a)| {
            let s = State { value, op };
            value = a;
            s
        })
        .collect()
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples one autoregressive trajectory.
pub fn sample_rollout(
    policy: &PolicyParams,
    problem: &Problem,
    rng: &mut Rng,
    temperature: f64,
) -> Result<Rollout> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if policy.modulus != problem.modulus {
        return Err(Error::Input(format!(
            "policy modulus {} does not match problem modulus {}",
            policy.modulus, problem.modulus
        )));
    }
    let mut value = problem.start;
    let mut actions = Vec::with_capacity(problem.len());
    let mut logp_old = Vec::with_capacity(problem.len());
    for &op in &problem.ops {
        let s = State { value, op };
        let row = policy.row(s);
        let a = sample_index(&softmax(row, temperature), rng);
        logp_old.push(log_softmax(row)[a]);
        actions.push(a as u32);
        value = a as u32;
    }
    let correct = verify(value, problem)?;
    Ok(Rollout {
        problem_id: problem.id.clone(),
        actions,
        logp_old,
        reward: if correct {
            REWARD_CORRECT
        } else {
            REWARD_INCORRECT
        },
        correct,
    })
}

/// Per-token log-probabilities of `actions` at temperature 1.
pub fn logprob(policy: &PolicyParams, problem: &Problem, actions: &[u32]) -> Result<Vec<f64>> {
    if actions.len() != problem.len() {
        return Err(Error::Input(format!(
            "{} actions for a chain of length {}",
            actions.len(),
            problem.len()
        )));
    }
    if let Some(a) = actions.iter().find(|&&a| a >= policy.modulus) {
        return Err(Error::Input(format!(
            "action {a} outside [0, {})",
            policy.modulus
        )));
    }
    Ok(visited_states(problem, actions)
        .into_iter()
        .zip(actions)
        .map(|(s, &a)| policy.log_probs(s)[a as usize])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlMode {
    /// Closed-form `sum_a p(a) (ln p(a) - ln r(a))` over the whole row.
    #[default]
    Exact,
    /// `r/p - ln(r/p) - 1` at the sampled action.
    K3,
}

/// Exact KL divergence `KL(policy || reference)` at one state.
pub fn token_kl(policy: &PolicyParams, reference: &PolicyParams, s: State) -> f64 {
    let lp = policy.log_probs(s);
    let lr = reference.log_probs(s);
    let kl: f64 = lp
        .iter()
        .zip(&lr)
        .map(|(p, r)| p.exp() * (p - r))
        .sum();
    // clamp round-off below zero
    kl.max(0.0)
}

/// The k3 estimator at the sampled action.
pub fn token_kl_k3(policy: &PolicyParams, reference: &PolicyParams, s: State, action: u32) -> f64 {
    let x = reference.log_probs(s)[action as usize] - policy.log_probs(s)[action as usize];
    x.exp_m1() - x
}

/// Gradient of `ln pi(a|s)` with respect to one row of logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad {
    pub row: usize,
    pub values: Vec<f64>,
}

/// `d ln pi(a|s) / d logit[s, b] = 1{b == a} - pi(b|s)`; zero outside row `s`.
pub fn grad_logprob(policy: &PolicyParams, s: State, action: u32) -> RowGrad {
    let mut values: Vec<f64> = policy.probs(s).into_iter().map(|p| -p).collect();
    values[action as usize] += 1.0;
    RowGrad {
        row: policy.state_index(s),
        values,
    }
}

/// Gradient of the exact KL at `s` with respect to the policy's row:
/// `p_b * ((ln p_b - ln r_b) - KL)`.
pub fn grad_token_kl(policy: &PolicyParams, reference: &PolicyParams, s: State) -> RowGrad {
    let lp = policy.log_probs(s);
    let lr = reference.log_probs(s);
    let kl: f64 = lp.iter().zip(&lr).map(|(p, r)| p.exp() * (p - r)).sum();
    let values = lp
        .iter()
        .zip(&lr)
        .map(|(p, r)| p.exp() * ((p - r) - kl))
        .collect();
    RowGrad {
        row: policy.state_index(s),
        values,
    }
}

/// Gradient of the k3 estimator at `(s, action)`:
/// `-(r/p - 1) * (1{b == a} - p_b)`.
pub fn grad_token_kl_k3(
    policy: &PolicyParams,
    reference: &PolicyParams,
    s: State,
    action: u32,
) -> RowGrad {
    let x = reference.log_probs(s)[action as usize] - policy.log_probs(s)[action as usize];
    let scale = -x.exp_m1();
    let mut g = grad_logprob(policy, s, action);
    g.values.iter_mut().for_each(|v| *v *= scale);
    g
}
