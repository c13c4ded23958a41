//! Online curriculum: per-problem accuracy, difficulty labels, and the
//! two-stage construction of the mixed training batch.

use num::rational::Ratio;
use num::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{sample_rollout, PolicyParams, Rollout};
use crate::rng::Rng;
use crate::task::Problem;

/// Exact accuracy `correct / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn new(correct: usize, total: usize) -> Result<Self> {
        if total == 0 || correct > total {
            return Err(Error::Input(format!("invalid accuracy {correct}/{total}")));
        }
        Ok(Accuracy { correct, total })
    }

    pub fn value(self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn is_zero(self) -> bool {
        self.correct == 0
    }

    pub fn is_one(self) -> bool {
        self.correct == self.total
    }

    /// `0 < acc < 1`: the group has both outcomes.
    pub fn is_learnable(self) -> bool {
        !self.is_zero() && !self.is_one()
    }

    /// `acc <= tau`, compared by cross-multiplication.
    fn le(self, tau: Ratio<i64>) -> bool {
        (self.correct as i128) * (*tau.denom() as i128) <= (*tau.numer() as i128) * (self.total as i128)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLabel {
    /// `acc == 0`
    Failed,
    /// `0 < acc <= tau_hard`
    Hard,
    /// `tau_hard < acc <= tau_med`
    Medium,
    /// `tau_med < acc < 1`
    Easy,
    /// `acc == 1`
    Mastered,
}

impl DifficultyLabel {
    pub fn is_hard(self) -> bool {
        self == DifficultyLabel::Hard
    }
}

/// Difficulty thresholds `(tau_hard, tau_med)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub hard: f64,
    pub medium: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            hard: 0.3,
            medium: 0.7,
        }
    }
}

fn exact(x: f64, name: &str) -> Result<Ratio<i64>> {
    Ratio::approximate_float(x)
        .ok_or_else(|| Error::Config(format!("thresholds.{name}: {x} has no rational form")))
}

impl Thresholds {
    pub fn new(hard: f64, medium: f64) -> Result<Self> {
        let t = Thresholds { hard, medium };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.hard && self.hard < self.medium && self.medium < 1.0) {
            return Err(Error::Config(format!(
                "thresholds: need 0 < hard < medium < 1, got ({}, {})",
                self.hard, self.medium
            )));
        }
        Ok(())
    }

    fn exact(&self) -> Result<(Ratio<i64>, Ratio<i64>)> {
        Ok((exact(self.hard, "hard")?, exact(self.medium, "medium")?))
    }
}

pub fn classify(acc: Accuracy, thresholds: &Thresholds) -> Result<DifficultyLabel> {
    thresholds.validate()?;
    let (hard, medium) = thresholds.exact()?;
    Ok(if acc.is_zero() {
        DifficultyLabel::Failed
    } else if acc.is_one() {
        DifficultyLabel::Mastered
    } else if acc.le(hard) {
        DifficultyLabel::Hard
    } else if acc.le(medium) {
        DifficultyLabel::Medium
    } else {
        DifficultyLabel::Easy
    })
}

/// The rollouts sampled for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub problem: Problem,
    pub rollouts: Vec<Rollout>,
    pub acc: Accuracy,
}

impl Group {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }
}

/// Samples `g` rollouts from the frozen sampling policy and scores them.
pub fn evaluate_accuracy(
    policy_old: &PolicyParams,
    problem: &Problem,
    g: usize,
    rng: &mut Rng,
    temperature: f64,
) -> Result<Group> {
    if g < 2 {
        return Err(Error::Config(format!(
            "group_size: need at least 2 rollouts per problem, got {g}"
        )));
    }
    let rollouts = (0..g)
        .map(|_| sample_rollout(policy_old, problem, rng, temperature))
        .collect::<Result<Vec<_>>>()?;
    let correct = rollouts.iter().filter(|r| r.correct).count();
    Ok(Group {
        problem: problem.clone(),
        rollouts,
        acc: Accuracy::new(correct, g)?,
    })
}

/// Index sets into the evaluated batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    /// `0 < acc < 1`; every one of these trains.
    pub base: Vec<usize>,
    /// Queued for restructuring: `0 < acc <= tau_med`.
    pub candidates: Vec<usize>,
    /// `acc` in `{0, 1}`.
    pub dropped: Vec<usize>,
}

/// Splits a batch into base, restructuring candidates, and dropped groups.
///
/// With `include_failed_candidates`, groups with `acc == 0` are also queued
/// for restructuring (they still do not train directly).
pub fn partition_batch(
    groups: &[Group],
    thresholds: &Thresholds,
    include_failed_candidates: bool,
) -> Result<Partition> {
    let (_, medium) = {
        thresholds.validate()?;
        thresholds.exact()?
    };
    let mut part = Partition::default();
    for (i, g) in groups.iter().enumerate() {
        if g.acc.is_learnable() {
            part.base.push(i);
        } else {
            part.dropped.push(i);
        }
        let queued = if g.acc.is_zero() {
            include_failed_candidates
        } else {
            g.acc.le(medium) && !g.acc.is_one()
        };
        if queued {
            part.candidates.push(i);
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub group: Group,
    /// Difficulty used for the KL scale. For restructured items this is the
    /// origin problem's label.
    pub difficulty: DifficultyLabel,
    pub restructured: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixBatch {
    pub items: Vec<BatchItem>,
    pub n_base: usize,
}

impl MixBatch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_restructured(&self) -> usize {
        self.items.len() - self.n_base
    }
}

/// Concatenates base items and kept restructured items, base first.
pub fn build_mix(base: Vec<BatchItem>, restructured_kept: Vec<BatchItem>) -> Result<MixBatch> {
    if let Some(bad) = base
        .iter()
        .chain(&restructured_kept)
        .find(|it| !it.group.acc.is_learnable())
    {
        return Err(Error::Invariant(format!(
            "problem {} entered the training batch with accuracy {}/{}",
            bad.group.problem.id, bad.group.acc.correct, bad.group.acc.total
        )));
    }
    let n_base = base.len();
    let mut items = base;
    items.extend(restructured_kept);
    Ok(MixBatch { items, n_base })
}

/// Per-step difficulty counts over the original batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumCounts {
    pub n_batch: usize,
    pub n_failed: usize,
    pub n_hard: usize,
    pub n_medium: usize,
    pub n_easy: usize,
    pub n_mastered: usize,
    pub n_candidates: usize,
    pub n_restructured_kept: usize,
    pub mix_size: usize,
}

impl CurriculumCounts {
    pub fn tally(labels: &[DifficultyLabel]) -> Self {
        let count = |l: DifficultyLabel| labels.iter().filter(|&&x| x == l).count();
        CurriculumCounts {
            n_batch: labels.len(),
            n_failed: count(DifficultyLabel::Failed),
            n_hard: count(DifficultyLabel::Hard),
            n_medium: count(DifficultyLabel::Medium),
            n_easy: count(DifficultyLabel::Easy),
            n_mastered: count(DifficultyLabel::Mastered),
            ..Default::default()
        }
    }

    /// Hard, medium, and easy shares of the batch.
    ///
    /// The hard panel counts every problem at or below `tau_hard` (failed
    /// included); the easy panel counts everything above `tau_med`
    /// (mastered included). The three shares sum to one.
    pub fn ratios(&self) -> Ratios {
        if self.n_batch == 0 {
            return Ratios::default();
        }
        let n = Ratio::new(self.n_batch as i64, 1);
        let share = |k: usize| (Ratio::new(k as i64, 1) / n).to_f64().unwrap_or(0.0);
        Ratios {
            hard_ratio: share(self.n_failed + self.n_hard),
            medium_ratio: share(self.n_medium),
            easy_ratio: share(self.n_easy + self.n_mastered),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub hard_ratio: f64,
    pub medium_ratio: f64,
    pub easy_ratio: f64,
}
