//! Adaptive problem restructuring: hard candidates are simplified, medium
//! candidates diversified, and every rewrite is re-measured and kept only if
//! it still lands strictly between all-wrong and all-right.

use serde::{Deserialize, Serialize};

use crate::curriculum::{classify, evaluate_accuracy, BatchItem, DifficultyLabel, Group, Thresholds};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rng::Rng;
use crate::task::{diversify, eval_chain, simplify, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Both,
    MediumOnly,
    HardOnly,
    None,
}

impl Strategy {
    fn allows(self, label: DifficultyLabel) -> bool {
        match self {
            Strategy::Both => true,
            Strategy::MediumOnly => label == DifficultyLabel::Medium,
            Strategy::HardOnly => label == DifficultyLabel::Hard,
            Strategy::None => false,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Strategy::Both),
            "medium-only" => Ok(Strategy::MediumOnly),
            "hard-only" => Ok(Strategy::HardOnly),
            "none" => Ok(Strategy::None),
            other => Err(Error::Config(format!(
                "restructure.strategy: unknown value {other:?} (expected both, medium-only, hard-only, none)"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Both => "both",
            Strategy::MediumOnly => "medium-only",
            Strategy::HardOnly => "hard-only",
            Strategy::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestructurePolicy {
    pub strategy: Strategy,
    /// Prefix folded by simplification; `None` means `ceil(L/2)`.
    pub simplify_k: Option<usize>,
    pub max_attempts: usize,
}

impl Default for RestructurePolicy {
    fn default() -> Self {
        RestructurePolicy {
            strategy: Strategy::Both,
            simplify_k: None,
            max_attempts: 1,
        }
    }
}

impl RestructurePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::Config("restructure.max_attempts: must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restructured {
    pub problem: Problem,
    pub surface_only: bool,
}

/// Picks the rewrite for a candidate by its label.
///
/// Returns `None` when the strategy excludes the label or the problem has a
/// single op and cannot be simplified.
pub fn restructure_dispatch(
    candidate: &Group,
    label: DifficultyLabel,
    policy: &RestructurePolicy,
    rng: &mut Rng,
) -> Result<Option<Restructured>> {
    if !matches!(label, DifficultyLabel::Hard | DifficultyLabel::Medium) {
        return Err(Error::Invariant(format!(
            "restructuring requested for problem {} labelled {label:?}",
            candidate.problem.id
        )));
    }
    if !policy.strategy.allows(label) {
        return Ok(None);
    }
    if label.is_hard() {
        match simplify(&candidate.problem, rng, policy.simplify_k) {
            Ok(problem) => Ok(Some(Restructured {
                problem,
                surface_only: false,
            })),
            Err(Error::NotSimplifiable { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    } else {
        let d = diversify(&candidate.problem, rng)?;
        Ok(Some(Restructured {
            problem: d.problem,
            surface_only: d.surface_only,
        }))
    }
}

/// Options for the second-stage filter.
#[derive(Debug, Clone, Copy)]
pub struct FilterOptions<'a> {
    pub group_size: usize,
    pub temperature: f64,
    /// Tag kept items with their own measured label instead of the origin's.
    pub remeasure_difficulty: bool,
    pub thresholds: &'a Thresholds,
}

/// Measures a rewrite with fresh rollouts and keeps it iff `0 < acc < 1`.
///
/// Returns the measured group (for rollout accounting) alongside the kept
/// item, if any.
pub fn filter_restructured(
    policy_old: &PolicyParams,
    q_prime: &Problem,
    origin: &Problem,
    origin_label: DifficultyLabel,
    rng: &mut Rng,
    opts: FilterOptions<'_>,
) -> Result<(Group, Option<BatchItem>)> {
    if q_prime.answer != origin.answer || eval_chain(q_prime) != origin.answer {
        return Err(Error::Invariant(format!(
            "rewrite {} changed the answer of {} ({} -> {})",
            q_prime.id,
            origin.id,
            origin.answer,
            eval_chain(q_prime)
        )));
    }
    let group = evaluate_accuracy(policy_old, q_prime, opts.group_size, rng, opts.temperature)?;
    if !group.acc.is_learnable() {
        return Ok((group, None));
    }
    let difficulty = if opts.remeasure_difficulty {
        classify(group.acc, opts.thresholds)?
    } else {
        origin_label
    };
    let item = BatchItem {
        group: group.clone(),
        difficulty,
        restructured: true,
    };
    Ok((group, Some(item)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::Accuracy;
    use crate::policy::{init_policy, PolicyParams, State};
    use crate::rng;
    use crate::task::{Lineage, OpToken};

    fn group_of(problem: Problem) -> Group {
        Group {
            problem,
            rollouts: vec![],
            acc: Accuracy::new(1, 4).unwrap(),
        }
    }

    fn two_step() -> Problem {
        Problem::new(
            "c",
            10,
            2,
            vec![OpToken::add(3), OpToken::mul(2)],
            Lineage::Original,
            0,
        )
        .unwrap()
    }

    #[test]
    fn dispatch_table() {
        let g = group_of(two_step());
        let mut r = rng::from_seed(0);
        let both = RestructurePolicy::default();
        let hard = restructure_dispatch(&g, DifficultyLabel::Hard, &both, &mut r)
            .unwrap()
            .unwrap();
        assert!(matches!(hard.problem.lineage, Lineage::Simplified(_)));
        let med = restructure_dispatch(&g, DifficultyLabel::Medium, &both, &mut r)
            .unwrap()
            .unwrap();
        assert!(matches!(med.problem.lineage, Lineage::Diversified(_)));

        let hard_only = RestructurePolicy {
            strategy: Strategy::HardOnly,
            ..Default::default()
        };
        assert!(restructure_dispatch(&g, DifficultyLabel::Medium, &hard_only, &mut r)
            .unwrap()
            .is_none());
        let medium_only = RestructurePolicy {
            strategy: Strategy::MediumOnly,
            ..Default::default()
        };
        assert!(restructure_dispatch(&g, DifficultyLabel::Hard, &medium_only, &mut r)
            .unwrap()
            .is_none());
        let none = RestructurePolicy {
            strategy: Strategy::None,
            ..Default::default()
        };
        for l in [DifficultyLabel::Hard, DifficultyLabel::Medium] {
            assert!(restructure_dispatch(&g, l, &none, &mut r).unwrap().is_none());
        }
    }

    #[test]
    fn single_op_hard_candidate_is_skipped() {
        let p = Problem::new("s", 10, 2, vec![OpToken::add(3)], Lineage::Original, 0).unwrap();
        let out = restructure_dispatch(
            &group_of(p),
            DifficultyLabel::Hard,
            &RestructurePolicy::default(),
            &mut rng::from_seed(0),
        )
        .unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn dispatch_rejects_other_labels() {
        let g = group_of(two_step());
        for l in [DifficultyLabel::Failed, DifficultyLabel::Easy, DifficultyLabel::Mastered] {
            assert!(restructure_dispatch(&g, l, &RestructurePolicy::default(), &mut rng::from_seed(0))
                .unwrap_err()
                .is_invariant());
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::Both, Strategy::MediumOnly, Strategy::HardOnly, Strategy::None] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("some".parse::<Strategy>().is_err());
    }

    fn opts(t: &Thresholds) -> FilterOptions<'_> {
        FilterOptions {
            group_size: 4,
            temperature: 1.0,
            remeasure_difficulty: false,
            thresholds: t,
        }
    }

    #[test]
    fn filter_discards_unlearnable_rewrites() {
        let t = Thresholds::default();
        let origin = two_step();
        let q = simplify(&origin, &mut rng::from_seed(1), None).unwrap();
        let mut r = rng::from_seed(2);

        // every rollout right: over-simplified
        let solved = PolicyParams::oracle(10, 1e6);
        let (g, kept) =
            filter_restructured(&solved, &q, &origin, DifficultyLabel::Hard, &mut r, opts(&t))
                .unwrap();
        assert!(g.acc.is_one());
        assert!(kept.is_none());

        // every rollout wrong: still unsolvable
        let mut hopeless = init_policy(10);
        let s = State {
            value: q.start,
            op: q.ops[0],
        };
        let row = hopeless.state_index(s) * 10;
        hopeless.logits[row + ((q.answer + 1) % 10) as usize] = 1e6;
        let (g, kept) =
            filter_restructured(&hopeless, &q, &origin, DifficultyLabel::Hard, &mut r, opts(&t))
                .unwrap();
        assert!(g.acc.is_zero());
        assert!(kept.is_none());
    }

    #[test]
    fn filter_keeps_interior_and_tags_origin() {
        let t = Thresholds::default();
        let origin = two_step();
        let q = simplify(&origin, &mut rng::from_seed(1), None).unwrap();
        // split probability mass evenly between the right and one wrong answer
        let mut half = init_policy(10);
        let s = State {
            value: q.start,
            op: q.ops[0],
        };
        let row = half.state_index(s) * 10;
        half.logits[row + q.answer as usize] = 50.0;
        half.logits[row + ((q.answer + 1) % 10) as usize] = 50.0;

        let mut r = rng::from_seed(3);
        let kept = loop {
            let (g, kept) =
                filter_restructured(&half, &q, &origin, DifficultyLabel::Hard, &mut r, opts(&t))
                    .unwrap();
            if g.acc.correct == 2 {
                break kept;
            }
        };
        let item = kept.unwrap();
        assert_eq!(item.difficulty, DifficultyLabel::Hard);
        assert!(item.restructured);

        let mut remeasure = opts(&t);
        remeasure.remeasure_difficulty = true;
        let item = loop {
            let (g, kept) =
                filter_restructured(&half, &q, &origin, DifficultyLabel::Hard, &mut r, remeasure)
                    .unwrap();
            if g.acc.correct == 2 {
                break kept.unwrap();
            }
        };
        assert_eq!(item.difficulty, DifficultyLabel::Medium);
    }

    #[test]
    fn filter_aborts_on_answer_change() {
        let t = Thresholds::default();
        let origin = two_step();
        let wrong = Problem::new("w", 10, 3, vec![OpToken::mul(2)], Lineage::Simplified("c".into()), 0)
            .unwrap();
        let err = filter_restructured(
            &init_policy(10),
            &wrong,
            &origin,
            DifficultyLabel::Hard,
            &mut rng::from_seed(0),
            opts(&t),
        )
        .unwrap_err();
        assert!(err.is_invariant());
    }
}
