//! Curriculum-guided policy optimization (CLPO) on a tabular softmax policy.
//!
//! The crate trains a policy over verifiable modular-arithmetic chains. Each
//! training step measures per-problem accuracy from on-policy rollouts, sorts
//! the batch into difficulty buckets, rewrites hard and medium problems into
//! answer-preserving variants, keeps only groups with mixed outcomes, and
//! optimizes a clipped group-relative surrogate whose KL penalty is scaled by
//! the origin difficulty. A plain GRPO loop is available as a baseline.
//!
//! Module map:
//! - [`task`]: problem generation, the exact answer oracle, simplify/diversify rewrites
//! - [`policy`]: logit table, sampling, log-probabilities, KL, analytic gradients
//! - [`curriculum`]: accuracy groups, difficulty labels, batch partitioning
//! - [`restructure`]: difficulty dispatch and post-rewrite filtering
//! - [`optimizer`]: advantages, surrogate objective, loss gradient, Adam update
//! - [`metrics`]: pass@k, avg@k, evaluation reports, CSV/JSONL export
//! - [`trainer`]: the full training loop, telemetry, compute-matched baselines
//! - [`ablation`]: strategy / range / KL-scale grids and the comparison table
//! - [`checkpoint`]: bit-exact JSON checkpoints

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod checkpoint;
pub mod curriculum;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod policy;
pub mod restructure;
pub mod rng;
pub mod task;
pub mod trainer;

pub use error::{Error, Result};
