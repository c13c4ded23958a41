//! The training loop.
//!
//! Each step: draw a batch, measure every problem with `G` rollouts from the
//! frozen sampling policy, drop groups without mixed outcomes, restructure the
//! hard and medium candidates, re-measure and filter the rewrites, and take
//! one optimizer pass (or `inner_epochs` passes) over the resulting batch.
//! GRPO mode skips restructuring and uses a single KL coefficient.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::curriculum::{
    build_mix, classify, evaluate_accuracy, partition_batch, BatchItem, CurriculumCounts,
    DifficultyLabel, Group, MixBatch, Ratios, Thresholds,
};
use crate::error::{Error, Result};
use crate::metrics::{
    eval_checkpoint, export, write_eval_csv, write_jsonl, CurriculumRow, EvalOptions, EvalReport,
    ExportFormat, PassEstimator,
};
use crate::optimizer::{
    apply_update, batch_loss_and_grad, AdamConfig, AdamState, Mode, ObjectiveConfig,
};
use crate::policy::{init_policy, KlMode, PolicyParams};
use crate::restructure::{filter_restructured, restructure_dispatch, FilterOptions, RestructurePolicy};
use crate::rng::{self, Seeds};
use crate::task::{generate_problem, GenConfig, Problem};

/// Where training problems come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DataSource {
    /// Fresh problems every step.
    #[default]
    Stream,
    /// A pre-generated dataset sampled without replacement, reshuffled each epoch.
    Fixed { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out problems for the final report.
    pub size: usize,
    pub samples: usize,
    pub temperature: f64,
    pub estimator: PassEstimator,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            size: 500,
            samples: 64,
            temperature: 1.0,
            estimator: PassEstimator::Unbiased,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    #[serde(alias = "G")]
    pub group_size: usize,
    pub thresholds: Thresholds,
    pub mode: Mode,
    pub clip_eps: f64,
    pub beta: f64,
    pub lambda_hard: f64,
    pub lambda_non_hard: f64,
    pub dynamic_kl: bool,
    pub kl_mode: KlMode,
    pub inner_epochs: usize,
    /// Tabular-scale learning rate.
    pub lr: f64,
    pub grad_clip: f64,
    pub adam: AdamConfig,
    pub temperature: f64,
    pub restructure: RestructurePolicy,
    /// Also restructure problems with zero accuracy (as hard).
    pub include_failed_candidates: bool,
    /// Tag kept rewrites with their own measured label instead of the origin's.
    pub remeasure_restructured_difficulty: bool,
    pub env: GenConfig,
    pub data: DataSource,
    pub seeds: Seeds,
    /// Validation interval in steps; 0 evaluates only after the last step.
    pub eval_every: usize,
    pub val_size: usize,
    pub val_samples: usize,
    /// Report the final eval on the best validation checkpoint rather than the last.
    pub select_best: bool,
    /// Keep a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub eval: EvalConfig,
    /// Train until this many rollouts were spent instead of for `steps` steps.
    pub rollout_budget: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let obj = ObjectiveConfig::default();
        TrainConfig {
            steps: 200,
            batch_size: 64,
            group_size: 4,
            thresholds: Thresholds::default(),
            mode: obj.mode,
            clip_eps: obj.clip_eps,
            beta: obj.beta,
            lambda_hard: obj.lambda_hard,
            lambda_non_hard: obj.lambda_non_hard,
            dynamic_kl: obj.dynamic_kl,
            kl_mode: obj.kl_mode,
            inner_epochs: obj.inner_epochs,
            lr: 0.1,
            grad_clip: 1.0,
            adam: AdamConfig::default(),
            temperature: 1.0,
            restructure: RestructurePolicy::default(),
            include_failed_candidates: false,
            remeasure_restructured_difficulty: false,
            env: GenConfig::default(),
            data: DataSource::Stream,
            seeds: Seeds::default(),
            eval_every: 50,
            val_size: 200,
            val_samples: 16,
            select_best: true,
            checkpoint_every: 0,
            eval: EvalConfig::default(),
            rollout_budget: None,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            mode: self.mode,
            clip_eps: self.clip_eps,
            beta: self.beta,
            lambda_hard: self.lambda_hard,
            lambda_non_hard: self.lambda_non_hard,
            dynamic_kl: self.dynamic_kl,
            kl_mode: self.kl_mode,
            inner_epochs: self.inner_epochs,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, why: &str| Err(Error::Config(format!("{name}: {why}")));
        if self.rollout_budget.is_none() && self.steps == 0 {
            return field("steps", "must be >= 1");
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be >= 1");
        }
        if self.group_size < 2 {
            return field("group_size", "must be >= 2");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return field("lr", "must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return field("grad_clip", "must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return field("temperature", "must be positive");
        }
        if !(self.eval.temperature > 0.0) {
            return field("eval.temperature", "must be positive");
        }
        if self.eval.samples == 0 {
            return field("eval.samples", "must be >= 1");
        }
        if self.val_samples == 0 {
            return field("val_samples", "must be >= 1");
        }
        if let DataSource::Fixed { size } = self.data {
            if size < self.batch_size {
                return field("data.size", "fixed dataset must hold at least one batch");
            }
        }
        self.thresholds.validate()?;
        self.objective().validate()?;
        self.restructure.validate()?;
        self.env.validate()
    }
}

/// One line of `telemetry.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mode: Mode,
    #[serde(flatten)]
    pub counts: CurriculumCounts,
    #[serde(flatten)]
    pub ratios: Ratios,
    pub n_surface_only: usize,
    pub rollouts: u64,
    pub total_rollouts: u64,
    pub skipped: bool,
    pub loss: f64,
    pub mean_kl: f64,
    pub mean_entropy: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub val_pass1: Option<f64>,
}

impl StepRecord {
    pub fn curriculum_row(&self) -> CurriculumRow {
        CurriculumRow {
            step: self.step,
            hard_ratio: self.ratios.hard_ratio,
            medium_ratio: self.ratios.medium_ratio,
            easy_ratio: self.ratios.easy_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngLogEntry {
    pub step: usize,
    pub env: u64,
    pub rollout: u64,
    pub restructure: u64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub telemetry: Vec<StepRecord>,
    pub final_checkpoint: Checkpoint,
    /// Policy the final report was computed on.
    pub selected_step: usize,
    pub selected_policy: PolicyParams,
    pub checkpoints: Vec<Checkpoint>,
    pub final_eval: Option<EvalReport>,
    pub rng_log: Vec<RngLogEntry>,
    pub total_rollouts: u64,
}

impl RunArtifacts {
    pub fn final_pass1(&self) -> f64 {
        self.final_eval.as_ref().map_or(0.0, EvalReport::pass1)
    }

    pub fn mean_mix_size(&self) -> f64 {
        if self.telemetry.is_empty() {
            return 0.0;
        }
        self.telemetry.iter().map(|r| r.counts.mix_size as f64).sum::<f64>()
            / self.telemetry.len() as f64
    }

    pub fn curriculum_rows(&self) -> Vec<CurriculumRow> {
        self.telemetry.iter().map(StepRecord::curriculum_row).collect()
    }

    /// Writes every artifact under `dir` and returns the list of files.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        let path = dir.join("config.json");
        let text = serde_json::to_string_pretty(&self.config).map_err(|e| Error::json("config", e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(path);

        let path = dir.join("telemetry.jsonl");
        write_jsonl(&path, &self.telemetry)?;
        files.push(path);

        let path = dir.join("curriculum.csv");
        export(&self.curriculum_rows(), &path, ExportFormat::Csv)?;
        files.push(path);

        let path = dir.join("rng.jsonl");
        write_jsonl(&path, &self.rng_log)?;
        files.push(path);

        let path = dir.join("checkpoint.json");
        self.final_checkpoint.save(&path)?;
        files.push(path);

        let path = dir.join("selected.json");
        Checkpoint::new(&self.selected_policy, self.selected_step, None, Some(self.config.seeds))
            .save(&path)?;
        files.push(path);

        for c in &self.checkpoints {
            let path = dir.join(format!("checkpoint-{:05}.json", c.step));
            c.save(&path)?;
            files.push(path);
        }

        if let Some(report) = &self.final_eval {
            let path = dir.join("eval.csv");
            write_eval_csv(report, &path)?;
            files.push(path);
            let path = dir.join("eval.json");
            let text = serde_json::to_string(report).map_err(|e| Error::json("eval report", e))?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            files.push(path);
        }
        Ok(files)
    }
}

const VAL_DOMAIN: u64 = 0x0076_616c;
const TEST_DOMAIN: u64 = 0x7465_7374;
const FIXED_DOMAIN: u64 = 0xda7a;

/// Validation problems, drawn from the eval seed domain.
pub fn validation_set(cfg: &TrainConfig) -> Result<Vec<Problem>> {
    (0..cfg.val_size)
        .map(|i| {
            let mut r = rng::stream(cfg.seeds.eval, &[VAL_DOMAIN, i as u64]);
            generate_problem(format!("val-{i}"), &mut r, &cfg.env)
        })
        .collect()
}

/// Held-out test problems, drawn from the eval seed domain.
pub fn test_set(cfg: &TrainConfig) -> Result<Vec<Problem>> {
    (0..cfg.eval.size)
        .map(|i| {
            let mut r = rng::stream(cfg.seeds.eval, &[TEST_DOMAIN, i as u64]);
            generate_problem(format!("test-{i}"), &mut r, &cfg.env)
        })
        .collect()
}

/// Seed of the final held-out evaluation.
pub fn test_eval_seed(cfg: &TrainConfig) -> u64 {
    rng::derive_seed(cfg.seeds.eval, &[TEST_DOMAIN])
}

struct BatchSource {
    fixed: Option<FixedData>,
}

struct FixedData {
    problems: Vec<Problem>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl BatchSource {
    fn new(cfg: &TrainConfig) -> Result<Self> {
        let fixed = match cfg.data {
            DataSource::Stream => None,
            DataSource::Fixed { size } => {
                let problems = (0..size)
                    .map(|i| {
                        let mut r = rng::stream(cfg.seeds.env, &[FIXED_DOMAIN, i as u64]);
                        generate_problem(format!("d{i}"), &mut r, &cfg.env)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(FixedData {
                    order: Vec::new(),
                    cursor: 0,
                    epoch: 0,
                    problems,
                })
            }
        };
        Ok(BatchSource { fixed })
    }

    fn next_batch(&mut self, cfg: &TrainConfig, step: usize) -> Result<Vec<Problem>> {
        match &mut self.fixed {
            None => (0..cfg.batch_size)
                .map(|i| {
                    let mut r = rng::stream(cfg.seeds.env, &[step as u64, i as u64]);
                    generate_problem(format!("t{step}-{i}"), &mut r, &cfg.env)
                })
                .collect(),
            Some(data) => {
                let mut batch = Vec::with_capacity(cfg.batch_size);
                while batch.len() < cfg.batch_size {
                    if data.cursor == data.order.len() {
                        data.epoch += 1;
                        data.order = (0..data.problems.len()).collect();
                        let mut r = rng::stream(cfg.seeds.env, &[FIXED_DOMAIN, u64::MAX, data.epoch]);
                        data.order.shuffle(&mut r);
                        data.cursor = 0;
                    }
                    batch.push(data.problems[data.order[data.cursor]].clone());
                    data.cursor += 1;
                }
                Ok(batch)
            }
        }
    }
}

/// Outcome of building one step's training batch.
#[derive(Debug, Clone)]
pub struct StepBatch {
    pub groups: Vec<Group>,
    pub labels: Vec<DifficultyLabel>,
    pub mix: MixBatch,
    pub counts: CurriculumCounts,
    pub n_surface_only: usize,
    pub rollouts: u64,
}

/// Measures a batch and assembles the mixed training batch for one step.
pub fn build_step_batch(
    cfg: &TrainConfig,
    policy_old: &PolicyParams,
    problems: &[Problem],
    step: usize,
) -> Result<StepBatch> {
    let g = cfg.group_size;
    let groups = problems
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = rng::stream(cfg.seeds.rollout, &[step as u64, i as u64, 0]);
            evaluate_accuracy(policy_old, p, g, &mut r, cfg.temperature)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = groups
        .iter()
        .map(|gr| classify(gr.acc, &cfg.thresholds))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = CurriculumCounts::tally(&labels);
    let mut rollouts = (g * groups.len()) as u64;
    let mut n_surface_only = 0;

    let base_item = |i: usize| BatchItem {
        group: groups[i].clone(),
        difficulty: labels[i],
        restructured: false,
    };

    let mix = match cfg.mode {
        Mode::Grpo => {
            let base = (0..groups.len())
                .filter(|&i| groups[i].acc.is_learnable())
                .map(base_item)
                .collect();
            build_mix(base, Vec::new())?
        }
        Mode::Clpo => {
            let part = partition_batch(&groups, &cfg.thresholds, cfg.include_failed_candidates)?;
            let base = part.base.iter().map(|&i| base_item(i)).collect();
            let mut kept = Vec::new();
            let opts = FilterOptions {
                group_size: g,
                temperature: cfg.temperature,
                remeasure_difficulty: cfg.remeasure_restructured_difficulty,
                thresholds: &cfg.thresholds,
            };
            for &i in &part.candidates {
                // zero-accuracy candidates only arrive here with include_failed_candidates
                let label = match labels[i] {
                    DifficultyLabel::Failed => DifficultyLabel::Hard,
                    l => l,
                };
                for attempt in 0..cfg.restructure.max_attempts {
                    let path = [step as u64, i as u64, attempt as u64];
                    let mut rr = rng::stream(cfg.seeds.restructure, &path);
                    let Some(rewrite) = restructure_dispatch(&groups[i], label, &cfg.restructure, &mut rr)?
                    else {
                        break;
                    };
                    if rewrite.surface_only {
                        n_surface_only += 1;
                    }
                    let mut r = rng::stream(
                        cfg.seeds.rollout,
                        &[step as u64, i as u64, 1 + attempt as u64],
                    );
                    let (_, item) = filter_restructured(
                        policy_old,
                        &rewrite.problem,
                        &groups[i].problem,
                        label,
                        &mut r,
                        opts,
                    )?;
                    rollouts += g as u64;
                    if let Some(item) = item {
                        kept.push(item);
                        break;
                    }
                }
            }
            counts.n_candidates = part.candidates.len();
            build_mix(base, kept)?
        }
    };
    counts.n_restructured_kept = mix.n_restructured();
    counts.mix_size = mix.len();

    if counts.mix_size > counts.n_batch + counts.n_candidates {
        return Err(Error::Invariant(format!(
            "step {step}: mix size {} exceeds batch {} + candidates {}",
            counts.mix_size, counts.n_batch, counts.n_candidates
        )));
    }
    Ok(StepBatch {
        groups,
        labels,
        mix,
        counts,
        n_surface_only,
        rollouts,
    })
}

fn validate_pass1(cfg: &TrainConfig, theta: &PolicyParams, val: &[Problem], step: usize) -> Result<f64> {
    let opts = EvalOptions {
        samples: cfg.val_samples,
        seed: rng::derive_seed(cfg.seeds.eval, &[VAL_DOMAIN, step as u64]),
        temperature: cfg.eval.temperature,
        estimator: PassEstimator::Unbiased,
        checkpoint_id: format!("step-{step}"),
    };
    Ok(eval_checkpoint(theta, val, &opts)?.pass1())
}

/// Options that only affect what a run keeps, not what it computes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Skip the final held-out evaluation.
    pub skip_final_eval: bool,
}

pub fn train(cfg: &TrainConfig) -> Result<RunArtifacts> {
    train_with(cfg, RunOptions::default())
}

pub fn train_with(cfg: &TrainConfig, run: RunOptions) -> Result<RunArtifacts> {
    cfg.validate()?;
    let objective = cfg.objective();
    let mut theta = init_policy(cfg.env.modulus);
    let theta_ref = theta.snapshot();
    let mut adam_state = AdamState::new(theta.n_params());
    let mut source = BatchSource::new(cfg)?;
    let val = validation_set(cfg)?;

    let mut telemetry = Vec::new();
    let mut rng_log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut total_rollouts = 0u64;
    let mut best: Option<(f64, usize, PolicyParams)> = None;

    let mut step = 0usize;
    loop {
        let done = match cfg.rollout_budget {
            Some(budget) => total_rollouts >= budget,
            None => step >= cfg.steps,
        };
        if done {
            break;
        }
        step += 1;
        let theta_old = theta.snapshot();
        rng_log.push(RngLogEntry {
            step,
            env: rng::derive_seed(cfg.seeds.env, &[step as u64]),
            rollout: rng::derive_seed(cfg.seeds.rollout, &[step as u64]),
            restructure: rng::derive_seed(cfg.seeds.restructure, &[step as u64]),
        });

        let problems = source.next_batch(cfg, step)?;
        let batch = build_step_batch(cfg, &theta_old, &problems, step).map_err(|e| match e {
            Error::Invariant(m) => Error::Invariant(format!("step {step}: {m}")),
            other => other,
        })?;
        total_rollouts += batch.rollouts;

        let mut record = StepRecord {
            step,
            mode: cfg.mode,
            counts: batch.counts,
            ratios: batch.counts.ratios(),
            n_surface_only: batch.n_surface_only,
            rollouts: batch.rollouts,
            total_rollouts,
            skipped: batch.mix.is_empty(),
            loss: 0.0,
            mean_kl: 0.0,
            mean_entropy: 0.0,
            mean_ratio: 0.0,
            clip_frac: 0.0,
            grad_norm: 0.0,
            val_pass1: None,
        };

        if !batch.mix.is_empty() {
            for epoch in 0..objective.inner_epochs {
                let acc = batch_loss_and_grad(&batch.mix, &theta, &theta_old, &theta_ref, &objective)
                    .map_err(|e| match e {
                        Error::Invariant(m) => Error::Invariant(format!("step {step}: {m}")),
                        other => other,
                    })?;
                let norm = apply_update(&mut theta, &acc, &mut adam_state, cfg.lr, cfg.grad_clip, &cfg.adam)?;
                if epoch == 0 {
                    record.loss = acc.loss_value;
                    record.grad_norm = norm;
                    record.mean_kl = acc.mean_kl();
                    record.mean_entropy = acc.mean_entropy();
                }
                record.mean_ratio = acc.mean_ratio();
                record.clip_frac = acc.clip_frac();
            }
            if !theta.is_finite() {
                return Err(Error::Invariant(format!("step {step}: non-finite parameters")));
            }
        }

        let last = match cfg.rollout_budget {
            Some(budget) => total_rollouts >= budget,
            None => step == cfg.steps,
        };
        let eval_now = last || (cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every));
        if eval_now && !val.is_empty() {
            let p1 = validate_pass1(cfg, &theta, &val, step)?;
            record.val_pass1 = Some(p1);
            if best.as_ref().is_none_or(|(b, _, _)| p1 > *b) {
                best = Some((p1, step, theta.clone()));
            }
        }
        if cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every) && !last {
            checkpoints.push(Checkpoint::new(&theta, step, Some(&adam_state), Some(cfg.seeds)));
        }
        telemetry.push(record);
    }

    let final_checkpoint = Checkpoint::new(&theta, step, Some(&adam_state), Some(cfg.seeds));
    let (selected_step, selected_policy) = match best {
        Some((_, s, p)) if cfg.select_best => (s, p),
        _ => (step, theta),
    };
    let final_eval = if run.skip_final_eval || cfg.eval.size == 0 {
        None
    } else {
        let test = test_set(cfg)?;
        let opts = EvalOptions {
            samples: cfg.eval.samples,
            seed: test_eval_seed(cfg),
            temperature: cfg.eval.temperature,
            estimator: cfg.eval.estimator,
            checkpoint_id: format!("step-{selected_step}"),
        };
        Some(eval_checkpoint(&selected_policy, &test, &opts)?)
    };

    Ok(RunArtifacts {
        config: cfg.clone(),
        telemetry,
        final_checkpoint,
        selected_step,
        selected_policy,
        checkpoints,
        final_eval,
        rng_log,
        total_rollouts,
    })
}

/// How a CLPO run and its GRPO baseline are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Same number of steps.
    Steps,
    /// GRPO trains until it has spent as many rollouts as the CLPO run.
    Rollouts,
}

/// Runs CLPO, then a GRPO baseline matched by steps or by rollout budget.
pub fn compare(cfg: &TrainConfig, matching: Matching) -> Result<(RunArtifacts, RunArtifacts)> {
    let clpo_cfg = TrainConfig {
        mode: Mode::Clpo,
        rollout_budget: None,
        ..cfg.clone()
    };
    let clpo = train(&clpo_cfg)?;
    let mut grpo_cfg = TrainConfig {
        mode: Mode::Grpo,
        ..clpo_cfg
    };
    if matching == Matching::Rollouts {
        grpo_cfg.rollout_budget = Some(clpo.total_rollouts);
    }
    let grpo = train(&grpo_cfg)?;
    Ok((clpo, grpo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            steps: 6,
            batch_size: 16,
            eval_every: 3,
            val_size: 20,
            val_samples: 4,
            eval: EvalConfig {
                size: 20,
                samples: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_and_json() {
        let cfg = TrainConfig::default();
        assert_eq!((cfg.steps, cfg.batch_size, cfg.group_size), (200, 64, 4));
        assert_eq!((cfg.thresholds.hard, cfg.thresholds.medium), (0.3, 0.7));
        assert_eq!((cfg.lambda_hard, cfg.lambda_non_hard, cfg.beta), (0.3, 1.0, 0.001));
        assert_eq!((cfg.grad_clip, cfg.temperature, cfg.clip_eps), (1.0, 1.0, 0.2));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);

        let partial = TrainConfig::from_json(r#"{"mode": "grpo", "G": 8}"#).unwrap();
        assert_eq!(partial.mode, Mode::Grpo);
        assert_eq!(partial.group_size, 8);

        let err = TrainConfig::from_json(r#"{"batch_sz": 3}"#).unwrap_err();
        assert!(err.to_string().contains("batch_sz"), "{err}");
        let err = TrainConfig::from_json(r#"{"group_size": 1}"#).unwrap_err();
        assert!(err.to_string().contains("group_size"), "{err}");
        let err = TrainConfig::from_json(r#"{"thresholds": {"hard": 0.8, "medium": 0.7}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("thresholds"), "{err}");
    }

    #[test]
    fn telemetry_is_complete_and_consistent() {
        let cfg = small();
        let run = train(&cfg).unwrap();
        assert_eq!(run.telemetry.len(), cfg.steps);
        let mut total = 0;
        for (i, r) in run.telemetry.iter().enumerate() {
            assert_eq!(r.step, i + 1);
            let c = r.counts;
            assert_eq!(c.n_batch, 16);
            assert_eq!(c.n_failed + c.n_hard + c.n_medium + c.n_easy + c.n_mastered, 16);
            let s = r.ratios.hard_ratio + r.ratios.medium_ratio + r.ratios.easy_ratio;
            assert!((s - 1.0).abs() < 1e-12);
            assert!(c.mix_size <= c.n_batch + c.n_candidates);
            assert!(c.n_restructured_kept <= c.n_candidates);
            total += r.rollouts;
            assert_eq!(r.total_rollouts, total);
        }
        assert_eq!(run.total_rollouts, total);
        assert!(run.telemetry[2].val_pass1.is_some());
        assert!(run.final_eval.is_some());
    }

    #[test]
    fn reference_policy_is_untouched_and_old_policy_tracks_theta() {
        // the first step starts from the uniform policy: every ratio is 1
        let cfg = small();
        let run = train(&cfg).unwrap();
        let first = run.telemetry.iter().find(|r| !r.skipped).unwrap();
        assert_eq!(first.mean_ratio, 1.0);
        assert_eq!(first.mean_kl, 0.0);
        // single inner epoch: the sampling policy equals theta when the update is computed
        assert!(run.telemetry.iter().filter(|r| !r.skipped).all(|r| r.mean_ratio == 1.0));
    }

    #[test]
    fn empty_mix_leaves_parameters_alone() {
        // a policy that always answers correctly would master everything; emulate with G groups
        // of a one-value modulus-2 environment where the uniform policy is right half the time
        let cfg = TrainConfig {
            env: GenConfig {
                modulus: 2,
                length_range: (1, 1),
                op_mix: [0.0, 0.0, 1.0],
                max_chain_length: 8,
            },
            ..small()
        };
        let run = train(&cfg).unwrap();
        for r in run.telemetry.iter().filter(|r| r.skipped) {
            assert_eq!(r.counts.mix_size, 0);
            assert_eq!(r.loss, 0.0);
        }
    }

    #[test]
    fn skipped_steps_do_not_change_theta() {
        let cfg = TrainConfig {
            batch_size: 1,
            steps: 1,
            eval: EvalConfig {
                size: 0,
                ..Default::default()
            },
            val_size: 0,
            ..small()
        };
        // search for a seed whose single problem is unlearnable at step 1
        for base in 0..200 {
            let cfg = TrainConfig {
                seeds: Seeds::from_base(base),
                ..cfg.clone()
            };
            let run = train(&cfg).unwrap();
            if run.telemetry[0].skipped {
                assert_eq!(run.final_checkpoint.policy, init_policy(10));
                assert_eq!(run.final_checkpoint.adam.as_ref().unwrap().t, 0);
                return;
            }
        }
        panic!("no skipped step found");
    }

    #[test]
    fn fixed_dataset_cycles_through_every_problem() {
        let cfg = TrainConfig {
            data: DataSource::Fixed { size: 32 },
            ..small()
        };
        let mut src = BatchSource::new(&cfg).unwrap();
        let mut seen: Vec<String> = (1..=2)
            .flat_map(|s| src.next_batch(&cfg, s).unwrap())
            .map(|p| p.id)
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 32);
        assert!(train(&cfg).is_ok());
    }

    #[test]
    fn rollout_budget_stops_training() {
        let cfg = TrainConfig {
            rollout_budget: Some(500),
            ..small()
        };
        let run = train(&cfg).unwrap();
        assert!(run.total_rollouts >= 500);
        let before_last = run.total_rollouts - run.telemetry.last().unwrap().rollouts;
        assert!(before_last < 500);
    }

    #[test]
    fn artifacts_write_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            checkpoint_every: 2,
            ..small()
        };
        let run = train(&cfg).unwrap();
        run.write(dir.path()).unwrap();
        for f in ["config.json", "telemetry.jsonl", "curriculum.csv", "checkpoint.json", "eval.csv", "rng.jsonl", "checkpoint-00002.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: Vec<StepRecord> = crate::metrics::read_jsonl(&dir.path().join("telemetry.jsonl")).unwrap();
        assert_eq!(back, run.telemetry);
        let cfg_back = TrainConfig::load(&dir.path().join("config.json")).unwrap();
        assert_eq!(cfg_back, cfg);
    }
}
