//! Ablation grids over restructuring strategy, difficulty range and the
//! hard-item KL scale.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::Thresholds;
use crate::error::{Error, Result};
use crate::optimizer::Mode;
use crate::restructure::Strategy;
use crate::rng::Seeds;
use crate::trainer::{train, RunArtifacts, TrainConfig};

/// A cross product of strategies, threshold pairs and `lambda_hard` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub name: String,
    pub strategies: Vec<Strategy>,
    pub ranges: Vec<Thresholds>,
    pub alphas: Vec<f64>,
    /// Overrides the base group size for this grid.
    #[serde(default)]
    pub group_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Strategy,
    Range,
    Alpha,
    All,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strategy" | "paper-4.3-strategy" => Ok(Preset::Strategy),
            "range" | "paper-4.3-range" => Ok(Preset::Range),
            "alpha" | "paper-4.3-alpha" => Ok(Preset::Alpha),
            "all" | "paper-4.3-all" => Ok(Preset::All),
            other => Err(Error::Config(format!(
                "preset: unknown {other:?} (expected strategy, range, alpha or all)"
            ))),
        }
    }
}

/// Medium range used by the strategy grid.
pub const ABLATION_RANGE: (f64, f64) = (0.25, 0.75);
/// Rollouts per problem in the strategy and range grids.
pub const ABLATION_GROUP_SIZE: usize = 8;
/// Samples per eval problem (reported as avg@32).
pub const ABLATION_EVAL_SAMPLES: usize = 32;

impl Preset {
    pub fn grids(self, base: &TrainConfig) -> Vec<Grid> {
        let range = Thresholds {
            hard: ABLATION_RANGE.0,
            medium: ABLATION_RANGE.1,
        };
        let strategy = Grid {
            name: "strategy".into(),
            strategies: vec![Strategy::Both, Strategy::MediumOnly, Strategy::HardOnly],
            ranges: vec![range],
            alphas: vec![base.lambda_hard],
            group_size: Some(ABLATION_GROUP_SIZE),
        };
        let ranges = Grid {
            name: "range".into(),
            strategies: vec![Strategy::Both],
            ranges: [(0.125, 0.875), (0.25, 0.75), (0.375, 0.625)]
                .into_iter()
                .map(|(hard, medium)| Thresholds { hard, medium })
                .collect(),
            alphas: vec![base.lambda_hard],
            group_size: Some(ABLATION_GROUP_SIZE),
        };
        let alpha = Grid {
            name: "alpha".into(),
            strategies: vec![base.restructure.strategy],
            ranges: vec![base.thresholds],
            alphas: vec![0.1, 0.3, 0.5, 0.8, 1.0],
            group_size: None,
        };
        match self {
            Preset::Strategy => vec![strategy],
            Preset::Range => vec![ranges],
            Preset::Alpha => vec![alpha],
            Preset::All => vec![strategy, ranges, alpha],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub grid: String,
    pub strategy: Strategy,
    pub thresholds: Thresholds,
    pub alpha: f64,
    pub group_size: usize,
}

impl Cell {
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}-{}-a{}",
            self.grid, self.strategy, self.thresholds.hard, self.thresholds.medium, self.alpha
        )
    }

    pub fn config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.mode = Mode::Clpo;
        cfg.restructure.strategy = self.strategy;
        cfg.thresholds = self.thresholds;
        cfg.lambda_hard = self.alpha;
        cfg.group_size = self.group_size;
        cfg.seeds = Seeds::from_base(seed);
        cfg.eval.samples = ABLATION_EVAL_SAMPLES;
        cfg.rollout_budget = None;
        cfg
    }
}

pub fn expand(grids: &[Grid], base: &TrainConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for g in grids {
        if g.strategies.is_empty() || g.ranges.is_empty() || g.alphas.is_empty() {
            return Err(Error::Config(format!("grid {}: every axis needs a value", g.name)));
        }
        for &strategy in &g.strategies {
            for &thresholds in &g.ranges {
                for &alpha in &g.alphas {
                    cells.push(Cell {
                        grid: g.name.clone(),
                        strategy,
                        thresholds,
                        alpha,
                        group_size: g.group_size.unwrap_or(base.group_size),
                    });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    Ok(cells)
}

/// One aggregate row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub grid: String,
    pub strategy: Strategy,
    pub tau_hard: f64,
    pub tau_med: f64,
    pub alpha: f64,
    pub group_size: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub avg_mean: f64,
    pub avg_std: f64,
    pub pass1_mean: f64,
    pub pass1_std: f64,
    pub candidates_mean: f64,
    pub mix_size_mean: f64,
    pub failures: String,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Per cell, the successful runs in seed order.
    pub runs: Vec<Vec<RunArtifacts>>,
}

impl AblationResult {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| r.n_ok == 0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs every cell for seeds `0..n_seeds`, writing per-run artifacts under
/// `out/<cell>/seed-<k>` when `out` is given.
///
/// A failing run is recorded in its row and the grid moves on.
pub fn run_ablation(
    grids: &[Grid],
    base: &TrainConfig,
    n_seeds: usize,
    out: Option<&Path>,
) -> Result<AblationResult> {
    if n_seeds == 0 {
        return Err(Error::Config("seeds: must be >= 1".into()));
    }
    let cells = expand(grids, base)?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for cell in &cells {
        let mut ok = Vec::new();
        let mut failures = Vec::new();
        for seed in 0..n_seeds as u64 {
            let cfg = cell.config(base, seed);
            let run = train(&cfg).and_then(|run| {
                if let Some(dir) = out {
                    run.write(&dir.join(cell.label()).join(format!("seed-{seed}")))?;
                }
                Ok(run)
            });
            match run {
                Ok(run) => ok.push(run),
                Err(e) => failures.push(format!("seed {seed}: {e}")),
            }
        }
        let metric = |f: &dyn Fn(&RunArtifacts) -> f64| mean_std(&ok.iter().map(f).collect::<Vec<_>>());
        let (avg_mean, avg_std) = metric(&|r| r.final_eval.as_ref().map_or(0.0, |e| e.avg_at_n));
        let (pass1_mean, pass1_std) = metric(&|r| r.final_pass1());
        let (candidates_mean, _) = metric(&|r| {
            r.telemetry.iter().map(|t| t.counts.n_candidates as f64).sum::<f64>()
                / r.telemetry.len().max(1) as f64
        });
        let (mix_size_mean, _) = metric(&RunArtifacts::mean_mix_size);
        rows.push(AblationRow {
            grid: cell.grid.clone(),
            strategy: cell.strategy,
            tau_hard: cell.thresholds.hard,
            tau_med: cell.thresholds.medium,
            alpha: cell.alpha,
            group_size: cell.group_size,
            n_ok: ok.len(),
            n_failed: failures.len(),
            avg_mean,
            avg_std,
            pass1_mean,
            pass1_std,
            candidates_mean,
            mix_size_mean,
            failures: failures.join("; "),
        });
        runs.push(ok);
    }
    Ok(AblationResult { rows, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EvalConfig;

    fn tiny() -> TrainConfig {
        TrainConfig {
            steps: 3,
            batch_size: 8,
            val_size: 4,
            val_samples: 2,
            eval: EvalConfig {
                size: 10,
                samples: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn preset_cardinality() {
        let base = TrainConfig::default();
        let n = |p: Preset| expand(&p.grids(&base), &base).unwrap().len();
        assert_eq!(n(Preset::Strategy), 3);
        assert_eq!(n(Preset::Range), 3);
        assert_eq!(n(Preset::Alpha), 5);
        assert_eq!(n(Preset::All), 11);
        assert_eq!("alpha".parse::<Preset>().unwrap(), Preset::Alpha);
        assert!("beta".parse::<Preset>().is_err());
    }

    #[test]
    fn strategy_grid_five_seeds_gives_three_rows() {
        let base = tiny();
        let res = run_ablation(&Preset::Strategy.grids(&base), &base, 5, None).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert!(res.rows.iter().all(|r| r.n_ok == 5 && r.n_failed == 0));
        assert_eq!(res.runs.iter().map(Vec::len).sum::<usize>(), 15);
    }

    #[test]
    fn alpha_one_cell_is_static_kl() {
        let base = tiny();
        let cells = expand(&Preset::Alpha.grids(&base), &base).unwrap();
        let cfg = cells.iter().find(|c| c.alpha == 1.0).unwrap().config(&base, 0);
        assert_eq!(cfg.lambda_hard, cfg.lambda_non_hard);
    }

    #[test]
    fn failures_are_recorded_and_grid_continues() {
        let base = tiny();
        let grids = vec![Grid {
            name: "bad".into(),
            strategies: vec![Strategy::Both],
            // inverted range fails validation for every seed
            ranges: vec![Thresholds { hard: 0.9, medium: 0.1 }, Thresholds::default()],
            alphas: vec![0.3],
            group_size: None,
        }];
        let res = run_ablation(&grids, &base, 2, None).unwrap();
        assert_eq!(res.rows[0].n_failed, 2);
        assert!(!res.rows[0].failures.is_empty());
        assert_eq!(res.rows[1].n_ok, 2);
        assert!(!res.all_failed());
    }

    #[test]
    fn narrower_range_shrinks_candidates_on_matched_seeds() {
        use crate::policy::PolicyParams;
        use crate::task::generate_problem;
        use crate::trainer::build_step_batch;
        // same policy, batch and rollouts: only the thresholds differ
        let policy = PolicyParams::oracle(10, 4.0);
        let mut totals = [0usize; 3];
        for seed in 0..5u64 {
            let mut r = crate::rng::from_seed(seed);
            let cfg = TrainConfig::default();
            let problems: Vec<_> = (0..64)
                .map(|i| generate_problem(format!("p{i}"), &mut r, &cfg.env).unwrap())
                .collect();
            let ranges = [(0.125, 0.875), (0.25, 0.75), (0.375, 0.625)];
            let counts: Vec<usize> = ranges
                .iter()
                .map(|&(hard, medium)| {
                    let cfg = TrainConfig {
                        group_size: 8,
                        thresholds: Thresholds { hard, medium },
                        seeds: Seeds::from_base(seed),
                        ..cfg.clone()
                    };
                    build_step_batch(&cfg, &policy, &problems, 1).unwrap().counts.n_candidates
                })
                .collect();
            assert!(counts[2] <= counts[1] && counts[1] <= counts[0], "{counts:?}");
            for (t, c) in totals.iter_mut().zip(&counts) {
                *t += c;
            }
        }
        assert!(totals[2] < totals[1] && totals[1] < totals[0], "{totals:?}");
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let base = tiny();
        let res = run_ablation(&Preset::Range.grids(&base), &base, 1, Some(dir.path())).unwrap();
        let path = dir.path().join("ablation.csv");
        res.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("grid,strategy,tau_hard"));
    }
}
