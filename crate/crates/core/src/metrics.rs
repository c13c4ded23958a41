//! pass@k / avg@k evaluation and telemetry export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{One, ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{sample_rollout, PolicyParams};
use crate::rng;
use crate::task::Problem;

/// k values reported on every evaluation: 1, 2, 4, ..., 64.
pub const PASS_KS: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// Unbiased pass@k as an exact rational: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k_exact(n: usize, c: usize, k: usize) -> Result<Ratio<BigInt>> {
    if c > n {
        return Err(Error::Input(format!("pass@k: c = {c} exceeds n = {n}")));
    }
    if k == 0 || k > n {
        return Err(Error::Input(format!("pass@k: k = {k} outside [1, {n}]")));
    }
    let miss = Ratio::new(binomial(n - c, k), binomial(n, k));
    Ok(Ratio::one() - miss)
}

pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    let r = pass_at_k_exact(n, c, k)?;
    r.to_f64()
        .ok_or_else(|| Error::Invariant("pass@k ratio not representable".into()))
}

/// 1 if any of the first `k` samples is correct.
pub fn pass_at_k_first(outcomes: &[bool], k: usize) -> Result<f64> {
    if k == 0 || k > outcomes.len() {
        return Err(Error::Input(format!(
            "pass@k: k = {k} outside [1, {}]",
            outcomes.len()
        )));
    }
    Ok(if outcomes[..k].iter().any(|&b| b) { 1.0 } else { 0.0 })
}

/// Expected mean correctness of a uniform size-`k` subset, i.e. `c / n`.
pub fn avg_at_k(outcomes: &[bool], k: usize) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Input("avg@k: no outcomes".into()));
    }
    if k == 0 || k > outcomes.len() {
        return Err(Error::Input(format!(
            "avg@k: k = {k} outside [1, {}]",
            outcomes.len()
        )));
    }
    let c = outcomes.iter().filter(|&&b| b).count();
    Ok(c as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassEstimator {
    /// `1 - C(n-c,k)/C(n,k)`.
    #[default]
    Unbiased,
    /// Any correct answer among the first `k` samples drawn.
    FirstK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEval {
    pub problem_id: String,
    pub n: usize,
    pub c: usize,
    /// `pass@k` for each entry of [`EvalReport::ks`] with `k <= n`.
    pub pass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_id: String,
    pub eval_seed: u64,
    pub temperature: f64,
    pub estimator: PassEstimator,
    pub ks: Vec<usize>,
    pub problems: Vec<ProblemEval>,
    /// Mean over problems of pass@k, aligned with `ks`.
    pub pass_at_k: Vec<f64>,
    /// Mean fraction of correct samples (avg@n).
    pub avg_at_n: f64,
}

impl EvalReport {
    pub fn pass1(&self) -> f64 {
        self.pass_at(1).unwrap_or(0.0)
    }

    pub fn pass_at(&self, k: usize) -> Option<f64> {
        self.ks
            .iter()
            .position(|&x| x == k)
            .and_then(|i| self.pass_at_k.get(i).copied())
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    pub temperature: f64,
    pub estimator: PassEstimator,
    pub checkpoint_id: String,
}

/// Samples `opts.samples` rollouts per problem and fills an [`EvalReport`].
///
/// Problem `i` draws from its own stream derived from `(seed, i)`.
pub fn eval_checkpoint(
    theta: &PolicyParams,
    eval_set: &[Problem],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let n = opts.samples;
    if n == 0 {
        return Err(Error::Config("eval.samples: must be >= 1".into()));
    }
    let ks: Vec<usize> = PASS_KS.iter().copied().filter(|&k| k <= n).collect();
    let mut problems = Vec::with_capacity(eval_set.len());
    let mut correct_total = 0usize;
    for (i, p) in eval_set.iter().enumerate() {
        let mut r = rng::stream(opts.seed, &[i as u64]);
        let outcomes = (0..n)
            .map(|_| sample_rollout(theta, p, &mut r, opts.temperature).map(|ro| ro.correct))
            .collect::<Result<Vec<bool>>>()?;
        let c = outcomes.iter().filter(|&&b| b).count();
        correct_total += c;
        let pass = ks
            .iter()
            .map(|&k| match opts.estimator {
                PassEstimator::Unbiased => pass_at_k(n, c, k),
                PassEstimator::FirstK => pass_at_k_first(&outcomes, k),
            })
            .collect::<Result<Vec<f64>>>()?;
        problems.push(ProblemEval {
            problem_id: p.id.clone(),
            n,
            c,
            pass,
        });
    }
    let count = problems.len().max(1) as f64;
    let pass_at_k = (0..ks.len())
        .map(|j| problems.iter().map(|pe| pe.pass[j]).sum::<f64>() / count)
        .collect();
    Ok(EvalReport {
        checkpoint_id: opts.checkpoint_id.clone(),
        eval_seed: opts.seed,
        temperature: opts.temperature,
        estimator: opts.estimator,
        ks,
        problems,
        pass_at_k,
        avg_at_n: correct_total as f64 / (count * n as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

/// A flat record with a fixed column order.
pub trait Record: Serialize + DeserializeOwned {
    const COLUMNS: &'static [&'static str];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRow {
    pub step: usize,
    pub hard_ratio: f64,
    pub medium_ratio: f64,
    pub easy_ratio: f64,
}

impl Record for CurriculumRow {
    const COLUMNS: &'static [&'static str] = &["step", "hard_ratio", "medium_ratio", "easy_ratio"];
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

pub fn export<R: Record>(records: &[R], path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(create(path)?);
            w.write_record(R::COLUMNS).map_err(|e| csv_err(path, e))?;
            for r in records {
                w.serialize(r).map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        ExportFormat::Jsonl => write_jsonl(path, records),
    }
}

pub fn import<R: Record>(path: &Path, format: ExportFormat) -> Result<Vec<R>> {
    match format {
        ExportFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
            r.deserialize()
                .map(|row| row.map_err(|e| csv_err(path, e)))
                .collect()
        }
        ExportFormat::Jsonl => read_jsonl(path),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json(path.display().to_string(), e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e))?,
        );
    }
    Ok(out)
}

/// Writes `problem_id,n,c,pass1,pass2,...,pass64`. Entries with `k > n` are blank.
pub fn write_eval_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    let mut header = vec!["problem_id".to_string(), "n".into(), "c".into()];
    header.extend(PASS_KS.iter().map(|k| format!("pass{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for pe in &report.problems {
        let mut row = vec![pe.problem_id.clone(), pe.n.to_string(), pe.c.to_string()];
        for k in PASS_KS {
            let cell = report
                .ks
                .iter()
                .position(|&x| x == k)
                .map(|j| pe.pass[j].to_string())
                .unwrap_or_default();
            row.push(cell);
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-problem rows read back from an eval CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCsvRow {
    pub problem_id: String,
    pub n: usize,
    pub c: usize,
    /// `(k, pass@k)` for every non-blank column.
    pub pass: Vec<(usize, f64)>,
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalCsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let ks: Vec<Option<usize>> = header
        .iter()
        .map(|h| h.strip_prefix("pass").and_then(|k| k.parse().ok()))
        .collect();
    let bad = |what: &str| Error::Input(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("row"));
        let mut row = EvalCsvRow {
            problem_id: field(0)?.to_string(),
            n: field(1)?.parse().map_err(|_| bad("n"))?,
            c: field(2)?.parse().map_err(|_| bad("c"))?,
            pass: Vec::new(),
        };
        for (i, k) in ks.iter().enumerate() {
            if let (Some(k), Some(v)) = (k, rec.get(i).filter(|v| !v.is_empty())) {
                row.pass.push((*k, v.parse().map_err(|_| bad("pass value"))?));
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Mean pass@k over eval CSV rows, for each `k` present in every row.
pub fn mean_pass_curve(rows: &[EvalCsvRow]) -> Vec<(usize, f64)> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    first
        .pass
        .iter()
        .map(|&(k, _)| k)
        .filter(|k| rows.iter().all(|r| r.pass.iter().any(|(x, _)| x == k)))
        .map(|k| {
            let total: f64 = rows
                .iter()
                .filter_map(|r| r.pass.iter().find(|(x, _)| *x == k).map(|(_, v)| v))
                .sum();
            (k, total / rows.len() as f64)
        })
        .collect()
}
