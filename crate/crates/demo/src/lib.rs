//! Browser bindings: a short CLPO-vs-GRPO curriculum simulation, exact
//! pass@k curves, and a rewrite playground. Every export returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use clpo::metrics::{pass_at_k, pass_at_k_exact};
use clpo::optimizer::Mode;
use clpo::rng::{self, Seeds};
use clpo::task::{self, diversify, generate_problem, parse, render, simplify, GenConfig, Lineage, Problem};
use clpo::trainer::{train, EvalConfig, TrainConfig};

#[derive(Serialize)]
struct Point {
    step: usize,
    hard: f64,
    medium: f64,
    easy: f64,
    mix_size: usize,
}

#[derive(Serialize)]
struct RunSummary {
    mode: Mode,
    series: Vec<Point>,
    pass1: f64,
    pass_at_k: Vec<(usize, f64)>,
    total_rollouts: u64,
}

#[derive(Serialize)]
struct Simulation {
    clpo: RunSummary,
    grpo: RunSummary,
}

fn to_js<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn err(msg: impl std::fmt::Display) -> String {
    to_js(&serde_json::json!({ "error": msg.to_string() }))
}

pub fn simulate(seed: u64, steps: usize, batch_size: usize, lr: f64) -> Result<String, String> {
    let base = TrainConfig {
        steps,
        batch_size,
        lr,
        seeds: Seeds::from_base(seed),
        eval_every: 0,
        val_size: 0,
        select_best: false,
        eval: EvalConfig {
            size: 100,
            samples: 16,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = |mode| -> Result<RunSummary, String> {
        let cfg = TrainConfig { mode, ..base.clone() };
        let r = train(&cfg).map_err(|e| e.to_string())?;
        let report = r.final_eval.as_ref().ok_or("no eval")?;
        Ok(RunSummary {
            mode,
            series: r
                .telemetry
                .iter()
                .map(|t| Point {
                    step: t.step,
                    hard: t.ratios.hard_ratio,
                    medium: t.ratios.medium_ratio,
                    easy: t.ratios.easy_ratio,
                    mix_size: t.counts.mix_size,
                })
                .collect(),
            pass1: report.pass1(),
            pass_at_k: report.ks.iter().copied().zip(report.pass_at_k.iter().copied()).collect(),
            total_rollouts: r.total_rollouts,
        })
    };
    Ok(to_js(&Simulation {
        clpo: run(Mode::Clpo)?,
        grpo: run(Mode::Grpo)?,
    }))
}

/// Trains CLPO and GRPO side by side and returns their curriculum ratios.
#[wasm_bindgen]
pub fn simulate_curriculum(seed: u32, steps: u32, batch_size: u32, lr: f64) -> String {
    simulate(seed as u64, steps as usize, batch_size as usize, lr).unwrap_or_else(err)
}

#[derive(Serialize)]
struct PassPoint {
    k: usize,
    exact: String,
    value: f64,
}

pub fn pass_curve(n: usize, c: usize) -> Result<String, String> {
    let mut out = Vec::new();
    let mut k = 1;
    while k <= n {
        let exact = pass_at_k_exact(n, c, k).map_err(|e| e.to_string())?;
        let value = pass_at_k(n, c, k).map_err(|e| e.to_string())?;
        out.push(PassPoint {
            k,
            exact: exact.to_string(),
            value,
        });
        k *= 2;
    }
    if out.is_empty() {
        return Err("n must be at least 1".into());
    }
    Ok(to_js(&out))
}

/// pass@k for k = 1, 2, 4, ... up to n, given c correct of n samples.
#[wasm_bindgen]
pub fn pass_at_k_curve(n: u32, c: u32) -> String {
    pass_curve(n as usize, c as usize).unwrap_or_else(err)
}

#[derive(Serialize)]
struct Rewrite {
    original: String,
    answer: u32,
    steps: Vec<u32>,
    rewritten: String,
    rewritten_answer: u32,
    kind: &'static str,
    surface_only: bool,
    preserved: bool,
}

pub fn rewrite(text: &str, kind: &str, seed: u64) -> Result<String, String> {
    let text = text.trim();
    let problem = if text.is_empty() {
        let cfg = GenConfig::default();
        generate_problem("demo", &mut rng::stream(seed, &[0]), &cfg).map_err(|e| e.to_string())?
    } else {
        let p = parse(text).map_err(|e| e.to_string())?;
        Problem::new("demo", p.modulus, p.start, p.ops, Lineage::Original, seed)
            .map_err(|e| e.to_string())?
    };
    let mut r = rng::stream(seed, &[1]);
    let (q, surface_only) = match kind {
        "simplify" => (simplify(&problem, &mut r, None).map_err(|e| e.to_string())?, false),
        "diversify" => {
            let d = diversify(&problem, &mut r).map_err(|e| e.to_string())?;
            (d.problem, d.surface_only)
        }
        other => return Err(format!("unknown rewrite {other:?}")),
    };
    Ok(to_js(&Rewrite {
        original: render(&problem),
        answer: problem.answer,
        steps: problem.intermediate_values(),
        rewritten: render(&q),
        rewritten_answer: task::eval_chain(&q),
        kind: if kind == "simplify" { "simplify" } else { "diversify" },
        surface_only,
        preserved: task::eval_chain(&q) == problem.answer,
    }))
}

/// Simplifies or diversifies a chain such as `mod 10: 2 +3 *2 = ?`.
/// An empty string draws a random problem from `seed`.
#[wasm_bindgen]
pub fn restructure(text: &str, kind: &str, seed: u32) -> String {
    rewrite(text, kind, seed as u64).unwrap_or_else(err)
}
