mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clpo::ablation::{run_ablation, Grid, Preset};
use clpo::checkpoint::Checkpoint;
use clpo::metrics::{
    eval_checkpoint, mean_pass_curve, read_eval_csv, read_jsonl, write_eval_csv, EvalOptions,
    PassEstimator,
};
use clpo::optimizer::Mode;
use clpo::restructure::Strategy;
use clpo::rng::Seeds;
use clpo::trainer::{test_eval_seed, test_set, train, StepRecord, TrainConfig};

use plot::{Chart, Series};

#[derive(Parser)]
#[command(name = "clpo", version, about = "Curriculum-guided policy optimization on toy arithmetic")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one run and write its artifacts.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out problems.
    Eval(EvalArgs),
    /// Run an ablation grid and write a comparison table.
    Ablate(AblateArgs),
    /// Turn telemetry and eval files into plot CSVs and SVG charts.
    ExportPlots(PlotArgs),
}

#[derive(Args)]
struct Overrides {
    /// JSON config; flags below take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; derives the env, rollout, restructure and eval seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Train until this many rollouts are spent.
    #[arg(long)]
    rollout_budget: Option<u64>,
}

impl Overrides {
    fn resolve(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(Failure::usage(format!("config file not found: {}", path.display())));
                }
                TrainConfig::load(path)?
            }
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = Seeds::from_base(s);
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.group_size {
            cfg.group_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.strategy {
            cfg.restructure.strategy = v;
        }
        if self.rollout_budget.is_some() {
            cfg.rollout_budget = self.rollout_budget;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    o: Overrides,
    /// Run directory (default: $CLPO_OUT_DIR/train-<mode>-<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Config used for the environment and eval seed (default: config.json next to the checkpoint).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<PassEstimator>,
    /// Output directory for eval.csv (default: $CLPO_OUT_DIR/eval).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// strategy, range, alpha, or all (the three grids in sequence).
    #[arg(long, conflicts_with = "grid")]
    preset: Option<Preset>,
    /// JSON list of grids.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[command(flatten)]
    o: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Telemetry file, optionally as label=path; repeat to overlay runs.
    #[arg(long)]
    telemetry: Vec<String>,
    /// eval.csv file, optionally as label=path; repeat to overlay runs.
    #[arg(long)]
    eval: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> Result<PassEstimator, String> {
    match s {
        "unbiased" => Ok(PassEstimator::Unbiased),
        "first-k" | "firstk" => Ok(PassEstimator::FirstK),
        _ => Err("expected unbiased or first-k".into()),
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<clpo::Error> for Failure {
    fn from(e: clpo::Error) -> Self {
        let code = match e {
            clpo::Error::Config(_) => 1,
            clpo::Error::Invariant(_) => 3,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn out_root() -> PathBuf {
    std::env::var_os("CLPO_OUT_DIR").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = a.o.resolve()?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let dir = a.out.unwrap_or_else(|| {
        let seed = a.o.seed.map_or("default".to_string(), |s| s.to_string());
        out_root().join(format!("train-{}-{seed}", cfg.mode))
    });
    let run = train(&cfg)?;
    run.write(&dir)?;
    println!(
        "steps={} rollouts={} pass@1={:.4} mix_size_mean={:.2} selected_step={} out={}",
        run.telemetry.len(),
        run.total_rollouts,
        run.final_pass1(),
        run.mean_mix_size(),
        run.selected_step,
        dir.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if !a.checkpoint.exists() {
        return Err(Failure::usage(format!("checkpoint not found: {}", a.checkpoint.display())));
    }
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let sibling = a.checkpoint.parent().map(|p| p.join("config.json"));
    let mut cfg = match (&a.config, sibling) {
        (Some(p), _) if !p.exists() => {
            return Err(Failure::usage(format!("config file not found: {}", p.display())))
        }
        (Some(p), _) => TrainConfig::load(p)?,
        (None, Some(p)) if p.exists() => TrainConfig::load(&p)?,
        _ => TrainConfig {
            seeds: ckpt.seeds.unwrap_or_default(),
            ..TrainConfig::default()
        },
    };
    cfg.env.modulus = ckpt.policy.modulus;
    if let Some(s) = a.seed {
        cfg.seeds = Seeds::from_base(s);
    }
    if let Some(v) = a.size {
        cfg.eval.size = v;
    }
    if let Some(v) = a.samples {
        cfg.eval.samples = v;
    }
    if let Some(v) = a.temperature {
        cfg.eval.temperature = v;
    }
    if let Some(v) = a.estimator {
        cfg.eval.estimator = v;
    }
    cfg.validate()?;
    let problems = test_set(&cfg)?;
    let report = eval_checkpoint(
        &ckpt.policy,
        &problems,
        &EvalOptions {
            samples: cfg.eval.samples,
            seed: test_eval_seed(&cfg),
            temperature: cfg.eval.temperature,
            estimator: cfg.eval.estimator,
            checkpoint_id: a.checkpoint.display().to_string(),
        },
    )?;
    let dir = a.out.unwrap_or_else(|| out_root().join("eval"));
    let path = dir.join("eval.csv");
    write_eval_csv(&report, &path)?;
    let curve: Vec<String> = report
        .ks
        .iter()
        .zip(&report.pass_at_k)
        .map(|(k, p)| format!("pass@{k}={p:.4}"))
        .collect();
    println!("{} avg@{}={:.4} out={}", curve.join(" "), cfg.eval.samples, report.avg_at_n, path.display());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<(), Failure> {
    let base = a.o.resolve()?;
    let grids: Vec<Grid> = match (&a.preset, &a.grid) {
        (Some(p), _) => p.grids(&base),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(Failure::usage("ablate needs --preset or --grid")),
    };
    let dir = a.out.unwrap_or_else(|| out_root().join("ablate"));
    let result = run_ablation(&grids, &base, a.seeds, Some(&dir))?;
    let table = dir.join("ablation.csv");
    result.write_csv(&table)?;
    for r in &result.rows {
        println!(
            "{:<8} {:<11} ({}, {}] alpha={:<4} avg={:.4}±{:.4} pass@1={:.4} ok={} failed={}",
            r.grid, r.strategy.to_string(), r.tau_hard, r.tau_med, r.alpha, r.avg_mean, r.avg_std,
            r.pass1_mean, r.n_ok, r.n_failed
        );
    }
    println!("table={}", table.display());
    if result.all_failed() {
        return Err(Failure::runtime("every ablation run failed"));
    }
    Ok(())
}

fn labelled(arg: &str) -> (String, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let label = path
        .parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    (label, path)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn cmd_export_plots(a: PlotArgs) -> Result<(), Failure> {
    if a.telemetry.is_empty() && a.eval.is_empty() {
        return Err(Failure::usage("export-plots needs --telemetry or --eval inputs"));
    }
    let dir = a.out.unwrap_or_else(|| out_root().join("plots"));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;

    let mut runs = Vec::new();
    for arg in &a.telemetry {
        let (label, path) = labelled(arg);
        if !path.exists() {
            return Err(Failure::usage(format!("telemetry not found: {}", path.display())));
        }
        let records: Vec<StepRecord> = read_jsonl(&path).map_err(|e| Failure::usage(e.to_string()))?;
        if records.is_empty() {
            return Err(Failure::usage(format!("telemetry is empty: {}", path.display())));
        }
        let rows: Vec<_> = records.iter().map(StepRecord::curriculum_row).collect();
        let csv_path = dir.join(format!("{label}-curriculum.csv"));
        clpo::metrics::export(&rows, &csv_path, clpo::metrics::ExportFormat::Csv)?;
        println!("wrote {}", csv_path.display());
        runs.push((label, rows));
    }
    if !runs.is_empty() {
        type Pick = fn(&clpo::metrics::CurriculumRow) -> f64;
        let panels: [(&str, &str, Pick); 3] = [
            ("hard", "Hard Ratio", |r| r.hard_ratio),
            ("medium", "Medium Ratio", |r| r.medium_ratio),
            ("easy", "Easy Ratio", |r| r.easy_ratio),
        ];
        for (key, title, pick) in panels {
            let series: Vec<Series> = runs
                .iter()
                .map(|(label, rows)| Series {
                    label: label.clone(),
                    points: rows.iter().map(|r| (r.step as f64, pick(r))).collect(),
                })
                .collect();
            let chart = Chart {
                title: title.into(),
                x_label: "step".into(),
                y_label: "ratio".into(),
                log2_x: false,
                y_range: (0.0, 1.0),
            };
            let path = dir.join(format!("{key}_ratio.svg"));
            write_file(&path, &chart.render(&series))?;
            println!("wrote {}", path.display());
        }
    }

    let mut curves = Vec::new();
    for arg in &a.eval {
        let (label, path) = labelled(arg);
        if !path.exists() {
            return Err(Failure::usage(format!("eval file not found: {}", path.display())));
        }
        let rows = read_eval_csv(&path).map_err(|e| Failure::usage(e.to_string()))?;
        let curve = mean_pass_curve(&rows);
        if curve.is_empty() {
            return Err(Failure::usage(format!("eval file is empty: {}", path.display())));
        }
        curves.push((label, curve));
    }
    if !curves.is_empty() {
        let mut text = String::from("label,k,pass_at_k\n");
        for (label, curve) in &curves {
            for (k, p) in curve {
                text.push_str(&format!("{label},{k},{p}\n"));
            }
        }
        let path = dir.join("pass_at_k.csv");
        write_file(&path, &text)?;
        println!("wrote {}", path.display());
        let series: Vec<Series> = curves
            .into_iter()
            .map(|(label, curve)| Series {
                label,
                points: curve.into_iter().map(|(k, p)| (k as f64, p)).collect(),
            })
            .collect();
        let chart = Chart {
            title: "pass@k".into(),
            x_label: "k".into(),
            y_label: "pass@k".into(),
            log2_x: true,
            y_range: (0.0, 1.0),
        };
        let path = dir.join("pass_at_k.svg");
        write_file(&path, &chart.render(&series))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::ExportPlots(a) => cmd_export_plots(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
