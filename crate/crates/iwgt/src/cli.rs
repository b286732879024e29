//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use iwgt_core::eval::Method;
use iwgt_core::objectives::Objective;
use iwgt_core::training::PretrainEvent;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::Config;
use crate::dataset::{read_stats, write_atomic, write_stats, Dataset, Encoding, Source};
use crate::error::{Error, Result, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_USAGE};
use crate::experiments::{
    evaluate, fewshot_sweep, finetune_on, gradcheck, mask_sweep, oracle, pretrain_on, scaling_sweep, EvalSpec,
    FewshotSpec, Init, ScalingSpec,
};
use crate::report::{
    records_csv, write_finetune_metrics, write_pretrain_metrics, write_results, FinetuneMetric, PretrainMetric,
    RowContext,
};

#[derive(Debug, Parser)]
#[command(name = "iwgt", version, about = "Graph-transformer power control: data, training, evaluation")]
pub struct Cli {
    /// Preset name (`toy`, `paper`) or path to a TOML config.
    #[arg(long, global = true, default_value = "toy")]
    pub config: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a snapshot dataset.
    Gen(GenArgs),
    /// Self-supervised pre-training on one or more datasets.
    Pretrain(PretrainArgs),
    /// Fine-tune a decision head (and backbone) on a downstream utility.
    Finetune(FinetuneArgs),
    /// Score a fine-tuned checkpoint against WMMSE-Best and full reuse.
    Eval(EvalArgs),
    /// Pre-trained versus scratch fine-tuning across shot counts.
    SweepFewshot(FewshotArgs),
    /// Pre-train and fine-tune several architectures at a fixed budget.
    SweepScaling(ScalingArgs),
    /// Evaluate a checkpoint at several inference mask ratios.
    SweepMask(MaskArgs),
    /// Compare reverse-mode gradients of both training losses with finite differences.
    Gradcheck(GradcheckArgs),
    /// Compare WMMSE-Best with the grid oracle and with full reuse.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Library scenario (`D1`..`D20`, `D1-toy`..`D20-toy`) or `strong-k<K>`.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Encoding::Binary)]
    pub format: Encoding,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Also write the normalization statistics to this file.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pre-trained checkpoint; omitted means training from scratch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_shot: Option<usize>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Statistics for scratch runs; defaults to those of `--data`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-snapshot records CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FewshotArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub shots: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[arg(long = "pretrain-data", required = true, num_args = 1..)]
    pub pretrain_data: Vec<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Coordinates per check; 0 checks all.
    #[arg(long)]
    pub coords: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub snapshots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Accepts `sum_rate`, `pf` (or `proportional_fairness`) and `qos`.
pub fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "sum_rate" | "sumrate" => Ok(Objective::SumRate),
        "pf" | "proportional_fairness" => Ok(Objective::proportional_fairness()),
        "qos" => Ok(Objective::qos()),
        other => Err(format!("unknown objective `{other}` (expected sum_rate, pf or qos)")),
    }
}

fn category(code: i32) -> &'static str {
    match code {
        EXIT_USAGE => "usage",
        EXIT_CONFIG => "config",
        EXIT_NUMERICAL => "numerical",
        EXIT_IO => "io",
        _ => "error",
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error[{}]: {e}", category(code));
            code
        }
    }
}

fn read_data(path: &Path) -> Result<Dataset> {
    Dataset::read(path)
}

fn emit_results(out: Option<&Path>, rows: &[crate::report::ResultRow]) -> Result<()> {
    match out {
        Some(p) => write_results(p, rows),
        None => {
            let bytes = crate::report::results_csv(rows)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(&cli.config)?;
    match cli.command {
        Command::Gen(a) => {
            let data = Dataset::generate(Source::named(&a.scenario)?, a.n, a.seed, a.format)?;
            data.write(&a.out)?;
            println!("wrote {} snapshots of {} to {}", data.len(), data.header.source.id(), a.out.display());
        }
        Command::Pretrain(a) => {
            if let Some(e) = a.epochs {
                cfg.pretrain.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.pretrain.seed = s;
            }
            let datasets = a.data.iter().map(|p| read_data(p)).collect::<Result<Vec<_>>>()?;
            let start = Instant::now();
            let mut metrics = Vec::new();
            let out = pretrain_on(&datasets, &cfg.model, &cfg.pretrain, |ev| {
                if let PretrainEvent::Epoch(e) = ev {
                    metrics.push(PretrainMetric {
                        epoch: e.epoch,
                        lr: e.lr,
                        train_l_edge: e.train.edge,
                        train_l_cl: e.train.cl,
                        train_l_pre: e.train.total,
                        l_edge: e.val.edge,
                        l_cl: e.val.cl,
                        l_pre: e.val.total,
                        seconds: start.elapsed().as_secs_f64(),
                    });
                    eprintln!("epoch {:>4}  lr {:.2e}  val L_edge {:.5}  L_cl {:.5}", e.epoch, e.lr, e.val.edge, e.val.cl);
                }
            })?;
            save_checkpoint(&a.out, &out.checkpoint)?;
            if let Some(p) = &a.metrics {
                write_pretrain_metrics(p, &metrics)?;
            }
            if let Some(p) = &a.stats_out {
                write_stats(p, &out.checkpoint.stats)?;
            }
            println!(
                "pre-trained {} parameters; val L_edge {:.5} -> {:.5}; checkpoint at {}",
                out.checkpoint.params.numel(),
                out.initial_val.edge,
                out.history.last().map_or(out.initial_val.edge, |h| h.val.edge),
                a.out.display()
            );
        }
        Command::Finetune(a) => {
            if let Some(n) = a.n_shot {
                cfg.finetune.n_shot = n;
            }
            if let Some(o) = a.objective {
                cfg.finetune.objective = o;
            }
            if let Some(s) = a.seed {
                cfg.finetune.seed = s;
            }
            let data = read_data(&a.data)?;
            let pre = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let init = match &pre {
                Some(c) => Init::Pretrained(c),
                None => {
                    let stats = match &a.stats {
                        Some(p) => read_stats(p)?,
                        None => data.norm_stats()?,
                    };
                    Init::Scratch { model: &cfg.model, stats }
                }
            };
            let start = Instant::now();
            let mut metrics = Vec::new();
            let ft = &cfg.finetune;
            let ckpt = finetune_on(init, &data, ft, |e| {
                metrics.push(FinetuneMetric {
                    epoch: e.epoch,
                    stage: if e.warmup { "warmup" } else { "full" },
                    lr: ft.head_lr,
                    utility: e.utility,
                    seconds: start.elapsed().as_secs_f64(),
                });
            })?;
            save_checkpoint(&a.out, &ckpt)?;
            if let Some(p) = &a.metrics {
                write_finetune_metrics(p, &metrics)?;
            }
            println!(
                "fine-tuned on {} snapshots ({}); final training utility {:.5}; checkpoint at {}",
                ft.n_shot,
                ft.objective.name(),
                metrics.last().map_or(f64::NAN, |m| m.utility),
                a.out.display()
            );
        }
        Command::Eval(a) => {
            let ckpt_path = a.checkpoint.or(cfg.eval.checkpoint.clone()).ok_or(Error::MissingField("eval.checkpoint"))?;
            let data_path = a.data.or(cfg.eval.dataset.clone()).ok_or(Error::MissingField("eval.dataset"))?;
            let mask_ratio = a.mask_ratio.unwrap_or(cfg.eval.mask_ratio);
            if !(0.0..=0.5).contains(&mask_ratio) {
                return Err(Error::Config("eval.mask_ratio must lie in [0, 0.5]".into()));
            }
            let spec = EvalSpec {
                objective: a.objective.unwrap_or(cfg.eval.objective),
                wmmse: &cfg.wmmse,
                mask_ratio,
                seed: a.seed.unwrap_or(cfg.eval.seed),
            };
            let ckpt = load_checkpoint(&ckpt_path)?;
            let data = read_data(&data_path)?;
            let report = evaluate(&ckpt, &data, &spec)?;
            let scenario = data.header.source.id();
            let ctx = RowContext {
                experiment: "eval",
                scenario: &scenario,
                n_shot: None,
                mask_ratio,
                param_count: ckpt.model.param_count(),
                seed: spec.seed,
            };
            emit_results(a.out.as_deref(), &ctx.rows(&report))?;
            if let Some(p) = &a.records {
                write_atomic(p, &records_csv(&report)?)?;
            }
            if a.out.is_some() {
                let s = report.summary(Method::Model);
                println!(
                    "{} snapshots: model mean utility {:.5}, ratio vs WMMSE-Best {}",
                    report.records.len(),
                    s.mean_utility,
                    s.ratio_vs_wmmse_best.map_or("undefined".into(), |r| format!("{r:.4}"))
                );
            }
        }
        Command::SweepFewshot(a) => {
            if let Some(s) = a.shots {
                cfg.sweep.shots = s;
            }
            if let Some(o) = a.objective {
                cfg.finetune.objective = o;
            }
            let pre = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let (train, test) = (read_data(&a.train)?, read_data(&a.test)?);
            let rows = fewshot_sweep(&FewshotSpec {
                pretrained: pre.as_ref(),
                model: &cfg.model,
                train: &train,
                test: &test,
                finetune: &cfg.finetune,
                shots: &cfg.sweep.shots,
                wmmse: &cfg.wmmse,
                eval_seed: cfg.eval.seed,
            })?;
            emit_results(a.out.as_deref(), &rows)?;
        }
        Command::SweepScaling(a) => {
            let models = if cfg.sweep.models.is_empty() { vec![cfg.model.clone()] } else { cfg.sweep.models.clone() };
            let pre = a.pretrain_data.iter().map(|p| read_data(p)).collect::<Result<Vec<_>>>()?;
            let (train, test) = (read_data(&a.train)?, read_data(&a.test)?);
            let rows = scaling_sweep(&ScalingSpec {
                models: &models,
                pretrain_data: &pre,
                pretrain: &cfg.pretrain,
                train: &train,
                test: &test,
                finetune: &cfg.finetune,
                wmmse: &cfg.wmmse,
                eval_seed: cfg.eval.seed,
            })?;
            emit_results(a.out.as_deref(), &rows)?;
        }
        Command::SweepMask(a) => {
            let ratios = a.ratios.unwrap_or(cfg.sweep.mask_ratios.clone());
            if ratios.iter().any(|r| !(0.0..=0.5).contains(r)) {
                return Err(Error::Config("mask ratios must lie in [0, 0.5]".into()));
            }
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let data = read_data(&a.data)?;
            let objective = a.objective.unwrap_or(cfg.eval.objective);
            let rows = mask_sweep(&ckpt, &data, objective, &ratios, &cfg.wmmse, cfg.eval.seed)?;
            emit_results(a.out.as_deref(), &rows)?;
        }
        Command::Gradcheck(a) => {
            if let Some(c) = a.coords {
                cfg.gradcheck.coords = c;
            }
            if let Some(s) = a.seed {
                cfg.gradcheck.seed = s;
            }
            let out = gradcheck(&cfg.model, &cfg.pretrain, &cfg.finetune.objective, &cfg.gradcheck)?;
            for (name, r) in [("pretrain", &out.pretrain), ("finetune", &out.finetune)] {
                println!(
                    "{name}: max relative error {:.3e} over {} coordinates (resolvable {:.3e}, {} below float64 resolution)",
                    r.max_rel_error, r.checked, r.max_rel_error_resolvable, r.unresolvable
                );
            }
            println!("max relative error {:.3e} (K = {}, {:.1} s)", out.max_rel_error(), out.k, out.seconds);
            if !(out.max_rel_error() < 1e-4) {
                return Err(iwgt_core::Error::Numerical {
                    iteration: 0,
                    what: format!("gradient check error {:.3e} exceeds 1e-4", out.max_rel_error()),
                }
                .into());
            }
        }
        Command::Oracle(a) => {
            if let Some(n) = a.snapshots {
                cfg.oracle.snapshots = n;
            }
            if let Some(s) = a.seed {
                cfg.oracle.seed = s;
            }
            let o = oracle(&cfg.oracle, &cfg.wmmse)?;
            println!(
                "WMMSE-Best / brute force over {} snapshots: ratio of means {:.5}, worst {:.5}",
                o.oracle_snapshots, o.ratio_of_means, o.worst_ratio
            );
            println!(
                "WMMSE-Best below full reuse on {} of {} snapshots",
                o.dominance_violations, o.dominance_snapshots
            );
        }
    }
    Ok(())
}
