//! Command-line runs: `gen-data`, `train`, `eval`, `perturb`, `trace`.
//!
//! Every command reads an optional TOML run config, applies flag overrides
//! (flags win), writes the effective config next to its outputs as
//! `config.toml`, and is a pure function of that config and its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataspace::{
    build_vocabulary, generate, perturb_dataset, to_jsonl, validate, write_jsonl, write_tables,
    Dataset, GeneratorConfig, PerturbMode,
};
use crate::error::{Error, Result};
use crate::evaluator::{adversarial_eval, dump_trace, predict_all, render_trace_text, score, OracleAdapter, Predictor};
use crate::model::{ModelConfig, OperandModel};
use crate::trainer::{load_checkpoint, metrics_csv, save_checkpoint, train_from, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Dataset directory: `tables/*.csv` plus `train|dev|test.jsonl`.
    pub data: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            out: "out".into(),
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub split: String,
    pub gamma: f64,
    /// Entries per attention shown in traces.
    pub k: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: "dev".into(),
            gamma: 0.5,
            k: 3,
        }
    }
}

/// Everything a run depends on. The root seed is copied into the generator
/// and trainer sections when the config is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    /// Write `checkpoints/epoch-NNNN.json` every this many epochs; 0 keeps
    /// only the final checkpoint.
    pub checkpoint_every: usize,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            threads: 1,
            checkpoint_every: 1,
            paths: Paths::default(),
            generator: GeneratorConfig::default(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve(mut self) -> Result<Self> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.generator.seed = self.seed;
        self.train.seed = self.seed;
        self.train.threads = self.threads;
        Ok(self)
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "operand-qa", version, about = "Table question answering with operand supervision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: tables, train/dev/test splits.
    GenData(GenDataArgs),
    /// Train a model and write checkpoints plus a per-epoch metrics log.
    Train(TrainArgs),
    /// Score a checkpoint (or the oracle) on a split.
    Eval(EvalArgs),
    /// Write a value- or operation-perturbed copy of a split.
    Perturb(PerturbArgs),
    /// Dump the attention trace of one example.
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generator preset: `desk` or `wikiops-skew`.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    NoCellLoss,
    NoAnswerLoss,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Model preset: `desk` or `full`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Training split name.
    #[arg(long, default_value = "train")]
    pub split: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Score the gold logical forms instead of a model.
    #[arg(long)]
    pub oracle: bool,
    /// Also compare accuracy before and after a perturbation.
    #[arg(long, value_parser = parse_mode)]
    pub adversarial: Option<PerturbMode>,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_mode)]
    pub mode: PerturbMode,
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Example id.
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn parse_mode(s: &str) -> std::result::Result<PerturbMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn base_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(d) = &c.data {
        cfg.paths.data = d.clone();
    }
    if let Some(o) = &c.out {
        cfg.paths.out = o.clone();
    }
    Ok(cfg)
}

/// Exit status for an error: 1 usage/config, 2 data, 3 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Generator(_) | Error::Dimension { .. } | Error::Contract(_) | Error::Capacity(_) => 1,
        Error::Numeric(_) | Error::Domain { .. } | Error::EncodingOverflow { .. } => 3,
        _ => 2,
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Perturb(a) => perturb(&a),
        Command::Trace(a) => trace(&a),
    }
}

/// A split with every table of the dataset directory, validated against
/// the oracle.
fn load_split(data: &Path, split: &str) -> Result<Dataset> {
    let d = Dataset::load(&data.join(format!("{split}.jsonl")), &data.join("tables"))?;
    validate(&d.examples, &d.tables)?;
    Ok(d)
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = &a.preset {
        cfg.generator = GeneratorConfig::preset(p)?;
    }
    let cfg = cfg.resolve()?;
    let corpus = generate(&cfg.generator)?;
    let out = &cfg.paths.out;
    write_tables(&out.join("tables"), &corpus.tables)?;
    write_jsonl(&out.join("train.jsonl"), &corpus.train)?;
    write_jsonl(&out.join("dev.jsonl"), &corpus.dev)?;
    write_jsonl(&out.join("test.jsonl"), &corpus.test)?;
    cfg.echo(out)?;
    println!(
        "wrote {} tables and {}/{}/{} examples to {}",
        corpus.tables.len(),
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(m) = &a.model {
        cfg.model = ModelConfig::preset(m)?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(d) = a.dropout {
        cfg.train.dropout = d;
    }
    if let Some(c) = a.checkpoint_every {
        cfg.checkpoint_every = c;
    }
    match a.ablation {
        Some(Ablation::NoCellLoss) => cfg.train.use_cell_loss = false,
        Some(Ablation::NoAnswerLoss) => cfg.train.use_answer_loss = false,
        None => {}
    }
    let cfg = cfg.resolve()?;
    cfg.train.validate()?;
    let data = load_split(&cfg.paths.data, &a.split)?;
    let vocab = build_vocabulary(&data.examples, &data.tables);
    let mut model = OperandModel::new(cfg.model.clone(), vocab, cfg.seed)?;
    let out = cfg.paths.out.clone();
    cfg.echo(&out)?;
    let ckpt_dir = out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir)?;
    }
    let log = train_from(&mut model, &data, &cfg.train, 0, |m, model| {
        println!(
            "epoch {:>4}  loss {:.4}  cell {:.4}  answer {:.4}  op {:.4}  HardOpA {:.3}  FinalAcc {:.3}",
            m.epoch, m.loss, m.cell_loss, m.answer_loss, m.op_loss, m.train_hard_op_a, m.train_final_acc
        );
        if cfg.checkpoint_every > 0 && m.epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(&ckpt_dir.join(format!("epoch-{:04}.json", m.epoch)), model, &cfg.train, m.epoch)?;
        }
        Ok(true)
    })?;
    let epoch = log.last().map_or(0, |m| m.epoch);
    save_checkpoint(&out.join("checkpoint.json"), &model, &cfg.train, epoch)?;
    fs::write(out.join("metrics.csv"), metrics_csv(&log))?;
    println!("wrote {}", out.join("checkpoint.json").display());
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.paths.checkpoint.clone())
        .ok_or_else(|| Error::Config("no checkpoint given (--checkpoint or paths.checkpoint)".into()))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(s) = &a.split {
        cfg.eval.split = s.clone();
    }
    if let Some(g) = a.gamma {
        cfg.eval.gamma = g;
    }
    if a.checkpoint.is_some() {
        cfg.paths.checkpoint = a.checkpoint.clone();
    }
    let cfg = cfg.resolve()?;
    let data = load_split(&cfg.paths.data, &cfg.eval.split)?;
    let model;
    let predictor: &(dyn Predictor + Sync) = if a.oracle {
        &OracleAdapter
    } else {
        model = load_checkpoint(&checkpoint_path(&cfg, &a.checkpoint)?)?.0;
        &model
    };
    let out = &cfg.paths.out;
    cfg.echo(out)?;
    let preds = predict_all(predictor, &data, cfg.eval.gamma, cfg.threads)?;
    let report = score(&data, &preds)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut lines = String::new();
    for p in &preds {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    fs::write(out.join("predictions.jsonl"), lines)?;
    println!(
        "SoftOpP {:.4}  SoftOpR {:.4}  HardOpA {:.4}  FinalAcc {:.4}",
        report.soft_op_p, report.soft_op_r, report.hard_op_a, report.final_acc
    );
    if let Some(mode) = a.adversarial {
        let adv = adversarial_eval(predictor, &data, mode, cfg.seed, cfg.eval.gamma)?;
        fs::write(out.join("adversarial.json"), serde_json::to_string_pretty(&adv)? + "\n")?;
        println!(
            "{mode}: FinalAcc {:.4} -> {:.4} (drop {:.4}, {} emitted, {} skipped)",
            adv.base.final_acc, adv.perturbed.final_acc, adv.final_acc_drop, adv.emitted, adv.skipped
        );
        if !adv.all_valid {
            return Err(Error::Validation {
                ids: vec!["perturbed set failed oracle validation".into()],
            });
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Validity {
    mode: PerturbMode,
    input: usize,
    emitted: usize,
    skipped: usize,
    skip_rate: f64,
    all_valid: bool,
}

pub fn perturb(a: &PerturbArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(s) = &a.split {
        cfg.eval.split = s.clone();
    }
    let cfg = cfg.resolve()?;
    let data = load_split(&cfg.paths.data, &cfg.eval.split)?;
    let (perturbed, status) = perturb_dataset(&data, a.mode, cfg.seed)?;
    let all_valid = validate(&perturbed.examples, &perturbed.tables).is_ok();
    let out = &cfg.paths.out;
    cfg.echo(out)?;
    write_tables(&out.join("tables"), &perturbed.tables)?;
    fs::write(out.join(format!("{}.jsonl", cfg.eval.split)), to_jsonl(&perturbed.examples)?)?;
    let mut lines = String::new();
    for s in &status {
        lines.push_str(&serde_json::to_string(s)?);
        lines.push('\n');
    }
    fs::write(out.join("status.jsonl"), lines)?;
    let skipped = status.iter().filter(|s| s.status == "skipped").count();
    let v = Validity {
        mode: a.mode,
        input: data.examples.len(),
        emitted: perturbed.examples.len(),
        skipped,
        skip_rate: if data.examples.is_empty() { 0.0 } else { skipped as f64 / data.examples.len() as f64 },
        all_valid,
    };
    fs::write(out.join("validity.json"), serde_json::to_string_pretty(&v)? + "\n")?;
    println!("{}: {} emitted, {} skipped ({:.1}%), all valid: {}", a.mode, v.emitted, v.skipped, 100.0 * v.skip_rate, all_valid);
    if !all_valid {
        return Err(Error::Validation {
            ids: vec!["perturbed set failed oracle validation".into()],
        });
    }
    Ok(())
}

pub fn trace(a: &TraceArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(s) = &a.split {
        cfg.eval.split = s.clone();
    }
    if let Some(k) = a.k {
        cfg.eval.k = k;
    }
    if let Some(g) = a.gamma {
        cfg.eval.gamma = g;
    }
    if a.checkpoint.is_some() {
        cfg.paths.checkpoint = a.checkpoint.clone();
    }
    let cfg = cfg.resolve()?;
    let data = load_split(&cfg.paths.data, &cfg.eval.split)?;
    let ex = data
        .examples
        .iter()
        .find(|e| e.id == a.id)
        .ok_or_else(|| Error::Validation {
            ids: vec![format!("unknown example id {}", a.id)],
        })?;
    let (model, _, _) = load_checkpoint(&checkpoint_path(&cfg, &a.checkpoint)?)?;
    let t = dump_trace(&model, ex, data.table(ex)?, cfg.eval.k, cfg.eval.gamma)?;
    let out = &cfg.paths.out;
    cfg.echo(out)?;
    fs::write(out.join(format!("{}.trace.json", ex.id)), serde_json::to_string_pretty(&t)? + "\n")?;
    fs::write(out.join(format!("{}.trace.txt", ex.id)), render_trace_text(&t))?;
    print!("{}", render_trace_text(&t));
    Ok(())
}
