//! `mdgcl` command-line driver. Results go to stdout as JSON lines, progress
//! and errors to stderr.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or I/O error,
//! 3 numeric failure.

pub mod config;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, RunConfig};
use mdgcl::io::export::{export_embeddings, MetricsRecord};
use mdgcl::io::graph_json::{load_graph, save_graph};
use mdgcl::io::synth::{generate_synthetic_domain, SynthDomainConfig};
use mdgcl::neural::GradCheckOptions;
use mdgcl::pipeline::verify::check_gradients;
use mdgcl::pipeline::{
    embed_domain, few_shot_split, finetune, pretrain_with_progress, scratch_baseline, FineTunedModel, Task,
};
use mdgcl::rng::stream;
use mdgcl::{Checkpoint, DimMap, FeatureGraph, GcnParams};
use rand::Rng;
use serde_json::json;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] mdgcl::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(mdgcl::Error::NonFinite(_)) => 3,
            CliError::Config(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mdgcl",
    about = "Multi-domain graph contrastive pre-training and few-shot transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write three synthetic source domains and one target domain as graph JSON
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train on two or more domain graphs
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long = "graph", required = true)]
        graphs: Vec<PathBuf>,
        /// Checkpoint to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune on a target graph; without --ckpt, train the from-scratch baseline
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        shots: Option<usize>,
        /// Fine-tuned model to write
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a fine-tuned model on every labelled node of a graph
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        shots: Option<usize>,
    },
    /// Write node embeddings of one or more graphs as CSV
    ExportEmb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "graph", required = true)]
        graphs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients of both losses against finite differences
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Print the tensors stored in a checkpoint
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn emit(v: serde_json::Value) {
    println!("{v}");
}

fn load_graphs(paths: &[PathBuf]) -> Result<Vec<FeatureGraph>, CliError> {
    Ok(paths.iter().map(load_graph).collect::<mdgcl::Result<Vec<_>>>()?)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Runs `mdgcl` with `argv` (program name first) and returns the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { common, out } => synth(&common.run_config()?, &out),
        Command::Pretrain { common, graphs, out } => {
            let cfg = common.run_config()?;
            let domains = load_graphs(&graphs)?;
            let result = pretrain_with_progress(&domains, &cfg.pretrain(), |s| match s.holdout_accuracy {
                Some(a) => eprintln!("epoch {} loss {:.6} holdout accuracy {:.4}", s.epoch, s.mean_loss, a),
                None => eprintln!("epoch {} loss {:.6}", s.epoch, s.mean_loss),
            })?;
            result.checkpoint().save(&out)?;
            let last = result.history.last().expect("at least one epoch");
            emit(json!({
                "command": "pretrain",
                "domains": domains.len(),
                "pairs": result.num_pairs,
                "epochs": result.history.len(),
                "final_loss": last.mean_loss,
                "holdout_accuracy": last.holdout_accuracy,
                "checkpoint": path_str(&out),
            }));
            Ok(())
        }
        Command::Finetune {
            common,
            ckpt,
            graph,
            task,
            shots,
            out,
        } => {
            let cfg = common.run_config()?;
            let task = task.unwrap_or(cfg.task);
            let shots = shots.unwrap_or(cfg.shots);
            let g = load_graph(&graph)?;
            let labels = g
                .labels()
                .ok_or_else(|| mdgcl::Error::InvalidArgument("target graph has no labels".into()))?;
            let split = few_shot_split(labels, shots, &mut stream(cfg.seed, "split"))?;
            let ft = cfg.finetune();
            let outcome = match &ckpt {
                Some(p) => finetune(&Checkpoint::load(p)?, &g, task, &split, &ft)?,
                None => scratch_baseline(&g, task, &split, &ft)?,
            };
            eprintln!(
                "selected epoch {} with validation accuracy {:.4}",
                outcome.best_epoch, outcome.best_val_accuracy
            );
            if let Some(out) = &out {
                outcome.model.to_checkpoint().save(out)?;
            }
            let record = MetricsRecord {
                task: task.to_string(),
                shots,
                seed: cfg.seed,
                accuracy: outcome.metrics.accuracy,
                macro_f1: outcome.metrics.macro_f1,
            };
            println!("{}", record.to_json());
            Ok(())
        }
        Command::Eval {
            common,
            ckpt,
            graph,
            shots,
        } => {
            let cfg = common.run_config()?;
            let model = FineTunedModel::from_checkpoint(&Checkpoint::load(&ckpt)?)?;
            let m = model.evaluate(&load_graph(&graph)?)?;
            let record = MetricsRecord {
                task: model.task.to_string(),
                shots: shots.unwrap_or(cfg.shots),
                seed: cfg.seed,
                accuracy: m.accuracy,
                macro_f1: m.macro_f1,
            };
            println!("{}", record.to_json());
            Ok(())
        }
        Command::ExportEmb {
            common: _,
            ckpt,
            graphs,
            out,
        } => export(&Checkpoint::load(&ckpt)?, &load_graphs(&graphs)?, &out),
        Command::Gradcheck { common } => {
            let cfg = common.run_config()?;
            let opts = GradCheckOptions::default();
            let reports = check_gradients(cfg.seed, &opts)?;
            let mut worst = 0.0f64;
            for (name, r) in &reports {
                worst = worst.max(r.max_rel_error);
                emit(json!({
                    "loss": name,
                    "max_rel_error": r.max_rel_error,
                    "worst_param": r.worst_param,
                    "coordinates": r.coordinates_checked,
                    "passed": r.passed,
                }));
            }
            if reports.iter().all(|(_, r)| r.passed) {
                Ok(())
            } else {
                Err(mdgcl::Error::NonFinite(format!(
                    "gradient check failed: max relative error {worst:e} >= {:e}",
                    opts.tolerance
                ))
                .into())
            }
        }
        Command::Inspect { ckpt } => {
            let ck = Checkpoint::load(&ckpt)?;
            emit(json!({
                "magic": "MDGC",
                "version": mdgcl::io::checkpoint::VERSION,
                "tensors": ck.len(),
            }));
            for (name, t) in ck.iter() {
                emit(json!({ "name": name, "dims": t.dims }));
            }
            Ok(())
        }
    }
}

/// Three dissimilar source domains and a target with its own rotation.
fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(mdgcl::Error::from)?;
    let mut rng = stream(cfg.seed, "synth");
    let names = ["source_0", "source_1", "source_2", "target"];
    for (i, name) in names.iter().enumerate() {
        let domain_cfg = SynthDomainConfig {
            basis_rotation_seed: 1000 + i as u64,
            ..SynthDomainConfig::default()
        };
        let g = generate_synthetic_domain(&domain_cfg, rng.random())?.with_domain(Some(i as u32));
        let path = out.join(format!("{name}.json"));
        save_graph(&g, &path)?;
        emit(json!({
            "file": path_str(&path),
            "nodes": g.num_nodes(),
            "edges": g.num_edges(),
            "feature_dim": g.feature_dim(),
        }));
    }
    Ok(())
}

/// Fine-tuned models embed with their stored map and attention; pre-trained
/// checkpoints embed graph `i` with `vmap.i` when its width fits, otherwise
/// with a freshly fitted map.
fn export(ck: &Checkpoint, graphs: &[FeatureGraph], out: &Path) -> Result<(), CliError> {
    let mut blocks = Vec::with_capacity(graphs.len());
    if ck.contains("proj_ft.W") {
        let model = FineTunedModel::from_checkpoint(ck)?;
        for g in graphs {
            blocks.push(model.embeddings(g)?);
        }
    } else {
        let gcn = GcnParams::new(ck.matrix("gcn.W1")?, ck.matrix("gcn.W2")?)?;
        for (i, g) in graphs.iter().enumerate() {
            let stored = ck.matrix(&format!("vmap.{i}")).ok().map(DimMap::from_projection);
            let map = match stored {
                Some(m) if m.source_dim() == g.feature_dim() => m,
                _ => mdgcl::dimred::fit_map(g.features(), gcn.input_dim())?,
            };
            blocks.push(embed_domain(g, &map, &gcn)?);
        }
    }
    let width = blocks.first().map_or(0, |b| b.cols());
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for (i, (g, h)) in graphs.iter().zip(&blocks).enumerate() {
        for r in 0..h.rows() {
            rows.push(h.row(r).to_vec());
            labels.push(g.labels().and_then(|l| l[r]));
            domains.push(Some(i as u32));
        }
    }
    let h = if rows.is_empty() {
        mdgcl::Matrix::zeros(0, width)
    } else {
        mdgcl::Matrix::from_rows(&rows)?
    };
    export_embeddings(&h, &labels, &domains, out)?;
    emit(json!({ "rows": h.rows(), "dim": h.cols(), "file": path_str(out) }));
    Ok(())
}
