//! Subcommand definitions and handlers.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fairlayout::baselines::{drf_allocate, walking_based, AllocationBudget};
use fairlayout::citygrid::{generate_synthetic_city, load_dataset, save_dataset, GeneratorConfig};
use fairlayout::denoiser::{Denoiser, DENOISER_FORMAT};
use fairlayout::fairdemand::{FairDemandParams, FAIRDEMAND_FORMAT};
use fairlayout::metrics::{evaluate_with_mode, local_morans_i, rook_weights, EfficiencyMode, MetricsReport};
use fairlayout::sampler::SamplerMethod;
use fairlayout::train::{load_checkpoint, start, train, training_items, TrainingMeta};
use serde::Serialize;

use crate::config::{ExperimentConfig, Preset};
use crate::pipeline::{generate, pretrain_fairdemand, run_pipeline, write_json, write_text, Manifest};
use crate::report::Comparison;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "fairlayout", version, about = "Fairness-aware facility layout generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Walking,
    Drf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Coverage,
    Literal,
}

impl From<ModeArg> for EfficiencyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Coverage => Self::Coverage,
            ModeArg::Literal => Self::Literal,
        }
    }
}

/// Shared way of picking an experiment configuration.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration, used when no file is given.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, self.preset) {
            (Some(_), Some(_)) => Err(CliError::Config("give either --config or --preset".into())),
            (Some(path), None) => ExperimentConfig::load(path),
            (None, Some(p)) => Ok(ExperimentConfig::preset(p)),
            (None, None) => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Generator TOML; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        regions: Option<usize>,
        /// Probability that each facility category is served.
        #[arg(long)]
        balance: Option<f64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain the fair-demand conditioning module.
    PretrainFairness {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the denoiser.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Pretrained fair-demand checkpoint; pretrained inline when absent.
        #[arg(long)]
        fairdemand: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many completed epochs.
        #[arg(long)]
        until: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate one layout per region with a trained model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score layouts against the regions they were made for.
    Evaluate {
        #[arg(long)]
        layouts: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "coverage")]
        mode: ModeArg,
        #[arg(long, default_value = "layouts")]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a reference allocator.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        dataset: PathBuf,
        /// JSON allocation budget (required for drf).
        #[arg(long)]
        budget: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines log of DRF grants.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Local Moran's I of a per-region metric over the city grid.
    Moran {
        #[arg(long)]
        layouts: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// life_service, elderly_care, diversity, accessibility or composite.
        #[arg(long, default_value = "composite")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline into a run directory.
    Run {
        #[arg(long)]
        out: PathBuf,
        /// Reproduce a previous run from its manifest.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Summarize a model or fair-demand checkpoint.
    Inspect { checkpoint: PathBuf },
}

fn print_report(name: &str, report: &MetricsReport) {
    let mut cmp = Comparison::default();
    cmp.push(name, report.clone());
    print!("{}", cmp.table());
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            out,
            config,
            regions,
            balance,
            n_max,
            seed,
        } => {
            let mut g = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                    toml::from_str::<GeneratorConfig>(&text).map_err(|e| CliError::Config(e.to_string()))?
                }
                None => GeneratorConfig::default(),
            };
            g.regions = regions.unwrap_or(g.regions);
            g.balance = balance.unwrap_or(g.balance);
            if let Some(n) = n_max {
                g.n_max = n;
                g.node_range.1 = g.node_range.1.min(n);
            }
            g.validate()?;
            let ds = generate_synthetic_city(&g, seed)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} regions to {}", ds.len(), out.display());
        }
        Command::PretrainFairness { dataset, out, cfg } => {
            let cfg = cfg.resolve()?;
            let ds = load_dataset(&dataset)?;
            let (_, log) = pretrain_fairdemand(&cfg, &ds, Some(&out))?;
            let (first, last) = (log.min_entropy[0], *log.min_entropy.last().unwrap_or(&log.min_entropy[0]));
            println!("min category entropy {first:.4} -> {last:.4}");
        }
        Command::Train {
            dataset,
            fairdemand,
            out,
            resume,
            until,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            cfg.validate()?;
            let ds = load_dataset(&dataset)?;
            let (mut model, mut meta) = match resume {
                Some(path) => load_checkpoint(&path)?,
                None => {
                    let fd = match fairdemand {
                        Some(p) => FairDemandParams::load(&p)?,
                        None => pretrain_fairdemand(&cfg, &ds, None)?.0,
                    };
                    let model = Denoiser::new(
                        cfg.denoiser,
                        fairlayout::sde::NoiseSchedule::of_kind(cfg.schedule),
                        ds.k_cat(),
                        fd.hidden,
                        cfg.seeds.model_init,
                    )?;
                    let meta = start(&model, cfg.train_config(), Some(fd));
                    (model, meta)
                }
            };
            let fd = meta
                .fairdemand
                .clone()
                .ok_or_else(|| CliError::Config("checkpoint has no fair-demand module".into()))?;
            let items = training_items(&ds, &fd)?;
            let until = until.unwrap_or(meta.config.epochs);
            model.save(&out, &meta)?;
            train(&mut model, &mut meta, &items, until, Some(&out))?;
            if let (Some(first), Some(last)) = (meta.loss_curve.first(), meta.loss_curve.last()) {
                println!("epoch {} loss {first:.4} -> {last:.4}", meta.epoch);
            }
        }
        Command::Sample {
            model,
            dataset,
            out,
            method,
            steps,
            seed,
            cfg,
        } => {
            let mut cfg = cfg.resolve()?;
            if let Some(m) = method {
                cfg.sampler.method = m.parse::<SamplerMethod>()?;
            }
            cfg.sampler.steps = steps.unwrap_or(cfg.sampler.steps);
            cfg.seeds.sample = seed.unwrap_or(cfg.seeds.sample);
            let (model, meta): (Denoiser, TrainingMeta) = Denoiser::load(&model)?;
            let fd = meta
                .fairdemand
                .ok_or_else(|| CliError::Config("model checkpoint has no fair-demand module".into()))?;
            let ds = load_dataset(&dataset)?;
            let generated = generate(&model, &fd, &ds, &cfg)?;
            save_dataset(&generated, &out)?;
            println!("wrote {} layouts to {}", generated.len(), out.display());
        }
        Command::Evaluate {
            layouts,
            dataset,
            mode,
            name,
            out,
        } => {
            let report = evaluate_with_mode(&load_dataset(&layouts)?, &load_dataset(&dataset)?, mode.into())?;
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            print_report(&name, &report);
        }
        Command::Baseline {
            method,
            dataset,
            budget,
            out,
            log,
        } => {
            let ds = load_dataset(&dataset)?;
            match method {
                BaselineMethod::Walking => {
                    let (layouts, report) = walking_based(&ds)?;
                    save_dataset(&layouts, &out)?;
                    print_report("walking-based", &report);
                }
                BaselineMethod::Drf => {
                    let path = budget.ok_or_else(|| CliError::Config("drf needs --budget".into()))?;
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                    let budget: AllocationBudget =
                        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("budget: {e}")))?;
                    let alloc = match drf_allocate(&ds, &budget) {
                        Err(fairlayout::Error::Degenerate(msg)) => {
                            println!("{msg}");
                            save_dataset(&ds, &out)?;
                            return Ok(());
                        }
                        other => other?,
                    };
                    save_dataset(&alloc.layouts, &out)?;
                    if let Some(p) = log {
                        write_jsonl(&p, &alloc.grants)?;
                    }
                    println!("{} facilities granted", alloc.grants.len());
                    print_report("drf", &evaluate_with_mode(&alloc.layouts, &ds, EfficiencyMode::Coverage)?);
                }
            }
        }
        Command::Moran {
            layouts,
            dataset,
            metric,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let report = evaluate_with_mode(&load_dataset(&layouts)?, &ds, EfficiencyMode::Coverage)?;
            let values = report
                .per_region_values
                .iter()
                .map(|v| v.get(&metric))
                .collect::<Result<Vec<_>, _>>()?;
            let local = local_morans_i(&values, &rook_weights(&ds))?;
            #[derive(Serialize)]
            struct Row {
                region_id: usize,
                row: usize,
                col: usize,
                value: f64,
                local_i: f64,
            }
            let rows: Vec<Row> = report
                .per_region_values
                .iter()
                .zip(values.iter().zip(&local))
                .map(|(v, (&value, &local_i))| {
                    let (row, col) = ds.grid_position(v.region_id);
                    Row {
                        region_id: v.region_id,
                        row,
                        col,
                        value,
                        local_i,
                    }
                })
                .collect();
            println!("{:>6}  {:>4}  {:>4}  {:>8}  {:>9}", "region", "row", "col", metric.as_str(), "local I");
            for r in &rows {
                println!("{:>6}  {:>4}  {:>4}  {:>8.4}  {:>9.4}", r.region_id, r.row, r.col, r.value, r.local_i);
            }
            if let Some(p) = out {
                write_json(&p, &rows)?;
            }
        }
        Command::Run { out, manifest, cfg } => {
            let cfg = match manifest {
                Some(p) => Manifest::load(&p)?.config,
                None => cfg.resolve()?,
            };
            let output = run_pipeline(&cfg, &out)?;
            print!("{}", output.comparison.table());
            println!("{} stages complete in {}", output.manifest.completed(), out.display());
        }
        Command::Inspect { checkpoint } => inspect(&checkpoint)?,
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| fairlayout::Error::Format(format!("checkpoint: {e}")))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(DENOISER_FORMAT) => {
            let (model, meta): (Denoiser, TrainingMeta) = Denoiser::from_checkpoint(&text)?;
            println!("model checkpoint");
            println!("  config: {:?}", model.config);
            println!("  schedule: {:?}", model.schedule);
            println!("  categories: {}, condition width: {}", model.k_cat, model.cond_dim);
            println!(
                "  parameters: {} (closed form {})",
                model.parameter_count(),
                model.config.parameter_count(model.k_cat, model.cond_dim)
            );
            println!("  epoch: {} of {}", meta.epoch, meta.config.epochs);
            if let (Some(first), Some(last)) = (meta.loss_curve.first(), meta.loss_curve.last()) {
                println!("  loss: {first:.4} -> {last:.4}");
            }
            println!("  fair-demand module: {}", if meta.fairdemand.is_some() { "present" } else { "absent" });
        }
        Some(FAIRDEMAND_FORMAT) => {
            let fd = FairDemandParams::load(path)?;
            println!("fair-demand checkpoint");
            println!(
                "  attributes: {}, categories: {}, features: {}, hidden: {}",
                fd.attr_dim, fd.k_cat, fd.feature_dim, fd.hidden
            );
            println!("  parameters: {}", fd.params().count());
        }
        other => {
            return Err(fairlayout::Error::Format(format!("unrecognized checkpoint format {other:?}")).into());
        }
    }
    Ok(())
}
