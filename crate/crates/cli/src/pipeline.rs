//! The end-to-end experiment: synth, pretrain-fairness, train, sample,
//! evaluate, baselines. Every artifact lands inside one run directory.

use std::path::{Path, PathBuf};

use fairlayout::baselines::{drf_allocate, walking_based, AllocationBudget};
use fairlayout::citygrid::{save_dataset, Dataset};
use fairlayout::denoiser::Denoiser;
use fairlayout::fairdemand::{dataset_conditions, pretrain, FairDemandParams, PretrainLog};
use fairlayout::metrics::{evaluate_with_mode, MetricsReport};
use fairlayout::sampler::generate_for_dataset;
use fairlayout::sde::NoiseSchedule;
use fairlayout::train::{start, train, training_items, TrainingMeta};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Seeds};
use crate::report::Comparison;
use crate::CliError;

pub const STAGES: [&str; 6] = ["synth", "pretrain-fairness", "train", "sample", "evaluate", "baselines"];
pub const MANIFEST_FORMAT: &str = "fairlayout-run";

/// Name of the generated method in reports.
pub const GENERATED: &str = "generated";
pub const WALKING: &str = "walking-based";
pub const DRF: &str = "drf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub complete: bool,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::Config(format!("{} is not a run manifest", path.display())));
        }
        if m.config.hash() != m.config_hash {
            return Err(CliError::Config("manifest config does not match its hash".into()));
        }
        Ok(m)
    }

    pub fn completed(&self) -> usize {
        self.stages.iter().filter(|s| s.complete).count()
    }
}

/// Everything the pipeline produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub comparison: Comparison,
    pub loss_curve: Vec<f64>,
    pub pretrain_log: PretrainLog,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn staged<T>(stage: &'static str, r: Result<T, CliError>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Stage {
        stage,
        source: Box::new(e),
    })
}

/// Pretrains the conditioning module on `ds` from the configured seeds.
pub fn pretrain_fairdemand(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    checkpoint: Option<&Path>,
) -> Result<(FairDemandParams, PretrainLog), CliError> {
    let init = FairDemandParams::for_dataset(ds, cfg.fairdemand.hidden, cfg.seeds.fairdemand_init);
    Ok(pretrain(ds, init, &cfg.pretrain_config(), checkpoint)?)
}

/// Trains a fresh denoiser to the configured epoch count.
pub fn train_denoiser(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    fairdemand: &FairDemandParams,
    checkpoint: Option<&Path>,
) -> Result<(Denoiser, TrainingMeta), CliError> {
    let items = training_items(ds, fairdemand)?;
    let mut model = Denoiser::new(
        cfg.denoiser,
        NoiseSchedule::of_kind(cfg.schedule),
        ds.k_cat(),
        fairdemand.hidden,
        cfg.seeds.model_init,
    )?;
    let mut meta = start(&model, cfg.train_config(), Some(fairdemand.clone()));
    train(&mut model, &mut meta, &items, cfg.training.epochs, checkpoint)?;
    Ok((model, meta))
}

/// Samples one layout per region of `ds` with the model's own conditioning
/// module.
pub fn generate(
    model: &Denoiser,
    fairdemand: &FairDemandParams,
    ds: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<Dataset, CliError> {
    let conditions = dataset_conditions(ds, fairdemand)?;
    let layouts = generate_for_dataset(model, ds, &conditions, &cfg.sampler, cfg.seeds.sample)?;
    Ok(ds.with_layouts(layouts.into_iter().map(|(g, p)| (g, Some(p))).collect())?)
}

/// One unit of every facility category per region, capped at `N_max`.
pub fn default_budget(ds: &Dataset) -> AllocationBudget {
    AllocationBudget {
        total_units: vec![ds.len(); ds.k_cat()],
        per_region_cap: ds.n_max,
    }
}

struct Run<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn complete(&mut self, stage: &str, artifacts: &[&str]) -> Result<(), CliError> {
        self.manifest.stages.push(StageRecord {
            name: stage.into(),
            complete: true,
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        });
        log::info!("stage {stage} complete");
        self.save()
    }

    fn save(&self) -> Result<(), CliError> {
        write_json(&self.path("manifest.json"), &self.manifest)
    }
}

/// Runs all six stages into `dir`. On failure the manifest names the failed
/// stage and earlier artifacts are kept.
pub fn run_pipeline(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut run = Run {
        dir,
        manifest: Manifest {
            format: MANIFEST_FORMAT.into(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds,
            config: cfg.clone(),
            stages: Vec::new(),
            failed_stage: None,
        },
    };
    write_text(&run.path("config.toml"), &cfg.to_toml()?)?;
    run.save()?;
    let result = stages(cfg, &mut run);
    if let Err(CliError::Stage { stage, .. }) = &result {
        run.manifest.failed_stage = Some(stage.to_string());
        run.save()?;
    }
    result
}

fn stages(cfg: &ExperimentConfig, run: &mut Run<'_>) -> Result<RunOutput, CliError> {
    let (train_ds, eval_ds) = staged("synth", (|| {
        let train_ds = cfg.data.train.load(cfg.seeds.synth_train)?;
        let eval_ds = match &cfg.data.eval {
            Some(src) => src.load(cfg.seeds.synth_eval)?,
            None => train_ds.clone(),
        };
        save_dataset(&train_ds, run.path("train.jsonl"))?;
        save_dataset(&eval_ds, run.path("eval.jsonl"))?;
        Ok((train_ds, eval_ds))
    })())?;
    run.complete("synth", &["train.jsonl", "eval.jsonl"])?;

    let (fairdemand, pretrain_log) = staged("pretrain-fairness", (|| {
        let out = pretrain_fairdemand(cfg, &train_ds, Some(&run.path("fairdemand.json")))?;
        write_json(&run.path("pretrain_log.json"), &out.1)?;
        Ok(out)
    })())?;
    run.complete("pretrain-fairness", &["fairdemand.json", "pretrain_log.json"])?;

    let (model, meta) = staged("train", train_denoiser(cfg, &train_ds, &fairdemand, Some(&run.path("model.json"))))?;
    run.complete("train", &["model.json"])?;

    let generated = staged("sample", (|| {
        let g = generate(&model, &fairdemand, &eval_ds, cfg)?;
        save_dataset(&g, run.path("generated.jsonl"))?;
        Ok(g)
    })())?;
    run.complete("sample", &["generated.jsonl"])?;

    let report = staged("evaluate", (|| {
        let r = evaluate_with_mode(&generated, &eval_ds, cfg.evaluation.mode)?;
        write_json(&run.path("report.json"), &r)?;
        Ok(r)
    })())?;
    run.complete("evaluate", &["report.json"])?;

    let comparison = staged("baselines", baselines(cfg, run, &eval_ds, report))?;
    run.complete(
        "baselines",
        &["walking.jsonl", "drf.jsonl", "drf_grants.jsonl", "comparison.json", "comparison.txt", "plots"],
    )?;
    Ok(RunOutput {
        manifest: run.manifest.clone(),
        comparison,
        loss_curve: meta.loss_curve,
        pretrain_log,
    })
}

fn baselines(cfg: &ExperimentConfig, run: &Run<'_>, eval_ds: &Dataset, generated: MetricsReport) -> Result<Comparison, CliError> {
    let mut cmp = Comparison::default();
    cmp.push(GENERATED, generated);
    let (walking, _) = walking_based(eval_ds)?;
    save_dataset(&walking, run.path("walking.jsonl"))?;
    cmp.push(WALKING, evaluate_with_mode(&walking, eval_ds, cfg.evaluation.mode)?);
    if cfg.evaluation.drf {
        let budget = cfg.evaluation.budget.clone().unwrap_or_else(|| default_budget(eval_ds));
        match drf_allocate(eval_ds, &budget) {
            Ok(alloc) => {
                save_dataset(&alloc.layouts, run.path("drf.jsonl"))?;
                let lines: Vec<String> =
                    alloc.grants.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
                write_text(&run.path("drf_grants.jsonl"), &(lines.join("\n") + "\n"))?;
                cmp.push(DRF, evaluate_with_mode(&alloc.layouts, eval_ds, cfg.evaluation.mode)?);
            }
            Err(fairlayout::Error::Degenerate(msg)) => log::warn!("drf skipped: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }
    write_json(&run.path("comparison.json"), &cmp)?;
    write_text(&run.path("comparison.txt"), &cmp.table())?;
    cmp.write_plots(&run.path("plots"))?;
    Ok(cmp)
}
