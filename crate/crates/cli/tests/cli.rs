use std::path::Path;
use std::process::{Command, Output};

use fairlayout::citygrid::{load_dataset, GeneratorConfig};
use fairlayout::denoiser::{Denoiser, DenoiserConfig};
use fairlayout::sampler::SamplerConfig;
use fairlayout::sde::NoiseSchedule;
use fairlayout_cli::config::{DataConfig, DataSource, ExperimentConfig, FairDemandSection, TrainingSection};
use fairlayout_cli::pipeline::{run_pipeline, Manifest, STAGES};
use fairlayout_cli::{CliError, EXIT_CONFIG, EXIT_RUNTIME};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairlayout"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny() -> ExperimentConfig {
    let train = GeneratorConfig {
        regions: 5,
        n_max: 24,
        node_range: (16, 18),
        ..Default::default()
    };
    ExperimentConfig {
        data: DataConfig {
            train: DataSource::synthetic(train.clone()),
            eval: Some(DataSource::synthetic(GeneratorConfig {
                regions: 3,
                balance: 0.3,
                ..train
            })),
        },
        denoiser: DenoiserConfig {
            layers: 1,
            d_hidden: 8,
            heads: 2,
            m_walk: 4,
            time_embed_dim: 8,
            dropout: 0.0,
        },
        training: TrainingSection {
            epochs: 2,
            batch: 4,
            ..Default::default()
        },
        fairdemand: FairDemandSection {
            hidden: 8,
            epochs: 2,
            ..Default::default()
        },
        sampler: SamplerConfig {
            steps: 10,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn pipeline_completes_all_stages_and_reruns_identically() {
    let cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, a.path()).unwrap();
    assert_eq!(out.manifest.completed(), STAGES.len());
    assert_eq!(out.manifest.config_hash, cfg.hash());
    for f in ["config.toml", "report.json", "comparison.txt", "plots/average.svg", "walking.jsonl", "model.json"] {
        assert!(a.path().join(f).exists(), "{f} missing");
    }
    let manifest = Manifest::load(&a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.config, cfg);

    let b = tempfile::tempdir().unwrap();
    let status = bin(&["run", "--manifest", arg(&a.path().join("manifest.json")), "--out", arg(b.path())]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["report.json", "comparison.json", "generated.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_stage_is_named_and_earlier_artifacts_kept() {
    let mut cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.jsonl");
    std::fs::write(&data, "not a dataset\n").unwrap();
    cfg.data.train = DataSource {
        path: Some(data),
        synth: None,
    };
    let run = dir.path().join("run");
    let err = run_pipeline(&cfg, &run).unwrap_err();
    assert!(matches!(err, CliError::Stage { stage: "synth", .. }), "{err}");
    assert_eq!(err.exit_code(), EXIT_RUNTIME);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_stage"], "synth");
    assert!(run.join("config.toml").exists());
}

#[test]
fn subcommands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);
    let ok = |o: Output| {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(bin(&["synth", "--out", arg(&p("city.jsonl")), "--regions", "9", "--balance", "0.3", "--seed", "4"]));
    assert_eq!(load_dataset(p("city.jsonl")).unwrap().len(), 9);

    let table = ok(bin(&["baseline", "--method", "walking", "--dataset", arg(&p("city.jsonl")), "--out", arg(&p("walk.jsonl"))]));
    assert!(table.contains("walking-based"));
    let eval = ok(bin(&[
        "evaluate",
        "--layouts",
        arg(&p("walk.jsonl")),
        "--dataset",
        arg(&p("city.jsonl")),
        "--out",
        arg(&p("report.json")),
    ]));
    assert!(eval.contains("Gini"));

    std::fs::write(p("budget.json"), format!("{{\"total_units\": {:?}, \"per_region_cap\": 64}}", vec![2; 14])).unwrap();
    ok(bin(&[
        "baseline",
        "--method",
        "drf",
        "--dataset",
        arg(&p("city.jsonl")),
        "--budget",
        arg(&p("budget.json")),
        "--out",
        arg(&p("drf.jsonl")),
        "--log",
        arg(&p("grants.jsonl")),
    ]));
    assert!(std::fs::read_to_string(p("grants.jsonl")).unwrap().lines().count() > 0);

    let moran = ok(bin(&["moran", "--layouts", arg(&p("walk.jsonl")), "--dataset", arg(&p("city.jsonl"))]));
    assert_eq!(moran.lines().count(), 10);

    let cfg = tiny();
    std::fs::write(p("exp.toml"), cfg.to_toml().unwrap()).unwrap();
    ok(bin(&["synth", "--out", arg(&p("small.jsonl")), "--regions", "4", "--n-max", "24", "--seed", "1"]));
    ok(bin(&["pretrain-fairness", "--dataset", arg(&p("small.jsonl")), "--out", arg(&p("fd.json")), "--config", arg(&p("exp.toml"))]));
    let (small, fd, model, exp) = (p("small.jsonl"), p("fd.json"), p("model.json"), p("exp.toml"));
    ok(bin(&[
        "train",
        "--dataset",
        arg(&small),
        "--fairdemand",
        arg(&fd),
        "--out",
        arg(&model),
        "--config",
        arg(&exp),
    ]));
    ok(bin(&[
        "sample",
        "--model",
        arg(&p("model.json")),
        "--dataset",
        arg(&p("small.jsonl")),
        "--out",
        arg(&p("gen.jsonl")),
        "--method",
        "em",
        "--steps",
        "10",
    ]));
    assert_eq!(load_dataset(p("gen.jsonl")).unwrap().len(), 4);
    let info = ok(bin(&["inspect", arg(&p("model.json"))]));
    assert!(info.contains("epoch: 2 of 2"), "{info}");
    assert!(ok(bin(&["inspect", arg(&p("fd.json"))])).contains("fair-demand"));
}

#[test]
fn training_resumes_to_the_same_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);
    let mut cfg = tiny();
    cfg.training.epochs = 4;
    std::fs::write(p("exp.toml"), cfg.to_toml().unwrap()).unwrap();
    assert!(bin(&["synth", "--out", arg(&p("d.jsonl")), "--regions", "4", "--n-max", "24", "--seed", "2"]).status.success());
    let (data, exp, full, part) = (p("d.jsonl"), p("exp.toml"), p("full.json"), p("part.json"));
    let train = |extra: &[&str]| {
        let mut args = vec!["train", "--dataset", arg(&data), "--config", arg(&exp)];
        args.extend_from_slice(extra);
        bin(&args)
    };
    let full_run = train(&["--out", arg(&full)]);
    assert!(full_run.status.success(), "{}", String::from_utf8_lossy(&full_run.stderr));
    assert!(train(&["--out", arg(&part), "--until", "2"]).status.success());
    let resumed = train(&["--out", arg(&part), "--resume", arg(&part)]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    assert_eq!(std::fs::read(p("full.json")).unwrap(), std::fs::read(p("part.json")).unwrap());
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[training]\nepochz = 1\n").unwrap();
    let o = bin(&["run", "--config", arg(&bad), "--out", arg(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let missing = dir.path().join("missing.toml");
    std::fs::write(&missing, "[data.train]\npath = \"/nonexistent/city.jsonl\"\n").unwrap();
    let o = bin(&["run", "--config", arg(&missing), "--out", arg(&dir.path().join("r2"))]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let corrupt = dir.path().join("model.json");
    std::fs::write(&corrupt, "{ not json").unwrap();
    assert_eq!(bin(&["inspect", arg(&corrupt)]).status.code(), Some(EXIT_RUNTIME));
    assert_eq!(bin(&["evaluate", "--layouts", "/nope", "--dataset", "/nope"]).status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn inspect_reports_fresh_checkpoints_and_version_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fresh.json");
    let cfg = DenoiserConfig::default();
    let model = Denoiser::new(cfg, NoiseSchedule::cosine(), 14, 128, 0).unwrap();
    // Hand count for 3 layers, width 128, 4 heads, 14 categories, 128-wide
    // conditions: inputs 57 472, layers 3 × 215 552, heads 117 519.
    assert_eq!(model.parameter_count(), 821_647);
    assert_eq!(cfg.parameter_count(14, 128), 821_647);
    let meta = fairlayout::train::start(&model, Default::default(), None);
    model.save(&path, &meta).unwrap();
    let o = bin(&["inspect", arg(&path)]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("epoch: 0 of 200"), "{text}");
    assert!(text.contains("parameters: 821647 (closed form 821647)"), "{text}");

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["version"] = 99.into();
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = bin(&["inspect", arg(&path)]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}
