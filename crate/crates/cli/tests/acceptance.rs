//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Exits 0 unless `FAIRLAYOUT_ACCEPTANCE_STRICT=1`, in which case any failure
//! makes the exit status non-zero. `FAIRLAYOUT_ACCEPTANCE_ONLY=3,5` runs a
//! subset.

use std::cell::RefCell;
use std::collections::HashSet;
use std::time::{Duration, Instant};

use fairlayout::citygrid::{
    generate_synthetic_city, CategoryTable, Dataset, GeneratorConfig, Region, RegionRecord, WalkingGraph,
};
use fairlayout::denoiser::{Denoiser, DenoiserConfig};
use fairlayout::fairdemand::{dataset_conditions, fairness_loss, pretrain, FairDemandParams, PretrainConfig};
use fairlayout::metrics::{
    self, average, evaluate_with_mode, gini, local_morans_i, region_accessibility, region_diversity,
    region_efficiency, rook_weights, EfficiencyMode,
};
use fairlayout::sampler::{integrate, sample, ResidenceTemplate, SamplerConfig, SamplerMethod, State, T_END};
use fairlayout::sde::{
    gaussian_matrix, make_condition_graph, perturb, score_matching_loss, symmetric_noise,
    DiffusionInput, NoisePredictor, NoiseSchedule, NoisySample,
};
use fairlayout::train::{start, train, training_items};
use fairlayout_cli::config::{DataConfig, DataSource, ExperimentConfig, FairDemandSection, TrainingSection};
use fairlayout_cli::pipeline::{run_pipeline, RunOutput, GENERATED, STAGES, WALKING};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// 1 -------------------------------------------------------------------------

fn table_arithmetic() -> Outcome {
    let clock = Instant::now();
    let rows: [(&str, [f64; 5], f64); 10] = [
        ("Walking-based", [0.419, 0.223, 0.600, 0.167, 0.710], 0.140),
        ("ACA", [0.484, 0.501, 0.749, 0.111, 0.869], 0.195),
        ("GA", [0.445, 0.393, 0.645, 0.102, 0.479], 0.221),
        ("DRF", [0.449, 0.604, 0.728, 0.123, 0.376], 0.306),
        ("VGAE", [0.180, 0.263, 0.218, 0.356, 0.701], 0.063),
        ("GraphRNN", [0.442, 0.546, 0.503, 0.361, 0.387], 0.293),
        ("CondGEN", [0.643, 0.667, 0.563, 0.345, 0.323], 0.379),
        ("DDPM", [0.564, 0.689, 0.820, 0.402, 0.394], 0.416),
        ("EDGE", [0.431, 0.590, 0.667, 0.234, 0.327], 0.341),
        ("Ours", [0.888, 0.923, 0.843, 0.520, 0.232], 0.588),
    ];
    let mut bad = Vec::new();
    for (name, [l, e, d, a, g], want) in rows {
        let got = average(l, e, d, a, g);
        if (got - want).abs() > 0.0005 {
            bad.push(format!("{name} gives {got:.4}, printed {want:.3}"));
        }
    }
    let elapsed = clock.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(1);
    let detail = if bad.is_empty() {
        format!("10/10 rows within 0.0005 in {}", secs(elapsed))
    } else {
        format!("{}/10 rows within 0.0005; {}", 10 - bad.len(), bad.join("; "))
    };
    Outcome::new(pass, detail)
}

// 2 -------------------------------------------------------------------------

fn forward_process() -> Outcome {
    let clock = Instant::now();
    let sched = NoiseSchedule::linear();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let particles = 100_000;
    let mut notes = Vec::new();
    let mut pass = true;
    for t in [0.25, 0.5, 1.0] {
        let (alpha, sigma) = sched.marginal_params(t).unwrap();
        let mut xs = vec![1.0; particles];
        sched.simulate_forward(&mut xs, t, 1000, &mut rng);
        let mean = xs.iter().sum::<f64>() / particles as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (particles - 1) as f64;
        let scale = (alpha * alpha + sigma * sigma).sqrt();
        let mean_ok = (mean - alpha).abs() <= 0.02 * scale;
        let var_ok = (var / (sigma * sigma) - 1.0).abs() <= 0.02;
        pass &= mean_ok && var_ok;
        notes.push(format!("t={t}: mean {mean:.4} vs {alpha:.4}, var {var:.4} vs {:.4}", sigma * sigma));
    }
    // Pooled node and edge entries of perturbed graphs at t = 1.
    let ds = generate_synthetic_city(&GeneratorConfig { regions: 8, ..Default::default() }, 2).unwrap();
    let mut pooled = Vec::with_capacity(particles);
    'outer: for round in 0.. {
        for r in &ds.regions {
            let s = perturb(&r.graph, ds.k_cat(), 1.0, &sched, &mut rng).unwrap();
            let n = s.n();
            pooled.extend(s.x.iter().copied());
            for i in 0..n {
                for j in i + 1..n {
                    pooled.push(s.a[[i, j]]);
                }
            }
            if pooled.len() >= particles {
                break 'outer;
            }
        }
        assert!(round < 10_000);
    }
    pooled.truncate(particles);
    pooled.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let m = pooled.len() as f64;
    let ks = pooled
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = normal.cdf(v);
            (c - i as f64 / m).abs().max((i as f64 + 1.0) / m - c)
        })
        .fold(0.0, f64::max);
    let elapsed = clock.elapsed();
    pass &= ks < 0.05 && elapsed < Duration::from_secs(30);
    notes.push(format!("KS {ks:.4} over {} entries", pooled.len()));
    Outcome::new(pass, format!("{} in {}", notes.join("; "), secs(elapsed)))
}

// 3 -------------------------------------------------------------------------

struct Oracle;

impl NoisePredictor for Oracle {
    fn predict(&self, s: &NoisySample, _: &Array2<f64>, _: &Array2<f64>) -> fairlayout::Result<(Array2<f64>, Array2<f64>)> {
        Ok((s.eps_x.clone(), s.eps_a.clone()))
    }
}

struct Zero;

impl NoisePredictor for Zero {
    fn predict(&self, s: &NoisySample, _: &Array2<f64>, _: &Array2<f64>) -> fairlayout::Result<(Array2<f64>, Array2<f64>)> {
        Ok((Array2::zeros(s.x.dim()), Array2::zeros(s.a.dim())))
    }
}

fn loss_sanity() -> Outcome {
    let ds = generate_synthetic_city(&GeneratorConfig { regions: 1, ..Default::default() }, 3).unwrap();
    let g = &ds.regions[0].graph;
    let cond = Array2::zeros((ds.n_max, 4));
    let abar = make_condition_graph(g, ds.categories.residence());
    let batch = vec![
        DiffusionInput {
            graph: g,
            condition: &cond,
            condition_graph: &abar,
        };
        10_000
    ];
    let sched = NoiseSchedule::cosine();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let oracle = score_matching_loss(&Oracle, &batch, ds.k_cat(), &sched, &mut rng).unwrap();
    let zero = score_matching_loss(&Zero, &batch, ds.k_cat(), &sched, &mut rng).unwrap();
    let n = g.n();
    let active = (n * ds.k_cat() + n * (n - 1)) as f64;
    let rel = (zero / active - 1.0).abs();
    Outcome::new(
        oracle == 0.0 && rel < 0.05,
        format!("oracle loss {oracle}, zero predictor {zero:.2} vs {active} active entries ({:.2}% off)", rel * 100.0),
    )
}

// 4 -------------------------------------------------------------------------

fn denoiser_numerics() -> Outcome {
    let cfg = DenoiserConfig {
        layers: 2,
        d_hidden: 16,
        heads: 4,
        m_walk: 5,
        time_embed_dim: 8,
        dropout: 0.0,
    };
    let k_cat = 14;
    let cond_dim = 4;
    let mut model = Denoiser::new(cfg, NoiseSchedule::cosine(), k_cat, cond_dim, 4).unwrap();
    let graph = WalkingGraph::from_edges(
        8,
        k_cat,
        vec![0, 0, 3, 5, 7, 9],
        &[(0, 2), (0, 3), (1, 3), (1, 4), (2, 5), (4, 5)],
        None,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sample = perturb(&graph, k_cat, 0.4, &model.schedule, &mut rng).unwrap();
    let cond = gaussian_matrix(8, cond_dim, &mut rng);
    let abar = make_condition_graph(&graph, 0);
    let batch = [(sample.clone(), &cond, &abar)];
    let (_, grads) = model.loss_and_grads(&batch, None).unwrap();
    // Norm-wise relative error per parameter tensor, every entry differenced.
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    let mut checked = 0;
    let h = 1e-5;
    assert_eq!(grads.len(), model.params().len());
    for (pi, grad) in grads.iter().enumerate() {
        let (rows, cols) = model.params().value(pi).dim();
        let (mut diff2, mut fd2, mut an2) = (0.0, 0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let orig = model.params().value(pi)[[r, c]];
                model.params_mut().value_mut(pi)[[r, c]] = orig + h;
                let (lp, _) = model.loss_and_grads(&batch, None).unwrap();
                model.params_mut().value_mut(pi)[[r, c]] = orig - h;
                let (lm, _) = model.loss_and_grads(&batch, None).unwrap();
                model.params_mut().value_mut(pi)[[r, c]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grad.as_ref().map_or(0.0, |g| g[[r, c]]);
                diff2 += (fd - an) * (fd - an);
                fd2 += fd * fd;
                an2 += an * an;
                checked += 1;
            }
        }
        let scale = fd2.max(an2).sqrt();
        let rel = if scale > 0.0 { diff2.sqrt() / scale } else { 0.0 };
        if rel > worst {
            worst = rel;
            worst_name = model.params().name(pi).to_string();
        }
    }
    // Permutation equivariance of predict_noise.
    let (x, a) = (&sample.x, &sample.a);
    let (ex, ea) = model.predict_noise(x, a, 0.4, &cond, &abar).unwrap();
    let n = graph.n();
    let mut perm_err: f64 = 0.0;
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut px = Array2::zeros(x.dim());
        let mut pa = Array2::zeros(a.dim());
        let mut pabar = Array2::zeros(abar.dim());
        let mut pcond = cond.clone();
        for i in 0..n {
            px.row_mut(perm[i]).assign(&x.row(i));
            pcond.row_mut(perm[i]).assign(&cond.row(i));
            for j in 0..n {
                pa[[perm[i], perm[j]]] = a[[i, j]];
                pabar[[perm[i], perm[j]]] = abar[[i, j]];
            }
        }
        let (pex, pea) = model.predict_noise(&px, &pa, 0.4, &pcond, &pabar).unwrap();
        for i in 0..n {
            for k in 0..k_cat {
                perm_err = perm_err.max((pex[[perm[i], k]] - ex[[i, k]]).abs());
            }
            for j in 0..n {
                perm_err = perm_err.max((pea[[perm[i], perm[j]]] - ea[[i, j]]).abs());
            }
        }
    }
    Outcome::new(
        worst < 1e-4 && perm_err < 1e-5,
        format!("max per-tensor relative gradient error {worst:.2e} ({worst_name}) over {checked} entries; max permutation error {perm_err:.2e} over 20 permutations"),
    )
}

// 5 -------------------------------------------------------------------------

mod brute {
    //! Direct transcriptions of the metric definitions, loop by loop.

    use fairlayout::citygrid::WalkingGraph;

    fn served(g: &WalkingGraph, h: usize, k: usize) -> f64 {
        let mut best = 0.0;
        for n in 0..g.n() {
            if g.category(n) == k && g.has_edge(n, h) {
                best = 1.0;
            }
        }
        best
    }

    pub fn efficiency(g: &WalkingGraph, cats: &[usize], literal: bool) -> Option<f64> {
        let homes: Vec<usize> = (0..g.n()).filter(|&i| g.category(i) == 0).collect();
        if homes.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for &k in cats {
            let count = (0..g.n()).filter(|&i| g.category(i) == k).count();
            if count == 0 {
                continue;
            }
            let mut covered = 0.0;
            for &h in &homes {
                covered += served(g, h, k);
            }
            total += covered / if literal { count as f64 } else { homes.len() as f64 };
        }
        Some(total / cats.len() as f64)
    }

    pub fn diversity(g: &WalkingGraph, k_cat: usize) -> f64 {
        let mut present = 0;
        for k in 1..k_cat {
            if (0..g.n()).any(|i| g.category(i) == k) {
                present += 1;
            }
        }
        present as f64 / (k_cat - 1) as f64
    }

    pub fn accessibility(g: &WalkingGraph, k_cat: usize, population: u64) -> f64 {
        let mut total = 0.0;
        for k in 1..k_cat {
            let mut covered = 0.0;
            for h in 0..g.n() {
                if g.category(h) == 0 {
                    covered += served(g, h, k);
                }
            }
            total += covered;
        }
        total / (k_cat - 1) as f64 / (population as f64 / 1000.0)
    }

    pub fn gini(xs: &[f64]) -> f64 {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let total: f64 = v.iter().sum();
        let mut nested = 0.0;
        for i in 0..n {
            for x in v.iter().take(i + 1) {
                nested += x;
            }
        }
        1.0 - 2.0 * nested / (n as f64 * total)
    }

    pub fn morans_i(values: &[f64], cols: usize) -> Vec<f64> {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        (0..n)
            .map(|i| {
                let (ri, ci) = (i / cols, i % cols);
                let nbrs: Vec<usize> = (0..n)
                    .filter(|&j| {
                        let (rj, cj) = (j / cols, j % cols);
                        ri.abs_diff(rj) + ci.abs_diff(cj) == 1
                    })
                    .collect();
                let lag: f64 = nbrs.iter().map(|&j| (values[j] - mean) / nbrs.len() as f64).sum();
                (values[i] - mean) / m2 * lag
            })
            .collect()
    }
}

fn random_city(rng: &mut ChaCha8Rng, regions: usize) -> Dataset {
    let table = CategoryTable::standard();
    let k = table.len();
    let n_max = 8;
    let regions = (0..regions)
        .map(|id| {
            let n = rng.random_range(1..=n_max);
            let cats: Vec<usize> = (0..n)
                .map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..k) })
                .collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random_bool(0.5) {
                        edges.push((i, j));
                    }
                }
            }
            let graph = WalkingGraph::from_edges(n_max, k, cats, &edges, None).unwrap();
            let population = rng.random_range(200..6000);
            Region {
                record: RegionRecord {
                    region_id: id,
                    urban_attributes: vec![population as f64, 0.0, 0.0, 0.0],
                    demand: vec![0; k],
                    grid_features: vec![vec![0.0; 2]; n],
                    population,
                    elderly_population: 0,
                },
                graph,
                provenance: None,
            }
        })
        .collect();
    Dataset {
        categories: table,
        n_max,
        grid_size_m: 2000.0,
        walk_threshold_m: 1250.0,
        city_cols: 10,
        feature_dim: 2,
        regions,
    }
}

fn metric_oracles() -> Outcome {
    let tol = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ds = random_city(&mut rng, 100);
    let table = &ds.categories;
    let k = table.len();
    let (life, elderly) = (table.life_service(), table.elderly());
    let mismatches = RefCell::new(Vec::new());
    let check = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > tol {
            mismatches.borrow_mut().push(format!("{what}: {got} vs {want}"));
        }
    };
    for r in &ds.regions {
        let g = &r.graph;
        for (mode, literal) in [(EfficiencyMode::Coverage, false), (EfficiencyMode::Literal, true)] {
            for cats in [&life, &elderly] {
                match (region_efficiency(g, 0, cats, mode), brute::efficiency(g, cats, literal)) {
                    (Some(a), Some(b)) => check("efficiency", a, b),
                    (None, None) => {}
                    (a, b) => mismatches.borrow_mut().push(format!("efficiency definedness {a:?} vs {b:?}")),
                }
            }
        }
        check("diversity", region_diversity(g, table), brute::diversity(g, k));
        check(
            "accessibility",
            region_accessibility(g, r.record.population, table).unwrap(),
            brute::accessibility(g, k, r.record.population),
        );
    }
    let report = evaluate_with_mode(&ds, &ds, EfficiencyMode::Coverage).unwrap();
    let composite: Vec<f64> = report.per_region_values.iter().map(|v| v.composite).collect();
    check("gini", report.gini, brute::gini(&composite));
    let local = local_morans_i(&composite, &rook_weights(&ds)).unwrap();
    for (a, b) in local.iter().zip(brute::morans_i(&composite, ds.city_cols)) {
        check("moran", *a, b);
    }
    for _ in 0..100 {
        let xs: Vec<f64> = (0..rng.random_range(2..12)).map(|_| rng.random_range(0.0..3.0)).collect();
        check("gini", gini(&xs).unwrap(), brute::gini(&xs));
    }
    let a1 = metrics::gini(&[1.0; 4]).unwrap();
    let a2 = metrics::gini(&[0.0, 0.0, 0.0, 4.0]).unwrap();
    check("gini anchor", a1, -0.25);
    check("gini anchor", a2, 0.5);
    let mismatches = mismatches.into_inner();
    Outcome::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("100 graphs agree within {tol:e}; anchors {a1} and {a2}")
        } else {
            format!("{} mismatches, first: {}", mismatches.len(), mismatches[0])
        },
    )
}

// 6, 7 ----------------------------------------------------------------------

struct EndToEnd {
    runs: Vec<(RunOutput, Duration)>,
}

fn end_to_end() -> EndToEnd {
    let runs = (0..3)
        .map(|s| {
            let mut cfg = ExperimentConfig::desk();
            cfg.seeds = cfg.seeds.offset(s);
            let dir = tempfile::tempdir().unwrap();
            let clock = Instant::now();
            let out = run_pipeline(&cfg, dir.path()).unwrap();
            let elapsed = clock.elapsed();
            eprintln!("  desk run seed offset {s}: {}", secs(elapsed));
            eprint!("{}", out.comparison.table());
            (out, elapsed)
        })
        .collect();
    EndToEnd { runs }
}

fn training_descent(e2e: &EndToEnd) -> Outcome {
    let (out, elapsed) = &e2e.runs[0];
    let curve = &out.loss_curve;
    let (first, last) = (curve[0], *curve.last().unwrap());
    Outcome::new(
        last < 0.5 * first && curve.len() == 200 && *elapsed < Duration::from_secs(15 * 60),
        format!(
            "epoch-mean loss {first:.3} -> {last:.3} ({:.1}%) over {} epochs; full desk run {}",
            100.0 * last / first,
            curve.len(),
            secs(*elapsed)
        ),
    )
}

fn directional_claim(e2e: &EndToEnd) -> Outcome {
    let mut wins = 0;
    let mut notes = Vec::new();
    let mut total = Duration::ZERO;
    for (out, elapsed) in &e2e.runs {
        let g = out.comparison.get(GENERATED).unwrap().average;
        let w = out.comparison.get(WALKING).unwrap().average;
        wins += usize::from(g > w);
        notes.push(format!("{g:.3} vs {w:.3}"));
        total += *elapsed;
    }
    Outcome::new(
        wins == 3 && total < Duration::from_secs(30 * 60),
        format!("generated vs walking-based average: {}; {wins}/3 strict wins in {}", notes.join(", "), secs(total)),
    )
}

// 8 -------------------------------------------------------------------------

fn fairdemand_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let k = 14;
    let mut mask = vec![false; k];
    mask[0] = true;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let rows = rng.random_range(1..=8);
        let scale = rng.random_range(0.1..20.0);
        let logits = gaussian_matrix(rows, k, &mut rng) * scale;
        let l = fairness_loss(&logits, &mask).unwrap();
        lo = lo.min(l);
        hi = hi.max(l);
    }
    let ds = generate_synthetic_city(&GeneratorConfig { regions: 64, ..Default::default() }, 8).unwrap();
    let init = FairDemandParams::for_dataset(&ds, 32, 8);
    let (_, log) = pretrain(&ds, init, &PretrainConfig { seed: 8, ..Default::default() }, None).unwrap();
    let (e0, e1) = (log.min_entropy[0], *log.min_entropy.last().unwrap());
    Outcome::new(
        lo > 0.7311 && hi <= 1.0 && e1 > e0 && log.epoch_loss.len() == 60,
        format!("loss range [{lo:.4}, {hi:.4}] over 1000 batches; min entropy {e0:.6} -> {e1:.6} after 60 epochs"),
    )
}

// 9 -------------------------------------------------------------------------

fn sampler_consistency() -> Outcome {
    let clock = Instant::now();
    let ds = generate_synthetic_city(
        &GeneratorConfig {
            regions: 16,
            n_max: 24,
            node_range: (16, 18),
            ..Default::default()
        },
        9,
    )
    .unwrap();
    let fd = FairDemandParams::for_dataset(&ds, 8, 9);
    let items = training_items(&ds, &fd).unwrap();
    let cfg = DenoiserConfig {
        layers: 2,
        d_hidden: 16,
        heads: 4,
        m_walk: 6,
        time_embed_dim: 16,
        dropout: 0.0,
    };
    let mut model = Denoiser::new(cfg, NoiseSchedule::linear(), ds.k_cat(), fd.hidden, 9).unwrap();
    let train_cfg = fairlayout::train::TrainConfig {
        epochs: 600,
        lr: 1e-3,
        lr_decay: 0.995,
        seed: 9,
        ..Default::default()
    };
    let mut meta = start(&model, train_cfg, None);
    train(&mut model, &mut meta, &items, 600, None).unwrap();
    let conditions = dataset_conditions(&ds, &fd).unwrap();
    let res = ds.categories.residence();
    let density = |method: SamplerMethod, steps: usize| -> f64 {
        let sc = SamplerConfig {
            method,
            steps,
            ..Default::default()
        };
        let mut total = 0.0;
        for i in 0..256 {
            let region = &ds.regions[i % ds.len()];
            let template = ResidenceTemplate::from_graph(&region.graph, ds.k_cat(), res);
            let abar = make_condition_graph(&region.graph, res);
            let g = sample(&model, &conditions[i % ds.len()].values, &abar, &template, &sc, 1000 + i as u64).unwrap();
            let n = g.n() as f64;
            total += g.edges().len() as f64 / (n * (n - 1.0) / 2.0);
        }
        total / 256.0
    };
    let dpm = density(SamplerMethod::Dpm3, 200);
    let em = density(SamplerMethod::EulerMaruyama, 1000);
    let data: f64 = ds
        .regions
        .iter()
        .map(|r| {
            let n = r.graph.n() as f64;
            r.graph.edges().len() as f64 / (n * (n - 1.0) / 2.0)
        })
        .sum::<f64>()
        / ds.len() as f64;

    // Analytic Gaussian data: entries N(mu, s²) have ε̂(x, t) = σ (x − α mu) / (α² s² + σ²).
    let sched = NoiseSchedule::cosine();
    let (mu, sd) = (0.7, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let init = State {
        x: gaussian_matrix(256, 4, &mut rng),
        a: symmetric_noise(16, &mut rng),
    };
    let exact_eps = |v: f64, t: f64| {
        let (a, s) = sched.alpha_sigma(t);
        s * (v - a * mu) / (a * a * sd * sd + s * s)
    };
    let mut eps = |st: &State, t: f64| -> fairlayout::Result<State> {
        Ok(State {
            x: st.x.mapv(|v| exact_eps(v, t)),
            a: st.a.mapv(|v| exact_eps(v, t)),
        })
    };
    let out = integrate(&sched, SamplerMethod::Dpm3, 50, init.clone(), &mut eps, &mut rng, &mut |_, _, _| {}).unwrap();
    let flow = |v: f64| {
        let (a1, s1) = sched.alpha_sigma(1.0);
        let (ae, se) = sched.alpha_sigma(T_END);
        ae * mu + (ae * ae * sd * sd + se * se).sqrt() * (v - a1 * mu) / (a1 * a1 * sd * sd + s1 * s1).sqrt()
    };
    let want = init.x.mapv(flow);
    let got_mean = out.x.mean().unwrap();
    let want_mean = want.mean().unwrap();
    let mean_rel = (got_mean / want_mean - 1.0).abs();
    let worst = (&out.x - &want).iter().fold(0.0f64, |m, d| m.max(d.abs())) / want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let elapsed = clock.elapsed();
    Outcome::new(
        (dpm - em).abs() < 0.05 && mean_rel < 0.01,
        format!(
            "edge density dpm3/200 {dpm:.4}, euler-maruyama/1000 {em:.4} (data {data:.4}); Gaussian reverse mean {got_mean:.5} vs {want_mean:.5} ({:.3}% off, worst entry {:.3}%) in {}",
            mean_rel * 100.0,
            worst * 100.0,
            secs(elapsed)
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn tiny_config() -> ExperimentConfig {
    let train = GeneratorConfig {
        regions: 6,
        n_max: 24,
        node_range: (16, 20),
        ..Default::default()
    };
    let eval = GeneratorConfig {
        regions: 4,
        balance: 0.3,
        ..train.clone()
    };
    ExperimentConfig {
        data: DataConfig {
            train: DataSource::synthetic(train),
            eval: Some(DataSource::synthetic(eval)),
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
            epochs: 3,
            batch: 4,
            ..Default::default()
        },
        fairdemand: FairDemandSection {
            hidden: 8,
            epochs: 3,
            ..Default::default()
        },
        sampler: SamplerConfig {
            steps: 12,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn determinism() -> Outcome {
    let cfg = tiny_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outs: Vec<RunOutput> = dirs.iter().map(|d| run_pipeline(&cfg, d.path()).unwrap()).collect();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let mut same = Vec::new();
    for f in ["report.json", "comparison.json", "generated.jsonl", "manifest.json", "model.json"] {
        same.push((f, read(&dirs[0], f) == read(&dirs[1], f)));
    }
    let bits = |o: &RunOutput| -> Vec<u64> {
        o.comparison
            .methods
            .iter()
            .flat_map(|m| {
                let r = &m.report;
                [r.life_service, r.elderly_care, r.diversity, r.accessibility, r.gini, r.average]
            })
            .map(f64::to_bits)
            .collect()
    };
    let stages_done = outs[0].manifest.completed();
    let pass = same.iter().all(|s| s.1) && bits(&outs[0]) == bits(&outs[1]) && stages_done == STAGES.len();
    let differing: Vec<&str> = same.iter().filter(|s| !s.1).map(|s| s.0).collect();
    Outcome::new(
        pass,
        format!(
            "{stages_done}/{} stages; reports bit-identical across two runs{}",
            STAGES.len(),
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let only: Option<HashSet<usize>> = std::env::var("FAIRLAYOUT_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().is_none_or(|s| s.contains(&i));
    let strict = std::env::var("FAIRLAYOUT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |i: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wanted(i) {
            let o = f();
            println!("criterion {i} ({name}): {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((i, name, o));
        }
    };
    run(1, "table arithmetic", &table_arithmetic);
    run(2, "forward process", &forward_process);
    run(3, "loss sanity", &loss_sanity);
    run(4, "denoiser numerics", &denoiser_numerics);
    run(5, "metric oracles", &metric_oracles);
    if wanted(6) || wanted(7) {
        let e2e = end_to_end();
        run(6, "training descent", &|| training_descent(&e2e));
        run(7, "end-to-end ordering", &|| directional_claim(&e2e));
    }
    run(8, "fair-demand bound", &fairdemand_bound);
    run(9, "sampler consistency", &sampler_consistency);
    run(10, "determinism", &determinism);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| r.0.to_string()).collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
