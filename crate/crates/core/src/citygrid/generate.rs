//! Synthetic city generator.
//!
//! Each region has a residential hub near one corner of its cell. Facility
//! categories are either *served* (sited within walking range of every
//! residence) or *unserved* (sited in the far part of the cell, or absent).
//! The balance parameter is the per-category probability of being served.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_walking_graph, classify_demand, default_bands, CategoryTable, Dataset, DemandBand, Region,
    RegionRecord, DEFAULT_GRID_SIZE_M, DEFAULT_N_MAX, DEFAULT_WALK_THRESHOLD_M, MAX_NODES, MIN_NODES,
};
use crate::error::{Error, Result};

/// Width of the per-node site descriptor: residence flag, jittered x, y
/// (fractions of the cell), capacity, constant one.
pub const FEATURE_DIM: usize = 5;

/// Residences are scattered within this radius of the hub.
const HUB_RADIUS_M: f64 = 150.0;
/// Margin kept between the served ring and the walk threshold.
const SERVED_MARGIN_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub regions: usize,
    pub n_max: usize,
    /// Inclusive node-count range per region, residences included.
    pub node_range: (usize, usize),
    /// Inclusive residence-count range per region.
    pub residences: (usize, usize),
    /// Probability that a facility category is served within walking range.
    pub balance: f64,
    /// Probability that an unserved category is absent altogether.
    pub absent_prob: f64,
    pub grid_size_m: f64,
    pub walk_threshold_m: f64,
    /// Inclusive residents-per-residence range.
    pub residents: (u64, u64),
    pub categories: CategoryTable,
    pub bands: Vec<DemandBand>,
    /// City grid width; defaults to `ceil(sqrt(regions))`.
    pub city_cols: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let categories = CategoryTable::standard();
        let k = categories.len();
        Self {
            regions: 64,
            n_max: DEFAULT_N_MAX,
            node_range: (16, 30),
            residences: (1, 3),
            balance: 1.0,
            absent_prob: 0.5,
            grid_size_m: DEFAULT_GRID_SIZE_M,
            walk_threshold_m: DEFAULT_WALK_THRESHOLD_M,
            residents: (1500, 4000),
            categories,
            bands: default_bands(k),
            city_cols: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.node_range;
        if lo < MIN_NODES || hi > MAX_NODES || lo > hi {
            return Err(Error::Config(format!(
                "node range ({lo}, {hi}) must lie within [{MIN_NODES}, {MAX_NODES}]"
            )));
        }
        if hi > self.n_max {
            return Err(Error::Config(format!("node range max {hi} exceeds N_max {}", self.n_max)));
        }
        let (rlo, rhi) = self.residences;
        if rlo == 0 || rlo > rhi {
            return Err(Error::Config(format!("residence range ({rlo}, {rhi}) invalid")));
        }
        // A fully served region needs one slot per facility category.
        let k = self.categories.len() - 1;
        if rhi + k > lo {
            return Err(Error::Config(format!(
                "node range min {lo} cannot hold {rhi} residences plus {k} facility categories"
            )));
        }
        if !(0.0..=1.0).contains(&self.balance) || !(0.0..=1.0).contains(&self.absent_prob) {
            return Err(Error::Config("balance and absent_prob must lie in [0, 1]".into()));
        }
        if !(self.walk_threshold_m > 2.0 * HUB_RADIUS_M + SERVED_MARGIN_M
            && self.walk_threshold_m < self.grid_size_m)
        {
            return Err(Error::Config(format!(
                "walk threshold {} must lie in ({}, grid size {})",
                self.walk_threshold_m,
                2.0 * HUB_RADIUS_M + SERVED_MARGIN_M,
                self.grid_size_m
            )));
        }
        if self.bands.len() != self.categories.len() {
            return Err(Error::Config("one demand band per category required".into()));
        }
        if self.residents.0 == 0 || self.residents.0 > self.residents.1 {
            return Err(Error::Config("residents range invalid".into()));
        }
        Ok(())
    }
}

fn point_in_disk<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64, cell: f64) -> [f64; 2] {
    loop {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let p = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
        if (0.0..=cell).contains(&p[0]) && (0.0..=cell).contains(&p[1]) {
            return p;
        }
    }
}

fn point_far_from<R: Rng>(rng: &mut R, center: [f64; 2], min_dist: f64, cell: f64) -> [f64; 2] {
    loop {
        let p = [rng.random_range(0.0..=cell), rng.random_range(0.0..=cell)];
        if ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() >= min_dist {
            return p;
        }
    }
}

enum Site {
    Near,
    Far,
}

/// Generates a synthetic city. Deterministic for a fixed `(config, seed)`.
pub fn generate_synthetic_city(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_cat = config.categories.len();
    let residence = config.categories.residence();
    let facilities = config.categories.non_residence();
    let cell = config.grid_size_m;
    let near_radius = config.walk_threshold_m - HUB_RADIUS_M - SERVED_MARGIN_M;
    let far_dist = config.walk_threshold_m + HUB_RADIUS_M + SERVED_MARGIN_M;
    let city_cols = config
        .city_cols
        .unwrap_or_else(|| (config.regions as f64).sqrt().ceil().max(1.0) as usize);

    let mut regions = Vec::with_capacity(config.regions);
    for region_id in 0..config.regions {
        let corner = |v: f64, flip: bool| if flip { cell - v } else { v };
        let hub = [
            corner(rng.random_range(0.15..0.3) * cell, rng.random()),
            corner(rng.random_range(0.15..0.3) * cell, rng.random()),
        ];
        let n_res = rng.random_range(config.residences.0..=config.residences.1);
        let target = rng.random_range(config.node_range.0..=config.node_range.1);

        let mut nodes: Vec<(usize, Site)> = (0..n_res).map(|_| (residence, Site::Near)).collect();
        let mut served = Vec::new();
        for &k in &facilities {
            if rng.random::<f64>() < config.balance {
                served.push(k);
                nodes.push((k, Site::Near));
            } else if rng.random::<f64>() >= config.absent_prob {
                nodes.push((k, Site::Far));
            }
        }
        let mut unserved_present: Vec<usize> = nodes
            .iter()
            .filter(|(_, s)| matches!(s, Site::Far))
            .map(|(k, _)| *k)
            .collect();
        // Pad to the target count with second copies of present categories.
        while nodes.len() < target {
            let pool_size = served.len() + unserved_present.len();
            if pool_size == 0 {
                let k = *facilities.choose(&mut rng).expect("facility categories");
                unserved_present.push(k);
                nodes.push((k, Site::Far));
                continue;
            }
            let pick = rng.random_range(0..pool_size);
            if pick < served.len() {
                nodes.push((served[pick], Site::Near));
            } else {
                nodes.push((unserved_present[pick - served.len()], Site::Far));
            }
        }
        nodes.truncate(config.node_range.1.max(n_res + served.len()));

        let mut placed: Vec<(usize, [f64; 2])> = nodes
            .iter()
            .map(|(k, site)| {
                let p = match site {
                    Site::Near if *k == residence => point_in_disk(&mut rng, hub, HUB_RADIUS_M, cell),
                    Site::Near => point_in_disk(&mut rng, hub, near_radius, cell),
                    Site::Far => point_far_from(&mut rng, hub, far_dist, cell),
                };
                (*k, p)
            })
            .collect();
        placed.shuffle(&mut rng);

        let categories: Vec<usize> = placed.iter().map(|(k, _)| *k).collect();
        let positions: Vec<[f64; 2]> = placed.iter().map(|(_, p)| *p).collect();
        let graph = build_walking_graph(&positions, &categories, config.walk_threshold_m, config.n_max, k_cat)?;

        let mut population = 0u64;
        let mut features = Vec::with_capacity(categories.len());
        for (k, p) in &placed {
            let is_res = *k == residence;
            let capacity = if is_res {
                let residents = rng.random_range(config.residents.0..=config.residents.1);
                population += residents;
                residents as f64 / 1000.0
            } else {
                rng.random_range(0.5..1.5)
            };
            let jx = p[0] / cell + rng.random_range(-0.01..0.01);
            let jy = p[1] / cell + rng.random_range(-0.01..0.01);
            features.push(vec![if is_res { 1.0 } else { 0.0 }, jx, jy, capacity, 1.0]);
        }
        let elderly_share = rng.random_range(0.12..0.30);
        let elderly_population = (population as f64 * elderly_share).round() as u64;
        let price = rng.random_range(20_000.0..120_000.0);
        let fee = rng.random_range(1.0..6.0);
        let demand = classify_demand(&graph, population, &config.bands)?;

        regions.push(Region {
            record: RegionRecord {
                region_id,
                urban_attributes: vec![population as f64, elderly_population as f64, price, fee],
                demand,
                grid_features: features,
                population,
                elderly_population,
            },
            graph,
            provenance: None,
        });
    }

    let ds = Dataset {
        categories: config.categories.clone(),
        n_max: config.n_max,
        grid_size_m: config.grid_size_m,
        walk_threshold_m: config.walk_threshold_m,
        city_cols,
        feature_dim: FEATURE_DIM,
        regions,
    };
    ds.validate()?;
    Ok(ds)
}
