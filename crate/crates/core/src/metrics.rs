//! Spatial-equity metrics for facility layouts.
//!
//! Coverage terms use `max_{n ∈ N_ik} A[n, h]`: a residence `h` counts as
//! served for category `k` when at least one facility of that category is
//! adjacent to it.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::citygrid::{CategoryTable, Dataset, WalkingGraph};
use crate::error::{Error, Result};

/// Persons per accessibility unit.
pub const POPULATION_UNIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyMode {
    /// Share of residences covered, averaged over categories.
    #[default]
    Coverage,
    /// Covered residences divided by the number of facilities of the
    /// category; may exceed 1.
    Literal,
}

fn covered(graph: &WalkingGraph, facilities: &[usize], h: usize) -> bool {
    facilities.iter().any(|&n| graph.has_edge(n, h))
}

fn covered_count(graph: &WalkingGraph, residences: &[usize], category: usize) -> usize {
    let facilities = graph.nodes_of(category);
    residences.iter().filter(|&&h| covered(graph, &facilities, h)).count()
}

/// Per-region efficiency, or `None` when the region has no residences.
pub fn region_efficiency(
    graph: &WalkingGraph,
    residence: usize,
    categories: &[usize],
    mode: EfficiencyMode,
) -> Option<f64> {
    let residences = graph.nodes_of(residence);
    if residences.is_empty() || categories.is_empty() {
        return None;
    }
    let total: f64 = categories
        .iter()
        .map(|&k| {
            let facilities = graph.count_category(k);
            if facilities == 0 {
                return 0.0;
            }
            let hits = covered_count(graph, &residences, k) as f64;
            match mode {
                EfficiencyMode::Coverage => hits / residences.len() as f64,
                EfficiencyMode::Literal => hits / facilities as f64,
            }
        })
        .sum();
    Some(total / categories.len() as f64)
}

/// Mean efficiency over regions with residences, and the number of regions
/// skipped for having none.
pub fn efficiency(
    layouts: &[&WalkingGraph],
    residence: usize,
    categories: &[usize],
    mode: EfficiencyMode,
) -> Result<(f64, usize)> {
    if layouts.is_empty() {
        return Err(Error::Input("no layouts".into()));
    }
    let values: Vec<f64> = layouts
        .iter()
        .filter_map(|g| region_efficiency(g, residence, categories, mode))
        .collect();
    let skipped = layouts.len() - values.len();
    if skipped > 0 {
        log::warn!("{skipped} region(s) without residences skipped");
    }
    if values.is_empty() {
        return Ok((0.0, skipped));
    }
    Ok((values.iter().sum::<f64>() / values.len() as f64, skipped))
}

pub fn region_diversity(graph: &WalkingGraph, table: &CategoryTable) -> f64 {
    let present = table
        .non_residence()
        .into_iter()
        .filter(|&k| graph.count_category(k) > 0)
        .count();
    present as f64 / (table.len() - 1) as f64
}

pub fn diversity(layouts: &[&WalkingGraph], table: &CategoryTable) -> f64 {
    if layouts.is_empty() {
        return 0.0;
    }
    layouts.iter().map(|g| region_diversity(g, table)).sum::<f64>() / layouts.len() as f64
}

/// Uncapped regional accessibility: covered residence counts per category,
/// averaged over facility categories and divided by population units.
pub fn region_accessibility(graph: &WalkingGraph, population: u64, table: &CategoryTable) -> Result<f64> {
    if population == 0 {
        return Err(Error::Input("region population is zero".into()));
    }
    let residences = graph.nodes_of(table.residence());
    let cats = table.non_residence();
    let hits: usize = cats.iter().map(|&k| covered_count(graph, &residences, k)).sum();
    Ok(hits as f64 / cats.len() as f64 / (population as f64 / POPULATION_UNIT))
}

/// Mean accessibility with each regional value capped at 1.
pub fn accessibility(layouts: &[(&WalkingGraph, u64)], table: &CategoryTable) -> Result<f64> {
    if layouts.is_empty() {
        return Err(Error::Input("no layouts".into()));
    }
    let mut total = 0.0;
    for (g, pop) in layouts {
        total += region_accessibility(g, *pop, table)?.min(1.0);
    }
    Ok(total / layouts.len() as f64)
}

/// `1 − 2 Σ_i Σ_{j ≤ i} X_(j) / (N Σ X)` over ascending-sorted values.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Undefined("gini needs at least two regions".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input("gini values must be finite and non-negative".into()));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Undefined("gini of an all-zero vector".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut nested = 0.0;
    for v in &sorted {
        prefix += v;
        nested += prefix;
    }
    Ok(1.0 - 2.0 * nested / (values.len() as f64 * total))
}

/// Aggregate score: the four benefit metrics minus Gini, over five.
pub fn average(life: f64, elderly: f64, diversity: f64, accessibility: f64, gini: f64) -> f64 {
    (life + elderly + diversity + accessibility - gini) / 5.0
}

/// Local Moran's I with row-standardized `weights`.
pub fn local_morans_i(values: &[f64], weights: &Array2<f64>) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::Input("local Moran's I needs at least three regions".into()));
    }
    if weights.dim() != (n, n) {
        return Err(Error::Shape(format!("{n} values but weights are {:?}", weights.dim())));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if m2 <= 0.0 {
        return Err(Error::Undefined("zero variance".into()));
    }
    Ok((0..n)
        .map(|i| dev[i] / m2 * (0..n).map(|j| weights[[i, j]] * dev[j]).sum::<f64>())
        .collect())
}

/// Row-standardized rook-contiguity weights for regions laid out on the
/// city grid.
pub fn rook_weights(ds: &Dataset) -> Array2<f64> {
    let n = ds.len();
    let pos: Vec<(usize, usize)> = ds.regions.iter().map(|r| ds.grid_position(r.record.region_id)).collect();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if pos[i].0.abs_diff(pos[j].0) + pos[i].1.abs_diff(pos[j].1) == 1 {
                w[[i, j]] = 1.0;
            }
        }
        let s: f64 = w.row(i).sum();
        if s > 0.0 {
            w.row_mut(i).mapv_inplace(|v| v / s);
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionValues {
    pub region_id: usize,
    pub life_service: f64,
    pub elderly_care: f64,
    pub diversity: f64,
    /// Capped at 1.
    pub accessibility: f64,
    pub accessibility_raw: f64,
    /// Mean of life-service, elderly-care and capped accessibility; the Gini
    /// input.
    pub composite: f64,
}

impl RegionValues {
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "life_service" | "life-service" => self.life_service,
            "elderly_care" | "elderly-care" => self.elderly_care,
            "diversity" => self.diversity,
            "accessibility" => self.accessibility,
            "accessibility_raw" => self.accessibility_raw,
            "composite" => self.composite,
            other => return Err(Error::Config(format!("unknown region value {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub life_service: f64,
    pub elderly_care: f64,
    pub diversity: f64,
    pub accessibility: f64,
    pub gini: f64,
    pub average: f64,
    pub mode: EfficiencyMode,
    pub skipped_regions: usize,
    pub per_region_values: Vec<RegionValues>,
}

/// Scores `layouts` region by region against the populations in `dataset`.
pub fn evaluate(layouts: &Dataset, dataset: &Dataset) -> Result<MetricsReport> {
    evaluate_with_mode(layouts, dataset, EfficiencyMode::Coverage)
}

pub fn evaluate_with_mode(layouts: &Dataset, dataset: &Dataset, mode: EfficiencyMode) -> Result<MetricsReport> {
    if layouts.len() != dataset.len() {
        return Err(Error::Alignment(format!(
            "{} layouts for {} regions",
            layouts.len(),
            dataset.len()
        )));
    }
    if layouts.categories != dataset.categories {
        return Err(Error::Alignment("category tables differ".into()));
    }
    let table = &dataset.categories;
    let res = table.residence();
    let (life_cats, elderly_cats) = (table.life_service(), table.elderly());
    let mut rows = Vec::with_capacity(dataset.len());
    let mut skipped = 0;
    for (lay, reg) in layouts.regions.iter().zip(&dataset.regions) {
        if lay.record.region_id != reg.record.region_id {
            return Err(Error::Alignment(format!(
                "layout region {} does not match dataset region {}",
                lay.record.region_id, reg.record.region_id
            )));
        }
        let g = &lay.graph;
        let life = region_efficiency(g, res, &life_cats, mode);
        let elderly = region_efficiency(g, res, &elderly_cats, mode);
        if life.is_none() {
            skipped += 1;
        }
        let raw = region_accessibility(g, reg.record.population, table)?;
        let acc = raw.min(1.0);
        let (life, elderly) = (life.unwrap_or(0.0), elderly.unwrap_or(0.0));
        rows.push(RegionValues {
            region_id: reg.record.region_id,
            life_service: life,
            elderly_care: elderly,
            diversity: region_diversity(g, table),
            accessibility: acc,
            accessibility_raw: raw,
            composite: (life + elderly + acc) / 3.0,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} region(s) without residences skipped");
    }
    let with_res: Vec<&RegionValues> = rows
        .iter()
        .zip(&layouts.regions)
        .filter(|(_, r)| r.graph.count_category(res) > 0)
        .map(|(v, _)| v)
        .collect();
    let mean_of = |f: fn(&RegionValues) -> f64, set: &[&RegionValues]| {
        if set.is_empty() { 0.0 } else { set.iter().map(|v| f(v)).sum::<f64>() / set.len() as f64 }
    };
    let all: Vec<&RegionValues> = rows.iter().collect();
    let life_service = mean_of(|v| v.life_service, &with_res);
    let elderly_care = mean_of(|v| v.elderly_care, &with_res);
    let diversity = mean_of(|v| v.diversity, &all);
    let accessibility = mean_of(|v| v.accessibility, &all);
    let composites: Vec<f64> = rows.iter().map(|v| v.composite).collect();
    let gini = gini(&composites)?;
    Ok(MetricsReport {
        life_service,
        elderly_care,
        diversity,
        accessibility,
        gini,
        average: average(life_service, elderly_care, diversity, accessibility, gini),
        mode,
        skipped_regions: skipped,
        per_region_values: rows,
    })
}

/// Aligned text table with one row per method.
pub fn format_table(rows: &[(&str, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>12}  {:>12}  {:>9}  {:>13}  {:>6}  {:>7}",
        "Method", "Life-service", "Elderly-care", "Diversity", "Accessibility", "Gini", "Average"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>12.3}  {:>12.3}  {:>9.3}  {:>13.3}  {:>6.3}  {:>7.3}",
            name, r.life_service, r.elderly_care, r.diversity, r.accessibility, r.gini, r.average
        );
    }
    out
}
