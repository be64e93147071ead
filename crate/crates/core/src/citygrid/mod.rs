//! Gridded-city data model: facility categories, per-region walking graphs,
//! regional demand classification, synthetic city generation, the JSON-lines
//! dataset format and padded batching.

mod batch;
mod generate;
mod io;

pub use batch::{pad_batch, GraphBatch};
pub use generate::{generate_synthetic_city, GeneratorConfig};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, FORMAT_VERSION};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default side length of one grid region in meters.
pub const DEFAULT_GRID_SIZE_M: f64 = 2000.0;
/// Fifteen minutes at 5 km/h.
pub const DEFAULT_WALK_THRESHOLD_M: f64 = 1250.0;
pub const DEFAULT_N_MAX: usize = 64;
/// Node-count bounds of the reference corpus, residences included.
pub const MIN_NODES: usize = 10;
pub const MAX_NODES: usize = 399;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityCategory {
    pub id: usize,
    pub name: String,
    pub is_residence: bool,
    /// Senior care or senior meal service.
    pub is_elderly: bool,
    pub is_life_service: bool,
}

/// Dense table of facility categories with exactly one residence entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FacilityCategory>", into = "Vec<FacilityCategory>")]
pub struct CategoryTable {
    categories: Vec<FacilityCategory>,
    residence: usize,
}

impl CategoryTable {
    pub fn new(categories: Vec<FacilityCategory>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Validation("empty category table".into()));
        }
        for (i, c) in categories.iter().enumerate() {
            if c.id != i {
                return Err(Error::Validation(format!(
                    "category ids must be dense: position {i} holds id {}",
                    c.id
                )));
            }
        }
        let residences: Vec<usize> = categories
            .iter()
            .filter(|c| c.is_residence)
            .map(|c| c.id)
            .collect();
        if residences.len() != 1 {
            return Err(Error::Validation(format!(
                "exactly one residence category required, found {}",
                residences.len()
            )));
        }
        Ok(Self {
            categories,
            residence: residences[0],
        })
    }

    /// The 14-category table: residences, two senior services and eleven
    /// everyday point-of-interest types.
    pub fn standard() -> Self {
        let table: [(&str, bool, bool); 14] = [
            ("residence", false, false),
            ("senior_care_center", true, false),
            ("senior_meal_canteen", true, false),
            ("food", false, true),
            ("medical", false, true),
            ("shopping", false, true),
            ("education", false, true),
            ("sports", false, true),
            ("park", false, true),
            ("transit", false, true),
            ("finance", false, true),
            ("public_service", false, true),
            ("culture", false, true),
            ("daily_service", false, true),
        ];
        let cats = table
            .iter()
            .enumerate()
            .map(|(id, (name, elderly, life))| FacilityCategory {
                id,
                name: (*name).to_string(),
                is_residence: id == 0,
                is_elderly: *elderly,
                is_life_service: *life,
            })
            .collect();
        Self::new(cats).expect("standard table is valid")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn residence(&self) -> usize {
        self.residence
    }

    pub fn get(&self, id: usize) -> Option<&FacilityCategory> {
        self.categories.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FacilityCategory> {
        self.categories.iter()
    }

    pub fn non_residence(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| k != self.residence).collect()
    }

    pub fn elderly(&self) -> Vec<usize> {
        self.iter().filter(|c| c.is_elderly).map(|c| c.id).collect()
    }

    pub fn life_service(&self) -> Vec<usize> {
        self.iter().filter(|c| c.is_life_service).map(|c| c.id).collect()
    }

    /// `true` for every non-residence category.
    pub fn facility_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| k != self.residence).collect()
    }
}

impl TryFrom<Vec<FacilityCategory>> for CategoryTable {
    type Error = Error;
    fn try_from(v: Vec<FacilityCategory>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CategoryTable> for Vec<FacilityCategory> {
    fn from(t: CategoryTable) -> Self {
        t.categories
    }
}

/// One region's facility graph.
///
/// Active nodes occupy the first `n` slots of the `n_max`-slot padded layout;
/// every slot past `n` is masked. Adjacency is stored densely over the active
/// nodes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkingGraph {
    n_max: usize,
    categories: Vec<usize>,
    adjacency: Vec<bool>,
    positions: Option<Vec<[f64; 2]>>,
}

impl WalkingGraph {
    /// Builds a graph from explicit parts, checking the structural invariants
    /// (symmetry, zero diagonal, capacity, category range).
    pub fn from_parts(
        n_max: usize,
        k_cat: usize,
        categories: Vec<usize>,
        adjacency: Vec<bool>,
        positions: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let g = Self {
            n_max,
            categories,
            adjacency,
            positions,
        };
        g.validate(k_cat)?;
        Ok(g)
    }

    /// Builds a graph from an undirected edge list.
    pub fn from_edges(
        n_max: usize,
        k_cat: usize,
        categories: Vec<usize>,
        edges: &[(usize, usize)],
        positions: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let n = categories.len();
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Validation(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        Self::from_parts(n_max, k_cat, categories, adjacency, positions)
    }

    pub fn validate(&self, k_cat: usize) -> Result<()> {
        let n = self.n();
        if n > self.n_max {
            return Err(Error::Capacity {
                nodes: n,
                n_max: self.n_max,
            });
        }
        if self.adjacency.len() != n * n {
            return Err(Error::Validation(format!(
                "adjacency has {} entries, expected {}",
                self.adjacency.len(),
                n * n
            )));
        }
        if let Some(c) = self.categories.iter().find(|&&c| c >= k_cat) {
            return Err(Error::Validation(format!("category {c} outside 0..{k_cat}")));
        }
        if let Some(p) = &self.positions {
            if p.len() != n {
                return Err(Error::Validation(format!("{} positions for {n} nodes", p.len())));
            }
        }
        for i in 0..n {
            if self.adjacency[i * n + i] {
                return Err(Error::Validation(format!("self loop at node {i}")));
            }
            for j in (i + 1)..n {
                if self.adjacency[i * n + j] != self.adjacency[j * n + i] {
                    return Err(Error::Validation(format!("asymmetric adjacency at pair ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Number of active (unmasked) nodes.
    pub fn n(&self) -> usize {
        self.categories.len()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    pub fn category(&self, i: usize) -> usize {
        self.categories[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n() + j]
    }

    /// Dense `n × n` adjacency over active nodes, row-major.
    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[i * n + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        let n = self.n();
        self.adjacency[i * n..(i + 1) * n].iter().filter(|&&e| e).count()
    }

    pub fn count_category(&self, k: usize) -> usize {
        self.categories.iter().filter(|&&c| c == k).count()
    }

    pub fn nodes_of(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.categories[i] == k).collect()
    }

    /// Padded `n_max × k_cat` one-hot node matrix.
    pub fn one_hot(&self, k_cat: usize) -> Array2<f64> {
        let mut x = Array2::zeros((self.n_max, k_cat));
        for (i, &c) in self.categories.iter().enumerate() {
            x[[i, c]] = 1.0;
        }
        x
    }

    /// Padded `n_max × n_max` adjacency matrix.
    pub fn adjacency_matrix(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((self.n_max, self.n_max));
        for i in 0..n {
            for j in 0..n {
                if self.adjacency[i * n + j] {
                    a[[i, j]] = 1.0;
                }
            }
        }
        a
    }

    pub fn node_mask(&self) -> Vec<bool> {
        (0..self.n_max).map(|i| i < self.n()).collect()
    }

    /// Same graph with node `i` moved to slot `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n);
        let mut categories = vec![0; n];
        let mut adjacency = vec![false; n * n];
        let mut positions = self.positions.as_ref().map(|_| vec![[0.0; 2]; n]);
        for i in 0..n {
            categories[perm[i]] = self.categories[i];
            if let (Some(dst), Some(src)) = (positions.as_mut(), self.positions.as_ref()) {
                dst[perm[i]] = src[i];
            }
            for j in 0..n {
                adjacency[perm[i] * n + perm[j]] = self.adjacency[i * n + j];
            }
        }
        Self {
            n_max: self.n_max,
            categories,
            adjacency,
            positions,
        }
    }
}

/// Builds a walking graph: nodes `i ≠ j` are adjacent iff their Euclidean
/// distance is at most `walk_threshold_m`.
pub fn build_walking_graph(
    positions: &[[f64; 2]],
    categories: &[usize],
    walk_threshold_m: f64,
    n_max: usize,
    k_cat: usize,
) -> Result<WalkingGraph> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::Input("a walking graph needs at least one node".into()));
    }
    if categories.len() != n {
        return Err(Error::Input(format!("{} categories for {n} positions", categories.len())));
    }
    if !(walk_threshold_m > 0.0 && walk_threshold_m.is_finite()) {
        return Err(Error::Input(format!("walk threshold must be positive, got {walk_threshold_m}")));
    }
    if let Some((i, _)) = positions
        .iter()
        .enumerate()
        .find(|(_, p)| !p[0].is_finite() || !p[1].is_finite())
    {
        return Err(Error::Input(format!("non-finite coordinates at node {i}")));
    }
    if n > n_max {
        return Err(Error::Capacity { nodes: n, n_max });
    }
    let t2 = walk_threshold_m * walk_threshold_m;
    let mut adjacency = vec![false; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let close = dx * dx + dy * dy <= t2;
            adjacency[i * n + j] = close;
            adjacency[j * n + i] = close;
        }
    }
    WalkingGraph::from_parts(n_max, k_cat, categories.to_vec(), adjacency, Some(positions.to_vec()))
}

/// Per-region urban attributes and conditioning inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub region_id: usize,
    /// Population, elderly population, mean housing price, property fee.
    pub urban_attributes: Vec<f64>,
    /// Supply class per category, each in `0..=3`.
    pub demand: Vec<u8>,
    /// One feature row per active node (site descriptors).
    pub grid_features: Vec<Vec<f64>>,
    pub population: u64,
    pub elderly_population: u64,
}

impl RegionRecord {
    pub fn validate(&self, k_cat: usize) -> Result<()> {
        if self.demand.len() != k_cat {
            return Err(Error::Validation(format!(
                "region {}: demand has {} entries, expected {k_cat}",
                self.region_id,
                self.demand.len()
            )));
        }
        if let Some(d) = self.demand.iter().find(|&&d| d > 3) {
            return Err(Error::Validation(format!("region {}: demand class {d} > 3", self.region_id)));
        }
        if self.elderly_population > self.population {
            return Err(Error::Validation(format!(
                "region {}: elderly population exceeds population",
                self.region_id
            )));
        }
        Ok(())
    }

    /// Grid features padded to `n_max × d_f`.
    pub fn feature_matrix(&self, n_max: usize, feature_dim: usize) -> Array2<f64> {
        let mut f = Array2::zeros((n_max, feature_dim));
        for (i, row) in self.grid_features.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                f[[i, j]] = *v;
            }
        }
        f
    }
}

/// Where a generated layout came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub record: RegionRecord,
    pub graph: WalkingGraph,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub categories: CategoryTable,
    pub n_max: usize,
    pub grid_size_m: f64,
    pub walk_threshold_m: f64,
    /// Regions are laid out row-major on a city grid this many cells wide.
    pub city_cols: usize,
    pub feature_dim: usize,
    pub regions: Vec<Region>,
}

impl Dataset {
    pub fn k_cat(&self) -> usize {
        self.categories.len()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.walk_threshold_m.partial_cmp(&self.grid_size_m) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Validation(format!(
                "walk threshold {} must be below grid size {}",
                self.walk_threshold_m, self.grid_size_m
            )));
        }
        for r in &self.regions {
            r.record.validate(self.k_cat())?;
            r.graph.validate(self.k_cat()).map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("region {}: {m}", r.record.region_id)),
                other => other,
            })?;
            if r.graph.n_max() != self.n_max {
                return Err(Error::Validation(format!(
                    "region {}: graph N_max {} differs from dataset N_max {}",
                    r.record.region_id,
                    r.graph.n_max(),
                    self.n_max
                )));
            }
            if r.record.grid_features.len() != r.graph.n() {
                return Err(Error::Validation(format!(
                    "region {}: {} feature rows for {} nodes",
                    r.record.region_id,
                    r.record.grid_features.len(),
                    r.graph.n()
                )));
            }
        }
        Ok(())
    }

    pub fn region(&self, region_id: usize) -> Option<&Region> {
        self.regions.iter().find(|r| r.record.region_id == region_id)
    }

    /// `(row, col)` of a region on the city grid.
    pub fn grid_position(&self, region_id: usize) -> (usize, usize) {
        (region_id / self.city_cols, region_id % self.city_cols)
    }

    /// Copy of this dataset with the graphs replaced by `layouts`, keeping
    /// region attributes.
    pub fn with_layouts(&self, layouts: Vec<(WalkingGraph, Option<Provenance>)>) -> Result<Self> {
        if layouts.len() != self.regions.len() {
            return Err(Error::Alignment(format!(
                "{} layouts for {} regions",
                layouts.len(),
                self.regions.len()
            )));
        }
        let regions = self
            .regions
            .iter()
            .zip(layouts)
            .map(|(r, (graph, provenance))| {
                let mut record = r.record.clone();
                record.grid_features.resize(graph.n(), vec![0.0; self.feature_dim]);
                Region {
                    record,
                    graph,
                    provenance,
                }
            })
            .collect();
        Ok(Self {
            regions,
            ..self.clone()
        })
    }
}

/// Facilities-per-thousand-residents band for one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandBand {
    pub low: f64,
    pub high: f64,
}

impl DemandBand {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

/// Default band: 0.5 to 1.5 facilities per thousand residents for every
/// category.
pub fn default_bands(k_cat: usize) -> Vec<DemandBand> {
    vec![DemandBand { low: 0.5, high: 1.5 }; k_cat]
}

/// Supply class of each category: 0 no supply, 1 under supplied,
/// 2 appropriately supplied, 3 oversupplied.
pub fn classify_demand(graph: &WalkingGraph, population: u64, bands: &[DemandBand]) -> Result<Vec<u8>> {
    if population == 0 {
        return Err(Error::Degenerate("population must be positive".into()));
    }
    let per_thousand = population as f64 / 1000.0;
    Ok(bands
        .iter()
        .enumerate()
        .map(|(k, band)| {
            let count = graph.count_category(k);
            let rate = count as f64 / per_thousand;
            if count == 0 {
                0
            } else if rate < band.low {
                1
            } else if rate <= band.high {
                2
            } else {
                3
            }
        })
        .collect())
}
