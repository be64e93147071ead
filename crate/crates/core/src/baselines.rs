//! Reference allocators: the status-quo layout and a dominant-resource-
//! fairness greedy allocator.

use serde::{Deserialize, Serialize};

use crate::citygrid::{build_walking_graph, default_bands, Dataset, Provenance, WalkingGraph};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};

/// Distance in meters between a granted facility and its residence.
pub const PLACEMENT_OFFSET_M: f64 = 50.0;

/// Existing layouts, untouched, together with their score.
pub fn walking_based(dataset: &Dataset) -> Result<(Dataset, MetricsReport)> {
    let report = evaluate(dataset, dataset)?;
    Ok((dataset.clone(), report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationBudget {
    /// Facilities available per category id; the residence entry is ignored.
    pub total_units: Vec<usize>,
    /// Maximum number of facilities (non-residence nodes) per region.
    pub per_region_cap: usize,
}

impl AllocationBudget {
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.total_units.len() != dataset.k_cat() {
            return Err(Error::Config(format!(
                "budget lists {} categories, dataset has {}",
                self.total_units.len(),
                dataset.k_cat()
            )));
        }
        let res = dataset.categories.residence();
        if self.total_units.iter().enumerate().all(|(k, &u)| k == res || u == 0) {
            return Err(Error::Config("budget is empty".into()));
        }
        for r in &dataset.regions {
            let existing = facility_count(&r.graph, res);
            if existing > self.per_region_cap {
                return Err(Error::Config(format!(
                    "region {} already has {existing} facilities, above the cap of {}",
                    r.record.region_id, self.per_region_cap
                )));
            }
        }
        Ok(())
    }
}

fn facility_count(graph: &WalkingGraph, residence: usize) -> usize {
    graph.n() - graph.count_category(residence)
}

/// One allocation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grant {
    pub step: usize,
    pub region_id: usize,
    pub category: usize,
    /// Recipient's dominant share before the grant.
    pub share: f64,
    /// Dominant shares of every eligible region at this step, by region id.
    pub eligible_shares: Vec<(usize, f64)>,
    /// Node index of the new facility in the updated graph.
    pub node: usize,
    pub residence: usize,
}

/// Allocation state detached from geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareState {
    pub region_ids: Vec<usize>,
    /// `requirement[r][k]`; zero means category `k` is not requested.
    pub requirement: Vec<Vec<usize>>,
    pub allocated: Vec<Vec<usize>>,
    pub remaining: Vec<usize>,
    /// Further facilities each region can take.
    pub room: Vec<usize>,
}

impl ShareState {
    /// Max over requested categories of allocated / required; 0 when nothing
    /// is requested.
    pub fn dominant_share(&self, r: usize) -> f64 {
        self.requirement[r]
            .iter()
            .zip(&self.allocated[r])
            .filter(|(&req, _)| req > 0)
            .map(|(&req, &a)| a as f64 / req as f64)
            .fold(0.0, f64::max)
    }

    fn open_categories(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.requirement[r].len())
            .filter(move |&k| self.allocated[r][k] < self.requirement[r][k] && self.remaining[k] > 0)
    }

    pub fn eligible(&self, r: usize) -> bool {
        self.room[r] > 0 && self.open_categories(r).next().is_some()
    }

    /// Unmet category with the lowest allocated/required ratio, lowest id on
    /// ties.
    pub fn most_deficient(&self, r: usize) -> Option<usize> {
        let ratio = |k: usize| self.allocated[r][k] as f64 / self.requirement[r][k] as f64;
        self.open_categories(r)
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if ratio(b) <= ratio(k) => Some(b),
                _ => Some(k),
            })
    }

    /// Next `(region index, category)` under lowest-dominant-share order.
    pub fn next_grant(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.region_ids.len() {
            if !self.eligible(r) {
                continue;
            }
            let s = self.dominant_share(r);
            let better = match best {
                None => true,
                Some((b, bs)) => s < bs || (s == bs && self.region_ids[r] < self.region_ids[b]),
            };
            if better {
                best = Some((r, s));
            }
        }
        best.and_then(|(r, _)| self.most_deficient(r).map(|k| (r, k)))
    }

    pub fn apply(&mut self, r: usize, k: usize) {
        self.allocated[r][k] += 1;
        self.remaining[k] -= 1;
        self.room[r] -= 1;
    }

    /// Runs the greedy to completion and returns the grants in order.
    pub fn run(&mut self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        while let Some((r, k)) = self.next_grant() {
            self.apply(r, k);
            out.push((r, k));
        }
        out
    }
}

/// Requirement per region and category: classes 0 and 1 ask for enough
/// facilities to reach the midpoint of the appropriately-supplied band.
pub fn requirements(dataset: &Dataset) -> Vec<Vec<usize>> {
    let bands = default_bands(dataset.k_cat());
    let res = dataset.categories.residence();
    dataset
        .regions
        .iter()
        .map(|r| {
            let per_thousand = r.record.population as f64 / 1000.0;
            (0..dataset.k_cat())
                .map(|k| {
                    if k == res || r.record.demand[k] > 1 {
                        0
                    } else {
                        (bands[k].midpoint() * per_thousand).ceil() as usize
                    }
                })
                .collect()
        })
        .collect()
}

fn share_state(dataset: &Dataset, budget: &AllocationBudget) -> ShareState {
    let res = dataset.categories.residence();
    let mut requirement = requirements(dataset);
    let mut room = Vec::with_capacity(dataset.len());
    for (r, req) in dataset.regions.iter().zip(requirement.iter_mut()) {
        // A facility must sit next to a residence.
        if r.graph.count_category(res) == 0 {
            req.iter_mut().for_each(|v| *v = 0);
        }
        let by_cap = budget.per_region_cap - facility_count(&r.graph, res);
        room.push(by_cap.min(r.graph.n_max() - r.graph.n()));
    }
    let mut remaining = budget.total_units.clone();
    remaining[res] = 0;
    ShareState {
        region_ids: dataset.regions.iter().map(|r| r.record.region_id).collect(),
        allocated: dataset
            .regions
            .iter()
            .map(|r| (0..dataset.k_cat()).map(|k| r.graph.count_category(k)).collect())
            .collect(),
        requirement,
        remaining,
        room,
    }
}

/// Residence with the fewest adjacent facilities, lowest index on ties.
fn least_covered_residence(graph: &WalkingGraph, residence: usize) -> Option<usize> {
    graph.nodes_of(residence).into_iter().min_by_key(|&h| {
        (0..graph.n())
            .filter(|&j| graph.has_edge(h, j) && graph.category(j) != residence)
            .count()
    })
}

/// Appends a facility of `category` next to residence `h`; edges are rebuilt
/// from positions when the graph has them.
fn place_facility(
    graph: &WalkingGraph,
    h: usize,
    category: usize,
    k_cat: usize,
    walk_threshold_m: f64,
) -> Result<WalkingGraph> {
    let mut cats = graph.categories().to_vec();
    cats.push(category);
    match graph.positions() {
        Some(pos) => {
            let n = pos.len() as f64;
            let centroid = pos.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n]);
            let (dx, dy) = (centroid[0] - pos[h][0], centroid[1] - pos[h][1]);
            let len = dx.hypot(dy);
            let dir = if len > 1e-9 { [dx / len, dy / len] } else { [1.0, 0.0] };
            let mut next = pos.to_vec();
            next.push([
                pos[h][0] + PLACEMENT_OFFSET_M * dir[0],
                pos[h][1] + PLACEMENT_OFFSET_M * dir[1],
            ]);
            build_walking_graph(&next, &cats, walk_threshold_m, graph.n_max(), k_cat)
        }
        None => {
            let mut edges = graph.edges();
            edges.push((h, graph.n()));
            WalkingGraph::from_edges(graph.n_max(), k_cat, cats, &edges, None)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub layouts: Dataset,
    pub grants: Vec<Grant>,
}

/// Greedy dominant-resource-fairness allocation: each unit of budget goes to
/// the eligible region with the lowest dominant share, as its most
/// deficient category, placed beside its least-covered residence.
pub fn drf_allocate(dataset: &Dataset, budget: &AllocationBudget) -> Result<Allocation> {
    budget.validate(dataset)?;
    let mut state = share_state(dataset, budget);
    if state.requirement.iter().flatten().all(|&v| v == 0) {
        return Err(Error::Degenerate("nothing to allocate: no region has an unmet requirement".into()));
    }
    let res = dataset.categories.residence();
    let k_cat = dataset.k_cat();
    let mut graphs: Vec<WalkingGraph> = dataset.regions.iter().map(|r| r.graph.clone()).collect();
    let mut grants = Vec::new();
    while let Some((r, k)) = state.next_grant() {
        let eligible_shares = (0..state.region_ids.len())
            .filter(|&i| state.eligible(i))
            .map(|i| (state.region_ids[i], state.dominant_share(i)))
            .collect();
        let share = state.dominant_share(r);
        let h = least_covered_residence(&graphs[r], res).ok_or_else(|| {
            Error::Degenerate(format!("region {} has no residence", state.region_ids[r]))
        })?;
        graphs[r] = place_facility(&graphs[r], h, k, k_cat, dataset.walk_threshold_m)?;
        state.apply(r, k);
        grants.push(Grant {
            step: grants.len(),
            region_id: state.region_ids[r],
            category: k,
            share,
            eligible_shares,
            node: graphs[r].n() - 1,
            residence: h,
        });
    }
    log::info!("drf placed {} facilities", grants.len());
    let touched: Vec<bool> = (0..graphs.len()).map(|r| grants.iter().any(|g| g.region_id == state.region_ids[r])).collect();
    let layouts = graphs
        .into_iter()
        .zip(&dataset.regions)
        .zip(touched)
        .map(|((g, region), t)| {
            let provenance = if t {
                Some(Provenance {
                    method: "drf".into(),
                    seed: 0,
                    steps: None,
                    source: None,
                })
            } else {
                region.provenance.clone()
            };
            (g, provenance)
        })
        .collect();
    Ok(Allocation {
        layouts: dataset.with_layouts(layouts)?,
        grants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citygrid::{generate_synthetic_city, GeneratorConfig};
    use proptest::prelude::*;

    fn city(balance: f64, regions: usize, seed: u64) -> Dataset {
        generate_synthetic_city(
            &GeneratorConfig {
                regions,
                balance,
                ..Default::default()
            },
            seed,
        )
        .unwrap()
    }

    fn state(req: Vec<Vec<usize>>, alloc: Vec<Vec<usize>>, remaining: Vec<usize>) -> ShareState {
        let n = req.len();
        ShareState {
            region_ids: (0..n).collect(),
            requirement: req,
            allocated: alloc,
            remaining,
            room: vec![usize::MAX; n],
        }
    }

    #[test]
    fn walking_based_is_identity() {
        let ds = city(0.3, 4, 1);
        let (out, report) = walking_based(&ds).unwrap();
        assert_eq!(out, ds);
        assert_eq!(report, walking_based(&ds).unwrap().1);
        let (_, full) = walking_based(&city(1.0, 4, 1)).unwrap();
        assert_eq!(full.life_service, 1.0);
        assert_eq!(full.elderly_care, 1.0);
    }

    #[test]
    fn unit_goes_to_unserved_region() {
        let mut s = state(vec![vec![2], vec![2]], vec![vec![2], vec![0]], vec![1]);
        // Region 0 is fully served, so only region 1 is eligible.
        assert_eq!(s.run(), vec![(1, 0)]);
    }

    #[test]
    fn equal_shares_break_ties_by_region_id() {
        let mut s = state(vec![vec![2, 2], vec![2, 2]], vec![vec![0, 0], vec![0, 0]], vec![1, 1]);
        assert_eq!(s.next_grant(), Some((0, 0)));
        s.region_ids = vec![5, 3];
        assert_eq!(s.next_grant(), Some((1, 0)));
    }

    /// Exhaustive search over every grant sequence of length `budget`.
    fn best_max_share(s: &ShareState, budget: usize) -> f64 {
        let max_share = |s: &ShareState| (0..s.region_ids.len()).map(|r| s.dominant_share(r)).fold(0.0, f64::max);
        if budget == 0 {
            return max_share(s);
        }
        let mut best = f64::INFINITY;
        let mut any = false;
        for r in 0..s.region_ids.len() {
            for k in s.open_categories(r).collect::<Vec<_>>() {
                if s.room[r] == 0 {
                    continue;
                }
                any = true;
                let mut next = s.clone();
                next.apply(r, k);
                best = best.min(best_max_share(&next, budget - 1));
            }
        }
        if any { best } else { max_share(s) }
    }

    #[test]
    fn greedy_matches_exhaustive_search_on_tiny_instance() {
        let base = state(
            vec![vec![3, 2], vec![2, 4], vec![4, 3]],
            vec![vec![1, 0], vec![0, 1], vec![0, 0]],
            vec![3, 2],
        );
        let mut greedy = base.clone();
        let grants = greedy.run();
        assert_eq!(grants.len(), 5);
        let got = (0..3).map(|r| greedy.dominant_share(r)).fold(0.0, f64::max);
        assert!((got - best_max_share(&base, 5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn recipient_has_lowest_share_and_limits_hold(seed in 0u64..40, units in 1usize..12, cap in 14usize..30) {
            let ds = city(0.3, 4, seed);
            let res = ds.categories.residence();
            prop_assume!(ds.regions.iter().all(|r| facility_count(&r.graph, res) <= cap));
            let budget = AllocationBudget { total_units: vec![units; ds.k_cat()], per_region_cap: cap };
            let out = match drf_allocate(&ds, &budget) {
                Ok(out) => out,
                Err(Error::Degenerate(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            for g in &out.grants {
                for &(_, s) in &g.eligible_shares {
                    prop_assert!(g.share <= s);
                }
            }
            for k in 0..ds.k_cat() {
                let placed = out.grants.iter().filter(|g| g.category == k).count();
                let limit = if k == res { 0 } else { units };
                prop_assert!(placed <= limit);
            }
            for r in &out.layouts.regions {
                prop_assert!(facility_count(&r.graph, res) <= cap);
                prop_assert!(r.graph.validate(ds.k_cat()).is_ok());
            }
            for g in &out.grants {
                let graph = &out.layouts.region(g.region_id).unwrap().graph;
                prop_assert_eq!(graph.category(g.node), g.category);
            }
        }
    }

    #[test]
    fn placed_facility_serves_its_residence() {
        let ds = city(0.3, 3, 5);
        let budget = AllocationBudget {
            total_units: vec![4; ds.k_cat()],
            per_region_cap: 60,
        };
        let out = drf_allocate(&ds, &budget).unwrap();
        assert!(!out.grants.is_empty());
        let first = &out.grants[0];
        let region = out.layouts.region(first.region_id).unwrap();
        assert!(region.graph.has_edge(first.node, first.residence));
        assert_eq!(out, drf_allocate(&ds, &budget).unwrap());
    }

    #[test]
    fn rejects_empty_budget_and_nothing_to_do() {
        let ds = city(1.0, 2, 0);
        let empty = AllocationBudget {
            total_units: vec![0; ds.k_cat()],
            per_region_cap: 60,
        };
        assert!(matches!(drf_allocate(&ds, &empty), Err(Error::Config(_))));
        let mut served = ds.clone();
        for r in &mut served.regions {
            r.record.demand.iter_mut().for_each(|d| *d = 2);
        }
        let budget = AllocationBudget {
            total_units: vec![1; ds.k_cat()],
            per_region_cap: 60,
        };
        assert!(matches!(drf_allocate(&served, &budget), Err(Error::Degenerate(_))));
    }
}
