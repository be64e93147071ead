//! Shared fixtures for the benchmarks in `benches/`.

use fairlayout::citygrid::{generate_synthetic_city, Dataset, GeneratorConfig};
use fairlayout::denoiser::{Denoiser, DenoiserConfig};
use fairlayout::fairdemand::{dataset_conditions, FairDemandParams};
use fairlayout::sampler::ResidenceTemplate;
use fairlayout::sde::{graph_a, graph_x, make_condition_graph, NoiseSchedule};
use ndarray::Array2;

/// A 16-region imbalanced city, the size of a desk-preset evaluation set.
pub fn eval_city() -> Dataset {
    let cfg = GeneratorConfig {
        regions: 16,
        balance: 0.3,
        ..Default::default()
    };
    generate_synthetic_city(&cfg, 0).expect("default generator config is valid")
}

/// Untrained denoiser with desk-preset widths.
pub fn desk_model(k_cat: usize, cond_dim: usize) -> Denoiser {
    let cfg = DenoiserConfig {
        d_hidden: 32,
        time_embed_dim: 32,
        ..Default::default()
    };
    Denoiser::new(cfg, NoiseSchedule::cosine(), k_cat, cond_dim, 0).expect("desk config is valid")
}

/// Everything a single denoiser call or sampling run needs for one region.
pub struct RegionInputs {
    pub x: Array2<f64>,
    pub a: Array2<f64>,
    pub condition: Array2<f64>,
    pub condition_graph: Array2<f64>,
    pub template: ResidenceTemplate,
}

pub fn region_inputs(ds: &Dataset, index: usize, hidden: usize) -> RegionInputs {
    let fd = FairDemandParams::for_dataset(ds, hidden, 0);
    let mut conditions = dataset_conditions(ds, &fd).expect("conditions for a valid dataset");
    let region = &ds.regions[index];
    let res = ds.categories.residence();
    RegionInputs {
        x: graph_x(&region.graph, ds.k_cat()),
        a: graph_a(&region.graph),
        condition: conditions.swap_remove(index).values,
        condition_graph: make_condition_graph(&region.graph, res),
        template: ResidenceTemplate::from_graph(&region.graph, ds.k_cat(), res),
    }
}
