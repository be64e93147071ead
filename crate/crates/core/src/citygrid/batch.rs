use ndarray::{s, Array2, Array3};

use super::WalkingGraph;
use crate::error::{Error, Result};

/// Graphs padded to a common `N_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    /// `B × N_max × K_cat` one-hot categories.
    pub x: Array3<f64>,
    /// `B × N_max × N_max` adjacency.
    pub a: Array3<f64>,
    /// `B × N_max`, 1 on active nodes.
    pub mask: Array2<f64>,
    positions: Vec<Option<Vec<[f64; 2]>>>,
}

/// Pads graphs into dense tensors. All graphs must share `n_max`.
pub fn pad_batch(graphs: &[WalkingGraph], k_cat: usize) -> Result<GraphBatch> {
    let n_max = graphs.first().map_or(0, |g| g.n_max());
    for g in graphs {
        if g.n() > n_max || g.n_max() != n_max {
            return Err(Error::Capacity {
                nodes: g.n().max(g.n_max()),
                n_max,
            });
        }
    }
    let b = graphs.len();
    let mut x = Array3::zeros((b, n_max, k_cat));
    let mut a = Array3::zeros((b, n_max, n_max));
    let mut mask = Array2::zeros((b, n_max));
    for (bi, g) in graphs.iter().enumerate() {
        x.slice_mut(s![bi, .., ..]).assign(&g.one_hot(k_cat));
        a.slice_mut(s![bi, .., ..]).assign(&g.adjacency_matrix());
        for i in 0..g.n() {
            mask[[bi, i]] = 1.0;
        }
    }
    Ok(GraphBatch {
        x,
        a,
        mask,
        positions: graphs.iter().map(|g| g.positions().map(<[_]>::to_vec)).collect(),
    })
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.mask.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unbatch(&self) -> Result<Vec<WalkingGraph>> {
        let (b, n_max, k_cat) = self.x.dim();
        (0..b)
            .map(|bi| {
                let n = (0..n_max).filter(|&i| self.mask[[bi, i]] > 0.5).count();
                let cats = (0..n)
                    .map(|i| {
                        (0..k_cat)
                            .find(|&k| self.x[[bi, i, k]] > 0.5)
                            .ok_or_else(|| Error::Validation(format!("graph {bi}: node {i} has no category")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut adjacency = vec![false; n * n];
                for i in 0..n {
                    for j in 0..n {
                        adjacency[i * n + j] = self.a[[bi, i, j]] > 0.5;
                    }
                }
                WalkingGraph::from_parts(n_max, k_cat, cats, adjacency, self.positions[bi].clone())
            })
            .collect()
    }
}
