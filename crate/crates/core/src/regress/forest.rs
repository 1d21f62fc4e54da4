use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, Tree, TreeParams};
use super::{Data, ForestParams, Growth, RegressError, Result, Splitter};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Features tried per node when not configured: ⌈p/3⌉.
pub fn default_mtry(p: usize) -> usize {
    p.div_ceil(3).max(1)
}

pub fn fit_forest(data: &Data, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let (n, p) = (data.n(), data.p);
    if n < 2 {
        return Err(RegressError::Config(format!("forest needs at least 2 rows, got {n}")));
    }
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(p));
    if mtry == 0 || mtry > p {
        return Err(RegressError::Config(format!("mtry {mtry} outside 1..={p}")));
    }
    let cols = Columns::new(data.x, p, Splitter::Exact);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_child_weight: 0.0,
        lambda: 0.0,
        mtry: Some(mtry),
        growth: Growth::Level,
    };
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = seed::rng(seed::derive_index(seed, t as u64));
            let rows: Vec<u32> = if params.bootstrap {
                let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
                rows.sort_unstable();
                rows
            } else {
                (0..n as u32).collect()
            };
            grow(&cols, data.y, rows, tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees })
}
