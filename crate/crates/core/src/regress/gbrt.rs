use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, Tree, TreeParams};
use super::{rmse_of, Data, GbrtParams, Result, TrainingMeta};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub base: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
}

impl GbrtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base, |f, t| f + self.shrinkage * t.predict_row(row))
    }
}

/// Boosts squared-error trees from the target mean. With a validation set
/// and `patience`, stops once validation RMSE has not improved for that many
/// rounds and keeps the best prefix.
pub fn fit_gbrt(data: &Data, params: &GbrtParams, val: Option<&Data>, seed: u64) -> Result<(GbrtModel, TrainingMeta)> {
    let n = data.n();
    let base = data.y.iter().sum::<f64>() / n as f64;
    let cols = Columns::new(data.x, data.p, params.splitter);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: 1,
        min_child_weight: params.min_child_weight,
        lambda: params.leaf_l2,
        mtry: None,
        growth: params.growth,
    };
    let mut rng = seed::rng(seed::derive(seed, "gbrt"));
    let mut fitted = vec![base; n];
    let mut val_fitted: Vec<f64> = val.map(|v| vec![base; v.n()]).unwrap_or_default();
    let mut model = GbrtModel {
        base,
        shrinkage: params.shrinkage,
        trees: Vec::new(),
    };
    let mut meta = TrainingMeta::default();
    let (mut best_round, mut best_val) = (0usize, f64::INFINITY);
    let rows: Vec<u32> = (0..n as u32).collect();
    for round in 1..=params.rounds {
        let residuals: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let tree = grow(&cols, &residuals, rows.clone(), tree_params, &mut rng);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.shrinkage * tree.predict_row(data.row(i));
        }
        meta.train_curve.push(rmse_of(data.y, &fitted));
        model.trees.push(tree);
        if let Some(v) = val {
            let tree = model.trees.last().unwrap();
            for (i, f) in val_fitted.iter_mut().enumerate() {
                *f += params.shrinkage * tree.predict_row(v.row(i));
            }
            let score = rmse_of(v.y, &val_fitted);
            meta.val_curve.push(score);
            if score < best_val {
                best_val = score;
                best_round = round;
            } else if params.patience.is_some_and(|p| round - best_round >= p) {
                break;
            }
        }
    }
    if val.is_some() && params.patience.is_some() {
        model.trees.truncate(best_round);
    }
    meta.rounds_used = model.trees.len();
    Ok((model, meta))
}
