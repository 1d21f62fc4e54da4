//! Regression backbones behind one train/predict interface.

mod forest;
mod gbrt;
mod linear;
mod mlp;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{default_mtry, fit_forest, ForestModel};
pub use gbrt::{fit_gbrt, GbrtModel};
pub use linear::{fit_linear, LinearModel};
pub use mlp::{fit_mlp, MlpModel, Network};

use crate::fusion::DesignMatrix;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("invalid regressor configuration: {0}")]
    Config(String),
    #[error("expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no training rows")]
    Empty,
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("unsupported model file version {0}")]
    Version(u32),
}

pub type Result<T> = std::result::Result<T, RegressError>;

/// Borrowed row-major features with targets.
#[derive(Debug, Clone, Copy)]
pub struct Data<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub p: usize,
}

impl<'a> Data<'a> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn check(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(RegressError::Empty);
        }
        if self.x.len() != self.n() * self.p {
            return Err(RegressError::Dimension {
                expected: self.n() * self.p,
                found: self.x.len(),
            });
        }
        if self.x.iter().chain(self.y).any(|v| !v.is_finite()) {
            return Err(RegressError::NonFinite("training data".into()));
        }
        Ok(())
    }
}

impl<'a> From<&'a DesignMatrix> for Data<'a> {
    fn from(m: &'a DesignMatrix) -> Self {
        Data {
            x: &m.x,
            y: &m.y,
            p: m.p,
        }
    }
}

pub(crate) fn rmse_of(y: &[f64], pred: &[f64]) -> f64 {
    (y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Splitter {
    Exact,
    Histogram {
        #[serde(default = "default_bins")]
        bins: usize,
    },
}

fn default_bins() -> usize {
    256
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Growth {
    Level,
    Leaf {
        #[serde(default = "default_max_leaves")]
        max_leaves: usize,
    },
}

fn default_max_leaves() -> usize {
    31
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Defaults to ⌈p/3⌉.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            mtry: None,
            bootstrap: true,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtParams {
    pub rounds: usize,
    pub max_depth: Option<usize>,
    pub shrinkage: f64,
    pub leaf_l2: f64,
    pub min_child_weight: f64,
    pub splitter: Splitter,
    pub growth: Growth,
    /// Early-stopping patience in rounds; used only with a validation set.
    pub patience: Option<usize>,
}

impl Default for GbrtParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            max_depth: Some(3),
            shrinkage: 0.1,
            leaf_l2: 1.0,
            min_child_weight: 1.0,
            splitter: Splitter::Exact,
            growth: Growth::Level,
            patience: Some(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub layers: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub patience: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            layers: vec![128, 64],
            lr: 1e-3,
            epochs: 200,
            batch: 64,
            patience: 10,
        }
    }
}

fn default_ridge_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backbone {
    Linear,
    Ridge {
        #[serde(default = "default_ridge_lambda")]
        lambda: f64,
    },
    Forest(ForestParams),
    Gbrt(GbrtParams),
    Mlp(MlpParams),
}

impl Backbone {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RegressError::Config(m));
        match self {
            Backbone::Linear => Ok(()),
            Backbone::Ridge { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                bad(format!("ridge lambda {lambda} < 0"))
            }
            Backbone::Ridge { .. } => Ok(()),
            Backbone::Forest(f) => {
                if f.n_trees == 0 {
                    return bad("forest needs n_trees >= 1".into());
                }
                if f.max_depth == Some(0) || f.mtry == Some(0) || f.min_samples_leaf == 0 {
                    return bad("forest depth, mtry and min_samples_leaf must be >= 1".into());
                }
                Ok(())
            }
            Backbone::Gbrt(g) => {
                if g.rounds == 0 {
                    return bad("gbrt needs rounds >= 1".into());
                }
                if !(g.shrinkage > 0.0 && g.shrinkage <= 1.0) {
                    return bad(format!("shrinkage {} outside (0, 1]", g.shrinkage));
                }
                if g.max_depth == Some(0) {
                    return bad("gbrt depth must be >= 1".into());
                }
                if !(g.leaf_l2 >= 0.0) || !(g.min_child_weight >= 0.0) {
                    return bad("leaf_l2 and min_child_weight must be >= 0".into());
                }
                if let Splitter::Histogram { bins } = g.splitter {
                    if !(2..=65536).contains(&bins) {
                        return bad(format!("bins {bins} outside [2, 65536]"));
                    }
                }
                if let Growth::Leaf { max_leaves } = g.growth {
                    if max_leaves < 2 {
                        return bad("max_leaves must be >= 2".into());
                    }
                }
                if g.patience == Some(0) {
                    return bad("patience must be >= 1".into());
                }
                Ok(())
            }
            Backbone::Mlp(m) => {
                if m.layers.contains(&0) {
                    return bad("hidden widths must be >= 1".into());
                }
                if !(m.lr > 0.0 && m.lr.is_finite()) {
                    return bad(format!("learning rate {} must be > 0", m.lr));
                }
                if m.epochs == 0 || m.batch == 0 || m.patience == 0 {
                    return bad("epochs, batch and patience must be >= 1".into());
                }
                Ok(())
            }
        }
    }
}

/// A named backbone configuration, e.g. a boosting variant labelled after the
/// library it imitates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorSpec {
    pub name: String,
    pub model: Backbone,
}

impl RegressorSpec {
    pub fn new(name: &str, model: Backbone) -> Self {
        Self {
            name: name.to_string(),
            model,
        }
    }

    /// The seven default backbones.
    pub fn defaults() -> Vec<RegressorSpec> {
        vec![
            Self::new("LR", Backbone::Linear),
            Self::new("Ridge", Backbone::Ridge { lambda: 1.0 }),
            Self::new("RF", Backbone::Forest(ForestParams::default())),
            Self::new("GBRT", Backbone::Gbrt(GbrtParams::default())),
            Self::new(
                "XGBoost-style",
                Backbone::Gbrt(GbrtParams {
                    leaf_l2: 1.0,
                    min_child_weight: 5.0,
                    max_depth: Some(4),
                    ..GbrtParams::default()
                }),
            ),
            Self::new(
                "LightGBM-style",
                Backbone::Gbrt(GbrtParams {
                    splitter: Splitter::Histogram { bins: 256 },
                    growth: Growth::Leaf { max_leaves: 31 },
                    max_depth: None,
                    min_child_weight: 20.0,
                    ..GbrtParams::default()
                }),
            ),
            Self::new("MLP", Backbone::Mlp(MlpParams::default())),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Rounds, trees or epochs in the final model.
    pub rounds_used: usize,
    /// Training RMSE after each round or epoch.
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Linear(LinearModel),
    Forest(ForestModel),
    Gbrt(GbrtModel),
    Mlp(MlpModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub spec: RegressorSpec,
    pub p: usize,
    pub seed: u64,
    pub params: Params,
    pub meta: TrainingMeta,
}

/// Fits `spec` on `train`; `val` drives early stopping where the backbone
/// supports it.
pub fn train(spec: &RegressorSpec, train: Data, val: Option<Data>, seed: u64) -> Result<TrainedModel> {
    spec.model.validate()?;
    train.check()?;
    if let Some(v) = &val {
        v.check()?;
        if v.p != train.p {
            return Err(RegressError::Dimension {
                expected: train.p,
                found: v.p,
            });
        }
    }
    let mut meta = TrainingMeta::default();
    let params = match &spec.model {
        Backbone::Linear => Params::Linear(fit_linear(&train, 0.0)?),
        Backbone::Ridge { lambda } => Params::Linear(fit_linear(&train, *lambda)?),
        Backbone::Forest(f) => {
            let m = fit_forest(&train, f, seed)?;
            meta.rounds_used = m.trees.len();
            Params::Forest(m)
        }
        Backbone::Gbrt(g) => {
            let (m, fit_meta) = fit_gbrt(&train, g, val.as_ref(), seed)?;
            meta = fit_meta;
            Params::Gbrt(m)
        }
        Backbone::Mlp(m) => {
            let (model, fit_meta) = fit_mlp(&train, m, val.as_ref(), seed)?;
            meta = fit_meta;
            Params::Mlp(model)
        }
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        p: train.p,
        seed,
        params,
        meta,
    })
}

impl TrainedModel {
    /// One prediction per row of the row-major `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.p == 0 || !x.len().is_multiple_of(self.p) {
            return Err(RegressError::Dimension {
                expected: self.p,
                found: if self.p == 0 { x.len() } else { x.len() % self.p },
            });
        }
        let rows = x.chunks_exact(self.p);
        let out: Vec<f64> = match &self.params {
            Params::Linear(m) => rows.map(|r| m.predict_row(r)).collect(),
            Params::Forest(m) => rows.map(|r| m.predict_row(r)).collect(),
            Params::Gbrt(m) => rows.map(|r| m.predict_row(r)).collect(),
            Params::Mlp(m) => m.predict(x, self.p),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(RegressError::NonFinite("prediction".into()));
        }
        Ok(out)
    }

    pub fn predict_matrix(&self, m: &DesignMatrix, clamp: bool) -> Result<Vec<f64>> {
        if m.p != self.p {
            return Err(RegressError::Dimension {
                expected: self.p,
                found: m.p,
            });
        }
        let mut out = self.predict(&m.x)?;
        if clamp {
            out.iter_mut().for_each(|v| *v = v.clamp(1.0, 5.0));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |message: String| RegressError::Io {
            path: path.display().to_string(),
            message,
        };
        let json = serde_json::to_vec(self).map_err(|e| io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |message: String| RegressError::Io {
            path: path.display().to_string(),
            message,
        };
        let bytes = std::fs::read(path).map_err(|e| io(e.to_string()))?;
        let model: TrainedModel = serde_json::from_slice(&bytes).map_err(|e| io(e.to_string()))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(RegressError::Version(model.version));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn problem(n: usize, p: usize, s: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = seed::rng(s);
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..n)
            .map(|i| 3.0 + x[i * p] - 0.5 * x[i * p + 1] * x[i * p + 2] + 0.1 * rng.random::<f64>())
            .collect();
        (x, y)
    }

    fn small_specs() -> Vec<RegressorSpec> {
        let mut specs = RegressorSpec::defaults();
        for s in &mut specs {
            match &mut s.model {
                Backbone::Forest(f) => f.n_trees = 10,
                Backbone::Gbrt(g) => g.rounds = 20,
                Backbone::Mlp(m) => {
                    m.layers = vec![8];
                    m.epochs = 10;
                }
                _ => {}
            }
        }
        specs
    }

    #[test]
    fn every_backbone_round_trips_bit_exactly() {
        let (x, y) = problem(120, 4, 1);
        let (vx, vy) = problem(40, 4, 2);
        let dir = tempfile::tempdir().unwrap();
        for spec in small_specs() {
            let m = train(
                &spec,
                Data { x: &x, y: &y, p: 4 },
                Some(Data { x: &vx, y: &vy, p: 4 }),
                7,
            )
            .unwrap();
            let pred = m.predict(&vx).unwrap();
            assert_eq!(pred.len(), 40);
            let path = dir.path().join(format!("{}.json", spec.name));
            m.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            assert_eq!(back, m);
            let again = back.predict(&vx).unwrap();
            assert!(
                pred.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{}",
                spec.name
            );
        }
    }

    #[test]
    fn retraining_is_bit_identical() {
        let (x, y) = problem(100, 3, 3);
        for spec in small_specs() {
            let d = Data { x: &x, y: &y, p: 3 };
            let a = train(&spec, d, Some(d), 5).unwrap().predict(&x).unwrap();
            let b = train(&spec, d, Some(d), 5).unwrap().predict(&x).unwrap();
            assert_eq!(a, b, "{}", spec.name);
        }
    }

    #[test]
    fn wrong_width_rejected() {
        let (x, y) = problem(20, 3, 4);
        let m = train(
            &RegressorSpec::new("LR", Backbone::Linear),
            Data { x: &x, y: &y, p: 3 },
            None,
            0,
        )
        .unwrap();
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(RegressError::Dimension { .. })));
    }

    #[test]
    fn constant_target_fits_exactly() {
        let (x, _) = problem(60, 3, 5);
        let y = vec![4.0; 60];
        for spec in small_specs() {
            let d = Data { x: &x, y: &y, p: 3 };
            let pred = train(&spec, d, Some(d), 0).unwrap().predict(&x).unwrap();
            assert!(pred.iter().all(|p| (p - 4.0).abs() < 1e-9), "{}", spec.name);
        }
    }

    #[test]
    fn spec_json_forms() {
        let s: RegressorSpec = serde_json::from_str(
            r#"{"name":"L","model":{"kind":"gbrt","rounds":5,"splitter":{"kind":"histogram"},"growth":{"kind":"leaf","max_leaves":7}}}"#,
        )
        .unwrap();
        let Backbone::Gbrt(g) = &s.model else { panic!() };
        assert_eq!(g.splitter, Splitter::Histogram { bins: 256 });
        assert_eq!(g.growth, Growth::Leaf { max_leaves: 7 });
        assert_eq!(g.shrinkage, 0.1);
        assert!(
            serde_json::from_str::<RegressorSpec>(r#"{"name":"x","model":{"kind":"mlp","lr":0.1,"bogus":1}}"#).is_err()
        );
        assert!(serde_json::from_str::<RegressorSpec>(r#"{"name":"x","model":{"kind":"svm"}}"#).is_err());
        let r: RegressorSpec = serde_json::from_str(r#"{"name":"R","model":{"kind":"ridge"}}"#).unwrap();
        assert_eq!(r.model, Backbone::Ridge { lambda: 1.0 });
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        for model in [
            Backbone::Gbrt(GbrtParams {
                shrinkage: 1.5,
                ..GbrtParams::default()
            }),
            Backbone::Gbrt(GbrtParams {
                splitter: Splitter::Histogram { bins: 1 },
                ..GbrtParams::default()
            }),
            Backbone::Ridge { lambda: -1.0 },
            Backbone::Mlp(MlpParams {
                lr: 0.0,
                ..MlpParams::default()
            }),
        ] {
            assert!(model.validate().is_err(), "{model:?}");
        }
    }

    #[test]
    fn forest_predictions_within_target_range() {
        let (x, y) = problem(150, 3, 6);
        let spec = RegressorSpec::new(
            "RF",
            Backbone::Forest(ForestParams {
                n_trees: 15,
                ..ForestParams::default()
            }),
        );
        let m = train(&spec, Data { x: &x, y: &y, p: 3 }, None, 2).unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mut rng = seed::rng(9);
        let probe: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert!(m.predict(&probe).unwrap().iter().all(|p| (lo..=hi).contains(p)));
    }
}
