//! Metrics, baselines, benchmark and ablation runs, and their reports.

pub mod bow;
pub mod report;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{raw_value, FeatureSpec};
use crate::corpus::{CorpusError, Dataset, Tokenizer};
use crate::fusion::{DesignMatrix, FeatureTable, FusionError, Mask, Segment, DEFAULT_MAX_DROP_FRACTION};
use crate::regress::{train, Backbone, Data, RegressError, RegressorSpec, TrainedModel};
use crate::seed;

pub use bow::TfidfFeaturizer;
pub use report::{
    AssertionOutcome, DomainGroup, DomainResult, ErrorCase, EvalReport, Reference, ReportKind, ResultRow, RowStatus,
};
pub use synth::{generate_synthetic, DomainSpec, Latents, SyntheticData, SyntheticSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} targets vs {right} predictions")]
    Mismatch { left: usize, right: usize },
    #[error("no values to score")]
    Empty,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Regress(#[from] RegressError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(EvalError::Mismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(i) = y.iter().chain(y_hat).position(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(i % y.len()));
    }
    Ok(())
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sq: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let abs: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(abs / y.len() as f64)
}

/// Evaluation knobs shared by benchmark and ablation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Domains with fewer test reviews are reported as excluded.
    pub domain_floor: usize,
    pub top_errors: usize,
    /// Clamp predictions to the rating scale before scoring.
    pub clamp_predictions: bool,
    pub max_drop_fraction: f64,
    /// Include the single-source linear baselines in benchmark runs.
    pub baselines: bool,
    pub bow_min_doc_freq: usize,
    pub ablation_backbone: String,
    pub masks: Vec<Mask>,
    /// Row labels expected in strictly increasing RMSE order.
    pub expect_benchmark_order: Vec<String>,
    pub expect_ablation_order: Vec<String>,
    /// Minimum RMSE gap between consecutive labels of an expected order.
    pub min_gap: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            domain_floor: 30,
            top_errors: 10,
            clamp_predictions: false,
            max_drop_fraction: DEFAULT_MAX_DROP_FRACTION,
            baselines: true,
            bow_min_doc_freq: 2,
            ablation_backbone: "MLP".into(),
            masks: default_masks(),
            expect_benchmark_order: Vec::new(),
            expect_ablation_order: Vec::new(),
            min_gap: 0.0,
        }
    }
}

pub fn default_masks() -> Vec<Mask> {
    let mut masks = vec![Mask::full()];
    masks.extend(Segment::ALL.into_iter().map(Mask::without));
    masks
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_drop_fraction) {
            return Err(EvalError::Config("max_drop_fraction must lie in [0, 1]".into()));
        }
        if !(self.min_gap >= 0.0) {
            return Err(EvalError::Config("min_gap must be >= 0".into()));
        }
        if self.masks.is_empty() {
            return Err(EvalError::Config("at least one ablation mask is required".into()));
        }
        if self.bow_min_doc_freq == 0 {
            return Err(EvalError::Config("bow_min_doc_freq must be >= 1".into()));
        }
        Ok(())
    }
}

/// The split data and precomputed features one evaluation run draws on.
pub struct Experiment<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
    pub tokenizer: &'a Tokenizer,
    pub schema: &'a [FeatureSpec],
    pub seed: u64,
    tables: [FeatureTable; 3],
}

impl<'a> Experiment<'a> {
    pub fn new(
        splits: [&'a Dataset; 3],
        table: &FeatureTable,
        tokenizer: &'a Tokenizer,
        schema: &'a [FeatureSpec],
        seed: u64,
    ) -> Self {
        let tables = splits.map(|d| table.subset(d.iter().map(|r| &r.id)));
        Self {
            train: splits[0],
            val: splits[1],
            test: splits[2],
            tokenizer,
            schema,
            seed,
            tables,
        }
    }

    pub fn test_table(&self) -> &FeatureTable {
        &self.tables[2]
    }
}

/// Seed for training `spec` on `mask`: equal cells across runs train identically.
pub fn training_seed(base: u64, spec_name: &str, features: &str) -> u64 {
    seed::derive(base, &format!("train/{spec_name}/{features}"))
}

/// A scored train/test cell kept in memory for breakdowns.
pub struct CellOutcome {
    pub ids: Vec<String>,
    pub y: Vec<f64>,
    pub predictions: Vec<f64>,
    pub model: TrainedModel,
    pub dropped: usize,
}

fn score_cell(
    spec: &RegressorSpec,
    features: &str,
    train_m: (&[f64], &[f64], usize),
    val_m: Option<(&[f64], &[f64])>,
    test_m: (&[f64], &[f64], Vec<String>),
    exp: &Experiment,
    settings: &EvalSettings,
) -> Result<CellOutcome> {
    let (x, y, p) = train_m;
    let data = Data { x, y, p };
    let val = val_m.filter(|(_, vy)| !vy.is_empty()).map(|(x, y)| Data { x, y, p });
    let model = train(spec, data, val, training_seed(exp.seed, &spec.name, features))?;
    let (tx, ty, ids) = test_m;
    let mut predictions = model.predict(tx)?;
    if settings.clamp_predictions {
        predictions.iter_mut().for_each(|v| *v = v.clamp(1.0, 5.0));
    }
    Ok(CellOutcome {
        ids,
        y: ty.to_vec(),
        predictions,
        model,
        dropped: 0,
    })
}

/// Trains `spec` on the fused features selected by `mask` and scores it on
/// the test split.
pub fn run_cell(exp: &Experiment, spec: &RegressorSpec, mask: &Mask, settings: &EvalSettings) -> Result<CellOutcome> {
    let [tr, va, te] = &exp.tables;
    let (train_m, d0) = tr.design(mask, settings.max_drop_fraction)?;
    let (val_m, d1) = va.design(mask, settings.max_drop_fraction)?;
    let (test_m, d2) = te.design(mask, settings.max_drop_fraction)?;
    let mut cell = score_cell(
        spec,
        &mask.to_string(),
        (&train_m.x, &train_m.y, train_m.p),
        Some((&val_m.x, &val_m.y)),
        (&test_m.x, &test_m.y, test_m.ids.clone()),
        exp,
        settings,
    )?;
    cell.dropped = d0.dropped.len() + d1.dropped.len() + d2.dropped.len();
    Ok(cell)
}

/// Trains ordinary least squares on TF-IDF features of the raw text.
pub fn run_bow_cell(exp: &Experiment, settings: &EvalSettings) -> Result<CellOutcome> {
    let featurizer = TfidfFeaturizer::fit(exp.train, exp.tokenizer, settings.bow_min_doc_freq)?;
    let p = featurizer.dim();
    let x = featurizer.transform(exp.tokenizer, exp.train);
    let y: Vec<f64> = exp.train.iter().map(|r| r.rating).collect();
    let tx = featurizer.transform(exp.tokenizer, exp.test);
    let ty: Vec<f64> = exp.test.iter().map(|r| r.rating).collect();
    let ids = exp.test.iter().map(|r| r.id.clone()).collect();
    score_cell(
        &RegressorSpec::new("LR", Backbone::Linear),
        "bow",
        (&x, &y, p),
        None,
        (&tx, &ty, ids),
        exp,
        settings,
    )
}

fn hyperparameters(spec: &RegressorSpec) -> serde_json::Value {
    serde_json::to_value(&spec.model).unwrap_or_default()
}

fn row_from(label: &str, spec: &RegressorSpec, features: &str, outcome: &Result<CellOutcome>) -> ResultRow {
    let mut row = ResultRow {
        label: label.to_string(),
        backbone: spec.name.clone(),
        features: features.to_string(),
        status: RowStatus::Ok,
        error: None,
        n_test: 0,
        p: 0,
        rounds_used: None,
        rmse: None,
        mae: None,
        delta_rmse: None,
        delta_mae: None,
        reference: Reference::lookup(label),
        hyperparameters: hyperparameters(spec),
    };
    let scored = outcome
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|c| Ok((c, rmse(&c.y, &c.predictions).map_err(|e| e.to_string())?)));
    match scored {
        Ok((cell, r)) => {
            row.n_test = cell.y.len();
            row.p = cell.model.p;
            row.rounds_used = (cell.model.meta.rounds_used > 0).then_some(cell.model.meta.rounds_used);
            row.rmse = Some(r);
            row.mae = mae(&cell.y, &cell.predictions).ok();
        }
        Err(e) => {
            log::error!("{label} failed: {e}");
            row.status = RowStatus::Failed;
            row.error = Some(e);
        }
    }
    row
}

pub const BOW_LABEL: &str = "BoW + LR";
pub const TOPIC_LABEL: &str = "Topic + LR";
pub const SENTIMENT_LABEL: &str = "Sentiment + LR";

/// Every backbone on the full fused representation, plus the single-source
/// linear baselines. A failing cell is reported and the run continues.
pub fn run_benchmark(exp: &Experiment, backbones: &[RegressorSpec], settings: &EvalSettings) -> Result<EvalReport> {
    settings.validate()?;
    let mut report = EvalReport::new(ReportKind::Benchmark, exp);
    let mut cells: Vec<(usize, CellOutcome)> = Vec::new();
    let mut push = |report: &mut EvalReport, row: ResultRow, outcome: Result<CellOutcome>| {
        if let Ok(c) = outcome {
            cells.push((report.rows.len(), c));
        }
        report.rows.push(row);
    };
    let full = Mask::full();
    for spec in backbones {
        let outcome = run_cell(exp, spec, &full, settings);
        push(&mut report, row_from(&spec.name, spec, "full", &outcome), outcome);
    }
    if settings.baselines {
        let lr = RegressorSpec::new("LR", Backbone::Linear);
        let outcome = run_bow_cell(exp, settings);
        push(&mut report, row_from(BOW_LABEL, &lr, "bow", &outcome), outcome);
        for (label, segment) in [(TOPIC_LABEL, Segment::Topic), (SENTIMENT_LABEL, Segment::Sentiment)] {
            let mask = Mask::only(segment);
            let outcome = run_cell(exp, &lr, &mask, settings);
            push(&mut report, row_from(label, &lr, &mask.to_string(), &outcome), outcome);
        }
    }
    let best = report
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.features == "full")
        .filter_map(|(i, r)| r.rmse.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    finish(
        &mut report,
        exp,
        settings,
        &cells,
        best,
        &settings.expect_benchmark_order,
    );
    Ok(report)
}

/// The configured backbone on each mask, with RMSE and MAE deltas against
/// the full mask.
pub fn run_ablation(exp: &Experiment, backbones: &[RegressorSpec], settings: &EvalSettings) -> Result<EvalReport> {
    settings.validate()?;
    let spec = backbones
        .iter()
        .find(|s| s.name == settings.ablation_backbone)
        .ok_or_else(|| {
            EvalError::Config(format!(
                "ablation backbone '{}' is not configured",
                settings.ablation_backbone
            ))
        })?;
    let mut report = EvalReport::new(ReportKind::Ablation, exp);
    let mut cells = Vec::new();
    for mask in &settings.masks {
        let label = mask.to_string();
        let outcome = run_cell(exp, spec, mask, settings);
        let mut row = row_from(&label, spec, &label, &outcome);
        row.reference = Reference::lookup_ablation(&label);
        if let Ok(c) = outcome {
            cells.push((report.rows.len(), c));
        }
        report.rows.push(row);
    }
    let full = report
        .rows
        .iter()
        .find(|r| r.features == "full")
        .map(|r| (r.rmse, r.mae));
    if let Some((Some(fr), Some(fm))) = full {
        for row in &mut report.rows {
            row.delta_rmse = row.rmse.map(|v| v - fr);
            row.delta_mae = row.mae.map(|v| v - fm);
        }
    }
    let anchor = report
        .rows
        .iter()
        .position(|r| r.features == "full" && r.rmse.is_some());
    finish(
        &mut report,
        exp,
        settings,
        &cells,
        anchor,
        &settings.expect_ablation_order,
    );
    Ok(report)
}

fn finish(
    report: &mut EvalReport,
    exp: &Experiment,
    settings: &EvalSettings,
    cells: &[(usize, CellOutcome)],
    error_source: Option<usize>,
    expected: &[String],
) {
    report.rank();
    report.check_order(expected, settings.min_gap);
    for (i, cell) in cells {
        let label = &report.rows[*i].label;
        report.domains.push(domain_breakdown(
            label,
            &cell.ids,
            &cell.y,
            &cell.predictions,
            exp.test,
            settings.domain_floor,
        ));
    }
    if let Some((_, cell)) = error_source.and_then(|i| cells.iter().find(|(j, _)| *j == i)) {
        let mut cases = rank_errors(&cell.ids, &cell.y, &cell.predictions, settings.top_errors);
        describe_errors(&mut cases, exp.test, exp.test_table(), exp.schema);
        report.error_source = Some(report.rows[error_source.unwrap()].label.clone());
        report.top_errors = cases;
    }
}

/// Per-domain RMSE and MAE of one prediction set. Domains with fewer than
/// `floor` reviews are listed as excluded rather than scored.
pub fn domain_breakdown(
    label: &str,
    ids: &[String],
    y: &[f64],
    y_hat: &[f64],
    dataset: &Dataset,
    floor: usize,
) -> DomainResult {
    let records = dataset.by_id();
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((id, &t), &p) in ids.iter().zip(y).zip(y_hat) {
        let domain = records.get(id.as_str()).map_or("unknown", |r| r.domain_tag.as_str());
        let g = groups.entry(domain).or_default();
        g.0.push(t);
        g.1.push(p);
    }
    let mut result = DomainResult {
        label: label.to_string(),
        groups: Vec::new(),
        excluded: Vec::new(),
        rmse_spread: None,
        rmse_variance: None,
    };
    for (domain, (t, p)) in groups {
        if t.len() < floor {
            result.excluded.push((domain.to_string(), t.len()));
            continue;
        }
        result.groups.push(DomainGroup {
            domain: domain.to_string(),
            n: t.len(),
            rmse: rmse(&t, &p).unwrap_or(f64::NAN),
            mae: mae(&t, &p).unwrap_or(f64::NAN),
        });
    }
    if !result.groups.is_empty() {
        let r: Vec<f64> = result.groups.iter().map(|g| g.rmse).collect();
        let (lo, hi) = r.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        result.rmse_spread = Some(hi - lo);
        result.rmse_variance = Some(r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r.len() as f64);
    }
    result
}

/// The `k` largest absolute errors, largest first, ties broken by id.
pub fn rank_errors(ids: &[String], y: &[f64], y_hat: &[f64], k: usize) -> Vec<ErrorCase> {
    let mut cases: Vec<ErrorCase> = ids
        .iter()
        .zip(y)
        .zip(y_hat)
        .map(|((id, &t), &p)| ErrorCase {
            id: id.clone(),
            rating: t,
            predicted: p,
            abs_error: (t - p).abs(),
            theta: None,
            behavior: BTreeMap::new(),
            excerpt: String::new(),
        })
        .collect();
    cases.sort_by(|a, b| b.abs_error.total_cmp(&a.abs_error).then_with(|| a.id.cmp(&b.id)));
    cases.truncate(k);
    cases
}

/// Top-`k` errors of `model` on a design matrix.
pub fn top_errors(model: &TrainedModel, design: &DesignMatrix, k: usize, clamp: bool) -> Result<Vec<ErrorCase>> {
    let predictions = model.predict_matrix(design, clamp)?;
    Ok(rank_errors(&design.ids, &design.y, &predictions, k))
}

const EXCERPT_CHARS: usize = 120;

/// Fills in θ, pooled raw behavior values and a text excerpt for each case.
pub fn describe_errors(cases: &mut [ErrorCase], dataset: &Dataset, table: &FeatureTable, schema: &[FeatureSpec]) {
    let records = dataset.by_id();
    let thetas: BTreeMap<&str, &Vec<f64>> = table
        .rows
        .iter()
        .filter_map(|r| r.theta.as_ref().map(|t| (r.id.as_str(), t)))
        .collect();
    for case in cases {
        case.theta = thetas.get(case.id.as_str()).map(|t| t.to_vec());
        if let Some(r) = records.get(case.id.as_str()) {
            case.behavior = schema.iter().map(|s| (s.name.clone(), raw_value(r, s))).collect();
            case.excerpt = match r.text.char_indices().nth(EXCERPT_CHARS) {
                Some((cut, _)) => format!("{}...", &r.text[..cut]),
                None => r.text.clone(),
            };
        }
    }
}
