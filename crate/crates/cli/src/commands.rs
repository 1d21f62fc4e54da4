use std::collections::BTreeMap;
use std::fmt::Write as _;

use learnsat::corpus::{
    ingest_reviews, write_jsonl, write_rejects, Dataset, IngestFormat, SplitAssignment, Vocabulary,
};
use learnsat::embed::{load_embeddings, save_embeddings};
use learnsat::eval::{generate_synthetic, rmse, run_ablation, run_benchmark, training_seed, EvalReport};
use learnsat::fusion::{FeatureTable, Mask};
use learnsat::pipeline::{self, ExperimentConfig, FittedStages};
use learnsat::regress::{train, Data, TrainedModel};
use learnsat::topics::TopicModel;
use serde::Serialize;

use crate::artifacts::*;
use crate::error::CliError;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: OutDir,
}

type Result<T> = std::result::Result<T, CliError>;

impl Context {
    fn reviews(&self) -> Result<Dataset> {
        let path = self.out.require(REVIEWS)?;
        let outcome = ingest_reviews(&path, IngestFormat::Jsonl, &self.cfg.behavior_names())?;
        if let Some(r) = outcome.rejects.first() {
            return Err(CliError::Runtime(format!(
                "{}: line {} is invalid ({}); regenerate it",
                path.display(),
                r.line,
                r.reason
            )));
        }
        Ok(outcome.dataset)
    }

    fn split(&self, dataset: &Dataset) -> Result<(SplitAssignment, [Dataset; 3])> {
        let split: SplitAssignment = self.out.read_json(SPLIT)?;
        let (train, val, test) = split.apply(dataset)?;
        Ok((split, [train, val, test]))
    }

    fn stages(&self, train: &Dataset) -> Result<FittedStages> {
        let tokenizer = self.cfg.topics.tokenizer()?;
        let vocab: Vocabulary = self.out.read_json(VOCAB)?;
        let topics = TopicModel::load(&self.out.require(TOPICS)?)?;
        let embeddings = load_embeddings(&self.out.require(EMBEDDINGS)?)?;
        let norm_stats = pipeline::fit_behavior(&self.cfg, train)?;
        Ok(FittedStages {
            tokenizer,
            vocab,
            topics,
            embeddings,
            norm_stats,
        })
    }
}

pub fn synth(ctx: &Context) -> Result<()> {
    let data = generate_synthetic(&ctx.cfg.data.synthetic)?;
    write_jsonl(&data.dataset, &ctx.out.path(REVIEWS))?;
    ctx.out.write_json(LATENTS, &data.latents)?;
    log::info!("wrote {} synthetic reviews", data.dataset.len());
    Ok(())
}

pub fn ingest(ctx: &Context) -> Result<()> {
    let path = ctx
        .cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Config("ingest needs data.path".into()))?;
    let outcome = ingest_reviews(path, ctx.cfg.data.format, &ctx.cfg.behavior_names())?;
    write_jsonl(&outcome.dataset, &ctx.out.path(REVIEWS))?;
    write_rejects(&outcome.rejects, &ctx.out.path(REJECTS))?;
    log::info!(
        "ingested {} reviews, rejected {}",
        outcome.dataset.len(),
        outcome.reject_count()
    );
    Ok(())
}

pub fn split(ctx: &Context) -> Result<()> {
    let dataset = ctx.reviews()?;
    let split = pipeline::split(&ctx.cfg, &dataset)?;
    ctx.out.write_json(SPLIT, &split)?;
    log::info!(
        "split {} / {} / {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn fit_topics(ctx: &Context) -> Result<()> {
    let dataset = ctx.reviews()?;
    let (_, [train, _, _]) = ctx.split(&dataset)?;
    let tokenizer = ctx.cfg.topics.tokenizer()?;
    let vocab = pipeline::fit_vocab(&ctx.cfg, &train, &tokenizer)?;
    let model = pipeline::fit_topics(&ctx.cfg, &train, &vocab, &tokenizer)?;
    ctx.out.write_json(VOCAB, &vocab)?;
    model.save(&ctx.out.path(TOPICS))?;
    log::info!("fitted K={} topics over {} terms", model.k, vocab.len());
    Ok(())
}

pub fn embed(ctx: &Context) -> Result<()> {
    let dataset = ctx.reviews()?;
    let store = pipeline::embed_dataset(&ctx.cfg, &dataset)?;
    save_embeddings(&store, &ctx.out.path(EMBEDDINGS))?;
    log::info!("embedded {} reviews (dim {})", store.len(), store.dim());
    Ok(())
}

pub fn featurize(ctx: &Context) -> Result<()> {
    let dataset = ctx.reviews()?;
    let (_, [train, _, _]) = ctx.split(&dataset)?;
    let stages = ctx.stages(&train)?;
    let table = pipeline::featurize(&ctx.cfg, &dataset, &stages)?;
    stages.norm_stats.save(&ctx.out.path(NORM_STATS))?;
    table.save(&ctx.out.path(FEATURES))?;
    let (design, _) = table.design(&Mask::full(), ctx.cfg.eval.max_drop_fraction)?;
    design.write_csv(&ctx.out.path(DESIGN_CSV))?;
    log::info!("featurized {} reviews, {} columns", design.n(), design.p);
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    file: String,
    p: usize,
    rounds_used: usize,
    val_rmse: Option<f64>,
    test_rmse: Option<f64>,
}

/// Fits every configured backbone on the full fused features.
pub fn train_models(ctx: &Context) -> Result<()> {
    let table = FeatureTable::load(&ctx.out.require(FEATURES)?)?;
    let split: SplitAssignment = ctx.out.read_json(SPLIT)?;
    let mask = Mask::full();
    let drop = ctx.cfg.eval.max_drop_fraction;
    let (tr, _) = table.subset(&split.train).design(&mask, drop)?;
    let (va, _) = table.subset(&split.val).design(&mask, drop)?;
    let (te, _) = table.subset(&split.test).design(&mask, drop)?;
    let models_dir = ctx.out.path(MODELS_DIR);
    std::fs::create_dir_all(&models_dir).map_err(|e| CliError::io(&models_dir, e))?;
    let score = |m: &TrainedModel, d: &learnsat::fusion::DesignMatrix| -> Result<Option<f64>> {
        if d.n() == 0 {
            return Ok(None);
        }
        let p = m.predict_matrix(d, ctx.cfg.eval.clamp_predictions)?;
        Ok(Some(rmse(&d.y, &p)?))
    };
    let mut summary = Vec::new();
    for spec in &ctx.cfg.backbones {
        let val = (va.n() > 0).then(|| Data::from(&va));
        let model = train(
            spec,
            Data::from(&tr),
            val,
            training_seed(ctx.cfg.seed, &spec.name, "full"),
        )?;
        let file = format!("{MODELS_DIR}/{}.json", file_stem(&spec.name));
        model.save(&ctx.out.path(&file))?;
        summary.push(TrainSummary {
            model: spec.name.clone(),
            file,
            p: model.p,
            rounds_used: model.meta.rounds_used,
            val_rmse: score(&model, &va)?,
            test_rmse: score(&model, &te)?,
        });
        log::info!("trained {}", spec.name);
    }
    ctx.out.write_json(TRAIN_SUMMARY, &summary)
}

/// Loads what earlier stages left in the output directory and computes
/// (and saves) anything missing, so the eval commands run end to end.
fn prepared(ctx: &Context) -> Result<pipeline::Prepared> {
    let dataset = ctx.reviews()?;
    if !ctx.out.has(SPLIT) {
        split(ctx)?;
    }
    if !ctx.out.has(VOCAB) || !ctx.out.has(TOPICS) {
        fit_topics(ctx)?;
    }
    if !ctx.out.has(EMBEDDINGS) {
        embed(ctx)?;
    }
    if !ctx.out.has(FEATURES) {
        featurize(ctx)?;
    }
    let (split, [train, val, test]) = ctx.split(&dataset)?;
    let stages = ctx.stages(&train)?;
    let table = FeatureTable::load(&ctx.out.path(FEATURES))?;
    Ok(pipeline::Prepared {
        split,
        train,
        val,
        test,
        stages,
        table,
    })
}

fn finish_report(ctx: &Context, report: &EvalReport, stem: &str) -> Result<()> {
    let json = ctx.out.path(&format!("{stem}.json"));
    let text = ctx.out.path(&format!("{stem}.txt"));
    report.save(&json, &text).map_err(|e| CliError::io(&json, e))?;
    print!("{}", report.to_text());
    let failed: Vec<&str> = report
        .assertions
        .iter()
        .filter(|a| !a.passed)
        .map(|a| a.description.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed.join("; ")))
    }
}

pub fn benchmark(ctx: &Context) -> Result<()> {
    let prep = prepared(ctx)?;
    let report = run_benchmark(&prep.experiment(&ctx.cfg), &ctx.cfg.backbones, &ctx.cfg.eval)?;
    finish_report(ctx, &report, BENCHMARK)
}

pub fn ablate(ctx: &Context) -> Result<()> {
    let prep = prepared(ctx)?;
    let report = run_ablation(&prep.experiment(&ctx.cfg), &ctx.cfg.backbones, &ctx.cfg.eval)?;
    finish_report(ctx, &report, ABLATION)
}

/// Renders whichever evaluation reports exist into one text file.
pub fn report(ctx: &Context) -> Result<()> {
    let mut found: BTreeMap<&str, EvalReport> = BTreeMap::new();
    for stem in [BENCHMARK, ABLATION] {
        let path = ctx.out.path(&format!("{stem}.json"));
        if path.exists() {
            found.insert(stem, read_json_file(&path)?);
        }
    }
    if found.is_empty() {
        return Err(CliError::Missing {
            artifact: ctx.out.path(&format!("{BENCHMARK}.json")).display().to_string(),
            producer: "benchmark` or `ablate",
        });
    }
    let mut text = String::new();
    for stem in [BENCHMARK, ABLATION] {
        if let Some(r) = found.get(stem) {
            let _ = writeln!(text, "{}", r.to_text());
        }
    }
    let path = ctx.out.path(REPORT);
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    print!("{text}");
    Ok(())
}
