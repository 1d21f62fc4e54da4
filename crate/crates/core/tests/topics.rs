//! Topic recovery against a known generative model.

use learnsat::corpus::Vocabulary;
use learnsat::topics::{fit_lda, fit_lda_relabeled, FoldInConfig, LdaConfig, TopicModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const V: usize = 40;

/// Generating distributions: topic 0 lives on words 0..20, topic 1 on 20..40,
/// each with Zipf-like weights 1/(r+1).
fn generating_phi() -> Vec<Vec<f64>> {
    (0..2)
        .map(|t| {
            let mut row = vec![0.0; V];
            for r in 0..20 {
                row[t * 20 + r] = 1.0 / (r as f64 + 1.0);
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        })
        .collect()
}

fn sample_word(rng: &mut ChaCha8Rng, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut c = 0.0;
    for (w, &p) in row.iter().enumerate() {
        c += p;
        if u < c {
            return w;
        }
    }
    row.len() - 1
}

fn corpus(n_docs: usize, len: usize, seed: u64) -> Vec<Vec<usize>> {
    let phi = generating_phi();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|_| {
            // mostly single-topic documents with some mixing
            let mix: f64 = if rng.random::<f64>() < 0.5 { 0.9 } else { 0.1 };
            (0..len)
                .map(|_| {
                    let t = if rng.random::<f64>() < mix { 0 } else { 1 };
                    sample_word(&mut rng, &phi[t])
                })
                .collect()
        })
        .collect()
}

fn vocab() -> Vocabulary {
    Vocabulary::from_terms((0..V).map(|i| format!("w{i:03}")))
}

fn cfg() -> LdaConfig {
    LdaConfig {
        k: 2,
        alpha: Some(0.1),
        ..LdaConfig::default()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Greedy one-to-one matching of fitted rows to reference rows; returns the
/// matched cosine similarities indexed by reference row.
fn match_rows(model: &TopicModel, reference: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let k = reference.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (r, row) in reference.iter().enumerate() {
        for t in 0..model.k {
            pairs.push((cosine(row, model.phi_row(t)), r, t));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut assign = vec![usize::MAX; k];
    let mut sims = vec![0.0; k];
    let mut used = vec![false; model.k];
    for (s, r, t) in pairs {
        if assign[r] == usize::MAX && !used[t] {
            assign[r] = t;
            sims[r] = s;
            used[t] = true;
        }
    }
    (assign, sims)
}

#[test]
fn recovers_disjoint_generating_topics() {
    let docs = corpus(500, 10, 1);
    let model = fit_lda(&docs, &vocab(), &cfg(), 42).unwrap();
    let (_, sims) = match_rows(&model, &generating_phi());
    for s in sims {
        assert!(s > 0.9, "cosine {s}");
    }
}

#[test]
fn top_words_document_is_dominated_by_its_topic() {
    let v = vocab();
    let model = fit_lda(&corpus(500, 10, 1), &v, &cfg(), 42).unwrap();
    let (assign, _) = match_rows(&model, &generating_phi());
    let fitted = assign[0];
    let row = model.phi_row(fitted);
    let mut order: Vec<usize> = (0..V).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let doc: Vec<usize> = order[..10].to_vec();
    let theta = learnsat::topics::infer_theta(&model, &doc, &v, &FoldInConfig::default(), 3).unwrap();
    assert!(theta.theta[fitted] > 0.8, "{:?}", theta.theta);
}

#[test]
fn relabeled_init_permutes_fitted_rows() {
    let v = vocab();
    let docs = corpus(500, 10, 1);
    let base = fit_lda(&docs, &v, &cfg(), 42).unwrap();
    let swapped = fit_lda_relabeled(&docs, &v, &cfg(), 42, &[1, 0]).unwrap();
    let reference: Vec<Vec<f64>> = (0..2).map(|t| base.phi_row(t).to_vec()).collect();
    let (assign, sims) = match_rows(&swapped, &reference);
    let mut sorted = assign.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![0, 1]);
    for s in sims {
        assert!(s > 0.99, "cosine {s}");
    }
}

#[test]
fn true_k_beats_unigram_on_held_out_likelihood() {
    let v = vocab();
    let train = corpus(500, 10, 1);
    let held_out = corpus(100, 10, 2);
    let model = fit_lda(&train, &v, &cfg(), 42).unwrap();

    // K = 1 is a smoothed unigram model
    let beta = cfg().beta;
    let mut counts = vec![0.0; V];
    train.iter().flatten().for_each(|&w| counts[w] += 1.0);
    let total: f64 = counts.iter().sum();
    let unigram: Vec<f64> = counts.iter().map(|c| (c + beta) / (total + V as f64 * beta)).collect();

    let n_tokens: usize = held_out.iter().map(Vec::len).sum();
    let mut ll_lda = 0.0;
    let mut ll_uni = 0.0;
    for (i, doc) in held_out.iter().enumerate() {
        let theta = model.infer(doc, &FoldInConfig::default(), i as u64).unwrap();
        ll_lda += model.log_likelihood(doc, &theta);
        ll_uni += doc.iter().map(|&w| unigram[w].ln()).sum::<f64>();
    }
    let (per_lda, per_uni) = (ll_lda / n_tokens as f64, ll_uni / n_tokens as f64);
    assert!(per_lda > per_uni, "lda {per_lda} vs unigram {per_uni}");
}

#[test]
fn thousand_random_docs_on_simplex() {
    let v = vocab();
    let model = fit_lda(&corpus(200, 10, 1), &v, &cfg(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fold = FoldInConfig {
        iterations: 20,
        burn_in: 10,
    };
    for i in 0..1000 {
        let len = rng.random_range(0..15);
        let doc: Vec<usize> = (0..len).map(|_| rng.random_range(0..V)).collect();
        let th = model.infer(&doc, &fold, i).unwrap();
        let s: f64 = th.theta.iter().sum();
        assert!((s - 1.0).abs() < 1e-9 && th.theta.iter().all(|&x| x >= 0.0));
    }
}
