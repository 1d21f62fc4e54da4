use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Benchmark,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// Published figures shown alongside measured ones for orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub rmse: f64,
    pub mae: f64,
}

const BENCHMARK_REFERENCE: [(&str, f64, f64); 7] = [
    (super::BOW_LABEL, 0.852, 0.668),
    (super::TOPIC_LABEL, 0.791, 0.625),
    (super::SENTIMENT_LABEL, 0.721, 0.571),
    ("RF", 0.681, 0.542),
    ("GBRT", 0.655, 0.518),
    ("XGBoost-style", 0.639, 0.501),
    ("MLP", 0.612, 0.478),
];

const ABLATION_REFERENCE: [(&str, f64, f64); 4] = [
    ("full", 0.612, 0.478),
    ("-topic", 0.742, 0.598),
    ("-sentiment", 0.768, 0.614),
    ("-behavior", 0.701, 0.553),
];

impl Reference {
    fn find(table: &[(&str, f64, f64)], label: &str) -> Option<Self> {
        table
            .iter()
            .find(|(l, _, _)| *l == label)
            .map(|&(_, rmse, mae)| Self { rmse, mae })
    }

    pub fn lookup(label: &str) -> Option<Self> {
        Self::find(&BENCHMARK_REFERENCE, label)
    }

    pub fn lookup_ablation(mask: &str) -> Option<Self> {
        Self::find(&ABLATION_REFERENCE, mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub backbone: String,
    /// Mask name, or `bow` for the TF-IDF baseline.
    pub features: String,
    pub status: RowStatus,
    pub error: Option<String>,
    pub n_test: usize,
    pub p: usize,
    pub rounds_used: Option<usize>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub delta_rmse: Option<f64>,
    pub delta_mae: Option<f64>,
    #[serde(rename = "ref")]
    pub reference: Option<Reference>,
    pub hyperparameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGroup {
    pub domain: String,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub label: String,
    pub groups: Vec<DomainGroup>,
    /// Domains under the size floor, with their test counts.
    pub excluded: Vec<(String, usize)>,
    pub rmse_spread: Option<f64>,
    pub rmse_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCase {
    pub id: String,
    pub rating: f64,
    pub predicted: f64,
    pub abs_error: f64,
    pub theta: Option<Vec<f64>>,
    /// Pooled raw values before normalization; `None` when missing.
    pub behavior: BTreeMap<String, Option<f64>>,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: ReportKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub rows: Vec<ResultRow>,
    /// Labels of scored rows by increasing RMSE, ties by label.
    pub ranking: Vec<String>,
    pub assertions: Vec<AssertionOutcome>,
    pub domains: Vec<DomainResult>,
    pub error_source: Option<String>,
    pub top_errors: Vec<ErrorCase>,
}

impl EvalReport {
    pub fn new(kind: ReportKind, exp: &Experiment) -> Self {
        Self {
            kind,
            seed: exp.seed,
            n_train: exp.train.len(),
            n_val: exp.val.len(),
            n_test: exp.test.len(),
            rows: Vec::new(),
            ranking: Vec::new(),
            assertions: Vec::new(),
            domains: Vec::new(),
            error_source: None,
            top_errors: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn rmse_of(&self, label: &str) -> Option<f64> {
        self.row(label).and_then(|r| r.rmse)
    }

    pub(super) fn rank(&mut self) {
        let mut scored: Vec<(&str, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.rmse.map(|v| (r.label.as_str(), v)))
            .collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        self.ranking = scored.into_iter().map(|(l, _)| l.to_string()).collect();
    }

    /// Records one assertion per consecutive pair of `expected`.
    pub(super) fn check_order(&mut self, expected: &[String], min_gap: f64) {
        for pair in expected.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let passed = match (self.rmse_of(a), self.rmse_of(b)) {
                (Some(x), Some(y)) => y - x > min_gap,
                _ => false,
            };
            self.assertions.push(AssertionOutcome {
                description: format!("rmse({a}) + {min_gap} < rmse({b})"),
                passed,
            });
        }
    }

    pub fn all_assertions_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, json_path: &Path, text_path: &Path) -> std::io::Result<()> {
        std::fs::write(json_path, self.to_json() + "\n")?;
        std::fs::write(text_path, self.to_text())
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let title = match self.kind {
            ReportKind::Benchmark => "benchmark",
            ReportKind::Ablation => "ablation",
        };
        let _ = writeln!(
            out,
            "{title}  seed={}  train={} val={} test={}\n",
            self.seed, self.n_train, self.n_val, self.n_test
        );
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let delta = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:+.4}"));
        let mut table: Vec<[String; 9]> = vec![[
            "model", "features", "p", "rmse", "mae", "d_rmse", "ref_rmse", "ref_mae", "status",
        ]
        .map(String::from)];
        for r in &self.rows {
            table.push([
                r.label.clone(),
                r.features.clone(),
                r.p.to_string(),
                num(r.rmse),
                num(r.mae),
                delta(r.delta_rmse),
                num(r.reference.map(|x| x.rmse)),
                num(r.reference.map(|x| x.mae)),
                match r.status {
                    RowStatus::Ok => "ok".into(),
                    RowStatus::Failed => format!("failed: {}", r.error.as_deref().unwrap_or("")),
                },
            ]);
        }
        let widths: Vec<usize> = (0..9)
            .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| {
                    if c < 2 || c == 8 {
                        format!("{v:<w$}")
                    } else {
                        format!("{v:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if !self.ranking.is_empty() {
            let _ = writeln!(out, "\nranking: {}", self.ranking.join(" < "));
        }
        if !self.assertions.is_empty() {
            let _ = writeln!(out, "\nassertions:");
            for a in &self.assertions {
                let _ = writeln!(out, "  [{}] {}", if a.passed { "pass" } else { "FAIL" }, a.description);
            }
        }
        if !self.domains.is_empty() {
            let _ = writeln!(out, "\nper-domain rmse:");
            for d in &self.domains {
                let groups: Vec<String> = d
                    .groups
                    .iter()
                    .map(|g| format!("{}={:.4} (n={})", g.domain, g.rmse, g.n))
                    .collect();
                let _ = write!(out, "  {:<16} {}", d.label, groups.join("  "));
                if let Some(s) = d.rmse_spread {
                    let _ = write!(out, "  spread={s:.4}");
                }
                for (domain, n) in &d.excluded {
                    let _ = write!(out, "  [{domain} excluded, n={n}]");
                }
                let _ = writeln!(out);
            }
        }
        if let Some(source) = &self.error_source {
            let _ = writeln!(out, "\nlargest errors ({source}):");
            for c in &self.top_errors {
                let _ = writeln!(
                    out,
                    "  {}  y={:.2}  y_hat={:.2}  |e|={:.3}  {}",
                    c.id, c.rating, c.predicted, c.abs_error, c.excerpt
                );
            }
        }
        out
    }
}
