//! CART regression trees shared by the forest and boosting backbones.
//!
//! Splits maximize `S_L²/(n_L+λ) + S_R²/(n_R+λ) − S²/(n+λ)` over target sums
//! `S` and counts `n`; with `λ = 0` this is the usual variance reduction.
//! Rows go left when `x[feature] < threshold`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Growth, Splitter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes stored flat; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Checks that child links stay in range and every node is reachable once.
    pub fn is_well_formed(&self, p: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            match self.nodes[i] {
                Node::Leaf { value } if !value.is_finite() => return false,
                Node::Leaf { .. } => {}
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= p || !threshold.is_finite() {
                        return false;
                    }
                    stack.extend([left, right]);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Column-major copy of the training features, optionally pre-binned.
pub struct Columns {
    pub n: usize,
    pub p: usize,
    values: Vec<f64>,
    bins: Option<Binned>,
}

struct Binned {
    /// Per feature, ascending thresholds; bin `b` holds values in
    /// `[thresholds[b-1], thresholds[b])`.
    thresholds: Vec<Vec<f64>>,
    codes: Vec<u16>,
}

impl Columns {
    pub fn new(x: &[f64], p: usize, splitter: Splitter) -> Self {
        let n = x.len().checked_div(p).unwrap_or(0);
        let mut values = vec![0.0; n * p];
        for i in 0..n {
            for f in 0..p {
                values[f * n + i] = x[i * p + f];
            }
        }
        let bins = match splitter {
            Splitter::Exact => None,
            Splitter::Histogram { bins } => {
                let thresholds: Vec<Vec<f64>> = (0..p)
                    .map(|f| quantile_thresholds(&values[f * n..(f + 1) * n], bins))
                    .collect();
                let mut codes = vec![0u16; n * p];
                for f in 0..p {
                    let t = &thresholds[f];
                    for i in 0..n {
                        codes[f * n + i] = t.partition_point(|&c| c <= values[f * n + i]) as u16;
                    }
                }
                Some(Binned { thresholds, codes })
            }
        };
        Self { n, p, values, bins }
    }

    fn column(&self, f: usize) -> &[f64] {
        &self.values[f * self.n..(f + 1) * self.n]
    }
}

/// Split point strictly above `lo` and at most `hi`, so `x < t` separates them.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if lo < m {
        m
    } else {
        hi
    }
}

/// At most `bins − 1` thresholds placed at empirical quantiles, between
/// distinct values. Few distinct values give one threshold per gap.
pub fn quantile_thresholds(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        match distinct.last_mut() {
            Some((last, cum)) if *last == v => *cum = i + 1,
            _ => distinct.push((v, i + 1)),
        }
    }
    if distinct.len() <= bins {
        return distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::with_capacity(bins - 1);
    let mut k = 0;
    for j in 1..bins {
        let target = (j * n).div_ceil(bins);
        while k < distinct.len() && distinct[k].1 < target {
            k += 1;
        }
        if k + 1 >= distinct.len() {
            break;
        }
        let t = midpoint(distinct[k].0, distinct[k + 1].0);
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    /// Features examined per node; `None` examines all.
    pub mtry: Option<usize>,
    pub growth: Growth,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Open {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    split: Option<Split>,
}

fn score(sum: f64, count: f64, lambda: f64) -> f64 {
    if count + lambda > 0.0 {
        sum * sum / (count + lambda)
    } else {
        0.0
    }
}

struct Builder<'a, R> {
    cols: &'a Columns,
    targets: &'a [f64],
    params: TreeParams,
    rng: &'a mut R,
    features: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf_value(&self, rows: &[u32]) -> f64 {
        let sum: f64 = rows.iter().map(|&i| self.targets[i as usize]).sum();
        sum / (rows.len() as f64 + self.params.lambda)
    }

    fn min_child(&self) -> usize {
        let by_weight = self.params.min_child_weight.max(0.0).ceil() as usize;
        self.params.min_samples_leaf.max(by_weight).max(1)
    }

    fn best_split(&mut self, rows: &[u32], depth: usize) -> Option<Split> {
        let min_child = self.min_child();
        if rows.len() < 2 * min_child || self.params.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let first = self.targets[rows[0] as usize];
        if rows.iter().all(|&i| self.targets[i as usize] == first) {
            return None;
        }
        let lambda = self.params.lambda;
        let total: f64 = rows.iter().map(|&i| self.targets[i as usize]).sum();
        let n = rows.len() as f64;
        let parent = score(total, n, lambda);

        self.features.shuffle(self.rng);
        let mtry = self.params.mtry.unwrap_or(self.cols.p).clamp(1, self.cols.p);
        let mut best: Option<Split> = None;
        let mut examined = 0;
        // keep drawing features past `mtry` until one admits a split
        let mut start = 0;
        while start < self.features.len() {
            let end = if examined == 0 { start + mtry } else { start + 1 };
            let mut batch: Vec<usize> = self.features[start..end.min(self.features.len())].to_vec();
            batch.sort_unstable();
            start = end;
            for f in batch {
                examined += 1;
                if let Some(s) = self.scan_feature(f, rows, total, parent, min_child) {
                    let better = match best {
                        None => true,
                        Some(b) => s.gain > b.gain || (s.gain == b.gain && f < b.feature),
                    };
                    if better {
                        best = Some(s);
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        let best = best?;
        // zero-gain splits still separate an impure node; negative ones do not
        let tol = 1e-12 * parent.abs().max(1.0);
        (best.gain > -tol && (best.gain > tol || lambda == 0.0)).then_some(best)
    }

    fn scan_feature(&self, f: usize, rows: &[u32], total: f64, parent: f64, min_child: usize) -> Option<Split> {
        let lambda = self.params.lambda;
        let n = rows.len();
        let mut best: Option<Split> = None;
        let mut consider = |left_sum: f64, left_n: usize, threshold: f64| {
            let right_n = n - left_n;
            if left_n < min_child || right_n < min_child {
                return;
            }
            let gain =
                score(left_sum, left_n as f64, lambda) + score(total - left_sum, right_n as f64, lambda) - parent;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        };
        match &self.cols.bins {
            None => {
                let col = self.cols.column(f);
                let mut pairs: Vec<(f64, f64)> = rows
                    .iter()
                    .map(|&i| (col[i as usize], self.targets[i as usize]))
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left_sum = 0.0;
                for k in 0..n - 1 {
                    left_sum += pairs[k].1;
                    if pairs[k].0 < pairs[k + 1].0 {
                        consider(left_sum, k + 1, midpoint(pairs[k].0, pairs[k + 1].0));
                    }
                }
            }
            Some(binned) => {
                let thresholds = &binned.thresholds[f];
                if thresholds.is_empty() {
                    return None;
                }
                let codes = &binned.codes[f * self.cols.n..(f + 1) * self.cols.n];
                let mut sums = vec![0.0; thresholds.len() + 1];
                let mut counts = vec![0usize; thresholds.len() + 1];
                for &i in rows {
                    let b = codes[i as usize] as usize;
                    sums[b] += self.targets[i as usize];
                    counts[b] += 1;
                }
                let (mut left_sum, mut left_n) = (0.0, 0usize);
                for b in 0..thresholds.len() {
                    left_sum += sums[b];
                    left_n += counts[b];
                    if counts[b] > 0 && left_n < n {
                        consider(left_sum, left_n, thresholds[b]);
                    }
                }
            }
        }
        best
    }

    fn partition(&self, rows: Vec<u32>, split: Split) -> (Vec<u32>, Vec<u32>) {
        let col = self.cols.column(split.feature);
        rows.into_iter().partition(|&i| col[i as usize] < split.threshold)
    }
}

/// Grows one tree on `rows` (duplicates allowed, as in bootstrap samples).
pub fn grow<R: Rng>(cols: &Columns, targets: &[f64], rows: Vec<u32>, params: TreeParams, rng: &mut R) -> Tree {
    let mut b = Builder {
        cols,
        targets,
        params,
        rng,
        features: (0..cols.p).collect(),
    };
    let mut nodes = vec![Node::Leaf {
        value: b.leaf_value(&rows),
    }];
    if rows.is_empty() || cols.p == 0 {
        return Tree { nodes };
    }
    let split = b.best_split(&rows, 0);
    let mut open = vec![Open {
        node: 0,
        rows,
        depth: 0,
        split,
    }];
    let mut leaves = 1usize;
    let max_leaves = match params.growth {
        Growth::Level => usize::MAX,
        Growth::Leaf { max_leaves } => max_leaves.max(1),
    };
    loop {
        if leaves >= max_leaves {
            break;
        }
        // level-wise expands in creation order; leaf-wise takes the best gain
        let pick = match params.growth {
            Growth::Level => open.iter().position(|o| o.split.is_some()),
            Growth::Leaf { .. } => open
                .iter()
                .enumerate()
                .filter_map(|(k, o)| o.split.map(|s| (k, s.gain, o.node)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)))
                .map(|(k, _, _)| k),
        };
        let Some(k) = pick else { break };
        let o = open.remove(k);
        let split = o.split.unwrap();
        let (lrows, rrows) = b.partition(o.rows, split);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf {
            value: b.leaf_value(&lrows),
        });
        nodes.push(Node::Leaf {
            value: b.leaf_value(&rrows),
        });
        nodes[o.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        leaves += 1;
        for (node, rows) in [(left, lrows), (right, rrows)] {
            let split = b.best_split(&rows, o.depth + 1);
            if split.is_some() {
                open.push(Open {
                    node,
                    rows,
                    depth: o.depth + 1,
                    split,
                });
            }
        }
        if matches!(params.growth, Growth::Level) {
            // keep breadth-first order: children after all currently open nodes
            open.sort_by_key(|o| (o.depth, o.node));
        }
    }
    Tree { nodes }
}
