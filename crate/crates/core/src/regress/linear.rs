//! Least squares with an unpenalized intercept and optional L2 penalty.
//!
//! Both paths work on centered data and give the minimum-norm solution when
//! the unpenalized problem is rank deficient: a thin SVD of the design for
//! narrow problems, and an eigendecomposition of the centered Gram matrix
//! (which exploits sparse rows when forming it) once there are many columns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{Data, RegressError, Result};

/// Column count above which the Gram path is used.
const GRAM_PATH_MIN_COLUMNS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Numerical rank of the centered design.
    pub rank: usize,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

fn column_means(data: &Data) -> Vec<f64> {
    let mut means = vec![0.0; data.p];
    for i in 0..data.n() {
        for (m, x) in means.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= data.n() as f64);
    means
}

pub fn fit_linear(data: &Data, lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(RegressError::Config(format!(
            "ridge penalty must be >= 0, got {lambda}"
        )));
    }
    let (n, p) = (data.n(), data.p);
    if n == 0 {
        return Err(RegressError::Empty);
    }
    let x_mean = column_means(data);
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(LinearModel {
            weights: vec![],
            intercept: y_mean,
            rank: 0,
        });
    }
    let (weights, rank) = if p < GRAM_PATH_MIN_COLUMNS || n < p {
        solve_svd(data, &x_mean, y_mean, lambda)
    } else {
        solve_gram(data, &x_mean, y_mean, lambda)
    };
    if lambda == 0.0 && rank < p {
        log::warn!("design has rank {rank} < {p} columns; returning the minimum-norm solution");
    }
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(RegressError::NonFinite("linear solve".into()));
    }
    Ok(LinearModel {
        weights,
        intercept,
        rank,
    })
}

fn solve_svd(data: &Data, x_mean: &[f64], y_mean: f64, lambda: f64) -> (Vec<f64>, usize) {
    let (n, p) = (data.n(), data.p);
    let xc = DMatrix::from_fn(n, p, |i, j| data.x[i * p + j] - x_mean[j]);
    let yc = DVector::from_iterator(n, data.y.iter().map(|y| y - y_mean));
    let svd = xc.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let tol = s_max * n.max(p) as f64 * f64::EPSILON;
    let uty = u.transpose() * yc;
    let mut coef = DVector::zeros(s.len());
    let mut rank = 0;
    for k in 0..s.len() {
        if s[k] > tol {
            rank += 1;
            coef[k] = s[k] * uty[k] / (s[k] * s[k] + lambda);
        }
    }
    ((v_t.transpose() * coef).iter().copied().collect(), rank)
}

fn solve_gram(data: &Data, x_mean: &[f64], y_mean: f64, lambda: f64) -> (Vec<f64>, usize) {
    let (n, p) = (data.n(), data.p);
    // raw cross products over non-zero entries, then centered
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut nz: Vec<(usize, f64)> = Vec::with_capacity(p);
    for i in 0..n {
        nz.clear();
        nz.extend(data.row(i).iter().copied().enumerate().filter(|(_, v)| *v != 0.0));
        let yi = data.y[i] - y_mean;
        for &(a, va) in &nz {
            xty[a] += va * yi;
            for &(b, vb) in &nz {
                if b <= a {
                    gram[(a, b)] += va * vb;
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let g = gram[(a, b)] - n as f64 * x_mean[a] * x_mean[b];
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let e_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = e_max * p as f64 * 16.0 * f64::EPSILON;
    let vt_xty = eig.eigenvectors.transpose() * xty;
    let mut coef = DVector::zeros(p);
    let mut rank = 0;
    for k in 0..p {
        let e = eig.eigenvalues[k];
        if e > tol {
            rank += 1;
            coef[k] = vt_xty[k] / (e + lambda);
        }
    }
    ((eig.eigenvectors * coef).iter().copied().collect(), rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn data<'a>(x: &'a [f64], y: &'a [f64], p: usize) -> Data<'a> {
        Data { x, y, p }
    }

    #[test]
    fn exact_line() {
        let m = fit_linear(&data(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], 1), 0.0).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn ridge_closed_form() {
        // centered solve: w = Sxy/(Sxx+λ) = 0.5/1.5, b = ȳ − w·x̄
        let m = fit_linear(&data(&[0.0, 1.0], &[0.0, 1.0], 1), 1.0).unwrap();
        assert!((m.weights[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.intercept - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_predicts_mean() {
        let x = [1.0, 5.0, 2.0, 8.0];
        let y = [3.0, 1.0, 4.0, 2.0];
        let m = fit_linear(&data(&x, &y, 1), 1e12).unwrap();
        assert!(m.weights[0].abs() < 1e-9);
        assert!((m.predict_row(&[100.0]) - 2.5).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // duplicated column: min-norm splits the weight evenly
        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let y = [2.0, 4.0, 6.0];
        let m = fit_linear(&data(&x, &y, 2), 0.0).unwrap();
        assert_eq!(m.rank, 1);
        assert!((m.weights[0] - 1.0).abs() < 1e-10 && (m.weights[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_target() {
        let m = fit_linear(&data(&[1.0, 2.0, 7.0], &[4.0, 4.0, 4.0], 1), 0.0).unwrap();
        assert!((m.predict_row(&[3.3]) - 4.0).abs() < 1e-12);
    }

    fn random_problem(n: usize, p: usize, sparse: bool, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = crate::seed::rng(seed);
        let x: Vec<f64> = (0..n * p)
            .map(|_| {
                if sparse && rng.random::<f64>() < 0.9 {
                    0.0
                } else {
                    rng.random::<f64>() * 2.0 - 1.0
                }
            })
            .collect();
        let w: Vec<f64> = (0..p).map(|j| (j as f64 * 0.7).sin()).collect();
        let y = (0..n)
            .map(|i| 1.5 + (0..p).map(|j| x[i * p + j] * w[j]).sum::<f64>() + 0.1 * (rng.random::<f64>() - 0.5))
            .collect();
        (x, y)
    }

    #[test]
    fn gram_and_svd_paths_agree() {
        let (n, p) = (600, 250);
        let (x, y) = random_problem(n, p, true, 3);
        let d = data(&x, &y, p);
        let means = column_means(&d);
        let ym = y.iter().sum::<f64>() / n as f64;
        for lambda in [0.0, 0.5] {
            let (a, ra) = solve_svd(&d, &means, ym, lambda);
            let (b, rb) = solve_gram(&d, &means, ym, lambda);
            assert_eq!(ra, rb);
            let diff = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "max weight difference {diff}");
        }
    }

    #[test]
    fn tiny_ridge_matches_ols() {
        let (x, y) = random_problem(200, 5, false, 9);
        let d = data(&x, &y, 5);
        let ols = fit_linear(&d, 0.0).unwrap();
        let ridge = fit_linear(&d, 1e-12).unwrap();
        let rmse = ((0..200)
            .map(|i| (ols.predict_row(d.row(i)) - ridge.predict_row(d.row(i))).powi(2))
            .sum::<f64>()
            / 200.0)
            .sqrt();
        assert!(rmse < 1e-6);
    }

    proptest! {
        #[test]
        fn ridge_norm_shrinks(seed in 0u64..1000, l1 in 0.0f64..50.0, dl in 0.0f64..50.0) {
            let (x, y) = random_problem(30, 4, false, seed);
            let d = data(&x, &y, 4);
            let norm = |m: LinearModel| m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            let a = norm(fit_linear(&d, l1).unwrap());
            let b = norm(fit_linear(&d, l1 + dl).unwrap());
            prop_assert!(a >= b - 1e-12);
        }
    }
}
