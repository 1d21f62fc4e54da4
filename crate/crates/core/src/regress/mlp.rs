//! Fully connected ReLU network with a linear scalar output, trained on mean
//! squared error with Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rmse_of, Data, MlpParams, RegressError, Result, TrainingMeta};
use crate::seed;

/// Layer widths plus one flat parameter vector holding, per layer, the
/// `inputs × outputs` weight matrix (row-major) followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    pub fn zeros(widths: Vec<usize>) -> Self {
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            widths,
            params: vec![0.0; count],
        }
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut off = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let o = off;
                off += w[0] * w[1] + w[1];
                (o, w[0], w[1])
            })
            .collect()
    }

    fn layer<'a>(
        params: &'a [f64],
        (off, inp, out): (usize, usize, usize),
    ) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let w = ArrayView2::from_shape((inp, out), &params[off..off + inp * out]).unwrap();
        let b = ArrayView1::from(&params[off + inp * out..off + inp * out + out]);
        (w, b)
    }

    /// He-uniform weights, zero hidden biases, output bias at `output_bias`.
    pub fn init<R: Rng>(widths: Vec<usize>, output_bias: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        let offsets = net.layer_offsets();
        for &(off, inp, out) in &offsets {
            let limit = (6.0 / inp.max(1) as f64).sqrt();
            for v in &mut net.params[off..off + inp * out] {
                *v = rng.random_range(-limit..limit);
            }
        }
        let last = net.params.len() - 1;
        net.params[last] = output_bias;
        net
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let offsets = self.layer_offsets();
        let mut a = x.to_owned();
        for (l, &lo) in offsets.iter().enumerate() {
            let (w, b) = Self::layer(&self.params, lo);
            let mut z = a.dot(&w) + b;
            if l + 1 < offsets.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    /// Mean squared error over the rows of `x` and its gradient with respect
    /// to `params`, in the same layout.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Vec<f64>) {
        let offsets = self.layer_offsets();
        let batch = x.nrows() as f64;
        let mut acts: Vec<Array2<f64>> = vec![x.to_owned()];
        for (l, &lo) in offsets.iter().enumerate() {
            let (w, b) = Self::layer(&self.params, lo);
            let mut z = acts[l].dot(&w) + b;
            if l + 1 < offsets.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let out = acts.last().unwrap().column(0).to_owned();
        let err = &out - &y;
        let loss = err.dot(&err) / batch;

        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = (err * (2.0 / batch)).insert_axis(Axis(1));
        for l in (0..offsets.len()).rev() {
            let (off, inp, out) = offsets[l];
            let gw = acts[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grad[off..off + inp * out].copy_from_slice(gw.as_standard_layout().as_slice().unwrap());
            grad[off + inp * out..off + inp * out + out].copy_from_slice(gb.as_slice().unwrap());
            if l > 0 {
                let (w, _) = Self::layer(&self.params, offsets[l]);
                let mut back = delta.dot(&w.t());
                // post-activation > 0 exactly where the pre-activation was
                back.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub network: Network,
}

impl MlpModel {
    fn standardize(&self, x: &[f64], p: usize) -> Array2<f64> {
        let n = x.len() / p.max(1);
        Array2::from_shape_fn((n, p), |(i, j)| {
            (x[i * p + j] - self.input_mean[j]) / self.input_scale[j]
        })
    }

    pub fn predict(&self, x: &[f64], p: usize) -> Vec<f64> {
        self.network.forward(self.standardize(x, p).view()).to_vec()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

pub fn fit_mlp(data: &Data, params: &MlpParams, val: Option<&Data>, seed: u64) -> Result<(MlpModel, TrainingMeta)> {
    let (n, p) = (data.n(), data.p);
    let mut input_mean = vec![0.0; p];
    let mut input_scale = vec![0.0; p];
    for j in 0..p {
        let col = (0..n).map(|i| data.x[i * p + j]);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        input_mean[j] = mean;
        input_scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let mut widths = vec![p];
    widths.extend(&params.layers);
    widths.push(1);
    let y_mean = data.y.iter().sum::<f64>() / n as f64;
    let mut network = Network::init(widths, y_mean, &mut seed::rng(seed::derive(seed, "mlp-init")));
    // start from the constant mean predictor
    let (off, inp, _) = *network.layer_offsets().last().unwrap();
    network.params[off..off + inp].iter_mut().for_each(|w| *w = 0.0);
    let mut model = MlpModel {
        input_mean,
        input_scale,
        network,
    };
    let x = model.standardize(data.x, p);
    let y = ArrayView1::from(data.y);
    let vx = val.map(|v| model.standardize(v.x, p));

    let mut adam = Adam {
        m: vec![0.0; model.network.params.len()],
        v: vec![0.0; model.network.params.len()],
        t: 0,
        lr: params.lr,
    };
    let mut rng = seed::rng(seed::derive(seed, "mlp-shuffle"));
    let batch = params.batch.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut meta = TrainingMeta::default();
    let mut best = (f64::INFINITY, model.network.params.clone(), 0usize);
    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let bx = x.select(Axis(0), chunk);
            let by: Array1<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grad) = model.network.loss_and_grad(bx.view(), by.view());
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RegressError::NonFinite(format!(
                    "MLP loss diverged in epoch {epoch}; lower the learning rate (currently {})",
                    params.lr
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut model.network.params, &grad);
        }
        meta.train_curve.push((epoch_loss / n as f64).sqrt());
        if let (Some(v), Some(vx)) = (val, &vx) {
            let score = rmse_of(v.y, model.network.forward(vx.view()).as_slice().unwrap());
            meta.val_curve.push(score);
            if score < best.0 {
                best = (score, model.network.params.clone(), epoch);
            } else if epoch - best.2 >= params.patience {
                break;
            }
        }
    }
    if val.is_some() && best.2 > 0 {
        model.network.params = best.1;
        meta.rounds_used = best.2;
    } else {
        meta.rounds_used = meta.train_curve.len();
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_relative_error(net: &Network, x: ArrayView2<f64>, y: ArrayView1<f64>, eps: f64) -> f64 {
        let (_, analytic) = net.loss_and_grad(x, y);
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for (k, &exact) in analytic.iter().enumerate() {
            probe.params[k] = net.params[k] + eps;
            let up = probe.loss_and_grad(x, y).0;
            probe.params[k] = net.params[k] - eps;
            let down = probe.loss_and_grad(x, y).0;
            probe.params[k] = net.params[k];
            let numeric = (up - down) / (2.0 * eps);
            let scale = exact.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((exact - numeric).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seed::rng(11);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(5, |_| rng.random_range(1.0..5.0));
        let net = Network::init(vec![4, 3, 3, 1], 0.0, &mut rng);
        let err = max_relative_error(&net, x.view(), y.view(), 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn constant_target_bias() {
        let x = vec![0.0; 200 * 3];
        let y = vec![3.0; 200];
        let d = Data { x: &x, y: &y, p: 3 };
        let params = MlpParams {
            layers: vec![8],
            epochs: 20,
            ..MlpParams::default()
        };
        let (m, _) = fit_mlp(&d, &params, None, 0).unwrap();
        assert!((m.network.params.last().unwrap() - 3.0).abs() < 1e-2);
        assert!(m.predict(&[0.0, 0.0, 0.0], 3).iter().all(|p| (p - 3.0).abs() < 1e-2));
    }

    #[test]
    fn planted_linear_problem() {
        let mut rng = seed::rng(12);
        let p = 5;
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut make = |n: usize| {
            let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| (0..p).map(|j| x[i * p + j] * w[j]).sum::<f64>() + 0.01 * rng.random_range(-1.0..1.0))
                .collect();
            (x, y)
        };
        let (x, y) = make(500);
        let (tx, ty) = make(200);
        let params = MlpParams {
            layers: vec![32, 16],
            lr: 3e-3,
            epochs: 300,
            batch: 32,
            ..MlpParams::default()
        };
        let (m, _) = fit_mlp(&Data { x: &x, y: &y, p }, &params, None, 0).unwrap();
        let rmse = rmse_of(&ty, &m.predict(&tx, p));
        assert!(rmse < 0.1, "test rmse {rmse}");
    }

    #[test]
    fn divergence_is_reported() {
        let x: Vec<f64> = (0..400).map(|i| (i % 17) as f64).collect();
        let y: Vec<f64> = (0..200).map(|i| 1e200 * (i as f64)).collect();
        let params = MlpParams {
            layers: vec![4],
            lr: 1e10,
            epochs: 5,
            ..MlpParams::default()
        };
        assert!(matches!(
            fit_mlp(&Data { x: &x, y: &y, p: 2 }, &params, None, 0),
            Err(RegressError::NonFinite(_))
        ));
    }
}
