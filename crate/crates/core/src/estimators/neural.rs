//! Temporal convolution, gated recurrent unit and a dense scalar head.
//!
//! For a window `X` of `L` rows by `F` features:
//!
//! ```text
//! x_t = tanh(b_c + sum_{k,f} W_c[c,k,f] X[t+k, f])        t = 0 .. L-K
//! z   = sigmoid(W_z x + U_z h + b_z)
//! r   = sigmoid(W_r x + U_r h + b_r)
//! n   = tanh(W_n x + b_n + r * (U_n h + b_hn))
//! h   = (1 - z) * n + z * h_prev                            h_{-1} = 0
//! y   = w_o . h_last + b_o
//! ```
//!
//! All parameters live in one flat vector; tensors are row-major slices of
//! it in the order listed by [`NetShape::tensors`].

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::Scalar;

use super::{check_windows, ModelKind, Standardizer, TrainedModel, TrainingReport, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub features: usize,
    pub kernel_width: usize,
    pub channels: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    conv_w: usize,
    conv_b: usize,
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wn: usize,
    un: usize,
    bn: usize,
    bhn: usize,
    wo: usize,
    bo: usize,
    total: usize,
}

impl NetShape {
    /// `(name, shape)` for every tensor, in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (f, k, c, h) = (self.features, self.kernel_width, self.channels, self.hidden);
        vec![
            ("conv_w", vec![c, k, f]),
            ("conv_b", vec![c]),
            ("w_z", vec![h, c]),
            ("u_z", vec![h, h]),
            ("b_z", vec![h]),
            ("w_r", vec![h, c]),
            ("u_r", vec![h, h]),
            ("b_r", vec![h]),
            ("w_n", vec![h, c]),
            ("u_n", vec![h, h]),
            ("b_n", vec![h]),
            ("b_hn", vec![h]),
            ("w_o", vec![h]),
            ("b_o", vec![1]),
        ]
    }

    fn offsets(&self) -> Offsets {
        let sizes: Vec<usize> = self.tensors().iter().map(|(_, s)| s.iter().product()).collect();
        let mut at = [0usize; 15];
        for i in 0..14 {
            at[i + 1] = at[i] + sizes[i];
        }
        Offsets {
            conv_w: at[0],
            conv_b: at[1],
            wz: at[2],
            uz: at[3],
            bz: at[4],
            wr: at[5],
            ur: at[6],
            br: at[7],
            wn: at[8],
            un: at[9],
            bn: at[10],
            bhn: at[11],
            wo: at[12],
            bo: at[13],
            total: at[14],
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Tensor<T> {
    name: String,
    shape: Vec<usize>,
    values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct NetworkFile<T> {
    shape: NetShape,
    tensors: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", into = "NetworkFile<T>", try_from = "NetworkFile<T>")]
pub struct Network<T> {
    pub shape: NetShape,
    pub params: Vec<T>,
}

impl<T: Scalar> From<Network<T>> for NetworkFile<T> {
    fn from(net: Network<T>) -> Self {
        let mut at = 0;
        let tensors = net
            .shape
            .tensors()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let values = net.params[at..at + n].to_vec();
                at += n;
                Tensor {
                    name: name.to_string(),
                    shape,
                    values,
                }
            })
            .collect();
        NetworkFile {
            shape: net.shape,
            tensors,
        }
    }
}

impl<T: Scalar> TryFrom<NetworkFile<T>> for Network<T> {
    type Error = String;

    fn try_from(file: NetworkFile<T>) -> std::result::Result<Self, String> {
        let expected = file.shape.tensors();
        if expected.len() != file.tensors.len() {
            return Err("wrong number of tensors".into());
        }
        let mut params = Vec::with_capacity(file.shape.param_count());
        for ((name, shape), t) in expected.iter().zip(file.tensors) {
            if t.name != *name || t.shape != *shape || t.values.len() != shape.iter().product::<usize>() {
                return Err(format!("tensor `{}` does not match shape {shape:?}", t.name));
            }
            params.extend(t.values);
        }
        Ok(Network {
            shape: file.shape,
            params,
        })
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Forward activations of one sample, kept for backprop.
struct Trace<T> {
    conv: Vec<Vec<T>>,
    h: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
    n: Vec<Vec<T>>,
    hn: Vec<Vec<T>>,
    y: T,
}

impl<T: Scalar> Network<T> {
    pub fn zeros(shape: NetShape) -> Self {
        Network {
            shape,
            params: vec![T::zero(); shape.param_count()],
        }
    }

    /// Uniform Xavier weights, zero biases.
    pub fn xavier(shape: NetShape, seed_value: u64) -> Self {
        let mut net = Self::zeros(shape);
        let o = shape.offsets();
        let mut rng = seed::rng(seed_value, "network-init");
        let (f, k, c, h) = (shape.features, shape.kernel_width, shape.channels, shape.hidden);
        let mut fill = |start: usize, len: usize, fan_in: usize, fan_out: usize, params: &mut [T]| {
            let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = T::lit(rng.random_range(-a..=a));
            }
        };
        fill(o.conv_w, c * k * f, k * f, c, &mut net.params);
        for w in [o.wz, o.wr, o.wn] {
            fill(w, h * c, c, h, &mut net.params);
        }
        for u in [o.uz, o.ur, o.un] {
            fill(u, h * h, h, h, &mut net.params);
        }
        fill(o.wo, h, h, 1, &mut net.params);
        net
    }

    fn run(&self, x: &[Vec<T>]) -> Trace<T> {
        let s = self.shape;
        let o = s.offsets();
        let p = &self.params;
        let (f, k, c, hd) = (s.features, s.kernel_width, s.channels, s.hidden);
        let steps = x.len() + 1 - k;
        let mut conv = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut out = vec![T::zero(); c];
            for (ch, v) in out.iter_mut().enumerate() {
                let mut a = p[o.conv_b + ch];
                for kk in 0..k {
                    let base = o.conv_w + (ch * k + kk) * f;
                    for ff in 0..f {
                        a += p[base + ff] * x[t + kk][ff];
                    }
                }
                *v = a.tanh();
            }
            conv.push(out);
        }
        let mut tr = Trace {
            conv,
            h: Vec::with_capacity(steps + 1),
            z: Vec::with_capacity(steps),
            r: Vec::with_capacity(steps),
            n: Vec::with_capacity(steps),
            hn: Vec::with_capacity(steps),
            y: T::zero(),
        };
        tr.h.push(vec![T::zero(); hd]);
        let affine = |w: usize, u: usize, b: usize, xin: &[T], h: &[T], i: usize| -> T {
            let mut a = if b == usize::MAX { T::zero() } else { p[b + i] };
            if w != usize::MAX {
                for j in 0..c {
                    a += p[w + i * c + j] * xin[j];
                }
            }
            for j in 0..hd {
                a += p[u + i * hd + j] * h[j];
            }
            a
        };
        for t in 0..steps {
            let xin = &tr.conv[t];
            let hp = &tr.h[t];
            let mut z = vec![T::zero(); hd];
            let mut r = vec![T::zero(); hd];
            let mut n = vec![T::zero(); hd];
            let mut hn = vec![T::zero(); hd];
            let mut h = vec![T::zero(); hd];
            for i in 0..hd {
                z[i] = sigmoid(affine(o.wz, o.uz, o.bz, xin, hp, i));
                r[i] = sigmoid(affine(o.wr, o.ur, o.br, xin, hp, i));
                hn[i] = affine(usize::MAX, o.un, o.bhn, xin, hp, i);
                let mut an = p[o.bn + i] + r[i] * hn[i];
                for j in 0..c {
                    an += p[o.wn + i * c + j] * xin[j];
                }
                n[i] = an.tanh();
                h[i] = (T::one() - z[i]) * n[i] + z[i] * hp[i];
            }
            tr.z.push(z);
            tr.r.push(r);
            tr.n.push(n);
            tr.hn.push(hn);
            tr.h.push(h);
        }
        let last = tr.h.last().unwrap();
        let mut y = p[o.bo];
        for i in 0..hd {
            y += p[o.wo + i] * last[i];
        }
        tr.y = y;
        tr
    }

    /// Output for one standardized window.
    pub fn forward(&self, x: &[Vec<T>]) -> T {
        self.run(x).y
    }

    /// Adds `dy * d y / d params` for one sample into `grad`.
    fn backward(&self, x: &[Vec<T>], tr: &Trace<T>, dy: T, grad: &mut [T]) {
        let s = self.shape;
        let o = s.offsets();
        let p = &self.params;
        let (f, k, c, hd) = (s.features, s.kernel_width, s.channels, s.hidden);
        let steps = tr.conv.len();
        let one = T::one();

        grad[o.bo] += dy;
        let mut dh = vec![T::zero(); hd];
        let last = &tr.h[steps];
        for i in 0..hd {
            grad[o.wo + i] += dy * last[i];
            dh[i] = dy * p[o.wo + i];
        }
        let mut dconv = vec![vec![T::zero(); c]; steps];
        for t in (0..steps).rev() {
            let (z, r, n, hn) = (&tr.z[t], &tr.r[t], &tr.n[t], &tr.hn[t]);
            let hp = &tr.h[t];
            let xin = &tr.conv[t];
            let mut dh_prev = vec![T::zero(); hd];
            let mut daz = vec![T::zero(); hd];
            let mut dar = vec![T::zero(); hd];
            let mut dan = vec![T::zero(); hd];
            let mut dhn = vec![T::zero(); hd];
            for i in 0..hd {
                let dn = dh[i] * (one - z[i]);
                let dz = dh[i] * (hp[i] - n[i]);
                dh_prev[i] = dh[i] * z[i];
                dan[i] = dn * (one - n[i] * n[i]);
                let dr = dan[i] * hn[i];
                dhn[i] = dan[i] * r[i];
                dar[i] = dr * r[i] * (one - r[i]);
                daz[i] = dz * z[i] * (one - z[i]);
            }
            for i in 0..hd {
                grad[o.bz + i] += daz[i];
                grad[o.br + i] += dar[i];
                grad[o.bn + i] += dan[i];
                grad[o.bhn + i] += dhn[i];
                for j in 0..c {
                    grad[o.wz + i * c + j] += daz[i] * xin[j];
                    grad[o.wr + i * c + j] += dar[i] * xin[j];
                    grad[o.wn + i * c + j] += dan[i] * xin[j];
                    dconv[t][j] += p[o.wz + i * c + j] * daz[i]
                        + p[o.wr + i * c + j] * dar[i]
                        + p[o.wn + i * c + j] * dan[i];
                }
                for j in 0..hd {
                    grad[o.uz + i * hd + j] += daz[i] * hp[j];
                    grad[o.ur + i * hd + j] += dar[i] * hp[j];
                    grad[o.un + i * hd + j] += dhn[i] * hp[j];
                    dh_prev[j] += p[o.uz + i * hd + j] * daz[i]
                        + p[o.ur + i * hd + j] * dar[i]
                        + p[o.un + i * hd + j] * dhn[i];
                }
            }
            dh = dh_prev;
        }
        for t in 0..steps {
            for ch in 0..c {
                let a = tr.conv[t][ch];
                let da = dconv[t][ch] * (one - a * a);
                grad[o.conv_b + ch] += da;
                for kk in 0..k {
                    let base = o.conv_w + (ch * k + kk) * f;
                    for ff in 0..f {
                        grad[base + ff] += da * x[t + kk][ff];
                    }
                }
            }
        }
    }

    /// Mean squared error over the samples.
    pub fn loss(&self, xs: &[Vec<Vec<T>>], ys: &[T]) -> T {
        let s: T = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let e = self.forward(x) - y;
                e * e
            })
            .sum();
        s / T::from_usize_lossy(xs.len())
    }

    /// Gradient of [`Network::loss`]. Per-sample gradients are computed in
    /// parallel and summed in sample order.
    pub fn loss_gradient(&self, xs: &[Vec<Vec<T>>], ys: &[T]) -> (T, Vec<T>) {
        let scale = T::lit(2.0) / T::from_usize_lossy(xs.len());
        let parts: Vec<(T, Vec<T>)> = xs
            .par_iter()
            .zip(ys.par_iter())
            .map(|(x, &y)| {
                let tr = self.run(x);
                let e = tr.y - y;
                let mut g = vec![T::zero(); self.params.len()];
                self.backward(x, &tr, scale * e, &mut g);
                (e * e, g)
            })
            .collect();
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        (loss / T::from_usize_lossy(xs.len()), grad)
    }
}

/// Largest relative difference between the backprop gradient of the mean
/// squared error and central finite differences with step `1e-5`, over
/// every parameter. Relative error is `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn check_gradients(net: &Network<f64>, xs: &[Vec<Vec<f64>>], ys: &[f64]) -> f64 {
    let (_, grad) = net.loss_gradient(xs, ys);
    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss(xs, ys);
        probe.params[i] = orig - h;
        let down = probe.loss(xs, ys);
        probe.params[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    pub lags: usize,
    pub kernel_width: usize,
    pub channels: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled L2 shrinkage applied with every step.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Trailing share of the training windows held out to pick the epoch
    /// whose parameters are kept. Zero keeps the last epoch.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            lags: 6,
            kernel_width: 3,
            channels: 8,
            hidden: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            epochs: 200,
            batch_size: 32,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_width == 0 || self.channels == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("network sizes must be >= 1".into()));
        }
        if self.kernel_width > self.lags + 1 {
            return Err(Error::InvalidArgument(format!(
                "kernel width {} exceeds window length {}",
                self.kernel_width,
                self.lags + 1
            )));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0 && self.weight_decay >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::InvalidArgument("invalid optimizer settings".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [T], grad: &[T], cfg: &NeuralConfig) {
        self.step += 1;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let lr = T::lit(cfg.learning_rate);
        let eps = T::lit(cfg.epsilon);
        let decay = T::lit(cfg.learning_rate * cfg.weight_decay);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps) + decay * params[i];
        }
    }
}

/// Trains on raw windows of `config.lags + 1` rows. Inputs are
/// standardized per column and targets by their training mean and spread.
pub fn train_neural<T: Scalar>(
    windows: &[Vec<Vec<T>>],
    targets: &[T],
    columns: &[String],
    config: &NeuralConfig,
) -> Result<TrainedModel<T>> {
    config.validate()?;
    let len = check_windows(windows, targets, columns.len())?;
    if len != config.lags + 1 {
        return Err(Error::Shape(format!(
            "windows have {len} rows, config expects {}",
            config.lags + 1
        )));
    }
    let all: Vec<usize> = (0..columns.len()).collect();
    let rows: Vec<&[T]> = windows.iter().flatten().map(Vec::as_slice).collect();
    let standardizer = Standardizer::fit(&rows, &all);
    let xs: Vec<Vec<Vec<T>>> = windows
        .iter()
        .map(|w| w.iter().map(|r| standardizer.transform(r)).collect())
        .collect();
    let n = T::from_usize_lossy(targets.len());
    let t_mean = targets.iter().copied().sum::<T>() / n;
    let t_sd = (targets.iter().map(|&y| (y - t_mean) * (y - t_mean)).sum::<T>() / n).sqrt();
    let t_sd = if t_sd > T::zero() { t_sd } else { T::one() };
    let ys: Vec<T> = targets.iter().map(|&y| (y - t_mean) / t_sd).collect();

    let shape = NetShape {
        features: standardizer.width(),
        kernel_width: config.kernel_width,
        channels: config.channels,
        hidden: config.hidden,
    };
    let mut net = Network::xavier(shape, config.seed);
    let mut adam = Adam::new(net.params.len());
    let n_val = (xs.len() as f64 * config.validation_fraction).floor() as usize;
    let n_fit = xs.len() - n_val;
    let (fit_x, val_x) = xs.split_at(n_fit);
    let (fit_y, val_y) = ys.split_at(n_fit);
    let mut order: Vec<usize> = (0..n_fit).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut validation_losses = Vec::new();
    let mut best: Option<(usize, T, Vec<T>)> = None;
    for epoch in 0..config.epochs {
        let mut rng = seed::rng_indexed(config.seed, "epoch-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<Vec<Vec<T>>> = batch.iter().map(|&i| fit_x[i].clone()).collect();
            let by: Vec<T> = batch.iter().map(|&i| fit_y[i]).collect();
            let (_, grad) = net.loss_gradient(&bx, &by);
            adam.update(&mut net.params, &grad, config);
        }
        let loss = net.loss(fit_x, fit_y);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        losses.push(loss.to_f64_lossy());
        if n_val > 0 {
            let v = net.loss(val_x, val_y);
            validation_losses.push(v.to_f64_lossy());
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((epoch, v, net.params.clone()));
            }
        }
    }
    let best_epoch = best.map(|(epoch, _, params)| {
        net.params = params;
        epoch
    });
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Neural,
        columns: columns.to_vec(),
        lags: config.lags,
        selected_features: all,
        standardizer,
        target_mean: t_mean,
        target_std: t_sd,
        forest: None,
        network: Some(net),
        training_report: TrainingReport {
            losses,
            validation_losses,
            best_epoch,
            oob_mae: None,
            samples: windows.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> NetShape {
        NetShape {
            features: 3,
            kernel_width: 2,
            channels: 4,
            hidden: 5,
        }
    }

    fn samples(n: usize, len: usize, f: usize, seed_value: u64) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let mut rng = seed::rng(seed_value, "test-samples");
        let xs: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..len).map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        let ys = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (xs, ys)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f64>::zeros(shape());
        let (xs, _) = samples(4, 4, 3, 1);
        for x in &xs {
            assert_eq!(net.forward(x), 0.0);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut net = Network::xavier(shape(), 3);
        // Non-zero biases so every path is exercised.
        let mut rng = seed::rng(3, "bias");
        for p in net.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let (xs, ys) = samples(3, 4, 3, 2);
        let err = check_gradients(&net, &xs, &ys);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn zero_inputs_give_zero_conv_weight_gradient() {
        let net = Network::xavier(shape(), 5);
        let xs = vec![vec![vec![0.0; 3]; 4]; 2];
        let (_, g) = net.loss_gradient(&xs, &[0.5, -0.5]);
        let n = 4 * 2 * 3;
        assert!(g[..n].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_has_same_mean_gradient() {
        let net = Network::xavier(shape(), 9);
        let (xs, ys) = samples(1, 4, 3, 4);
        let (_, g1) = net.loss_gradient(&xs, &ys);
        let xs2 = vec![xs[0].clone(), xs[0].clone()];
        let (_, g2) = net.loss_gradient(&xs2, &[ys[0], ys[0]]);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn json_is_shape_annotated() {
        let net = Network::<f64>::xavier(shape(), 1);
        let text = serde_json::to_string(&net).unwrap();
        assert!(text.contains(r#""name":"conv_w","shape":[4,2,3]"#));
        let back: Network<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn single_sample_is_memorized() {
        let cols: Vec<String> = (0..2).map(|i| format!("c{i}")).collect();
        let windows = vec![vec![vec![1.0, 2.0], vec![0.5, -1.0]]];
        let cfg = NeuralConfig {
            lags: 1,
            kernel_width: 2,
            epochs: 300,
            learning_rate: 1e-2,
            ..NeuralConfig::default()
        };
        let m = train_neural(&windows, &[42.0], &cols, &cfg).unwrap();
        assert!(*m.training_report.losses.last().unwrap() < 1e-6);
        assert!((m.predict(&windows[0]).unwrap().value - 42.0f64).abs() < 1e-3);
    }

    #[test]
    fn rejects_inconsistent_windows() {
        let cols: Vec<String> = vec!["a".into()];
        let windows = vec![vec![vec![1.0]; 7], vec![vec![1.0]; 6]];
        assert!(train_neural(&windows, &[1.0, 2.0], &cols, &NeuralConfig::default()).is_err());
        let cfg = NeuralConfig {
            lags: 0,
            ..NeuralConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
