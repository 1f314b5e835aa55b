//! Multilayer perceptrons with hand-written reverse mode, a diagonal Gaussian
//! policy head and Adam.
//!
//! Parameters of an [`Mlp`] live in one flat buffer: for each layer the
//! weight matrix (row-major, `outputs x inputs`) followed by the bias vector.
//! Gradients use the same layout, so optimizers and norm clipping work on
//! plain slices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::SplitMix64;

pub const HIDDEN_WIDTH: usize = 64;
pub const HIDDEN_LAYERS: usize = 2;

/// Output-layer gain of the policy mean network.
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;
pub const VALUE_OUTPUT_GAIN: f64 = 1.0;
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;

/// Fully connected network, tanh on hidden layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpRecord", try_from = "MlpRecord")]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// All-zero network with the given layer widths (input first).
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::domain(format!("invalid layer widths {dims:?}")));
        }
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self { dims: dims.to_vec(), params: vec![0.0; count] })
    }

    /// `input -> 64 -> 64 -> output` with orthogonal initialization: gain sqrt(2)
    /// on hidden layers, `output_gain` on the last; zero biases.
    pub fn init(input_dim: usize, output_dim: usize, output_gain: f64, seed: u64) -> Result<Self> {
        let dims = [input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, output_dim];
        Self::init_with_dims(&dims, output_gain, seed)
    }

    pub fn init_with_dims(dims: &[usize], output_gain: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut rng = SplitMix64::new(seed);
        let layers = net.num_layers();
        for l in 0..layers {
            let gain = if l + 1 == layers { output_gain } else { HIDDEN_GAIN };
            let (rows, cols) = (net.dims[l + 1], net.dims[l]);
            let w = orthogonal(rows, cols, gain, &mut rng);
            let (w_range, _) = net.layer_ranges(l);
            net.params[w_range].copy_from_slice(&w);
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two widths")
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Two tanh hidden layers of exactly 64 units.
    pub fn has_standard_shape(&self) -> bool {
        self.dims.len() == HIDDEN_LAYERS + 2 && self.dims[1..=HIDDEN_LAYERS].iter().all(|&w| w == HIDDEN_WIDTH)
    }

    fn layer_ranges(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut start = 0;
        for w in self.dims.windows(2).take(layer) {
            start += w[0] * w[1] + w[1];
        }
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        (start..start + i * o, start + i * o..start + i * o + o)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_ranges(layer).0]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layer_ranges(layer).1]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        check_len("network input", self.input_dim(), x.len())?;
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_vec());
        for l in 0..layers {
            let (wr, br) = self.layer_ranges(l);
            let (w, b) = (&self.params[wr], &self.params[br]);
            let input = &activations[l];
            let n_in = input.len();
            let mut out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + dot(&w[o * n_in..(o + 1) * n_in], input))
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
        }
        let y = activations[layers].clone();
        Ok((y, ForwardCache { activations }))
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x).map(|(y, _)| y)).collect()
    }

    /// Parameter gradients and input gradient for output cotangent `dy`.
    pub fn backward(&self, cache: &ForwardCache, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backward_accumulate(cache, dy, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Mlp::backward`] but adds into `grads`.
    pub fn backward_accumulate(&self, cache: &ForwardCache, dy: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        let layers = self.num_layers();
        if cache.activations.len() != layers + 1
            || cache.activations.iter().zip(&self.dims).any(|(a, &d)| a.len() != d)
        {
            return Err(Error::usage("forward cache does not belong to this network"));
        }
        check_len("output cotangent", self.output_dim(), dy.len())?;
        check_len("gradient buffer", self.params.len(), grads.len())?;

        let mut delta = dy.to_vec();
        for l in (0..layers).rev() {
            if l + 1 < layers {
                for (d, a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let (wr, br) = self.layer_ranges(l);
            let input = &cache.activations[l];
            let n_in = input.len();
            for (o, d) in delta.iter().enumerate() {
                grads[br.start + o] += d;
                let row = &mut grads[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            let w = &self.params[wr];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major `rows x cols` matrix with orthonormal rows or columns, scaled by `gain`.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut SplitMix64) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(tall, short, |_, _| rng.standard_normal());
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let w = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * w[(i, j)]);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRecord {
    dims: Vec<usize>,
    layers: Vec<LayerRecord>,
}

impl From<Mlp> for MlpRecord {
    fn from(net: Mlp) -> Self {
        let layers = (0..net.num_layers())
            .map(|l| LayerRecord {
                weights: net.weights(l).chunks_exact(net.dims[l]).map(<[f64]>::to_vec).collect(),
                bias: net.bias(l).to_vec(),
            })
            .collect();
        MlpRecord { dims: net.dims, layers }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: MlpRecord) -> Result<Self> {
        let mut net = Mlp::zeros(&rec.dims)?;
        check_len("network layers", net.num_layers(), rec.layers.len())?;
        let mut params = Vec::with_capacity(net.params.len());
        for (l, layer) in rec.layers.into_iter().enumerate() {
            check_len("weight rows", net.dims[l + 1], layer.weights.len())?;
            for row in layer.weights {
                check_len("weight columns", net.dims[l], row.len())?;
                params.extend(row);
            }
            check_len("bias", net.dims[l + 1], layer.bias.len())?;
            params.extend(layer.bias);
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }
}

/// Mean and standard deviation of a diagonal Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicyOut {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl GaussianPolicyOut {
    fn check(&self) -> Result<()> {
        check_len("policy std", self.mean.len(), self.std.len())?;
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::domain("policy standard deviation must be positive"));
        }
        Ok(())
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        self.check()?;
        check_len("action", self.mean.len(), action.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.std)
            .zip(action)
            .map(|((m, s), a)| {
                let z = (a - m) / s;
                -0.5 * z * z - s.ln() - HALF_LN_2PI
            })
            .sum())
    }

    /// `sum(1/2 ln(2 pi e) + ln sigma_i)`.
    pub fn entropy(&self) -> Result<f64> {
        self.check()?;
        Ok(self.std.iter().map(|s| 0.5 + HALF_LN_2PI + s.ln()).sum())
    }

    /// `mean + std * N(0, 1)` per dimension; not clipped.
    pub fn sample(&self, rng: &mut SplitMix64) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + s * rng.standard_normal()).collect()
    }
}

/// Policy mean network plus state-independent learnable log standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn init(input_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            net: Mlp::init(input_dim, action_dim, POLICY_OUTPUT_GAIN, seed)?,
            log_std: vec![0.0; action_dim],
        })
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.len()
    }

    pub fn forward(&self, obs: &[f64]) -> Result<(GaussianPolicyOut, ForwardCache)> {
        let (mean, cache) = self.net.forward(obs)?;
        let std = self.log_std.iter().map(|l| l.exp()).collect();
        Ok((GaussianPolicyOut { mean, std }, cache))
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-5, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// Bias-corrected update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam parameters", self.m.len(), params.len())?;
        check_len("adam gradients", self.m.len(), grads.len())?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_net(dims: &[usize], rng: &mut SplitMix64) -> Mlp {
        let mut net = Mlp::zeros(dims).unwrap();
        net.params_mut().iter_mut().for_each(|p| *p = 0.8 * rng.next_signed());
        net
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[5, 64, 64, 3]).unwrap();
        let (y, _) = net.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn micro_net_scalar_chain() {
        // 1 -> 1 -> 1 -> 1 with w = 0.5, 1.5, -2.0 and b = 0.1, -0.2, 0.3
        let mut net = Mlp::zeros(&[1, 1, 1, 1]).unwrap();
        net.params_mut().copy_from_slice(&[0.5, 0.1, 1.5, -0.2, -2.0, 0.3]);
        let x = 0.7;
        let h1 = (0.5f64 * x + 0.1).tanh();
        let h2 = (1.5 * h1 - 0.2).tanh();
        let want = -2.0 * h2 + 0.3;
        let (y, _) = net.forward(&[x]).unwrap();
        assert!((y[0] - want).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
        let other = Mlp::zeros(&[2, 4, 2]).unwrap();
        let (_, cache) = other.forward(&[1.0, 2.0]).unwrap();
        assert!(matches!(net.backward(&cache, &[1.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn batching_is_per_sample() {
        let mut rng = SplitMix64::new(1);
        let net = random_net(&[4, 8, 8, 2], &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.next_signed()).collect()).collect();
        let batch = net.forward_batch(&xs).unwrap();
        for (x, y) in xs.iter().zip(batch) {
            assert_eq!(net.forward(x).unwrap().0, y);
        }
    }

    #[test]
    fn backward_zero_and_linearity() {
        let mut rng = SplitMix64::new(2);
        let net = random_net(&[3, 5, 5, 2], &mut rng);
        let (_, cache) = net.forward(&[0.2, -0.1, 0.4]).unwrap();
        let (g0, dx0) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g0.iter().chain(&dx0).all(|&v| v == 0.0));
        let (g1, dx1) = net.backward(&cache, &[0.3, -1.1]).unwrap();
        let (g2, dx2) = net.backward(&cache, &[0.6, -2.2]).unwrap();
        for (a, b) in g1.iter().chain(&dx1).zip(g2.iter().chain(&dx2)) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    /// Central finite differences of `L = dy . f(x)`.
    fn check_gradients(net: &Mlp, x: &[f64], dy: &[f64]) -> f64 {
        let h = 1e-5;
        let loss = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().0.iter().zip(dy).map(|(a, b)| a * b).sum() };
        let (_, cache) = net.forward(x).unwrap();
        let (grads, dx) = net.backward(&cache, dy).unwrap();
        let mut worst: f64 = 0.0;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let numeric = (loss(&plus, x) - loss(&minus, x)) / (2.0 * h);
            worst = worst.max(rel(grads[i], numeric));
        }
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let numeric = (loss(net, &xp) - loss(net, &xm)) / (2.0 * h);
            worst = worst.max(rel(dx[i], numeric));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..10 {
            let net = random_net(&[4, 6, 5, 3], &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.next_signed()).collect();
            let dy: Vec<f64> = (0..3).map(|_| rng.next_signed()).collect();
            let err = check_gradients(&net, &x, &dy);
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    #[test]
    fn gaussian_log_prob_examples() {
        let d = 4;
        let out = GaussianPolicyOut { mean: vec![0.3; d], std: vec![1.0; d] };
        let base = out.log_prob(&[0.3; 4]).unwrap();
        assert!((base + d as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        let shifted = out.log_prob(&[1.3, 0.3, 0.3, 0.3]).unwrap();
        assert!((shifted - (base - 0.5)).abs() < 1e-12);
        let bad = GaussianPolicyOut { mean: vec![0.0], std: vec![0.0] };
        assert!(bad.log_prob(&[0.0]).is_err());
        assert!(bad.entropy().is_err());
    }

    #[test]
    fn gaussian_matches_closed_form_density() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..20 {
            let mean: Vec<f64> = (0..3).map(|_| rng.next_signed()).collect();
            let std: Vec<f64> = (0..3).map(|_| 0.1 + rng.next_f64()).collect();
            let a: Vec<f64> = (0..3).map(|_| 2.0 * rng.next_signed()).collect();
            let out = GaussianPolicyOut { mean: mean.clone(), std: std.clone() };
            let density: f64 = (0..3)
                .map(|i| {
                    let z = (a[i] - mean[i]) / std[i];
                    (-0.5 * z * z).exp() / (std[i] * (2.0 * std::f64::consts::PI).sqrt())
                })
                .product();
            assert!((out.log_prob(&a).unwrap() - density.ln()).abs() < 1e-12);
            let entropy: f64 = std.iter().map(|s| (s * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt()).ln()).sum();
            assert!((out.entropy().unwrap() - entropy).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling() {
        let tiny = GaussianPolicyOut { mean: vec![0.25, -0.5], std: vec![(-20f64).exp(); 2] };
        let mut rng = SplitMix64::new(5);
        let a = tiny.sample(&mut rng);
        assert!((a[0] - 0.25).abs() < 1e-7 && (a[1] + 0.5).abs() < 1e-7);

        let out = GaussianPolicyOut { mean: vec![0.4], std: vec![0.7] };
        let (mut r1, mut r2) = (SplitMix64::new(6), SplitMix64::new(6));
        assert_eq!(out.sample(&mut r1), out.sample(&mut r2));

        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| out.sample(&mut r1)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = 0.7 / (n as f64).sqrt();
        let se_std = 0.7 / (2.0 * (n - 1) as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var.sqrt() - 0.7).abs() < 3.0 * se_std, "std {}", var.sqrt());
    }

    #[test]
    fn adam_examples() {
        let mut adam = AdamState::new(3, 3e-4);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);

        let mut adam = AdamState::new(3, 3e-4);
        let g = [12.0, -40.0, 0.25];
        let start = [1.0, -2.0, 0.5];
        let mut p = start.to_vec();
        adam.update(&mut p, &g).unwrap();
        for i in 0..3 {
            // first bias-corrected step: m_hat = g, v_hat = g^2
            let closed = start[i] - 3e-4 * g[i] / (g[i].abs() + 1e-5);
            assert!((p[i] - closed).abs() < 1e-15);
        }
        for i in 0..2 {
            assert!((p[i] - (start[i] - 3e-4 * g[i].signum())).abs() < 1e-9);
        }
        assert!(adam.update(&mut p[..2], &g[..2]).is_err());
    }

    #[test]
    fn adam_is_elementwise() {
        let mut joint = AdamState::new(2, 1e-2);
        let mut a = AdamState::new(1, 1e-2);
        let mut b = AdamState::new(1, 1e-2);
        let (mut pj, mut pa, mut pb) = (vec![0.3, -0.7], vec![0.3], vec![-0.7]);
        for k in 0..20 {
            let g = [(k as f64).sin(), (k as f64 * 0.7).cos()];
            joint.update(&mut pj, &g).unwrap();
            a.update(&mut pa, &g[..1]).unwrap();
            b.update(&mut pb, &g[1..]).unwrap();
        }
        assert_eq!(pj, vec![pa[0], pb[0]]);
    }

    #[test]
    fn init_properties() {
        let a = Mlp::init(42, 3, POLICY_OUTPUT_GAIN, 9).unwrap();
        let b = Mlp::init(42, 3, POLICY_OUTPUT_GAIN, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.has_standard_shape());
        for l in 0..3 {
            assert!(a.bias(l).iter().all(|&v| v == 0.0));
        }
        let fan_in = HIDDEN_WIDTH;
        let w = a.weights(2);
        for col in 0..fan_in {
            let norm: f64 = (0..3).map(|r| w[r * fan_in + col].powi(2)).sum::<f64>().sqrt();
            assert!(norm <= POLICY_OUTPUT_GAIN * (fan_in as f64).sqrt());
        }
        // 64 x 42 first layer: orthogonal columns of norm sqrt(2)
        let w0 = a.weights(0);
        for c1 in 0..42 {
            for c2 in 0..42 {
                let dot: f64 = (0..HIDDEN_WIDTH).map(|r| w0[r * 42 + c1] * w0[r * 42 + c2]).sum();
                let want = if c1 == c2 { 2.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        let policy = GaussianPolicy::init(84, 18, 1).unwrap();
        assert!(policy.log_std.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let net = Mlp::init(7, 2, 1.0, 3).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
        let x = [0.1, -0.3, 0.5, 0.2, 0.9, -1.0, 0.0];
        assert_eq!(net.forward(&x).unwrap().0, back.forward(&x).unwrap().0);
    }

    proptest! {
        #[test]
        fn forward_is_pure(seed in 0u64..1000) {
            let mut rng = SplitMix64::new(seed);
            let net = random_net(&[3, 7, 7, 2], &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.next_signed()).collect();
            prop_assert_eq!(net.forward(&x).unwrap().0, net.forward(&x).unwrap().0);
        }
    }
}
