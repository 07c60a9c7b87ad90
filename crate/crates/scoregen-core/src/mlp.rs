//! A small ReLU perceptron trained by denoising score matching.
//!
//! The network sees `(y, t, σ_t, m_t)` and returns `g`; the score is
//! `clip(g) / σ_t` with `clip(g) = g min(1, c / |g|)` and
//! `c = c_clip sqrt(log n)`. Dividing by `σ_t` lets the raw output stay O(1)
//! while the score grows like `1/σ_t` near `t = 0`, and the clip enforces
//! `|score| <= c_clip sqrt(log n) / σ_t` everywhere.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::field::{Provenance, ScoreField};
use crate::math::{log, sqrt};
use crate::relu::{Layer, ReluNetwork, Sparse};
use crate::rng;
use crate::schedule::{mean_scale, noise_scale, DiffusionSchedule};
use serde::{Deserialize, Serialize};

/// Network input for state `y` at time `t`.
pub fn features(y: &[f64], t: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(y.len() + 3);
    v.extend_from_slice(y);
    v.push(t);
    v.push(noise_scale(t));
    v.push(mean_scale(t));
    v
}

/// Fully connected ReLU network with parameters in one flat vector:
/// per layer, the row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainableNet {
    d: usize,
    /// Layer sizes from input (`d + 3`) to output (`d`).
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Bound on `|g|`.
    clip: f64,
}

fn param_len(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl TrainableNet {
    /// He-initialized weights and zero biases; the output layer is scaled down
    /// so the initial score is small.
    pub fn new(d: usize, hidden: &[usize], clip: f64, seed: u64) -> Result<Self> {
        if d == 0 || hidden.contains(&0) {
            return Err(domain("layer sizes must be positive"));
        }
        if !(clip > 0.0) {
            return Err(domain(format!("clip bound must be positive, got {clip}")));
        }
        let mut sizes = vec![d + 3];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let mut params = Vec::with_capacity(param_len(&sizes));
        let mut rng = rng::stream(seed, 0);
        let layers = sizes.len() - 1;
        for (k, w) in sizes.windows(2).enumerate() {
            let gain = if k + 1 == layers { 0.1 } else { 1.0 };
            let std = gain * sqrt(2.0 / w[0] as f64);
            for _ in 0..w[0] * w[1] {
                params.push(std * rng::normal(&mut rng));
            }
            params.extend(core::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self { d, sizes, params, clip })
    }

    pub fn from_params(d: usize, sizes: Vec<usize>, params: Vec<f64>, clip: f64) -> Result<Self> {
        if sizes.len() < 2 || sizes[0] != d + 3 || *sizes.last().unwrap() != d {
            return Err(domain("layer sizes must run from d + 3 to d"));
        }
        if params.len() != param_len(&sizes) {
            return Err(Error::Dimension { expected: param_len(&sizes), found: params.len() });
        }
        Ok(Self { d, sizes, params, clip })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Raw output `g` for a feature vector, keeping every layer's activations.
    fn forward(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize(self.sizes.len(), Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(input);
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for k in 0..=last {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let (w, rest) = self.params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let (prev, next) = acts.split_at_mut(k + 1);
            let x = &prev[k];
            let out = &mut next[0];
            out.clear();
            for r in 0..n_out {
                let row = &w[r * n_in..(r + 1) * n_in];
                let mut z = b[r];
                for (a, v) in row.iter().zip(x) {
                    z += a * v;
                }
                out.push(if k < last && z < 0.0 { 0.0 } else { z });
            }
            off += n_out * (n_in + 1);
        }
    }

    /// `g` before clipping.
    pub fn raw(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward(input, &mut acts);
        acts.pop().unwrap_or_default()
    }

    /// The clipped score at `(y, t)`.
    pub fn score(&self, y: &[f64], t: f64) -> Vec<f64> {
        let g = self.raw(&features(y, t));
        let scale = clip_factor(&g, self.clip) / noise_scale(t);
        g.into_iter().map(|v| v * scale).collect()
    }

    /// The raw part `g` as a ReLU network on the `d + 3` features.
    pub fn to_relu_network(&self) -> ReluNetwork {
        let mut layers = Vec::new();
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for k in 0..=last {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let w = Sparse::from_dense(n_out, n_in, &self.params[off..off + n_in * n_out]);
            let b = self.params[off + n_in * n_out..off + n_out * (n_in + 1)].to_vec();
            layers.push(Layer::new(w, b, k < last));
            off += n_out * (n_in + 1);
        }
        ReluNetwork::new(self.sizes[0], layers).expect("layer sizes chain")
    }
}

fn clip_factor(g: &[f64], c: f64) -> f64 {
    let norm = crate::math::norm2(g);
    if norm > c {
        c / norm
    } else {
        1.0
    }
}

impl ScoreField for TrainableNet {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval_into(&self, y: &[f64], t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.score(y, t));
    }

    fn provenance(&self) -> Provenance {
        Provenance::Trained
    }
}

/// Importance weight for a log-uniform time draw on `[t0, T]`, making the
/// batch mean an estimate of the plain `dt` integral.
pub fn time_weight(t: f64, t0: f64, horizon: f64) -> f64 {
    t * log(horizon / t0)
}

/// A denoising batch: clean points, times, standard normal noise and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBatch {
    pub x0: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub noise: Vec<Vec<f64>>,
    pub weight: Vec<f64>,
}

impl DsmBatch {
    /// `size` draws: a sample index uniformly, `t` log-uniform on `[t0, T]`, Gaussian noise.
    pub fn draw(samples: &[Vec<f64>], size: usize, schedule: &DiffusionSchedule, rng: &mut rng::Rng) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("samples"));
        }
        let (t0, horizon) = (schedule.t0, schedule.horizon);
        let span = log(horizon / t0);
        let mut batch = DsmBatch { x0: Vec::new(), t: Vec::new(), noise: Vec::new(), weight: Vec::new() };
        for _ in 0..size {
            let x = samples[rng::index(rng, samples.len())].clone();
            let t = t0 * crate::math::exp(span * rng::uniform(rng));
            let z: Vec<f64> = (0..x.len()).map(|_| rng::normal(rng)).collect();
            batch.weight.push(time_weight(t, t0, horizon));
            batch.t.push(t);
            batch.noise.push(z);
            batch.x0.push(x);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Mean over the batch of `w |φ(x_t, t) + (x_t - m_t x0) / σ_t^2|^2`, `x_t = m_t x0 + σ_t z`.
pub fn dsm_loss(net: &TrainableNet, batch: &DsmBatch) -> Result<f64> {
    loss_and_gradient(net, batch, false).map(|r| r.0)
}

/// Loss and its exact gradient with respect to the flat parameters.
pub fn dsm_gradient(net: &TrainableNet, batch: &DsmBatch) -> Result<(f64, Vec<f64>)> {
    loss_and_gradient(net, batch, true)
}

/// The same loss for an arbitrary score, called as `score(k, x_t, t, out)` for batch entry `k`.
pub fn dsm_loss_with(batch: &DsmBatch, mut score: impl FnMut(usize, &[f64], f64, &mut [f64])) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let d = batch.x0[0].len();
    let (mut y, mut out) = (vec![0.0; d], vec![0.0; d]);
    let mut loss = 0.0;
    for k in 0..batch.len() {
        let t = batch.t[k];
        let (m, s) = (mean_scale(t), noise_scale(t));
        for j in 0..d {
            y[j] = m * batch.x0[k][j] + s * batch.noise[k][j];
        }
        score(k, &y, t, &mut out);
        let mut sq = 0.0;
        for j in 0..d {
            let r = out[j] + (y[j] - m * batch.x0[k][j]) / (s * s);
            sq += r * r;
        }
        loss += batch.weight[k] * sq;
    }
    let loss = loss / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite denoising loss {loss}")));
    }
    Ok(loss)
}

fn loss_and_gradient(net: &TrainableNet, batch: &DsmBatch, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let d = net.d;
    let mut grad = if want_grad { vec![0.0; net.params.len()] } else { Vec::new() };
    let mut acts = Vec::new();
    let mut loss = 0.0;
    let mut y = vec![0.0; d];
    let mut delta: Vec<f64> = Vec::new();
    let mut next_delta: Vec<f64> = Vec::new();
    let inv_b = 1.0 / batch.len() as f64;
    for k in 0..batch.len() {
        let (t, w) = (batch.t[k], batch.weight[k]);
        let (m, s) = (mean_scale(t), noise_scale(t));
        for j in 0..d {
            y[j] = m * batch.x0[k][j] + s * batch.noise[k][j];
        }
        net.forward(&features(&y, t), &mut acts);
        let g = acts.last().unwrap();
        let norm = crate::math::norm2(g);
        let clipped = norm > net.clip;
        let factor = if clipped { net.clip / norm } else { 1.0 };
        // Residual of the score against the conditional target -z / σ.
        let mut resid = vec![0.0; d];
        let mut sq = 0.0;
        for j in 0..d {
            resid[j] = g[j] * factor / s + batch.noise[k][j] / s;
            sq += resid[j] * resid[j];
        }
        loss += w * sq * inv_b;
        if !want_grad {
            continue;
        }
        // dL/dphi, then through the 1/σ scaling and the clip.
        let r: Vec<f64> = resid.iter().map(|v| 2.0 * w * inv_b * v / s).collect();
        delta.clear();
        if clipped {
            let dot: f64 = g.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
            delta.extend(r.iter().zip(g.iter()).map(|(rv, gv)| factor * (rv - gv * dot)));
        } else {
            delta.extend_from_slice(&r);
        }
        // Backward through the layers.
        let mut off_end = net.params.len();
        for layer in (0..net.sizes.len() - 1).rev() {
            let (n_in, n_out) = (net.sizes[layer], net.sizes[layer + 1]);
            let off = off_end - n_out * (n_in + 1);
            let x = &acts[layer];
            for r_i in 0..n_out {
                let dv = delta[r_i];
                if dv == 0.0 {
                    continue;
                }
                let row = &mut grad[off + r_i * n_in..off + (r_i + 1) * n_in];
                for (gw, xv) in row.iter_mut().zip(x) {
                    *gw += dv * xv;
                }
                grad[off + n_in * n_out + r_i] += dv;
            }
            if layer > 0 {
                next_delta.clear();
                next_delta.resize(n_in, 0.0);
                let w = &net.params[off..off + n_in * n_out];
                for r_i in 0..n_out {
                    let dv = delta[r_i];
                    if dv == 0.0 {
                        continue;
                    }
                    for (nd, wv) in next_delta.iter_mut().zip(&w[r_i * n_in..(r_i + 1) * n_in]) {
                        *nd += dv * wv;
                    }
                }
                // ReLU subgradient: zero where the unit was inactive.
                for (nd, a) in next_delta.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *nd = 0.0;
                    }
                }
                core::mem::swap(&mut delta, &mut next_delta);
            }
            off_end = off;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite denoising loss {loss}")));
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub step_size: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Size of the fixed batch used to track progress and pick the best parameters.
    pub eval_batch: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// The score is clipped to `c_clip sqrt(log n) / σ_t`.
    pub c_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            step_size: 1e-3,
            momentum: 0.9,
            iterations: 5000,
            batch_size: 32,
            eval_batch: 512,
            eval_every: 100,
            seed: 0,
            c_clip: 3.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(domain("step size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(domain("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 || self.eval_batch == 0 || self.eval_every == 0 {
            return Err(domain("batch sizes and the evaluation interval must be positive"));
        }
        if !(self.c_clip > 0.0) {
            return Err(domain("clip constant must be positive"));
        }
        Ok(())
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub batch_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest evaluation loss seen.
    pub net: TrainableNet,
    pub initial: TrainableNet,
    pub curve: Vec<CurvePoint>,
    pub best_step: usize,
}

/// Momentum gradient descent on the denoising loss over `samples`.
pub fn train_erm(samples: &[Vec<f64>], config: &TrainConfig, schedule: &DiffusionSchedule) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(domain("training needs at least two samples"));
    }
    let d = schedule.d;
    let clip = config.c_clip * sqrt(log(samples.len() as f64));
    let mut net = TrainableNet::new(d, &config.hidden, clip, config.seed)?;
    let initial = net.clone();
    let eval = DsmBatch::draw(samples, config.eval_batch, schedule, &mut rng::stream(config.seed, 1))?;
    let mut batches = rng::stream(config.seed, 2);
    let mut velocity = vec![0.0; net.params.len()];
    let first = dsm_loss(&net, &eval)?;
    let mut curve = vec![CurvePoint { step: 0, batch_loss: first, eval_loss: first }];
    let mut best = (first, 0usize, net.params.clone());
    for step in 1..=config.iterations {
        let batch = DsmBatch::draw(samples, config.batch_size, schedule, &mut batches)?;
        let (loss, grad) = dsm_gradient(&net, &batch)?;
        if loss > 1e10 {
            return Err(Error::Numeric(format!("training diverged at step {step}: loss {loss:e}")));
        }
        for ((p, v), g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = config.momentum * *v - config.step_size * g;
            *p += *v;
        }
        if step % config.eval_every == 0 || step == config.iterations {
            let e = dsm_loss(&net, &eval)?;
            if e > 1e10 {
                return Err(Error::Numeric(format!("training diverged at step {step}: evaluation loss {e:e}")));
            }
            curve.push(CurvePoint { step, batch_loss: loss, eval_loss: e });
            if e < best.0 {
                best = (e, step, net.params.clone());
            }
        }
    }
    net.params = best.2;
    Ok(TrainOutcome { net, initial, curve, best_step: best.1 })
}
