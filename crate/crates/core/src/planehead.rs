//! Per-pixel plane decoder: `p = W₂ tanh(W₁ f + b₁) + b₂`, and Adam.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, shape, Result};
use crate::geom::VectorMap;

/// Pixels per block of the parameter-gradient reduction. Blocks are summed in
/// order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 256;

/// Parameters are stored flat: `W₁` (`hidden × in`, row-major), `b₁`, `W₂`
/// (`3 × hidden`, row-major), `b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneHead {
    pub in_channels: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Reverse-mode result of [`PlaneHead::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub params: Vec<f64>,
    pub features: VectorMap,
}

impl PlaneHead {
    pub fn param_count(in_channels: usize, hidden: usize) -> usize {
        in_channels * hidden + hidden + hidden * 3 + 3
    }

    pub fn zeros(in_channels: usize, hidden: usize) -> Self {
        Self { in_channels, hidden, params: vec![0.0; Self::param_count(in_channels, hidden)] }
    }

    pub fn from_params(in_channels: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if in_channels == 0 || hidden == 0 {
            return Err(invalid("head needs at least one input channel and one hidden unit"));
        }
        if params.len() != Self::param_count(in_channels, hidden) {
            return Err(shape(format!(
                "head {in_channels}->{hidden}->3 needs {} parameters, got {}",
                Self::param_count(in_channels, hidden),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("head parameters must be finite"));
        }
        Ok(Self { in_channels, hidden, params })
    }

    /// Gaussian weights scaled by fan-in; zero hidden bias; output bias `(0, 0, 1)`
    /// so the initial planes are fronto-parallel and non-degenerate.
    pub fn random(in_channels: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = Self::zeros(in_channels, hidden);
        let n1 = Normal::new(0.0, 1.0 / (in_channels as f64).sqrt()).expect("positive sigma");
        let n2 = Normal::new(0.0, 0.1 / (hidden as f64).sqrt()).expect("positive sigma");
        let (w1, _, w2, b2) = head.split_mut();
        w1.iter_mut().for_each(|w| *w = n1.sample(&mut rng));
        w2.iter_mut().for_each(|w| *w = n2.sample(&mut rng));
        b2.copy_from_slice(&[0.0, 0.0, 1.0]);
        head
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = self.hidden * self.in_channels;
        [w1, w1 + self.hidden, w1 + self.hidden + 3 * self.hidden, self.params.len()]
    }

    pub fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [a, b, c, _] = self.offsets();
        let (w1, rest) = self.params.split_at(a);
        let (b1, rest) = rest.split_at(b - a);
        let (w2, b2) = rest.split_at(c - b);
        (w1, b1, w2, b2)
    }

    pub fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let [a, b, c, _] = self.offsets();
        let (w1, rest) = self.params.split_at_mut(a);
        let (b1, rest) = rest.split_at_mut(b - a);
        let (w2, b2) = rest.split_at_mut(c - b);
        (w1, b1, w2, b2)
    }

    fn check(&self, features: &VectorMap) -> Result<()> {
        if features.channels != self.in_channels {
            return Err(invalid(format!(
                "head expects {} feature channels, got {}",
                self.in_channels, features.channels
            )));
        }
        Ok(())
    }

    #[inline]
    fn hidden_of(&self, x: &[f64], h: &mut [f64]) {
        let (w1, b1, _, _) = self.split();
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &w1[j * self.in_channels..(j + 1) * self.in_channels];
            *hj = (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j]).tanh();
        }
    }

    #[inline]
    fn output_of(&self, h: &[f64], out: &mut [f64]) {
        let (_, _, w2, b2) = self.split();
        for k in 0..3 {
            out[k] = w2[k * self.hidden..(k + 1) * self.hidden].iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + b2[k];
        }
    }

    /// Decodes every pixel independently.
    pub fn forward(&self, features: &VectorMap) -> Result<VectorMap> {
        self.check(features)?;
        let mut out = VectorMap::zeros(features.height, features.width, 3);
        out.data.par_chunks_mut(3).enumerate().for_each(|(i, px)| {
            let mut h = vec![0.0; self.hidden];
            self.hidden_of(features.pixel(i), &mut h);
            self.output_of(&h, px);
        });
        Ok(out)
    }

    /// Gradients of `Σ_i upstream_i · forward(features)_i` w.r.t. parameters and features.
    pub fn backward(&self, features: &VectorMap, upstream: &VectorMap) -> Result<HeadGrads> {
        self.check(features)?;
        if upstream.channels != 3 || upstream.pixel_count() != features.pixel_count() {
            return Err(shape("upstream gradient must be a 3-channel map matching the features"));
        }
        let (c, hd) = (self.in_channels, self.hidden);
        let (w1, _, w2, _) = self.split();
        let [o1, o2, o3, _] = self.offsets();
        let n_px = features.pixel_count();
        let mut d_features = VectorMap::zeros(features.height, features.width, c);

        let partials: Vec<Vec<f64>> = d_features
            .data
            .par_chunks_mut(GRAD_CHUNK * c)
            .enumerate()
            .map(|(chunk, dfeat)| {
                let mut g = vec![0.0; self.params.len()];
                let mut h = vec![0.0; hd];
                let mut dz = vec![0.0; hd];
                let start = chunk * GRAD_CHUNK;
                for i in start..(start + GRAD_CHUNK).min(n_px) {
                    let up = upstream.pixel(i);
                    if up.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let x = features.pixel(i);
                    self.hidden_of(x, &mut h);
                    for k in 0..3 {
                        g[o3 + k] += up[k];
                        for j in 0..hd {
                            g[o2 + k * hd + j] += up[k] * h[j];
                        }
                    }
                    for j in 0..hd {
                        let dh = (0..3).map(|k| up[k] * w2[k * hd + j]).sum::<f64>();
                        dz[j] = dh * (1.0 - h[j] * h[j]);
                        g[o1 + j] += dz[j];
                        for (a, xa) in x.iter().enumerate() {
                            g[j * c + a] += dz[j] * xa;
                        }
                    }
                    let df = &mut dfeat[(i - start) * c..(i - start + 1) * c];
                    for (a, d) in df.iter_mut().enumerate() {
                        *d = (0..hd).map(|j| dz[j] * w1[j * c + a]).sum();
                    }
                }
                g
            })
            .collect();

        let mut params = vec![0.0; self.params.len()];
        for part in partials {
            params.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        Ok(HeadGrads { params, features: d_features })
    }

    /// Checkpoint layout as a `(hidden + 1) × (in + 4)` single-channel map:
    /// row `j < hidden` is `W₁[j, :] | b₁[j] | W₂[:, j]`; the last row starts with `b₂`.
    pub fn to_map(&self) -> VectorMap {
        let (c, hd) = (self.in_channels, self.hidden);
        let (w1, b1, w2, b2) = self.split();
        let width = c + 4;
        let mut data = vec![0.0; (hd + 1) * width];
        for j in 0..hd {
            let row = &mut data[j * width..(j + 1) * width];
            row[..c].copy_from_slice(&w1[j * c..(j + 1) * c]);
            row[c] = b1[j];
            for k in 0..3 {
                row[c + 1 + k] = w2[k * hd + j];
            }
        }
        data[hd * width..hd * width + 3].copy_from_slice(b2);
        VectorMap { height: hd + 1, width, channels: 1, data }
    }

    pub fn from_map(map: &VectorMap) -> Result<Self> {
        if map.channels != 1 || map.height < 2 || map.width < 5 {
            return Err(shape(format!("{}x{}x{} is not a head checkpoint", map.height, map.width, map.channels)));
        }
        let (c, hd) = (map.width - 4, map.height - 1);
        let mut head = Self::zeros(c, hd);
        let width = map.width;
        let (w1, b1, w2, b2) = head.split_mut();
        for j in 0..hd {
            let row = &map.data[j * width..(j + 1) * width];
            w1[j * c..(j + 1) * c].copy_from_slice(&row[..c]);
            b1[j] = row[c];
            for k in 0..3 {
                w2[k * hd + j] = row[c + 1 + k];
            }
        }
        b2.copy_from_slice(&map.data[hd * width..hd * width + 3]);
        Self::from_params(c, hd, head.params)
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(shape(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
