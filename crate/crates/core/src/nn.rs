//! Minimal dense and convolutional layers with hand-written backward passes.
//!
//! Activations are stored row-major as `n × features` slices. Every layer
//! exposes its parameters through [`Params`] in a fixed order, so a model's
//! parameters (and gradients) can be handled as one flat vector.

use rand::Rng;

/// Visitor over named parameter tensors, in a stable order.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |_, d| {
            d.copy_from_slice(&flat[offset..offset + d.len()]);
            offset += d.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, d| ok &= d.iter().all(|v| v.is_finite()));
        ok
    }
}

fn uniform_fan_in<R: Rng>(rng: &mut R, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Fully connected layer `y = W x + b`, weight stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            name: name.to_string(),
            in_dim,
            out_dim,
            weight: uniform_fan_in(rng, in_dim, in_dim * out_dim),
            bias: uniform_fan_in(rng, in_dim, out_dim),
        }
    }

    pub fn zeroed(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.to_string(),
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.in_dim);
        let mut y = vec![0.0; n * self.out_dim];
        for (xr, yr) in x.chunks_exact(self.in_dim).zip(y.chunks_exact_mut(self.out_dim)) {
            for (o, yo) in yr.iter_mut().enumerate() {
                let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                *yo = self.bias[o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` (weight then bias) and,
    /// when requested, returns the gradient with respect to the input.
    pub fn backward(&self, x: &[f64], n: usize, gy: &[f64], grad: &mut [f64], want_gx: bool) -> Option<Vec<f64>> {
        let (gw, gb) = grad.split_at_mut(self.weight.len());
        let mut gx = want_gx.then(|| vec![0.0; n * self.in_dim]);
        for i in 0..n {
            let xr = &x[i * self.in_dim..(i + 1) * self.in_dim];
            let gyr = &gy[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, &g) in gyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                let row = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                for (gwj, xj) in row.iter_mut().zip(xr) {
                    *gwj += g * xj;
                }
                if let Some(gx) = gx.as_mut() {
                    let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                    let gxr = &mut gx[i * self.in_dim..(i + 1) * self.in_dim];
                    for (gxj, wj) in gxr.iter_mut().zip(w) {
                        *gxj += g * wj;
                    }
                }
            }
        }
        gx
    }
}

impl Params for Linear {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&format!("{}.weight", self.name), &[self.out_dim, self.in_dim], &self.weight);
        f(&format!("{}.bias", self.name), &[self.out_dim], &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        let w = format!("{}.weight", self.name);
        let b = format!("{}.bias", self.name);
        f(&w, &mut self.weight);
        f(&b, &mut self.bias);
    }
}

/// 3×3 convolution with stride 2 and zero padding 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_side: usize,
    /// `out_ch × in_ch × 3 × 3`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

const K: usize = 3;
const STRIDE: usize = 2;

impl Conv2d {
    pub fn new<R: Rng>(name: &str, in_ch: usize, out_ch: usize, in_side: usize, rng: &mut R) -> Self {
        let fan_in = in_ch * K * K;
        Self {
            name: name.to_string(),
            in_ch,
            out_ch,
            in_side,
            weight: uniform_fan_in(rng, fan_in, out_ch * fan_in),
            bias: uniform_fan_in(rng, fan_in, out_ch),
        }
    }

    pub fn out_side(&self) -> usize {
        (self.in_side - 1) / STRIDE + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_ch * self.in_side * self.in_side
    }

    pub fn out_len(&self) -> usize {
        let s = self.out_side();
        self.out_ch * s * s
    }

    /// Valid kernel taps for output coordinate `o`: (kernel index, input index).
    fn taps(&self, o: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..K).filter_map(move |k| {
            let i = (o * STRIDE + k) as isize - 1;
            (i >= 0 && (i as usize) < self.in_side).then_some((k, i as usize))
        })
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (is, os) = (self.in_side, self.out_side());
        let mut y = vec![0.0; n * self.out_len()];
        for (xs, ys) in x.chunks_exact(self.in_len()).zip(y.chunks_exact_mut(self.out_len())) {
            for o in 0..self.out_ch {
                let plane = &mut ys[o * os * os..(o + 1) * os * os];
                plane.fill(self.bias[o]);
                for c in 0..self.in_ch {
                    let w = &self.weight[(o * self.in_ch + c) * K * K..(o * self.in_ch + c + 1) * K * K];
                    let xin = &xs[c * is * is..(c + 1) * is * is];
                    for oy in 0..os {
                        for (ky, iy) in self.taps(oy) {
                            for ox in 0..os {
                                let mut acc = 0.0;
                                for (kx, ix) in self.taps(ox) {
                                    acc += w[ky * K + kx] * xin[iy * is + ix];
                                }
                                plane[oy * os + ox] += acc;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], n: usize, gy: &[f64], grad: &mut [f64], want_gx: bool) -> Option<Vec<f64>> {
        let (is, os) = (self.in_side, self.out_side());
        let (gw, gb) = grad.split_at_mut(self.weight.len());
        let mut gx = want_gx.then(|| vec![0.0; n * self.in_len()]);
        for s in 0..n {
            let xs = &x[s * self.in_len()..(s + 1) * self.in_len()];
            let gys = &gy[s * self.out_len()..(s + 1) * self.out_len()];
            for o in 0..self.out_ch {
                let gplane = &gys[o * os * os..(o + 1) * os * os];
                gb[o] += gplane.iter().sum::<f64>();
                for c in 0..self.in_ch {
                    let base = (o * self.in_ch + c) * K * K;
                    let xin = &xs[c * is * is..(c + 1) * is * is];
                    for oy in 0..os {
                        for (ky, iy) in self.taps(oy) {
                            for ox in 0..os {
                                let g = gplane[oy * os + ox];
                                if g == 0.0 {
                                    continue;
                                }
                                for (kx, ix) in self.taps(ox) {
                                    gw[base + ky * K + kx] += g * xin[iy * is + ix];
                                }
                            }
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let w = &self.weight[base..base + K * K];
                        let gxin = &mut gx[s * self.in_len() + c * is * is..s * self.in_len() + (c + 1) * is * is];
                        for oy in 0..os {
                            for (ky, iy) in self.taps(oy) {
                                for ox in 0..os {
                                    let g = gplane[oy * os + ox];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    for (kx, ix) in self.taps(ox) {
                                        gxin[iy * is + ix] += g * w[ky * K + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

impl Params for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&format!("{}.weight", self.name), &[self.out_ch, self.in_ch, K, K], &self.weight);
        f(&format!("{}.bias", self.name), &[self.out_ch], &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        let w = format!("{}.weight", self.name);
        let b = format!("{}.bias", self.name);
        f(&w, &mut self.weight);
        f(&b, &mut self.bias);
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Masks `g` in place by the ReLU derivative evaluated at the pre-activation.
pub fn relu_backward(pre: &[f64], g: &mut [f64]) {
    for (gi, &p) in g.iter_mut().zip(pre) {
        if p <= 0.0 {
            *gi = 0.0;
        }
    }
}

/// Multi-layer perceptron with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    n: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new<R: Rng>(prefix: &str, widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h, n);
            inputs.push(std::mem::take(&mut h));
            h = if i + 1 < self.layers.len() { relu(&z) } else { z.clone() };
            pre.push(z);
        }
        (h, MlpCache { n, inputs, pre })
    }

    /// Writes parameter gradients into `grad` (flat, in [`Params`] order).
    pub fn backward(&self, cache: &MlpCache, gy: &[f64], grad: &mut [f64], want_gx: bool) -> Option<Vec<f64>> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weight.len() + l.bias.len();
        }
        let mut g = gy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i + 1 < self.layers.len() {
                relu_backward(&cache.pre[i], &mut g);
            }
            let len = layer.weight.len() + layer.bias.len();
            let need_gx = i > 0 || want_gx;
            g = layer.backward(&cache.inputs[i], cache.n, &g, &mut grad[offsets[i]..offsets[i] + len], need_gx)?;
        }
        Some(g)
    }
}

impl Params for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}
