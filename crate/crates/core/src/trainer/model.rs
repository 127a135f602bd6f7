use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::TrainConfig;
use crate::confounds::LabeledImage;
use crate::dependence::{EmaBaseline, MineNet};
use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, Conv2d, Linear, Mlp, MlpCache, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Three stride-2 3×3 convolutions with ReLU, then a linear projection.
    Conv3,
    /// One ReLU hidden layer, then a linear projection.
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub side: usize,
    pub architecture: Architecture,
    pub channels: [usize; 3],
    pub hidden: usize,
    pub latent: usize,
    pub split: (usize, usize),
    /// Both heads read the whole latent (adversarial setup).
    pub shared: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            side: 16,
            architecture: Architecture::Conv3,
            channels: [8, 16, 32],
            hidden: 128,
            latent: 4,
            split: (2, 2),
            shared: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent < 2 {
            return Err(Error::InvalidInput(format!("latent dimension {} < 2", self.latent)));
        }
        if self.split.0 + self.split.1 != self.latent || self.split.0 == 0 || self.split.1 == 0 {
            return Err(Error::InvalidInput(format!("split {:?} does not partition {} dims", self.split, self.latent)));
        }
        if self.side < 4 {
            return Err(Error::InvalidInput(format!("image side {} < 4", self.side)));
        }
        Ok(())
    }

    /// Input widths of the two heads.
    pub fn head_dims(&self) -> (usize, usize) {
        if self.shared {
            (self.latent, self.latent)
        } else {
            self.split
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Conv3 { convs: Vec<Conv2d>, proj: Linear },
    Mlp(Mlp),
}

#[derive(Clone, Debug)]
pub enum EncoderCache {
    Conv {
        inputs: Vec<Vec<f64>>,
        pre: Vec<Vec<f64>>,
        flat: Vec<f64>,
    },
    Mlp(MlpCache),
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        match cfg.architecture {
            Architecture::Conv3 => {
                let mut convs = Vec::with_capacity(3);
                let (mut ch, mut side) = (1, cfg.side);
                for (i, &out) in cfg.channels.iter().enumerate() {
                    let c = Conv2d::new(&format!("encoder.conv{i}"), ch, out, side, rng);
                    side = c.out_side();
                    ch = out;
                    convs.push(c);
                }
                let proj = Linear::new("encoder.proj", ch * side * side, cfg.latent, rng);
                Encoder::Conv3 { convs, proj }
            }
            Architecture::Mlp => Encoder::Mlp(Mlp::new("encoder.mlp", &[cfg.side * cfg.side, cfg.hidden, cfg.latent], rng)),
        }
    }

    /// The final linear layer that produces the latent code.
    pub fn projection_mut(&mut self) -> &mut Linear {
        match self {
            Encoder::Conv3 { proj, .. } => proj,
            Encoder::Mlp(m) => m.layers.last_mut().expect("non-empty"),
        }
    }

    pub fn forward(&self, x: &[f64], n: usize) -> (Vec<f64>, EncoderCache) {
        match self {
            Encoder::Conv3 { convs, proj } => {
                let mut inputs = Vec::with_capacity(convs.len());
                let mut pre = Vec::with_capacity(convs.len());
                let mut h = x.to_vec();
                for c in convs {
                    let z = c.forward(&h, n);
                    inputs.push(std::mem::replace(&mut h, relu(&z)));
                    pre.push(z);
                }
                let out = proj.forward(&h, n);
                (out, EncoderCache::Conv { inputs, pre, flat: h })
            }
            Encoder::Mlp(m) => {
                let (out, cache) = m.forward(x, n);
                (out, EncoderCache::Mlp(cache))
            }
        }
    }

    /// Accumulates parameter gradients for upstream latent gradient `gz`.
    pub fn backward(&self, cache: &EncoderCache, n: usize, gz: &[f64], grad: &mut [f64]) {
        match (self, cache) {
            (Encoder::Conv3 { convs, proj }, EncoderCache::Conv { inputs, pre, flat }) => {
                let mut offsets = Vec::with_capacity(convs.len());
                let mut off = 0;
                for c in convs {
                    offsets.push(off);
                    off += c.num_params();
                }
                let proj_len = proj.num_params();
                let mut g = proj.backward(flat, n, gz, &mut grad[off..off + proj_len], true).expect("input grad");
                for i in (0..convs.len()).rev() {
                    relu_backward(&pre[i], &mut g);
                    let len = convs[i].num_params();
                    match convs[i].backward(&inputs[i], n, &g, &mut grad[offsets[i]..offsets[i] + len], i > 0) {
                        Some(gx) => g = gx,
                        None => break,
                    }
                }
            }
            (Encoder::Mlp(m), EncoderCache::Mlp(c)) => {
                m.backward(c, gz, grad, false);
            }
            _ => unreachable!("cache does not match encoder kind"),
        }
    }
}

impl Params for Encoder {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        match self {
            Encoder::Conv3 { convs, proj } => {
                convs.iter().for_each(|c| c.visit(f));
                proj.visit(f);
            }
            Encoder::Mlp(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        match self {
            Encoder::Conv3 { convs, proj } => {
                convs.iter_mut().for_each(|c| c.visit_mut(f));
                proj.visit_mut(f);
            }
            Encoder::Mlp(m) => m.visit_mut(f),
        }
    }
}

/// A batch of images as `f64` pixels with both labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub side: usize,
    pub pixels: Vec<f64>,
    pub y1: Vec<u8>,
    pub y2: Vec<u8>,
}

impl Batch {
    pub fn gather(images: &[LabeledImage], idx: &[usize]) -> Self {
        let side = idx.first().map_or(0, |&i| images[i].side);
        let mut pixels = Vec::with_capacity(idx.len() * side * side);
        for &i in idx {
            pixels.extend(images[i].pixels.iter().map(|&p| p as f64));
        }
        Self {
            n: idx.len(),
            side,
            pixels,
            y1: idx.iter().map(|&i| images[i].y1).collect(),
            y2: idx.iter().map(|&i| images[i].y2).collect(),
        }
    }

    pub fn from_images(images: &[LabeledImage]) -> Self {
        Self::gather(images, &(0..images.len()).collect::<Vec<_>>())
    }
}

/// Encoder, two linear heads, the optional MINE statistic network and all
/// optimizer state. The flat parameter order is encoder, head 1, head 2.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub config: EncoderConfig,
    pub encoder: Encoder,
    pub head1: Linear,
    pub head2: Linear,
    pub mine: Option<MineNet>,
    pub optimizer: AdamW,
    pub mine_optimizer: Option<AdamW>,
    pub mine_ema: Option<EmaBaseline>,
    pub seed: u64,
    pub epoch: usize,
    pub encoder_updates: usize,
    pub estimator_updates: usize,
}

/// Activations of one forward pass through encoder and heads.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub n: usize,
    /// `n × latent`
    pub z: Vec<f64>,
    pub cache: EncoderCache,
    pub head1_in: Vec<f64>,
    pub head2_in: Vec<f64>,
    pub logits1: Vec<f64>,
    pub logits2: Vec<f64>,
}

impl ModelState {
    pub fn new(config: EncoderConfig, train: &TrainConfig) -> Result<Self> {
        config.validate()?;
        train.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
        let encoder = Encoder::new(&config, &mut rng);
        let (d1, d2) = config.head_dims();
        let head1 = Linear::new("head1", d1, 2, &mut rng);
        let head2 = Linear::new("head2", d2, 2, &mut rng);
        let mine = train.method.objective.uses_mine().then(|| MineNet::new(config.split.0, config.split.1, train.mine_hidden, &mut rng));
        let mut state = Self {
            config,
            encoder,
            head1,
            head2,
            mine_optimizer: mine.as_ref().map(|m| AdamW::new(m.num_params(), train.lr, 0.0)),
            mine,
            optimizer: AdamW::new(0, train.lr, train.weight_decay),
            mine_ema: train.mine_ema.then(EmaBaseline::default),
            seed: train.seed,
            epoch: 0,
            encoder_updates: 0,
            estimator_updates: 0,
        };
        state.optimizer = AdamW::new(state.num_params(), train.lr, train.weight_decay);
        Ok(state)
    }

    fn split_columns(&self, z: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let l = self.config.latent;
        if self.config.shared {
            return (z.to_vec(), z.to_vec());
        }
        let d1 = self.config.split.0;
        let mut a = Vec::with_capacity(n * d1);
        let mut b = Vec::with_capacity(n * (l - d1));
        for row in z.chunks_exact(l) {
            a.extend_from_slice(&row[..d1]);
            b.extend_from_slice(&row[d1..]);
        }
        (a, b)
    }

    pub fn forward(&self, batch: &Batch) -> Result<ForwardPass> {
        if batch.side != self.config.side || batch.pixels.len() != batch.n * self.config.side * self.config.side {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {0}x{0} images, batch has side {1}",
                self.config.side, batch.side
            )));
        }
        let n = batch.n;
        let (z, cache) = self.encoder.forward(&batch.pixels, n);
        let (head1_in, head2_in) = self.split_columns(&z, n);
        let logits1 = self.head1.forward(&head1_in, n);
        let logits2 = self.head2.forward(&head2_in, n);
        Ok(ForwardPass {
            n,
            z,
            cache,
            head1_in,
            head2_in,
            logits1,
            logits2,
        })
    }

    /// Backward pass through heads and encoder.
    ///
    /// `head2_to_encoder` scales the head-2 input gradient before it joins
    /// the encoder gradient (1 for ordinary training, `-λ` behind a gradient
    /// reversal layer). `extra_gz` is an additional `n × latent` gradient on
    /// the latent code, e.g. from a dependence penalty.
    pub fn backward(&self, fp: &ForwardPass, g_logits1: &[f64], g_logits2: &[f64], head2_to_encoder: f64, extra_gz: Option<&[f64]>) -> Vec<f64> {
        let n = fp.n;
        let l = self.config.latent;
        let enc_len = self.encoder.num_params();
        let h1_len = self.head1.num_params();
        let mut grad = vec![0.0; self.num_params()];
        let (genc, gheads) = grad.split_at_mut(enc_len);
        let (gh1, gh2) = gheads.split_at_mut(h1_len);
        let gin1 = self.head1.backward(&fp.head1_in, n, g_logits1, gh1, true).expect("input grad");
        let gin2 = self.head2.backward(&fp.head2_in, n, g_logits2, gh2, true).expect("input grad");

        let mut gz = match extra_gz {
            Some(g) => g.to_vec(),
            None => vec![0.0; n * l],
        };
        if self.config.shared {
            for i in 0..n * l {
                gz[i] += gin1[i] + head2_to_encoder * gin2[i];
            }
        } else {
            let (d1, d2) = self.config.split;
            for i in 0..n {
                for c in 0..d1 {
                    gz[i * l + c] += gin1[i * d1 + c];
                }
                for c in 0..d2 {
                    gz[i * l + d1 + c] += head2_to_encoder * gin2[i * d2 + c];
                }
            }
        }
        self.encoder.backward(&fp.cache, n, &gz, genc);
        grad
    }

    /// Latent codes, `n × latent`, computed in chunks.
    pub fn embed(&self, images: &[LabeledImage]) -> Result<ndarray::Array2<f64>> {
        let l = self.config.latent;
        let mut out = Vec::with_capacity(images.len() * l);
        for chunk in images.chunks(256) {
            let b = Batch::from_images(chunk);
            out.extend(self.encoder.forward(&b.pixels, b.n).0);
        }
        ndarray::Array2::from_shape_vec((images.len(), l), out).map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    /// Per-sample `(score1, score2)`: logit of class 1 minus logit of class 0
    /// for each head.
    pub fn scores(&self, images: &[LabeledImage]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s1 = Vec::with_capacity(images.len());
        let mut s2 = Vec::with_capacity(images.len());
        for chunk in images.chunks(256) {
            let fp = self.forward(&Batch::from_images(chunk))?;
            s1.extend(fp.logits1.chunks_exact(2).map(|r| r[1] - r[0]));
            s2.extend(fp.logits2.chunks_exact(2).map(|r| r[1] - r[0]));
        }
        Ok((s1, s2))
    }

    pub fn mine_net(&self) -> Option<&MineNet> {
        self.mine.as_ref()
    }
}

impl Params for ModelState {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.encoder.visit(f);
        self.head1.visit(f);
        self.head2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(f);
        self.head1.visit_mut(f);
        self.head2.visit_mut(f);
    }
}
