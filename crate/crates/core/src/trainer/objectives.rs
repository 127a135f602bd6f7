use log::debug;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::cross_entropy_with_grad;
use super::model::{Batch, EncoderConfig, ForwardPass, ModelState};
use super::{Objective, TrainConfig};
use crate::confounds::LabeledImage;
use crate::dependence::{dcor_with_grad, mine_bound_with_grad, mmd_with_grad, Batch2D, KernelSpec, Measure, MmdOptions};
use crate::error::{Error, Result};
use crate::nn::Params;

/// Splits an `N × L` latent into its two task subspaces. In shared mode
/// both outputs are the full latent.
pub fn split_latent(z: &Batch2D, cfg: &EncoderConfig) -> (Batch2D, Batch2D) {
    if cfg.shared {
        return (z.clone(), z.clone());
    }
    let d1 = cfg.split.0;
    let a = z.as_array();
    let z1 = Batch2D::new(a.slice(ndarray::s![.., ..d1]).to_owned()).expect("finite");
    let z2 = Batch2D::new(a.slice(ndarray::s![.., d1..]).to_owned()).expect("finite");
    (z1, z2)
}

/// Gradient reversal layer, forward direction: identity.
pub fn grl_forward(v: &[f64]) -> Vec<f64> {
    v.to_vec()
}

/// Gradient reversal layer, backward direction: negation.
pub fn grl_backward(g: &[f64]) -> Vec<f64> {
    g.iter().map(|x| -x).collect()
}

/// Estimator settings needed to evaluate a dependence penalty on a batch.
#[derive(Clone, Debug, Default)]
pub struct PenaltyContext {
    /// Row permutation forming MINE's marginal samples.
    pub perm: Option<Vec<usize>>,
    pub kernel: KernelSpec,
    pub mmd: MmdOptions,
}

impl PenaltyContext {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            perm: None,
            kernel: cfg.kernel.clone(),
            mmd: MmdOptions {
                cross_unbiased: cfg.mmd_cross_unbiased,
            },
        }
    }

    pub fn with_random_perm<R: Rng>(mut self, n: usize, rng: &mut R) -> Self {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        self.perm = Some(p);
        self
    }

    fn perm_for(&self, n: usize) -> Vec<usize> {
        match &self.perm {
            Some(p) => p.clone(),
            None => (0..n).rev().collect(),
        }
    }
}

/// Value and gradients of one objective on one batch.
#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    /// The scalar the encoder minimises (for the adversarial objective,
    /// `CE₁ − λ·CE₂`).
    pub value: f64,
    pub ce1: f64,
    pub ce2: f64,
    /// `½(CE₁ + CE₂)`.
    pub classification: f64,
    pub dependence: Option<f64>,
    /// The dependence penalty was skipped for a degenerate batch.
    pub skipped: bool,
    /// Flat gradient over encoder and heads.
    pub grad: Vec<f64>,
    /// Gradient of the MINE bound with respect to the statistic network.
    pub mine_grad: Option<Vec<f64>>,
}

fn subspaces(state: &ModelState, fp: &ForwardPass) -> Result<(Batch2D, Batch2D)> {
    let z = Batch2D::from_rows(fp.n, state.config.latent, fp.z.clone()).map_err(|_| Error::NumericalError("non-finite latent code".into()))?;
    Ok(split_latent(&z, &state.config))
}

struct Penalty {
    value: f64,
    z1: Array2<f64>,
    z2: Array2<f64>,
    mine: Option<Vec<f64>>,
}

/// Dependence value and gradients; `None` when dcor reports a degenerate batch.
fn penalty(state: &ModelState, fp: &ForwardPass, measure: Measure, ctx: &PenaltyContext) -> Result<Option<Penalty>> {
    if state.config.shared {
        return Err(Error::InvalidInput("dependence penalties need split latents".into()));
    }
    let (z1, z2) = subspaces(state, fp)?;
    match measure {
        Measure::Dcor => match dcor_with_grad(&z1, &z2) {
            Ok((value, g)) => Ok(Some(Penalty {
                value,
                z1: g.z1,
                z2: g.z2,
                mine: None,
            })),
            Err(Error::DegenerateInput(msg)) => {
                debug!("skipping dcor penalty: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        },
        Measure::Mmd => {
            let (value, g) = mmd_with_grad(&z1, &z2, &ctx.kernel, ctx.mmd)?;
            Ok(Some(Penalty {
                value,
                z1: g.z1,
                z2: g.z2,
                mine: None,
            }))
        }
        Measure::Mine => {
            let t = state.mine.as_ref().ok_or_else(|| Error::InvalidInput("model has no MINE network".into()))?;
            let (value, g) = mine_bound_with_grad(t, &z1, &z2, &ctx.perm_for(fp.n), None)?;
            Ok(Some(Penalty {
                value,
                z1: g.latents.z1,
                z2: g.latents.z2,
                mine: Some(g.params),
            }))
        }
    }
}

/// Places subspace gradients back into `n × L` latent layout, scaled.
fn scatter(state: &ModelState, g1: &Array2<f64>, g2: &Array2<f64>, scale: f64) -> Vec<f64> {
    let l = state.config.latent;
    let d1 = state.config.split.0;
    let n = g1.nrows();
    let mut gz = vec![0.0; n * l];
    for i in 0..n {
        for c in 0..d1 {
            gz[i * l + c] = scale * g1[[i, c]];
        }
        for c in 0..g2.ncols() {
            gz[i * l + d1 + c] = scale * g2[[i, c]];
        }
    }
    gz
}

/// Value and full parameter gradient of `objective` on `batch`.
///
/// For the adversarial objective, head 1 and the encoder receive the
/// gradient of `CE₁ − λ·CE₂` (the `CE₂` part reaching the encoder through
/// the reversal layer), while head 2 receives the plain gradient of `CE₂`.
pub fn objective_with_grad(state: &ModelState, batch: &Batch, objective: Objective, lambda: f64, ctx: &PenaltyContext) -> Result<ObjectiveEval> {
    let fp = state.forward(batch)?;
    let (ce1, g1) = cross_entropy_with_grad(&fp.logits1, &batch.y1);
    let (ce2, g2) = cross_entropy_with_grad(&fp.logits2, &batch.y2);
    let classification = 0.5 * (ce1 + ce2);
    let half = |g: Vec<f64>| g.into_iter().map(|v| 0.5 * v).collect::<Vec<_>>();

    match objective {
        Objective::Erm => Ok(ObjectiveEval {
            value: classification,
            ce1,
            ce2,
            classification,
            dependence: None,
            skipped: false,
            grad: state.backward(&fp, &half(g1), &half(g2), 1.0, None),
            mine_grad: None,
        }),
        Objective::AdvCl => {
            if !state.config.shared {
                return Err(Error::InvalidInput("adversarial training needs a shared latent".into()));
            }
            let grad = state.backward(&fp, &g1, &g2, -lambda, None);
            Ok(ObjectiveEval {
                value: ce1 - lambda * ce2,
                ce1,
                ce2,
                classification,
                dependence: None,
                skipped: false,
                grad,
                mine_grad: None,
            })
        }
        Objective::Dcor | Objective::Mmd | Objective::Mine => {
            let measure = objective.measure().expect("dependence objective");
            let pen = penalty(state, &fp, measure, ctx)?;
            let extra = match &pen {
                Some(p) if lambda != 0.0 => Some(scatter(state, &p.z1, &p.z2, lambda)),
                _ => None,
            };
            let grad = state.backward(&fp, &half(g1), &half(g2), 1.0, extra.as_deref());
            let dep = pen.as_ref().map(|p| p.value);
            Ok(ObjectiveEval {
                value: classification + lambda * dep.unwrap_or(0.0),
                ce1,
                ce2,
                classification,
                dependence: dep,
                skipped: pen.is_none(),
                grad,
                mine_grad: pen.and_then(|p| p.mine),
            })
        }
    }
}

/// The scalar whose gradient [`objective_with_grad`] returns for the
/// encoder parameters.
pub fn objective_value(state: &ModelState, batch: &Batch, objective: Objective, lambda: f64, ctx: &PenaltyContext) -> Result<f64> {
    let fp = state.forward(batch)?;
    let ce1 = super::cross_entropy(&fp.logits1, &batch.y1);
    let ce2 = super::cross_entropy(&fp.logits2, &batch.y2);
    match objective {
        Objective::Erm => Ok(0.5 * (ce1 + ce2)),
        Objective::AdvCl => Ok(ce1 - lambda * ce2),
        other => {
            let dep = penalty(state, &fp, other.measure().expect("dependence objective"), ctx)?.map_or(0.0, |p| p.value);
            Ok(0.5 * (ce1 + ce2) + lambda * dep)
        }
    }
}

/// `½(CE₁ + CE₂)` on one batch.
pub fn classification_loss(state: &ModelState, batch: &Batch) -> Result<f64> {
    let fp = state.forward(batch)?;
    Ok(0.5 * (super::cross_entropy(&fp.logits1, &batch.y1) + super::cross_entropy(&fp.logits2, &batch.y2)))
}

/// Classification loss plus `λ` times the dependence measure; a degenerate
/// dcor batch contributes no penalty.
pub fn disent_loss(state: &ModelState, batch: &Batch, measure: Measure, lambda: f64, ctx: &PenaltyContext) -> Result<f64> {
    let objective = match measure {
        Measure::Dcor => Objective::Dcor,
        Measure::Mmd => Objective::Mmd,
        Measure::Mine => Objective::Mine,
    };
    objective_value(state, batch, objective, lambda, ctx)
}

/// Sample-weighted classification loss over a whole dataset.
pub(crate) fn dataset_loss(state: &ModelState, images: &[LabeledImage]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in images.chunks(256) {
        total += chunk.len() as f64 * classification_loss(state, &Batch::from_images(chunk))?;
    }
    Ok(total / images.len() as f64)
}

fn ascend_mine(state: &mut ModelState, grad: &[f64]) {
    let mine = state.mine.as_mut().expect("mine network");
    let opt = state.mine_optimizer.as_mut().expect("mine optimizer");
    let mut p = mine.to_flat();
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    opt.step(&mut p, &neg);
    mine.load_flat(&p);
}

/// MINE parameter gradient at the current encoder, honouring the optional
/// moving-average correction.
fn mine_param_grad(state: &mut ModelState, batch: &Batch, ctx: &PenaltyContext) -> Result<(f64, Vec<f64>)> {
    let (z, _) = state.encoder.forward(&batch.pixels, batch.n);
    let z = Batch2D::from_rows(batch.n, state.config.latent, z).map_err(|_| Error::NumericalError("non-finite latent code".into()))?;
    let (z1, z2) = split_latent(&z, &state.config);
    let t = state.mine.as_ref().ok_or_else(|| Error::InvalidInput("model has no MINE network".into()))?;
    let (value, g) = mine_bound_with_grad(t, &z1, &z2, &ctx.perm_for(batch.n), state.mine_ema.as_mut())?;
    Ok((value, g.params))
}

/// One optimizer update of encoder and heads for the configured method.
/// For MINE the statistic network also ascends the bound on the same batch.
pub fn train_step(state: &mut ModelState, batch: &Batch, cfg: &TrainConfig, ctx: &PenaltyContext) -> Result<ObjectiveEval> {
    let objective = cfg.method.objective;
    let eval = objective_with_grad(state, batch, objective, cfg.lambda, ctx)?;
    if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalError(format!("non-finite training objective {}", eval.value)));
    }
    let mine_grad = match (&eval.mine_grad, state.mine_ema.is_some()) {
        (Some(_), true) => Some(mine_param_grad(state, batch, ctx)?.1),
        (g, _) => g.clone(),
    };
    let mut params = state.to_flat();
    state.optimizer.step(&mut params, &eval.grad);
    state.load_flat(&params);
    if let Some(g) = mine_grad {
        ascend_mine(state, &g);
    }
    state.encoder_updates += 1;
    Ok(eval)
}

/// One adversarial update (shared latent, gradient reversal on head 2's
/// path into the encoder).
pub fn adversarial_step(state: &mut ModelState, batch: &Batch, lambda: f64) -> Result<ObjectiveEval> {
    let cfg = TrainConfig {
        method: super::Method::new(Objective::AdvCl, false),
        lambda,
        ..Default::default()
    };
    train_step(state, batch, &cfg, &PenaltyContext::default())
}

/// Updates only the MINE statistic network (ascending the bound); encoder
/// and heads are untouched. Returns the bound before the update.
pub fn estimator_step(state: &mut ModelState, batch: &Batch, ctx: &PenaltyContext) -> Result<f64> {
    let (value, grad) = mine_param_grad(state, batch, ctx)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalError("non-finite MINE gradient".into()));
    }
    ascend_mine(state, &grad);
    state.estimator_updates += 1;
    Ok(value)
}

fn ce2_value(state: &ModelState, batch: &Batch) -> Result<f64> {
    let fp = state.forward(batch)?;
    Ok(super::cross_entropy(&fp.logits2, &batch.y2))
}

/// Largest relative error between the analytic parameter gradient of
/// `objective` and central finite differences with step `h`, over every
/// encoder and head parameter. For the adversarial objective the head-2
/// parameters are checked against `CE₂` (the adversary's own loss).
pub fn gradient_check(state: &ModelState, batch: &Batch, objective: Objective, lambda: f64, ctx: &PenaltyContext, h: f64) -> Result<f64> {
    let analytic = objective_with_grad(state, batch, objective, lambda, ctx)?.grad;
    let head2_start = state.num_params() - state.head2.num_params();
    let mut probe = state.clone();
    let base = state.to_flat();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut p = base.clone();
            p[i] += delta;
            probe.load_flat(&p);
            if objective == Objective::AdvCl && i >= head2_start {
                ce2_value(&probe, batch)
            } else {
                objective_value(&probe, batch, objective, lambda, ctx)
            }
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-4));
    }
    Ok(worst)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::Linear;
    use crate::trainer::{cross_entropy, Architecture, Method};
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn micro(arch: Architecture, objective: Objective, seed: u64) -> (ModelState, Batch, TrainConfig) {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::for_method(Method::new(objective, false))
        };
        let enc = cfg.encoder_for(&EncoderConfig {
            side: 8,
            architecture: arch,
            channels: [2, 4, 4],
            hidden: 16,
            ..EncoderConfig::default()
        });
        let state = ModelState::new(enc, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let n = 3;
        let batch = Batch {
            n,
            side: 8,
            pixels: (0..n * 64).map(|_| rng.gen_range(0.0..1.0)).collect(),
            y1: vec![0, 1, 1],
            y2: vec![1, 0, 1],
        };
        (state, batch, cfg)
    }

    fn objectives() -> [Objective; 5] {
        [Objective::Erm, Objective::Dcor, Objective::Mmd, Objective::Mine, Objective::AdvCl]
    }

    #[test]
    fn micro_model_is_small() {
        for arch in [Architecture::Conv3, Architecture::Mlp] {
            let (s, _, _) = micro(arch, Objective::Erm, 0);
            assert!(s.num_params() <= 2000, "{}", s.num_params());
        }
    }

    #[test]
    fn every_objective_matches_finite_differences() {
        for arch in [Architecture::Conv3, Architecture::Mlp] {
            for obj in objectives() {
                for seed in 0..4 {
                    let (state, batch, cfg) = micro(arch, obj, seed);
                    let ctx = PenaltyContext::from_config(&cfg).with_random_perm(batch.n, &mut ChaCha8Rng::seed_from_u64(seed));
                    let lambda = if obj == Objective::Erm { 0.0 } else { 0.7 };
                    let err = gradient_check(&state, &batch, obj, lambda, &ctx, 1e-4).unwrap();
                    assert!(err < 1e-3, "{arch:?} {obj:?} seed {seed}: {err}");
                }
            }
        }
    }

    #[test]
    fn split_latent_examples() {
        let z = Batch2D::from_rows(2, 4, (0..8).map(f64::from).collect()).unwrap();
        let cfg = EncoderConfig::default();
        let (a, b) = split_latent(&z, &cfg);
        assert_eq!(a.as_array().as_slice().unwrap(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(b.as_array().as_slice().unwrap(), &[2.0, 3.0, 6.0, 7.0]);
        let (a, b) = split_latent(&z, &EncoderConfig { shared: true, ..cfg });
        assert_eq!((&a, &b), (&z, &z));
    }

    proptest! {
        #[test]
        fn split_latent_partitions_columns(d1 in 1usize..5, d2 in 1usize..5, n in 1usize..4) {
            let l = d1 + d2;
            let z = Batch2D::from_rows(n, l, (0..n * l).map(|v| v as f64).collect()).unwrap();
            let cfg = EncoderConfig { latent: l, split: (d1, d2), ..EncoderConfig::default() };
            let (a, b) = split_latent(&z, &cfg);
            prop_assert_eq!((a.dim(), b.dim()), (d1, d2));
            let joined = ndarray::concatenate![ndarray::Axis(1), a.into_inner(), b.into_inner()];
            prop_assert_eq!(&joined, z.as_array());
        }
    }

    #[test]
    fn gradient_reversal() {
        let v = [1.5, -2.0, 0.0];
        assert_eq!(grl_forward(&v), v.to_vec());
        assert_eq!(grl_backward(&v), vec![-1.5, 2.0, -0.0]);
    }

    #[test]
    fn reversed_head2_gradient_is_negated_encoder_gradient() {
        let (state, batch, _) = micro(Architecture::Conv3, Objective::AdvCl, 5);
        let fp = state.forward(&batch).unwrap();
        let (_, g2) = cross_entropy_with_grad(&fp.logits2, &batch.y2);
        let zeros = vec![0.0; g2.len()];
        let plain = state.backward(&fp, &zeros, &g2, 1.0, None);
        let reversed = state.backward(&fp, &zeros, &g2, -1.0, None);
        let enc = state.encoder.num_params();
        for i in 0..enc {
            assert_eq!(reversed[i], -plain[i]);
        }
        // The non-reversed encoder gradient is the true gradient of CE₂.
        let base = state.to_flat();
        let mut probe = state.clone();
        let h = 1e-4;
        for i in (0..enc).step_by(7) {
            let mut at = |d: f64| {
                let mut p = base.clone();
                p[i] += d;
                probe.load_flat(&p);
                ce2_value(&probe, &batch).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((fd - plain[i]).abs() <= 1e-3 * fd.abs().max(plain[i].abs()).max(1e-4), "param {i}");
        }
    }

    #[test]
    fn classification_loss_examples() {
        let (mut state, batch, _) = micro(Architecture::Mlp, Objective::Erm, 1);
        state.head1 = Linear::zeroed("head1", 2, 2);
        state.head2 = Linear::zeroed("head2", 2, 2);
        assert!((classification_loss(&state, &batch).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let (state, batch, _) = micro(Architecture::Conv3, Objective::Erm, 2);
        let fp = state.forward(&batch).unwrap();
        let oracle = 0.5 * (cross_entropy(&fp.logits1, &batch.y1) + cross_entropy(&fp.logits2, &batch.y2));
        assert!((classification_loss(&state, &batch).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn disent_loss_examples() {
        let (mut state, batch, cfg) = micro(Architecture::Mlp, Objective::Dcor, 3);
        let ctx = PenaltyContext::from_config(&cfg);
        let cls = classification_loss(&state, &batch).unwrap();
        assert_eq!(disent_loss(&state, &batch, Measure::Dcor, 0.0, &ctx).unwrap(), cls);

        let fp = state.forward(&batch).unwrap();
        let (z1, z2) = subspaces(&state, &fp).unwrap();
        let oracle = cls + 0.5 * crate::dependence::dcor(&z1, &z2).unwrap();
        assert!((disent_loss(&state, &batch, Measure::Dcor, 0.5, &ctx).unwrap() - oracle).abs() < 1e-8);

        // Copy the z1 projection rows onto z2 so that z2 = z1.
        let proj = state.encoder.projection_mut();
        let w = proj.in_dim;
        for c in 0..2 {
            let row: Vec<f64> = proj.weight[c * w..(c + 1) * w].to_vec();
            proj.weight[(c + 2) * w..(c + 3) * w].copy_from_slice(&row);
            proj.bias[c + 2] = proj.bias[c];
        }
        let cls = classification_loss(&state, &batch).unwrap();
        assert!((disent_loss(&state, &batch, Measure::Dcor, 1.0, &ctx).unwrap() - (cls + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_dcor_batch_is_skipped() {
        let (mut state, batch, cfg) = micro(Architecture::Mlp, Objective::Dcor, 3);
        let proj = state.encoder.projection_mut();
        let w = proj.in_dim;
        proj.weight[..2 * w].iter_mut().for_each(|v| *v = 0.0);
        let ctx = PenaltyContext::from_config(&cfg);
        let eval = objective_with_grad(&state, &batch, Objective::Dcor, 1.0, &ctx).unwrap();
        assert!(eval.skipped);
        assert_eq!(eval.value, eval.classification);
    }

    #[test]
    fn zero_lambda_penalties_update_exactly_like_erm() {
        for obj in [Objective::Dcor, Objective::Mmd, Objective::Mine] {
            let (mut erm, batch, cfg) = micro(Architecture::Conv3, Objective::Erm, 9);
            let (mut pen, _, pcfg) = micro(Architecture::Conv3, obj, 9);
            assert_eq!(erm.to_flat(), pen.to_flat());
            let pcfg = TrainConfig { lambda: 0.0, ..pcfg };
            let ctx = PenaltyContext::from_config(&pcfg).with_random_perm(batch.n, &mut ChaCha8Rng::seed_from_u64(1));
            for _ in 0..5 {
                train_step(&mut erm, &batch, &cfg, &ctx).unwrap();
                train_step(&mut pen, &batch, &pcfg, &ctx).unwrap();
                assert_eq!(erm.to_flat(), pen.to_flat(), "{obj:?}");
            }
        }
    }

    #[test]
    fn adversarial_zero_lambda_matches_detached_erm() {
        let (mut adv, batch, _) = micro(Architecture::Conv3, Objective::AdvCl, 4);
        let mut reference = adv.clone();
        adversarial_step(&mut adv, &batch, 0.0).unwrap();

        // CE₁ + CE₂ with the encoder detached from task 2.
        let fp = reference.forward(&batch).unwrap();
        let (_, g1) = cross_entropy_with_grad(&fp.logits1, &batch.y1);
        let (_, g2) = cross_entropy_with_grad(&fp.logits2, &batch.y2);
        let grad = reference.backward(&fp, &g1, &g2, 0.0, None);
        let mut p = reference.to_flat();
        reference.optimizer.step(&mut p, &grad);
        reference.load_flat(&p);
        let diff = adv.to_flat().iter().zip(reference.to_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn adversary_descends_its_own_loss() {
        for lambda in [0.0, 1.0] {
            let (state, batch, _) = micro(Architecture::Mlp, Objective::AdvCl, 6);
            let mut stepped = state.clone();
            adversarial_step(&mut stepped, &batch, lambda).unwrap();
            let mut head_only = state.clone();
            head_only.head2 = stepped.head2.clone();
            assert!(ce2_value(&head_only, &batch).unwrap() < ce2_value(&state, &batch).unwrap(), "λ={lambda}");
        }
    }

    #[test]
    fn adversarial_needs_shared_latent() {
        let (state, batch, _) = micro(Architecture::Mlp, Objective::Erm, 6);
        assert!(objective_with_grad(&state, &batch, Objective::AdvCl, 1.0, &PenaltyContext::default()).is_err());
    }

    #[test]
    fn estimator_step_freezes_encoder_and_heads() {
        let (mut state, batch, cfg) = micro(Architecture::Conv3, Objective::Mine, 2);
        let ctx = PenaltyContext::from_config(&cfg).with_random_perm(batch.n, &mut ChaCha8Rng::seed_from_u64(0));
        let before = state.to_flat();
        let mine_before = state.mine.as_ref().unwrap().to_flat();
        estimator_step(&mut state, &batch, &ctx).unwrap();
        assert_eq!(state.to_flat(), before);
        assert_ne!(state.mine.as_ref().unwrap().to_flat(), mine_before);
        assert_eq!((state.encoder_updates, state.estimator_updates), (0, 1));
    }

    #[test]
    fn estimator_ascends_the_bound() {
        let (mut state, _, cfg) = micro(Architecture::Mlp, Objective::Mine, 8);
        // Strongly dependent latents: heavily correlated inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let batch = Batch {
            n,
            side: 8,
            pixels: (0..n).flat_map(|_| vec![rng.gen_range(0.0..1.0); 64]).collect(),
            y1: vec![0; n],
            y2: vec![0; n],
        };
        let ctx = PenaltyContext::from_config(&cfg).with_random_perm(n, &mut rng);
        let first = estimator_step(&mut state, &batch, &ctx).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = estimator_step(&mut state, &batch, &ctx).unwrap();
        }
        assert!(last > first, "{first} -> {last}");
    }
}
