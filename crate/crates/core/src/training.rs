//! Losses, the alternating min-max updates and the epoch loop.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetSplit;
use crate::error::{OledError, Result};
use crate::mask::{mask_backward, threshold, MaskBatch};
use crate::model::{random_square_masks, Masker, Model, ModelSpec};
use crate::nn::{Adam, AdamConfig, Gradients, Mode};
use crate::scoring::{aggregate_scores, score_samples, ScoreType};
use crate::tensor::Tensor;

/// Batch-mean losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub l_mask: f64,
    pub l_cont: f64,
    pub l_rec: f64,
    pub gamma: f32,
    pub lambda: f32,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.l_mask + self.gamma as f64 * self.l_cont + self.lambda as f64 * self.l_rec
    }

    /// The part the mask module maximizes.
    pub fn adversarial(&self) -> f64 {
        self.l_mask + self.gamma as f64 * self.l_cont
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma: f32,
    pub lambda: f32,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 50.0,
            lambda: 1.0,
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 20,
            seed: 0,
        }
    }
}

/// Per-sample errors `(e_mask, e_cont, e_rec)`: squared error of the
/// masked-input reconstruction, Euclidean norm of that error over the masked
/// region, and squared error of the plain reconstruction.
pub fn sample_errors(x: &[f32], recon_masked: &[f32], recon_full: &[f32], mask: &[f32]) -> (f64, f64, f64) {
    let plane = mask.len();
    let (mut e_mask, mut region, mut e_rec) = (0.0f64, 0.0f64, 0.0f64);
    for (i, ((&xv, &ym), &y)) in x.iter().zip(recon_masked).zip(recon_full).enumerate() {
        let d = (xv - ym) as f64;
        e_mask += d * d;
        if mask[i % plane] == 0.0 {
            region += d * d;
        }
        let r = (xv - y) as f64;
        e_rec += r * r;
    }
    (e_mask, region.sqrt(), e_rec)
}

/// Loss terms from an input batch, the masks, and the reconstructions of
/// the masked and unmasked inputs.
pub fn compute_losses(
    x: &Tensor,
    recon_masked: &Tensor,
    recon_full: &Tensor,
    masks: &MaskBatch,
    gamma: f32,
    lambda: f32,
) -> Result<LossTerms> {
    for t in [recon_masked, recon_full] {
        if t.shape() != x.shape() {
            return Err(OledError::shape("compute_losses", x.shape(), t.shape()));
        }
    }
    let n = x.batch();
    if n == 0 || masks.masks.batch() != n {
        return Err(OledError::shape("compute_losses masks", &[n], &[masks.masks.batch()]));
    }
    let mut sums = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b, c) = sample_errors(x.sample(i), recon_masked.sample(i), recon_full.sample(i), masks.masks.sample(i));
        sums = (sums.0 + a, sums.1 + b, sums.2 + c);
    }
    let nf = n as f64;
    Ok(LossTerms {
        l_mask: sums.0 / nf,
        l_cont: sums.1 / nf,
        l_rec: sums.2 / nf,
        gamma,
        lambda,
    })
}

/// Gradient of `sign · (L_mask + γ·L_cont)` wrt the masked-input reconstruction.
fn adversarial_grad(x: &Tensor, recon_masked: &Tensor, masks: &MaskBatch, gamma: f32, sign: f32) -> Tensor {
    let n = x.batch();
    let plane = masks.masks.sample_len();
    let mut g = Tensor::zeros(x.shape());
    for i in 0..n {
        let (xv, y, m) = (x.sample(i), recon_masked.sample(i), masks.masks.sample(i));
        let norm: f64 = xv
            .iter()
            .zip(y)
            .enumerate()
            .filter(|(j, _)| m[j % plane] == 0.0)
            .map(|(_, (&a, &b))| ((b - a) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let cont = if norm > 0.0 { gamma as f64 / norm } else { 0.0 };
        for (j, o) in g.sample_mut(i).iter_mut().enumerate() {
            let d = (y[j] - xv[j]) as f64;
            let mut v = 2.0 * d;
            if m[j % plane] == 0.0 {
                v += cont * d;
            }
            *o = (sign as f64 * v / n as f64) as f32;
        }
    }
    g
}

/// Gradient of `λ·L_rec` wrt the plain reconstruction.
fn rec_grad(x: &Tensor, recon_full: &Tensor, lambda: f32) -> Tensor {
    let scale = 2.0 * lambda / x.batch() as f32;
    Tensor::from_fn(x.shape(), |j| scale * (recon_full.data()[j] - x.data()[j]))
}

fn add_into(acc: &mut Gradients, other: Gradients) {
    for (a, b) in acc.tensors.iter_mut().zip(other.tensors) {
        for (u, v) in a.data_mut().iter_mut().zip(b.data()) {
            *u += v;
        }
    }
}

fn check_finite(terms: &LossTerms, what: &str) -> Result<()> {
    if terms.l_mask.is_finite() && terms.l_cont.is_finite() && terms.l_rec.is_finite() {
        Ok(())
    } else {
        Err(OledError::NonFinite(format!(
            "{what}: L_mask={} L_cont={} L_rec={}",
            terms.l_mask, terms.l_cont, terms.l_rec
        )))
    }
}

/// Optimizer state for both networks plus the run's sampling stream.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    r_opt: Adam,
    m_opt: Option<Adam>,
    rng: ChaCha8Rng,
}

/// Losses observed by the two halves of one alternating step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    /// Before the reconstructor update.
    pub reconstructor: LossTerms,
    /// Before the mask-module update (absent for fixed maskers).
    pub mask_module: Option<LossTerms>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let r_opt = Adam::new(config.adam, &model.reconstructor.net.params());
        let m_opt = model.mask_module().map(|m| Adam::new(config.adam, &m.generator.params()));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Trainer {
            model,
            config,
            r_opt,
            m_opt,
            rng,
        }
    }

    /// Training-time masks: the current mask module (batch statistics, no
    /// state change) or fresh random squares.
    fn training_masks(&mut self, x: &Tensor) -> Result<MaskBatch> {
        match &self.model.masker {
            Masker::Learned(m) => threshold(&m.activation_map(x, Mode::Train)?.0, &m.threshold),
            &Masker::RandomSquare { size, .. } => {
                let s = x.shape();
                random_square_masks(s[0], s[2], s[3], size, &mut self.rng)
            }
        }
    }

    /// Reconstructor gradients of `L_mask + γ·L_cont + λ·L_rec` with the
    /// masks held fixed. Returns the tapes' batch statistics via the closure.
    fn reconstructor_pass(&self, x: &Tensor, masks: &MaskBatch) -> Result<(LossTerms, Gradients, Vec<crate::nn::Tape>)> {
        let r = &self.model.reconstructor.net;
        let (gamma, lambda) = (self.config.gamma, self.config.lambda);
        let xm = crate::mask::apply_mask(x, masks)?;
        let (ym, tape_m) = r.forward_train(&xm)?;
        let (y, tape_r) = r.forward_train(x)?;
        let terms = compute_losses(x, &ym, &y, masks, gamma, lambda)?;
        check_finite(&terms, "reconstructor step")?;
        let (_, mut grads) = r.backward(&tape_m, &adversarial_grad(x, &ym, masks, gamma, 1.0), true)?;
        if lambda != 0.0 {
            let (_, g2) = r.backward(&tape_r, &rec_grad(x, &y, lambda), true)?;
            add_into(&mut grads, g2);
        }
        Ok((terms, grads, vec![tape_m, tape_r]))
    }

    /// Gradients of the reconstructor objective for a batch, with masks
    /// drawn as during training.
    pub fn reconstructor_gradients(&mut self, x: &Tensor) -> Result<(LossTerms, Gradients)> {
        let masks = self.training_masks(x)?;
        let (t, g, _) = self.reconstructor_pass(x, &masks)?;
        Ok((t, g))
    }

    /// One Adam step of the reconstructor with the mask module frozen.
    pub fn reconstructor_step(&mut self, x: &Tensor) -> Result<LossTerms> {
        let masks = self.training_masks(x)?;
        let (terms, grads, tapes) = self.reconstructor_pass(x, &masks)?;
        let net = &mut self.model.reconstructor.net;
        self.r_opt.step(net.params_mut(), &grads.tensors)?;
        for t in &tapes {
            net.update_running_stats(t)?;
        }
        Ok(terms)
    }

    /// Mask-module gradients for descending `−(L_mask + γ·L_cont)` with the
    /// reconstructor frozen. `L_rec` is never evaluated here: it does not
    /// depend on the masks.
    pub fn mask_module_gradients(&self, x: &Tensor) -> Result<Option<(LossTerms, Gradients, crate::nn::Tape)>> {
        let Masker::Learned(mm) = &self.model.masker else {
            return Ok(None);
        };
        let r = &self.model.reconstructor.net;
        let (a, tape_a) = mm.generator.forward_train(x)?;
        let masks = threshold(&a, &mm.threshold)?;
        let xm = crate::mask::apply_mask(x, &masks)?;
        let (ym, tape_m) = r.forward_train(&xm)?;
        let terms = compute_losses(x, &ym, &ym, &masks, self.config.gamma, 0.0)?;
        let terms = LossTerms {
            l_rec: 0.0,
            lambda: self.config.lambda,
            ..terms
        };
        check_finite(&terms, "mask-module step")?;
        let g_out = adversarial_grad(x, &ym, &masks, self.config.gamma, -1.0);
        let (g_xm, _) = r.backward(&tape_m, &g_out, false)?;
        let g_a = mask_backward(&g_xm, x, &a, &masks, &mm.threshold)?;
        let (_, grads) = mm.generator.backward(&tape_a, &g_a, true)?;
        Ok(Some((terms, grads, tape_a)))
    }

    /// One Adam step of the mask module with the reconstructor frozen.
    pub fn mask_module_step(&mut self, x: &Tensor) -> Result<Option<LossTerms>> {
        let Some((terms, grads, tape)) = self.mask_module_gradients(x)? else {
            return Ok(None);
        };
        let (Masker::Learned(mm), Some(opt)) = (&mut self.model.masker, &mut self.m_opt) else {
            unreachable!("learned masker always has an optimizer");
        };
        opt.step(mm.generator.params_mut(), &grads.tensors)?;
        mm.generator.update_running_stats(&tape)?;
        Ok(Some(terms))
    }

    /// Reconstructor update followed by a mask-module update on fresh masks.
    pub fn train_step(&mut self, x: &Tensor) -> Result<StepLosses> {
        let reconstructor = self.reconstructor_step(x)?;
        let mask_module = self.mask_module_step(x)?;
        Ok(StepLosses {
            reconstructor,
            mask_module,
        })
    }

    /// One pass over `train` in a freshly shuffled order; returns the mean
    /// reconstructor-step losses. A trailing batch of one image is skipped
    /// (batch statistics are undefined for it).
    pub fn epoch(&mut self, train: &Tensor) -> Result<LossTerms> {
        let n = train.batch();
        if n < 2 {
            return Err(OledError::Dataset(format!("training split has {n} images, need at least 2")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let x = train.select(chunk);
            let step = self.train_step(&x)?;
            let t = step.reconstructor;
            sums = (sums.0 + t.l_mask, sums.1 + t.l_cont, sums.2 + t.l_rec);
            batches += 1;
        }
        let b = batches as f64;
        Ok(LossTerms {
            l_mask: sums.0 / b,
            l_cont: sums.1 / b,
            l_rec: sums.2 / b,
            gamma: self.config.gamma,
            lambda: self.config.lambda,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub losses: LossTerms,
    /// Validation AUC in [`ScoreType::ALL`] order; `None` when the
    /// validation set lacks one of the two classes.
    pub val_auc: [Option<f64>; 4],
    pub checkpoint: Option<PathBuf>,
}

impl EpochRecord {
    pub fn val_auc_of(&self, t: ScoreType) -> Option<f64> {
        self.val_auc[ScoreType::ALL.iter().position(|&s| s == t).expect("listed")]
    }
}

pub const EPOCHS_CSV_HEADER: &str = "epoch,L_mask,L_cont,L_rec,val_auc_rec,val_auc_mask,val_auc_cont,val_auc_avg";

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from(EPOCHS_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},{},{},{}", r.epoch, r.losses.l_mask, r.losses.l_cont, r.losses.l_rec));
        for a in r.val_auc {
            s.push(',');
            s.push_str(&a.map_or("nan".to_string(), |v| v.to_string()));
        }
        s.push('\n');
    }
    s
}

/// Argmax of validation `s_mask` AUC (earliest on ties); the last epoch
/// when no record has a validation AUC.
pub fn best_epoch(records: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in records {
        if let Some(a) = r.val_auc_of(ScoreType::Mask) {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((r.epoch, a));
            }
        }
    }
    best.map(|(e, _)| e).or_else(|| records.last().map(|r| r.epoch))
}

/// Where per-epoch checkpoints go and the config text they embed.
#[derive(Clone, Debug)]
pub struct CheckpointSink<'a> {
    pub dir: &'a Path,
    pub config_text: &'a str,
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best: Model,
    pub last: Model,
}

/// Validation AUC per score type, `None` for a single-class set.
fn validate(model: &Model, split: &DatasetSplit) -> Result<[Option<f64>; 4]> {
    let pos = split.val_labels.iter().filter(|&&o| o).count();
    if pos == 0 || pos == split.val_labels.len() {
        return Ok([None; 4]);
    }
    let raw = score_samples(model, &split.val, VALIDATION_ID_BASE)?;
    let (_, rows) = aggregate_scores(&raw, &split.val_labels)?;
    Ok([0, 1, 2, 3].map(|i| Some(rows[i].auc)))
}

/// Sample ids used for random-square validation masks; distinct from the
/// test ids which start at zero.
pub const VALIDATION_ID_BASE: u64 = 1 << 40;

/// Trains for `config.epochs` epochs, scoring the validation set after each
/// and keeping the epoch with the best validation `s_mask` AUC.
pub fn train(
    split: &DatasetSplit,
    spec: &ModelSpec,
    config: &TrainConfig,
    sink: Option<&CheckpointSink>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if split.train.batch() < 2 {
        return Err(OledError::Dataset("empty training split".into()));
    }
    if config.epochs == 0 {
        return Err(OledError::Config("epochs must be positive".into()));
    }
    let mut trainer = Trainer::new(Model::new(spec)?, config.clone());
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Model)> = None;
    for epoch in 1..=config.epochs {
        let losses = trainer.epoch(&split.train)?;
        let val_auc = validate(&trainer.model, split)?;
        let checkpoint = match sink {
            Some(s) => {
                let p = s.dir.join(epoch_checkpoint_name(epoch));
                trainer.model.to_checkpoint(s.config_text).save(&p)?;
                Some(p)
            }
            None => None,
        };
        let score = val_auc[1].unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score > *b || (score == f64::NEG_INFINITY && *b == f64::NEG_INFINITY)) {
            best = Some((score, trainer.model.clone()));
        }
        let rec = EpochRecord {
            epoch,
            losses,
            val_auc,
            checkpoint,
        };
        on_epoch(&rec);
        records.push(rec);
    }
    let best_epoch = best_epoch(&records).expect("at least one epoch");
    let best = best.expect("at least one epoch").1;
    if let Some(s) = sink {
        best.to_checkpoint(s.config_text).save(&s.dir.join(BEST_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        records,
        best_epoch,
        best,
        last: trainer.model,
    })
}

/// Context-autoencoder baseline: the reconstructor trained on images with
/// one random zeroed square each, no mask module.
pub fn train_cae_baseline(
    split: &DatasetSplit,
    spec: &ModelSpec,
    config: &TrainConfig,
    sink: Option<&CheckpointSink>,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    match spec.masker {
        crate::model::MaskerSpec::RandomSquare { .. } => train(split, spec, config, sink, on_epoch),
        _ => Err(OledError::Config("CAE baseline needs a random-square masker".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{GradMode, MaskGeneratorConfig, ThresholdConfig};
    use crate::model::MaskerSpec;
    use crate::reconstructor::ReconstructorConfig;
    use approx::assert_relative_eq;

    fn one_pixel(x: f32, y: f32, masked: bool) -> (Tensor, Tensor, MaskBatch) {
        let t = |v| Tensor::new(vec![1, 1, 1, 1], vec![v]).unwrap();
        let mb = MaskBatch::from_masks(t(if masked { 0.0 } else { 1.0 })).unwrap();
        (t(x), t(y), mb)
    }

    #[test]
    fn one_pixel_losses() {
        let (x, y, mb) = one_pixel(0.5, 0.1, true);
        let l = compute_losses(&x, &y, &x, &mb, 50.0, 1.0).unwrap();
        assert_relative_eq!(l.l_mask, 0.16, max_relative = 1e-6);
        assert_relative_eq!(l.l_cont, 0.4, max_relative = 1e-6);
        assert_eq!(l.l_rec, 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let x = Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f32 * 0.37).sin());
        let mb = MaskBatch::from_masks(Tensor::from_fn(&[2, 1, 4, 4], |i| (i % 3 != 0) as u8 as f32)).unwrap();
        let l = compute_losses(&x, &x, &x, &mb, 50.0, 1.0).unwrap();
        assert_eq!((l.l_mask, l.l_cont, l.l_rec), (0.0, 0.0, 0.0));
    }

    #[test]
    fn no_masking_reduces_to_plain_autoencoder() {
        let x = Tensor::from_fn(&[3, 1, 4, 4], |i| (i as f32 * 0.11).cos());
        let y = x.map(|v| v * 0.5);
        let mb = MaskBatch::from_masks(Tensor::full(&[3, 1, 4, 4], 1.0)).unwrap();
        let l = compute_losses(&x, &y, &y, &mb, 50.0, 1.0).unwrap();
        assert_eq!(l.l_mask, l.l_rec);
        assert_eq!(l.l_cont, 0.0);
    }

    #[test]
    fn total_decomposes() {
        let l = LossTerms {
            l_mask: 1.5,
            l_cont: 0.25,
            l_rec: 2.0,
            gamma: 50.0,
            lambda: 1.0,
        };
        assert_eq!(l.total(), 1.5 + 12.5 + 2.0);
    }

    #[test]
    fn adversarial_grad_matches_finite_differences() {
        let x = Tensor::from_fn(&[2, 2, 3, 3], |i| ((i * 7 % 11) as f32 / 11.0) - 0.5);
        let y = Tensor::from_fn(&[2, 2, 3, 3], |i| ((i * 5 % 13) as f32 / 13.0) - 0.5);
        let mb = MaskBatch::from_masks(Tensor::from_fn(&[2, 1, 3, 3], |i| (i % 4 != 1) as u8 as f32)).unwrap();
        let g = adversarial_grad(&x, &y, &mb, 3.0, 1.0);
        let f = |y: &Tensor| compute_losses(&x, y, y, &mb, 3.0, 0.0).unwrap().adversarial();
        for j in 0..y.len() {
            let h = 1e-3f32;
            let mut yp = y.clone();
            yp.data_mut()[j] += h;
            let mut ym = y.clone();
            ym.data_mut()[j] -= h;
            let num = (f(&yp) - f(&ym)) / (2.0 * h as f64);
            assert!((num - g.data()[j] as f64).abs() < 2e-3, "entry {j}: {num} vs {}", g.data()[j]);
        }
    }

    fn tiny_spec(keep: f64, seed: u64) -> ModelSpec {
        let mut r = ReconstructorConfig::for_input(1, 8, 8);
        r.encoder = vec![4, 8];
        r.decoder = vec![8, 4];
        r.bottleneck = 8;
        let mut m = MaskGeneratorConfig::for_input(1, 8, 8);
        m.encoder = vec![4, 4];
        m.decoder = vec![4];
        let t = ThresholdConfig {
            keep_fraction: keep,
            eps: 1e-6,
            grad_mode: GradMode::StraightThrough,
        };
        ModelSpec {
            reconstructor: r,
            masker: MaskerSpec::Learned(m, t),
            seed,
        }
    }

    fn batch(n: usize) -> Tensor {
        Tensor::from_fn(&[n, 1, 8, 8], |i| (((i * 37) % 17) as f32 / 8.0 - 1.0).clamp(-1.0, 1.0))
    }

    #[test]
    fn no_masking_gives_mask_module_zero_gradient() {
        let cfg = TrainConfig {
            lambda: 0.0,
            ..TrainConfig::default()
        };
        let t = Trainer::new(Model::new(&tiny_spec(1.0, 0)).unwrap(), cfg);
        let (_, g, _) = t.mask_module_gradients(&batch(4)).unwrap().unwrap();
        assert!(g.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mask_module_gradient_ignores_reconstruction_weight() {
        let x = batch(4);
        let grads = |lambda| {
            let cfg = TrainConfig {
                lambda,
                ..TrainConfig::default()
            };
            let t = Trainer::new(Model::new(&tiny_spec(0.75, 3)).unwrap(), cfg);
            t.mask_module_gradients(&x).unwrap().unwrap().1.tensors
        };
        assert_eq!(grads(0.0), grads(7.0));
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut t = Trainer::new(Model::new(&tiny_spec(0.75, 9)).unwrap(), TrainConfig::default());
            for _ in 0..3 {
                t.train_step(&batch(4)).unwrap();
            }
            t.model.to_checkpoint("")
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn best_epoch_prefers_highest_then_earliest() {
        let rec = |epoch, auc| EpochRecord {
            epoch,
            losses: LossTerms {
                l_mask: 0.0,
                l_cont: 0.0,
                l_rec: 0.0,
                gamma: 1.0,
                lambda: 1.0,
            },
            val_auc: [None, auc, None, None],
            checkpoint: None,
        };
        assert_eq!(best_epoch(&[rec(1, Some(0.7)), rec(2, Some(0.9)), rec(3, Some(0.9))]), Some(2));
        assert_eq!(best_epoch(&[rec(1, None), rec(2, None)]), Some(2));
        assert_eq!(best_epoch(&[]), None);
    }
}
