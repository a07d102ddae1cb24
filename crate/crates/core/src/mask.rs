//! Mask module: a small convolutional autoencoder producing a non-negative
//! activation map, followed by a hard top-k threshold that zeroes the most
//! active pixels.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{OledError, Result};
use crate::nn::{BatchNorm, Conv2d, ConvTranspose2d, Layer, LayerStack, Mode, Tape};
use crate::tensor::Tensor;

/// How gradients cross the (non-differentiable) hard threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Treat the mask as `1 − A` locally: d mask / d A = −1.
    StraightThrough,
    /// Differentiate the continuous ratio-of-ReLUs surrogate, clamped to
    /// [0, 1], with the threshold value held constant.
    PaperLiteral,
}

impl FromStr for GradMode {
    type Err = OledError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight-through" => Ok(GradMode::StraightThrough),
            "paper-literal" => Ok(GradMode::PaperLiteral),
            other => Err(OledError::Config(format!("unknown grad_mode '{other}'"))),
        }
    }
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradMode::StraightThrough => "straight-through",
            GradMode::PaperLiteral => "paper-literal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdConfig {
    /// Fraction of pixels left unmasked, in (0, 1].
    pub keep_fraction: f64,
    pub eps: f32,
    pub grad_mode: GradMode,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            keep_fraction: 0.875,
            eps: 1e-6,
            grad_mode: GradMode::StraightThrough,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(OledError::Config(format!(
                "keep fraction t must lie in (0, 1], got {}",
                self.keep_fraction
            )));
        }
        if !(self.eps > 0.0) {
            return Err(OledError::Config("threshold eps must be positive".into()));
        }
        Ok(())
    }

    /// Number of zeros per mask: `ceil((1 − t)·pixels)`. A 1e-9 slack absorbs
    /// binary rounding of `1 − t` (e.g. t = 0.9 on 100 pixels is 10, not 11).
    pub fn masked_count(&self, pixels: usize) -> usize {
        let raw = (1.0 - self.keep_fraction) * pixels as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(pixels)
    }
}

/// Hard masks for a batch plus the per-image threshold value `s`.
#[derive(Clone, Debug)]
pub struct MaskBatch {
    /// N×1×H×W, entries exactly 0 or 1.
    pub masks: Tensor,
    /// k-th largest activation per image; +∞ when nothing is masked.
    pub kth: Vec<f32>,
    pub masked_per_image: usize,
}

impl MaskBatch {
    /// Wraps externally generated binary masks (e.g. random squares).
    pub fn from_masks(masks: Tensor) -> Result<Self> {
        let s = masks.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(OledError::shape("mask batch", &[s[0], 1, 0, 0], s));
        }
        if masks.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(OledError::Config("mask entries must be 0 or 1".into()));
        }
        let zeros = masks.sample(0).iter().filter(|&&v| v == 0.0).count();
        Ok(MaskBatch {
            kth: vec![f32::INFINITY; s[0]],
            masked_per_image: zeros,
            masks,
        })
    }
}

/// Zeroes the `k` largest activations of every map (ties: lowest row-major
/// index first) and sets the rest to one.
pub fn threshold(activations: &Tensor, cfg: &ThresholdConfig) -> Result<MaskBatch> {
    cfg.validate()?;
    let s = activations.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(OledError::shape("activation map", &[s[0], 1, 0, 0], s));
    }
    if !activations.is_finite() {
        return Err(OledError::NonFinite("activation map".into()));
    }
    let pixels = s[2] * s[3];
    let k = cfg.masked_count(pixels);
    let mut masks = Tensor::full(s, 1.0);
    let mut kth = Vec::with_capacity(s[0]);
    let mut order: Vec<usize> = Vec::with_capacity(pixels);
    for i in 0..s[0] {
        let a = activations.sample(i);
        if k == 0 {
            kth.push(f32::INFINITY);
            continue;
        }
        order.clear();
        order.extend(0..pixels);
        let rank = |&x: &usize, &y: &usize| -> Ordering { a[y].total_cmp(&a[x]).then(x.cmp(&y)) };
        order.select_nth_unstable_by(k - 1, rank);
        let m = masks.sample_mut(i);
        for &p in &order[..k] {
            m[p] = 0.0;
        }
        kth.push(a[order[k - 1]]);
    }
    Ok(MaskBatch {
        masks,
        kth,
        masked_per_image: k,
    })
}

/// Continuous ratio-of-ReLUs surrogate `(s − relu(A)) / (s − relu(A) + ε)`,
/// clamped to [0, 1]. At `A = s + ε` the raw ratio is undefined and the
/// clamped value is taken as 0.
pub fn threshold_soft(activations: &Tensor, kth: &[f32], eps: f32) -> Tensor {
    let mut out = activations.clone();
    let per = activations.sample_len();
    for (i, chunk) in out.data_mut().chunks_mut(per).enumerate() {
        let s = kth[i];
        for v in chunk {
            *v = soft_value(*v, s, eps).0;
        }
    }
    out
}

/// Returns (clamped surrogate value, d value / d A).
fn soft_value(a: f32, s: f32, eps: f32) -> (f32, f32) {
    if s.is_infinite() {
        return (1.0, 0.0);
    }
    let r = a.max(0.0);
    let u = s - r;
    let den = u + eps;
    if den == 0.0 {
        return (0.0, 0.0);
    }
    let raw = u / den;
    if u >= 0.0 {
        let d_relu = if a > 0.0 { 1.0 } else { 0.0 };
        (raw.clamp(0.0, 1.0), -eps / (den * den) * d_relu)
    } else {
        (raw.clamp(0.0, 1.0), 0.0)
    }
}

/// `x_m = x ⊙ mask`, one mask broadcast across all channels.
pub fn apply_mask(x: &Tensor, batch: &MaskBatch) -> Result<Tensor> {
    let (xs, ms) = (x.shape(), batch.masks.shape());
    if xs.len() != 4 || xs[0] != ms[0] || xs[2..] != ms[2..] {
        return Err(OledError::shape("apply_mask", &[ms[0], xs.get(1).copied().unwrap_or(0), ms[2], ms[3]], xs));
    }
    let mut out = x.clone();
    let plane = xs[2] * xs[3];
    for i in 0..xs[0] {
        let m = batch.masks.sample(i);
        for c in out.sample_mut(i).chunks_mut(plane) {
            for (v, &mv) in c.iter_mut().zip(m) {
                if mv == 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient wrt the mask from a gradient wrt the masked image:
/// `Σ_c grad_xm[c] · x[c]`.
pub fn mask_grad_from_masked_input(grad_xm: &Tensor, x: &Tensor) -> Result<Tensor> {
    if grad_xm.shape() != x.shape() || x.shape().len() != 4 {
        return Err(OledError::shape("mask gradient", x.shape(), grad_xm.shape()));
    }
    let s = x.shape();
    let plane = s[2] * s[3];
    let mut out = Tensor::zeros(&[s[0], 1, s[2], s[3]]);
    for i in 0..s[0] {
        let (g, xv) = (grad_xm.sample(i), x.sample(i));
        let o = out.sample_mut(i);
        for c in 0..s[1] {
            for p in 0..plane {
                o[p] += g[c * plane + p] * xv[c * plane + p];
            }
        }
    }
    Ok(out)
}

/// Pulls a gradient wrt the hard mask back to the activation map using the
/// configured surrogate. Images with nothing masked (or everything masked)
/// have a constant mask and receive zero gradient.
pub fn surrogate_backward(grad_mask: &Tensor, activations: &Tensor, batch: &MaskBatch, cfg: &ThresholdConfig) -> Result<Tensor> {
    if grad_mask.shape() != activations.shape() || batch.masks.shape() != activations.shape() {
        return Err(OledError::shape("surrogate_backward", activations.shape(), grad_mask.shape()));
    }
    let pixels = activations.sample_len();
    let mut out = Tensor::zeros(activations.shape());
    if batch.masked_per_image == 0 || batch.masked_per_image == pixels {
        return Ok(out);
    }
    for i in 0..activations.batch() {
        let (g, a) = (grad_mask.sample(i), activations.sample(i));
        let s = batch.kth[i];
        for (p, o) in out.sample_mut(i).iter_mut().enumerate() {
            *o = match cfg.grad_mode {
                GradMode::StraightThrough => -g[p],
                GradMode::PaperLiteral => g[p] * soft_value(a[p], s, cfg.eps).1,
            };
        }
    }
    Ok(out)
}

/// Gradient wrt the activation map from a gradient wrt the masked image.
pub fn mask_backward(
    grad_xm: &Tensor,
    x: &Tensor,
    activations: &Tensor,
    batch: &MaskBatch,
    cfg: &ThresholdConfig,
) -> Result<Tensor> {
    let gm = mask_grad_from_masked_input(grad_xm, x)?;
    surrogate_backward(&gm, activations, batch, cfg)
}

/// Architecture of the mask generator. Every encoder entry is a stride-2
/// conv block; every decoder entry a stride-2 transposed-conv block; a final
/// stride-2 transposed conv maps to one channel followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskGeneratorConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub leaky_slope: f32,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

impl MaskGeneratorConfig {
    pub fn for_input(channels: usize, height: usize, width: usize) -> Self {
        MaskGeneratorConfig {
            channels,
            height,
            width,
            encoder: vec![16, 32],
            decoder: vec![16],
            leaky_slope: 0.2,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

pub fn build_generator(cfg: &MaskGeneratorConfig, rng: &mut impl Rng) -> Result<LayerStack> {
    if cfg.encoder.is_empty() || cfg.decoder.len() + 1 != cfg.encoder.len() {
        return Err(OledError::Config(format!(
            "mask generator needs one more encoder block than decoder blocks, got {:?} / {:?}",
            cfg.encoder, cfg.decoder
        )));
    }
    let scale = 1usize << cfg.encoder.len();
    if !cfg.height.is_multiple_of(scale) || !cfg.width.is_multiple_of(scale) {
        return Err(OledError::Config(format!(
            "mask generator input {}×{} not divisible by {scale}",
            cfg.height, cfg.width
        )));
    }
    let mut net = LayerStack::new(&[cfg.channels, cfg.height, cfg.width]);
    let mut c = cfg.channels;
    for (i, &out) in cfg.encoder.iter().enumerate() {
        net.push(format!("enc{i}"), Layer::Conv2d(Conv2d::init(c, out, 3, 2, 1, rng)))?;
        net.push(format!("enc{i}_bn"), Layer::BatchNorm(BatchNorm::new(out, cfg.bn_eps, cfg.bn_momentum)))?;
        net.push(format!("enc{i}_act"), Layer::LeakyRelu { slope: cfg.leaky_slope })?;
        c = out;
    }
    for (i, &out) in cfg.decoder.iter().enumerate() {
        net.push(format!("dec{i}"), Layer::ConvTranspose2d(ConvTranspose2d::init(c, out, 3, 2, 1, 1, rng)))?;
        net.push(format!("dec{i}_bn"), Layer::BatchNorm(BatchNorm::new(out, cfg.bn_eps, cfg.bn_momentum)))?;
        net.push(format!("dec{i}_act"), Layer::LeakyRelu { slope: cfg.leaky_slope })?;
        c = out;
    }
    net.push("out", Layer::ConvTranspose2d(ConvTranspose2d::init(c, 1, 3, 2, 1, 1, rng)))?;
    net.push("out_act", Layer::Relu)?;
    Ok(net)
}

/// Mask generator plus threshold unit.
#[derive(Clone, Debug)]
pub struct MaskModule {
    pub generator: LayerStack,
    pub threshold: ThresholdConfig,
}

impl MaskModule {
    pub fn new(cfg: &MaskGeneratorConfig, threshold: ThresholdConfig, rng: &mut impl Rng) -> Result<Self> {
        threshold.validate()?;
        Ok(MaskModule {
            generator: build_generator(cfg, rng)?,
            threshold,
        })
    }

    /// Activation maps, N×1×H×W, non-negative.
    pub fn activation_map(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<Tape>)> {
        self.generator.forward(x, mode)
    }

    /// Inference-mode masks for a batch.
    pub fn masks(&self, x: &Tensor) -> Result<(Tensor, MaskBatch)> {
        let a = self.generator.infer(x)?;
        let mb = threshold(&a, &self.threshold)?;
        Ok((a, mb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn amap(h: usize, w: usize, v: &[f32]) -> Tensor {
        Tensor::new(vec![1, 1, h, w], v.to_vec()).unwrap()
    }

    fn cfg(t: f64) -> ThresholdConfig {
        ThresholdConfig {
            keep_fraction: t,
            ..Default::default()
        }
    }

    #[test]
    fn masks_largest_activation() {
        let mb = threshold(&amap(2, 2, &[0.1, 0.9, 0.5, 0.7]), &cfg(0.75)).unwrap();
        assert_eq!(mb.masked_per_image, 1);
        assert_eq!(mb.masks.data(), &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(mb.kth, vec![0.9]);
    }

    #[test]
    fn keep_all_masks_nothing() {
        let mb = threshold(&amap(2, 2, &[0.1, 0.9, 0.5, 0.7]), &cfg(1.0)).unwrap();
        assert_eq!(mb.masked_per_image, 0);
        assert!(mb.masks.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ties_broken_by_row_major_index() {
        let mb = threshold(&amap(2, 2, &[0.3; 4]), &cfg(0.5)).unwrap();
        assert_eq!(mb.masks.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn ties_match_exhaustive_enumeration() {
        // Among all 2-subsets of 4 tied pixels, the rule picks the
        // lexicographically smallest index set.
        let mut subsets = vec![];
        for a in 0..4 {
            for b in a + 1..4 {
                subsets.push([a, b]);
            }
        }
        subsets.sort();
        let mb = threshold(&amap(2, 2, &[0.3; 4]), &cfg(0.5)).unwrap();
        let zeros: Vec<usize> = (0..4).filter(|&p| mb.masks.data()[p] == 0.0).collect();
        assert_eq!(zeros, subsets[0].to_vec());
    }

    #[test]
    fn invalid_keep_fraction_rejected() {
        let a = amap(2, 2, &[0.0; 4]);
        assert!(threshold(&a, &cfg(0.0)).is_err());
        assert!(threshold(&a, &cfg(1.5)).is_err());
        assert!(threshold(&a, &cfg(-0.2)).is_err());
    }

    #[test]
    fn masked_count_handles_rounding() {
        assert_eq!(cfg(0.875).masked_count(784), 98);
        assert_eq!(cfg(0.875).masked_count(1024), 128);
        assert_eq!(cfg(0.9).masked_count(100), 10);
        assert_eq!(cfg(0.75).masked_count(4), 1);
        assert_eq!(cfg(0.7).masked_count(4), 2);
    }

    #[test]
    fn soft_threshold_values() {
        let s = 0.5f32;
        let eps = 1e-6f32;
        let at = |a: f32| threshold_soft(&amap(1, 1, &[a]), &[s], eps).data()[0];
        assert_eq!(at(s), 0.0);
        approx::assert_abs_diff_eq!(at(0.0), s / (s + eps), epsilon = 1e-7);
        // raw value −1 at s + ε/2, clamped
        let (a, u) = (s + eps / 2.0, -eps / 2.0);
        approx::assert_abs_diff_eq!(u / (u + eps), -1.0, epsilon = 1e-6);
        assert_eq!(at(a), 0.0);
    }

    #[test]
    fn apply_mask_broadcasts_over_channels() {
        let x = Tensor::new(vec![1, 3, 1, 2], vec![0.5, 0.9, -0.2, 0.1, 1.0, -1.0]).unwrap();
        let mb = MaskBatch::from_masks(Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.0]).unwrap()).unwrap();
        let xm = apply_mask(&x, &mb).unwrap();
        assert_eq!(xm.data(), &[0.0, 0.9, 0.0, 0.1, 0.0, -1.0]);

        let ones = MaskBatch::from_masks(Tensor::full(&[1, 1, 1, 2], 1.0)).unwrap();
        assert_eq!(apply_mask(&x, &ones).unwrap(), x);
        let zeros = MaskBatch::from_masks(Tensor::zeros(&[1, 1, 1, 2])).unwrap();
        assert!(apply_mask(&x, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_mask_rejects_spatial_mismatch() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let mb = MaskBatch::from_masks(Tensor::full(&[1, 1, 3, 3], 1.0)).unwrap();
        assert!(apply_mask(&x, &mb).is_err());
    }

    #[test]
    fn straight_through_single_pixel() {
        // 2 pixels so that one is masked; check the pixel with x = 2.
        let a = amap(1, 2, &[0.9, 0.1]);
        let c = cfg(0.5);
        let mb = threshold(&a, &c).unwrap();
        let x = Tensor::new(vec![1, 1, 1, 2], vec![2.0, 1.0]).unwrap();
        let g = Tensor::new(vec![1, 1, 1, 2], vec![3.0, 0.0]).unwrap();
        let ga = mask_backward(&g, &x, &a, &mb, &c).unwrap();
        // d mask / d A = −1
        assert_eq!(ga.data(), &[-6.0, 0.0]);
        let zero = mask_backward(&Tensor::zeros(&[1, 1, 1, 2]), &x, &a, &mb, &c).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn paper_literal_flat_region_has_zero_grad() {
        let c = ThresholdConfig {
            keep_fraction: 0.5,
            eps: 1e-6,
            grad_mode: GradMode::PaperLiteral,
        };
        let s = 0.5f32;
        let a = amap(1, 2, &[s + 5e-7, 0.2]);
        let mb = MaskBatch {
            masks: Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.0]).unwrap(),
            kth: vec![s],
            masked_per_image: 1,
        };
        let g = Tensor::full(&[1, 1, 1, 2], 1.0);
        let ga = surrogate_backward(&g, &a, &mb, &c).unwrap();
        assert_eq!(ga.data()[0], 0.0);
        // below the threshold the surrogate decreases with A
        assert!(ga.data()[1] < 0.0);
    }

    #[test]
    fn unknown_grad_mode_rejected() {
        assert!("sideways".parse::<GradMode>().is_err());
        assert_eq!("paper-literal".parse::<GradMode>().unwrap(), GradMode::PaperLiteral);
    }

    #[test]
    fn generator_output_is_nonnegative_single_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mm = MaskModule::new(&MaskGeneratorConfig::for_input(1, 32, 32), ThresholdConfig::default(), &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 1, 32, 32], |i| ((i as f32) * 0.013).sin());
        let (a, _) = mm.activation_map(&x, Mode::Infer).unwrap();
        assert_eq!(a.shape(), &[2, 1, 32, 32]);
        assert!(a.data().iter().all(|&v| v >= 0.0));
        let (a2, _) = mm.activation_map(&x, Mode::Infer).unwrap();
        assert_eq!(a, a2);
        let (_, mb) = mm.masks(&x).unwrap();
        for i in 0..2 {
            assert_eq!(mb.masks.sample(i).iter().filter(|&&v| v == 0.0).count(), 128);
        }
    }
}
