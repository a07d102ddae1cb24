//! Convolutional encoder-decoder with a dense bottleneck. No pooling; the
//! output passes through a hard clip to the input range.

use rand::Rng;

use crate::error::{OledError, Result};
use crate::nn::{BatchNorm, Conv2d, ConvTranspose2d, Dense, Layer, LayerStack, Mode, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructorConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels of the stride-2 conv blocks.
    pub encoder: Vec<usize>,
    /// Kernel size of every stride-2 block.
    pub kernel: usize,
    pub bottleneck: usize,
    /// Output channels of the stride-2 transposed-conv blocks; a final 3×3
    /// conv maps the last entry back to `channels`.
    pub decoder: Vec<usize>,
    pub leaky_slope: f32,
    pub clip: (f32, f32),
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

impl ReconstructorConfig {
    pub fn for_input(channels: usize, height: usize, width: usize) -> Self {
        ReconstructorConfig {
            channels,
            height,
            width,
            encoder: vec![32, 64, 128],
            kernel: 5,
            bottleneck: if channels == 1 { 128 } else { 256 },
            decoder: vec![64, 32, 16],
            leaky_slope: 0.2,
            clip: (-1.0, 1.0),
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

pub fn build(cfg: &ReconstructorConfig, rng: &mut impl Rng) -> Result<LayerStack> {
    if cfg.encoder.is_empty() || cfg.encoder.len() != cfg.decoder.len() {
        return Err(OledError::Config(format!(
            "reconstructor encoder/decoder depth differ: {:?} / {:?}",
            cfg.encoder, cfg.decoder
        )));
    }
    let scale = 1usize << cfg.encoder.len();
    if !cfg.height.is_multiple_of(scale) || !cfg.width.is_multiple_of(scale) {
        return Err(OledError::Config(format!(
            "reconstructor input {}×{} not divisible by {scale}",
            cfg.height, cfg.width
        )));
    }
    if cfg.kernel < 2 {
        return Err(OledError::Config(format!("reconstructor kernel {} is below 2", cfg.kernel)));
    }
    // padding and output padding that make every block halve or double exactly
    let (k, pad) = (cfg.kernel, (cfg.kernel - 1) / 2);
    let out_pad = 2 + 2 * pad - k;
    let act = || Layer::LeakyRelu { slope: cfg.leaky_slope };
    let bn = |c| Layer::BatchNorm(BatchNorm::new(c, cfg.bn_eps, cfg.bn_momentum));

    let mut net = LayerStack::new(&[cfg.channels, cfg.height, cfg.width]);
    let mut c = cfg.channels;
    for (i, &out) in cfg.encoder.iter().enumerate() {
        net.push(format!("enc{i}"), Layer::Conv2d(Conv2d::init(c, out, k, 2, pad, rng)))?;
        net.push(format!("enc{i}_bn"), bn(out))?;
        net.push(format!("enc{i}_act"), act())?;
        c = out;
    }
    let grid = net.output_shape().to_vec();
    let flat: usize = grid.iter().product();
    net.push("flatten", Layer::Reshape { shape: vec![flat] })?;
    net.push("bottleneck", Layer::Dense(Dense::init(flat, cfg.bottleneck, rng)))?;
    net.push("expand", Layer::Dense(Dense::init(cfg.bottleneck, flat, rng)))?;
    net.push("expand_bn", bn(flat))?;
    net.push("expand_act", act())?;
    net.push("unflatten", Layer::Reshape { shape: grid })?;
    for (i, &out) in cfg.decoder.iter().enumerate() {
        net.push(format!("dec{i}"), Layer::ConvTranspose2d(ConvTranspose2d::init(c, out, k, 2, pad, out_pad, rng)))?;
        net.push(format!("dec{i}_bn"), bn(out))?;
        net.push(format!("dec{i}_act"), act())?;
        c = out;
    }
    net.push("out", Layer::Conv2d(Conv2d::init(c, cfg.channels, 3, 1, 1, rng)))?;
    net.push(
        "clip",
        Layer::Clip {
            lo: cfg.clip.0,
            hi: cfg.clip.1,
        },
    )?;
    Ok(net)
}

#[derive(Clone, Debug)]
pub struct Reconstructor {
    pub config: ReconstructorConfig,
    pub net: LayerStack,
}

impl Reconstructor {
    pub fn new(config: ReconstructorConfig, rng: &mut impl Rng) -> Result<Self> {
        let net = build(&config, rng)?;
        Ok(Reconstructor { config, net })
    }

    pub fn reconstruct(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<Tape>)> {
        self.net.forward(x, mode)
    }
}

/// Values at the mask's zero positions: channel-major, then row-major.
/// `image` is C×H×W flattened, `mask` is H×W.
pub fn extract_region(image: &[f32], mask: &[f32]) -> Vec<f32> {
    let plane = mask.len();
    image
        .chunks(plane)
        .flat_map(|c| c.iter().zip(mask).filter(|(_, &m)| m == 0.0).map(|(&v, _)| v))
        .collect()
}
