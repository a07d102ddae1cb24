//! A reconstructor paired with the component that masks its input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::checkpoint::Checkpoint;
use crate::error::{OledError, Result};
use crate::mask::{MaskBatch, MaskGeneratorConfig, MaskModule, ThresholdConfig};
use crate::reconstructor::{Reconstructor, ReconstructorConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum MaskerSpec {
    Learned(MaskGeneratorConfig, ThresholdConfig),
    RandomSquare { size: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub reconstructor: ReconstructorConfig,
    pub masker: MaskerSpec,
    /// Seeds weight initialization.
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum Masker {
    Learned(MaskModule),
    /// Context-autoencoder masks: one zeroed square per image. At scoring
    /// time the square position is a pure function of `seed` and sample id.
    RandomSquare { size: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub reconstructor: Reconstructor,
    pub masker: Masker,
}

const R_PREFIX: &str = "r/";
const M_PREFIX: &str = "m/";

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let reconstructor = Reconstructor::new(spec.reconstructor.clone(), &mut rng)?;
        let masker = match &spec.masker {
            MaskerSpec::Learned(m, t) => Masker::Learned(MaskModule::new(m, *t, &mut rng)?),
            &MaskerSpec::RandomSquare { size, seed } => {
                let c = &spec.reconstructor;
                if size == 0 || size > c.height || size > c.width {
                    return Err(OledError::Config(format!(
                        "{size}×{size} square does not fit {}×{} images",
                        c.height, c.width
                    )));
                }
                Masker::RandomSquare { size, seed }
            }
        };
        Ok(Model { reconstructor, masker })
    }

    pub fn mask_module(&self) -> Option<&MaskModule> {
        match &self.masker {
            Masker::Learned(m) => Some(m),
            Masker::RandomSquare { .. } => None,
        }
    }

    /// Inference masks; `ids` identify samples for the random-square masker.
    pub fn masks(&self, x: &Tensor, ids: &[u64]) -> Result<MaskBatch> {
        match &self.masker {
            Masker::Learned(m) => Ok(m.masks(x)?.1),
            &Masker::RandomSquare { size, seed } => {
                let s = x.shape();
                let mut batch = Tensor::full(&[s[0], 1, s[2], s[3]], 1.0);
                for (i, &id) in ids.iter().enumerate().take(s[0]) {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(id);
                    paint_square(batch.sample_mut(i), s[3], square_position(&mut rng, s[2], s[3], size), size);
                }
                MaskBatch::from_masks(batch)
            }
        }
    }

    pub fn to_checkpoint(&self, config: &str) -> Checkpoint {
        let mut c = Checkpoint::new(config);
        for (n, t) in self.reconstructor.net.state() {
            c.push(format!("{R_PREFIX}{n}"), t.clone());
        }
        if let Some(m) = self.mask_module() {
            for (n, t) in m.generator.state() {
                c.push(format!("{M_PREFIX}{n}"), t.clone());
            }
        }
        c
    }

    /// Overwrites every state tensor from the checkpoint, which must cover
    /// the model exactly.
    pub fn load_state(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let expected = self.to_checkpoint("").tensors.len();
        if ckpt.tensors.len() != expected {
            return Err(OledError::Config(format!(
                "checkpoint holds {} tensors, model has {expected}",
                ckpt.tensors.len()
            )));
        }
        for (n, t) in ckpt.with_prefix(R_PREFIX) {
            self.reconstructor.net.set_state(n, t.clone())?;
        }
        if let Masker::Learned(m) = &mut self.masker {
            for (n, t) in ckpt.with_prefix(M_PREFIX) {
                m.generator.set_state(n, t.clone())?;
            }
        }
        Ok(())
    }
}

/// Uniform top-left corner of a `size`×`size` square inside `h`×`w`.
pub fn square_position(rng: &mut impl Rng, h: usize, w: usize, size: usize) -> (usize, usize) {
    (rng.gen_range(0..=h - size), rng.gen_range(0..=w - size))
}

/// Zeroes a square in a single-channel H×W mask.
pub fn paint_square(mask: &mut [f32], width: usize, (y0, x0): (usize, usize), size: usize) {
    for y in y0..y0 + size {
        mask[y * width + x0..y * width + x0 + size].fill(0.0);
    }
}

/// One random square per image drawn from `rng`.
pub fn random_square_masks(n: usize, h: usize, w: usize, size: usize, rng: &mut impl Rng) -> Result<MaskBatch> {
    if size == 0 || size > h || size > w {
        return Err(OledError::Config(format!("{size}×{size} square does not fit {h}×{w} images")));
    }
    let mut masks = Tensor::full(&[n, 1, h, w], 1.0);
    for i in 0..n {
        let pos = square_position(rng, h, w, size);
        paint_square(masks.sample_mut(i), w, pos, size);
    }
    MaskBatch::from_masks(masks)
}
