//! Run configuration: one `key = value` per line, `#` starts a comment.
//! Unknown keys are rejected; [`RunConfig::to_text`] writes every key back.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{OledError, Result};
use crate::mask::{GradMode, MaskGeneratorConfig, ThresholdConfig};
use crate::model::{MaskerSpec, ModelSpec};
use crate::nn::AdamConfig;
use crate::reconstructor::ReconstructorConfig;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar,
    Ucsd,
}

impl DatasetKind {
    pub fn channels(self) -> usize {
        match self {
            DatasetKind::Cifar => 3,
            _ => 1,
        }
    }
}

impl FromStr for DatasetKind {
    type Err = OledError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar" => Ok(DatasetKind::Cifar),
            "ucsd" => Ok(DatasetKind::Ucsd),
            other => Err(OledError::Config(format!("unknown dataset '{other}'"))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar => "cifar",
            DatasetKind::Ucsd => "ucsd",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Learned adversarial masks.
    Oled,
    /// Context autoencoder: random square masks, no mask module.
    Cae,
}

impl FromStr for Method {
    type Err = OledError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oled" => Ok(Method::Oled),
            "cae" => Ok(Method::Cae),
            other => Err(OledError::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Oled => "oled",
            Method::Cae => "cae",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub method: Method,
    /// Directory with the four standard MNIST files, pooled into one set.
    pub mnist_dir: Option<PathBuf>,
    /// A single images/labels pair, used when `mnist_dir` is unset.
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub cifar_dir: Option<PathBuf>,
    pub ucsd_train_dir: Option<PathBuf>,
    pub ucsd_test_dir: Option<PathBuf>,
    pub inlier_class: u8,
    pub seed: u64,
    pub output_dir: PathBuf,

    pub keep_fraction: f64,
    pub gamma: f32,
    pub lambda: f32,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_mode: GradMode,
    pub threshold_eps: f32,
    pub val_fraction: f64,

    pub bn_eps: f32,
    pub bn_momentum: f32,
    pub leaky_slope: f32,
    pub r_encoder: Vec<usize>,
    pub r_kernel: usize,
    /// 0 selects 128 for one channel, 256 otherwise.
    pub r_bottleneck: usize,
    pub r_decoder: Vec<usize>,
    pub m_encoder: Vec<usize>,
    pub m_decoder: Vec<usize>,

    pub cae_square: usize,
    /// Caps the number of training images (0 = all).
    pub train_limit: usize,
    pub canvas: usize,
    pub patch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetKind::Mnist,
            method: Method::Oled,
            mnist_dir: None,
            mnist_images: None,
            mnist_labels: None,
            cifar_dir: None,
            ucsd_train_dir: None,
            ucsd_test_dir: None,
            inlier_class: 0,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            keep_fraction: 0.875,
            gamma: 50.0,
            lambda: 1.0,
            learning_rate: 5e-4,
            beta1: 0.5,
            beta2: 0.9,
            adam_eps: 1e-7,
            batch_size: 64,
            epochs: 20,
            grad_mode: GradMode::StraightThrough,
            threshold_eps: 1e-6,
            val_fraction: 0.05,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            leaky_slope: 0.2,
            r_encoder: vec![32, 64, 128],
            r_kernel: 5,
            r_bottleneck: 0,
            r_decoder: vec![64, 32, 16],
            m_encoder: vec![16, 32],
            m_decoder: vec![16],
            cae_square: 10,
            train_limit: 0,
            canvas: 32,
            patch_size: 30,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| OledError::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_value(key, p.trim())).collect()
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| OledError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| OledError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = v.parse()?,
            "method" => self.method = v.parse()?,
            "mnist_dir" => self.mnist_dir = parse_path(v),
            "mnist_images" => self.mnist_images = parse_path(v),
            "mnist_labels" => self.mnist_labels = parse_path(v),
            "cifar_dir" => self.cifar_dir = parse_path(v),
            "ucsd_train_dir" => self.ucsd_train_dir = parse_path(v),
            "ucsd_test_dir" => self.ucsd_test_dir = parse_path(v),
            "inlier_class" => self.inlier_class = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "keep_fraction" => self.keep_fraction = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "adam_eps" => self.adam_eps = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "grad_mode" => self.grad_mode = v.parse()?,
            "threshold_eps" => self.threshold_eps = parse_value(key, v)?,
            "val_fraction" => self.val_fraction = parse_value(key, v)?,
            "bn_eps" => self.bn_eps = parse_value(key, v)?,
            "bn_momentum" => self.bn_momentum = parse_value(key, v)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, v)?,
            "r_encoder" => self.r_encoder = parse_list(key, v)?,
            "r_kernel" => self.r_kernel = parse_value(key, v)?,
            "r_bottleneck" => self.r_bottleneck = parse_value(key, v)?,
            "r_decoder" => self.r_decoder = parse_list(key, v)?,
            "m_encoder" => self.m_encoder = parse_list(key, v)?,
            "m_decoder" => self.m_decoder = parse_list(key, v)?,
            "cae_square" => self.cae_square = parse_value(key, v)?,
            "train_limit" => self.train_limit = parse_value(key, v)?,
            "canvas" => self.canvas = parse_value(key, v)?,
            "patch_size" => self.patch_size = parse_value(key, v)?,
            other => return Err(OledError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.threshold().validate()?;
        if self.inlier_class > 9 {
            return Err(OledError::Config(format!("inlier_class {} outside 0..=9", self.inlier_class)));
        }
        if self.batch_size < 2 {
            return Err(OledError::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(OledError::Config("val_fraction must lie in [0, 0.5)".into()));
        }
        if self.gamma < 0.0 || self.lambda < 0.0 {
            return Err(OledError::Config("loss weights must be non-negative".into()));
        }
        if self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(OledError::Config("invalid Adam hyperparameters".into()));
        }
        if !(2..=7).contains(&self.r_kernel) {
            return Err(OledError::Config(format!("r_kernel {} outside 2..=7", self.r_kernel)));
        }
        if self.cae_square == 0 || self.cae_square > self.canvas {
            return Err(OledError::Config(format!(
                "cae_square {} does not fit a {} canvas",
                self.cae_square, self.canvas
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("dataset", self.dataset.to_string());
        put("method", self.method.to_string());
        put("mnist_dir", show_path(&self.mnist_dir));
        put("mnist_images", show_path(&self.mnist_images));
        put("mnist_labels", show_path(&self.mnist_labels));
        put("cifar_dir", show_path(&self.cifar_dir));
        put("ucsd_train_dir", show_path(&self.ucsd_train_dir));
        put("ucsd_test_dir", show_path(&self.ucsd_test_dir));
        put("inlier_class", self.inlier_class.to_string());
        put("seed", self.seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("keep_fraction", self.keep_fraction.to_string());
        put("gamma", self.gamma.to_string());
        put("lambda", self.lambda.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("adam_eps", self.adam_eps.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("grad_mode", self.grad_mode.to_string());
        put("threshold_eps", self.threshold_eps.to_string());
        put("val_fraction", self.val_fraction.to_string());
        put("bn_eps", self.bn_eps.to_string());
        put("bn_momentum", self.bn_momentum.to_string());
        put("leaky_slope", self.leaky_slope.to_string());
        put("r_encoder", join(&self.r_encoder));
        put("r_kernel", self.r_kernel.to_string());
        put("r_bottleneck", self.r_bottleneck.to_string());
        put("r_decoder", join(&self.r_decoder));
        put("m_encoder", join(&self.m_encoder));
        put("m_decoder", join(&self.m_decoder));
        put("cae_square", self.cae_square.to_string());
        put("train_limit", self.train_limit.to_string());
        put("canvas", self.canvas.to_string());
        put("patch_size", self.patch_size.to_string());
        s
    }

    pub fn threshold(&self) -> ThresholdConfig {
        ThresholdConfig {
            keep_fraction: self.keep_fraction,
            eps: self.threshold_eps,
            grad_mode: self.grad_mode,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            adam: self.adam(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    /// Network shapes follow from the dataset's channel count and the canvas.
    pub fn model_spec(&self) -> ModelSpec {
        let c = self.dataset.channels();
        let mut r = ReconstructorConfig::for_input(c, self.canvas, self.canvas);
        r.encoder = self.r_encoder.clone();
        r.decoder = self.r_decoder.clone();
        r.kernel = self.r_kernel;
        if self.r_bottleneck > 0 {
            r.bottleneck = self.r_bottleneck;
        }
        r.leaky_slope = self.leaky_slope;
        r.bn_eps = self.bn_eps;
        r.bn_momentum = self.bn_momentum;
        let masker = match self.method {
            Method::Oled => {
                let mut m = MaskGeneratorConfig::for_input(c, self.canvas, self.canvas);
                m.encoder = self.m_encoder.clone();
                m.decoder = self.m_decoder.clone();
                m.leaky_slope = self.leaky_slope;
                m.bn_eps = self.bn_eps;
                m.bn_momentum = self.bn_momentum;
                MaskerSpec::Learned(m, self.threshold())
            }
            Method::Cae => MaskerSpec::RandomSquare {
                size: self.cae_square,
                seed: self.seed,
            },
        };
        ModelSpec {
            reconstructor: r,
            masker,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.keep_fraction, 0.875);
        assert_eq!((c.gamma, c.lambda), (50.0, 1.0));
        assert_eq!((c.learning_rate, c.beta1, c.beta2), (5e-4, 0.5, 0.9));
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.mnist_images = Some("data/mnist/t10k-images-idx3-ubyte".into());
        c.seed = 17;
        c.r_encoder = vec![8, 16, 32];
        c.learning_rate = 1.2345678e-4;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# header\n\nseed = 4   # trailing\n inlier_class=8\n").unwrap();
        assert_eq!((c.seed, c.inlier_class), (4, 8));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::parse("sead = 4\n").unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::parse("keep_fraction = 0\n").is_err());
        assert!(RunConfig::parse("grad_mode = magic\n").is_err());
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("r_encoder = 1,x\n").is_err());
    }
}
