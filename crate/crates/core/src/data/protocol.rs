//! One-class evaluation protocols: which images train the model, which
//! select the epoch, and which are scored.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::patches::extract_patches;
use super::pgm::Frame;
use super::{to_canvas, RawDataset};
use crate::error::{OledError, Result};
use crate::tensor::Tensor;

/// Original image geometry and the canvas it is centred on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub canvas_h: usize,
    pub canvas_w: usize,
}

impl Geometry {
    pub fn offset(&self) -> (usize, usize) {
        ((self.canvas_h - self.height) / 2, (self.canvas_w - self.width) / 2)
    }

    pub fn tensor_shape(&self, n: usize) -> [usize; 4] {
        [n, self.channels, self.canvas_h, self.canvas_w]
    }

    fn raw_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMeta {
    pub protocol: String,
    pub inlier_class: Option<u8>,
    pub seed: u64,
    /// Inliers available for training before the validation carve-out.
    pub train_pool: usize,
    pub train: usize,
    pub val_inliers: usize,
    pub val_outliers: usize,
    pub test_inliers: usize,
    pub test_outliers: usize,
    pub train_hash: String,
    pub val_hash: String,
    pub test_hash: String,
}

impl SplitMeta {
    /// Line-based `key=value` rendering.
    pub fn to_text(&self) -> String {
        let class = self.inlier_class.map_or("none".to_string(), |c| c.to_string());
        format!(
            "protocol={}\ninlier_class={}\nseed={}\ntrain_pool={}\ntrain={}\nval_inliers={}\nval_outliers={}\n\
             test_inliers={}\ntest_outliers={}\ntrain_hash={}\nval_hash={}\ntest_hash={}\n",
            self.protocol,
            class,
            self.seed,
            self.train_pool,
            self.train,
            self.val_inliers,
            self.val_outliers,
            self.test_inliers,
            self.test_outliers,
            self.train_hash,
            self.val_hash,
            self.test_hash
        )
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub geometry: Geometry,
    /// Inliers only, normalized to [−1, 1] on the canvas.
    pub train: Tensor,
    pub val: Tensor,
    pub val_labels: Vec<bool>,
    pub test: Tensor,
    /// `true` marks an outlier.
    pub test_labels: Vec<bool>,
    /// For patch protocols, the frame each test sample was cut from.
    pub test_groups: Option<Vec<usize>>,
    /// Original 8-bit test images (un-padded), used by segmentation checks.
    pub test_raw: Vec<u8>,
    pub meta: SplitMeta,
}

fn index_hash(idx: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in idx {
        h.update((i as u32).to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn gather(raw: &RawDataset, idx: &[usize], g: &Geometry) -> (Tensor, Vec<u8>) {
    let mut data = Vec::with_capacity(idx.len() * g.channels * g.canvas_h * g.canvas_w);
    let mut bytes = Vec::with_capacity(idx.len() * g.raw_len());
    for &i in idx {
        let img = raw.image(i);
        data.extend(to_canvas(img, g.channels, g.height, g.width, g.canvas_h, g.canvas_w));
        bytes.extend_from_slice(img);
    }
    (Tensor::new(g.tensor_shape(idx.len()).to_vec(), data).expect("sized by geometry"), bytes)
}

fn geometry(raw: &RawDataset, canvas: usize) -> Result<Geometry> {
    if raw.height > canvas || raw.width > canvas {
        return Err(OledError::Dataset(format!(
            "{}×{} images do not fit a {canvas}×{canvas} canvas",
            raw.height, raw.width
        )));
    }
    Ok(Geometry {
        channels: raw.channels,
        height: raw.height,
        width: raw.width,
        canvas_h: canvas,
        canvas_w: canvas,
    })
}

fn round(v: f64) -> usize {
    v.round() as usize
}

fn check_class(raw: &RawDataset, class: u8) -> Result<()> {
    if class > 9 {
        return Err(OledError::Dataset(format!("inlier class {class} outside 0..=9")));
    }
    if !raw.labels.contains(&class) {
        return Err(OledError::Dataset(format!("class {class} absent from dataset")));
    }
    Ok(())
}

/// Pooled single-source protocol: the class's images are split 2:1 into
/// train/test, and outliers from the other classes are added so they form
/// 30% of the test set. A `val_fraction` share of the training inliers plus
/// an equal number of further outliers (disjoint from test) form the
/// validation set.
pub fn build_mnist_protocol(raw: &RawDataset, inlier_class: u8, seed: u64, val_fraction: f64, canvas: usize) -> Result<DatasetSplit> {
    check_class(raw, inlier_class)?;
    let g = geometry(raw, canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inliers: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] == inlier_class).collect();
    let mut outliers: Vec<usize> = (0..raw.len()).filter(|&i| raw.labels[i] != inlier_class).collect();
    inliers.shuffle(&mut rng);
    outliers.shuffle(&mut rng);

    let n = inliers.len();
    let train_pool = round(n as f64 * 2.0 / 3.0);
    let test_in = n - train_pool;
    let test_out = round(test_in as f64 * 3.0 / 7.0);
    let val_n = round(train_pool as f64 * val_fraction);
    if test_out + val_n > outliers.len() {
        return Err(OledError::Dataset(format!(
            "need {} outliers, only {} available",
            test_out + val_n,
            outliers.len()
        )));
    }
    let train_idx = &inliers[..train_pool - val_n];
    let val_in_idx = &inliers[train_pool - val_n..train_pool];
    let test_in_idx = &inliers[train_pool..];
    let test_out_idx = &outliers[..test_out];
    let val_out_idx = &outliers[test_out..test_out + val_n];

    let val_idx: Vec<usize> = val_in_idx.iter().chain(val_out_idx).copied().collect();
    let test_idx: Vec<usize> = test_in_idx.iter().chain(test_out_idx).copied().collect();
    let (train, _) = gather(raw, train_idx, &g);
    let (val, _) = gather(raw, &val_idx, &g);
    let (test, test_raw) = gather(raw, &test_idx, &g);
    Ok(DatasetSplit {
        geometry: g,
        train,
        val,
        val_labels: (0..val_idx.len()).map(|i| i >= val_n).collect(),
        test,
        test_labels: (0..test_idx.len()).map(|i| i >= test_in).collect(),
        test_groups: None,
        test_raw,
        meta: SplitMeta {
            protocol: "mnist".into(),
            inlier_class: Some(inlier_class),
            seed,
            train_pool,
            train: train_idx.len(),
            val_inliers: val_n,
            val_outliers: val_n,
            test_inliers: test_in,
            test_outliers: test_out,
            train_hash: index_hash(train_idx),
            val_hash: index_hash(&val_idx),
            test_hash: index_hash(&test_idx),
        },
    })
}

/// Predefined-split protocol: the class's training images train the model
/// (minus a validation share), every test image is scored.
pub fn build_cifar_protocol(
    train_raw: &RawDataset,
    test_raw: &RawDataset,
    inlier_class: u8,
    seed: u64,
    val_fraction: f64,
    canvas: usize,
) -> Result<DatasetSplit> {
    check_class(train_raw, inlier_class)?;
    check_class(test_raw, inlier_class)?;
    let g = geometry(train_raw, canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inliers: Vec<usize> = (0..train_raw.len()).filter(|&i| train_raw.labels[i] == inlier_class).collect();
    let mut outliers: Vec<usize> = (0..train_raw.len()).filter(|&i| train_raw.labels[i] != inlier_class).collect();
    inliers.shuffle(&mut rng);
    outliers.shuffle(&mut rng);
    let pool = inliers.len();
    let val_n = round(pool as f64 * val_fraction).min(outliers.len());
    let train_idx = &inliers[..pool - val_n];
    let val_idx: Vec<usize> = inliers[pool - val_n..].iter().chain(&outliers[..val_n]).copied().collect();
    let test_idx: Vec<usize> = (0..test_raw.len()).collect();
    let test_labels: Vec<bool> = test_raw.labels.iter().map(|&l| l != inlier_class).collect();
    let test_out = test_labels.iter().filter(|&&o| o).count();

    let (train, _) = gather(train_raw, train_idx, &g);
    let (val, _) = gather(train_raw, &val_idx, &g);
    let (test, test_bytes) = gather(test_raw, &test_idx, &g);
    Ok(DatasetSplit {
        geometry: g,
        train,
        val,
        val_labels: (0..val_idx.len()).map(|i| i >= val_n).collect(),
        test,
        test_labels,
        test_groups: None,
        test_raw: test_bytes,
        meta: SplitMeta {
            protocol: "cifar".into(),
            inlier_class: Some(inlier_class),
            seed,
            train_pool: pool,
            train: train_idx.len(),
            val_inliers: val_n,
            val_outliers: val_n,
            test_inliers: test_idx.len() - test_out,
            test_outliers: test_out,
            train_hash: index_hash(train_idx),
            val_hash: index_hash(&val_idx),
            test_hash: index_hash(&test_idx),
        },
    })
}

/// Video protocol: every frame is cut into `patch`×`patch` tiles. Training
/// frames contribute inlier tiles; test tiles inherit their frame's label
/// and remember their frame for frame-level scoring. There are no labelled
/// outliers outside the test set, so the validation set holds inliers only.
pub fn build_ucsd_protocol(
    train_frames: &[Frame],
    test_frames: &[(Frame, bool)],
    patch: usize,
    canvas: usize,
    seed: u64,
    val_fraction: f64,
) -> Result<DatasetSplit> {
    if train_frames.is_empty() || test_frames.is_empty() {
        return Err(OledError::Dataset("UCSD protocol needs training and test frames".into()));
    }
    let g = Geometry {
        channels: 1,
        height: patch,
        width: patch,
        canvas_h: canvas,
        canvas_w: canvas,
    };
    if patch > canvas {
        return Err(OledError::Dataset(format!("{patch}px patches do not fit a {canvas}px canvas")));
    }
    let mut train_patches = Vec::new();
    for f in train_frames {
        train_patches.extend(extract_patches(f, patch)?);
    }
    let mut order: Vec<usize> = (0..train_patches.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val_n = round(order.len() as f64 * val_fraction);
    let pool = order.len();

    let mut test_patches = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (fi, (f, outlier)) in test_frames.iter().enumerate() {
        for p in extract_patches(f, patch)? {
            test_patches.push(p);
            labels.push(*outlier);
            groups.push(fi);
        }
    }
    let to_raw = |ps: Vec<Vec<u8>>| RawDataset {
        channels: 1,
        height: patch,
        width: patch,
        labels: vec![0; ps.len()],
        images: ps.concat(),
    };
    let train_raw = to_raw(train_patches);
    let test_raw = to_raw(test_patches);
    let train_idx = &order[..pool - val_n];
    let val_idx = &order[pool - val_n..];
    let test_idx: Vec<usize> = (0..test_raw.len()).collect();
    let (train, _) = gather(&train_raw, train_idx, &g);
    let (val, _) = gather(&train_raw, val_idx, &g);
    let (test, test_bytes) = gather(&test_raw, &test_idx, &g);
    let test_out_frames = test_frames.iter().filter(|(_, o)| *o).count();
    Ok(DatasetSplit {
        geometry: g,
        train,
        val,
        val_labels: vec![false; val_n],
        test,
        test_labels: labels,
        test_groups: Some(groups),
        test_raw: test_bytes,
        meta: SplitMeta {
            protocol: "ucsd".into(),
            inlier_class: None,
            seed,
            train_pool: pool,
            train: train_idx.len(),
            val_inliers: val_n,
            val_outliers: 0,
            test_inliers: test_frames.len() - test_out_frames,
            test_outliers: test_out_frames,
            train_hash: index_hash(train_idx),
            val_hash: index_hash(val_idx),
            test_hash: index_hash(&test_idx),
        },
    })
}
