use oled::data::checkpoint::Checkpoint;
use oled::data::protocol::build_mnist_protocol;
use oled::data::{Geometry, RawDataset};
use oled::mask::{GradMode, MaskBatch, MaskGeneratorConfig, MaskModule, ThresholdConfig};
use oled::model::{MaskerSpec, Model, ModelSpec};
use oled::nn::{Conv2d, Layer, LayerStack, Mode};
use oled::reconstructor::{extract_region, Reconstructor, ReconstructorConfig};
use oled::scoring::{score_samples, segmentation_eval};
use oled::training::{compute_losses, train, train_cae_baseline, TrainConfig, Trainer};
use oled::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 16;

fn small_spec(keep: f64, seed: u64) -> ModelSpec {
    let mut r = ReconstructorConfig::for_input(1, SIDE, SIDE);
    r.encoder = vec![8, 16];
    r.decoder = vec![16, 8];
    r.kernel = 3;
    r.bottleneck = 16;
    let mut m = MaskGeneratorConfig::for_input(1, SIDE, SIDE);
    m.encoder = vec![4, 8];
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

/// Bright blobs on a dark background, loosely digit-like.
fn blobs(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::full(&[n, 1, SIDE, SIDE], -1.0);
    for i in 0..n {
        let (cy, cx) = (rng.gen_range(5.0..11.0f32), rng.gen_range(5.0..11.0f32));
        let r = rng.gen_range(2.5..4.5f32);
        for (p, v) in t.sample_mut(i).iter_mut().enumerate() {
            let (y, x) = ((p / SIDE) as f32, (p % SIDE) as f32);
            let d = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
            if d < r {
                *v = 1.0 - d / r;
            }
        }
    }
    t
}

#[test]
fn reconstruction_range_and_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = Reconstructor::new(ReconstructorConfig::for_input(1, 32, 32), &mut rng).unwrap();
    for n in [1, 7] {
        let x = Tensor::from_fn(&[n, 1, 32, 32], |i| ((i * 7919) % 200) as f32 / 100.0 - 1.0);
        for mode in [Mode::Train, Mode::Infer] {
            let (y, _) = r.reconstruct(&x, mode).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn region_lengths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mask: Vec<f32> = (0..64).map(|_| rng.gen_range(0..2) as f32).collect();
        let x: Vec<f32> = (0..192).map(|i| i as f32).collect();
        let y: Vec<f32> = (0..192).map(|i| -(i as f32)).collect();
        let k = mask.iter().filter(|&&m| m == 0.0).count();
        assert_eq!(extract_region(&x, &mask).len(), 3 * k);
        assert_eq!(extract_region(&y, &mask).len(), 3 * k);
    }
    assert!(extract_region(&[0.3; 4], &[1.0; 4]).is_empty());
    assert_eq!(extract_region(&[0.7, 0.1, 0.2, 0.3], &[0.0, 1.0, 1.0, 1.0]), vec![0.7]);
}

#[test]
fn overfits_a_single_image() {
    let x = Tensor::concat(&[&blobs(1, 4); 4]).unwrap();
    let cfg = TrainConfig {
        adam: oled::nn::AdamConfig {
            lr: 2e-3,
            ..Default::default()
        },
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(Model::new(&small_spec(1.0, 1)).unwrap(), cfg);
    for _ in 0..300 {
        t.reconstructor_step(&x).unwrap();
    }
    let y = t.model.reconstructor.net.infer(&x.select(&[0])).unwrap();
    let mse = x.sample(0).iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f32>() / y.len() as f32;
    assert!(mse < 0.01, "mse {mse}");
}

fn fraction_monotone(values: &[f64], increasing: bool) -> f64 {
    let ok = values
        .windows(2)
        .filter(|w| if increasing { w[1] >= w[0] } else { w[1] <= w[0] })
        .count();
    ok as f64 / (values.len() - 1) as f64
}

#[test]
fn reconstructor_descends_with_masks_frozen() {
    let x = blobs(16, 10);
    let mut t = Trainer::new(Model::new(&small_spec(0.875, 2)).unwrap(), TrainConfig::default());
    let losses: Vec<f64> = (0..51).map(|_| t.reconstructor_step(&x).unwrap().total()).collect();
    let frac = fraction_monotone(&losses, false);
    assert!(frac >= 0.8, "non-increasing in {frac} of steps: {losses:?}");
}

fn mask_module_window(seed: u64) -> Vec<f64> {
    let x = blobs(16, 11 + seed);
    let mut t = Trainer::new(Model::new(&small_spec(0.875, seed)).unwrap(), TrainConfig::default());
    for _ in 0..30 {
        t.reconstructor_step(&x).unwrap();
    }
    (0..51)
        .map(|_| t.mask_module_step(&x).unwrap().unwrap().adversarial())
        .collect()
}

#[test]
fn mask_module_ascends_with_reconstructor_frozen() {
    let objective = mask_module_window(5);
    let frac = fraction_monotone(&objective, true);
    assert!(frac >= 0.8, "non-decreasing in {frac} of steps: {objective:?}");
}

#[test]
fn mask_module_gains_over_the_window() {
    for seed in 0..6 {
        let objective = mask_module_window(seed);
        assert!(objective[50] > objective[0], "seed {seed}: {objective:?}");
    }
}

fn toy_dataset(per_class: usize) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10 * per_class;
    let mut images = Vec::with_capacity(n * 144);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 10) as u8;
        labels.push(class);
        for p in 0..144 {
            let (y, x) = (p / 12, p % 12);
            // each class lights a different stripe
            let lit = (y + x * class as usize / 3) % 10 < 3;
            images.push(if lit { rng.gen_range(180..=255) } else { 0 });
        }
    }
    RawDataset {
        channels: 1,
        height: 12,
        width: 12,
        images,
        labels,
    }
}

fn toy_split() -> oled::data::DatasetSplit {
    build_mnist_protocol(&toy_dataset(60), 3, 0, 0.1, SIDE).unwrap()
}

fn short_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn two_epochs_give_two_records() {
    let mut split = toy_split();
    split.train = split.train.select(&(0..32).collect::<Vec<_>>());
    let out = train(&split, &small_spec(0.875, 0), &short_config(2), None, |_| {}).unwrap();
    assert_eq!(out.records.len(), 2);
    assert!([1, 2].contains(&out.best_epoch));
    assert!(out.records.iter().all(|r| r.val_auc.iter().all(|a| a.is_some())));
}

#[test]
fn training_is_deterministic() {
    let mut split = toy_split();
    split.train = split.train.select(&(0..32).collect::<Vec<_>>());
    let run = || train(&split, &small_spec(0.875, 5), &short_config(2), None, |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
    assert_eq!(a.best.to_checkpoint(""), b.best.to_checkpoint(""));
}

#[test]
fn empty_split_is_rejected() {
    let mut split = toy_split();
    split.train = split.train.select(&[]);
    assert!(train(&split, &small_spec(0.875, 0), &short_config(1), None, |_| {}).is_err());
}

#[test]
fn cae_baseline_needs_square_masker() {
    let split = toy_split();
    assert!(train_cae_baseline(&split, &small_spec(0.875, 0), &short_config(1), None, |_| {}).is_err());
    let mut spec = small_spec(0.875, 0);
    spec.masker = MaskerSpec::RandomSquare { size: 10, seed: 0 };
    let out = train_cae_baseline(&split, &spec, &short_config(1), None, |_| {}).unwrap();
    assert_eq!(out.records.len(), 1);
}

fn trained_model() -> Model {
    let split = toy_split();
    train(&split, &small_spec(0.875, 8), &short_config(40), None, |_| {}).unwrap().last
}

#[test]
fn scoring_consistency() {
    let model = trained_model();
    let split = toy_split();
    let x = split.test.select(&[0, 1, 0]);
    let raw = score_samples(&model, &x, 0).unwrap();
    assert_eq!(raw.e_mask[0], raw.e_mask[2]);
    assert_eq!(raw.e_cont[0], raw.e_cont[2]);
    assert_eq!(raw.e_rec[0], raw.e_rec[2]);

    let single = x.select(&[1]);
    let y = model.reconstructor.net.infer(&single).unwrap();
    let ones = MaskBatch::from_masks(Tensor::full(&[1, 1, SIDE, SIDE], 1.0)).unwrap();
    let l = compute_losses(&single, &y, &y, &ones, 50.0, 1.0).unwrap();
    assert_eq!(l.l_rec, raw.e_rec[1]);
}

#[test]
fn corrupted_inlier_scores_higher() {
    let model = trained_model();
    let split = toy_split();
    let inliers: Vec<usize> = (0..split.test.batch()).filter(|&i| !split.test_labels[i]).take(8).collect();
    let clean = split.test.select(&inliers);
    let mut broken = clean.clone();
    for i in 0..broken.batch() {
        let s = broken.sample_mut(i);
        let half = s.len() / 2;
        s[..half].fill(0.0);
    }
    let (a, b) = (score_samples(&model, &clean, 0).unwrap(), score_samples(&model, &broken, 0).unwrap());
    for i in 0..inliers.len() {
        assert!(b.e_mask[i] > a.e_mask[i], "sample {i}: {} vs {}", b.e_mask[i], a.e_mask[i]);
    }
}

#[test]
fn checkpoint_roundtrip_reproduces_scores() {
    let model = trained_model();
    let split = toy_split();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.to_checkpoint("seed = 8\n").save(&path).unwrap();
    let mut restored = Model::new(&small_spec(0.875, 1234)).unwrap();
    restored.load_state(&Checkpoint::load(&path).unwrap()).unwrap();
    let x = split.test.select(&(0..20).collect::<Vec<_>>());
    assert_eq!(score_samples(&model, &x, 0).unwrap(), score_samples(&restored, &x, 0).unwrap());
}

#[test]
fn threaded_scoring_matches_sequential() {
    let model = trained_model();
    let split = toy_split();
    let seq = score_samples(&model, &split.test, 0).unwrap();
    std::env::set_var("OLED_THREADS", "3");
    let par = score_samples(&model, &split.test, 0).unwrap();
    std::env::remove_var("OLED_THREADS");
    assert_eq!(seq, par);
}

/// Generator computing `relu(w·x + b)` with a single 1×1 convolution.
fn affine_mask_module(w: f32, b: f32) -> MaskModule {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut conv = Conv2d::init(1, 1, 1, 1, 0, &mut rng);
    conv.weight.data_mut()[0] = w;
    conv.bias.data_mut()[0] = b;
    let generator = LayerStack::new(&[1, 4, 4])
        .with("conv", Layer::Conv2d(conv))
        .unwrap()
        .with("act", Layer::Relu)
        .unwrap();
    MaskModule {
        generator,
        threshold: ThresholdConfig::default(),
    }
}

#[test]
fn segmentation_auc_extremes() {
    let geometry = Geometry {
        channels: 1,
        height: 2,
        width: 2,
        canvas_h: 4,
        canvas_w: 4,
    };
    let raw: Vec<u8> = vec![0, 255, 255, 0, 255, 0, 0, 0, 0, 0, 0, 0];
    let images = Tensor::new(
        vec![3, 1, 4, 4],
        raw.chunks(4)
            .flat_map(|img| oled::data::to_canvas(img, 1, 2, 2, 4, 4))
            .collect(),
    )
    .unwrap();
    let labels = [false, true, false];
    // activation = x + 1 = 2·foreground on binary images
    let exact = segmentation_eval(&affine_mask_module(1.0, 1.0), &images, &raw, &geometry, &labels).unwrap();
    assert_eq!((exact.inlier_mean_auc, exact.outlier_mean_auc), (1.0, 1.0));
    assert_eq!(exact.skipped, 1);
    let flat = segmentation_eval(&affine_mask_module(0.0, 0.5), &images, &raw, &geometry, &labels).unwrap();
    assert_eq!((flat.inlier_mean_auc, flat.outlier_mean_auc), (0.5, 0.5));
}
