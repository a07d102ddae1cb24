use oled::data::checkpoint::Checkpoint;
use oled::data::patches::{assemble_patches, extract_patches};
use oled::data::pgm::Frame;
use oled::mask::{apply_mask, threshold, ThresholdConfig};
use oled::metrics::{auc, eer, roc_curve};
use oled::nn::{Conv2d, ConvTranspose2d, Layer};
use oled::scoring::minmax_scale;
use oled::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Evaluates every candidate threshold by direct counting and interpolates
/// the first sign change of FPR − FNR.
fn sweep_eer(scores: &[f64], labels: &[bool]) -> f64 {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.push(f64::INFINITY);
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
            let fneg = scores.iter().zip(labels).filter(|(&s, &l)| l && s < t).count() as f64;
            (fp / neg, fneg / pos)
        })
        .collect();
    for w in pts.windows(2) {
        let ((f0, n0), (f1, n1)) = (w[0], w[1]);
        let (d0, d1) = (f0 - n0, f1 - n1);
        if d1 >= 0.0 {
            if d0 >= 0.0 || d0 == d1 {
                return f0;
            }
            return f0 + (-d0 / (d1 - d0)) * (f1 - f0);
        }
    }
    pts.last().unwrap().0
}

/// Scores drawn from a small grid so ties are common; both classes present.
fn scored_labels(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2..max)
        .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s.into_iter().map(|v| v as f64 * 0.25).collect(), l)
        })
}

fn activation_maps() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
        // a small value alphabet forces ties
        (Just(h), Just(w), prop::collection::vec((0u8..6).prop_map(|v| v as f32 * 0.5), h * w))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mask_has_exact_cardinality((h, w, a) in activation_maps(), t in 0.01f64..=1.0) {
        let cfg = ThresholdConfig { keep_fraction: t, ..ThresholdConfig::default() };
        let mb = threshold(&Tensor::new(vec![1, 1, h, w], a).unwrap(), &cfg).unwrap();
        let zeros = mb.masks.data().iter().filter(|&&v| v == 0.0).count();
        prop_assert_eq!(zeros, cfg.masked_count(h * w));
        prop_assert!(mb.masks.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn masked_pixels_dominate_kept_pixels((h, w, a) in activation_maps(), t in 0.01f64..1.0) {
        let cfg = ThresholdConfig { keep_fraction: t, ..ThresholdConfig::default() };
        let mb = threshold(&Tensor::new(vec![1, 1, h, w], a.clone()).unwrap(), &cfg).unwrap();
        let m = mb.masks.data();
        for i in 0..a.len() {
            for j in 0..a.len() {
                if m[i] == 0.0 && m[j] == 1.0 {
                    // a masked pixel never loses to a kept one, and wins ties by index
                    prop_assert!(a[i] > a[j] || (a[i] == a[j] && i < j));
                }
            }
        }
    }

    #[test]
    fn mask_invariant_under_increasing_transform((h, w, a) in activation_maps(), t in 0.01f64..=1.0) {
        let cfg = ThresholdConfig { keep_fraction: t, ..ThresholdConfig::default() };
        let base = threshold(&Tensor::new(vec![1, 1, h, w], a.clone()).unwrap(), &cfg).unwrap();
        let warped: Vec<f32> = a.iter().map(|&v| (v * 3.0 + 1.0).powi(3)).collect();
        let other = threshold(&Tensor::new(vec![1, 1, h, w], warped).unwrap(), &cfg).unwrap();
        prop_assert_eq!(base.masks, other.masks);
    }

    #[test]
    fn thresholding_a_mask_masks_the_same_count((h, w, a) in activation_maps(), t in 0.01f64..=1.0) {
        let cfg = ThresholdConfig { keep_fraction: t, ..ThresholdConfig::default() };
        let first = threshold(&Tensor::new(vec![1, 1, h, w], a).unwrap(), &cfg).unwrap();
        let second = threshold(&first.masks, &cfg).unwrap();
        prop_assert_eq!(
            second.masks.data().iter().filter(|&&v| v == 0.0).count(),
            first.masks.data().iter().filter(|&&v| v == 0.0).count()
        );
    }

    #[test]
    fn apply_mask_keeps_unmasked_pixels(
        (h, w, a) in activation_maps(),
        c in 1usize..4,
        seed in any::<u64>(),
    ) {
        let cfg = ThresholdConfig { keep_fraction: 0.6, ..ThresholdConfig::default() };
        let mb = threshold(&Tensor::new(vec![1, 1, h, w], a).unwrap(), &cfg).unwrap();
        let x = Tensor::from_fn(&[1, c, h, w], |i| ((i as u64 ^ seed) % 997) as f32 / 498.5 - 1.0);
        let xm = apply_mask(&x, &mb).unwrap();
        for (i, (&v, &orig)) in xm.data().iter().zip(x.data()).enumerate() {
            if mb.masks.data()[i % (h * w)] == 1.0 {
                prop_assert_eq!(v.to_bits(), orig.to_bits());
            } else {
                prop_assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn auc_matches_pair_counting((s, l) in scored_labels(60)) {
        let a = auc(&s, &l).unwrap();
        prop_assert!((a - pair_count_auc(&s, &l)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_invariant_under_increasing_transform((s, l) in scored_labels(60)) {
        let warped: Vec<f64> = s.iter().map(|v| (v * 2.0).exp() - 7.0).collect();
        prop_assert_eq!(auc(&s, &l).unwrap(), auc(&warped, &l).unwrap());
        let scaled = minmax_scale(&s).unwrap();
        if s.iter().any(|&v| v != s[0]) {
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&scaled, &l).unwrap());
        }
    }

    #[test]
    fn eer_matches_threshold_sweep((s, l) in scored_labels(60)) {
        let e = eer(&s, &l).unwrap();
        prop_assert!((e - sweep_eer(&s, &l)).abs() < 1e-9, "{} vs {}", e, sweep_eer(&s, &l));
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn eer_symmetry((s, l) in scored_labels(60)) {
        let flipped: Vec<bool> = l.iter().map(|&v| !v).collect();
        let negated: Vec<f64> = s.iter().map(|&v| -v).collect();
        prop_assert!((eer(&s, &flipped).unwrap() - eer(&negated, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone((s, l) in scored_labels(60)) {
        let r = roc_curve(&s, &l).unwrap();
        prop_assert!(r.fpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.tpr.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!((r.fpr[0], r.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*r.fpr.last().unwrap(), *r.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn minmax_lands_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let s = minmax_scale(&v).unwrap();
        prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
        if v.iter().any(|&x| x != v[0]) {
            prop_assert!(s.contains(&0.0) && s.contains(&1.0));
        }
    }

    #[test]
    fn conv_extents_follow_arithmetic(
        cin in 1usize..3, k in 1usize..5, s in 1usize..3, p in 0usize..3, h in 4usize..12, w in 4usize..12,
    ) {
        prop_assume!(h + 2 * p >= k && w + 2 * p >= k);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Layer::Conv2d(Conv2d::init(cin, 2, k, s, p, &mut rng));
        let out = conv.output_shape(&[cin, h, w]).unwrap();
        prop_assert_eq!(out, vec![2, (h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1]);
    }

    #[test]
    fn transposed_conv_inverts_stride_two(h in 1usize..10, w in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Layer::ConvTranspose2d(ConvTranspose2d::init(3, 1, 3, 2, 1, 1, &mut rng));
        prop_assert_eq!(t.output_shape(&[3, h, w]).unwrap(), vec![1, 2 * h, 2 * w]);
        let c = Layer::Conv2d(Conv2d::init(1, 3, 3, 2, 1, &mut rng));
        prop_assert_eq!(c.output_shape(&[1, 2 * h, 2 * w]).unwrap(), vec![3, h, w]);
    }

    #[test]
    fn checkpoint_roundtrip_is_identity(
        config in "[a-z_ =0-9\n]{0,80}",
        values in prop::collection::vec(any::<f32>(), 1..40),
    ) {
        let mut c = Checkpoint::new(config);
        let n = values.len();
        c.push("net/w", Tensor::new(vec![n], values).unwrap());
        let back = Checkpoint::decode(&c.encode()).unwrap();
        prop_assert_eq!(&back.config, &c.config);
        let (a, b) = (back.get("net/w").unwrap(), c.get("net/w").unwrap());
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn patches_reassemble_bit_exactly(rows in 1usize..5, cols in 1usize..5, size in 1usize..8, seed in any::<u8>()) {
        let (h, w) = (rows * size, cols * size);
        let f = Frame::new(h, w, (0..h * w).map(|i| (i as u8).wrapping_mul(31) ^ seed).collect()).unwrap();
        let p = extract_patches(&f, size).unwrap();
        prop_assert_eq!(p.len(), rows * cols);
        prop_assert_eq!(assemble_patches(&p, size, h, w).unwrap(), f);
    }
}
