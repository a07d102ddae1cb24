//! WebAssembly bindings for the interactive page in `www/`.

use oled::mask::{apply_mask, threshold, threshold_soft, surrogate_backward, GradMode, ThresholdConfig};
use oled::metrics::roc_curve;
use oled::Tensor;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Hard mask of an `h`×`w` activation map at keep fraction `t`.
/// Returns one byte per pixel: 0 masked, 1 kept.
#[wasm_bindgen]
pub fn mask_map(activations: &[f32], h: usize, w: usize, t: f64) -> Result<Vec<u8>, JsError> {
    let a = Tensor::new(vec![1, 1, h, w], activations.to_vec()).map_err(js_err)?;
    let cfg = ThresholdConfig {
        keep_fraction: t,
        ..ThresholdConfig::default()
    };
    let mb = threshold(&a, &cfg).map_err(js_err)?;
    Ok(mb.masks.data().iter().map(|&v| v as u8).collect())
}

/// Image with the masked pixels zeroed, as the reconstructor would see it.
#[wasm_bindgen]
pub fn masked_image(image: &[f32], activations: &[f32], h: usize, w: usize, t: f64) -> Result<Vec<f32>, JsError> {
    let x = Tensor::new(vec![1, 1, h, w], image.to_vec()).map_err(js_err)?;
    let a = Tensor::new(vec![1, 1, h, w], activations.to_vec()).map_err(js_err)?;
    let cfg = ThresholdConfig {
        keep_fraction: t,
        ..ThresholdConfig::default()
    };
    let mb = threshold(&a, &cfg).map_err(js_err)?;
    Ok(apply_mask(&x, &mb).map_err(js_err)?.into_data())
}

#[wasm_bindgen]
pub struct Roc {
    fpr: Vec<f64>,
    tpr: Vec<f64>,
    auc: f64,
    eer: f64,
}

#[wasm_bindgen]
impl Roc {
    #[wasm_bindgen(getter)]
    pub fn fpr(&self) -> Vec<f64> {
        self.fpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn tpr(&self) -> Vec<f64> {
        self.tpr.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn auc(&self) -> f64 {
        self.auc
    }

    #[wasm_bindgen(getter)]
    pub fn eer(&self) -> f64 {
        self.eer
    }
}

/// ROC curve, AUC and EER. Nonzero labels mark outliers.
#[wasm_bindgen]
pub fn roc(scores: &[f64], labels: &[u8]) -> Result<Roc, JsError> {
    let labels: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    let r = roc_curve(scores, &labels).map_err(js_err)?;
    Ok(Roc {
        fpr: r.fpr,
        tpr: r.tpr,
        auc: r.auc,
        eer: r.eer,
    })
}

/// Samples the clamped ratio surrogate and its derivative for threshold `s`
/// over `n` activations in `[lo, hi]`. Layout: `[a.., value.., d_paper.., d_straight..]`.
#[wasm_bindgen]
pub fn surrogate_curve(s: f32, eps: f32, lo: f32, hi: f32, n: usize) -> Result<Vec<f32>, JsError> {
    if n < 2 || !(hi > lo) {
        return Err(JsError::new("need n ≥ 2 and hi > lo"));
    }
    let a: Vec<f32> = (0..n).map(|i| lo + (hi - lo) * i as f32 / (n - 1) as f32).collect();
    let at = Tensor::new(vec![1, 1, 1, n], a.clone()).map_err(js_err)?;
    let value = threshold_soft(&at, &[s], eps);
    // a mask batch with one masked pixel so the surrogate is active
    let mut m = vec![1.0; n];
    m[0] = 0.0;
    let mut mb = oled::mask::MaskBatch::from_masks(Tensor::new(vec![1, 1, 1, n], m).map_err(js_err)?).map_err(js_err)?;
    mb.kth = vec![s];
    let ones = Tensor::full(&[1, 1, 1, n], 1.0);
    let grad = |mode| {
        let cfg = ThresholdConfig {
            keep_fraction: 0.5,
            eps,
            grad_mode: mode,
        };
        surrogate_backward(&ones, &at, &mb, &cfg).map(Tensor::into_data)
    };
    let d_paper = grad(GradMode::PaperLiteral).map_err(js_err)?;
    let d_straight = grad(GradMode::StraightThrough).map_err(js_err)?;
    Ok([a, value.into_data(), d_paper, d_straight].concat())
}
