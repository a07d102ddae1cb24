//! Finite-difference gradient checker.
//!
//! Numeric gradients come from a naive 64-bit re-implementation of every
//! layer's forward pass (direct loops, no im2col/GEMM), so the check does
//! not share a code path with the analytic backward it validates. The
//! scalar objective is `sum(r ⊙ y)` for a seeded random projection `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::Layer;
use super::stack::LayerStack;
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Upper bound on perturbed entries per tensor; larger tensors are
    /// sub-sampled with the seeded generator.
    pub max_entries_per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-3,
            tolerance: 1e-3,
            seed: 0,
            max_entries_per_tensor: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    pub fn failures(&self) -> Vec<&GradCheckEntry> {
        self.entries.iter().filter(|e| e.max_rel_err >= self.tolerance).collect()
    }
}

/// Batch tensor in f64 with explicit shape.
#[derive(Clone, Debug)]
struct T64 {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl T64 {
    fn from(t: &Tensor) -> Self {
        T64 {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Reference forward of one layer. `params` are the layer's parameters in
/// `Layer::params` order, already widened to f64.
fn reference_layer(layer: &Layer, params: &[T64], x: &T64) -> T64 {
    match layer {
        Layer::Conv2d(c) => {
            let (w, b) = (&params[0], &params[1]);
            let (n, cin, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
            let (cout, k) = (w.shape[0], w.shape[2]);
            let (s, p) = (c.stride as isize, c.padding as isize);
            let oh = ((h as isize + 2 * p - k as isize) / s + 1) as usize;
            let ow = ((wd as isize + 2 * p - k as isize) / s + 1) as usize;
            let mut y = vec![0.0; n * cout * oh * ow];
            for i in 0..n {
                for o in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b.data[o];
                            for ci in 0..cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = oy as isize * s - p + ky as isize;
                                        let ix = ox as isize * s - p + kx as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                        let xv = x.data[((i * cin + ci) * h + iy as usize) * wd + ix as usize];
                                        let wv = w.data[((o * cin + ci) * k + ky) * k + kx];
                                        acc += xv * wv;
                                    }
                                }
                            }
                            y[((i * cout + o) * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
            T64 {
                shape: vec![n, cout, oh, ow],
                data: y,
            }
        }
        Layer::ConvTranspose2d(c) => {
            let (w, b) = (&params[0], &params[1]);
            let (n, cin, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
            let (cout, k) = (w.shape[1], w.shape[2]);
            let (s, p) = (c.stride, c.padding);
            let oh = (h - 1) * s + k + c.output_padding - 2 * p;
            let ow = (wd - 1) * s + k + c.output_padding - 2 * p;
            let mut y = vec![0.0; n * cout * oh * ow];
            for i in 0..n {
                for o in 0..cout {
                    for v in &mut y[(i * cout + o) * oh * ow..(i * cout + o + 1) * oh * ow] {
                        *v = b.data[o];
                    }
                }
                for ci in 0..cin {
                    for iy in 0..h {
                        for ix in 0..wd {
                            let xv = x.data[((i * cin + ci) * h + iy) * wd + ix];
                            for o in 0..cout {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let oy = (iy * s + ky) as isize - p as isize;
                                        let ox = (ix * s + kx) as isize - p as isize;
                                        if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                            continue;
                                        }
                                        let wv = w.data[((ci * cout + o) * k + ky) * k + kx];
                                        y[((i * cout + o) * oh + oy as usize) * ow + ox as usize] += xv * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            T64 {
                shape: vec![n, cout, oh, ow],
                data: y,
            }
        }
        Layer::Dense(_) => {
            let (w, b) = (&params[0], &params[1]);
            let (n, fin) = (x.shape[0], x.shape[1]);
            let fout = w.shape[0];
            let mut y = vec![0.0; n * fout];
            for i in 0..n {
                for o in 0..fout {
                    y[i * fout + o] = b.data[o] + (0..fin).map(|j| w.data[o * fin + j] * x.data[i * fin + j]).sum::<f64>();
                }
            }
            T64 {
                shape: vec![n, fout],
                data: y,
            }
        }
        Layer::BatchNorm(bn) => {
            let (gamma, beta) = (&params[0], &params[1]);
            let n = x.shape[0];
            let c = x.shape[1];
            let sp: usize = x.shape[2..].iter().product::<usize>().max(1);
            let mut y = x.data.clone();
            for ch in 0..c {
                let idx: Vec<usize> = (0..n).flat_map(|i| ((i * c + ch) * sp)..((i * c + ch + 1) * sp)).collect();
                let m = idx.len() as f64;
                let mean = idx.iter().map(|&k| x.data[k]).sum::<f64>() / m;
                let var = idx.iter().map(|&k| (x.data[k] - mean).powi(2)).sum::<f64>() / m;
                let inv = 1.0 / (var + bn.eps as f64).sqrt();
                for &k in &idx {
                    y[k] = gamma.data[ch] * (x.data[k] - mean) * inv + beta.data[ch];
                }
            }
            T64 {
                shape: x.shape.clone(),
                data: y,
            }
        }
        Layer::LeakyRelu { slope } => map64(x, |v| if v > 0.0 { v } else { *slope as f64 * v }),
        Layer::Relu => map64(x, |v| v.max(0.0)),
        Layer::Clip { lo, hi } => map64(x, |v| v.clamp(*lo as f64, *hi as f64)),
        Layer::Reshape { shape } => {
            let mut s = vec![x.shape[0]];
            s.extend_from_slice(shape);
            T64 {
                shape: s,
                data: x.data.clone(),
            }
        }
    }
}

fn map64(x: &T64, f: impl Fn(f64) -> f64) -> T64 {
    T64 {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| f(v)).collect(),
    }
}

/// Train-mode reference forward of the whole stack followed by projection.
fn reference_objective(stack: &LayerStack, params: &[Vec<T64>], x: &T64, proj: &[f64]) -> f64 {
    let mut cur = x.clone();
    for (nl, p) in stack.layers().iter().zip(params) {
        cur = reference_layer(&nl.layer, p, &cur);
    }
    cur.data.iter().zip(proj).map(|(a, b)| a * b).sum()
}

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic train-mode gradients of `stack` at input `x`
/// against central differences. Relative errors use a denominator floor of
/// 1% of the tensor's largest numeric gradient, so entries that are
/// negligible next to their neighbours are judged on absolute scale.
pub fn grad_check(stack: &LayerStack, x: &Tensor, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (y, tape) = stack.forward_train(x)?;
    let proj32 = Tensor::from_fn(y.shape(), |_| rng.gen_range(-1.0f32..1.0));
    let proj: Vec<f64> = proj32.data().iter().map(|&v| v as f64).collect();
    let (gx, grads) = stack.backward(&tape, &proj32, true)?;

    let mut params: Vec<Vec<T64>> = stack
        .layers()
        .iter()
        .map(|nl| nl.layer.params().into_iter().map(T64::from).collect())
        .collect();
    let mut x64 = T64::from(x);
    let h = opts.step;
    let mut entries = Vec::new();

    let pick = |len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        if len <= opts.max_entries_per_tensor {
            (0..len).collect()
        } else {
            rand::seq::index::sample(rng, len, opts.max_entries_per_tensor).into_vec()
        }
    };

    let mut grad_index = 0;
    for li in 0..params.len() {
        for pi in 0..params[li].len() {
            let analytic = &grads.tensors[grad_index];
            let name = grads.names[grad_index].clone();
            grad_index += 1;
            let chosen = pick(params[li][pi].data.len(), &mut rng);
            let mut numeric = Vec::with_capacity(chosen.len());
            for &k in &chosen {
                let orig = params[li][pi].data[k];
                params[li][pi].data[k] = orig + h;
                let plus = reference_objective(stack, &params, &x64, &proj);
                params[li][pi].data[k] = orig - h;
                let minus = reference_objective(stack, &params, &x64, &proj);
                params[li][pi].data[k] = orig;
                numeric.push((plus - minus) / (2.0 * h));
            }
            entries.push(summarize(name, &chosen, analytic.data(), &numeric));
        }
    }

    let chosen = pick(x64.data.len(), &mut rng);
    let mut numeric = Vec::with_capacity(chosen.len());
    for &k in &chosen {
        let orig = x64.data[k];
        x64.data[k] = orig + h;
        let plus = reference_objective(stack, &params, &x64, &proj);
        x64.data[k] = orig - h;
        let minus = reference_objective(stack, &params, &x64, &proj);
        x64.data[k] = orig;
        numeric.push((plus - minus) / (2.0 * h));
    }
    entries.push(summarize("input".into(), &chosen, gx.data(), &numeric));

    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        entries,
    })
}

fn summarize(name: String, chosen: &[usize], analytic: &[f32], numeric: &[f64]) -> GradCheckEntry {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (0.01 * scale).max(1e-6);
    let max_rel_err = chosen
        .iter()
        .zip(numeric)
        .map(|(&k, &n)| rel_err(analytic[k] as f64, n, floor))
        .fold(0.0, f64::max);
    GradCheckEntry {
        name,
        max_rel_err,
        checked: chosen.len(),
    }
}
