//! Layer kinds with explicit forward and backward passes.
//!
//! Shapes handed to `output_shape` are per-sample (no batch axis); tensors
//! passed to `forward`/`backward` carry a leading batch axis.

use rand::Rng;

use super::gemm::{col2im, gemm, im2col, Window};
use crate::error::{OledError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    ConvTranspose2d,
    Dense,
    BatchNorm,
    LeakyRelu,
    Relu,
    Clip,
    Reshape,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv2d,
        LayerKind::ConvTranspose2d,
        LayerKind::Dense,
        LayerKind::BatchNorm,
        LayerKind::LeakyRelu,
        LayerKind::Relu,
        LayerKind::Clip,
        LayerKind::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::ConvTranspose2d => "transposed-conv2d",
            LayerKind::Dense => "dense",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::LeakyRelu => "leaky-relu",
            LayerKind::Relu => "relu",
            LayerKind::Clip => "clip",
            LayerKind::Reshape => "reshape",
        }
    }
}

/// `weight`: out×in×k×k.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

/// `weight`: in×out×k×k. Output extent is `(in−1)·s − 2p + k + output_padding`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

/// `weight`: out×in.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-channel normalization over batch and spatial axes.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f32,
    /// Weight of the previous running value in each update.
    pub momentum: f32,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    LeakyRelu { slope: f32 },
    Relu,
    Clip { lo: f32, hi: f32 },
    Reshape { shape: Vec<usize> },
}

/// Per-layer record kept by a train-mode forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    Input(Tensor),
    Norm {
        x_hat: Tensor,
        inv_std: Vec<f32>,
        batch_mean: Vec<f32>,
        batch_var: Vec<f32>,
    },
    Shape(Vec<usize>),
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

impl Conv2d {
    pub fn init(cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Self {
        Conv2d {
            weight: he_uniform(&[cout, cin, kernel, kernel], cin * kernel * kernel, rng),
            bias: Tensor::zeros(&[cout]),
            stride,
            padding,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.weight.shape();
        (s[1], s[0], s[2])
    }

    fn window(&self, h: usize, w: usize) -> Result<Window> {
        let (cin, _, k) = self.dims();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < k || pw < k {
            return Err(OledError::shape("conv2d window", &[k, k], &[ph, pw]));
        }
        Ok(Window {
            channels: cin,
            in_h: h,
            in_w: w,
            out_h: (ph - k) / self.stride + 1,
            out_w: (pw - k) / self.stride + 1,
            kernel: k,
            stride: self.stride,
            padding: self.padding,
        })
    }
}

impl ConvTranspose2d {
    pub fn init(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        ConvTranspose2d {
            weight: he_uniform(&[cin, cout, kernel, kernel], cin * kernel * kernel, rng),
            bias: Tensor::zeros(&[cout]),
            stride,
            padding,
            output_padding,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.weight.shape();
        (s[0], s[1], s[2])
    }

    /// Window of the equivalent forward convolution mapping output → input.
    fn window(&self, h: usize, w: usize) -> Result<Window> {
        let (_, cout, k) = self.dims();
        let grow = |x: usize| -> Option<usize> {
            ((x - 1) * self.stride + k + self.output_padding).checked_sub(2 * self.padding)
        };
        match (grow(h), grow(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 && self.output_padding < self.stride => Ok(Window {
                channels: cout,
                in_h: oh,
                in_w: ow,
                out_h: h,
                out_w: w,
                kernel: k,
                stride: self.stride,
                padding: self.padding,
            }),
            _ => Err(OledError::shape("transposed-conv2d window", &[k, k], &[h, w])),
        }
    }
}

impl Dense {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: he_uniform(&[fan_out, fan_in], fan_in, rng),
            bias: Tensor::zeros(&[fan_out]),
        }
    }
}

impl BatchNorm {
    pub fn new(channels: usize, eps: f32, momentum: f32) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps,
            momentum,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub(crate) fn update_running(&mut self, mean: &[f32], var: &[f32]) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// Splits `[N, C, rest..]` into (N, C, spatial).
fn ncs(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product::<usize>().max(1))
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::ConvTranspose2d(_) => LayerKind::ConvTranspose2d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::LeakyRelu { .. } => LayerKind::LeakyRelu,
            Layer::Relu => LayerKind::Relu,
            Layer::Clip { .. } => LayerKind::Clip,
            Layer::Reshape { .. } => LayerKind::Reshape,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let ctx = self.kind().name();
        match self {
            Layer::Conv2d(c) => {
                let (cin, cout, _) = c.dims();
                if input.len() != 3 || input[0] != cin {
                    return Err(OledError::shape(ctx, &[cin, 0, 0], input));
                }
                let w = c.window(input[1], input[2])?;
                Ok(vec![cout, w.out_h, w.out_w])
            }
            Layer::ConvTranspose2d(c) => {
                let (cin, cout, _) = c.dims();
                if input.len() != 3 || input[0] != cin {
                    return Err(OledError::shape(ctx, &[cin, 0, 0], input));
                }
                let w = c.window(input[1], input[2])?;
                Ok(vec![cout, w.in_h, w.in_w])
            }
            Layer::Dense(d) => {
                let s = d.weight.shape();
                if input != [s[1]] {
                    return Err(OledError::shape(ctx, &[s[1]], input));
                }
                Ok(vec![s[0]])
            }
            Layer::BatchNorm(b) => {
                if input.is_empty() || input[0] != b.channels() {
                    return Err(OledError::shape(ctx, &[b.channels()], input));
                }
                Ok(input.to_vec())
            }
            Layer::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(OledError::shape(ctx, shape, input));
                }
                Ok(shape.clone())
            }
            Layer::Clip { lo, hi } if lo > hi => Err(OledError::Config(format!(
                "clip bounds [{lo}, {hi}] are inverted"
            ))),
            _ => Ok(input.to_vec()),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Layer::Conv2d(_) | Layer::ConvTranspose2d(_) | Layer::Dense(_) => &["weight", "bias"],
            Layer::BatchNorm(_) => &["gamma", "beta"],
            _ => &[],
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::ConvTranspose2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::ConvTranspose2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            _ => vec![],
        }
    }

    /// Non-trainable state that still belongs in checkpoints.
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::BatchNorm(b) => vec![("running_mean", &b.running_mean), ("running_var", &b.running_var)],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Layer::BatchNorm(b) => vec![
                ("running_mean", &mut b.running_mean),
                ("running_var", &mut b.running_var),
            ],
            _ => vec![],
        }
    }

    /// Runs the layer on a batch. In train mode the returned cache holds
    /// whatever `backward` needs; in infer mode it is `None`.
    pub(crate) fn forward(&self, x: &Tensor, train: bool) -> (Tensor, Option<Cache>) {
        let keep_input = |x: &Tensor| if train { Some(Cache::Input(x.clone())) } else { None };
        match self {
            Layer::Conv2d(c) => (conv_forward(c, x), keep_input(x)),
            Layer::ConvTranspose2d(c) => (tconv_forward(c, x), keep_input(x)),
            Layer::Dense(d) => (dense_forward(d, x), keep_input(x)),
            Layer::BatchNorm(b) => bn_forward(b, x, train),
            Layer::LeakyRelu { slope } => {
                let s = *slope;
                (x.map(|v| if v > 0.0 { v } else { s * v }), keep_input(x))
            }
            Layer::Relu => (x.map(|v| v.max(0.0)), keep_input(x)),
            Layer::Clip { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                (x.map(|v| v.clamp(lo, hi)), keep_input(x))
            }
            Layer::Reshape { shape } => {
                let mut full = vec![x.batch()];
                full.extend_from_slice(shape);
                let y = x.clone().reshape(&full).expect("reshape validated by stack");
                let cache = train.then(|| Cache::Shape(x.shape().to_vec()));
                (y, cache)
            }
        }
    }

    /// Returns (grad wrt input, grads wrt `params()` in order). Parameter
    /// gradients are skipped (empty vec) when `param_grads` is false.
    pub(crate) fn backward(&self, cache: &Cache, g: &Tensor, param_grads: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let mismatch = || OledError::Tape(format!("{} received a foreign cache", self.kind().name()));
        match (self, cache) {
            (Layer::Conv2d(c), Cache::Input(x)) => Ok(conv_backward(c, x, g, param_grads)),
            (Layer::ConvTranspose2d(c), Cache::Input(x)) => Ok(tconv_backward(c, x, g, param_grads)),
            (Layer::Dense(d), Cache::Input(x)) => Ok(dense_backward(d, x, g, param_grads)),
            (Layer::BatchNorm(b), Cache::Norm { x_hat, inv_std, .. }) => Ok(bn_backward(b, x_hat, inv_std, g, param_grads)),
            (Layer::LeakyRelu { slope }, Cache::Input(x)) => {
                let gi = zip_map(x, g, |xv, gv| if xv > 0.0 { gv } else { slope * gv });
                Ok((gi, vec![]))
            }
            (Layer::Relu, Cache::Input(x)) => Ok((zip_map(x, g, |xv, gv| if xv > 0.0 { gv } else { 0.0 }), vec![])),
            (Layer::Clip { lo, hi }, Cache::Input(x)) => {
                let gi = zip_map(x, g, |xv, gv| if xv >= *lo && xv <= *hi { gv } else { 0.0 });
                Ok((gi, vec![]))
            }
            (Layer::Reshape { .. }, Cache::Shape(s)) => Ok((g.clone().reshape(s)?, vec![])),
            _ => Err(mismatch()),
        }
    }
}

fn zip_map(x: &Tensor, g: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = x.data().iter().zip(g.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(g.shape().to_vec(), data).expect("same shape")
}

fn conv_forward(c: &Conv2d, x: &Tensor) -> Tensor {
    let (n, s) = (x.batch(), x.shape());
    let (_, cout, _) = c.dims();
    let win = c.window(s[2], s[3]).expect("validated by stack");
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let mut col = vec![0.0; rows * cols];
    let mut y = Tensor::zeros(&[n, cout, win.out_h, win.out_w]);
    for i in 0..n {
        im2col(x.sample(i), &win, &mut col);
        let out = y.sample_mut(i);
        for (o, &b) in c.bias.data().iter().enumerate() {
            out[o * cols..(o + 1) * cols].fill(b);
        }
        gemm(cout, rows, cols, c.weight.data(), false, &col, false, out, 1.0);
    }
    y
}

fn conv_backward(c: &Conv2d, x: &Tensor, g: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
    let (n, s) = (x.batch(), x.shape());
    let (_, cout, _) = c.dims();
    let win = c.window(s[2], s[3]).expect("validated by stack");
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let mut col = vec![0.0; rows * cols];
    let mut dcol = vec![0.0; rows * cols];
    let mut gx = Tensor::zeros(s);
    let mut gw = Tensor::zeros(c.weight.shape());
    let mut gb = Tensor::zeros(c.bias.shape());
    for i in 0..n {
        let gi = g.sample(i);
        if param_grads {
            im2col(x.sample(i), &win, &mut col);
            gemm(cout, cols, rows, gi, false, &col, true, gw.data_mut(), 1.0);
            for (o, b) in gb.data_mut().iter_mut().enumerate() {
                *b += gi[o * cols..(o + 1) * cols].iter().sum::<f32>();
            }
        }
        gemm(rows, cout, cols, c.weight.data(), true, gi, false, &mut dcol, 0.0);
        col2im(&dcol, &win, gx.sample_mut(i));
    }
    let pg = if param_grads { vec![gw, gb] } else { vec![] };
    (gx, pg)
}

fn tconv_forward(c: &ConvTranspose2d, x: &Tensor) -> Tensor {
    let (n, s) = (x.batch(), x.shape());
    let (cin, cout, _) = c.dims();
    let win = c.window(s[2], s[3]).expect("validated by stack");
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let plane = win.in_h * win.in_w;
    let mut col = vec![0.0; rows * cols];
    let mut y = Tensor::zeros(&[n, cout, win.in_h, win.in_w]);
    for i in 0..n {
        gemm(rows, cin, cols, c.weight.data(), true, x.sample(i), false, &mut col, 0.0);
        let out = y.sample_mut(i);
        col2im(&col, &win, out);
        for (o, &b) in c.bias.data().iter().enumerate() {
            out[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += b);
        }
    }
    y
}

fn tconv_backward(c: &ConvTranspose2d, x: &Tensor, g: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
    let (n, s) = (x.batch(), x.shape());
    let (cin, _, _) = c.dims();
    let win = c.window(s[2], s[3]).expect("validated by stack");
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let plane = win.in_h * win.in_w;
    let mut gcol = vec![0.0; rows * cols];
    let mut gx = Tensor::zeros(s);
    let mut gw = Tensor::zeros(c.weight.shape());
    let mut gb = Tensor::zeros(c.bias.shape());
    for i in 0..n {
        let gi = g.sample(i);
        im2col(gi, &win, &mut gcol);
        gemm(cin, rows, cols, c.weight.data(), false, &gcol, false, gx.sample_mut(i), 0.0);
        if param_grads {
            gemm(cin, cols, rows, x.sample(i), false, &gcol, true, gw.data_mut(), 1.0);
            for (o, b) in gb.data_mut().iter_mut().enumerate() {
                *b += gi[o * plane..(o + 1) * plane].iter().sum::<f32>();
            }
        }
    }
    let pg = if param_grads { vec![gw, gb] } else { vec![] };
    (gx, pg)
}

fn dense_forward(d: &Dense, x: &Tensor) -> Tensor {
    let n = x.batch();
    let (out, inp) = (d.weight.shape()[0], d.weight.shape()[1]);
    let mut y = Tensor::zeros(&[n, out]);
    for i in 0..n {
        y.sample_mut(i).copy_from_slice(d.bias.data());
    }
    gemm(n, inp, out, x.data(), false, d.weight.data(), true, y.data_mut(), 1.0);
    y
}

fn dense_backward(d: &Dense, x: &Tensor, g: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
    let n = x.batch();
    let (out, inp) = (d.weight.shape()[0], d.weight.shape()[1]);
    let mut gx = Tensor::zeros(x.shape());
    gemm(n, out, inp, g.data(), false, d.weight.data(), false, gx.data_mut(), 0.0);
    if !param_grads {
        return (gx, vec![]);
    }
    let mut gw = Tensor::zeros(d.weight.shape());
    gemm(out, n, inp, g.data(), true, x.data(), false, gw.data_mut(), 0.0);
    let mut gb = Tensor::zeros(&[out]);
    for i in 0..n {
        for (b, &v) in gb.data_mut().iter_mut().zip(g.sample(i)) {
            *b += v;
        }
    }
    (gx, vec![gw, gb])
}

fn bn_forward(b: &BatchNorm, x: &Tensor, train: bool) -> (Tensor, Option<Cache>) {
    let (n, c, sp) = ncs(x.shape());
    let xd = x.data();
    let (mean, var): (Vec<f32>, Vec<f32>) = if train {
        let m = (n * sp) as f64;
        (0..c)
            .map(|ch| {
                let vals = (0..n).flat_map(|i| {
                    let base = (i * c + ch) * sp;
                    xd[base..base + sp].iter().map(|&v| v as f64)
                });
                let (mut s, mut s2) = (0.0f64, 0.0f64);
                for v in vals {
                    s += v;
                    s2 += v * v;
                }
                let mu = s / m;
                ((mu as f32), ((s2 / m - mu * mu).max(0.0)) as f32)
            })
            .unzip()
    } else {
        (b.running_mean.data().to_vec(), b.running_var.data().to_vec())
    };
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + b.eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * sp;
            let (g, be, mu, is) = (b.gamma.data()[ch], b.beta.data()[ch], mean[ch], inv_std[ch]);
            for k in base..base + sp {
                let h = (xd[k] - mu) * is;
                x_hat.data_mut()[k] = h;
                y.data_mut()[k] = g * h + be;
            }
        }
    }
    let cache = train.then_some(Cache::Norm {
        x_hat,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    });
    (y, cache)
}

fn bn_backward(b: &BatchNorm, x_hat: &Tensor, inv_std: &[f32], g: &Tensor, param_grads: bool) -> (Tensor, Vec<Tensor>) {
    let (n, c, sp) = ncs(g.shape());
    let m = (n * sp) as f32;
    let (gd, hd) = (g.data(), x_hat.data());
    let mut sum_g = vec![0.0f32; c];
    let mut sum_gh = vec![0.0f32; c];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * sp;
            for k in base..base + sp {
                sum_g[ch] += gd[k];
                sum_gh[ch] += gd[k] * hd[k];
            }
        }
    }
    let mut gx = Tensor::zeros(g.shape());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * sp;
            let scale = b.gamma.data()[ch] * inv_std[ch] / m;
            for k in base..base + sp {
                gx.data_mut()[k] = scale * (m * gd[k] - sum_g[ch] - hd[k] * sum_gh[ch]);
            }
        }
    }
    let pg = if param_grads {
        vec![
            Tensor::new(vec![c], sum_gh).expect("channel count"),
            Tensor::new(vec![c], sum_g).expect("channel count"),
        ]
    } else {
        vec![]
    };
    (gx, pg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn unit_conv_is_identity() {
        let conv = Layer::Conv2d(Conv2d {
            weight: t(&[1, 1, 1, 1], &[1.0]),
            bias: t(&[1], &[0.0]),
            stride: 1,
            padding: 0,
        });
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (y, _) = conv.forward(&x, false);
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let conv = Layer::Conv2d(Conv2d {
            weight: Tensor::full(&[1, 1, 2, 2], 1.0),
            bias: t(&[1], &[0.0]),
            stride: 1,
            padding: 0,
        });
        assert_eq!(conv.output_shape(&[1, 2, 2]).unwrap(), vec![1, 1, 1]);
        let (y, _) = conv.forward(&t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), false);
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn clip_bounds_values() {
        let (y, _) = Layer::Clip { lo: -1.0, hi: 1.0 }.forward(&t(&[1, 3], &[-3.0, 0.2, 5.0]), false);
        assert_eq!(y.data(), &[-1.0, 0.2, 1.0]);
    }

    #[test]
    fn dense_weight_grad_is_outer_product() {
        let d = Layer::Dense(Dense {
            weight: t(&[1, 2], &[0.3, -0.7]),
            bias: t(&[1], &[0.0]),
        });
        let x = t(&[1, 2], &[1.0, 2.0]);
        let (_, cache) = d.forward(&x, true);
        let (_, pg) = d.backward(&cache.unwrap(), &t(&[1, 1], &[3.0]), true).unwrap();
        assert_eq!(pg[0].shape(), &[1, 2]);
        assert_eq!(pg[0].data(), &[3.0, 6.0]);
        assert_eq!(pg[1].data(), &[3.0]);
    }

    #[test]
    fn conv_output_extent_arithmetic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for (inp, k, s, p) in [(32, 3, 2, 1), (28, 3, 2, 1), (7, 3, 1, 0), (9, 4, 3, 2)] {
            let conv = Layer::Conv2d(Conv2d::init(1, 2, k, s, p, &mut rng));
            let out = conv.output_shape(&[1, inp, inp]).unwrap();
            assert_eq!(out[1], (inp + 2 * p - k) / s + 1);
        }
        let tconv = Layer::ConvTranspose2d(ConvTranspose2d::init(2, 1, 3, 2, 1, 1, &mut rng));
        assert_eq!(tconv.output_shape(&[2, 8, 8]).unwrap(), vec![1, 16, 16]);
    }

    #[test]
    fn transposed_conv_inverts_stride2_conv_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let conv = Layer::Conv2d(Conv2d::init(1, 1, 3, 2, 1, &mut rng));
        let tconv = Layer::ConvTranspose2d(ConvTranspose2d::init(1, 1, 3, 2, 1, 1, &mut rng));
        for n in [4, 8, 16, 32] {
            let down = conv.output_shape(&[1, n, n]).unwrap();
            assert_eq!(tconv.output_shape(&down).unwrap(), vec![1, n, n]);
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let conv = Layer::Conv2d(Conv2d::init(2, 3, 3, 1, 1, &mut rng));
        let x = Tensor::from_fn(&[2, 2, 4, 4], |i| (i as f32).sin());
        let (y, cache) = conv.forward(&x, true);
        let (gx, pg) = conv.backward(&cache.unwrap(), &Tensor::zeros(y.shape()), true).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(pg.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mismatched_input_channels_rejected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let conv = Layer::Conv2d(Conv2d::init(3, 2, 3, 1, 1, &mut rng));
        assert!(matches!(conv.output_shape(&[1, 8, 8]), Err(OledError::Shape { .. })));
    }
}
