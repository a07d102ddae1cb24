//! Row-major GEMM and the im2col/col2im transforms used by the convolutions.

/// `c = a·b + beta·c` for row-major operands, where `a` is logically m×k and
/// `b` is k×n. `trans_a` / `trans_b` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    c: &mut [f32],
    beta: f32,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above bound every index the kernel touches given
    // the strides derived from (m, k, n).
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D convolution window sweep.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        if pos < 0 {
            None
        } else {
            Some(pos as usize)
        }
    }
}

/// Unfolds one C×H×W image into a (C·k·k)×(out_h·out_w) column matrix.
pub(crate) fn im2col(img: &[f32], w: &Window, col: &mut [f32]) {
    let cols = w.col_cols();
    let mut row = 0;
    for c in 0..w.channels {
        let plane = &img[c * w.in_h * w.in_w..(c + 1) * w.in_h * w.in_w];
        for ky in 0..w.kernel {
            for kx in 0..w.kernel {
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..w.out_h {
                    let line = &mut dst[oy * w.out_w..(oy + 1) * w.out_w];
                    match w.source(oy, ky).filter(|&y| y < w.in_h) {
                        None => line.fill(0.0),
                        Some(y) => {
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = match w.source(ox, kx).filter(|&x| x < w.in_w) {
                                    Some(x) => plane[y * w.in_w + x],
                                    None => 0.0,
                                };
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into an image.
/// `img` must be zeroed by the caller if accumulation is not wanted.
pub(crate) fn col2im(col: &[f32], w: &Window, img: &mut [f32]) {
    let cols = w.col_cols();
    let mut row = 0;
    for c in 0..w.channels {
        let plane = &mut img[c * w.in_h * w.in_w..(c + 1) * w.in_h * w.in_w];
        for ky in 0..w.kernel {
            for kx in 0..w.kernel {
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..w.out_h {
                    let Some(y) = w.source(oy, ky).filter(|&y| y < w.in_h) else {
                        continue;
                    };
                    for ox in 0..w.out_w {
                        if let Some(x) = w.source(ox, kx).filter(|&x| x < w.in_w) {
                            plane[y * w.in_w + x] += src[oy * w.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_in_all_transpositions() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f32> = (0..m * k).map(|i| i as f32 * 0.5 - 2.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i % 7) as f32 - 3.0).collect();
        let at: Vec<f32> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let bt: Vec<f32> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
        let mut expect = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    expect[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
                assert_eq!(c, expect);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let w = Window {
            channels: 2,
            in_h: 5,
            in_w: 4,
            out_h: 3,
            out_w: 2,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let img: Vec<f32> = (0..40).map(|i| (i as f32).sin()).collect();
        let colv: Vec<f32> = (0..w.col_rows() * w.col_cols())
            .map(|i| (i as f32 * 0.3).cos())
            .collect();
        let mut col = vec![0.0; colv.len()];
        im2col(&img, &w, &mut col);
        let lhs: f64 = col.iter().zip(&colv).map(|(a, b)| (*a * *b) as f64).sum();
        let mut back = vec![0.0; 40];
        col2im(&colv, &w, &mut back);
        let rhs: f64 = back.iter().zip(&img).map(|(a, b)| (*a * *b) as f64).sum();
        assert!((lhs - rhs).abs() < 1e-4);
    }
}
