//! Direct 2-D cross-correlation and its adjoints.
//!
//! These are the raw kernels behind both the autodiff graph ops and the
//! power-iteration operator-norm estimator, so forward and adjoint share
//! index arithmetic: the adjoint is literally the forward scatter run in
//! reverse.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Boundary handling for `same`-size convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// Wrap indices modulo the spatial extent. The DFT diagonalizes this case
    /// exactly, so all frequency-domain statements hold without boundary
    /// error.
    SameCircular,
    /// Out-of-range taps read as zero.
    SameZero,
}

fn check_conv_shapes(input: &Tensor, kernel: &Tensor) -> Result<()> {
    let (_, cin, h, w) = input.dims4()?;
    let (_, kcin, kh, kw) = kernel.dims4()?;
    if kcin != cin {
        return Err(CoreError::ShapeMismatch {
            context: "conv2d",
            axis: "input channels",
            expected: cin,
            got: kcin,
        });
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "conv2d kernel extents must be odd, got {kh}x{kw}"
        )));
    }
    if h < kh || w < kw {
        return Err(CoreError::ShapeMismatch {
            context: "conv2d",
            axis: "spatial extent",
            expected: kh.max(kw),
            got: h.min(w),
        });
    }
    Ok(())
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Cross-correlation with `same` padding.
///
/// Output spatial extents are `ceil(h/stride)`; the entry at `(i, j)` equals
/// the stride-1 output at `(stride*i, stride*j)`, which makes a strided
/// convolution identical to the stride-1 convolution followed by decimation.
pub fn conv2d_raw(input: &Tensor, kernel: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
    check_conv_shapes(input, kernel)?;
    if stride == 0 {
        return Err(CoreError::InvalidArgument("conv2d stride must be >= 1".into()));
    }
    let (b, cin, h, w) = input.dims4()?;
    let (cout, _, kh, kw) = kernel.dims4()?;
    let (ph, pw) = (kh / 2, kw / 2);
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));

    let xin = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; b * cout * oh * ow];
    for bi in 0..b {
        for co in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        let in_base = ((bi * cin + ci) * h) * w;
                        let k_base = ((co * cin + ci) * kh) * kw;
                        for u in 0..kh {
                            let y = (stride * i + u) as isize - ph as isize;
                            let yy = match padding {
                                Padding::SameCircular => wrap(y, h),
                                Padding::SameZero => {
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    y as usize
                                }
                            };
                            for v in 0..kw {
                                let x = (stride * j + v) as isize - pw as isize;
                                let xx = match padding {
                                    Padding::SameCircular => wrap(x, w),
                                    Padding::SameZero => {
                                        if x < 0 || x >= w as isize {
                                            continue;
                                        }
                                        x as usize
                                    }
                                };
                                acc += xin[in_base + yy * w + xx] * k[k_base + u * kw + v];
                            }
                        }
                    }
                    out[((bi * cout + co) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Ok(Tensor::new_unchecked(vec![b, cout, oh, ow], out))
}

/// Adjoint of `conv2d_raw` with respect to the input: scatters an output
/// cotangent back onto input positions using the same index walk as the
/// forward pass.
pub fn conv2d_input_grad(
    grad_out: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    input_shape: &[usize],
) -> Result<Tensor> {
    let (b, cout, oh, ow) = grad_out.dims4()?;
    let (kcout, cin, kh, kw) = kernel.dims4()?;
    if kcout != cout {
        return Err(CoreError::ShapeMismatch {
            context: "conv2d_input_grad",
            axis: "output channels",
            expected: cout,
            got: kcout,
        });
    }
    let (h, w) = (input_shape[2], input_shape[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let g = grad_out.data();
    let k = kernel.data();
    let mut gin = vec![0.0; b * cin * h * w];
    for bi in 0..b {
        for co in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let go = g[((bi * cout + co) * oh + i) * ow + j];
                    if go == 0.0 {
                        continue;
                    }
                    for ci in 0..cin {
                        let in_base = ((bi * cin + ci) * h) * w;
                        let k_base = ((co * cin + ci) * kh) * kw;
                        for u in 0..kh {
                            let y = (stride * i + u) as isize - ph as isize;
                            let yy = match padding {
                                Padding::SameCircular => wrap(y, h),
                                Padding::SameZero => {
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    y as usize
                                }
                            };
                            for v in 0..kw {
                                let x = (stride * j + v) as isize - pw as isize;
                                let xx = match padding {
                                    Padding::SameCircular => wrap(x, w),
                                    Padding::SameZero => {
                                        if x < 0 || x >= w as isize {
                                            continue;
                                        }
                                        x as usize
                                    }
                                };
                                gin[in_base + yy * w + xx] += go * k[k_base + u * kw + v];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new_unchecked(input_shape.to_vec(), gin))
}

/// Adjoint of `conv2d_raw` with respect to the kernel.
pub fn conv2d_kernel_grad(
    grad_out: &Tensor,
    input: &Tensor,
    stride: usize,
    padding: Padding,
    kernel_shape: &[usize],
) -> Result<Tensor> {
    let (b, cout, oh, ow) = grad_out.dims4()?;
    let (_, cin, h, w) = input.dims4()?;
    let (kh, kw) = (kernel_shape[2], kernel_shape[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let g = grad_out.data();
    let xin = input.data();
    let mut gk = vec![0.0; cout * cin * kh * kw];
    for bi in 0..b {
        for co in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let go = g[((bi * cout + co) * oh + i) * ow + j];
                    if go == 0.0 {
                        continue;
                    }
                    for ci in 0..cin {
                        let in_base = ((bi * cin + ci) * h) * w;
                        let k_base = ((co * cin + ci) * kh) * kw;
                        for u in 0..kh {
                            let y = (stride * i + u) as isize - ph as isize;
                            let yy = match padding {
                                Padding::SameCircular => wrap(y, h),
                                Padding::SameZero => {
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    y as usize
                                }
                            };
                            for v in 0..kw {
                                let x = (stride * j + v) as isize - pw as isize;
                                let xx = match padding {
                                    Padding::SameCircular => wrap(x, w),
                                    Padding::SameZero => {
                                        if x < 0 || x >= w as isize {
                                            continue;
                                        }
                                        x as usize
                                    }
                                };
                                gk[k_base + u * kw + v] += go * xin[in_base + yy * w + xx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new_unchecked(kernel_shape.to_vec(), gk))
}

/// Depthwise circular convolution with a small separable blur; used by the
/// anti-aliased downsampling path. The kernel is given as one (kh, kw) stencil
/// applied to every channel independently.
pub fn depthwise_circular(input: &Tensor, stencil: &[f64], kh: usize, kw: usize) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4()?;
    let (ph, pw) = (kh / 2, kw / 2);
    let xin = input.data();
    let mut out = vec![0.0; b * c * h * w];
    for p in 0..b * c {
        let base = p * h * w;
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for u in 0..kh {
                    let yy = wrap(i as isize + u as isize - ph as isize, h);
                    for v in 0..kw {
                        let xx = wrap(j as isize + v as isize - pw as isize, w);
                        acc += xin[base + yy * w + xx] * stencil[u * kw + v];
                    }
                }
                out[base + i * w + j] = acc;
            }
        }
    }
    Ok(Tensor::new_unchecked(vec![b, c, h, w], out))
}
