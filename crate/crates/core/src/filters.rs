//! Anti-aliased downsampling primitives and channel padding.
//!
//! Two downsampling filters are supported:
//!
//! * `Binomial`: depthwise circular convolution with the 3x3 stencil
//!   `[1,2,1] (x) [1,2,1] / 16`, then decimation. Unit DC gain; this is the
//!   practical blur-then-subsample kernel.
//! * `Ideal`: exact low-pass mask at the decimation cutoff, then decimation,
//!   then a gain of `s`. The gain makes the operation an isometry on the
//!   retained band (2-D decimation of band-limited content shrinks norms by
//!   exactly `1/s`), which is what the block-level distance arguments need.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spectral::band::{decimate, lowpass, upsample_zero, FrequencyBudget};
use crate::tensor::conv::depthwise_circular;
use crate::tensor::Tensor;

/// Anti-alias kernel used before decimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlurKind {
    Binomial,
    Ideal,
}

const BINOMIAL3: [f64; 9] = [
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    4.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
];

/// Depthwise binomial blur (no decimation).
pub fn binomial_blur(x: &Tensor) -> Result<Tensor> {
    depthwise_circular(x, &BINOMIAL3, 3, 3)
}

/// Cutoff used by the ideal variant when downsampling an extent-`n` grid by
/// `s`: the largest frequency strictly below the post-decimation Nyquist.
pub fn decimation_cutoff(n: usize, s: usize) -> Result<usize> {
    Ok(FrequencyBudget::new(n, s)?.u)
}

/// Anti-aliased downsampling of the trailing two axes: blur (or ideal mask),
/// then keep every `s`-th sample. Both kernels have unit DC gain, so values
/// of smooth content are preserved.
pub fn blur_decimate(x: &Tensor, s: usize, kind: BlurKind) -> Result<Tensor> {
    if s == 1 {
        return Ok(x.clone());
    }
    let (h, w) = x.last2()?;
    if h % s != 0 || w % s != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "downsampling factor {s} does not divide extents {h}x{w}"
        )));
    }
    match kind {
        BlurKind::Binomial => {
            if s != 2 {
                return Err(CoreError::InvalidArgument(
                    "binomial blur-decimate supports factor 2 only".into(),
                ));
            }
            decimate(&binomial_blur(x)?, s)
        }
        BlurKind::Ideal => {
            let u = decimation_cutoff(h.min(w), s)?;
            decimate(&lowpass(x, u)?, s)
        }
    }
}

/// Downsampling as used inside residual blocks. The binomial variant is
/// plain `blur_decimate`; the ideal variant adds a gain of `s`, making it an
/// exact isometry on the retained band (2-D decimation of band-limited
/// content shrinks norms by `1/s`). Block-level distance bounds rely on that
/// isometry.
pub fn block_downsample(x: &Tensor, s: usize, kind: BlurKind) -> Result<Tensor> {
    let down = blur_decimate(x, s, kind)?;
    Ok(match kind {
        BlurKind::Binomial => down,
        BlurKind::Ideal => {
            if s == 1 {
                down
            } else {
                down.scaled(s as f64)
            }
        }
    })
}

/// Adjoint of `block_downsample`, used by reverse-mode differentiation.
pub fn block_downsample_adjoint(
    grad_out: &Tensor,
    s: usize,
    kind: BlurKind,
    input_shape: &[usize],
) -> Result<Tensor> {
    if s == 1 {
        return Ok(grad_out.clone());
    }
    let r = input_shape.len();
    let (h, w) = (input_shape[r - 2], input_shape[r - 1]);
    match kind {
        BlurKind::Binomial => {
            // Adjoint of decimate is zero insertion; the symmetric stencil is
            // its own adjoint.
            let up = upsample_zero(grad_out, s)?;
            binomial_blur(&up)
        }
        BlurKind::Ideal => {
            let u = decimation_cutoff(h.min(w), s)?;
            let up = upsample_zero(&grad_out.scaled(s as f64), s)?;
            lowpass(&up, u)
        }
    }
}

/// Appends zero-valued channels up to `new_c`; an isometry on distances.
pub fn zero_pad_channels(x: &Tensor, new_c: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if new_c < c {
        return Err(CoreError::ShapeMismatch {
            context: "zero_pad_channels",
            axis: "channels",
            expected: c,
            got: new_c,
        });
    }
    if new_c == c {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(&[b, new_c, h, w]);
    let plane = h * w;
    for bi in 0..b {
        for ci in 0..c {
            let src = &x.data()[((bi * c + ci) * plane)..((bi * c + ci + 1) * plane)];
            let dst_base = (bi * new_c + ci) * plane;
            out.data_mut()[dst_base..dst_base + plane].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Drops appended channels; the adjoint of `zero_pad_channels`.
pub fn take_channels(x: &Tensor, c: usize) -> Result<Tensor> {
    let (b, full_c, h, w) = x.dims4()?;
    if c > full_c {
        return Err(CoreError::ShapeMismatch {
            context: "take_channels",
            axis: "channels",
            expected: full_c,
            got: c,
        });
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[b, c, h, w]);
    for bi in 0..b {
        for ci in 0..c {
            let src_base = (bi * full_c + ci) * plane;
            let dst_base = (bi * c + ci) * plane;
            out.data_mut()[dst_base..dst_base + plane]
                .copy_from_slice(&x.data()[src_base..src_base + plane]);
        }
    }
    Ok(out)
}
