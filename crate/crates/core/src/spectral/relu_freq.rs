//! The rectifier viewed in the frequency domain.
//!
//! For an image `x` with active-set mask `m = I[x > 0]`, the rectifier is the
//! pointwise product `x . m`, so in frequency it is a circular convolution of
//! the image spectrum with the mask spectrum, scaled by `1/(H*W)` under this
//! crate's transform conventions.

use num_complex::Complex64;

use crate::error::Result;
use crate::spectral::{dft2, Spectrum};
use crate::tensor::Tensor;

/// DFT of the binary mask `I[x > 0]`.
pub fn mask_spectrum(x: &Tensor) -> Result<Spectrum> {
    let mask_data: Vec<f64> = x.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let mask = Tensor::new_unchecked(x.shape().to_vec(), mask_data);
    dft2(&mask)
}

/// Direct circular convolution of two spectra on the same grid, O(N^4).
pub fn convolve_spectra(a: &Spectrum, b: &Spectrum) -> Spectrum {
    let (h, w) = a.shape();
    let mut out = Spectrum::zeros(h, w);
    for ky in 0..h {
        for kx in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for qy in 0..h {
                for qx in 0..w {
                    let ry = (ky + h - qy) % h;
                    let rx = (kx + w - qx) % w;
                    acc += a.get(qy, qx) * b.get(ry, rx);
                }
            }
            out.coeffs_mut()[ky * w + kx] = acc;
        }
    }
    out
}

/// Spectrum of `relu(x)` computed without ever rectifying in space:
/// `(1/(H*W)) * (M(x) (*) X)` by direct convolution in the frequency domain.
pub fn relu_via_frequency(x: &Tensor) -> Result<Spectrum> {
    let (h, w) = x.last2()?;
    let xs = dft2(x)?;
    let ms = mask_spectrum(x)?;
    let mut conv = convolve_spectra(&ms, &xs);
    let scale = 1.0 / (h * w) as f64;
    for c in conv.coeffs_mut() {
        *c *= scale;
    }
    Ok(conv)
}
