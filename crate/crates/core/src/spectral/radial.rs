//! Radial power spectra: power binned by rounded radial frequency.

use crate::error::Result;
use crate::spectral::{dft2_plane, Spectrum};
use crate::tensor::Tensor;

/// Sums `|X[k]|^2` into bins indexed by `round(sqrt(cy^2 + cx^2))` in the
/// centered view, channel-summed for rank-3 input.
pub fn radial_spectrum(x: &Tensor) -> Result<Vec<f64>> {
    let (h, w) = x.last2()?;
    let planes = x.outer_planes()?;
    let max_r = ((h / 2) as f64).hypot((w / 2) as f64).round() as usize;
    let mut bins = vec![0.0; max_r + 1];
    for p in 0..planes {
        let spec = dft2_plane(h, w, x.plane(p)?);
        for ky in 0..h {
            let cy = Spectrum::centered_freq(ky, h) as f64;
            for kx in 0..w {
                let cx = Spectrum::centered_freq(kx, w) as f64;
                let bin = cy.hypot(cx).round() as usize;
                bins[bin] += spec.get(ky, kx).norm_sqr();
            }
        }
    }
    Ok(bins)
}
