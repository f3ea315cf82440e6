//! Dominant-window checks on spectra and the interval bound for convolved
//! measures.
//!
//! A centered window dominates a magnitude field when it carries at least as
//! much mass as every cyclic translate of the same size. Mass is the sum of
//! coefficient magnitudes (not squared power), matching the measure-style
//! argument the contraction analysis rests on.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spectral::{dft2_plane, Spectrum};
use crate::tensor::Tensor;

/// Outcome of a dominance check at window half-width `u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominanceReport {
    pub window_halfwidth: usize,
    /// Mass of the centered (2u+1) x (2u+1) window.
    pub dominant_mass: f64,
    /// Best mass over all cyclic translates of that window.
    pub max_translate_mass: f64,
    pub is_dominant: bool,
}

/// Magnitude field of a spectrum, channel-summed for multi-channel inputs.
fn magnitude_field(x: &Tensor) -> Result<(usize, usize, Vec<f64>)> {
    let (h, w) = x.last2()?;
    let planes = x.outer_planes()?;
    let mut mags = vec![0.0; h * w];
    for p in 0..planes {
        let spec = dft2_plane(h, w, x.plane(p)?);
        for (m, c) in mags.iter_mut().zip(spec.coeffs()) {
            *m += c.norm();
        }
    }
    Ok((h, w, mags))
}

/// Unique wrapped indices of a centered run of length `2u+1`; when the run
/// is at least as long as the axis it covers every index exactly once.
fn window_indices(center: isize, u: usize, n: usize) -> Vec<usize> {
    if 2 * u + 1 >= n {
        return (0..n).collect();
    }
    (-(u as isize)..=(u as isize))
        .map(|d| (center + d).rem_euclid(n as isize) as usize)
        .collect()
}

fn window_mass(mags: &[f64], h: usize, w: usize, u: usize, cy: isize, cx: isize) -> f64 {
    let rows = window_indices(cy, u, h);
    let cols = window_indices(cx, u, w);
    let mut acc = 0.0;
    for ky in &rows {
        for kx in &cols {
            acc += mags[ky * w + kx];
        }
    }
    acc
}

fn dominance_from_field(h: usize, w: usize, mags: &[f64], u: usize) -> Result<DominanceReport> {
    if u > h / 2 || u > w / 2 {
        return Err(CoreError::InvalidArgument(format!(
            "window half-width {u} exceeds representable band of {h}x{w}"
        )));
    }
    let centered = window_mass(mags, h, w, u, 0, 0);
    let mut best = f64::NEG_INFINITY;
    for cy in 0..h as isize {
        for cx in 0..w as isize {
            let m = window_mass(mags, h, w, u, cy, cx);
            if m > best {
                best = m;
            }
        }
    }
    Ok(DominanceReport {
        window_halfwidth: u,
        dominant_mass: centered,
        max_translate_mass: best,
        is_dominant: centered >= best - 1e-12 * best.abs().max(1.0),
    })
}

/// Checks whether the centered window dominates the spectrum of `x`
/// (rank 2 or 3; channels are magnitude-summed before windowing).
pub fn dominance_check(x: &Tensor, u: usize) -> Result<DominanceReport> {
    let (h, w, mags) = magnitude_field(x)?;
    dominance_from_field(h, w, &mags, u)
}

/// Same check on an already-computed spectrum.
pub fn dominance_check_spectrum(spec: &Spectrum, u: usize) -> Result<DominanceReport> {
    let (h, w) = spec.shape();
    let mags: Vec<f64> = spec.coeffs().iter().map(|c| c.norm()).collect();
    dominance_from_field(h, w, &mags, u)
}

/// Circular convolution of two nonnegative 1-D measures. `g` must sum to at
/// most 1; under that normalization no interval of the result can carry more
/// mass than the corresponding dominant interval of `f`.
pub fn convolve_measures(f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if f.len() != g.len() {
        return Err(CoreError::ShapeMismatch {
            context: "convolve_measures",
            axis: "length",
            expected: f.len(),
            got: g.len(),
        });
    }
    if let Some(v) = f.iter().chain(g.iter()).find(|v| **v < 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "measures must be nonnegative, got {v}"
        )));
    }
    let gsum: f64 = g.iter().sum();
    if gsum > 1.0 + 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "g must be (sub-)normalized, sums to {gsum}"
        )));
    }
    let n = f.len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, gj) in g.iter().enumerate() {
            acc += gj * f[(i + n - j) % n];
        }
        *o = acc;
    }
    Ok(out)
}

/// Mass of the cyclic interval `[start, start+len)` of a 1-D measure.
pub fn interval_mass(f: &[f64], start: usize, len: usize) -> f64 {
    let n = f.len();
    (0..len).map(|k| f[(start + k) % n]).sum()
}
