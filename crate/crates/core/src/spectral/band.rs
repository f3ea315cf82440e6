//! Frequency budgets, the ideal low-pass projection, decimation and
//! zero-insertion upsampling.
//!
//! The low-pass projection `H_u` keeps, in centered coordinates, all
//! coefficients with `max(|ky|, |kx|) <= u`. For even extents the Nyquist
//! row/column is always dropped: its phase is ambiguous under decimation and
//! keeping it would break commutation between projection and decimation.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spectral::{dft2_plane, idft2, Spectrum};
use crate::tensor::Tensor;

/// Cutoff bookkeeping for a feature map of extent `n` with `d` remaining
/// downsampling: content at or below `u` survives to the final grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyBudget {
    /// Spatial extent of the grid the budget applies to.
    pub n: usize,
    /// Remaining total downsampling factor.
    pub d: usize,
    /// Cutoff: the largest integer strictly below `n / (2 d)`.
    pub u: usize,
    /// Highest representable frequency per axis, `floor(n/2)`.
    pub u_max: usize,
}

impl FrequencyBudget {
    pub fn new(n: usize, d: usize) -> Result<FrequencyBudget> {
        if d == 0 {
            return Err(CoreError::InvalidArgument(
                "downsampling factor must be positive".into(),
            ));
        }
        // Largest integer strictly less than n / (2 d).
        let q = n as f64 / (2.0 * d as f64);
        let mut u = q.floor() as usize;
        if (u as f64 - q).abs() < 1e-12 && u > 0 {
            u -= 1;
        }
        Ok(FrequencyBudget {
            n,
            d,
            u,
            u_max: n / 2,
        })
    }
}

/// True when the centered frequency pair survives the cutoff `u` on an
/// (h, w) grid. Nyquist bins of even extents never survive.
pub fn band_keeps(cy: isize, cx: isize, h: usize, w: usize, u: usize) -> bool {
    let ay = cy.unsigned_abs();
    let ax = cx.unsigned_abs();
    if ay > u || ax > u {
        return false;
    }
    if h % 2 == 0 && ay == h / 2 {
        return false;
    }
    if w % 2 == 0 && ax == w / 2 {
        return false;
    }
    true
}

/// Zeroes all spectrum coefficients above the cutoff, in place.
pub fn lowpass_spectrum(spec: &mut Spectrum, u: usize) {
    let (h, w) = spec.shape();
    for ky in 0..h {
        let cy = Spectrum::centered_freq(ky, h);
        for kx in 0..w {
            let cx = Spectrum::centered_freq(kx, w);
            if !band_keeps(cy, cx, h, w, u) {
                spec.coeffs_mut()[ky * w + kx] = num_complex::Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Applies the ideal low-pass projection to every trailing (h, w) plane.
/// The mask is conjugate-symmetric, so real input yields real output.
pub fn lowpass(image: &Tensor, u: usize) -> Result<Tensor> {
    let (h, w) = image.last2()?;
    if u > h / 2 || u > w / 2 {
        return Err(CoreError::InvalidArgument(format!(
            "cutoff {u} exceeds representable band of {h}x{w}"
        )));
    }
    let planes = image.outer_planes()?;
    let mut out = Tensor::zeros(image.shape());
    for p in 0..planes {
        let mut spec = dft2_plane(h, w, image.plane(p)?);
        lowpass_spectrum(&mut spec, u);
        let filtered = idft2(&spec);
        out.plane_mut(p)?.copy_from_slice(filtered.data());
    }
    Ok(out)
}

/// Complement of the low-pass projection.
pub fn highpass(image: &Tensor, u: usize) -> Result<Tensor> {
    let low = lowpass(image, u)?;
    image.sub(&low)
}

/// Keeps every `s`-th sample of the trailing two axes, starting at index 0.
pub fn decimate(image: &Tensor, s: usize) -> Result<Tensor> {
    if s == 0 {
        return Err(CoreError::InvalidArgument("decimation factor must be >= 1".into()));
    }
    let (h, w) = image.last2()?;
    if h % s != 0 || w % s != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "decimation factor {s} does not divide extents {h}x{w}"
        )));
    }
    let planes = image.outer_planes()?;
    let (oh, ow) = (h / s, w / s);
    let mut shape = image.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    let mut data = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = image.plane(p)?;
        for i in 0..oh {
            for j in 0..ow {
                data[(p * oh + i) * ow + j] = src[(s * i) * w + s * j];
            }
        }
    }
    Ok(Tensor::new_unchecked(shape, data))
}

/// Inserts `s - 1` zeros between samples along the trailing two axes; the
/// adjoint of `decimate`.
pub fn upsample_zero(image: &Tensor, s: usize) -> Result<Tensor> {
    let (h, w) = image.last2()?;
    let planes = image.outer_planes()?;
    let (oh, ow) = (h * s, w * s);
    let mut shape = image.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    let mut data = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = image.plane(p)?;
        for i in 0..h {
            for j in 0..w {
                data[(p * oh + s * i) * ow + s * j] = src[i * w + j];
            }
        }
    }
    Ok(Tensor::new_unchecked(shape, data))
}

/// Round trip used by the reconstruction tests: low-pass to the cutoff,
/// decimate by `s`, upsample by zero insertion, rescale by `s^2` and
/// low-pass again. Exact for content below `n/(2s)`.
pub fn reconstruct_through_decimation(image: &Tensor, s: usize, u: usize) -> Result<Tensor> {
    let banded = lowpass(image, u)?;
    let small = decimate(&banded, s)?;
    let up = upsample_zero(&small, s)?;
    let scaled = up.scaled((s * s) as f64);
    lowpass(&scaled, u)
}

/// Real cosine mode `cos(2*pi*(ky*y + kx*x)/n)` on an n-by-n grid.
pub fn cosine_mode(n: usize, ky: usize, kx: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for y in 0..n {
        for x in 0..n {
            let ang = 2.0 * std::f64::consts::PI * ((ky * y + kx * x) as f64) / n as f64;
            t.data_mut()[y * n + x] = ang.cos();
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_cutoffs() {
        assert_eq!(FrequencyBudget::new(16, 4).unwrap().u, 1);
        assert_eq!(FrequencyBudget::new(16, 2).unwrap().u, 3);
        assert_eq!(FrequencyBudget::new(16, 1).unwrap().u, 7);
        assert_eq!(FrequencyBudget::new(8, 2).unwrap().u, 1);
        assert_eq!(FrequencyBudget::new(9, 1).unwrap().u, 4);
        assert_eq!(FrequencyBudget::new(16, 8).unwrap().u, 0);
        assert_eq!(FrequencyBudget::new(16, 1).unwrap().u_max, 8);
    }

    #[test]
    fn budget_identity_on_representable_band_when_d_is_one() {
        // Odd extent: H_u with the D=1 budget keeps everything.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = Tensor::randn(&[9, 9], &mut rng);
        let b = FrequencyBudget::new(9, 1).unwrap();
        let out = lowpass(&img, b.u).unwrap();
        for (a, c) in img.data().iter().zip(out.data()) {
            assert!((a - c).abs() <= 1e-10);
        }
    }

    #[test]
    fn lowpass_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let img = Tensor::randn(&[8, 8], &mut rng);
        let once = lowpass(&img, 2).unwrap();
        let twice = lowpass(&once, 2).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn lowpass_keeps_sub_cutoff_mode() {
        let m = cosine_mode(8, 1, 2);
        let out = lowpass(&m, 2).unwrap();
        for (a, b) in m.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn lowpass_kills_supra_cutoff_mode() {
        let m = cosine_mode(8, 0, 3);
        let out = lowpass(&m, 2).unwrap();
        for v in out.data() {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn lowpass_is_non_expansive_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let x = Tensor::randn(&[8, 8], &mut rng);
            let y = Tensor::randn(&[8, 8], &mut rng);
            let hx = lowpass(&x, 2).unwrap();
            let hy = lowpass(&y, 2).unwrap();
            assert!(hx.norm() <= x.norm() + 1e-12);
            // <Hx, y> == <x, Hy>
            let lhs = hx.dot(&y).unwrap();
            let rhs = x.dot(&hy).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9);
        }
    }

    #[test]
    fn decimate_keeps_every_sth_sample() {
        let t = Tensor::from_vec(&[4, 4], (0..16).map(|v| v as f64).collect()).unwrap();
        let d = decimate(&t, 2).unwrap();
        assert_eq!(d.shape(), &[2, 2]);
        assert_eq!(d.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn decimate_rejects_non_divisible() {
        let t = Tensor::zeros(&[5, 5]);
        assert!(decimate(&t, 2).is_err());
    }

    #[test]
    fn alias_fold_of_supra_nyquist_mode() {
        // Mode 3 on an 8-grid decimated by 2 lands on the same samples as
        // mode 1 on the 4-grid.
        let high = cosine_mode(8, 0, 3);
        let dec = decimate(&high, 2).unwrap();
        let folded = cosine_mode(4, 0, 1);
        for (a, b) in dec.data().iter().zip(folded.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sub_nyquist_mode_passes_through() {
        let low = cosine_mode(8, 0, 1);
        let dec = decimate(&low, 2).unwrap();
        let same = cosine_mode(4, 0, 1);
        for (a, b) in dec.data().iter().zip(same.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn band_limited_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let raw = Tensor::randn(&[16, 16], &mut rng);
        let s = 2;
        let u = 3; // strictly below 16 / (2*2) = 4
        let banded = lowpass(&raw, u).unwrap();
        let rec = reconstruct_through_decimation(&banded, s, u).unwrap();
        for (a, b) in banded.data().iter().zip(rec.data()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
}
