//! Discrete Fourier machinery.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * forward transform is unnormalized: `X[k] = sum_n x[n] exp(-2*pi*i*<k,n>/N)`;
//! * the inverse carries the `1/(H*W)` factor;
//! * pointwise product in space corresponds to `1/(H*W)` times circular
//!   convolution in frequency;
//! * storage is standard DC-at-index-0 layout; a centered accessor maps index
//!   `k` to the signed frequency in `[-floor(N/2), ceil(N/2)-1]`.
//!
//! Power-of-two extents run through an iterative radix-2 transform; other
//! extents fall back to the direct O(N^2) sum, which is fine at the image
//! sizes this crate works at.

pub mod band;
pub mod dominance;
pub mod radial;
pub mod relu_freq;

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Complex 2-D frequency-domain array in standard DFT layout.
#[derive(Debug, Clone)]
pub struct Spectrum {
    h: usize,
    w: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(h: usize, w: usize, coeffs: Vec<Complex64>) -> Spectrum {
        assert_eq!(coeffs.len(), h * w);
        Spectrum { h, w, coeffs }
    }

    pub fn zeros(h: usize, w: usize) -> Spectrum {
        Spectrum {
            h,
            w,
            coeffs: vec![Complex64::new(0.0, 0.0); h * w],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at standard indices `(ky, kx)` with `k` in `0..N`.
    pub fn get(&self, ky: usize, kx: usize) -> Complex64 {
        self.coeffs[ky * self.w + kx]
    }

    /// Coefficient at centered frequencies; `cy`/`cx` may be negative.
    pub fn centered_get(&self, cy: isize, cx: isize) -> Complex64 {
        let ky = cy.rem_euclid(self.h as isize) as usize;
        let kx = cx.rem_euclid(self.w as isize) as usize;
        self.get(ky, kx)
    }

    /// Signed frequency for a standard index on an axis of extent `n`.
    pub fn centered_freq(k: usize, n: usize) -> isize {
        if k < n.div_ceil(2) {
            k as isize
        } else {
            k as isize - n as isize
        }
    }

    /// Sum of squared coefficient magnitudes.
    pub fn total_power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn is_pow2(n: usize) -> bool {
    n >= 2 && n & (n - 1) == 0
}

/// In-place iterative radix-2 Cooley-Tukey; `invert` flips the twiddle sign.
/// No normalization is applied here.
fn fft_radix2(buf: &mut [Complex64], invert: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if invert { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2] * w;
                buf[i + k] = u + v;
                buf[i + k + len / 2] = u - v;
                w *= wlen;
            }
            i += len;
        }
        len <<= 1;
    }
}

fn dft_direct(input: &[Complex64], invert: bool) -> Vec<Complex64> {
    let n = input.len();
    let sign = if invert { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, x) in input.iter().enumerate() {
                let ang = sign * 2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                acc += x * Complex64::new(ang.cos(), ang.sin());
            }
            acc
        })
        .collect()
}

/// Unnormalized 1-D transform of a complex sequence.
pub fn dft1(input: &[Complex64]) -> Vec<Complex64> {
    if is_pow2(input.len()) {
        let mut buf = input.to_vec();
        fft_radix2(&mut buf, false);
        buf
    } else {
        dft_direct(input, false)
    }
}

/// Inverse 1-D transform carrying the 1/N factor.
pub fn idft1(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len() as f64;
    let mut out = if is_pow2(input.len()) {
        let mut buf = input.to_vec();
        fft_radix2(&mut buf, true);
        buf
    } else {
        dft_direct(input, true)
    };
    for c in &mut out {
        *c /= n;
    }
    out
}

/// Unnormalized 1-D transform of a real sequence.
pub fn dft1_real(input: &[f64]) -> Vec<Complex64> {
    let buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft1(&buf)
}

fn transform_2d(h: usize, w: usize, data: &mut [Complex64], invert: bool) {
    // Rows.
    for row in 0..h {
        let slice = &mut data[row * w..(row + 1) * w];
        if is_pow2(w) {
            fft_radix2(slice, invert);
        } else {
            let out = dft_direct(slice, invert);
            slice.copy_from_slice(&out);
        }
    }
    // Columns.
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        if is_pow2(h) {
            fft_radix2(&mut col, invert);
        } else {
            let out = dft_direct(&col, invert);
            col.copy_from_slice(&out);
        }
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// Forward 2-D transform of one (h, w) plane.
pub fn dft2_plane(h: usize, w: usize, plane: &[f64]) -> Spectrum {
    let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(h, w, &mut data, false);
    Spectrum::new(h, w, data)
}

/// Forward 2-D transform of a rank-2 tensor.
pub fn dft2(image: &Tensor) -> Result<Spectrum> {
    let (h, w) = image.last2()?;
    if image.shape().len() != 2 {
        return Err(CoreError::InvalidArgument(format!(
            "dft2 expects a rank-2 tensor, got {:?}",
            image.shape()
        )));
    }
    if h < 2 || w < 2 {
        return Err(CoreError::InvalidArgument(
            "dft2 needs extents >= 2".into(),
        ));
    }
    Ok(dft2_plane(h, w, image.data()))
}

/// Inverse 2-D transform; returns the real part (the imaginary residue of a
/// conjugate-symmetric spectrum is at rounding level and is discarded).
pub fn idft2(spec: &Spectrum) -> Tensor {
    let (h, w) = spec.shape();
    let mut data = spec.coeffs().to_vec();
    transform_2d(h, w, &mut data, true);
    let scale = 1.0 / (h * w) as f64;
    let real: Vec<f64> = data.iter().map(|c| c.re * scale).collect();
    Tensor::new_unchecked(vec![h, w], real)
}

/// Inverse 2-D transform keeping the complex values.
pub fn idft2_complex(spec: &Spectrum) -> Vec<Complex64> {
    let (h, w) = spec.shape();
    let mut data = spec.coeffs().to_vec();
    transform_2d(h, w, &mut data, true);
    let scale = 1.0 / (h * w) as f64;
    for c in &mut data {
        *c *= scale;
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Quadruple-loop reference DFT.
    fn dft2_oracle(h: usize, w: usize, x: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((ky * y) as f64 / h as f64 + (kx * xx) as f64 / w as f64);
                        acc += x[y * w + xx] * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                out[ky * w + kx] = acc;
            }
        }
        out
    }

    #[test]
    fn delta_image_has_flat_spectrum() {
        let mut img = Tensor::zeros(&[4, 4]);
        img.data_mut()[0] = 1.0;
        let s = dft2(&img).unwrap();
        for c in s.coeffs() {
            assert!((c.re - 1.0).abs() <= 1e-12 && c.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_image_is_pure_dc() {
        let img = Tensor::filled(&[8, 8], 2.5);
        let s = dft2(&img).unwrap();
        assert!((s.get(0, 0).re - 2.5 * 64.0).abs() <= 1e-9);
        for ky in 0..8 {
            for kx in 0..8 {
                if ky == 0 && kx == 0 {
                    continue;
                }
                assert!(s.get(ky, kx).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn matches_quadruple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &n in &[4usize, 8, 6] {
            let img = Tensor::randn(&[n, n], &mut rng);
            let s = dft2(&img).unwrap();
            let o = dft2_oracle(n, n, img.data());
            for (a, b) in s.coeffs().iter().zip(&o) {
                assert!((a - b).norm() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_of_forward_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for &n in &[4usize, 8, 5, 12] {
            let img = Tensor::randn(&[n, n], &mut rng);
            let back = idft2(&dft2(&img).unwrap());
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn conjugate_symmetry_of_real_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Tensor::randn(&[8, 8], &mut rng);
        let s = dft2(&img).unwrap();
        for ky in 0..8isize {
            for kx in 0..8isize {
                let a = s.centered_get(-ky, -kx);
                let b = s.centered_get(ky, kx).conj();
                assert!((a - b).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let img = Tensor::randn(&[8, 8], &mut rng);
            let s = dft2(&img).unwrap();
            let space: f64 = img.data().iter().map(|v| v * v).sum();
            let freq = s.total_power() / 64.0;
            assert!((space - freq).abs() <= 1e-9 * space.max(1.0));
        }
    }

    #[test]
    fn centered_freq_layout() {
        assert_eq!(Spectrum::centered_freq(0, 8), 0);
        assert_eq!(Spectrum::centered_freq(3, 8), 3);
        assert_eq!(Spectrum::centered_freq(4, 8), -4);
        assert_eq!(Spectrum::centered_freq(7, 8), -1);
        assert_eq!(Spectrum::centered_freq(2, 5), 2);
        assert_eq!(Spectrum::centered_freq(3, 5), -2);
    }
}
