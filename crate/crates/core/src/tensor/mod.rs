//! Dense 64-bit float tensors.
//!
//! Values are stored row-major. 4-D data uses (batch, channel, height, width)
//! order; spatial operations act on the trailing two axes so the same code
//! serves 2-D images, 3-D channel stacks and 4-D batches.

pub mod conv;
pub mod graph;
pub mod io;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};

/// Dense N-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from raw data, rejecting length mismatches and
    /// non-finite values. Use this for anything that crosses an API boundary.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(CoreError::ShapeMismatch {
                context: "Tensor::from_vec",
                axis: "flat length",
                expected: n,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "Tensor::from_vec",
                index: i,
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for op outputs; skips the finiteness scan.
    pub(crate) fn new_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Standard-normal entries from the given generator.
    pub fn randn<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Interprets the tensor as (batch, channel, height, width).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(CoreError::InvalidArgument(format!(
                "expected rank-4 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Trailing two axes (height, width); errors on rank < 2.
    pub fn last2(&self) -> Result<(usize, usize)> {
        let r = self.shape.len();
        if r < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "need rank >= 2 for spatial ops, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[r - 2], self.shape[r - 1]))
    }

    /// Number of leading planes when viewing the tensor as `[outer, h, w]`.
    pub fn outer_planes(&self) -> Result<usize> {
        let (h, w) = self.last2()?;
        Ok(self.numel() / (h * w))
    }

    /// Borrow the `i`-th trailing (h, w) plane.
    pub fn plane(&self, i: usize) -> Result<&[f64]> {
        let (h, w) = self.last2()?;
        let n = h * w;
        Ok(&self.data[i * n..(i + 1) * n])
    }

    pub fn plane_mut(&mut self, i: usize) -> Result<&mut [f64]> {
        let (h, w) = self.last2()?;
        let n = h * w;
        Ok(&mut self.data[i * n..(i + 1) * n])
    }

    /// Extracts item `i` of a rank-4 batch as a rank-3 tensor.
    pub fn batch_item(&self, i: usize) -> Result<Tensor> {
        let (b, c, h, w) = self.dims4()?;
        if i >= b {
            return Err(CoreError::InvalidArgument(format!(
                "batch index {i} out of range for batch size {b}"
            )));
        }
        let n = c * h * w;
        Ok(Tensor::new_unchecked(
            vec![c, h, w],
            self.data[i * n..(i + 1) * n].to_vec(),
        ))
    }

    /// Stacks rank-3 items into a rank-4 batch.
    pub fn stack_batch(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| {
            CoreError::InvalidArgument("cannot stack an empty batch".into())
        })?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(items.len() * first.numel());
        for it in items {
            it.check_same_shape(first, "Tensor::stack_batch")?;
            data.extend_from_slice(it.data());
        }
        Ok(Tensor::new_unchecked(shape, data))
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance to another tensor of identical shape.
    pub fn dist(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "Tensor::dist")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other, "Tensor::dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "Tensor::add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::new_unchecked(self.shape.clone(), data))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "Tensor::sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::new_unchecked(self.shape.clone(), data))
    }

    pub fn scaled(&self, factor: f64) -> Tensor {
        let data = self.data.iter().map(|v| v * factor).collect();
        Tensor::new_unchecked(self.shape.clone(), data)
    }

    /// Adds `factor * other` in place.
    pub fn axpy(&mut self, factor: f64, other: &Tensor) -> Result<()> {
        self.check_same_shape(other, "Tensor::axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(CoreError::ShapeMismatch {
                context: "Tensor::reshaped",
                axis: "flat length",
                expected: self.numel(),
                got: n,
            });
        }
        Ok(Tensor::new_unchecked(shape.to_vec(), self.data.clone()))
    }

    /// Normalizes to unit Euclidean norm; errors on (near-)zero input.
    pub fn normalized(&self) -> Result<Tensor> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(CoreError::InvalidArgument(
                "cannot normalize a zero tensor".into(),
            ));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub(crate) fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                context,
                axis: "shape",
                expected: self.numel(),
                got: other.numel(),
            });
        }
        Ok(())
    }
}

/// Euclidean norm of a tensor (free-function form used by analysis code).
pub fn l2norm(t: &Tensor) -> f64 {
    t.norm()
}

/// Euclidean distance between two tensors of equal shape.
pub fn l2dist(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.dist(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_length_mismatch() {
        let err = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(&[2], vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn dist_of_equal_tensors_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::randn(&[3, 5], &mut rng);
        assert_eq!(x.dist(&x).unwrap(), 0.0);
    }

    #[test]
    fn dist_matches_pythagoras() {
        let a = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert_eq!(a.dist(&b).unwrap(), 5.0);
    }

    #[test]
    fn dist_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::randn(&[4, 7], &mut rng);
        let b = Tensor::randn(&[4, 7], &mut rng);
        let oracle: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!((a.dist(&b).unwrap() - oracle).abs() <= 1e-12);
    }

    #[test]
    fn dist_shape_mismatch_is_error() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(a.dist(&b).is_err());
    }

    #[test]
    fn randn_is_deterministic_per_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::randn(&[16], &mut r1);
        let b = Tensor::randn(&[16], &mut r2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
