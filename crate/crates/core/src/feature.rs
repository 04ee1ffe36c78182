//! Pre-image lists with an attached kernel.
//!
//! A [`FeatureMatrix`] never exposes feature vectors directly; every other
//! module reaches feature-space inner products through [`FeatureMatrix::gram`]
//! and [`FeatureMatrix::cross_gram`].

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix};

/// Kernel family and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum KernelSpec {
    /// `k(x, y) = x · y`
    #[default]
    Linear,
    /// `k(x, y) = exp(-‖x − y‖² / (2·bandwidth²))`
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec::Gaussian { bandwidth })
        } else {
            Err(invalid("gaussian bandwidth must be positive"))
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(-d2 / (2.0 * bandwidth * bandwidth))
            }
        }
    }
}

/// Ordered list of pre-images sharing one ambient dimension and one kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    kernel: KernelSpec,
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    /// An empty list; `dim` may be 0 when the ambient dimension is not known yet.
    pub fn empty(kernel: KernelSpec, dim: usize) -> Self {
        Self { kernel, dim, points: Vec::new() }
    }

    pub fn new(kernel: KernelSpec, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(invalid("pre-images must share one ambient dimension"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("pre-images must be finite"));
        }
        if let KernelSpec::Gaussian { bandwidth } = kernel {
            if !(bandwidth > 0.0) {
                return Err(invalid("gaussian bandwidth must be positive"));
            }
        }
        Ok(Self { kernel, dim, points })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Two lists can be combined when their kernels agree and their ambient
    /// dimensions agree (an empty list adopts the other's dimension).
    pub fn compatible(&self, other: &FeatureMatrix) -> bool {
        self.kernel == other.kernel && (self.is_empty() || other.is_empty() || self.dim == other.dim)
    }

    fn ensure_compatible(&self, other: &FeatureMatrix) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::KernelMismatch)
        }
    }

    /// `k(X, X)`.
    pub fn gram(&self) -> Matrix {
        let n = self.len();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel.eval(&self.points[i], &self.points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `k(X, U)`.
    pub fn cross_gram(&self, other: &FeatureMatrix) -> Result<Matrix> {
        self.ensure_compatible(other)?;
        Ok(Matrix::from_fn(self.len(), other.len(), |i, j| self.kernel.eval(&self.points[i], &other.points[j])))
    }

    /// Pre-images of `self` followed by those of `other`.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.ensure_compatible(other)?;
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        let dim = if self.is_empty() { other.dim } else { self.dim };
        Ok(FeatureMatrix { kernel: self.kernel, dim, points })
    }

    /// Keeps the pre-images at strictly increasing indices `keep`.
    pub fn subset(&self, keep: &[usize]) -> Result<FeatureMatrix> {
        if keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("subset indices must be strictly increasing"));
        }
        if keep.last().is_some_and(|&i| i >= self.len()) {
            return Err(invalid("subset index out of range"));
        }
        Ok(FeatureMatrix { kernel: self.kernel, dim: self.dim, points: keep.iter().map(|&i| self.points[i].clone()).collect() })
    }

    /// Feature-space norm of pre-image `j`, `sqrt(k(x_j, x_j))`.
    pub fn norm(&self, j: usize) -> f64 {
        libm::sqrt(self.kernel.eval(&self.points[j], &self.points[j]).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lin(points: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::new(KernelSpec::Linear, points).unwrap()
    }

    #[test]
    fn unit_vectors_give_identity_gram() {
        assert_eq!(lin(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).gram(), Matrix::identity(2));
    }

    #[test]
    fn gaussian_self_similarity_is_one() {
        let x = FeatureMatrix::new(KernelSpec::gaussian(0.7).unwrap(), vec![vec![0.3, -2.0, 5.0]]).unwrap();
        assert_eq!(x.gram(), Matrix::identity(1));
        assert!(KernelSpec::gaussian(0.0).is_err());
    }

    #[test]
    fn orthogonal_cross_gram_is_zero() {
        let x = lin(vec![vec![1.0, 0.0]]);
        let u = lin(vec![vec![0.0, 1.0]]);
        assert_eq!(x.cross_gram(&u).unwrap(), Matrix::zeros(1, 1));
        assert_eq!(x.cross_gram(&x).unwrap(), x.gram());
    }

    #[test]
    fn mismatches_are_rejected() {
        let x = lin(vec![vec![1.0, 0.0]]);
        let g = FeatureMatrix::new(KernelSpec::gaussian(1.0).unwrap(), vec![vec![1.0, 0.0]]).unwrap();
        let y = lin(vec![vec![1.0, 0.0, 0.0]]);
        assert_eq!(x.cross_gram(&g).unwrap_err(), Error::KernelMismatch);
        assert_eq!(x.concat(&y).unwrap_err(), Error::KernelMismatch);
        assert!(FeatureMatrix::new(KernelSpec::Linear, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn concat_and_subset_edges() {
        let x = lin(vec![vec![1.0, 0.0]]);
        let e = FeatureMatrix::empty(KernelSpec::Linear, 0);
        assert_eq!(x.concat(&e).unwrap(), x);
        assert_eq!(e.concat(&x).unwrap(), x);
        let two = x.concat(&lin(vec![vec![0.0, 1.0]])).unwrap();
        assert_eq!(two.gram(), Matrix::identity(2));
        assert_eq!(two.subset(&[0, 1]).unwrap(), two);
        assert!(two.subset(&[]).unwrap().is_empty());
        assert!(two.subset(&[1, 0]).is_err());
        assert!(two.subset(&[2]).is_err());
        assert_eq!(e.gram().rows(), 0);
    }
}
