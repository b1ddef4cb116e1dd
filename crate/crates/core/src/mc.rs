//! Shared Monte Carlo helpers for the validation oracles: sampling from
//! (possibly singular) multivariate Gaussians and Poisson counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Factor L with L·Lᵀ ≈ Σ for a PSD (possibly singular) symmetric matrix,
/// via eigendecomposition with negative eigenvalues clipped to zero.
pub fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (sigma + sigma.transpose());
    let eig = sym.symmetric_eigen();
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    factor
}

/// One draw from N(mean, L·Lᵀ) given a factor from [`psd_factor`].
pub fn sample_mvn(mean: &DVector<f64>, factor: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + factor * z
}

/// One Poisson draw with mean `lambda` (≥ 0), as f64 counts.
pub fn sample_poisson(lambda: f64, rng: &mut impl Rng) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda).expect("positive finite lambda").sample(rng)
}

/// Accumulates a streaming mean and covariance over vector samples.
pub struct MomentAccumulator {
    n: usize,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            n: 0,
            sum: DVector::zeros(dim),
            cross: DMatrix::zeros(dim, dim),
        }
    }

    pub fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        self.sum += x;
        self.cross.ger(1.0, x, x, 1.0); // cross += x xᵀ, full matrix
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.n += other.n;
        self.sum += &other.sum;
        self.cross += &other.cross;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.sum / self.n as f64
    }

    /// Unbiased sample covariance, mirrored to exact symmetry.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n as f64;
        let mean = self.mean();
        let raw = (&self.cross - n * &mean * mean.transpose()) / (n - 1.0);
        0.5 * (&raw + raw.transpose())
    }
}
