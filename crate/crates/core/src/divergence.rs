//! Closed-form Bhattacharyya distance and Kullback-Leibler divergence between
//! whole-object Gaussian measurement distributions. Pixels are statistically
//! independent, so the object density is the product over pixels and both
//! divergences are sums of per-pixel terms.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward::PixelDistribution;

const LN_2PI_E: f64 = 2.8378770664093453; // ln(2*pi*e)
const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Measurement distribution of one object: an ordered list of independent
/// per-pixel Gaussians, all with the same bin count.
#[derive(Debug, Clone)]
pub struct ObjectDistribution {
    pixels: Vec<PixelDistribution>,
}

impl ObjectDistribution {
    pub fn new(pixels: Vec<PixelDistribution>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::Invalid("object needs at least one pixel".into()));
        }
        let m = pixels[0].n_bins();
        for (n, p) in pixels.iter().enumerate() {
            if p.n_bins() != m {
                return Err(Error::Invalid(format!(
                    "pixel {n} has {} bins, pixel 0 has {m}",
                    p.n_bins()
                )));
            }
        }
        Ok(ObjectDistribution { pixels })
    }

    pub fn pixels(&self) -> &[PixelDistribution] {
        &self.pixels
    }

    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn n_bins(&self) -> usize {
        self.pixels[0].n_bins()
    }
}

/// One pixel's Gaussian prepared for repeated divergence evaluations:
/// Cholesky-derived log-determinant and explicit inverse of Σ_total.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPixel {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub inv: DMatrix<f64>,
    pub logdet: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedObject {
    pub pixels: Vec<PreparedPixel>,
}

impl PreparedObject {
    /// Log-density of a full measurement (one vector per pixel) under the
    /// object's Gaussian; pixels are independent, so the terms add.
    pub(crate) fn log_density(&self, x: &[DVector<f64>]) -> f64 {
        debug_assert_eq!(x.len(), self.pixels.len());
        self.pixels
            .iter()
            .zip(x)
            .map(|(p, xn)| {
                let d = xn - &p.mean;
                let quad = d.dot(&(&p.inv * &d));
                -0.5 * (p.mean.len() as f64 * LN_2PI + p.logdet + quad)
            })
            .sum()
    }
}

fn chol_logdet(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub(crate) fn prepare(obj: &ObjectDistribution) -> Result<PreparedObject> {
    let pixels = obj
        .pixels
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let chol = Cholesky::new(p.sigma_total.clone()).ok_or_else(|| {
                Error::NotPositiveDefinite {
                    context: format!("pixel {n} total covariance"),
                }
            })?;
            let logdet = chol_logdet(&chol);
            let inv = chol.inverse();
            Ok(PreparedPixel {
                mean: p.jd0.clone(),
                cov: p.sigma_total.clone(),
                inv,
                logdet,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedObject { pixels })
}

fn check_compatible(a: &PreparedObject, b: &PreparedObject) -> Result<()> {
    if a.pixels.len() != b.pixels.len() {
        return Err(Error::Invalid(format!(
            "objects have {} and {} pixels",
            a.pixels.len(),
            b.pixels.len()
        )));
    }
    for (n, (pa, pb)) in a.pixels.iter().zip(&b.pixels).enumerate() {
        if pa.mean.len() != pb.mean.len() {
            return Err(Error::Invalid(format!(
                "pixel {n} bin counts differ: {} vs {}",
                pa.mean.len(),
                pb.mean.len()
            )));
        }
    }
    Ok(())
}

/// Clamps the tiny negative values that exact-zero divergences produce
/// through log-determinant roundoff. Anything beyond the slack is a real
/// defect and is returned as-is for the caller's property checks to catch.
fn clamp_nonneg(v: f64) -> f64 {
    if v < 0.0 && v > -1e-9 {
        0.0
    } else {
        v
    }
}

pub(crate) fn bhattacharyya_prepared(a: &PreparedObject, b: &PreparedObject) -> Result<f64> {
    check_compatible(a, b)?;
    let mut total = 0.0;
    for (n, (pa, pb)) in a.pixels.iter().zip(&b.pixels).enumerate() {
        let m = pa.mean.len() as f64;
        let sum_cov = &pa.cov + &pb.cov;
        let chol = Cholesky::new(sum_cov).ok_or_else(|| Error::NotPositiveDefinite {
            context: format!("pixel {n} covariance sum"),
        })?;
        let logdet_sum = chol_logdet(&chol);
        let dj = &pa.mean - &pb.mean;
        let quad = dj.dot(&chol.solve(&dj));
        total += 0.25 * quad - 0.25 * (pa.logdet + pb.logdet) + 0.5 * logdet_sum
            - 0.5 * m * std::f64::consts::LN_2;
    }
    Ok(clamp_nonneg(total))
}

pub(crate) fn kl_prepared(a: &PreparedObject, b: &PreparedObject) -> Result<f64> {
    check_compatible(a, b)?;
    let mut total = 0.0;
    for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
        let m = pa.mean.len() as f64;
        let dj = &pa.mean - &pb.mean;
        let quad = dj.dot(&(&pb.inv * &dj));
        // tr(Σ_j⁻¹ Σ_i) as an elementwise product; both matrices symmetric.
        let trace: f64 = pb
            .inv
            .iter()
            .zip(pa.cov.iter())
            .map(|(x, y)| x * y)
            .sum();
        total += 0.5 * (quad - pa.logdet + pb.logdet + trace - m);
    }
    Ok(clamp_nonneg(total))
}

pub(crate) fn entropy_prepared(a: &PreparedObject) -> f64 {
    a.pixels
        .iter()
        .map(|p| 0.5 * (p.mean.len() as f64 * LN_2PI_E + p.logdet))
        .sum()
}

/// Bhattacharyya distance between two object distributions (symmetric, ≥ 0):
/// per pixel, ΔJᵀ(Σᵢ+Σⱼ)⁻¹ΔJ/4 + ½ln|Σᵢ+Σⱼ| − ¼ln|Σᵢ||Σⱼ| − (M/2)ln 2.
pub fn bhattacharyya(obj_i: &ObjectDistribution, obj_j: &ObjectDistribution) -> Result<f64> {
    bhattacharyya_prepared(&prepare(obj_i)?, &prepare(obj_j)?)
}

/// KL divergence KL(pr_i ‖ pr_j) between object distributions (asymmetric, ≥ 0).
pub fn kl(obj_i: &ObjectDistribution, obj_j: &ObjectDistribution) -> Result<f64> {
    kl_prepared(&prepare(obj_i)?, &prepare(obj_j)?)
}

/// Differential entropy of the object's Gaussian, nats:
/// Σ_n ½·ln((2πe)^M·|Σ_n|).
pub fn gaussian_entropy(obj: &ObjectDistribution) -> Result<f64> {
    Ok(entropy_prepared(&prepare(obj)?))
}
