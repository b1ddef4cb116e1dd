//! The three measurement-noise models built from one set of binned count
//! statistics, the correlated-vs-uncorrelated covariance comparison, and the
//! noise-ellipsoid volume ratio.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forward::{self, BinnedCounts, PixelDistribution, PixelFlags};
use crate::scenario::config::ModelVariant;

/// Relative diagonal jitter keeping the material-only covariance positive
/// definite when the binned material covariance is rank deficient.
pub const MATERIAL_ONLY_JITTER: f64 = 1e-9;

/// Floor, relative to the trace, below which ellipsoid eigenvalues are
/// treated as numerically zero directions and lifted.
const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Builds one pixel's measurement distribution under the chosen noise model.
pub fn build_model_variant(counts: &BinnedCounts, variant: ModelVariant) -> Result<PixelDistribution> {
    match variant {
        ModelVariant::ShotOnly => {
            let m = counts.jd0.len();
            forward::combine_shot_noise(&BinnedCounts {
                jd0: counts.jd0.clone(),
                sigma_material: DMatrix::zeros(m, m),
            })
        }
        ModelVariant::MaterialOnly => {
            let trace = counts.sigma_material.trace();
            if !(trace > 0.0) {
                return Err(Error::Degenerate(format!(
                    "material-only model needs material variability; \
                     covariance trace is {trace}"
                )));
            }
            let m = counts.jd0.len();
            let mut sigma_total = counts.sigma_material.clone();
            for i in 0..m {
                sigma_total[(i, i)] += MATERIAL_ONLY_JITTER * trace;
            }
            Ok(PixelDistribution {
                jd0: counts.jd0.clone(),
                sigma_material: counts.sigma_material.clone(),
                sigma_total,
                flags: PixelFlags::default(),
            })
        }
        ModelVariant::Combined => forward::combine_shot_noise(counts),
    }
}

/// Drops every off-diagonal element: the uncorrelated-noise covariance.
pub fn decorrelate(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(sigma.nrows(), sigma.ncols(), "covariance must be square");
    DMatrix::from_diagonal(&sigma.diagonal())
}

/// Half log-volume (up to the shared unit-ball constant) of the covariance
/// ellipsoid: ½·Σ ln λ, with near-zero eigenvalues floored at
/// 10⁻¹²·trace. `floor_zeros = false` turns a zero eigenvalue into an error
/// instead.
fn half_log_volume(sigma: &DMatrix<f64>, floor_zeros: bool, what: &str) -> Result<f64> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::Invalid(format!(
            "{what} covariance is {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let trace = sigma.trace();
    if !(trace > 0.0) {
        return Err(Error::Degenerate(format!(
            "{what} covariance has trace {trace}"
        )));
    }
    let floor = EIGENVALUE_FLOOR * trace;
    let eigen = sigma.clone().symmetric_eigen();
    let mut acc = 0.0;
    for &lambda in eigen.eigenvalues.iter() {
        if lambda < floor {
            if !floor_zeros {
                return Err(Error::Degenerate(format!(
                    "{what} covariance has a non-positive eigenvalue {lambda}"
                )));
            }
            acc += floor.ln();
        } else {
            acc += lambda.ln();
        }
    }
    Ok(0.5 * acc)
}

/// Ratio of noise-ellipsoid volumes r = √det(Σ_corr)/√det(Σ_uncorr). The
/// principal semi-axes are the square roots of the eigenvalues, so the volume
/// is proportional to √det. Rank-deficient correlated covariances are floored;
/// a singular uncorrelated covariance is an error.
pub fn ellipsoid_volume_ratio(
    sigma_corr: &DMatrix<f64>,
    sigma_uncorr: &DMatrix<f64>,
) -> Result<f64> {
    if sigma_corr.shape() != sigma_uncorr.shape() {
        return Err(Error::Invalid(format!(
            "covariance shapes differ: {:?} vs {:?}",
            sigma_corr.shape(),
            sigma_uncorr.shape()
        )));
    }
    let corr = half_log_volume(sigma_corr, true, "correlated")?;
    let uncorr = half_log_volume(sigma_uncorr, false, "uncorrelated")?;
    Ok((corr - uncorr).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn counts(jd0: &[f64], sigma: &[f64]) -> BinnedCounts {
        let m = jd0.len();
        BinnedCounts {
            jd0: DVector::from_row_slice(jd0),
            sigma_material: DMatrix::from_row_slice(m, m, sigma),
        }
    }

    #[test]
    fn combined_minus_shot_is_material_exactly() {
        let c = counts(&[100.0, 50.0], &[4.0, 1.0, 1.0, 9.0]);
        let combined = build_model_variant(&c, ModelVariant::Combined).unwrap();
        let shot = build_model_variant(&c, ModelVariant::ShotOnly).unwrap();
        let diff = &combined.sigma_total - &shot.sigma_total;
        assert_eq!(diff, c.sigma_material);
        assert_eq!(shot.sigma_total, DMatrix::from_diagonal(&c.jd0));
        assert_eq!(shot.sigma_material, DMatrix::zeros(2, 2));
    }

    #[test]
    fn material_only_gets_trace_scaled_jitter() {
        let c = counts(&[100.0, 50.0], &[4.0, 2.0, 2.0, 1.0]);
        let mat = build_model_variant(&c, ModelVariant::MaterialOnly).unwrap();
        let expected_jitter = MATERIAL_ONLY_JITTER * 5.0;
        assert!((mat.sigma_total[(0, 0)] - (4.0 + expected_jitter)).abs() < 1e-18);
        assert_eq!(mat.sigma_total[(0, 1)], 2.0);
        assert!(!mat.flags.low_count);
    }

    #[test]
    fn material_only_rejects_zero_variability() {
        let c = counts(&[100.0], &[0.0]);
        assert!(build_model_variant(&c, ModelVariant::MaterialOnly).is_err());
    }

    #[test]
    fn shot_only_flags_low_counts() {
        let c = counts(&[5.0], &[1.0]);
        let shot = build_model_variant(&c, ModelVariant::ShotOnly).unwrap();
        assert!(shot.flags.low_count);
    }

    #[test]
    fn decorrelate_keeps_diagonal_only() {
        let sigma = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 2.0]);
        let d = decorrelate(&sigma);
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]));
        assert_eq!(decorrelate(&d), d);
    }

    #[test]
    fn one_bin_correlated_variance_is_total_sum() {
        // Binned through a single all-pass bin, the correlated variance is
        // the sum of all covariance entries; the uncorrelated variance is
        // the diagonal sum, never larger when entries are nonnegative.
        let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let ones = DMatrix::from_element(1, 3, 1.0);
        let corr = (&ones * &sigma * ones.transpose())[(0, 0)];
        let uncorr = (&ones * decorrelate(&sigma) * ones.transpose())[(0, 0)];
        assert!((corr - sigma.iter().sum::<f64>()).abs() < 1e-12);
        assert!((uncorr - sigma.trace()).abs() < 1e-12);
        assert!(corr >= uncorr);
    }

    #[test]
    fn rank_one_binned_concentration_factor() {
        // Σ_J = u·uᵀ binned into one bin with weights w:
        // corr/uncorr = (Σ wᵢuᵢ)² / Σ wᵢ²uᵢ². For w = 1, u = 1 on R cells
        // this is the R-fold concentration factor.
        let r = 6;
        let u = DVector::from_iterator(r, (0..r).map(|i| 1.0 + 0.3 * i as f64));
        let w = DVector::from_iterator(r, (0..r).map(|i| 0.5 + 0.1 * i as f64));
        let sigma = &u * u.transpose();
        let wt = DMatrix::from_fn(1, r, |_, j| w[j]);
        let corr = (&wt * &sigma * wt.transpose())[(0, 0)];
        let uncorr = (&wt * decorrelate(&sigma) * wt.transpose())[(0, 0)];
        let dot = w.dot(&u);
        let expected = dot * dot / w.iter().zip(u.iter()).map(|(a, b)| (a * b).powi(2)).sum::<f64>();
        assert!((corr / uncorr - expected).abs() < 1e-12);
        let ones_sigma = DMatrix::from_element(r, r, 1.0);
        let ones_w = DMatrix::from_element(1, r, 1.0);
        let c1 = (&ones_w * &ones_sigma * ones_w.transpose())[(0, 0)];
        let u1 = (&ones_w * decorrelate(&ones_sigma) * ones_w.transpose())[(0, 0)];
        assert!((c1 / u1 - r as f64).abs() < 1e-12);
    }

    #[test]
    fn volume_ratio_reference_values() {
        let diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!((ellipsoid_volume_ratio(&diag, &diag).unwrap() - 1.0).abs() < 1e-12);

        let rho = 0.6;
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let uncorr = decorrelate(&corr);
        let r = ellipsoid_volume_ratio(&corr, &uncorr).unwrap();
        assert!((r - (1.0f64 - rho * rho).sqrt()).abs() < 1e-12, "r = {r}");
    }

    #[test]
    fn volume_ratio_floors_rank_deficient_correlated() {
        let u = DVector::from_row_slice(&[1.0, 2.0]);
        let corr = &u * u.transpose(); // rank 1
        let uncorr = decorrelate(&corr);
        let r = ellipsoid_volume_ratio(&corr, &uncorr).unwrap();
        assert!(r > 0.0 && r < 1.0, "floored ratio {r}");
    }

    #[test]
    fn volume_ratio_rejects_singular_uncorrelated() {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let uncorr = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(ellipsoid_volume_ratio(&corr, &uncorr).is_err());
    }
}
