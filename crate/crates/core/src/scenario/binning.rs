//! Count-balanced energy-bin edges: edges are placed so each bin collects the
//! same expected photon count after attenuation through a reference path,
//! by exact inversion of the piecewise-linear cumulative count integral.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::forward::DetectorModel;
use crate::material_stats::MaterialStats;
use crate::spectrum::SourceSpectrum;

/// Mean attenuation exponent of a reference slab: τ_ref = μ₀ · length.
pub fn reference_attenuation(stats: &MaterialStats, length_cm: f64) -> Result<DVector<f64>> {
    if !(length_cm > 0.0) {
        return Err(Error::Invalid(format!(
            "reference length must be > 0 cm, got {length_cm}"
        )));
    }
    Ok(stats.mu0() * length_cm)
}

/// Places `n_bins − 1` interior edges so every bin's expected attenuated
/// count ∫ s(E)·exp(−τ_ref(E)) dE is equal. The attenuated density is
/// piecewise linear on the grid, so its cumulative integral is piecewise
/// quadratic and inverted cell by cell in closed form.
pub fn balance_bin_edges(
    spectrum: &SourceSpectrum,
    tau_ref: &DVector<f64>,
    n_bins: usize,
) -> Result<Vec<f64>> {
    let grid = spectrum.grid();
    if n_bins == 0 {
        return Err(Error::Invalid("bin count must be at least 1".into()));
    }
    if tau_ref.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "reference attenuation has {} samples, grid has {}",
            tau_ref.len(),
            grid.len()
        )));
    }
    let xs = grid.energies();
    let v: Vec<f64> = spectrum
        .density()
        .iter()
        .zip(tau_ref.iter())
        .map(|(s, tau)| s * (-tau).exp())
        .collect();
    // Cumulative trapezoid integral at each grid point.
    let mut cum = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * (v[i - 1] + v[i]) * (xs[i] - xs[i - 1]);
    }
    let total = cum[xs.len() - 1];
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "attenuated spectrum has no expected counts to balance".into(),
        ));
    }
    let mut edges = Vec::with_capacity(n_bins + 1);
    edges.push(xs[0]);
    for m in 1..n_bins {
        let target = total * m as f64 / n_bins as f64;
        // First cell whose upper cumulative reaches the target.
        let cell = cum.partition_point(|&c| c < target).min(xs.len() - 1);
        let i = cell.saturating_sub(1);
        let h = xs[i + 1] - xs[i];
        let residual = target - cum[i];
        // Within the cell: residual = v_i·d + slope·d²/2, slope = (v_{i+1}−v_i)/h.
        // Stable root of (slope/2)·d² + v_i·d − residual = 0:
        let slope = (v[i + 1] - v[i]) / h;
        let disc = (v[i] * v[i] + 2.0 * slope * residual).max(0.0);
        let denom = v[i] + disc.sqrt();
        let d = if denom > 0.0 {
            (2.0 * residual / denom).clamp(0.0, h)
        } else {
            0.0
        };
        let edge = xs[i] + d;
        let prev = *edges.last().expect("edges start non-empty");
        if edge <= prev {
            return Err(Error::Degenerate(format!(
                "bin edge {m} collapsed onto {prev} keV; the attenuated \
                 spectrum has no counts to split there"
            )));
        }
        edges.push(edge);
    }
    edges.push(xs[xs.len() - 1]);
    Ok(edges)
}

/// Balanced edges materialized as an ideal detector response.
pub fn balanced_detector(
    spectrum: &SourceSpectrum,
    tau_ref: &DVector<f64>,
    n_bins: usize,
) -> Result<DetectorModel> {
    let edges = balance_bin_edges(spectrum, tau_ref, n_bins)?;
    DetectorModel::ideal(spectrum.grid(), edges)
}
