use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::EnergyGrid;
use crate::table;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Source spectrum resampled onto the working grid. `s` is a normalized
/// spectral density (keV⁻¹, unit trapezoid integral); the photon budget `n0`
/// and exposure time carry the absolute scale separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    grid: EnergyGrid,
    s: Vec<f64>,
    n0: f64,
    exposure_time: f64,
}

impl SourceSpectrum {
    /// Loads a two-column `energy_keV,intensity` file and resamples it onto
    /// `grid` by linear interpolation, clipping negatives to zero and
    /// renormalizing the trapezoid integral to 1.
    pub fn load(path: &Path, grid: &EnergyGrid) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows = table::read_rows(path, &source)?;
        if rows.len() < 2 {
            return Err(Error::parse(
                path,
                rows.first().map_or(1, |r| r.2),
                format!("spectrum needs at least 2 samples, got {}", rows.len()),
            ));
        }
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::parse(
                    path,
                    w[1].2,
                    format!(
                        "spectrum energies must be strictly increasing, got {} after {}",
                        w[1].0, w[0].0
                    ),
                ));
            }
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        if grid.min_kev() < xs[0] || grid.max_kev() > xs[xs.len() - 1] {
            return Err(Error::Coverage(format!(
                "spectrum {} covers [{}, {}] keV but the grid spans [{}, {}] keV",
                path.display(),
                xs[0],
                xs[xs.len() - 1],
                grid.min_kev(),
                grid.max_kev()
            )));
        }
        let s: Vec<f64> = grid
            .energies()
            .iter()
            .map(|&e| table::interp_linear(&xs, &ys, e).max(0.0))
            .collect();
        Self::from_samples(grid.clone(), s)
    }

    /// Builds a spectrum from raw non-negative samples on `grid`,
    /// renormalizing to a unit trapezoid integral.
    pub fn from_samples(grid: EnergyGrid, mut s: Vec<f64>) -> Result<Self> {
        if s.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "spectrum has {} samples, grid has {}",
                s.len(),
                grid.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(
                "spectrum samples must be finite and non-negative".into(),
            ));
        }
        let integral = grid.trapezoid_integral(&s)?;
        if integral <= 0.0 {
            return Err(Error::Degenerate(
                "spectrum is zero everywhere on the grid".into(),
            ));
        }
        // Skip the division when already normalized so that save/load
        // round-trips reproduce values bit-exactly.
        if (integral - 1.0).abs() > NORMALIZATION_TOL {
            for v in &mut s {
                *v /= integral;
            }
        }
        Ok(SourceSpectrum {
            grid,
            s,
            n0: 1.0,
            exposure_time: 1.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("energy_keV,intensity\n");
        for (e, v) in self.grid.energies().iter().zip(&self.s) {
            writeln!(out, "{e},{v}").expect("string write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn with_photon_budget(mut self, n0: f64) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::Invalid(format!("photon budget must be > 0, got {n0}")));
        }
        self.n0 = n0;
        Ok(self)
    }

    pub fn with_exposure_time(mut self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Invalid(format!("exposure time must be > 0, got {t}")));
        }
        self.exposure_time = t;
        Ok(self)
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    /// Normalized spectral density per grid sample, keV⁻¹.
    pub fn density(&self) -> &[f64] {
        &self.s
    }

    pub fn photon_budget(&self) -> f64 {
        self.n0
    }

    pub fn exposure_time(&self) -> f64 {
        self.exposure_time
    }
}
