use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::EnergyGrid;
use crate::material_stats::MaterialStats;
use crate::spectrum::SourceSpectrum;

/// Attenuation-fluctuation magnitude above which the first-order expansion of
/// Beer's law leaves more than 1% remainder: 0.39³/6 ≈ 0.0099·J₀.
pub const LINEARIZATION_TAU_LIMIT: f64 = 0.39;

/// Mean bin count below which the Gaussian shot-noise model is dubious.
pub const SHOT_NOISE_FLOOR: f64 = 10.0;

/// One straight-line ray through a stack of material items.
#[derive(Debug, Clone)]
pub struct PathSpec {
    items: Vec<PathItem>,
}

#[derive(Debug, Clone)]
pub struct PathItem {
    pub material: Arc<MaterialStats>,
    pub length_cm: f64,
}

impl PathSpec {
    pub fn new(items: Vec<PathItem>) -> Result<Self> {
        for item in &items {
            if !(item.length_cm > 0.0 && item.length_cm.is_finite()) {
                return Err(Error::Invalid(format!(
                    "item of material `{}` has non-positive length {}",
                    item.material.name, item.length_cm
                )));
            }
        }
        Ok(PathSpec { items })
    }

    /// Air path: attenuation-free.
    pub fn empty() -> Self {
        PathSpec { items: Vec::new() }
    }

    pub fn items(&self) -> &[PathItem] {
        &self.items
    }
}

/// Gaussian statistics of the total attenuation τ(E) along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationStats {
    pub tau0: DVector<f64>,
    pub sigma_tau: DMatrix<f64>,
}

impl AttenuationStats {
    /// Largest ±3σ attenuation fluctuation over the grid; beyond
    /// [`LINEARIZATION_TAU_LIMIT`] the linearized flux model degrades past 1%.
    pub fn max_3sigma_delta_tau(&self) -> f64 {
        (0..self.sigma_tau.nrows())
            .map(|i| 3.0 * self.sigma_tau[(i, i)].max(0.0).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn linearization_exceeded(&self) -> bool {
        self.max_3sigma_delta_tau() > LINEARIZATION_TAU_LIMIT
    }
}

/// Sums independent per-item attenuation statistics along a path:
/// τ₀ = Σ_t μ₀,t·l_t and Σ_τ = Σ_t Σ_μ,t·l_t².
pub fn aggregate_attenuation(path: &PathSpec, grid: &EnergyGrid) -> Result<AttenuationStats> {
    let r = grid.len();
    let mut tau0 = DVector::zeros(r);
    let mut sigma_tau = DMatrix::zeros(r, r);
    for item in path.items() {
        if item.material.grid() != grid {
            return Err(Error::GridMismatch(format!(
                "material `{}` statistics are on a different energy grid",
                item.material.name
            )));
        }
        let l = item.length_cm;
        tau0 += item.material.mu0() * l;
        sigma_tau += item.material.sigma_mu() * (l * l);
    }
    Ok(AttenuationStats { tau0, sigma_tau })
}

/// Mean transmitted flux per Beer's law: J₀(E) = (N₀·S(E)/t)·exp(−τ₀(E)).
pub fn mean_flux(spectrum: &SourceSpectrum, tau0: &DVector<f64>) -> Result<DVector<f64>> {
    if tau0.len() != spectrum.grid().len() {
        return Err(Error::GridMismatch(format!(
            "attenuation has {} samples, spectrum grid has {}",
            tau0.len(),
            spectrum.grid().len()
        )));
    }
    let scale = spectrum.photon_budget() / spectrum.exposure_time();
    Ok(DVector::from_iterator(
        tau0.len(),
        spectrum
            .density()
            .iter()
            .zip(tau0.iter())
            .map(|(s, t)| scale * s * (-t).exp()),
    ))
}

/// First-order flux covariance Σ_J = (J₀J₀ᵀ) ⊙ Σ_τ; PSD as a Schur product
/// of PSD matrices.
pub fn linearized_flux_covariance(j0: &DVector<f64>, sigma_tau: &DMatrix<f64>) -> DMatrix<f64> {
    let r = j0.len();
    DMatrix::from_fn(r, r, |i, j| j0[i] * j0[j] * sigma_tau[(i, j)])
}

/// Bound on the second-order Beer's-law remainder: |R₂| < J₀·|Δτ|³/6.
pub fn remainder_bound(j0: f64, delta_tau: f64) -> f64 {
    j0 * delta_tau.abs().powi(3) / 6.0
}

/// Detector response: M bin rows of quadrature weights over the energy grid.
/// The ideal response integrates the piecewise-linear flux interpolant over
/// each bin exactly (consistent with trapezoid quadrature on the full grid).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    grid: EnergyGrid,
    bin_edges: Vec<f64>,
    response: DMatrix<f64>,
}

impl DetectorModel {
    pub fn ideal(grid: &EnergyGrid, bin_edges: Vec<f64>) -> Result<Self> {
        validate_edges(grid, &bin_edges)?;
        let r = grid.len();
        let m = bin_edges.len() - 1;
        let xs = grid.energies();
        let mut response = DMatrix::zeros(m, r);
        for bin in 0..m {
            let (lo, hi) = (bin_edges[bin], bin_edges[bin + 1]);
            for cell in 0..r - 1 {
                let (x0, x1) = (xs[cell], xs[cell + 1]);
                let a = lo.max(x0);
                let b = hi.min(x1);
                if b <= a {
                    continue;
                }
                let h = x1 - x0;
                // Exact integral of the linear interpolant over [a, b] as
                // weights on the two cell endpoints.
                response[(bin, cell)] += ((x1 - a).powi(2) - (x1 - b).powi(2)) / (2.0 * h);
                response[(bin, cell + 1)] += ((b - x0).powi(2) - (a - x0).powi(2)) / (2.0 * h);
            }
        }
        Ok(DetectorModel {
            grid: grid.clone(),
            bin_edges,
            response,
        })
    }

    /// A detector with an arbitrary response matrix (rows must be
    /// non-negative quadrature weights).
    pub fn from_response(
        grid: &EnergyGrid,
        bin_edges: Vec<f64>,
        response: DMatrix<f64>,
    ) -> Result<Self> {
        validate_edges(grid, &bin_edges)?;
        if response.nrows() != bin_edges.len() - 1 || response.ncols() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "response is {}x{}, expected {}x{}",
                response.nrows(),
                response.ncols(),
                bin_edges.len() - 1,
                grid.len()
            )));
        }
        if response.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Invalid(
                "detector response weights must be finite and non-negative".into(),
            ));
        }
        Ok(DetectorModel {
            grid: grid.clone(),
            bin_edges,
            response,
        })
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn response(&self) -> &DMatrix<f64> {
        &self.response
    }
}

fn validate_edges(grid: &EnergyGrid, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 bin edges, got {}",
            edges.len()
        )));
    }
    for w in edges.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Invalid(format!(
                "bin edges must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if edges[0] < grid.min_kev() || *edges.last().expect("non-empty") > grid.max_kev() {
        return Err(Error::Invalid(format!(
            "bin edges [{}, {}] exceed the grid span [{}, {}] keV",
            edges[0],
            edges.last().expect("non-empty"),
            grid.min_kev(),
            grid.max_kev()
        )));
    }
    Ok(())
}

/// Binned count statistics before shot noise: mean counts and the
/// material-variability covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCounts {
    pub jd0: DVector<f64>,
    pub sigma_material: DMatrix<f64>,
}

/// Bins the flux statistics: jd0 = t·D·J₀ and Σ_{J_d} = t²·D·Σ_J·Dᵀ.
pub fn bin_counts(
    detector: &DetectorModel,
    j0: &DVector<f64>,
    sigma_j: &DMatrix<f64>,
    exposure_time: f64,
) -> Result<BinnedCounts> {
    let r = detector.grid.len();
    if j0.len() != r || sigma_j.nrows() != r || sigma_j.ncols() != r {
        return Err(Error::GridMismatch(format!(
            "flux statistics sized {}/{}x{} but detector grid has {r} samples",
            j0.len(),
            sigma_j.nrows(),
            sigma_j.ncols()
        )));
    }
    if !(exposure_time > 0.0) {
        return Err(Error::Invalid(format!(
            "exposure time must be > 0, got {exposure_time}"
        )));
    }
    let d = &detector.response;
    let jd0 = exposure_time * (d * j0);
    for (m, v) in jd0.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Degenerate(format!(
                "bin {m} has mean count {v}; its edges exclude all flux"
            )));
        }
    }
    let raw = (exposure_time * exposure_time) * (d * sigma_j * d.transpose());
    let sigma_material = 0.5 * (&raw + raw.transpose());
    Ok(BinnedCounts {
        jd0,
        sigma_material,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelFlags {
    /// Some bin's mean count is below [`SHOT_NOISE_FLOOR`]; the Gaussian
    /// approximation of Poisson counting is unreliable there.
    pub low_count: bool,
    /// The ±3σ attenuation fluctuation exceeds [`LINEARIZATION_TAU_LIMIT`],
    /// so the linearized flux covariance carries over 1% remainder.
    pub linearization_exceeded: bool,
}

/// Gaussian measurement distribution of one pixel: N(jd0, Σ_total), with the
/// material and shot contributions kept separately inspectable.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistribution {
    pub jd0: DVector<f64>,
    pub sigma_material: DMatrix<f64>,
    pub sigma_total: DMatrix<f64>,
    pub flags: PixelFlags,
}

impl PixelDistribution {
    pub fn n_bins(&self) -> usize {
        self.jd0.len()
    }

    pub fn with_linearization_flag(mut self, exceeded: bool) -> Self {
        self.flags.linearization_exceeded = exceeded;
        self
    }

    /// CSV dump: mean counts then the two covariance matrices, row per bin.
    pub fn to_csv(&self) -> String {
        let m = self.n_bins();
        let mut out = String::from("# section=mean bin,jd0\n");
        for i in 0..m {
            writeln!(out, "{i},{}", self.jd0[i]).expect("string write");
        }
        for (label, mat) in [
            ("sigma_material", &self.sigma_material),
            ("sigma_total", &self.sigma_total),
        ] {
            writeln!(out, "# section={label} rows={m}").expect("string write");
            for i in 0..m {
                for j in 0..m {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{}", mat[(i, j)]).expect("string write");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Adds shot noise: Σ_total = Σ_material + diag(jd0). Flags (but does not
/// reject) bins whose mean counts are below the Gaussian validity floor.
pub fn combine_shot_noise(counts: &BinnedCounts) -> Result<PixelDistribution> {
    let m = counts.jd0.len();
    if counts.sigma_material.nrows() != m || counts.sigma_material.ncols() != m {
        return Err(Error::GridMismatch(format!(
            "covariance is {}x{} for {m} bins",
            counts.sigma_material.nrows(),
            counts.sigma_material.ncols()
        )));
    }
    if counts.jd0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate(
            "mean bin counts must be positive to add shot noise".into(),
        ));
    }
    let mut sigma_total = counts.sigma_material.clone();
    for i in 0..m {
        sigma_total[(i, i)] += counts.jd0[i];
    }
    let low_count = counts.jd0.iter().any(|v| *v < SHOT_NOISE_FLOOR);
    Ok(PixelDistribution {
        jd0: counts.jd0.clone(),
        sigma_material: counts.sigma_material.clone(),
        sigma_total,
        flags: PixelFlags {
            low_count,
            linearization_exceeded: false,
        },
    })
}

/// Leading-order relative error of approximating Poisson(λ) at count x by
/// N(λ, λ): ((x−λ)² − 3λ)/(6λ)·δ with δ = (x−λ)/λ.
pub fn poisson_gaussian_error(lambda: f64, x: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    let delta = (x - lambda) / lambda;
    (((x - lambda).powi(2) - 3.0 * lambda) / (6.0 * lambda)) * delta
}

/// Exact relative error (pmf − pdf)/pmf of the same approximation, with the
/// Poisson pmf evaluated through the log-gamma function.
pub fn poisson_gaussian_error_exact(lambda: f64, x: f64) -> f64 {
    debug_assert!(lambda > 0.0 && x >= 0.0);
    let ln_pmf = x * lambda.ln() - lambda - statrs::function::gamma::ln_gamma(x + 1.0);
    let pmf = ln_pmf.exp();
    let pdf = (-(x - lambda) * (x - lambda) / (2.0 * lambda)).exp()
        / (2.0 * std::f64::consts::PI * lambda).sqrt();
    (pmf - pdf) / pmf
}
