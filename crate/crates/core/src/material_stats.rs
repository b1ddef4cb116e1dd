use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::elements::{ElementSet, ElementTable};
use crate::error::{Error, Result};
use crate::grid::EnergyGrid;
use crate::materials::{ClassLabel, MaterialDefinition};
use crate::seeding;
use crate::table;

const SYMMETRY_TOL: f64 = 1e-12;
const TRUNCATION_ATTEMPTS: usize = 1000;

/// Gaussian-process statistics of a material's linear attenuation over the
/// energy grid: mean curve and energy-energy covariance. One composition or
/// density draw moves the whole curve together, which is what makes Σ_μ far
/// from diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialStats {
    pub name: String,
    pub class_label: ClassLabel,
    grid: EnergyGrid,
    mu0: DVector<f64>,
    sigma_mu: DMatrix<f64>,
    n_realizations: usize,
}

impl MaterialStats {
    pub fn new(
        name: String,
        class_label: ClassLabel,
        grid: EnergyGrid,
        mu0: DVector<f64>,
        sigma_mu: DMatrix<f64>,
        n_realizations: usize,
    ) -> Result<Self> {
        let r = grid.len();
        if mu0.len() != r || sigma_mu.nrows() != r || sigma_mu.ncols() != r {
            return Err(Error::GridMismatch(format!(
                "material `{name}`: stats sized {}x{} / {} but grid has {r} samples",
                sigma_mu.nrows(),
                sigma_mu.ncols(),
                mu0.len()
            )));
        }
        if mu0.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Invalid(format!(
                "material `{name}`: mean attenuation must be > 0 at every energy"
            )));
        }
        let scale = sigma_mu.amax().max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (sigma_mu[(i, j)] - sigma_mu[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Invalid(format!(
                        "material `{name}`: covariance asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(MaterialStats {
            name,
            class_label,
            grid,
            mu0,
            sigma_mu,
            n_realizations,
        })
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    /// Mean linear attenuation μ₀(E), cm⁻¹.
    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    /// Energy-energy covariance Σ_μ, cm⁻².
    pub fn sigma_mu(&self) -> &DMatrix<f64> {
        &self.sigma_mu
    }

    pub fn n_realizations(&self) -> usize {
        self.n_realizations
    }
}

fn sample_truncated(mean: f64, std: f64, lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, std).expect("std checked finite positive");
    for _ in 0..TRUNCATION_ATTEMPTS {
        let v = normal.sample(rng);
        if v >= lo && v <= hi {
            return v;
        }
    }
    // The acceptance region is pathologically small; fall back to the nearest
    // boundary of the mean's projection rather than looping forever.
    mean.clamp(lo, hi)
}

fn sample_composition_with(def: &MaterialDefinition, rng: &mut impl Rng) -> (f64, Vec<f64>) {
    let rho = sample_truncated(
        def.density_mean,
        def.density_std,
        f64::MIN_POSITIVE,
        f64::INFINITY,
        rng,
    );
    let mut w: Vec<f64> = def
        .components
        .iter()
        .map(|c| sample_truncated(c.w_mean, c.w_std, 0.0, 1.0, rng))
        .collect();
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        // Renormalizing keeps the draw on the weight simplex. Skip when the
        // draw already sums to 1 (e.g. all stds zero) so the degenerate case
        // returns means bit-exactly.
        if sum != 1.0 {
            for v in &mut w {
                *v /= sum;
            }
        }
    } else {
        w = def.components.iter().map(|c| c.w_mean).collect();
    }
    (rho, w)
}

/// Draws one (density, weight-fraction) realization. Weight fractions are
/// Gaussian truncated to [0, 1] and renormalized to sum 1; density is
/// Gaussian truncated to positive values. Deterministic in `seed`.
pub fn sample_composition(def: &MaterialDefinition, seed: u64) -> (f64, Vec<f64>) {
    let mut rng = seeding::derive_rng(
        seed,
        seeding::TAG_MATERIAL_STATS,
        &[seeding::hash_name(&def.name)],
    );
    sample_composition_with(def, &mut rng)
}

/// Linear attenuation of one realization: μ(E) = ρ · Σ_c w_c · (μ/ρ)_c(E).
pub fn attenuation_of_realization(
    rho: f64,
    w: &[f64],
    elements: &[&ElementTable],
    grid: &EnergyGrid,
) -> Result<DVector<f64>> {
    if w.len() != elements.len() {
        return Err(Error::Invalid(format!(
            "{} weight fractions for {} element tables",
            w.len(),
            elements.len()
        )));
    }
    if w.is_empty() {
        return Err(Error::Invalid("empty composition".into()));
    }
    for t in elements {
        if t.grid() != grid {
            return Err(Error::GridMismatch(format!(
                "element `{}` is tabulated on a different grid",
                t.symbol()
            )));
        }
    }
    let r = grid.len();
    let mut mu = DVector::zeros(r);
    for (wc, t) in w.iter().zip(elements) {
        let table = t.mass_attenuation();
        for i in 0..r {
            mu[i] += wc * table[i];
        }
    }
    mu *= rho;
    Ok(mu)
}

/// Estimates (μ₀, Σ_μ) by Monte Carlo over composition realizations: sample
/// mean and unbiased sample covariance, followed by PSD repair (symmetrize
/// and clip negative eigenvalues to zero). Deterministic in `seed` and
/// independent of thread count.
pub fn estimate_material_stats(
    def: &MaterialDefinition,
    elements: &ElementSet,
    grid: &EnergyGrid,
    n_realizations: usize,
    seed: u64,
) -> Result<MaterialStats> {
    def.validate()?;
    if n_realizations < 2 {
        return Err(Error::Invalid(format!(
            "material `{}`: need at least 2 realizations, got {n_realizations}",
            def.name
        )));
    }
    let tables: Vec<&ElementTable> = def
        .components
        .iter()
        .map(|c| elements.get(&c.element))
        .collect::<Result<_>>()?;
    let name_hash = seeding::hash_name(&def.name);
    let samples: Vec<DVector<f64>> = (0..n_realizations)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                seeding::derive_rng(seed, seeding::TAG_MATERIAL_STATS, &[name_hash, k as u64]);
            let (rho, w) = sample_composition_with(def, &mut rng);
            attenuation_of_realization(rho, &w, &tables, grid)
        })
        .collect::<Result<_>>()?;

    let r = grid.len();
    let mut mu0 = DVector::zeros(r);
    for s in &samples {
        mu0 += s;
    }
    mu0 /= n_realizations as f64;

    let mut sigma = DMatrix::zeros(r, r);
    for s in &samples {
        let d = s - &mu0;
        sigma.ger(1.0, &d, &d, 1.0); // rank-1 update: sigma += d dᵀ
    }
    sigma /= (n_realizations - 1) as f64;
    let sigma = psd_repair(sigma);

    MaterialStats::new(
        def.name.clone(),
        def.class_label,
        grid.clone(),
        mu0,
        sigma,
        n_realizations,
    )
}

/// Symmetrizes and clips negative eigenvalues to zero. Sample covariances are
/// PSD up to roundoff; downstream determinant and Cholesky work needs the
/// floor to be exact.
pub(crate) fn psd_repair(sigma: DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (&sigma + sigma.transpose());
    let eig = sym.symmetric_eigen();
    let clipped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| l.max(0.0)),
    );
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    0.5 * (&rebuilt + rebuilt.transpose())
}

/// Writes the stats as a two-file CSV bundle: a mean vector file
/// (`energy_keV,mu0_cm1` rows) and a covariance file (R rows of R values).
pub fn save_stats_bundle(stats: &MaterialStats, mu0_path: &Path, sigma_path: &Path) -> Result<()> {
    let mut out = format!(
        "# material={} class={} n_realizations={}\nenergy_keV,mu0_cm1\n",
        stats.name, stats.class_label, stats.n_realizations
    );
    for (e, v) in stats.grid.energies().iter().zip(stats.mu0.iter()) {
        writeln!(out, "{e},{v}").expect("string write");
    }
    std::fs::write(mu0_path, out).map_err(|e| Error::io(mu0_path, e))?;

    let r = stats.grid.len();
    let mut out = format!("# material={} rows={r}\n", stats.name);
    for i in 0..r {
        for j in 0..r {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", stats.sigma_mu[(i, j)]).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(sigma_path, out).map_err(|e| Error::io(sigma_path, e))
}

/// Reads a bundle written by [`save_stats_bundle`]. The grid is reconstructed
/// from the mean file and must match `expected_grid` when given.
pub fn load_stats_bundle(
    mu0_path: &Path,
    sigma_path: &Path,
    expected_grid: Option<&EnergyGrid>,
) -> Result<MaterialStats> {
    let source = std::fs::read_to_string(mu0_path).map_err(|e| Error::io(mu0_path, e))?;
    let (name, class_label, n_realizations) = parse_bundle_header(mu0_path, &source)?;
    let rows = table::read_rows(mu0_path, &source)?;
    let energies: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mu0 = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let grid = EnergyGrid::new(energies)?;
    if let Some(expected) = expected_grid {
        if &grid != expected {
            return Err(Error::GridMismatch(format!(
                "cached stats for `{name}` are on a different energy grid"
            )));
        }
    }

    let source = std::fs::read_to_string(sigma_path).map_err(|e| Error::io(sigma_path, e))?;
    let r = grid.len();
    let mut values = Vec::with_capacity(r * r);
    let mut row_count = 0usize;
    for (ix, raw) in source.lines().enumerate() {
        let line = ix + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let mut n_fields = 0usize;
        for field in content.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(sigma_path, line, format!("cannot parse `{field}`"))
            })?;
            values.push(v);
            n_fields += 1;
        }
        if n_fields != r {
            return Err(Error::parse(
                sigma_path,
                line,
                format!("expected {r} values per row, got {n_fields}"),
            ));
        }
        row_count += 1;
    }
    if row_count != r {
        return Err(Error::parse(
            sigma_path,
            1,
            format!("expected {r} rows, got {row_count}"),
        ));
    }
    let sigma = DMatrix::from_row_iterator(r, r, values);
    MaterialStats::new(name, class_label, grid, mu0, sigma, n_realizations)
}

fn parse_bundle_header(path: &Path, source: &str) -> Result<(String, ClassLabel, usize)> {
    for (ix, raw) in source.lines().enumerate() {
        let line = ix + 1;
        let Some(comment) = raw.trim().strip_prefix('#') else {
            break;
        };
        let mut name = None;
        let mut class = None;
        let mut n = None;
        for token in comment.split_whitespace() {
            if let Some(v) = token.strip_prefix("material=") {
                name = Some(v.to_string());
            } else if let Some(v) = token.strip_prefix("class=") {
                class = Some(
                    v.parse::<ClassLabel>()
                        .map_err(|e| Error::parse(path, line, e))?,
                );
            } else if let Some(v) = token.strip_prefix("n_realizations=") {
                n = Some(v.parse::<usize>().map_err(|_| {
                    Error::parse(path, line, format!("cannot parse n_realizations `{v}`"))
                })?);
            }
        }
        if let (Some(name), Some(class), Some(n)) = (name, class, n) {
            return Ok((name, class, n));
        }
    }
    Err(Error::parse(
        path,
        1,
        "missing `# material=<name> class=<c> n_realizations=<n>` header".to_string(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::ComponentSpec;

    fn table(symbol: &str, density: f64, grid: &EnergyGrid, values: &[f64]) -> ElementTable {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# symbol={symbol} density_g_cm3={density}").unwrap();
        for (e, v) in grid.energies().iter().zip(values) {
            writeln!(f, "{e},{v}").unwrap();
        }
        ElementTable::load(f.path(), grid).unwrap()
    }

    fn small_grid() -> EnergyGrid {
        EnergyGrid::new(vec![30.0, 60.0, 100.0, 160.0]).unwrap()
    }

    fn def(components: Vec<ComponentSpec>, rho: f64, rho_std: f64) -> MaterialDefinition {
        MaterialDefinition {
            name: "test_mat".into(),
            class_label: ClassLabel::NonThreat,
            density_mean: rho,
            density_std: rho_std,
            components,
        }
    }

    #[test]
    fn zero_std_returns_means_exactly() {
        let d = def(
            vec![
                ComponentSpec {
                    element: "A".into(),
                    w_mean: 0.25,
                    w_std: 0.0,
                },
                ComponentSpec {
                    element: "B".into(),
                    w_mean: 0.75,
                    w_std: 0.0,
                },
            ],
            1.3,
            0.0,
        );
        let (rho, w) = sample_composition(&d, 7);
        assert_eq!(rho, 1.3);
        assert_eq!(w, vec![0.25, 0.75]);
    }

    #[test]
    fn sample_mean_converges_to_w_mean() {
        let d = def(
            vec![
                ComponentSpec {
                    element: "A".into(),
                    w_mean: 0.4,
                    w_std: 0.05,
                },
                ComponentSpec {
                    element: "B".into(),
                    w_mean: 0.6,
                    w_std: 0.05,
                },
            ],
            1.0,
            0.0,
        );
        let n = 100_000;
        let mut rng = seeding::derive_rng(11, seeding::TAG_MATERIAL_STATS, &[0]);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (_, w) = sample_composition_with(&d, &mut rng);
            sum += w[0];
            sumsq += w[0] * w[0];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        // Renormalization keeps symmetric stds centered: E[w1] = 0.4.
        assert!(
            (mean - 0.4).abs() < 3.0 * se + 1e-4,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.1,
            }],
            2.0,
            0.3,
        );
        assert_eq!(sample_composition(&d, 5), sample_composition(&d, 5));
        assert_ne!(sample_composition(&d, 5), sample_composition(&d, 6));
    }

    #[test]
    fn identity_mixture_recovers_element_attenuation() {
        let grid = small_grid();
        let t = table("A", 2.5, &grid, &[0.4, 0.3, 0.2, 0.15]);
        let mu = attenuation_of_realization(2.5, &[1.0], &[&t], &grid).unwrap();
        for (m, v) in mu.iter().zip([0.4, 0.3, 0.2, 0.15]) {
            assert!((m - 2.5 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn fifty_fifty_mixture_is_arithmetic_mean() {
        let grid = small_grid();
        let rho_c = 2.0;
        let a = table("A", rho_c, &grid, &[0.4, 0.3, 0.2, 0.15]);
        let b = table("B", rho_c, &grid, &[0.8, 0.5, 0.3, 0.2]);
        let rho = 1.5;
        let mu = attenuation_of_realization(rho, &[0.5, 0.5], &[&a, &b], &grid).unwrap();
        for i in 0..grid.len() {
            let lin_a = rho_c * a.mass_attenuation()[i];
            let lin_b = rho_c * b.mass_attenuation()[i];
            let want = (rho / rho_c) * 0.5 * (lin_a + lin_b);
            assert!((mu[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn three_component_fixture_matches_independent_recomputation() {
        let grid = small_grid();
        let t1 = table("A", 1.2, &grid, &[0.41, 0.33, 0.21, 0.16]);
        let t2 = table("B", 2.7, &grid, &[0.9, 0.55, 0.31, 0.2]);
        let t3 = table("C", 0.9, &grid, &[0.35, 0.28, 0.19, 0.14]);
        let rho = 1.07;
        let w = [0.2, 0.5, 0.3];
        let mu = attenuation_of_realization(rho, &w, &[&t1, &t2, &t3], &grid).unwrap();
        // Independent recomputation, accumulated per energy instead of per
        // component.
        for i in 0..grid.len() {
            let want = rho
                * (w[0] * t1.mass_attenuation()[i]
                    + w[1] * t2.mass_attenuation()[i]
                    + w[2] * t3.mass_attenuation()[i]);
            assert!((mu[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn alignment_error_on_mismatched_lists() {
        let grid = small_grid();
        let t = table("A", 1.0, &grid, &[0.4, 0.3, 0.2, 0.15]);
        assert!(attenuation_of_realization(1.0, &[0.5, 0.5], &[&t], &grid).is_err());
    }

    fn elem_set(tables: Vec<ElementTable>) -> ElementSet {
        ElementSet::from_tables(tables).unwrap()
    }

    #[test]
    fn zero_variance_material_gives_zero_covariance() {
        let grid = small_grid();
        let set = elem_set(vec![table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15])]);
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.0,
            }],
            2.0,
            0.0,
        );
        let stats = estimate_material_stats(&d, &set, &grid, 16, 3).unwrap();
        // Identical realizations leave only representation roundoff in the
        // accumulated second moment.
        assert!(stats.sigma_mu().amax() < 1e-24, "{}", stats.sigma_mu().amax());
        for (m, v) in stats.mu0().iter().zip([0.4, 0.3, 0.2, 0.15]) {
            assert!((m - 2.0 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_density_variation_is_rank_one_and_fully_correlated() {
        let grid = small_grid();
        let set = elem_set(vec![table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15])]);
        let rho0 = 2.0;
        let sigma_rho = 0.1;
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.0,
            }],
            rho0,
            sigma_rho,
        );
        // Frobenius distance to the analytic rank-1 limit shrinks ~ 1/sqrt(n).
        let mut last_err = f64::INFINITY;
        for (n, seed) in [(200usize, 1u64), (20_000, 2)] {
            let stats = estimate_material_stats(&d, &set, &grid, n, seed).unwrap();
            let mu_exact = attenuation_of_realization(rho0, &[1.0], &[set.get("A").unwrap()], &grid)
                .unwrap();
            let want = (sigma_rho * sigma_rho) / (rho0 * rho0) * (&mu_exact * mu_exact.transpose());
            let err = (stats.sigma_mu() - &want).norm() / want.norm();
            assert!(err < last_err, "error did not shrink: {last_err} -> {err}");
            last_err = err;

            // Correlation between every energy pair tends to 1.
            if n > 1000 {
                let s = stats.sigma_mu();
                for i in 0..grid.len() {
                    for j in 0..grid.len() {
                        let corr = s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt();
                        assert!(corr > 0.999, "corr({i},{j}) = {corr}");
                    }
                }
            }
        }
        assert!(last_err < 0.05, "final relative error {last_err}");
    }

    #[test]
    fn split_batches_agree_within_mc_error() {
        let grid = small_grid();
        let set = elem_set(vec![
            table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15]),
            table("B", 1.0, &grid, &[0.8, 0.5, 0.3, 0.2]),
        ]);
        let d = def(
            vec![
                ComponentSpec {
                    element: "A".into(),
                    w_mean: 0.5,
                    w_std: 0.02,
                },
                ComponentSpec {
                    element: "B".into(),
                    w_mean: 0.5,
                    w_std: 0.02,
                },
            ],
            1.5,
            0.05,
        );
        let a = estimate_material_stats(&d, &set, &grid, 4000, 21).unwrap();
        let b = estimate_material_stats(&d, &set, &grid, 4000, 22).unwrap();
        let rel = (a.sigma_mu() - b.sigma_mu()).norm() / a.sigma_mu().norm();
        // Covariance entries have MC error ~ sqrt(2/n) ≈ 2.2%; allow 5 sigma.
        assert!(rel < 0.12, "batch disagreement {rel}");
    }

    #[test]
    fn estimation_deterministic_and_thread_count_independent() {
        let grid = small_grid();
        let set = elem_set(vec![table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15])]);
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.05,
            }],
            2.0,
            0.1,
        );
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_material_stats(&d, &set, &grid, 500, 9).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| estimate_material_stats(&d, &set, &grid, 500, 9).unwrap());
        assert_eq!(single, multi);
    }

    #[test]
    fn bundle_round_trip_is_identical() {
        let grid = small_grid();
        let set = elem_set(vec![table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15])]);
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.03,
            }],
            2.0,
            0.08,
        );
        let stats = estimate_material_stats(&d, &set, &grid, 100, 13).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mu0_path = dir.path().join("mu0.csv");
        let sigma_path = dir.path().join("sigma.csv");
        save_stats_bundle(&stats, &mu0_path, &sigma_path).unwrap();
        let back = load_stats_bundle(&mu0_path, &sigma_path, Some(&grid)).unwrap();
        assert_eq!(stats, back);
    }

    #[test]
    fn n_realizations_below_two_is_an_error() {
        let grid = small_grid();
        let set = elem_set(vec![table("A", 2.0, &grid, &[0.4, 0.3, 0.2, 0.15])]);
        let d = def(
            vec![ComponentSpec {
                element: "A".into(),
                w_mean: 1.0,
                w_std: 0.0,
            }],
            2.0,
            0.0,
        );
        assert!(estimate_material_stats(&d, &set, &grid, 1, 0).is_err());
    }
}
