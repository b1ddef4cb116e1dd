//! Photon-budget sweep: builds every object's measurement distribution for
//! each (N₀, bin count, noise model, correlation mode) combination and
//! evaluates the information and error-probability bounds over the ensemble.
//!
//! The binned statistics scale exactly with the photon budget (means
//! linearly, material covariances quadratically), so the spectral pipeline
//! runs once per (object, bin count, correlation mode) at N₀ = 1 and each
//! sweep point rescales those unit statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bounds::{self, BoundsResult, EnsembleComponent, EnsembleSpec};
use crate::divergence::ObjectDistribution;
use crate::error::{Error, Result, ResultExt};
use crate::forward::{self, BinnedCounts, DetectorModel, PathItem, PathSpec};
use crate::material_stats::{estimate_material_stats, MaterialStats};
use crate::materials::{ClassLabel, MaterialDefinition};
use crate::scenario::bags::{self, ObjectSpec};
use crate::scenario::binning;
use crate::scenario::config::{CorrelationMode, DecorrelateStage, ModelVariant, ScenarioConfig};
use crate::scenario::variants::{build_model_variant, decorrelate};
use crate::spectrum::SourceSpectrum;

/// Everything one sweep run reads.
pub struct SweepInputs<'a> {
    pub config: &'a ScenarioConfig,
    pub library: &'a [MaterialDefinition],
    pub stats: &'a BTreeMap<String, Arc<MaterialStats>>,
    pub spectrum: &'a SourceSpectrum,
}

/// Estimates material statistics for every library entry on the config grid.
pub fn estimate_all_stats(
    cfg: &ScenarioConfig,
    library: &[MaterialDefinition],
    elements: &crate::elements::ElementSet,
) -> Result<BTreeMap<String, Arc<MaterialStats>>> {
    let computed = library
        .par_iter()
        .map(|def| {
            let stats =
                estimate_material_stats(def, elements, &cfg.grid, cfg.n_realizations, cfg.seed)
                    .ctx(format!("material `{}`", def.name))?;
            Ok((def.name.clone(), Arc::new(stats)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(computed.into_iter().collect())
}

/// One object's binned statistics at N₀ = 1 for a fixed bin layout and
/// correlation mode, ready to be rescaled to any photon budget.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub name: String,
    pub label: ClassLabel,
    pub unit: Vec<BinnedCounts>,
    pub linearization_exceeded: Vec<bool>,
}

impl ObjectModel {
    /// Measurement distribution at photon budget `n0` under the chosen noise
    /// model: means scale as N₀, material covariances as N₀².
    pub fn realize(&self, n0: f64, variant: ModelVariant) -> Result<ObjectDistribution> {
        if !(n0 > 0.0) {
            return Err(Error::Invalid(format!("photon budget {n0} must be > 0")));
        }
        let pixels = self
            .unit
            .iter()
            .zip(&self.linearization_exceeded)
            .map(|(u, &exceeded)| {
                let scaled = BinnedCounts {
                    jd0: &u.jd0 * n0,
                    sigma_material: &u.sigma_material * (n0 * n0),
                };
                build_model_variant(&scaled, variant).map(|p| p.with_linearization_flag(exceeded))
            })
            .collect::<Result<Vec<_>>>()?;
        ObjectDistribution::new(pixels)
    }
}

/// Runs the spectral pipeline for one object at N₀ = 1: attenuation moments,
/// linearized flux covariance (decorrelated here if requested), binning.
pub fn build_object_model(
    name: String,
    label: ClassLabel,
    spec: &ObjectSpec,
    stats: &BTreeMap<String, Arc<MaterialStats>>,
    unit_spectrum: &SourceSpectrum,
    detector: &DetectorModel,
    corr_mode: CorrelationMode,
    stage: DecorrelateStage,
) -> Result<ObjectModel> {
    let grid = unit_spectrum.grid();
    let mut unit = Vec::with_capacity(spec.pixels.len());
    let mut linearization_exceeded = Vec::with_capacity(spec.pixels.len());
    for (p, items) in spec.pixels.iter().enumerate() {
        let build = || -> Result<(BinnedCounts, bool)> {
            let path_items = items
                .iter()
                .map(|item| {
                    let material = stats.get(&item.material).ok_or_else(|| {
                        Error::Invalid(format!(
                            "no statistics for material `{}`",
                            item.material
                        ))
                    })?;
                    Ok(PathItem {
                        material: Arc::clone(material),
                        length_cm: item.length_cm,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let path = PathSpec::new(path_items)?;
            let agg = forward::aggregate_attenuation(&path, grid)?;
            let j0 = forward::mean_flux(unit_spectrum, &agg.tau0)?;
            let mut sigma_j = forward::linearized_flux_covariance(&j0, &agg.sigma_tau);
            if corr_mode == CorrelationMode::Uncorrelated && stage == DecorrelateStage::Flux {
                sigma_j = decorrelate(&sigma_j);
            }
            let mut counts =
                forward::bin_counts(detector, &j0, &sigma_j, unit_spectrum.exposure_time())?;
            if corr_mode == CorrelationMode::Uncorrelated && stage == DecorrelateStage::Binned {
                counts.sigma_material = decorrelate(&counts.sigma_material);
            }
            Ok((counts, agg.linearization_exceeded()))
        };
        let (counts, exceeded) = build().ctx(format!("object {name}, pixel {p}"))?;
        unit.push(counts);
        linearization_exceeded.push(exceeded);
    }
    Ok(ObjectModel {
        name,
        label,
        unit,
        linearization_exceeded,
    })
}

/// Builds the whole ensemble's unit models for one (bin count, correlation
/// mode) cell, in pair order (threat then non-threat), in parallel.
fn build_ensemble_models(
    inputs: &SweepInputs<'_>,
    pairs: &[bags::BagPair],
    detector: &DetectorModel,
    unit_spectrum: &SourceSpectrum,
    corr_mode: CorrelationMode,
) -> Result<Vec<ObjectModel>> {
    let cfg = inputs.config;
    let nested: Vec<[ObjectModel; 2]> = pairs
        .par_iter()
        .map(|pair| {
            let ix = pair.index();
            let threat = build_object_model(
                format!("pair{ix:03}_threat"),
                ClassLabel::Threat,
                pair.threat(),
                inputs.stats,
                unit_spectrum,
                detector,
                corr_mode,
                cfg.decorrelate_stage,
            )?;
            let non_threat = build_object_model(
                format!("pair{ix:03}_non_threat"),
                ClassLabel::NonThreat,
                pair.non_threat(),
                inputs.stats,
                unit_spectrum,
                detector,
                corr_mode,
                cfg.decorrelate_stage,
            )?;
            Ok([threat, non_threat])
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Equal-weight two-class ensemble over realized objects, paired in pair
/// order for the pairing-based upper bound.
pub fn ensemble_at(
    models: &[ObjectModel],
    n0: f64,
    variant: ModelVariant,
) -> Result<EnsembleSpec> {
    let k = models.len();
    let weight = 1.0 / k as f64;
    let components = models
        .iter()
        .map(|m| {
            Ok(EnsembleComponent {
                dist: m.realize(n0, variant).ctx(format!("object {}", m.name))?,
                weight,
                label: m.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairing = (0..k / 2).map(|i| (2 * i, 2 * i + 1)).collect();
    EnsembleSpec::new(components, Some(pairing))
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub n0: f64,
    pub n_bins: usize,
    pub variant: ModelVariant,
    pub corr_mode: CorrelationMode,
    pub bounds: BoundsResult,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "n0,n_bins,variant,corr_mode,is_lower_bits,is_upper_bits,\
pe_lower,pe_upper,hc_minus_is_lower,hc_minus_is_upper";

impl SweepTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let b = &row.bounds;
            let hc = b.class_entropy.bits();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.n0,
                row.n_bins,
                row.variant,
                row.corr_mode,
                b.is_lower.bits(),
                b.is_upper.bits(),
                b.pe_lower,
                b.pe_upper,
                hc - b.is_lower.bits(),
                hc - b.is_upper.bits(),
            )
            .expect("string write");
        }
        out
    }
}

/// The full study sweep. Row order is the nested configuration order
/// (N₀ → bins → variant → correlation mode); rows are computed in parallel
/// but collected in that order, so the output is a pure function of
/// (config, library, seed).
pub fn run_sweep(inputs: &SweepInputs<'_>) -> Result<SweepTable> {
    let cfg = inputs.config;
    cfg.validate()?;
    if inputs.spectrum.grid() != &cfg.grid {
        return Err(Error::GridMismatch(
            "spectrum is sampled on a different grid than the scan config".into(),
        ));
    }
    for def in inputs.library {
        if !inputs.stats.contains_key(&def.name) {
            return Err(Error::Invalid(format!(
                "no statistics for library material `{}`",
                def.name
            )));
        }
    }
    let reference = inputs.stats.get(&cfg.reference_material).ok_or_else(|| {
        Error::Invalid(format!(
            "reference material `{}` is not in the statistics set",
            cfg.reference_material
        ))
    })?;
    let pairs = bags::generate_bag_pairs(cfg, inputs.library)?;
    let unit_spectrum = inputs
        .spectrum
        .clone()
        .with_photon_budget(1.0)?
        .with_exposure_time(cfg.exposure_time_s)?;
    let tau_ref = binning::reference_attenuation(reference, cfg.reference_length_cm)?;

    // Unit models once per (bins, corr) cell; every N₀ and variant reuses them.
    let mut cells: BTreeMap<(usize, &'static str), Vec<ObjectModel>> = BTreeMap::new();
    for &n_bins in &cfg.bins {
        let detector = binning::balanced_detector(&unit_spectrum, &tau_ref, n_bins)
            .ctx(format!("balancing {n_bins} bin edges"))?;
        for &corr in &cfg.corr_modes {
            let models = build_ensemble_models(inputs, &pairs, &detector, &unit_spectrum, corr)
                .ctx(format!("building models for bins={n_bins} corr={corr}"))?;
            cells.insert((n_bins, corr.as_str()), models);
        }
    }

    let mut points = Vec::new();
    for &n0 in &cfg.n0_sweep {
        for &n_bins in &cfg.bins {
            for &variant in &cfg.variants {
                for &corr in &cfg.corr_modes {
                    points.push((n0, n_bins, variant, corr));
                }
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|&(n0, n_bins, variant, corr)| {
            let point = || -> Result<BoundsResult> {
                let models = &cells[&(n_bins, corr.as_str())];
                let ens = ensemble_at(models, n0, variant)?;
                bounds::pe_bounds(&ens)
            };
            let bounds = point().ctx(format!(
                "sweep point n0={n0} bins={n_bins} variant={variant} corr={corr}"
            ))?;
            Ok(SweepRow {
                n0,
                n_bins,
                variant,
                corr_mode: corr,
                bounds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}
