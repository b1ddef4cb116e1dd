//! Scan configuration: the knobs of the ensemble study, loadable from the
//! same block-structured text format as the material library.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::blocktext::{self, Block};
use crate::error::{Error, Result};
use crate::grid::EnergyGrid;

/// Which noise contributions enter a pixel's measurement covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Photon counting only: Σ_total = diag(jd0).
    ShotOnly,
    /// Material variability only: Σ_total = Σ_material (plus a PD jitter).
    MaterialOnly,
    /// Both: Σ_total = Σ_material + diag(jd0).
    Combined,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::ShotOnly,
        ModelVariant::MaterialOnly,
        ModelVariant::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::ShotOnly => "shot_only",
            ModelVariant::MaterialOnly => "material_only",
            ModelVariant::Combined => "combined",
        }
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shot_only" => Ok(ModelVariant::ShotOnly),
            "material_only" => Ok(ModelVariant::MaterialOnly),
            "combined" => Ok(ModelVariant::Combined),
            other => Err(Error::Invalid(format!(
                "unknown model variant `{other}` (expected shot_only, material_only, or combined)"
            ))),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the energy-sample flux covariance keeps its off-diagonal
/// (correlated) structure or is reduced to its diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationMode {
    Correlated,
    Uncorrelated,
}

impl CorrelationMode {
    pub const ALL: [CorrelationMode; 2] =
        [CorrelationMode::Correlated, CorrelationMode::Uncorrelated];

    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMode::Correlated => "correlated",
            CorrelationMode::Uncorrelated => "uncorrelated",
        }
    }
}

impl FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated" => Ok(CorrelationMode::Correlated),
            "uncorrelated" => Ok(CorrelationMode::Uncorrelated),
            other => Err(Error::Invalid(format!(
                "unknown correlation mode `{other}` (expected correlated or uncorrelated)"
            ))),
        }
    }
}

impl fmt::Display for CorrelationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the uncorrelated comparison drops the off-diagonal elements: at the
/// energy-sample flux covariance (before binning, the default) or on the
/// already-binned covariance (sensitivity option).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecorrelateStage {
    Flux,
    Binned,
}

impl DecorrelateStage {
    pub fn as_str(self) -> &'static str {
        match self {
            DecorrelateStage::Flux => "flux",
            DecorrelateStage::Binned => "binned",
        }
    }
}

impl FromStr for DecorrelateStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flux" => Ok(DecorrelateStage::Flux),
            "binned" => Ok(DecorrelateStage::Binned),
            other => Err(Error::Invalid(format!(
                "unknown decorrelate stage `{other}` (expected flux or binned)"
            ))),
        }
    }
}

impl fmt::Display for DecorrelateStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a sweep run depends on besides the material library, element
/// tables, and source spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: EnergyGrid,
    pub n_pixels: usize,
    pub vial_length_range_cm: (f64, f64),
    pub materials_per_vial: usize,
    pub n_bag_pairs: usize,
    pub bins: Vec<usize>,
    pub n0_sweep: Vec<f64>,
    pub variants: Vec<ModelVariant>,
    pub corr_modes: Vec<CorrelationMode>,
    pub decorrelate_stage: DecorrelateStage,
    pub exposure_time_s: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub reference_material: String,
    pub reference_length_cm: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            grid: EnergyGrid::default_scan(),
            n_pixels: 10,
            vial_length_range_cm: (0.5, 20.0),
            materials_per_vial: 4,
            n_bag_pairs: 160,
            bins: vec![1, 2, 3],
            n0_sweep: vec![1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10],
            variants: ModelVariant::ALL.to_vec(),
            corr_modes: CorrelationMode::ALL.to_vec(),
            decorrelate_stage: DecorrelateStage::Flux,
            exposure_time_s: 1.0,
            n_realizations: 1000,
            seed: 7,
            reference_material: "water_sim".to_string(),
            reference_length_cm: 12.0,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "grid_min_kev",
    "grid_max_kev",
    "grid_samples",
    "n_pixels",
    "vial_length_min_cm",
    "vial_length_max_cm",
    "materials_per_vial",
    "n_bag_pairs",
    "bins",
    "n0_sweep",
    "variants",
    "corr_modes",
    "decorrelate_stage",
    "exposure_time_s",
    "n_realizations",
    "seed",
    "reference_material",
    "reference_length_cm",
];

impl ScenarioConfig {
    /// Loads the `scan { ... }` block from a config file. Missing keys keep
    /// their defaults; unknown keys are errors.
    pub fn load(path: &Path) -> Result<Self> {
        let blocks = blocktext::parse_file(path)?;
        let scan = blocks
            .iter()
            .find(|b| b.name == "scan")
            .ok_or_else(|| Error::parse(path, 1, "no `scan { ... }` block found"))?;
        let mut cfg = ScenarioConfig::default();
        reject_unknown_keys(scan, path)?;

        let mut grid_min = cfg.grid.min_kev();
        let mut grid_max = cfg.grid.max_kev();
        let mut grid_samples = cfg.grid.len();
        if let Some(v) = scan.optional(path, "grid_min_kev")? {
            grid_min = parse_entry(scan, path, "grid_min_kev", v)?;
        }
        if let Some(v) = scan.optional(path, "grid_max_kev")? {
            grid_max = parse_entry(scan, path, "grid_max_kev", v)?;
        }
        if let Some(v) = scan.optional(path, "grid_samples")? {
            grid_samples = parse_entry(scan, path, "grid_samples", v)?;
        }
        cfg.grid = EnergyGrid::uniform(grid_min, grid_max, grid_samples)?;

        if let Some(v) = scan.optional(path, "n_pixels")? {
            cfg.n_pixels = parse_entry(scan, path, "n_pixels", v)?;
        }
        if let Some(v) = scan.optional(path, "vial_length_min_cm")? {
            cfg.vial_length_range_cm.0 = parse_entry(scan, path, "vial_length_min_cm", v)?;
        }
        if let Some(v) = scan.optional(path, "vial_length_max_cm")? {
            cfg.vial_length_range_cm.1 = parse_entry(scan, path, "vial_length_max_cm", v)?;
        }
        if let Some(v) = scan.optional(path, "materials_per_vial")? {
            cfg.materials_per_vial = parse_entry(scan, path, "materials_per_vial", v)?;
        }
        if let Some(v) = scan.optional(path, "n_bag_pairs")? {
            cfg.n_bag_pairs = parse_entry(scan, path, "n_bag_pairs", v)?;
        }
        if let Some(v) = scan.optional(path, "bins")? {
            cfg.bins = blocktext::parse_list(v, path, scan.entry_line("bins"), "bin count")?;
        }
        if let Some(v) = scan.optional(path, "n0_sweep")? {
            cfg.n0_sweep =
                blocktext::parse_list(v, path, scan.entry_line("n0_sweep"), "photon budget")?;
        }
        if let Some(v) = scan.optional(path, "variants")? {
            cfg.variants =
                blocktext::parse_list(v, path, scan.entry_line("variants"), "model variant")?;
        }
        if let Some(v) = scan.optional(path, "corr_modes")? {
            cfg.corr_modes =
                blocktext::parse_list(v, path, scan.entry_line("corr_modes"), "correlation mode")?;
        }
        if let Some(v) = scan.optional(path, "decorrelate_stage")? {
            cfg.decorrelate_stage = v.parse().map_err(|e: Error| {
                Error::parse(path, scan.entry_line("decorrelate_stage"), e.to_string())
            })?;
        }
        if let Some(v) = scan.optional(path, "exposure_time_s")? {
            cfg.exposure_time_s = parse_entry(scan, path, "exposure_time_s", v)?;
        }
        if let Some(v) = scan.optional(path, "n_realizations")? {
            cfg.n_realizations = parse_entry(scan, path, "n_realizations", v)?;
        }
        if let Some(v) = scan.optional(path, "seed")? {
            cfg.seed = parse_entry(scan, path, "seed", v)?;
        }
        if let Some(v) = scan.optional(path, "reference_material")? {
            cfg.reference_material = v.to_string();
        }
        if let Some(v) = scan.optional(path, "reference_length_cm")? {
            cfg.reference_length_cm = parse_entry(scan, path, "reference_length_cm", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.vial_length_range_cm;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Invalid(format!(
                "vial length range [{lo}, {hi}] cm must be positive and ordered"
            )));
        }
        if self.n_pixels == 0 {
            return Err(Error::Invalid("n_pixels must be at least 1".into()));
        }
        if self.materials_per_vial == 0 {
            return Err(Error::Invalid("materials_per_vial must be at least 1".into()));
        }
        if self.n_bag_pairs == 0 {
            return Err(Error::Invalid("n_bag_pairs must be at least 1".into()));
        }
        if self.bins.is_empty() || self.bins.iter().any(|&b| b == 0) {
            return Err(Error::Invalid(
                "bin sweep must be non-empty with every count >= 1".into(),
            ));
        }
        if self.n0_sweep.is_empty() || self.n0_sweep.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::Invalid(
                "photon budget sweep must be non-empty and positive".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(Error::Invalid("variant sweep must be non-empty".into()));
        }
        if self.corr_modes.is_empty() {
            return Err(Error::Invalid(
                "correlation mode sweep must be non-empty".into(),
            ));
        }
        if !(self.exposure_time_s > 0.0) {
            return Err(Error::Invalid(format!(
                "exposure time {} s must be positive",
                self.exposure_time_s
            )));
        }
        if self.n_realizations < 2 {
            return Err(Error::Invalid(
                "n_realizations must be at least 2 for a sample covariance".into(),
            ));
        }
        if !(self.reference_length_cm > 0.0) {
            return Err(Error::Invalid(format!(
                "reference length {} cm must be positive",
                self.reference_length_cm
            )));
        }
        Ok(())
    }
}

fn reject_unknown_keys(scan: &Block, path: &Path) -> Result<()> {
    for item in &scan.items {
        match item {
            crate::blocktext::Item::Entry { key, line, .. } => {
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(Error::parse(
                        path,
                        *line,
                        format!("unknown scan entry `{key}`"),
                    ));
                }
            }
            crate::blocktext::Item::Block(b) => {
                return Err(Error::parse(
                    path,
                    b.line,
                    format!("unexpected block `{}` inside scan", b.name),
                ));
            }
        }
    }
    Ok(())
}

fn parse_entry<T: FromStr>(scan: &Block, path: &Path, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| {
        Error::parse(
            path,
            scan.entry_line(key),
            format!("entry `{key}`: cannot parse `{raw}`"),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_cfg(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn shipped_default_config_matches_builtin_defaults() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/default_scan.cfg");
        let cfg = ScenarioConfig::load(Path::new(path)).unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let f = write_cfg("scan { n_bag_pairs 4 bins 1,2 seed 99 }");
        let cfg = ScenarioConfig::load(f.path()).unwrap();
        assert_eq!(cfg.n_bag_pairs, 4);
        assert_eq!(cfg.bins, vec![1, 2]);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.n_pixels, 10);
        assert_eq!(cfg.variants, ModelVariant::ALL.to_vec());
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let f = write_cfg("scan {\n  n_bag_pairs 4\n  wibble 3\n}");
        let err = ScenarioConfig::load(f.path()).unwrap_err().to_string();
        assert!(err.contains("wibble"), "{err}");
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for bad in [
            "scan { vial_length_min_cm -1 }",
            "scan { bins 0 }",
            "scan { n0_sweep 1e3,0 }",
            "scan { variants warp_drive }",
            "scan { exposure_time_s 0 }",
        ] {
            let f = write_cfg(bad);
            assert!(ScenarioConfig::load(f.path()).is_err(), "accepted: {bad}");
        }
    }

    #[test]
    fn enum_round_trips() {
        for v in ModelVariant::ALL {
            assert_eq!(v.as_str().parse::<ModelVariant>().unwrap(), v);
        }
        for m in CorrelationMode::ALL {
            assert_eq!(m.as_str().parse::<CorrelationMode>().unwrap(), m);
        }
        for s in [DecorrelateStage::Flux, DecorrelateStage::Binned] {
            assert_eq!(s.as_str().parse::<DecorrelateStage>().unwrap(), s);
        }
        assert!("sideways".parse::<CorrelationMode>().is_err());
    }
}
