//! Shared fixture construction for the benchmark suite.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use xtsi_core::material_stats::estimate_material_stats;
use xtsi_core::materials::load_material_library;
use xtsi_core::scenario::bags::{ItemSpec, ObjectSpec};
use xtsi_core::scenario::binning::{balanced_detector, reference_attenuation};
use xtsi_core::scenario::sweep::{build_object_model, ObjectModel};
use xtsi_core::{
    ClassLabel, CorrelationMode, DecorrelateStage, ElementSet, EnergyGrid, MaterialStats,
    SourceSpectrum,
};

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

pub struct BenchFixture {
    pub grid: EnergyGrid,
    pub elements: ElementSet,
    pub spectrum: SourceSpectrum,
    pub stats: BTreeMap<String, Arc<MaterialStats>>,
    pub names: Vec<String>,
}

impl BenchFixture {
    /// Loads the shipped library on the default scan grid and precomputes
    /// per-material statistics once, so benchmarks measure only the stage
    /// under test.
    pub fn load() -> Self {
        let grid = EnergyGrid::default_scan();
        let elements = ElementSet::load_dir(&data_dir().join("elements"), &grid).expect("elements");
        let spectrum = SourceSpectrum::load(&data_dir().join("spectrum_kramers.csv"), &grid)
            .expect("spectrum");
        let defs =
            load_material_library(&data_dir().join("synthetic_library.mlib")).expect("library");
        let mut stats = BTreeMap::new();
        let mut names = Vec::new();
        for def in &defs {
            let s = estimate_material_stats(def, &elements, &grid, 200, 7).expect("stats");
            stats.insert(def.name.clone(), Arc::new(s));
            names.push(def.name.clone());
        }
        BenchFixture {
            grid,
            elements,
            spectrum,
            stats,
            names,
        }
    }

    /// Four items spanning a 12 cm path, mixing the first four library
    /// materials.
    pub fn pixel_items(&self) -> Vec<ItemSpec> {
        self.names[..4]
            .iter()
            .map(|name| ItemSpec {
                material: name.clone(),
                length_cm: 3.0,
            })
            .collect()
    }

    /// Builds a full measurement model: `n_pixels` pixels, each holding the
    /// four-item path, binned into `n_bins` balanced detector bins.
    pub fn object_model(&self, n_pixels: usize, n_bins: usize) -> ObjectModel {
        let spec = ObjectSpec {
            pixels: (0..n_pixels).map(|_| self.pixel_items()).collect(),
        };
        let reference = self.stats.get(&self.names[0]).expect("reference material");
        let tau_ref = reference_attenuation(reference, 12.0).expect("reference attenuation");
        let detector = balanced_detector(&self.spectrum, &tau_ref, n_bins).expect("detector");
        build_object_model(
            "bench".to_string(),
            ClassLabel::NonThreat,
            &spec,
            &self.stats,
            &self.spectrum,
            &detector,
            CorrelationMode::Correlated,
            DecorrelateStage::Flux,
        )
        .expect("object model")
    }
}
