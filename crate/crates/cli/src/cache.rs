//! Content-addressed material statistics cache. The key hashes everything
//! the estimate depends on: the material definition, the element tables it
//! references, the energy grid, the realization count, and the seed. A cache
//! hit is therefore exactly equivalent to a recompute, and editing any input
//! invalidates only the affected materials.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use xtsi_core::material_stats::{estimate_material_stats, load_stats_bundle, save_stats_bundle};
use xtsi_core::{ElementSet, EnergyGrid, Error, MaterialDefinition, MaterialStats, Result};

pub struct StatsCache {
    root: PathBuf,
}

pub struct EnsureOutcome {
    pub stats: Arc<MaterialStats>,
    pub cached: bool,
    pub key: String,
}

impl StatsCache {
    pub fn new(root: PathBuf) -> Self {
        StatsCache { root }
    }

    fn key(
        def: &MaterialDefinition,
        elements: &ElementSet,
        grid: &EnergyGrid,
        n_realizations: usize,
        seed: u64,
    ) -> Result<String> {
        let mut h = Sha256::new();
        h.update(def.name.as_bytes());
        h.update([0]);
        h.update(def.class_label.as_str().as_bytes());
        h.update(def.density_mean.to_bits().to_le_bytes());
        h.update(def.density_std.to_bits().to_le_bytes());
        for c in &def.components {
            h.update(c.element.as_bytes());
            h.update([0]);
            h.update(c.w_mean.to_bits().to_le_bytes());
            h.update(c.w_std.to_bits().to_le_bytes());
            let table = elements.get(&c.element)?;
            h.update(table.density().to_bits().to_le_bytes());
            for v in table.mass_attenuation() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for e in grid.energies() {
            h.update(e.to_bits().to_le_bytes());
        }
        h.update((n_realizations as u64).to_le_bytes());
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        let mut key = String::with_capacity(12);
        for byte in &digest[..6] {
            key.push_str(&format!("{byte:02x}"));
        }
        Ok(key)
    }

    /// Loads the cached statistics when the key matches, recomputing and
    /// storing the bundle otherwise. A corrupt or grid-mismatched bundle is
    /// silently recomputed and overwritten.
    pub fn ensure(
        &self,
        def: &MaterialDefinition,
        elements: &ElementSet,
        grid: &EnergyGrid,
        n_realizations: usize,
        seed: u64,
    ) -> Result<EnsureOutcome> {
        let key = Self::key(def, elements, grid, n_realizations, seed)?;
        let dir = self.root.join(format!("{}_{key}", def.name));
        let mu0_path = dir.join("mu0.csv");
        let sigma_path = dir.join("sigma.csv");
        if mu0_path.exists() && sigma_path.exists() {
            if let Ok(stats) = load_stats_bundle(&mu0_path, &sigma_path, Some(grid)) {
                return Ok(EnsureOutcome {
                    stats: Arc::new(stats),
                    cached: true,
                    key,
                });
            }
        }
        let stats = estimate_material_stats(def, elements, grid, n_realizations, seed)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_stats_bundle(&stats, &mu0_path, &sigma_path)?;
        Ok(EnsureOutcome {
            stats: Arc::new(stats),
            cached: false,
            key,
        })
    }

    /// Ensures every library entry, returning the stats map plus one
    /// `name: cached|computed (key)` status line per material.
    pub fn ensure_all(
        &self,
        library: &[MaterialDefinition],
        elements: &ElementSet,
        grid: &EnergyGrid,
        n_realizations: usize,
        seed: u64,
    ) -> Result<(BTreeMap<String, Arc<MaterialStats>>, Vec<String>)> {
        let mut stats = BTreeMap::new();
        let mut lines = Vec::with_capacity(library.len());
        for def in library {
            let outcome = self.ensure(def, elements, grid, n_realizations, seed)?;
            lines.push(format!(
                "{}: {} ({})",
                def.name,
                if outcome.cached { "cached" } else { "computed" },
                outcome.key
            ));
            stats.insert(def.name.clone(), outcome.stats);
        }
        Ok((stats, lines))
    }
}
