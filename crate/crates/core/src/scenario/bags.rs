//! Bag-pair ensemble generation: pairs of simulated objects with identical
//! geometry that differ in exactly one item's material, one variant carrying
//! a threat substance and the other not. The pair probes the decision
//! boundary; equal pair weights give equal class prevalence.

use rand::Rng;

use crate::error::{Error, Result};
use crate::materials::{ClassLabel, MaterialDefinition};
use crate::scenario::config::ScenarioConfig;
use crate::seeding::{self, TAG_BAG_PAIRS};

/// Smallest fraction of a vial's length any single item may occupy, so no
/// item degenerates to a zero-length slab.
const MIN_ITEM_FRACTION: f64 = 0.05;

/// One slab of a single material along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSpec {
    pub material: String,
    pub length_cm: f64,
}

/// Geometry + material assignment of one simulated object: per pixel, the
/// ordered items its ray passes through.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub pixels: Vec<Vec<ItemSpec>>,
}

impl ObjectSpec {
    pub fn n_pixels(&self) -> usize {
        self.pixels.len()
    }
}

/// Two objects identical except one item's material; `threat` carries a
/// threat-class substance in the differing slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BagPair {
    index: usize,
    threat: ObjectSpec,
    non_threat: ObjectSpec,
    differing: (usize, usize),
}

impl BagPair {
    pub fn new(
        index: usize,
        threat: ObjectSpec,
        non_threat: ObjectSpec,
        differing: (usize, usize),
    ) -> Result<Self> {
        let pair = BagPair {
            index,
            threat,
            non_threat,
            differing,
        };
        let diffs = pair.differences()?;
        if diffs != vec![differing] {
            return Err(Error::Invalid(format!(
                "pair {index}: variants differ at {diffs:?}, expected exactly {differing:?}"
            )));
        }
        Ok(pair)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn threat(&self) -> &ObjectSpec {
        &self.threat
    }

    pub fn non_threat(&self) -> &ObjectSpec {
        &self.non_threat
    }

    pub fn differing_slot(&self) -> (usize, usize) {
        self.differing
    }

    /// The (pixel, item) slots where the two variants differ. Geometry
    /// mismatches are errors; material mismatches are returned.
    pub fn differences(&self) -> Result<Vec<(usize, usize)>> {
        if self.threat.pixels.len() != self.non_threat.pixels.len() {
            return Err(Error::Invalid(format!(
                "pair {}: variants have {} and {} pixels",
                self.index,
                self.threat.pixels.len(),
                self.non_threat.pixels.len()
            )));
        }
        let mut diffs = Vec::new();
        for (p, (a, b)) in self
            .threat
            .pixels
            .iter()
            .zip(&self.non_threat.pixels)
            .enumerate()
        {
            if a.len() != b.len() {
                return Err(Error::Invalid(format!(
                    "pair {}: pixel {p} has {} and {} items",
                    self.index,
                    a.len(),
                    b.len()
                )));
            }
            for (k, (ia, ib)) in a.iter().zip(b).enumerate() {
                if ia.length_cm != ib.length_cm {
                    return Err(Error::Invalid(format!(
                        "pair {}: item ({p}, {k}) lengths differ: {} vs {}",
                        self.index, ia.length_cm, ib.length_cm
                    )));
                }
                if ia.material != ib.material {
                    diffs.push((p, k));
                }
            }
        }
        Ok(diffs)
    }
}

/// Generates the configured number of bag pairs. Deterministic under the
/// config seed and independent of thread count: every pair draws from its own
/// derived RNG stream.
pub fn generate_bag_pairs(
    cfg: &ScenarioConfig,
    library: &[MaterialDefinition],
) -> Result<Vec<BagPair>> {
    let threats: Vec<&MaterialDefinition> = library
        .iter()
        .filter(|m| m.class_label == ClassLabel::Threat)
        .collect();
    let non_threats: Vec<&MaterialDefinition> = library
        .iter()
        .filter(|m| m.class_label == ClassLabel::NonThreat)
        .collect();
    if threats.is_empty() || non_threats.is_empty() {
        return Err(Error::Invalid(format!(
            "bag pairs need both classes in the library: {} threat, {} non-threat",
            threats.len(),
            non_threats.len()
        )));
    }
    let k = cfg.materials_per_vial;
    let (len_lo, len_hi) = cfg.vial_length_range_cm;
    (0..cfg.n_bag_pairs)
        .map(|pair_ix| {
            let mut rng = seeding::derive_rng(cfg.seed, TAG_BAG_PAIRS, &[pair_ix as u64]);
            let mut base = Vec::with_capacity(cfg.n_pixels);
            for _ in 0..cfg.n_pixels {
                let total: f64 = rng.random_range(len_lo..=len_hi);
                let raw: Vec<f64> = (0..k).map(|_| rng.random()).collect();
                let raw_sum: f64 = raw.iter().sum();
                let spread = 1.0 - k as f64 * MIN_ITEM_FRACTION;
                let items: Vec<ItemSpec> = raw
                    .iter()
                    .map(|r| {
                        let fraction = if spread > 0.0 && raw_sum > 0.0 {
                            MIN_ITEM_FRACTION + spread * r / raw_sum
                        } else {
                            1.0 / k as f64
                        };
                        let material =
                            non_threats[rng.random_range(0..non_threats.len())].name.clone();
                        ItemSpec {
                            material,
                            length_cm: total * fraction,
                        }
                    })
                    .collect();
                base.push(items);
            }
            let slot = (
                rng.random_range(0..cfg.n_pixels),
                rng.random_range(0..k),
            );
            let threat_material = threats[rng.random_range(0..threats.len())].name.clone();
            let non_threat = ObjectSpec { pixels: base };
            let mut threat = non_threat.clone();
            threat.pixels[slot.0][slot.1].material = threat_material;
            BagPair::new(pair_ix, threat, non_threat, slot)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::load_material_library;
    use std::path::Path;

    fn library() -> Vec<MaterialDefinition> {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/synthetic_library.mlib"
        );
        load_material_library(Path::new(path)).unwrap()
    }

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            n_bag_pairs: 6,
            n_pixels: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = small_cfg();
        let lib = library();
        let a = generate_bag_pairs(&cfg, &lib).unwrap();
        let b = generate_bag_pairs(&cfg, &lib).unwrap();
        assert_eq!(a, b);
        let other_seed = ScenarioConfig {
            seed: cfg.seed + 1,
            ..cfg
        };
        let c = generate_bag_pairs(&other_seed, &lib).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ensemble_shape_and_single_difference() {
        let cfg = small_cfg();
        let lib = library();
        let class_of = |name: &str| {
            lib.iter()
                .find(|m| m.name == name)
                .map(|m| m.class_label)
                .unwrap()
        };
        let pairs = generate_bag_pairs(&cfg, &lib).unwrap();
        assert_eq!(pairs.len(), cfg.n_bag_pairs);
        for pair in &pairs {
            let diffs = pair.differences().unwrap();
            assert_eq!(diffs.len(), 1);
            let (p, k) = diffs[0];
            assert_eq!((p, k), pair.differing_slot());
            assert_eq!(
                class_of(&pair.threat().pixels[p][k].material),
                ClassLabel::Threat
            );
            for pixel in &pair.non_threat().pixels {
                for item in pixel {
                    assert_eq!(class_of(&item.material), ClassLabel::NonThreat);
                }
            }
        }
    }

    #[test]
    fn geometry_respects_configured_ranges() {
        let cfg = small_cfg();
        let pairs = generate_bag_pairs(&cfg, &library()).unwrap();
        let (lo, hi) = cfg.vial_length_range_cm;
        for pair in &pairs {
            for pixel in &pair.threat().pixels {
                assert_eq!(pixel.len(), cfg.materials_per_vial);
                let total: f64 = pixel.iter().map(|i| i.length_cm).sum();
                assert!(total >= lo - 1e-9 && total <= hi + 1e-9, "total {total}");
                for item in pixel {
                    assert!(
                        item.length_cm >= MIN_ITEM_FRACTION * total - 1e-9,
                        "item {} below floor for vial {total}",
                        item.length_cm
                    );
                }
            }
        }
    }

    #[test]
    fn single_class_library_is_rejected() {
        let lib = library();
        let only_threats: Vec<MaterialDefinition> = lib
            .iter()
            .filter(|m| m.class_label == ClassLabel::Threat)
            .cloned()
            .collect();
        assert!(generate_bag_pairs(&small_cfg(), &only_threats).is_err());
    }

    #[test]
    fn mismatched_variants_are_rejected_by_constructor() {
        let cfg = small_cfg();
        let pairs = generate_bag_pairs(&cfg, &library()).unwrap();
        let good = &pairs[0];
        // Second difference introduced: constructor must reject.
        let mut threat = good.threat().clone();
        let (p, k) = good.differing_slot();
        let other_slot = (p, (k + 1) % cfg.materials_per_vial);
        let current = &good.non_threat().pixels[other_slot.0][other_slot.1].material;
        let replacement = if current == "water_sim" {
            "poly_sim"
        } else {
            "water_sim"
        };
        threat.pixels[other_slot.0][other_slot.1].material = replacement.into();
        let check = BagPair::new(
            good.index(),
            threat,
            good.non_threat().clone(),
            good.differing_slot(),
        );
        assert!(check.is_err());
    }
}
