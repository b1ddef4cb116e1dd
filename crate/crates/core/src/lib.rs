//! Measurement model and information bounds for multi-spectral X-ray screening.
//!
//! The crate models an energy-binned photon-counting measurement of layered
//! objects whose materials carry stochastic composition and density
//! variability. Because one composition draw moves the attenuation curve at
//! every energy together, material noise is strongly correlated across
//! energies; shot noise is not. The pipeline is:
//!
//! 1. [`materials`] / [`material_stats`]: sample material realizations and
//!    estimate the mean attenuation curve and its energy-energy covariance.
//! 2. [`forward`]: propagate attenuation statistics through Beer's law
//!    (linearized in the attenuation fluctuation) and detector binning to a
//!    per-pixel Gaussian count model with material plus shot covariance.
//! 3. [`divergence`] / [`bounds`]: closed-form Bhattacharyya and
//!    Kullback-Leibler divergences between object hypotheses feed mixture
//!    entropy bounds, which bracket the task-relevant mutual information and,
//!    through Fano- and Hu-type inequalities, the Bayes error probability.
//! 4. [`scenario`]: deterministic bag-pair ensembles, sweeps over photon
//!    budget / bin count / noise variant, and Monte Carlo validation oracles.
//!
//! All information quantities are carried in nats internally ([`Nats`]);
//! conversion to bits happens only at the binary-classification interface.

pub mod bounds;
pub mod divergence;
pub mod elements;
pub mod error;
pub mod forward;
pub mod grid;
pub mod material_stats;
pub mod materials;
pub mod scenario;
pub mod spectrum;

mod blocktext;
pub(crate) mod mc;
pub(crate) mod seeding;
mod table;

pub use bounds::{BoundsResult, DivergenceKind, EnsembleComponent, EnsembleSpec, Nats};
pub use divergence::ObjectDistribution;
pub use elements::{ElementSet, ElementTable};
pub use error::{Error, Result};
pub use forward::{BinnedCounts, DetectorModel, PixelDistribution};
pub use grid::EnergyGrid;
pub use material_stats::MaterialStats;
pub use materials::{ClassLabel, ComponentSpec, MaterialDefinition};
pub use scenario::config::{CorrelationMode, DecorrelateStage, ModelVariant, ScenarioConfig};
pub use spectrum::SourceSpectrum;
