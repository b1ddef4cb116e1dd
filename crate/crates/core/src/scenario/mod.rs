//! Study pipeline built on the measurement model: bag-pair ensembles,
//! count-balanced bin edges, photon-budget sweeps under the three noise
//! models, the correlated-vs-uncorrelated comparison, and the Monte Carlo
//! oracles that validate every closed form.

pub mod bags;
pub mod binning;
pub mod config;
pub mod sweep;
pub mod validate;
pub mod variants;
