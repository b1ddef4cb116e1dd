use crate::error::{Error, Result};

/// Strictly increasing photon energy grid in keV. All spectral quantities in
/// the crate are sampled on a shared grid; alignment is checked by equality.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    energies: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::Invalid(format!(
                "energy grid needs at least 2 samples, got {}",
                energies.len()
            )));
        }
        if energies[0] <= 0.0 || !energies[0].is_finite() {
            return Err(Error::Invalid(format!(
                "energy grid must be positive and finite, starts at {}",
                energies[0]
            )));
        }
        for w in energies.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Invalid(format!(
                    "energy grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(EnergyGrid { energies })
    }

    /// `n` uniformly spaced samples spanning `[lo, hi]` keV inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!(
                "uniform grid needs at least 2 samples, got {n}"
            )));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Invalid(format!(
                "uniform grid needs 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut energies: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        // Pin the endpoint so coverage checks against [lo, hi] tables are exact.
        energies[n - 1] = hi;
        Self::new(energies)
    }

    /// Default scan grid: 180 samples on [30, 160] keV.
    pub fn default_scan() -> Self {
        Self::uniform(30.0, 160.0, 180).expect("static grid parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 2 samples
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn min_kev(&self) -> f64 {
        self.energies[0]
    }

    pub fn max_kev(&self) -> f64 {
        *self.energies.last().expect("non-empty by construction")
    }

    /// Trapezoid quadrature weights; `dot(weights, f)` integrates a sampled
    /// function over the grid span.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.energies.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = 0.5 * (self.energies[i + 1] - self.energies[i]);
            w[i] += h;
            w[i + 1] += h;
        }
        w
    }

    pub fn trapezoid_integral(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "integrand has {} samples, grid has {}",
                values.len(),
                self.len()
            )));
        }
        let mut acc = 0.0;
        for i in 0..values.len() - 1 {
            acc += 0.5 * (values[i] + values[i + 1]) * (self.energies[i + 1] - self.energies[i]);
        }
        Ok(acc)
    }

    /// Grid with midpoints inserted between every adjacent pair; the original
    /// samples survive at even indices. Used to test refinement consistency.
    pub fn refine_midpoints(&self) -> Self {
        let mut energies = Vec::with_capacity(self.energies.len() * 2 - 1);
        for i in 0..self.energies.len() - 1 {
            energies.push(self.energies[i]);
            energies.push(0.5 * (self.energies[i] + self.energies[i + 1]));
        }
        energies.push(*self.energies.last().expect("non-empty"));
        EnergyGrid { energies }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing() {
        assert!(EnergyGrid::new(vec![30.0, 30.0, 40.0]).is_err());
        assert!(EnergyGrid::new(vec![30.0, 25.0]).is_err());
        assert!(EnergyGrid::new(vec![30.0]).is_err());
        assert!(EnergyGrid::new(vec![-1.0, 5.0]).is_err());
        assert!(EnergyGrid::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn uniform_hits_both_endpoints() {
        let g = EnergyGrid::uniform(30.0, 160.0, 180).unwrap();
        assert_eq!(g.len(), 180);
        assert_eq!(g.min_kev(), 30.0);
        assert_eq!(g.max_kev(), 160.0);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = EnergyGrid::uniform(1.0, 3.0, 5).unwrap();
        let f: Vec<f64> = g.energies().iter().map(|e| 2.0 * e + 1.0).collect();
        // integral of 2E+1 on [1,3] = (9+3) - (1+1) = 10
        let got = g.trapezoid_integral(&f).unwrap();
        assert!((got - 10.0).abs() < 1e-12, "got {got}");
        let w = g.trapezoid_weights();
        let via_weights: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((via_weights - 10.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_keeps_original_samples() {
        let g = EnergyGrid::uniform(30.0, 160.0, 14).unwrap();
        let r = g.refine_midpoints();
        assert_eq!(r.len(), 27);
        for (i, e) in g.energies().iter().enumerate() {
            assert_eq!(r.energies()[2 * i], *e);
        }
    }
}
