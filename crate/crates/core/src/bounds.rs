//! Bounds on the task-relevant mutual information I_S(g; C) of a two-class
//! object ensemble, and their conversion to Bayes error-probability bounds.
//!
//! Mixture entropies are never computed exactly; they are bracketed by
//! pairwise-divergence estimators (Bhattacharyya from below, KL from above),
//! which combine into two lower and two upper bounds on I_S. Everything here
//! is in nats until the binary-classification interface, which is base-2.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::divergence::{
    self, bhattacharyya_prepared, entropy_prepared, kl_prepared, ObjectDistribution,
};
use crate::error::{Error, Result, ResultExt};
use crate::materials::ClassLabel;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const BOUND_CROSSING_TOL: f64 = 1e-9;
const BISECTION_TOL: f64 = 1e-12;

/// Information measured in nats. Conversion to bits is explicit so the two
/// bases cannot be mixed silently.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Nats(pub f64);

impl Nats {
    pub fn bits(self) -> f64 {
        self.0 / LN_2
    }

    pub fn from_bits(bits: f64) -> Self {
        Nats(bits * LN_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    Bhattacharyya,
    KullbackLeibler,
}

/// One mixture component: an object hypothesis with its prior weight and
/// class label.
#[derive(Debug, Clone)]
pub struct EnsembleComponent {
    pub dist: ObjectDistribution,
    pub weight: f64,
    pub label: ClassLabel,
}

/// A weighted two-class ensemble of object hypotheses, optionally organized
/// as threat/non-threat pairs (a perfect matching across the classes).
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    components: Vec<EnsembleComponent>,
    pairing: Option<Vec<(usize, usize)>>,
}

impl EnsembleSpec {
    pub fn new(
        components: Vec<EnsembleComponent>,
        pairing: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Invalid(format!(
                "ensemble needs at least 2 components, got {}",
                components.len()
            )));
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Invalid(format!(
                "component weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"
            )));
        }
        if components.iter().any(|c| !(c.weight > 0.0)) {
            return Err(Error::Invalid("component weights must be > 0".into()));
        }
        let n_threat = components
            .iter()
            .filter(|c| c.label == ClassLabel::Threat)
            .count();
        if n_threat == 0 || n_threat == components.len() {
            return Err(Error::Invalid(
                "ensemble must contain both classes".into(),
            ));
        }
        let (n0, m0) = (components[0].dist.n_pixels(), components[0].dist.n_bins());
        for (i, c) in components.iter().enumerate() {
            if c.dist.n_pixels() != n0 || c.dist.n_bins() != m0 {
                return Err(Error::Invalid(format!(
                    "component {i} has shape {}x{}, component 0 has {n0}x{m0}",
                    c.dist.n_pixels(),
                    c.dist.n_bins()
                )));
            }
        }
        if let Some(pairs) = &pairing {
            let mut seen = vec![false; components.len()];
            for &(i, j) in pairs {
                if i >= components.len() || j >= components.len() {
                    return Err(Error::Invalid(format!(
                        "pair ({i}, {j}) is out of range"
                    )));
                }
                if components[i].label == components[j].label {
                    return Err(Error::Invalid(format!(
                        "pair ({i}, {j}) has two `{}` members; pairs must cross classes",
                        components[i].label
                    )));
                }
                for ix in [i, j] {
                    if seen[ix] {
                        return Err(Error::Invalid(format!(
                            "component {ix} appears in more than one pair"
                        )));
                    }
                    seen[ix] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Invalid(
                    "pairing must cover every component exactly once".into(),
                ));
            }
        }
        Ok(EnsembleSpec {
            components,
            pairing,
        })
    }

    pub fn components(&self) -> &[EnsembleComponent] {
        &self.components
    }

    pub fn pairing(&self) -> Option<&[(usize, usize)]> {
        self.pairing.as_deref()
    }

    pub fn prior(&self, label: ClassLabel) -> f64 {
        self.components
            .iter()
            .filter(|c| c.label == label)
            .map(|c| c.weight)
            .sum()
    }

    /// H(C) = −Σ_c P_c ln P_c, nats.
    pub fn class_entropy(&self) -> Nats {
        let p = self.prior(ClassLabel::Threat);
        Nats(-(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
    }

    fn class_indices(&self, label: ClassLabel) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Pairwise divergence matrices and component entropies of an ensemble,
/// computed once and reused by every bound.
pub(crate) struct EnsembleAnalysis<'a> {
    ens: &'a EnsembleSpec,
    bd: DMatrix<f64>,
    kl: DMatrix<f64>,
    entropies: Vec<f64>,
}

pub(crate) fn analyze(ens: &EnsembleSpec) -> Result<EnsembleAnalysis<'_>> {
    let k = ens.components.len();
    let prepared = ens
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| divergence::prepare(&c.dist).ctx(format!("component {i}")))
        .collect::<Result<Vec<_>>>()?;
    let entropies: Vec<f64> = prepared.iter().map(entropy_prepared).collect();

    // Row-parallel fill; each entry depends only on (i, j), so the result is
    // independent of scheduling.
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut bd_row = vec![0.0; k];
            let mut kl_row = vec![0.0; k];
            for j in 0..k {
                if i == j {
                    continue;
                }
                bd_row[j] = bhattacharyya_prepared(&prepared[i], &prepared[j])?;
                kl_row[j] = kl_prepared(&prepared[i], &prepared[j])?;
            }
            Ok((bd_row, kl_row))
        })
        .collect::<Result<_>>()?;

    let mut bd = DMatrix::zeros(k, k);
    let mut kl = DMatrix::zeros(k, k);
    for (i, (bd_row, kl_row)) in rows.into_iter().enumerate() {
        for j in 0..k {
            bd[(i, j)] = bd_row[j];
            kl[(i, j)] = kl_row[j];
        }
    }
    // BD is symmetric by construction; enforce it exactly so downstream sums
    // cannot depend on evaluation order.
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (bd[(i, j)] + bd[(j, i)]);
            bd[(i, j)] = v;
            bd[(j, i)] = v;
        }
    }
    Ok(EnsembleAnalysis {
        ens,
        bd,
        kl,
        entropies,
    })
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

impl EnsembleAnalysis<'_> {
    fn divergence(&self, kind: DivergenceKind, i: usize, j: usize) -> f64 {
        match kind {
            DivergenceKind::Bhattacharyya => self.bd[(i, j)],
            DivergenceKind::KullbackLeibler => self.kl[(i, j)],
        }
    }

    /// Pairwise-divergence mixture entropy estimator over a component subset
    /// with renormalized weights:
    /// Ĥ_D = Σᵢ wᵢ·H(prᵢ) − Σᵢ wᵢ·ln Σⱼ wⱼ·exp(−D(prᵢ, prⱼ)).
    /// The inner sum runs in log-domain; the j = i term (D = 0) keeps it
    /// finite no matter how separated the components are.
    fn entropy_bound_subset(&self, indices: &[usize], weights: &[f64], kind: DivergenceKind) -> f64 {
        debug_assert_eq!(indices.len(), weights.len());
        let ln_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut acc = 0.0;
        let mut terms = vec![0.0; indices.len()];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                terms[b] = ln_w[b] - self.divergence(kind, i, j);
            }
            acc += weights[a] * (self.entropies[i] - log_sum_exp(&terms));
        }
        acc
    }

    fn entropy_bound_full(&self, kind: DivergenceKind) -> f64 {
        let indices: Vec<usize> = (0..self.ens.components.len()).collect();
        let weights: Vec<f64> = self.ens.components.iter().map(|c| c.weight).collect();
        self.entropy_bound_subset(&indices, &weights, kind)
    }

    fn conditional_entropy_bound(&self, label: ClassLabel, kind: DivergenceKind) -> f64 {
        let indices = self.ens.class_indices(label);
        let prior = self.ens.prior(label);
        let weights: Vec<f64> = indices
            .iter()
            .map(|&i| self.ens.components[i].weight / prior)
            .collect();
        self.entropy_bound_subset(&indices, &weights, kind)
    }

    /// Main-text bound pair:
    ///   lower = Ĥ_BD(g) − Σ_c P_c·Ĥ_KL(g | c)
    ///   upper = Ĥ_KL(g) − Σ_c P_c·Ĥ_BD(g | c)
    fn is_bounds_main(&self) -> (f64, f64) {
        let mut cond_kl = 0.0;
        let mut cond_bd = 0.0;
        for label in [ClassLabel::Threat, ClassLabel::NonThreat] {
            let p = self.ens.prior(label);
            cond_kl += p * self.conditional_entropy_bound(label, DivergenceKind::KullbackLeibler);
            cond_bd += p * self.conditional_entropy_bound(label, DivergenceKind::Bhattacharyya);
        }
        let lower = self.entropy_bound_full(DivergenceKind::Bhattacharyya) - cond_kl;
        let upper = self.entropy_bound_full(DivergenceKind::KullbackLeibler) - cond_bd;
        (lower, upper)
    }

    /// Pairwise upper bound: decomposes the class variable over the pairing,
    ///   H(C) − Σᵢ aᵢ·H(gᵢ) + Σ_pairs (a₁+a₂)·[Ĥ_KL(pair mixture) − H_pair(C)]
    /// with within-pair weights r = a/(a₁+a₂) and
    /// H_pair(C) = −r₁ ln r₁ − r₂ ln r₂.
    fn is_upper_paired(&self) -> Result<f64> {
        let pairs = self.ens.pairing.as_ref().ok_or_else(|| {
            Error::Invalid("the paired upper bound needs an ensemble with a pairing".into())
        })?;
        let hc = self.ens.class_entropy().0;
        let mut total = hc;
        for (i, c) in self.ens.components.iter().enumerate() {
            total -= c.weight * self.entropies[i];
        }
        for &(i, j) in pairs {
            let (ai, aj) = (self.ens.components[i].weight, self.ens.components[j].weight);
            let mass = ai + aj;
            let (ri, rj) = (ai / mass, aj / mass);
            let pair_mix =
                self.entropy_bound_subset(&[i, j], &[ri, rj], DivergenceKind::KullbackLeibler);
            let pair_hc = -(ri * ri.ln() + rj * rj.ln());
            total += mass * (pair_mix - pair_hc);
        }
        Ok(total)
    }

    /// Class-level Bhattacharyya lower bound:
    ///   H(C) − Σ_c P_c·ln[1 + (P_c'^½/P_c^{3/2})·Σ_{i∈c}Σ_{j∈c'} √(aᵢaⱼ)·e^(−BDᵢⱼ)]
    fn is_lower_class_bd(&self) -> f64 {
        let mut total = self.ens.class_entropy().0;
        for label in [ClassLabel::Threat, ClassLabel::NonThreat] {
            let other = match label {
                ClassLabel::Threat => ClassLabel::NonThreat,
                ClassLabel::NonThreat => ClassLabel::Threat,
            };
            let p = self.ens.prior(label);
            let p_other = self.ens.prior(other);
            let own = self.ens.class_indices(label);
            let theirs = self.ens.class_indices(other);
            let mut terms = Vec::with_capacity(own.len() * theirs.len());
            for &i in &own {
                for &j in &theirs {
                    let ln_w = 0.5
                        * (self.ens.components[i].weight.ln()
                            + self.ens.components[j].weight.ln());
                    terms.push(ln_w - self.bd[(i, j)]);
                }
            }
            // ln(1 + exp(z)) with z = ln coefficient + log-sum of the cross
            // terms; the softplus form stays finite for any separation.
            let z = 0.5 * p_other.ln() - 1.5 * p.ln() + log_sum_exp(&terms);
            let softplus = if z > 30.0 { z } else { z.exp().ln_1p() };
            total -= p * softplus;
        }
        total
    }
}

/// Pairwise-divergence estimate of the full-mixture entropy Ĥ_D, nats.
/// Bhattacharyya gives a lower bound on the true mixture entropy, KL an
/// upper bound.
pub fn entropy_bound(ens: &EnsembleSpec, kind: DivergenceKind) -> Result<Nats> {
    Ok(Nats(analyze(ens)?.entropy_bound_full(kind)))
}

/// Main-text I_S bound pair (lower, upper), nats; raw (unclamped) values.
pub fn is_bounds_main(ens: &EnsembleSpec) -> Result<(Nats, Nats)> {
    let (lo, hi) = analyze(ens)?.is_bounds_main();
    Ok((Nats(lo), Nats(hi)))
}

/// Pairing-based I_S upper bound, nats; requires the ensemble's pairing.
pub fn is_upper_paired(ens: &EnsembleSpec) -> Result<Nats> {
    Ok(Nats(analyze(ens)?.is_upper_paired()?))
}

/// Class-level Bhattacharyya I_S lower bound, nats.
pub fn is_lower_class_bd(ens: &EnsembleSpec) -> Result<Nats> {
    Ok(Nats(analyze(ens)?.is_lower_class_bd()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBoundSource {
    Main,
    ClassBhattacharyya,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperBoundSource {
    Main,
    Paired,
}

impl std::fmt::Display for LowerBoundSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LowerBoundSource::Main => "main",
            LowerBoundSource::ClassBhattacharyya => "class_bd",
        })
    }
}

impl std::fmt::Display for UpperBoundSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpperBoundSource::Main => "main",
            UpperBoundSource::Paired => "paired",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CombinedIsBounds {
    pub lower: Nats,
    pub upper: Nats,
    pub lower_source: LowerBoundSource,
    pub upper_source: UpperBoundSource,
    pub class_entropy: Nats,
}

fn combined_from_analysis(analysis: &EnsembleAnalysis<'_>) -> Result<CombinedIsBounds> {
    let hc = analysis.ens.class_entropy().0;
    let (main_lower, main_upper) = analysis.is_bounds_main();
    let class_bd = analysis.is_lower_class_bd();
    let (raw_lower, lower_source) = if class_bd > main_lower {
        (class_bd, LowerBoundSource::ClassBhattacharyya)
    } else {
        (main_lower, LowerBoundSource::Main)
    };
    let (mut raw_upper, mut upper_source) = (main_upper, UpperBoundSource::Main);
    if analysis.ens.pairing.is_some() {
        let paired = analysis.is_upper_paired()?;
        if paired < raw_upper {
            raw_upper = paired;
            upper_source = UpperBoundSource::Paired;
        }
    }
    let lower = raw_lower.clamp(0.0, hc);
    let upper = raw_upper.clamp(0.0, hc);
    if lower > upper + BOUND_CROSSING_TOL {
        return Err(Error::Consistency(format!(
            "I_S lower bound {lower} exceeds upper bound {upper}"
        )));
    }
    Ok(CombinedIsBounds {
        lower: Nats(lower.min(upper)),
        upper: Nats(upper),
        lower_source,
        upper_source,
        class_entropy: Nats(hc),
    })
}

/// Best available bracket on I_S: max of the lower bounds, min of the upper
/// bounds, clamped to [0, H(C)]. A crossing beyond numerical slack is a
/// consistency error, never silently repaired.
pub fn combined_is_bounds(ens: &EnsembleSpec) -> Result<CombinedIsBounds> {
    combined_from_analysis(&analyze(ens)?)
}

/// Binary entropy h_b(x) = −x·log₂x − (1−x)·log₂(1−x), bits.
pub fn binary_entropy(x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "binary_entropy domain: {x}");
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    term(x) + term(1.0 - x)
}

/// Inverse of h_b on [0, ½], by bisection to 10⁻¹² on the argument.
pub fn binary_entropy_inverse(h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::Invalid(format!(
            "binary entropy inverse domain is [0, 1], got {h}"
        )));
    }
    Ok(bisect_increasing(binary_entropy, 0.0, 0.5, h))
}

/// The error-bound transform f_ub(x) = −P_min·log₂(P_min/(x+P_min))
/// − x·log₂(x/(x+P_min)), bits; monotone increasing on [0, P_min].
pub fn f_ub(x: f64, p_min: f64) -> f64 {
    debug_assert!((0.0..=0.5).contains(&p_min) && p_min > 0.0);
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    let s = x + p_min;
    -p_min * (p_min / s).log2() - x * (x / s).log2()
}

fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    if target <= f(lo) {
        return lo;
    }
    if target >= f(hi) {
        return hi;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fano lower bound on the Bayes error: P_e ≥ h_b⁻¹(H(C) − I_S). `is_bits`
/// is clamped to [0, H(C)] first.
pub fn pe_lower_fano(is_bits: f64, threat_prior: f64) -> f64 {
    let hc = binary_entropy(threat_prior);
    let deficit = (hc - is_bits.clamp(0.0, hc)).clamp(0.0, 1.0);
    bisect_increasing(binary_entropy, 0.0, 0.5, deficit)
}

/// Hu-type upper bound on the Bayes error:
/// P_e ≤ min(P_min, f_ub⁻¹(H(C) − I_S)).
pub fn pe_upper_hu(is_bits: f64, threat_prior: f64) -> f64 {
    let hc = binary_entropy(threat_prior);
    let p_min = threat_prior.min(1.0 - threat_prior);
    let deficit = (hc - is_bits.clamp(0.0, hc)).max(0.0);
    if deficit >= f_ub(p_min, p_min) {
        return p_min;
    }
    bisect_increasing(|x| f_ub(x, p_min), 0.0, p_min, deficit).min(p_min)
}

/// Everything the sweep needs for one ensemble: the combined I_S bracket and
/// the conservative error-probability bracket (the I_S upper bound gives the
/// error lower bound, and vice versa).
#[derive(Debug, Clone, Copy)]
pub struct BoundsResult {
    pub is_lower: Nats,
    pub is_upper: Nats,
    pub pe_lower: f64,
    pub pe_upper: f64,
    pub class_entropy: Nats,
    pub lower_source: LowerBoundSource,
    pub upper_source: UpperBoundSource,
}

pub fn pe_bounds(ens: &EnsembleSpec) -> Result<BoundsResult> {
    let analysis = analyze(ens)?;
    let combined = combined_from_analysis(&analysis)?;
    let threat_prior = ens.prior(ClassLabel::Threat);
    let pe_lower = pe_lower_fano(combined.upper.bits(), threat_prior);
    let pe_upper = pe_upper_hu(combined.lower.bits(), threat_prior);
    Ok(BoundsResult {
        is_lower: combined.lower,
        is_upper: combined.upper,
        pe_lower,
        pe_upper,
        class_entropy: combined.class_entropy,
        lower_source: combined.lower_source,
        upper_source: combined.upper_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{PixelDistribution, PixelFlags};
    use crate::mc;
    use crate::seeding;
    use nalgebra::{DMatrix, DVector};

    fn pixel(mean: &[f64], cov: &[f64]) -> PixelDistribution {
        let m = mean.len();
        PixelDistribution {
            jd0: DVector::from_row_slice(mean),
            sigma_material: DMatrix::zeros(m, m),
            sigma_total: DMatrix::from_row_slice(m, m, cov),
            flags: PixelFlags::default(),
        }
    }

    fn gauss_1d(mean: f64, var: f64) -> ObjectDistribution {
        ObjectDistribution::new(vec![pixel(&[mean], &[var])]).unwrap()
    }

    fn component(mean: f64, var: f64, weight: f64, label: ClassLabel) -> EnsembleComponent {
        EnsembleComponent {
            dist: gauss_1d(mean, var),
            weight,
            label,
        }
    }

    fn two_class(
        threat_means: &[f64],
        nonthreat_means: &[f64],
        var: f64,
    ) -> EnsembleSpec {
        let k = (threat_means.len() + nonthreat_means.len()) as f64;
        let mut comps = Vec::new();
        for &m in threat_means {
            comps.push(component(m, var, 1.0 / k, ClassLabel::Threat));
        }
        for &m in nonthreat_means {
            comps.push(component(m, var, 1.0 / k, ClassLabel::NonThreat));
        }
        EnsembleSpec::new(comps, None).unwrap()
    }

    // Test-local MC oracles for 1-d Gaussian mixtures.
    struct Mixture1d {
        means: Vec<f64>,
        vars: Vec<f64>,
        weights: Vec<f64>,
        labels: Vec<ClassLabel>,
    }

    impl Mixture1d {
        fn from_ens(ens: &EnsembleSpec) -> Self {
            let mut m = Mixture1d {
                means: vec![],
                vars: vec![],
                weights: vec![],
                labels: vec![],
            };
            for c in ens.components() {
                let p = &c.dist.pixels()[0];
                m.means.push(p.jd0[0]);
                m.vars.push(p.sigma_total[(0, 0)]);
                m.weights.push(c.weight);
                m.labels.push(c.label);
            }
            m
        }

        fn log_pdf_component(&self, i: usize, x: f64) -> f64 {
            let d = x - self.means[i];
            -0.5 * (d * d / self.vars[i])
                - 0.5 * (2.0 * std::f64::consts::PI * self.vars[i]).ln()
        }

        fn log_mix(&self, x: f64, subset: impl Fn(usize) -> bool, renorm: f64) -> f64 {
            let mut best = f64::NEG_INFINITY;
            let mut terms = Vec::new();
            for i in 0..self.means.len() {
                if subset(i) {
                    let t = (self.weights[i] / renorm).ln() + self.log_pdf_component(i, x);
                    best = best.max(t);
                    terms.push(t);
                }
            }
            best + terms.iter().map(|t| (t - best).exp()).sum::<f64>().ln()
        }

        /// Returns (I_S estimate, standard error), nats.
        fn mc_is(&self, n: usize, seed: u64) -> (f64, f64) {
            let mut rng = seeding::derive_rng(seed, 77, &[]);
            use rand::Rng;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                // Draw component by weight, then x.
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut comp = 0;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u <= acc {
                        comp = i;
                        break;
                    }
                    comp = i;
                }
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let x = self.means[comp] + self.vars[comp].sqrt() * z;
                let label = self.labels[comp];
                let p_class: f64 = self
                    .weights
                    .iter()
                    .zip(&self.labels)
                    .filter(|(_, l)| **l == label)
                    .map(|(w, _)| w)
                    .sum();
                let v = self.log_mix(x, |i| self.labels[i] == label, p_class)
                    - self.log_mix(x, |_| true, 1.0);
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let var = (sumsq / n as f64 - mean * mean).max(0.0);
            (mean, (var / n as f64).sqrt())
        }

        /// (Bayes error estimate, standard error) of the likelihood-ratio rule.
        fn mc_bayes_error(&self, n: usize, seed: u64) -> (f64, f64) {
            let mut rng = seeding::derive_rng(seed, 78, &[]);
            use rand::Rng;
            let mut errors = 0usize;
            for _ in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut comp = 0;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u <= acc {
                        comp = i;
                        break;
                    }
                    comp = i;
                }
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                let x = self.means[comp] + self.vars[comp].sqrt() * z;
                let joint = |label: ClassLabel| {
                    let mut best = f64::NEG_INFINITY;
                    let mut terms = Vec::new();
                    for i in 0..self.means.len() {
                        if self.labels[i] == label {
                            let t = self.weights[i].ln() + self.log_pdf_component(i, x);
                            best = best.max(t);
                            terms.push(t);
                        }
                    }
                    best + terms.iter().map(|t| (t - best).exp()).sum::<f64>().ln()
                };
                let decided = if joint(ClassLabel::Threat) > joint(ClassLabel::NonThreat) {
                    ClassLabel::Threat
                } else {
                    ClassLabel::NonThreat
                };
                if decided != self.labels[comp] {
                    errors += 1;
                }
            }
            let p = errors as f64 / n as f64;
            (p, (p * (1.0 - p) / n as f64).sqrt())
        }
    }

    #[test]
    fn ensemble_validation() {
        // Weights must sum to 1.
        let bad = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.6, ClassLabel::Threat),
                component(1.0, 1.0, 0.6, ClassLabel::NonThreat),
            ],
            None,
        );
        assert!(bad.is_err());
        // Both classes required.
        let one_class = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.5, ClassLabel::Threat),
                component(1.0, 1.0, 0.5, ClassLabel::Threat),
            ],
            None,
        );
        assert!(one_class.is_err());
        // Pairing must cross classes and cover everything.
        let same_class_pair = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.25, ClassLabel::Threat),
                component(1.0, 1.0, 0.25, ClassLabel::Threat),
                component(2.0, 1.0, 0.25, ClassLabel::NonThreat),
                component(3.0, 1.0, 0.25, ClassLabel::NonThreat),
            ],
            Some(vec![(0, 1), (2, 3)]),
        );
        assert!(same_class_pair.is_err());
        let incomplete = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.25, ClassLabel::Threat),
                component(1.0, 1.0, 0.25, ClassLabel::Threat),
                component(2.0, 1.0, 0.25, ClassLabel::NonThreat),
                component(3.0, 1.0, 0.25, ClassLabel::NonThreat),
            ],
            Some(vec![(0, 2)]),
        );
        assert!(incomplete.is_err());
        let ok = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.25, ClassLabel::Threat),
                component(1.0, 1.0, 0.25, ClassLabel::Threat),
                component(2.0, 1.0, 0.25, ClassLabel::NonThreat),
                component(3.0, 1.0, 0.25, ClassLabel::NonThreat),
            ],
            Some(vec![(0, 2), (1, 3)]),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn entropy_bound_degenerate_cases() {
        // Two identical components: the mixture is the component itself.
        let ens = EnsembleSpec::new(
            vec![
                component(1.0, 2.0, 0.5, ClassLabel::Threat),
                component(1.0, 2.0, 0.5, ClassLabel::NonThreat),
            ],
            None,
        )
        .unwrap();
        let h_comp = divergence::gaussian_entropy(&gauss_1d(1.0, 2.0)).unwrap();
        for kind in [DivergenceKind::Bhattacharyya, DivergenceKind::KullbackLeibler] {
            let h = entropy_bound(&ens, kind).unwrap().0;
            assert!((h - h_comp).abs() < 1e-12, "{kind:?}: {h} vs {h_comp}");
        }
    }

    #[test]
    fn entropy_bounds_bracket_mc_for_separated_mixture() {
        let ens = two_class(&[50.0], &[-50.0], 1.0);
        let h_comp = divergence::gaussian_entropy(&gauss_1d(50.0, 1.0)).unwrap();
        let want = h_comp + LN_2;
        let bd = entropy_bound(&ens, DivergenceKind::Bhattacharyya).unwrap().0;
        let kl = entropy_bound(&ens, DivergenceKind::KullbackLeibler).unwrap().0;
        assert!((bd - want).abs() < 1e-6, "BD {bd} vs {want}");
        assert!((kl - want).abs() < 1e-6, "KL {kl} vs {want}");
        assert!(bd <= kl);

        // MC entropy of the true mixture sits between the estimators (within
        // MC error: the bounds nearly coincide here).
        let mix = Mixture1d::from_ens(&ens);
        let mut rng = seeding::derive_rng(5, 79, &[]);
        use rand::Rng;
        let n = 1_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let comp = usize::from(rng.random::<f64>() < 0.5);
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let x = mix.means[comp] + z;
            let v = -mix.log_mix(x, |_| true, 1.0);
            sum += v;
            sumsq += v * v;
        }
        let est = sum / n as f64;
        let se = ((sumsq / n as f64 - est * est) / n as f64).sqrt();
        assert!(est >= bd - 4.0 * se, "MC {est} below BD bound {bd}");
        assert!(est <= kl + 4.0 * se, "MC {est} above KL bound {kl}");
    }

    #[test]
    fn main_bounds_identical_classes_collapse_to_zero() {
        let ens = two_class(&[1.0], &[1.0], 1.0);
        let (lo, hi) = is_bounds_main(&ens).unwrap();
        assert!(lo.0 <= 1e-12, "lower {}", lo.0);
        assert!(hi.0.abs() < 1e-12, "upper {}", hi.0);
        let combined = combined_is_bounds(&ens).unwrap();
        assert_eq!(combined.lower.0, 0.0);
        assert!(combined.upper.0.abs() < 1e-12);
    }

    #[test]
    fn main_bounds_bracket_mc_two_components() {
        let ens = two_class(&[2.0], &[0.0], 1.0);
        let (lo, hi) = is_bounds_main(&ens).unwrap();
        let (est, se) = Mixture1d::from_ens(&ens).mc_is(400_000, 3);
        assert!(
            lo.0 <= est + 3.0 * se && est - 3.0 * se <= hi.0,
            "MC {est}±{se} outside [{}, {}]",
            lo.0,
            hi.0
        );
    }

    #[test]
    fn main_bounds_bracket_mc_four_components_with_modest_gap() {
        let ens = two_class(&[6.0, 7.0], &[0.0, 1.0], 1.0);
        let (lo, hi) = is_bounds_main(&ens).unwrap();
        let (est, se) = Mixture1d::from_ens(&ens).mc_is(400_000, 4);
        assert!(
            lo.0 <= est + 3.0 * se && est - 3.0 * se <= hi.0,
            "MC {est}±{se} outside [{}, {}]",
            lo.0,
            hi.0
        );
        // Sanity cap: the pairwise-divergence entropy estimates keep the
        // bracket well under the trivial [0, H(C)] width even with strongly
        // overlapping same-class components.
        assert!(hi.0 - lo.0 < 0.5, "gap {}", hi.0 - lo.0);
    }

    #[test]
    fn paired_upper_bound_on_degenerate_pairs_is_nonnegative_and_small() {
        // Each pair has identical members: I_S = 0 and the paired bound
        // reduces to 0 for equal within-pair weights.
        let comps = vec![
            component(0.0, 1.0, 0.25, ClassLabel::Threat),
            component(0.0, 1.0, 0.25, ClassLabel::NonThreat),
            component(3.0, 1.0, 0.25, ClassLabel::Threat),
            component(3.0, 1.0, 0.25, ClassLabel::NonThreat),
        ];
        let ens = EnsembleSpec::new(comps, Some(vec![(0, 1), (2, 3)])).unwrap();
        let paired = is_upper_paired(&ens).unwrap().0;
        assert!(paired.abs() < 1e-10, "paired bound {paired}");
        let (est, se) = Mixture1d::from_ens(&ens).mc_is(200_000, 5);
        assert!(est <= paired + 3.0 * se);
    }

    #[test]
    fn paired_upper_bound_dominates_mc_on_separated_pairs() {
        let comps = vec![
            component(0.0, 1.0, 0.25, ClassLabel::Threat),
            component(1.0, 1.0, 0.25, ClassLabel::NonThreat),
            component(8.0, 1.0, 0.25, ClassLabel::Threat),
            component(9.5, 1.0, 0.25, ClassLabel::NonThreat),
        ];
        let ens = EnsembleSpec::new(comps, Some(vec![(0, 1), (2, 3)])).unwrap();
        let paired = is_upper_paired(&ens).unwrap().0;
        let (est, se) = Mixture1d::from_ens(&ens).mc_is(400_000, 6);
        assert!(est - 3.0 * se <= paired, "MC {est} exceeds paired {paired}");
    }

    #[test]
    fn paired_bound_requires_pairing() {
        let ens = two_class(&[0.0], &[2.0], 1.0);
        assert!(is_upper_paired(&ens).is_err());
    }

    #[test]
    fn class_bd_lower_closed_form_single_pair() {
        let ens = EnsembleSpec::new(
            vec![
                component(0.0, 1.0, 0.5, ClassLabel::Threat),
                component(2.0, 1.0, 0.5, ClassLabel::NonThreat),
            ],
            None,
        )
        .unwrap();
        // BD(N(0,1), N(2,1)) = 0.5, so the bound is ln2 − ln(1 + e^{−0.5}).
        let want = LN_2 - (1.0 + (-0.5f64).exp()).ln();
        let got = is_lower_class_bd(&ens).unwrap().0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");

        // Identical classes: bound ≤ 0 up to logdet roundoff; combined
        // clamps it to 0.
        let ident = two_class(&[1.0], &[1.0], 1.0);
        assert!(is_lower_class_bd(&ident).unwrap().0 <= 1e-12);

        // MC I_S dominates the lower bound.
        let (est, se) = Mixture1d::from_ens(&ens).mc_is(400_000, 7);
        assert!(got <= est + 3.0 * se);
    }

    #[test]
    fn combined_bounds_compose_the_four() {
        let comps = vec![
            component(0.0, 1.0, 0.25, ClassLabel::Threat),
            component(1.0, 1.0, 0.25, ClassLabel::NonThreat),
            component(5.0, 1.0, 0.25, ClassLabel::Threat),
            component(6.0, 1.0, 0.25, ClassLabel::NonThreat),
        ];
        let ens = EnsembleSpec::new(comps, Some(vec![(0, 1), (2, 3)])).unwrap();
        let combined = combined_is_bounds(&ens).unwrap();
        let (main_lo, main_hi) = is_bounds_main(&ens).unwrap();
        let class_lo = is_lower_class_bd(&ens).unwrap();
        let paired_hi = is_upper_paired(&ens).unwrap();
        let hc = ens.class_entropy().0;
        let want_lo = main_lo.0.max(class_lo.0).clamp(0.0, hc);
        let want_hi = main_hi.0.min(paired_hi.0).clamp(0.0, hc);
        assert!((combined.lower.0 - want_lo).abs() < 1e-15);
        assert!((combined.upper.0 - want_hi).abs() < 1e-15);
        assert!(combined.lower.0 <= combined.upper.0);
    }

    #[test]
    fn binary_entropy_reference_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_eq!(binary_entropy(0.5), 1.0);
        let h01 = binary_entropy(0.1);
        assert!((h01 - 0.4689955935892812).abs() < 1e-12);
        assert!((binary_entropy_inverse(h01).unwrap() - 0.1).abs() < 1e-9);
        assert!((binary_entropy_inverse(1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(binary_entropy_inverse(0.0).unwrap(), 0.0);
        assert!(binary_entropy_inverse(1.5).is_err());
        assert!(binary_entropy_inverse(-0.1).is_err());
    }

    #[test]
    fn inversion_round_trips() {
        for i in 1..50 {
            let x = 0.01 * i as f64 / 2.0; // up to 0.245
            let h = binary_entropy(x);
            let back = binary_entropy_inverse(h).unwrap();
            assert!((back - x).abs() < 1e-9, "x {x}: back {back}");
        }
        let p_min = 0.5;
        for i in 1..50 {
            let x = 0.5 * i as f64 / 50.0;
            let y = f_ub(x, p_min);
            let back = bisect_increasing(|v| f_ub(v, p_min), 0.0, p_min, y);
            assert!((back - x).abs() < 1e-9, "x {x}: back {back}");
        }
    }

    #[test]
    fn f_ub_endpoints_and_hu_bound() {
        // f_ub(P_min) = 2·P_min bits.
        for p in [0.5, 0.3, 0.2] {
            assert!((f_ub(p, p) - 2.0 * p).abs() < 1e-12);
        }
        // Equal priors, IS = 0: f_ub(0.5) = 1 bit, so pe_upper = 0.5.
        assert!((pe_upper_hu(0.0, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(pe_upper_hu(1.0, 0.5), 0.0);
        // Forward-evaluation self-check of the bisection.
        let deficit = 0.4689955935892812;
        let x = pe_upper_hu(1.0 - deficit, 0.5);
        assert!((f_ub(x, 0.5) - deficit).abs() < 1e-9);
        // f_ub is below h_b, so the Hu inverse dominates the Fano inverse.
        assert!(x >= pe_lower_fano(1.0 - deficit, 0.5));
    }

    #[test]
    fn fano_reference_values() {
        assert_eq!(pe_lower_fano(1.0, 0.5), 0.0);
        assert!((pe_lower_fano(0.0, 0.5) - 0.5).abs() < 1e-12);
        let is_bits = 1.0 - 0.4689955935892812;
        assert!((pe_lower_fano(is_bits, 0.5) - 0.1).abs() < 1e-9);
    }

    #[test]
    fn pe_bounds_identical_and_separated() {
        let ident = two_class(&[1.0], &[1.0], 1.0);
        let b = pe_bounds(&ident).unwrap();
        assert!((b.pe_lower - 0.5).abs() < 1e-9);
        assert!((b.pe_upper - 0.5).abs() < 1e-9);

        let separated = two_class(&[8.0], &[-8.0], 1.0);
        let b = pe_bounds(&separated).unwrap();
        assert!(b.pe_lower <= b.pe_upper);
        assert!(b.pe_upper < 0.01, "pe_upper {}", b.pe_upper);
    }

    #[test]
    fn pe_bounds_bracket_mc_bayes_error() {
        let ens = two_class(&[1.5], &[0.0], 1.0);
        let b = pe_bounds(&ens).unwrap();
        let (est, se) = Mixture1d::from_ens(&ens).mc_bayes_error(400_000, 8);
        assert!(
            b.pe_lower - 3.0 * se <= est && est <= b.pe_upper + 3.0 * se,
            "MC Bayes {est}±{se} outside [{}, {}]",
            b.pe_lower,
            b.pe_upper
        );
    }

    #[test]
    fn informative_pixel_does_not_decrease_lower_bound() {
        let base = |extra: Option<(f64, f64)>| {
            let mut threat = vec![pixel(&[0.0], &[1.0])];
            let mut nonthreat = vec![pixel(&[1.5], &[1.0])];
            if let Some((a, b)) = extra {
                threat.push(pixel(&[a], &[1.0]));
                nonthreat.push(pixel(&[b], &[1.0]));
            }
            EnsembleSpec::new(
                vec![
                    EnsembleComponent {
                        dist: ObjectDistribution::new(threat).unwrap(),
                        weight: 0.5,
                        label: ClassLabel::Threat,
                    },
                    EnsembleComponent {
                        dist: ObjectDistribution::new(nonthreat).unwrap(),
                        weight: 0.5,
                        label: ClassLabel::NonThreat,
                    },
                ],
                None,
            )
            .unwrap()
        };
        let without = combined_is_bounds(&base(None)).unwrap();
        let with = combined_is_bounds(&base(Some((0.0, 2.0)))).unwrap();
        assert!(
            with.lower.0 >= without.lower.0 - 1e-12,
            "{} < {}",
            with.lower.0,
            without.lower.0
        );
    }

    #[test]
    fn mc_helpers_are_exercised_by_matrix_sampler() {
        // Guard: the shared sampler used by other modules agrees with the
        // test-local 1-d sampler on a simple case.
        let sigma = DMatrix::from_element(1, 1, 2.0);
        let factor = mc::psd_factor(&sigma);
        let mean = DVector::from_element(1, 3.0);
        let mut rng = seeding::derive_rng(9, 80, &[]);
        let mut acc = mc::MomentAccumulator::new(1);
        for _ in 0..100_000 {
            acc.push(&mc::sample_mvn(&mean, &factor, &mut rng));
        }
        assert!((acc.mean()[0] - 3.0).abs() < 0.02);
        assert!((acc.covariance()[(0, 0)] - 2.0).abs() < 0.05);
    }
}
