//! Scenario designs over the uncertainty space.
//!
//! A scenario fixes one spread-rule variant, one forecast member and one
//! value per uncertain parameter, and carries a probability weight and a
//! simulation seed. Designs are built by full factorial enumeration, Latin
//! hypercube sampling (the default) or plain Monte Carlo.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::cost::CostVector;
use crate::digest::json_digest;
use crate::hazard::SpreadRuleVariant;

pub const DEFAULT_DESIGN_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    Fixed { value: f64 },
}

impl Distribution {
    pub fn is_fixed(&self) -> bool {
        matches!(self, Distribution::Fixed { .. })
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: f64| v.is_finite();
        match *self {
            Distribution::Uniform { lo, hi } if finite(lo) && finite(hi) && lo <= hi => Ok(()),
            Distribution::Triangular { lo, mode, hi } if [lo, mode, hi].into_iter().all(finite) && lo <= mode && mode <= hi => {
                Ok(())
            }
            Distribution::Fixed { value } if value.is_finite() => Ok(()),
            d => Err(format!("invalid distribution {d:?}")),
        }
    }

    /// Inverse CDF at `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => lo + u * (hi - lo),
            Distribution::Triangular { lo, mode, hi } => {
                let width = hi - lo;
                if width == 0.0 {
                    return lo;
                }
                let split = (mode - lo) / width;
                if u < split {
                    lo + (u * width * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * width * (hi - mode)).sqrt()
                }
            }
            Distribution::Fixed { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMember {
    pub id: String,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpace {
    pub variants: Vec<SpreadRuleVariant>,
    pub members: Vec<ForecastMember>,
    /// Parameter name → distribution; iteration order is the key order.
    #[serde(default)]
    pub parameters: BTreeMap<String, Distribution>,
}

impl UncertaintySpace {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.variants.is_empty() {
            return Err(EnsembleError::InvalidSpace("at least one model variant is required".into()));
        }
        if self.members.is_empty() {
            return Err(EnsembleError::InvalidSpace("at least one forecast member is required".into()));
        }
        for m in &self.members {
            if !(m.prior > 0.0 && m.prior.is_finite()) {
                return Err(EnsembleError::InvalidSpace(format!("member {} prior {} must be positive", m.id, m.prior)));
            }
        }
        for (i, m) in self.members.iter().enumerate() {
            if self.members[..i].iter().any(|o| o.id == m.id) {
                return Err(EnsembleError::InvalidSpace(format!("duplicate member id {}", m.id)));
            }
        }
        for (name, d) in &self.parameters {
            d.validate().map_err(|e| EnsembleError::InvalidSpace(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    fn continuous(&self) -> impl Iterator<Item = (&String, &Distribution)> {
        self.parameters.iter().filter(|(_, d)| !d.is_fixed())
    }

    fn fixed(&self) -> impl Iterator<Item = (&String, f64)> {
        self.parameters.iter().filter_map(|(k, d)| match d {
            Distribution::Fixed { value } => Some((k, *value)),
            _ => None,
        })
    }

    /// `(variant, member)` combinations with their normalized weights.
    fn combinations(&self) -> Vec<(SpreadRuleVariant, usize, f64)> {
        let total: f64 = self.members.iter().map(|m| m.prior).sum();
        let nv = self.variants.len() as f64;
        self.variants
            .iter()
            .flat_map(|&v| self.members.iter().enumerate().map(move |(i, m)| (v, i, m.prior / total / nv)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioId(pub u32);

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub variant: SpreadRuleVariant,
    pub member: String,
    pub parameters: BTreeMap<String, f64>,
    pub weight: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SamplingMethod {
    FullFactorial,
    Lhs,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDesign {
    pub method: SamplingMethod,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl EnsembleDesign {
    pub fn design_id(&self) -> String {
        json_digest(self)[..16].to_string()
    }

    pub fn get(&self, id: ScenarioId) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn total_weight(&self) -> f64 {
        self.scenarios.iter().map(|s| s.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Replace the weights of every scenario, renormalizing to one.
    /// Used when new information changes the forecast-member priors.
    pub fn reweighted(&self, weight: impl Fn(&Scenario) -> f64) -> Result<Self, EnsembleError> {
        let raw: Vec<f64> = self.scenarios.iter().map(&weight).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) || raw.iter().any(|w| *w < 0.0) {
            return Err(EnsembleError::InvalidSpace("reweighting must leave positive total weight".into()));
        }
        let scenarios = self
            .scenarios
            .iter()
            .zip(raw)
            .filter(|(_, w)| *w > 0.0)
            .map(|(s, w)| Scenario { weight: w / total, ..s.clone() })
            .collect();
        Ok(Self { scenarios, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnsembleError {
    #[error("invalid uncertainty space: {0}")]
    InvalidSpace(String),
    #[error("design of {description} = {size} scenarios exceeds the cap of {cap}")]
    DesignTooLarge { description: String, size: u128, cap: usize },
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("no scenario of the design is covered")]
    EmptyCoverage,
    #[error("scenario {0} is not part of the design")]
    UnknownScenario(ScenarioId),
    #[error("cost vectors have inconsistent lengths")]
    CriteriaMismatch,
}

fn scenario_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..n).map(|_| rng.next_u64()).collect()
}

fn normalize(scenarios: &mut [Scenario]) {
    let total: f64 = scenarios.iter().map(|s| s.weight).sum();
    for s in scenarios {
        s.weight /= total;
    }
}

/// Cartesian product of variants × members × parameter levels.
///
/// Every non-fixed parameter is discretized at the quantiles
/// `(i + 0.5) / levels`; fixed parameters contribute one level. Weights are
/// member prior × uniform level mass, normalized to one.
pub fn enumerate_factorial(
    space: &UncertaintySpace,
    levels: usize,
    seed: u64,
    cap: usize,
) -> Result<EnsembleDesign, EnsembleError> {
    space.validate()?;
    if levels == 0 {
        return Err(EnsembleError::NonPositive("levels"));
    }
    let dims: Vec<(&String, &Distribution)> = space.continuous().collect();
    let size = (space.variants.len() as u128)
        .saturating_mul(space.members.len() as u128)
        .saturating_mul((levels as u128).saturating_pow(dims.len() as u32));
    if size > cap as u128 {
        return Err(EnsembleError::DesignTooLarge {
            description: format!(
                "{} variants × {} members × {}^{} levels",
                space.variants.len(),
                space.members.len(),
                levels,
                dims.len()
            ),
            size,
            cap,
        });
    }
    let size = size as usize;
    let seeds = scenario_seeds(seed, size);
    let level_mass = (1.0 / levels as f64).powi(dims.len() as i32);
    let fixed: Vec<(&String, f64)> = space.fixed().collect();

    let mut scenarios = Vec::with_capacity(size);
    for (variant, member, combo_weight) in space.combinations() {
        let mut odometer = vec![0usize; dims.len()];
        loop {
            let mut parameters: BTreeMap<String, f64> = fixed.iter().map(|(k, v)| ((*k).clone(), *v)).collect();
            for ((name, dist), &level) in dims.iter().zip(&odometer) {
                parameters.insert((*name).clone(), dist.quantile((level as f64 + 0.5) / levels as f64));
            }
            let i = scenarios.len();
            scenarios.push(Scenario {
                id: ScenarioId(i as u32),
                variant,
                member: space.members[member].id.clone(),
                parameters,
                weight: combo_weight * level_mass,
                seed: seeds[i],
            });
            if !advance(&mut odometer, levels) {
                break;
            }
        }
    }
    normalize(&mut scenarios);
    Ok(EnsembleDesign { method: SamplingMethod::FullFactorial, seed, scenarios })
}

/// Step a mixed-radix counter, last digit fastest. Returns false on wrap.
fn advance(odometer: &mut [usize], levels: usize) -> bool {
    for digit in odometer.iter_mut().rev() {
        *digit += 1;
        if *digit < levels {
            return true;
        }
        *digit = 0;
    }
    false
}

/// Smooth weighted round-robin: deterministic sequence of indices whose
/// frequencies track `weights`.
fn weighted_round_robin(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut current = vec![0.0; weights.len()];
    (0..n)
        .map(|_| {
            for (c, w) in current.iter_mut().zip(weights) {
                *c += w;
            }
            let mut best = 0;
            for j in 1..current.len() {
                if current[j] > current[best] {
                    best = j;
                }
            }
            current[best] -= total;
            best
        })
        .collect()
}

fn assemble(
    space: &UncertaintySpace,
    n: usize,
    seed: u64,
    method: SamplingMethod,
    unit_samples: Vec<Vec<f64>>,
) -> EnsembleDesign {
    let combos = space.combinations();
    let weights: Vec<f64> = combos.iter().map(|c| c.2).collect();
    let picks = weighted_round_robin(&weights, n);
    let seeds = scenario_seeds(seed, n);
    let dims: Vec<(&String, &Distribution)> = space.continuous().collect();
    let fixed: Vec<(&String, f64)> = space.fixed().collect();
    let mut scenarios: Vec<Scenario> = (0..n)
        .map(|i| {
            let (variant, member, _) = combos[picks[i]];
            let mut parameters: BTreeMap<String, f64> = fixed.iter().map(|(k, v)| ((*k).clone(), *v)).collect();
            for ((name, dist), us) in dims.iter().zip(&unit_samples) {
                parameters.insert((*name).clone(), dist.quantile(us[i]));
            }
            Scenario {
                id: ScenarioId(i as u32),
                variant,
                member: space.members[member].id.clone(),
                parameters,
                weight: 1.0 / n as f64,
                seed: seeds[i],
            }
        })
        .collect();
    normalize(&mut scenarios);
    EnsembleDesign { method, seed, scenarios }
}

/// Latin hypercube design of `n` equally weighted scenarios.
///
/// For every non-fixed parameter, each stratum `[k/n, (k+1)/n)` of the unit
/// interval receives exactly one sample, mapped through the inverse CDF.
/// Variant/member combinations are assigned by weighted round-robin.
pub fn sample_lhs(space: &UncertaintySpace, n: usize, seed: u64) -> Result<EnsembleDesign, EnsembleError> {
    space.validate()?;
    if n == 0 {
        return Err(EnsembleError::NonPositive("n"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = space
        .continuous()
        .map(|_| {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(&mut rng);
            strata
                .into_iter()
                .map(|k| {
                    let upper = ((k + 1) as f64 / n as f64).next_down();
                    ((k as f64 + rng.random::<f64>()) / n as f64).min(upper)
                })
                .collect()
        })
        .collect();
    Ok(assemble(space, n, seed, SamplingMethod::Lhs, samples))
}

/// Independent uniform draws per parameter; combinations as in [`sample_lhs`].
pub fn sample_monte_carlo(space: &UncertaintySpace, n: usize, seed: u64) -> Result<EnsembleDesign, EnsembleError> {
    space.validate()?;
    if n == 0 {
        return Err(EnsembleError::NonPositive("n"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = space.continuous().map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    Ok(assemble(space, n, seed, SamplingMethod::MonteCarlo, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub mean: CostVector,
    /// Share of the design's total weight carried by the covered scenarios.
    pub covered_fraction: f64,
}

/// Weighted mean over the covered scenarios, with weights renormalized to
/// the covered subset. Accumulation follows design order.
pub fn expectation(values: &BTreeMap<ScenarioId, CostVector>, design: &EnsembleDesign) -> Result<Expectation, EnsembleError> {
    if let Some(id) = values.keys().find(|id| design.get(**id).is_none()) {
        return Err(EnsembleError::UnknownScenario(*id));
    }
    let mut covered = 0.0;
    let mut acc: Option<Vec<f64>> = None;
    for s in &design.scenarios {
        let Some(v) = values.get(&s.id) else { continue };
        let acc = acc.get_or_insert_with(|| vec![0.0; v.len()]);
        if acc.len() != v.len() {
            return Err(EnsembleError::CriteriaMismatch);
        }
        for (a, x) in acc.iter_mut().zip(v.values()) {
            *a += s.weight * x;
        }
        covered += s.weight;
    }
    let acc = acc.ok_or(EnsembleError::EmptyCoverage)?;
    Ok(Expectation {
        mean: CostVector::new(acc.into_iter().map(|a| a / covered).collect()),
        covered_fraction: covered / design.total_weight(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(nv: usize, nm: usize, params: &[(&str, Distribution)]) -> UncertaintySpace {
        UncertaintySpace {
            variants: SpreadRuleVariant::ALL[..nv].to_vec(),
            members: (0..nm).map(|i| ForecastMember { id: format!("m{i}"), prior: 1.0 }).collect(),
            parameters: params.iter().map(|(k, d)| (k.to_string(), *d)).collect(),
        }
    }

    #[test]
    fn single_point_factorial() {
        let s = space(1, 1, &[("p0", Distribution::Fixed { value: 0.3 })]);
        let d = enumerate_factorial(&s, 5, 0, DEFAULT_DESIGN_CAP).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.scenarios[0].weight, 1.0);
        assert_eq!(d.scenarios[0].parameters["p0"], 0.3);
    }

    #[test]
    fn factorial_product_count_and_quantiles() {
        let s = space(2, 3, &[("p0", Distribution::Uniform { lo: 0.0, hi: 1.0 })]);
        let d = enumerate_factorial(&s, 2, 0, DEFAULT_DESIGN_CAP).unwrap();
        assert_eq!(d.len(), 12);
        let mut vals: Vec<f64> = d.scenarios.iter().map(|s| s.parameters["p0"]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals, vec![0.25, 0.75]);
        assert!((d.total_weight() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn factorial_weights_follow_priors() {
        let mut s = space(1, 2, &[]);
        s.members[0].prior = 3.0;
        let d = enumerate_factorial(&s, 1, 0, DEFAULT_DESIGN_CAP).unwrap();
        assert!((d.scenarios[0].weight - 0.75).abs() < 1e-15);
        assert!((d.scenarios[1].weight - 0.25).abs() < 1e-15);
    }

    #[test]
    fn factorial_cap_names_product() {
        let s = space(
            2,
            3,
            &[("a", Distribution::Uniform { lo: 0.0, hi: 1.0 }), ("b", Distribution::Uniform { lo: 0.0, hi: 1.0 })],
        );
        let err = enumerate_factorial(&s, 4, 0, 50).unwrap_err();
        assert_eq!(err.to_string(), "design of 2 variants × 3 members × 4^2 levels = 96 scenarios exceeds the cap of 50");
    }

    #[test]
    fn lhs_single_sample() {
        let s = space(1, 1, &[("x", Distribution::Uniform { lo: 0.0, hi: 1.0 })]);
        let d = sample_lhs(&s, 1, 3).unwrap();
        let x = d.scenarios[0].parameters["x"];
        assert!((0.0..1.0).contains(&x));
        assert_eq!(d.scenarios[0].weight, 1.0);
    }

    #[test]
    fn lhs_four_strata() {
        let s = space(1, 1, &[("x", Distribution::Uniform { lo: 0.0, hi: 8.0 })]);
        let d = sample_lhs(&s, 4, 11).unwrap();
        let mut counts = [0; 4];
        for sc in &d.scenarios {
            let x = sc.parameters["x"];
            counts[(x / 2.0).floor() as usize] += 1;
        }
        assert_eq!(counts, [1, 1, 1, 1]);
    }

    #[test]
    fn lhs_is_deterministic() {
        let s = space(3, 2, &[("x", Distribution::Triangular { lo: 0.0, mode: 0.2, hi: 1.0 })]);
        assert_eq!(sample_lhs(&s, 16, 5).unwrap(), sample_lhs(&s, 16, 5).unwrap());
        assert_ne!(sample_lhs(&s, 16, 5).unwrap(), sample_lhs(&s, 16, 6).unwrap());
    }

    #[test]
    fn round_robin_covers_all_combinations() {
        let s = space(2, 2, &[]);
        let d = sample_lhs(&s, 4, 0).unwrap();
        let combos: std::collections::BTreeSet<_> =
            d.scenarios.iter().map(|s| (s.variant, s.member.clone())).collect();
        assert_eq!(combos.len(), 4);
    }

    #[test]
    fn triangular_quantile_endpoints() {
        let d = Distribution::Triangular { lo: 1.0, mode: 2.0, hi: 4.0 };
        assert_eq!(d.quantile(0.0), 1.0);
        assert_eq!(d.quantile(1.0), 4.0);
        assert!((d.quantile(1.0 / 3.0) - 2.0).abs() < 1e-12);
    }

    fn fixture4() -> EnsembleDesign {
        let s = space(1, 1, &[("x", Distribution::Uniform { lo: 0.0, hi: 1.0 })]);
        sample_lhs(&s, 4, 0).unwrap()
    }

    #[test]
    fn expectation_single_and_pair() {
        let d = fixture4();
        let one = BTreeMap::from([(ScenarioId(2), CostVector::new(vec![3.0, 4.0]))]);
        let e = expectation(&one, &d).unwrap();
        assert_eq!(e.mean.values(), &[3.0, 4.0]);

        let s = space(1, 2, &[]);
        let d2 = enumerate_factorial(&s, 1, 0, DEFAULT_DESIGN_CAP).unwrap();
        let two = BTreeMap::from([
            (ScenarioId(0), CostVector::new(vec![2.0, 0.0])),
            (ScenarioId(1), CostVector::new(vec![0.0, 2.0])),
        ]);
        let e = expectation(&two, &d2).unwrap();
        assert_eq!(e.mean.values(), &[1.0, 1.0]);
        assert_eq!(e.covered_fraction, 1.0);
    }

    #[test]
    fn expectation_partial_coverage_renormalizes() {
        // Four scenarios of weight 0.25; only one covered.
        let d = fixture4();
        let v = BTreeMap::from([(ScenarioId(1), CostVector::new(vec![8.0]))]);
        let e = expectation(&v, &d).unwrap();
        assert_eq!(e.mean.values(), &[8.0]);
        assert_eq!(e.covered_fraction, 0.25);
        assert!(matches!(expectation(&BTreeMap::new(), &d), Err(EnsembleError::EmptyCoverage)));
        let bad = BTreeMap::from([(ScenarioId(9), CostVector::new(vec![1.0]))]);
        assert!(matches!(expectation(&bad, &d), Err(EnsembleError::UnknownScenario(_))));
    }

    #[test]
    fn design_round_trips_through_json() {
        let d = fixture4();
        let text = serde_json::to_string(&d).unwrap();
        let back: EnsembleDesign = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.design_id(), d.design_id());
    }
}
