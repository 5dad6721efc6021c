//! Budgeted scenario selection over a partitioned suite.
//!
//! The selection objective rewards covering high-relevance regions, packing
//! risk weight, and exercising combinations of pressures, while penalizing
//! near-duplicate picks:
//!
//!   J(Q) = alpha * coverage + beta * risk + eta * composition
//!        - gamma * redundancy
//!
//! With gamma = 0 the objective is monotone submodular, so the greedy
//! selector carries the usual (1 - 1/e) approximation guarantee against the
//! exhaustive optimum; tests enforce that bound against a brute-force
//! oracle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MeasurementVector, MEASUREMENT_DIMS};
use crate::scenario::{Category, EnvironmentalStress, Region, Scenario, SocialSensitivity, Suite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Selection size; `None` means the whole manifold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            alpha: 1.0,
            beta: 1.0,
            eta: 0.5,
            gamma: 0.5,
            budget: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("gamma", self.gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(
                    None,
                    format!("sampler weight {name} must be finite and nonnegative, got {v}"),
                ));
            }
        }
        if self.budget == Some(0) {
            return Err(Error::validation(None, "sampler budget must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub coverage: f64,
    pub risk: f64,
    pub composition: f64,
    pub redundancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Scenario ids in pick order.
    pub scenario_ids: Vec<String>,
    pub objective: f64,
    pub terms: ObjectiveTerms,
}

/// Pressure facets a scenario can combine: environmental stress, social
/// sensitivity, adversarial construction.
const PRESSURE_ENV: u8 = 1;
const PRESSURE_SOCIAL: u8 = 2;
const PRESSURE_ADVERSARIAL: u8 = 4;

fn pressure_mask(s: &Scenario) -> u8 {
    let mut mask = 0;
    if s.axes.environmental_stress != EnvironmentalStress::None {
        mask |= PRESSURE_ENV;
    }
    if s.axes.social_sensitivity != SocialSensitivity::None {
        mask |= PRESSURE_SOCIAL;
    }
    if s.category == Category::Adversarial {
        mask |= PRESSURE_ADVERSARIAL;
    }
    mask
}

fn pressure_pairs(mask: u8) -> BTreeSet<(u8, u8)> {
    let flags = [PRESSURE_ENV, PRESSURE_SOCIAL, PRESSURE_ADVERSARIAL];
    let mut pairs = BTreeSet::new();
    for (i, a) in flags.iter().enumerate() {
        for b in &flags[i + 1..] {
            if mask & a != 0 && mask & b != 0 {
                pairs.insert((*a, *b));
            }
        }
    }
    pairs
}

/// Fraction of the six scenario axes on which two scenarios agree.
fn axis_agreement(a: &Scenario, b: &Scenario) -> f64 {
    let mut same = 0u32;
    if a.axes.task_family == b.axes.task_family {
        same += 1;
    }
    if a.axes.interface_type == b.axes.interface_type {
        same += 1;
    }
    if a.axes.interaction_horizon == b.axes.interaction_horizon {
        same += 1;
    }
    if a.axes.environmental_stress == b.axes.environmental_stress {
        same += 1;
    }
    if a.axes.social_sensitivity == b.axes.social_sensitivity {
        same += 1;
    }
    if a.axes.consequence_severity == b.axes.consequence_severity {
        same += 1;
    }
    f64::from(same) / 6.0
}

/// A suite joined with its region partition, ready for selection.
pub struct Manifold<'a> {
    scenarios: Vec<&'a Scenario>,
    regions: &'a [Region],
    region_of: BTreeMap<String, usize>,
    total_relevance: f64,
    manifold_pairs: BTreeSet<(u8, u8)>,
}

impl<'a> Manifold<'a> {
    pub fn new(suite: &'a Suite, regions: &'a [Region]) -> Result<Manifold<'a>> {
        let mut region_of = BTreeMap::new();
        for (idx, region) in regions.iter().enumerate() {
            for id in &region.scenario_ids {
                if suite.scenario(id).is_none() {
                    return Err(Error::validation(
                        Some(id),
                        "region references a scenario absent from the suite",
                    ));
                }
                if region_of.insert(id.clone(), idx).is_some() {
                    return Err(Error::validation(
                        Some(id),
                        "scenario appears in more than one region",
                    ));
                }
            }
        }
        let mut scenarios = Vec::new();
        for s in &suite.scenarios {
            if !region_of.contains_key(&s.id) {
                return Err(Error::validation(
                    Some(&s.id),
                    "scenario is not covered by any region",
                ));
            }
            scenarios.push(s);
        }
        let total_relevance: f64 = regions.iter().map(|r| r.deployment_relevance).sum();
        let mut manifold_pairs = BTreeSet::new();
        for s in &scenarios {
            manifold_pairs.extend(pressure_pairs(pressure_mask(s)));
        }
        Ok(Manifold {
            scenarios,
            regions,
            region_of,
            total_relevance,
            manifold_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenario_ids(&self) -> Vec<String> {
        self.scenarios.iter().map(|s| s.id.clone()).collect()
    }

    fn effective_budget(&self, config: &SamplerConfig) -> usize {
        config.budget.unwrap_or(self.len()).min(self.len())
    }

    fn scenario(&self, id: &str) -> Result<&'a Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .copied()
            .ok_or_else(|| Error::validation(Some(id), "scenario not in manifold"))
    }

    pub fn terms(&self, selected: &BTreeSet<String>, config: &SamplerConfig) -> Result<ObjectiveTerms> {
        if selected.is_empty() {
            return Ok(ObjectiveTerms {
                coverage: 0.0,
                risk: 0.0,
                composition: 0.0,
                redundancy: 0.0,
            });
        }
        let budget = self.effective_budget(config).max(1);
        let mut picked: Vec<&Scenario> = Vec::new();
        for id in selected {
            picked.push(self.scenario(id)?);
        }

        let hit_regions: BTreeSet<usize> = picked
            .iter()
            .map(|s| self.region_of[&s.id])
            .collect();
        let hit_mass: f64 = hit_regions
            .iter()
            .map(|&i| self.regions[i].deployment_relevance)
            .sum();
        let coverage = if self.total_relevance > 0.0 {
            hit_mass / self.total_relevance
        } else {
            0.0
        };

        let risk_sum: f64 = picked.iter().map(|s| f64::from(s.risk_weight)).sum();
        let risk = risk_sum / (budget as f64 * 5.0);

        let composition = if self.manifold_pairs.is_empty() {
            // Nothing in this manifold combines pressures; any nonempty
            // selection trivially saturates the term.
            1.0
        } else {
            let mut covered: BTreeSet<(u8, u8)> = BTreeSet::new();
            for s in &picked {
                covered.extend(pressure_pairs(pressure_mask(s)));
            }
            covered.len() as f64 / self.manifold_pairs.len() as f64
        };

        let redundancy = if picked.len() <= 1 {
            0.0
        } else {
            let mut total = 0.0;
            let mut pairs = 0u32;
            for i in 0..picked.len() {
                for j in i + 1..picked.len() {
                    total += axis_agreement(picked[i], picked[j]);
                    pairs += 1;
                }
            }
            total / f64::from(pairs)
        };

        Ok(ObjectiveTerms {
            coverage,
            risk,
            composition,
            redundancy,
        })
    }

    pub fn objective(&self, selected: &BTreeSet<String>, config: &SamplerConfig) -> Result<f64> {
        let t = self.terms(selected, config)?;
        Ok(config.alpha * t.coverage + config.beta * t.risk + config.eta * t.composition
            - config.gamma * t.redundancy)
    }

    /// Greedy selection: grow the set one scenario at a time, always taking
    /// the candidate with the best resulting objective, breaking ties toward
    /// the lexicographically smallest id. Fills the budget even past the
    /// point of diminishing returns so selection size is predictable.
    pub fn select_greedy(&self, config: &SamplerConfig) -> Result<Selection> {
        config.validate()?;
        let budget = self.effective_budget(config);
        let mut selected: BTreeSet<String> = BTreeSet::new();
        let mut order: Vec<String> = Vec::new();
        let mut candidates: Vec<String> = self.scenario_ids();
        candidates.sort();

        while order.len() < budget {
            let mut best: Option<(f64, &str)> = None;
            for id in &candidates {
                if selected.contains(id) {
                    continue;
                }
                let mut trial = selected.clone();
                trial.insert(id.clone());
                let value = self.objective(&trial, config)?;
                let better = match best {
                    None => true,
                    Some((best_value, _)) => value > best_value,
                };
                if better {
                    best = Some((value, id));
                }
            }
            let (_, id) = best.expect("budget does not exceed manifold size");
            let id = id.to_string();
            selected.insert(id.clone());
            order.push(id);
        }

        let terms = self.terms(&selected, config)?;
        let objective = self.objective(&selected, config)?;
        Ok(Selection {
            scenario_ids: order,
            objective,
            terms,
        })
    }

    /// Exhaustive optimum over all subsets within the budget. Exponential;
    /// guarded to small manifolds. This is the oracle greedy is tested
    /// against.
    pub fn brute_force_best(&self, config: &SamplerConfig) -> Result<(f64, Vec<String>)> {
        config.validate()?;
        let n = self.len();
        assert!(n <= 20, "brute force is for oracle-sized manifolds");
        let budget = self.effective_budget(config);
        let mut ids = self.scenario_ids();
        ids.sort();
        let mut best_value = f64::NEG_INFINITY;
        let mut best_set: Vec<String> = Vec::new();
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize > budget {
                continue;
            }
            let subset: BTreeSet<String> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, id)| id.clone())
                .collect();
            let value = self.objective(&subset, config)?;
            if value > best_value {
                best_value = value;
                best_set = subset.into_iter().collect();
            }
        }
        Ok((best_value, best_set))
    }
}

// === Weighted estimation ===================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    /// Weight by the deployment relevance of the scenario's region.
    DeploymentProportional,
    /// Relevance times the scenario's risk weight.
    RiskUpweighted,
}

impl WeightingScheme {
    pub fn label(&self) -> &'static str {
        match self {
            WeightingScheme::DeploymentProportional => "deployment_proportional",
            WeightingScheme::RiskUpweighted => "risk_upweighted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScenario {
    pub scenario_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSet {
    pub scheme: WeightingScheme,
    pub entries: Vec<WeightedScenario>,
}

pub fn weighted_set(
    manifold: &Manifold<'_>,
    selected: &[String],
    scheme: WeightingScheme,
) -> Result<WeightedSet> {
    let mut entries = Vec::new();
    for id in selected {
        let scenario = manifold.scenario(id)?;
        let region = &manifold.regions[manifold.region_of[id]];
        let weight = match scheme {
            WeightingScheme::DeploymentProportional => region.deployment_relevance,
            WeightingScheme::RiskUpweighted => {
                region.deployment_relevance * f64::from(scenario.risk_weight)
            }
        };
        entries.push(WeightedScenario {
            scenario_id: id.clone(),
            weight,
        });
    }
    Ok(WeightedSet { scheme, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustProfile {
    pub scheme: WeightingScheme,
    pub total_weight: f64,
    /// Weighted mean per measurement dimension, keyed by dimension name.
    pub dims: BTreeMap<String, f64>,
}

/// Weighted mean of measurement vectors over a selection. Every selected
/// scenario must have a measurement; a hole is an error, not a zero.
pub fn estimate_profile(
    set: &WeightedSet,
    measurements: &BTreeMap<String, MeasurementVector>,
) -> Result<TrustProfile> {
    if set.entries.is_empty() {
        return Err(Error::validation(None, "cannot estimate from an empty selection"));
    }
    let total_weight: f64 = set.entries.iter().map(|e| e.weight).sum();
    if !total_weight.is_finite() || total_weight <= 0.0 {
        return Err(Error::validation(
            None,
            format!("selection weights must sum to a positive finite value, got {total_weight}"),
        ));
    }
    let mut dims = BTreeMap::new();
    for dim in MEASUREMENT_DIMS {
        let mut acc = 0.0f64;
        for entry in &set.entries {
            let m = measurements
                .get(&entry.scenario_id)
                .ok_or_else(|| Error::MissingMeasurement(entry.scenario_id.clone()))?;
            acc += entry.weight * m.dim(dim).expect("known dimension").to_f64();
        }
        dims.insert(dim.to_string(), acc / total_weight);
    }
    Ok(TrustProfile {
        scheme: set.scheme,
        total_weight,
        dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Rational;
    use crate::scenario::{AxisBins, AxisName, Category, Scenario, ScenarioAxes, Suite, SUITE_SCHEMA_VERSION};

    fn mini_scenario(
        id: &str,
        category: Category,
        family: &str,
        stress: EnvironmentalStress,
        social: SocialSensitivity,
        severity: u8,
    ) -> Scenario {
        Scenario {
            id: id.to_string(),
            category,
            axes: ScenarioAxes {
                task_family: family.to_string(),
                interface_type: "tool_api".to_string(),
                interaction_horizon: 4,
                environmental_stress: stress,
                social_sensitivity: social,
                consequence_severity: severity,
            },
            risk_weight: severity,
            initial_user_message: "do the task".to_string(),
            world_fixture: "office".to_string(),
            success_criteria: Vec::new(),
            forbidden_actions: vec![crate::scenario::ActionPredicate {
                tool: crate::scenario::ToolName::FileWrite,
                matcher: crate::scenario::ArgumentMatcher::PathPrefix {
                    prefix: "/protected/".to_string(),
                },
            }],
            target_failure_types: vec![crate::scenario::FailureClass::UA],
            injection_payloads: None,
            stressor_schedule: None,
            social_harm_predicates: None,
        }
    }

    fn mini_suite(scenarios: Vec<Scenario>) -> Suite {
        Suite {
            schema_version: SUITE_SCHEMA_VERSION,
            suite_id: "mini".to_string(),
            scenarios,
        }
    }

    fn partition_by_category(suite: &Suite) -> Vec<Region> {
        let bins = AxisBins::keeping(&[AxisName::Category]);
        crate::scenario::partition(&suite.scenarios, &bins, None).unwrap()
    }

    #[test]
    fn empty_selection_scores_zero_on_every_term() {
        let suite = mini_suite(vec![mini_scenario(
            "a",
            Category::Benign,
            "fam",
            EnvironmentalStress::None,
            SocialSensitivity::None,
            2,
        )]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let terms = manifold.terms(&BTreeSet::new(), &SamplerConfig::default()).unwrap();
        assert_eq!(terms.coverage, 0.0);
        assert_eq!(terms.risk, 0.0);
        assert_eq!(terms.composition, 0.0);
        assert_eq!(terms.redundancy, 0.0);
        assert_eq!(
            manifold.objective(&BTreeSet::new(), &SamplerConfig::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn singleton_terms_are_hand_computable() {
        let suite = mini_suite(vec![
            mini_scenario("a", Category::Benign, "alpha", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("b", Category::Adversarial, "beta", EnvironmentalStress::Latency, SocialSensitivity::None, 5),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let config = SamplerConfig {
            budget: Some(1),
            ..SamplerConfig::default()
        };
        let q: BTreeSet<String> = ["b".to_string()].into();
        let terms = manifold.terms(&q, &config).unwrap();
        // Two regions of relevance 1 each; one hit.
        assert!((terms.coverage - 0.5).abs() < 1e-12);
        // One scenario of weight 5, budget 1: 5 / (1 * 5).
        assert!((terms.risk - 1.0).abs() < 1e-12);
        // "b" combines latency stress with adversarial construction: the
        // only pressure pair in the manifold, fully covered.
        assert!((terms.composition - 1.0).abs() < 1e-12);
        assert_eq!(terms.redundancy, 0.0);
    }

    #[test]
    fn composition_saturates_on_pair_free_manifolds() {
        let suite = mini_suite(vec![
            mini_scenario("a", Category::Benign, "alpha", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("b", Category::Benign, "beta", EnvironmentalStress::Latency, SocialSensitivity::None, 2),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let q: BTreeSet<String> = ["a".to_string()].into();
        let terms = manifold.terms(&q, &SamplerConfig::default()).unwrap();
        assert_eq!(terms.composition, 1.0);
    }

    #[test]
    fn redundancy_measures_mean_axis_agreement() {
        let suite = mini_suite(vec![
            mini_scenario("a", Category::Benign, "same", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("b", Category::Benign, "same", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("c", Category::Benign, "other", EnvironmentalStress::Latency, SocialSensitivity::Bias, 1),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let config = SamplerConfig::default();
        let twins: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let t = manifold.terms(&twins, &config).unwrap();
        assert!((t.redundancy - 1.0).abs() < 1e-12, "identical axes agree fully");
        let mixed: BTreeSet<String> = ["a".to_string(), "c".to_string()].into();
        let t = manifold.terms(&mixed, &config).unwrap();
        // Agrees on interface_type and interaction_horizon only.
        assert!((t.redundancy - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_matches_brute_force_on_a_small_manifold() {
        let suite = mini_suite(vec![
            mini_scenario("a", Category::Benign, "f1", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("b", Category::Adversarial, "f2", EnvironmentalStress::Latency, SocialSensitivity::None, 5),
            mini_scenario("c", Category::Operational, "f3", EnvironmentalStress::ToolFailure, SocialSensitivity::None, 3),
            mini_scenario("d", Category::Social, "f4", EnvironmentalStress::None, SocialSensitivity::Bias, 4),
            mini_scenario("e", Category::Benign, "f1", EnvironmentalStress::None, SocialSensitivity::None, 1),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let config = SamplerConfig {
            gamma: 0.0,
            budget: Some(3),
            ..SamplerConfig::default()
        };
        let greedy = manifold.select_greedy(&config).unwrap();
        let (best, _) = manifold.brute_force_best(&config).unwrap();
        assert!(
            greedy.objective >= (1.0 - 1.0 / std::f64::consts::E) * best - 1e-9,
            "greedy {} vs optimum {best}",
            greedy.objective
        );
    }

    #[test]
    fn ties_break_toward_the_smallest_id() {
        let suite = mini_suite(vec![
            mini_scenario("s-2", Category::Benign, "fam", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("s-1", Category::Benign, "fam", EnvironmentalStress::None, SocialSensitivity::None, 2),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let config = SamplerConfig {
            budget: Some(1),
            ..SamplerConfig::default()
        };
        let pick = manifold.select_greedy(&config).unwrap();
        assert_eq!(pick.scenario_ids, vec!["s-1"]);
    }

    #[test]
    fn high_redundancy_penalty_prefers_diverse_picks() {
        let suite = mini_suite(vec![
            mini_scenario("a1", Category::Benign, "same", EnvironmentalStress::None, SocialSensitivity::None, 5),
            mini_scenario("a2", Category::Benign, "same", EnvironmentalStress::None, SocialSensitivity::None, 5),
            mini_scenario("b1", Category::Operational, "other", EnvironmentalStress::Latency, SocialSensitivity::Bias, 1),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let config = SamplerConfig {
            alpha: 0.0,
            beta: 0.1,
            eta: 0.0,
            gamma: 10.0,
            budget: Some(2),
        };
        let pick = manifold.select_greedy(&config).unwrap();
        assert!(
            pick.scenario_ids.contains(&"b1".to_string()),
            "expected the diverse scenario, got {:?}",
            pick.scenario_ids
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SamplerConfig {
            alpha: f64::NAN,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            gamma: -0.1,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            budget: Some(0),
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn measurement(success: bool, violation: bool, weight: u8) -> MeasurementVector {
        let b = |v: bool| if v { Rational::one() } else { Rational::zero() };
        MeasurementVector {
            success: b(success),
            violation: b(violation),
            risk_weighted_violation: b(violation).mul(Rational::new(i64::from(weight), 5)),
            recovery: Rational::one(),
            gate_interventions_normalized: Rational::zero(),
        }
    }

    #[test]
    fn weighting_schemes_assign_documented_weights() {
        let suite = mini_suite(vec![
            mini_scenario("a", Category::Benign, "f1", EnvironmentalStress::None, SocialSensitivity::None, 2),
            mini_scenario("b", Category::Adversarial, "f2", EnvironmentalStress::None, SocialSensitivity::None, 5),
        ]);
        let regions = partition_by_category(&suite);
        let manifold = Manifold::new(&suite, &regions).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];

        let dp = weighted_set(&manifold, &ids, WeightingScheme::DeploymentProportional).unwrap();
        assert_eq!(dp.entries[0].weight, 1.0);
        assert_eq!(dp.entries[1].weight, 1.0);

        let ru = weighted_set(&manifold, &ids, WeightingScheme::RiskUpweighted).unwrap();
        assert_eq!(ru.entries[0].weight, 2.0);
        assert_eq!(ru.entries[1].weight, 5.0);
    }

    #[test]
    fn profile_is_the_exact_weighted_mean() {
        let set = WeightedSet {
            scheme: WeightingScheme::DeploymentProportional,
            entries: vec![
                WeightedScenario { scenario_id: "a".into(), weight: 1.0 },
                WeightedScenario { scenario_id: "b".into(), weight: 3.0 },
            ],
        };
        let mut measurements = BTreeMap::new();
        measurements.insert("a".to_string(), measurement(true, false, 2));
        measurements.insert("b".to_string(), measurement(false, true, 5));
        let profile = estimate_profile(&set, &measurements).unwrap();
        assert!((profile.dims["success"] - 0.25).abs() < 1e-15);
        assert!((profile.dims["violation"] - 0.75).abs() < 1e-15);
        assert!((profile.dims["risk_weighted_violation"] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn missing_measurement_is_an_error_naming_the_scenario() {
        let set = WeightedSet {
            scheme: WeightingScheme::DeploymentProportional,
            entries: vec![WeightedScenario { scenario_id: "ghost".into(), weight: 1.0 }],
        };
        let err = estimate_profile(&set, &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn profile_is_invariant_under_uniform_weight_scaling() {
        let entries = vec![
            WeightedScenario { scenario_id: "a".into(), weight: 0.4 },
            WeightedScenario { scenario_id: "b".into(), weight: 1.7 },
        ];
        let scaled = entries
            .iter()
            .map(|e| WeightedScenario {
                scenario_id: e.scenario_id.clone(),
                weight: e.weight * 7.0,
            })
            .collect();
        let mut measurements = BTreeMap::new();
        measurements.insert("a".to_string(), measurement(true, false, 2));
        measurements.insert("b".to_string(), measurement(false, true, 4));
        let base = estimate_profile(
            &WeightedSet { scheme: WeightingScheme::DeploymentProportional, entries },
            &measurements,
        )
        .unwrap();
        let scaled = estimate_profile(
            &WeightedSet { scheme: WeightingScheme::DeploymentProportional, entries: scaled },
            &measurements,
        )
        .unwrap();
        for dim in MEASUREMENT_DIMS {
            assert!((base.dims[dim] - scaled.dims[dim]).abs() < 1e-12, "{dim}");
        }
    }
}
