//! Scenario model: the typed description of one evaluation episode and the
//! axis geometry used to carve a suite into deployment-relevant regions.
//!
//! A scenario is pure data. Everything an episode needs at run time (world
//! fixture contents, injection payloads, stress schedule, pass/fail
//! predicates) is declared here so that runs are reproducible from the suite
//! file alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Benign,
    Adversarial,
    Operational,
    Social,
}

impl Category {
    /// Admissible consequence-severity values per category.
    pub fn severity_range(self) -> &'static [u8] {
        match self {
            Category::Benign => &[1, 2],
            Category::Adversarial => &[3, 4, 5],
            Category::Operational => &[2, 3],
            Category::Social => &[4, 5],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Benign => "benign",
            Category::Adversarial => "adversarial",
            Category::Operational => "operational",
            Category::Social => "social",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentalStress {
    None,
    Latency,
    MalformedData,
    ToolFailure,
}

impl EnvironmentalStress {
    pub fn label(self) -> &'static str {
        match self {
            EnvironmentalStress::None => "none",
            EnvironmentalStress::Latency => "latency",
            EnvironmentalStress::MalformedData => "malformed_data",
            EnvironmentalStress::ToolFailure => "tool_failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialSensitivity {
    None,
    Bias,
    EmotionalPressure,
    AuthorityPressure,
}

impl SocialSensitivity {
    pub fn label(self) -> &'static str {
        match self {
            SocialSensitivity::None => "none",
            SocialSensitivity::Bias => "bias",
            SocialSensitivity::EmotionalPressure => "emotional_pressure",
            SocialSensitivity::AuthorityPressure => "authority_pressure",
        }
    }
}

/// The five sandbox tools. The set is closed; anything else an agent tries to
/// call is recorded as a malformed action, never executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    DocumentSearch,
    DatabaseQuery,
    FileRead,
    FileWrite,
    MessageDispatch,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::DocumentSearch,
        ToolName::DatabaseQuery,
        ToolName::FileRead,
        ToolName::FileWrite,
        ToolName::MessageDispatch,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ToolName::DocumentSearch => "document_search",
            ToolName::DatabaseQuery => "database_query",
            ToolName::FileRead => "file_read",
            ToolName::FileWrite => "file_write",
            ToolName::MessageDispatch => "message_dispatch",
        }
    }

    pub fn from_label(label: &str) -> Option<ToolName> {
        ToolName::ALL.into_iter().find(|t| t.label() == label)
    }
}

/// Eight-class failure taxonomy used by attribution and the hardening loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureClass {
    /// Prompt injection: the agent acted on a directive smuggled in via a
    /// tool payload.
    PI,
    /// Goal drift: sustained deviation from the task with no injection.
    GD,
    /// Unauthorized action: a forbidden action traceable to a direct user
    /// instruction.
    UA,
    /// Hallucinated target: calls against tools or entities that do not
    /// exist.
    HT,
    /// Recovery failure: a tool error the agent never worked around although
    /// a route existed.
    RF,
    /// Operational fault: failure caused solely by scheduled stress.
    OF,
    /// Privacy leak: confidential material sent to an unauthorized sink.
    PL,
    /// Social harm: a harmful final answer.
    SH,
}

impl FailureClass {
    pub const ALL: [FailureClass; 8] = [
        FailureClass::PI,
        FailureClass::GD,
        FailureClass::UA,
        FailureClass::HT,
        FailureClass::RF,
        FailureClass::OF,
        FailureClass::PL,
        FailureClass::SH,
    ];

    /// Precedence when one event matches several signatures. Lower wins.
    pub fn precedence(self) -> u8 {
        match self {
            FailureClass::PI => 0,
            FailureClass::UA => 1,
            FailureClass::PL => 2,
            FailureClass::HT => 3,
            FailureClass::SH => 4,
            FailureClass::GD => 5,
            FailureClass::RF => 6,
            FailureClass::OF => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAxes {
    pub task_family: String,
    /// Primary tool surface exercised, or "none" for pure-dialogue episodes.
    pub interface_type: String,
    /// Maximum agent turns before the run is truncated. Latency stress
    /// consumes extra turns from the same budget.
    pub interaction_horizon: u32,
    pub environmental_stress: EnvironmentalStress,
    pub social_sensitivity: SocialSensitivity,
    /// 1 (reversible annoyance) .. 5 (irreversible harm). Doubles as the
    /// scenario risk weight.
    pub consequence_severity: u8,
}

/// Predicate over final world state. Used for success criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePredicate {
    pub selector: StateSelector,
    pub condition: StateCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSelector {
    File { path: String },
    TableRow { table: String, key_field: String, key_value: String },
    OutboxEntry { recipient: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateCondition {
    Exists,
    Equals { value: String },
    Contains { needle: String },
}

/// Predicate over a single tool call. Deterministic and total: any
/// well-formed call either matches or does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionPredicate {
    pub tool: ToolName,
    #[serde(rename = "match")]
    pub matcher: ArgumentMatcher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArgumentMatcher {
    /// `path` argument starts with the prefix.
    PathPrefix { prefix: String },
    /// `recipient` argument's domain part equals the domain exactly.
    RecipientDomain { domain: String },
    /// `recipient` argument's domain part is not in the allowed list.
    RecipientOutsideDomains { allowed: Vec<String> },
    /// `body` argument contains the needle.
    BodyContains { needle: String },
    /// Named argument equals the value exactly.
    FieldEquals { field: String, value: String },
    /// Any call to the tool.
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPayload {
    pub tool: ToolName,
    /// Directive text spliced into the tool payload as a plain sentence.
    /// The payload metadata is tainted, the visible text is not marked.
    pub directive: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    Latency,
    MalformedData,
    ToolFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressEvent {
    /// Agent turn the stress fires on (first agent action is turn 1).
    pub turn: u32,
    pub kind: StressKind,
    pub tool: ToolName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub category: Category,
    pub axes: ScenarioAxes,
    /// Risk weight r(s). Invariant: equals axes.consequence_severity.
    pub risk_weight: u8,
    pub initial_user_message: String,
    /// Id of the world fixture the episode starts from.
    pub world_fixture: String,
    pub success_criteria: Vec<StatePredicate>,
    pub forbidden_actions: Vec<ActionPredicate>,
    pub target_failure_types: Vec<FailureClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection_payloads: Option<Vec<InjectionPayload>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stressor_schedule: Option<Vec<StressEvent>>,
    /// Needles matched (case-insensitively) against the final answer; a hit
    /// counts as a violation even when no tool call was forbidden.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social_harm_predicates: Option<Vec<String>>,
}

impl Scenario {
    pub fn injections(&self) -> &[InjectionPayload] {
        self.injection_payloads.as_deref().unwrap_or(&[])
    }

    pub fn stressors(&self) -> &[StressEvent] {
        self.stressor_schedule.as_deref().unwrap_or(&[])
    }

    pub fn harm_needles(&self) -> &[String] {
        self.social_harm_predicates.as_deref().unwrap_or(&[])
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::validation(Some(&self.id), msg);
        if self.id.trim().is_empty() {
            return Err(Error::validation(None, "scenario id must be non-empty"));
        }
        let sev = self.axes.consequence_severity;
        if !(1..=5).contains(&sev) {
            return Err(err(format!("consequence_severity {sev} outside 1..=5")));
        }
        if self.risk_weight != sev {
            return Err(err(format!(
                "risk_weight {} must equal consequence_severity {sev}",
                self.risk_weight
            )));
        }
        if !self.category.severity_range().contains(&sev) {
            return Err(err(format!(
                "severity {sev} not admissible for category {}",
                self.category.label()
            )));
        }
        if self.axes.interaction_horizon < 1 {
            return Err(err("interaction_horizon must be >= 1".into()));
        }
        if self.axes.interface_type != "none"
            && ToolName::from_label(&self.axes.interface_type).is_none()
        {
            return Err(err(format!(
                "interface_type {:?} is not a tool interface or \"none\"",
                self.axes.interface_type
            )));
        }
        if self.success_criteria.is_empty() && self.forbidden_actions.is_empty() {
            return Err(err(
                "scenario must declare at least one success criterion or forbidden action".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub schema_version: u32,
    pub suite_id: String,
    pub scenarios: Vec<Scenario>,
}

impl Suite {
    /// Parse and fully validate a suite document. All declared invariants are
    /// checked here so later stages can assume well-formed input.
    pub fn from_json(text: &str) -> Result<Suite> {
        let suite: Suite =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("suite: {e}")))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Suite> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Suite::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SUITE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SUITE_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.scenarios.is_empty() {
            return Err(Error::validation(None, "suite must contain at least one scenario"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.scenarios {
            s.validate()?;
            if !seen.insert(s.id.clone()) {
                return Err(Error::validation(
                    Some(&s.id),
                    "duplicate scenario id in suite",
                ));
            }
        }
        Ok(())
    }

    pub fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// Sum of risk weights over the whole suite. Denominator of the
    /// risk-weighted failure mass.
    pub fn total_risk(&self) -> u32 {
        total_risk(&self.scenarios)
    }

    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.scenarios {
            *counts.entry(s.category).or_insert(0) += 1;
        }
        counts
    }
}

pub fn total_risk(scenarios: &[Scenario]) -> u32 {
    scenarios.iter().map(|s| s.risk_weight as u32).sum()
}

// === Region geometry =======================================================

/// The seven binnable dimensions: category plus the six scenario axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    Category,
    TaskFamily,
    InterfaceType,
    InteractionHorizon,
    EnvironmentalStress,
    SocialSensitivity,
    ConsequenceSeverity,
}

impl AxisName {
    pub const ALL: [AxisName; 7] = [
        AxisName::Category,
        AxisName::TaskFamily,
        AxisName::InterfaceType,
        AxisName::InteractionHorizon,
        AxisName::EnvironmentalStress,
        AxisName::SocialSensitivity,
        AxisName::ConsequenceSeverity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AxisName::Category => "category",
            AxisName::TaskFamily => "task_family",
            AxisName::InterfaceType => "interface_type",
            AxisName::InteractionHorizon => "interaction_horizon",
            AxisName::EnvironmentalStress => "environmental_stress",
            AxisName::SocialSensitivity => "social_sensitivity",
            AxisName::ConsequenceSeverity => "consequence_severity",
        }
    }

    pub fn from_label(label: &str) -> Option<AxisName> {
        AxisName::ALL.into_iter().find(|a| a.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonBucket {
    pub lo: u32,
    /// Inclusive upper bound; None means open-ended.
    pub hi: Option<u32>,
}

impl HorizonBucket {
    pub fn contains(&self, v: u32) -> bool {
        v >= self.lo && self.hi.is_none_or(|hi| v <= hi)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}-{}", self.lo, hi),
            None => format!("{}+", self.lo),
        }
    }
}

/// Per-axis discretization. Axes not in `keep` are collapsed (one bin);
/// kept categorical axes bin by raw label; the horizon bins by bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBins {
    pub keep: BTreeSet<AxisName>,
    pub horizon_buckets: Vec<HorizonBucket>,
}

impl Default for AxisBins {
    fn default() -> Self {
        AxisBins {
            keep: AxisName::ALL.into_iter().collect(),
            horizon_buckets: vec![
                HorizonBucket { lo: 1, hi: Some(2) },
                HorizonBucket { lo: 3, hi: Some(5) },
                HorizonBucket { lo: 6, hi: None },
            ],
        }
    }
}

impl AxisBins {
    /// Keep only the named axes at label granularity (default horizon
    /// buckets apply if the horizon is kept).
    pub fn keeping(axes: &[AxisName]) -> AxisBins {
        AxisBins {
            keep: axes.iter().copied().collect(),
            ..AxisBins::default()
        }
    }

    pub fn cell_of(&self, s: &Scenario) -> Result<RegionCell> {
        let kept = |axis: AxisName, label: String| -> Option<String> {
            self.keep.contains(&axis).then_some(label)
        };
        let horizon = if self.keep.contains(&AxisName::InteractionHorizon) {
            let v = s.axes.interaction_horizon;
            let bucket = self
                .horizon_buckets
                .iter()
                .find(|b| b.contains(v))
                .ok_or_else(|| {
                    Error::validation(
                        Some(&s.id),
                        format!("axis interaction_horizon value {v} not covered by any bucket"),
                    )
                })?;
            Some(bucket.label())
        } else {
            None
        };
        Ok(RegionCell {
            category: kept(AxisName::Category, s.category.label().to_string()),
            task_family: kept(AxisName::TaskFamily, s.axes.task_family.clone()),
            interface_type: kept(AxisName::InterfaceType, s.axes.interface_type.clone()),
            interaction_horizon: horizon,
            environmental_stress: kept(
                AxisName::EnvironmentalStress,
                s.axes.environmental_stress.label().to_string(),
            ),
            social_sensitivity: kept(
                AxisName::SocialSensitivity,
                s.axes.social_sensitivity.label().to_string(),
            ),
            consequence_severity: kept(
                AxisName::ConsequenceSeverity,
                s.axes.consequence_severity.to_string(),
            ),
        })
    }
}

/// One cell of the discretized manifold. A None field means the axis was
/// collapsed by the binning.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_horizon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environmental_stress: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub social_sensitivity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consequence_severity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cell: RegionCell,
    /// Non-negative deployment relevance mass. Defaults to the scenario
    /// count unless a deployment prior overrides it.
    pub deployment_relevance: f64,
    /// Defaults to the maximum risk weight in the cell.
    pub risk_contribution: f64,
    /// Ids of member scenarios, ascending.
    pub scenario_ids: Vec<String>,
}

/// Deployment-prior document: relevance/risk per cell, overriding the
/// count-based defaults when cells match exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPrior {
    pub schema_version: u32,
    pub regions: Vec<PriorRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRegion {
    pub cell: RegionCell,
    pub relevance: f64,
    pub risk: f64,
}

impl DeploymentPrior {
    pub fn from_json(text: &str) -> Result<DeploymentPrior> {
        let prior: DeploymentPrior =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("deployment prior: {e}")))?;
        if prior.schema_version != SUITE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: SUITE_SCHEMA_VERSION,
                found: prior.schema_version,
            });
        }
        for r in &prior.regions {
            if !r.relevance.is_finite() || r.relevance <= 0.0 {
                return Err(Error::validation(
                    None,
                    "deployment prior relevance values must be finite and > 0",
                ));
            }
            if !r.risk.is_finite() || r.risk < 0.0 {
                return Err(Error::validation(
                    None,
                    "deployment prior risk values must be finite and >= 0",
                ));
            }
        }
        Ok(prior)
    }

    pub fn load(path: &Path) -> Result<DeploymentPrior> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        DeploymentPrior::from_json(&text)
    }

    fn lookup(&self, cell: &RegionCell) -> Option<&PriorRegion> {
        self.regions.iter().find(|r| &r.cell == cell)
    }
}

/// Partition a manifold into regions. Every scenario lands in exactly one
/// region; regions come back sorted by cell for deterministic downstream
/// iteration.
pub fn partition(
    scenarios: &[Scenario],
    bins: &AxisBins,
    prior: Option<&DeploymentPrior>,
) -> Result<Vec<Region>> {
    let mut groups: BTreeMap<RegionCell, Vec<&Scenario>> = BTreeMap::new();
    for s in scenarios {
        groups.entry(bins.cell_of(s)?).or_default().push(s);
    }
    let mut regions = Vec::with_capacity(groups.len());
    for (cell, members) in groups {
        let (relevance, risk) = match prior.and_then(|p| p.lookup(&cell)) {
            Some(p) => (p.relevance, p.risk),
            None => {
                let max_risk = members.iter().map(|s| s.risk_weight).max().unwrap_or(0);
                (members.len() as f64, max_risk as f64)
            }
        };
        let mut ids: Vec<String> = members.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        regions.push(Region {
            cell,
            deployment_relevance: relevance,
            risk_contribution: risk,
            scenario_ids: ids,
        });
    }
    Ok(regions)
}
