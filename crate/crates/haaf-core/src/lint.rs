//! Static analysis of deployment policy artifacts.
//!
//! The linter reads a declarative description of the deployment (tools and
//! their scopes, standing directives, task families, data sources) and
//! reports configuration weaknesses before any scenario runs. Each finding
//! suggests scenario categories worth weighting more heavily; those
//! suggestions can be folded into region risk priors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Category, Region};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionClass {
    ReadOnly,
    Reversible,
    Irreversible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolPolicy {
    pub name: String,
    pub action_class: ActionClass,
    #[serde(default)]
    pub requires_confirmation: bool,
    /// Path prefixes, recipient domains, table names: whatever bounds the
    /// tool's reach.
    #[serde(default)]
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDirective {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolUse {
    pub tool: String,
    #[serde(default)]
    pub scopes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFamilyPolicy {
    pub name: String,
    #[serde(default)]
    pub uses: Vec<ToolUse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePolicy {
    pub name: String,
    pub trusted: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifacts {
    pub schema_version: u32,
    pub policy_id: String,
    #[serde(default)]
    pub tools: Vec<ToolPolicy>,
    #[serde(default)]
    pub directives: Vec<PolicyDirective>,
    #[serde(default)]
    pub task_families: Vec<TaskFamilyPolicy>,
    #[serde(default)]
    pub sources: Vec<SourcePolicy>,
}

impl PolicyArtifacts {
    pub fn from_json(text: &str) -> Result<PolicyArtifacts> {
        let policy: PolicyArtifacts =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("policy: {e}")))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<PolicyArtifacts> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: POLICY_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        let mut seen = BTreeSet::new();
        for t in &self.tools {
            if !seen.insert(&t.name) {
                return Err(Error::validation(
                    None,
                    format!("duplicate tool policy {:?}", t.name),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for d in &self.directives {
            if !seen.insert(&d.id) {
                return Err(Error::validation(
                    None,
                    format!("duplicate directive id {:?}", d.id),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintRule {
    MissingConfirmation,
    ConflictingDirectives,
    OverBroadScope,
    UntrustedSourceUnsanitized,
}

impl LintRule {
    pub fn id(&self) -> &'static str {
        match self {
            LintRule::MissingConfirmation => "R1",
            LintRule::ConflictingDirectives => "R2",
            LintRule::OverBroadScope => "R3",
            LintRule::UntrustedSourceUnsanitized => "R4",
        }
    }

    pub fn severity(&self) -> u8 {
        match self {
            LintRule::MissingConfirmation => 4,
            LintRule::ConflictingDirectives => 3,
            LintRule::OverBroadScope => 3,
            LintRule::UntrustedSourceUnsanitized => 4,
        }
    }

    pub fn suggested_categories(&self) -> Vec<Category> {
        match self {
            LintRule::MissingConfirmation => vec![Category::Adversarial, Category::Social],
            LintRule::ConflictingDirectives => vec![Category::Operational],
            LintRule::OverBroadScope => vec![Category::Adversarial],
            LintRule::UntrustedSourceUnsanitized => vec![Category::Adversarial],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub rule_id: String,
    pub severity: u8,
    /// The tool, directive pair, or source the finding is about.
    pub subject: String,
    pub detail: String,
    pub suggested_categories: Vec<Category>,
}

fn finding(rule: LintRule, subject: &str, detail: String) -> LintFinding {
    LintFinding {
        rule,
        rule_id: rule.id().to_string(),
        severity: rule.severity(),
        subject: subject.to_string(),
        detail,
        suggested_categories: rule.suggested_categories(),
    }
}

fn rule_missing_confirmation(policy: &PolicyArtifacts, out: &mut Vec<LintFinding>) {
    for tool in &policy.tools {
        if tool.action_class == ActionClass::Irreversible && !tool.requires_confirmation {
            out.push(finding(
                LintRule::MissingConfirmation,
                &tool.name,
                format!(
                    "tool {:?} performs irreversible actions without a confirmation step",
                    tool.name
                ),
            ));
        }
    }
}

/// Head verb of a directive relative to a marker phrase, lowercased and
/// stripped of punctuation.
fn verb_after<'a>(lower: &'a str, marker: &str) -> Option<&'a str> {
    let idx = lower.find(marker)?;
    let rest = &lower[idx + marker.len()..];
    rest.split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
}

fn rule_conflicting_directives(policy: &PolicyArtifacts, out: &mut Vec<LintFinding>) {
    const NEGATED: [&str; 3] = ["never ", "do not ", "don't "];
    const AFFIRMATIVE: [&str; 2] = ["always ", "must "];
    // verb -> directive ids, keyed separately for each polarity
    let mut negated: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut affirmative: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for d in &policy.directives {
        let lower = d.text.to_lowercase();
        for marker in NEGATED {
            if let Some(verb) = verb_after(&lower, marker) {
                negated.entry(verb.to_string()).or_default().push(&d.id);
            }
        }
        for marker in AFFIRMATIVE {
            if let Some(verb) = verb_after(&lower, marker) {
                affirmative.entry(verb.to_string()).or_default().push(&d.id);
            }
        }
    }
    for (verb, neg_ids) in &negated {
        if let Some(aff_ids) = affirmative.get(verb) {
            out.push(finding(
                LintRule::ConflictingDirectives,
                verb,
                format!(
                    "directives {:?} forbid \"{verb}\" while {:?} require it",
                    neg_ids, aff_ids
                ),
            ));
        }
    }
}

fn rule_over_broad_scope(policy: &PolicyArtifacts, out: &mut Vec<LintFinding>) {
    for tool in &policy.tools {
        let mut needed: BTreeSet<&str> = BTreeSet::new();
        let mut referenced = false;
        for family in &policy.task_families {
            for usage in &family.uses {
                if usage.tool == tool.name {
                    referenced = true;
                    needed.extend(usage.scopes.iter().map(String::as_str));
                }
            }
        }
        if !referenced {
            continue;
        }
        let granted: BTreeSet<&str> = tool.scopes.iter().map(String::as_str).collect();
        if granted.is_superset(&needed) && granted.len() > needed.len() {
            let surplus: Vec<&str> = granted.difference(&needed).copied().collect();
            out.push(finding(
                LintRule::OverBroadScope,
                &tool.name,
                format!(
                    "tool {:?} grants scopes {:?} beyond what any task family uses",
                    tool.name, surplus
                ),
            ));
        }
    }
}

fn rule_untrusted_unsanitized(policy: &PolicyArtifacts, out: &mut Vec<LintFinding>) {
    for source in &policy.sources {
        if !source.trusted && !source.description.to_lowercase().contains("sanitiz") {
            out.push(finding(
                LintRule::UntrustedSourceUnsanitized,
                &source.name,
                format!(
                    "untrusted source {:?} declares no sanitization step",
                    source.name
                ),
            ));
        }
    }
}

/// Run all rules. Findings sort by severity (descending), then rule id,
/// then subject, so output order is stable.
pub fn lint(policy: &PolicyArtifacts) -> Vec<LintFinding> {
    let mut out = Vec::new();
    rule_missing_confirmation(policy, &mut out);
    rule_conflicting_directives(policy, &mut out);
    rule_over_broad_scope(policy, &mut out);
    rule_untrusted_unsanitized(policy, &mut out);
    out.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then_with(|| a.rule_id.cmp(&b.rule_id))
            .then_with(|| a.subject.cmp(&b.subject))
    });
    out
}

/// A finding translated into a category-level risk adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskHypothesis {
    pub rule_id: String,
    pub categories: Vec<Category>,
    /// Additive boost to matching regions' risk contribution: severity / 5.
    pub boost: f64,
}

pub fn risk_hypotheses(findings: &[LintFinding]) -> Vec<RiskHypothesis> {
    findings
        .iter()
        .map(|f| RiskHypothesis {
            rule_id: f.rule_id.clone(),
            categories: f.suggested_categories.clone(),
            boost: f64::from(f.severity) / 5.0,
        })
        .collect()
}

/// Fold lint conclusions into a region partition's risk estimates. Regions
/// binned without a category pass through untouched.
pub fn apply_lint_prior(regions: &mut [Region], hypotheses: &[RiskHypothesis]) {
    for region in regions {
        let Some(label) = &region.cell.category else {
            continue;
        };
        for h in hypotheses {
            if h.categories.iter().any(|c| c.label() == label) {
                region.risk_contribution += h.boost;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scenario::{AxisBins, AxisName};

    fn tool(name: &str, class: ActionClass, confirm: bool, scopes: &[&str]) -> ToolPolicy {
        ToolPolicy {
            name: name.to_string(),
            action_class: class,
            requires_confirmation: confirm,
            scopes: scopes.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn empty_policy() -> PolicyArtifacts {
        PolicyArtifacts {
            schema_version: POLICY_SCHEMA_VERSION,
            policy_id: "test".to_string(),
            tools: Vec::new(),
            directives: Vec::new(),
            task_families: Vec::new(),
            sources: Vec::new(),
        }
    }

    #[test]
    fn irreversible_tool_without_confirmation_fires_r1() {
        let mut policy = empty_policy();
        policy.tools = vec![
            tool("wipe", ActionClass::Irreversible, false, &[]),
            tool("send", ActionClass::Irreversible, true, &[]),
            tool("peek", ActionClass::ReadOnly, false, &[]),
        ];
        let findings = lint(&policy);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "R1");
        assert_eq!(findings[0].subject, "wipe");
        assert_eq!(findings[0].severity, 4);
        assert_eq!(
            findings[0].suggested_categories,
            vec![Category::Adversarial, Category::Social]
        );
    }

    #[test]
    fn opposed_directives_on_the_same_verb_fire_r2() {
        let mut policy = empty_policy();
        policy.directives = vec![
            PolicyDirective {
                id: "d1".into(),
                text: "Never share customer records with contractors.".into(),
            },
            PolicyDirective {
                id: "d2".into(),
                text: "You must share weekly status with the whole org.".into(),
            },
            PolicyDirective {
                id: "d3".into(),
                text: "Always archive closed tickets.".into(),
            },
        ];
        let findings = lint(&policy);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "R2");
        assert_eq!(findings[0].subject, "share");
        assert!(findings[0].detail.contains("d1"));
        assert!(findings[0].detail.contains("d2"));
    }

    #[test]
    fn scope_superset_beyond_family_needs_fires_r3() {
        let mut policy = empty_policy();
        policy.tools = vec![tool(
            "file_write",
            ActionClass::Reversible,
            true,
            &["/workspace/", "/protected/"],
        )];
        policy.task_families = vec![TaskFamilyPolicy {
            name: "reporting".into(),
            uses: vec![ToolUse {
                tool: "file_write".into(),
                scopes: vec!["/workspace/".into()],
            }],
        }];
        let findings = lint(&policy);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "R3");
        assert!(findings[0].detail.contains("/protected/"));
    }

    #[test]
    fn r3_stays_quiet_without_family_references_or_surplus() {
        let mut policy = empty_policy();
        // Unreferenced tool: nothing to compare against.
        policy.tools = vec![tool("lonely", ActionClass::ReadOnly, false, &["/x/"])];
        assert!(lint(&policy).is_empty());
        // Exact-fit scopes.
        policy.task_families = vec![TaskFamilyPolicy {
            name: "f".into(),
            uses: vec![ToolUse { tool: "lonely".into(), scopes: vec!["/x/".into()] }],
        }];
        assert!(lint(&policy).is_empty());
    }

    #[test]
    fn untrusted_source_without_sanitization_fires_r4() {
        let mut policy = empty_policy();
        policy.sources = vec![
            SourcePolicy {
                name: "inbox".into(),
                trusted: false,
                description: "Raw customer mail.".into(),
            },
            SourcePolicy {
                name: "scrubbed_feed".into(),
                trusted: false,
                description: "External feed, sanitized on ingest.".into(),
            },
            SourcePolicy {
                name: "hr_portal".into(),
                trusted: true,
                description: "Internal system.".into(),
            },
        ];
        let findings = lint(&policy);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "R4");
        assert_eq!(findings[0].subject, "inbox");
    }

    #[test]
    fn findings_sort_by_severity_then_rule_then_subject() {
        let mut policy = empty_policy();
        policy.tools = vec![
            tool("zeta", ActionClass::Irreversible, false, &[]),
            tool("alpha", ActionClass::Irreversible, false, &["/a/", "/b/"]),
        ];
        policy.task_families = vec![TaskFamilyPolicy {
            name: "f".into(),
            uses: vec![ToolUse { tool: "alpha".into(), scopes: vec!["/a/".into()] }],
        }];
        policy.sources = vec![SourcePolicy {
            name: "feed".into(),
            trusted: false,
            description: String::new(),
        }];
        let findings = lint(&policy);
        let order: Vec<(&str, &str)> = findings
            .iter()
            .map(|f| (f.rule_id.as_str(), f.subject.as_str()))
            .collect();
        assert_eq!(
            order,
            vec![
                ("R1", "alpha"),
                ("R1", "zeta"),
                ("R4", "feed"),
                ("R3", "alpha"),
            ]
        );
    }

    #[test]
    fn prior_application_boosts_matching_category_regions() {
        let suite = fixtures::reference_suite();
        let bins = AxisBins::keeping(&[AxisName::Category]);
        let mut regions = crate::scenario::partition(&suite.scenarios, &bins, None).unwrap();
        let adversarial_before = regions
            .iter()
            .find(|r| r.cell.category.as_deref() == Some("adversarial"))
            .unwrap()
            .risk_contribution;

        let mut policy = empty_policy();
        policy.sources = vec![SourcePolicy {
            name: "feed".into(),
            trusted: false,
            description: String::new(),
        }];
        let hypotheses = risk_hypotheses(&lint(&policy));
        assert_eq!(hypotheses.len(), 1);
        assert!((hypotheses[0].boost - 0.8).abs() < 1e-12);

        apply_lint_prior(&mut regions, &hypotheses);
        let adversarial_after = regions
            .iter()
            .find(|r| r.cell.category.as_deref() == Some("adversarial"))
            .unwrap()
            .risk_contribution;
        assert!((adversarial_after - adversarial_before - 0.8).abs() < 1e-12);
        let benign = regions
            .iter()
            .find(|r| r.cell.category.as_deref() == Some("benign"))
            .unwrap();
        assert_eq!(benign.risk_contribution, 2.0, "benign untouched, max weight 2");
    }

    #[test]
    fn baseline_policy_fixture_fires_all_four_rules() {
        let policy = PolicyArtifacts::from_json(fixtures::BASELINE_POLICY_JSON).unwrap();
        let findings = lint(&policy);
        let rules: BTreeSet<&str> = findings.iter().map(|f| f.rule_id.as_str()).collect();
        assert_eq!(rules, BTreeSet::from(["R1", "R2", "R3", "R4"]));
    }

    #[test]
    fn clean_policy_produces_no_findings() {
        let mut policy = empty_policy();
        policy.tools = vec![tool(
            "file_write",
            ActionClass::Irreversible,
            true,
            &["/workspace/"],
        )];
        policy.task_families = vec![TaskFamilyPolicy {
            name: "reporting".into(),
            uses: vec![ToolUse {
                tool: "file_write".into(),
                scopes: vec!["/workspace/".into()],
            }],
        }];
        policy.sources = vec![SourcePolicy {
            name: "feed".into(),
            trusted: false,
            description: "Sanitized before ingestion.".into(),
        }];
        policy.directives = vec![PolicyDirective {
            id: "d1".into(),
            text: "Never write outside the workspace.".into(),
        }];
        assert!(lint(&policy).is_empty());
    }
}
