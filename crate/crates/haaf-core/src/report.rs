//! Run reports: serializable summaries and their markdown rendering.
//!
//! Reports are timestamp-free unless explicitly stamped, so two runs of the
//! same configuration serialize to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::ScenarioOutcome;
use crate::error::{Error, Result};
use crate::harness::SuiteRun;
use crate::metrics::{delta, percent_string, SuiteMetrics};
use crate::scenario::FailureClass;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub suite_id: String,
    pub agent_identity: String,
    pub guardrails: Vec<String>,
    /// Only present when explicitly requested; stamping breaks bytewise
    /// reproducibility by design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub metrics: SuiteMetrics,
    pub histogram: BTreeMap<FailureClass, (u32, u32)>,
    pub outcomes: Vec<ScenarioOutcome>,
}

impl RunReport {
    pub fn from_run(run: &SuiteRun, timestamp: Option<String>) -> RunReport {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            suite_id: run.suite_id.clone(),
            agent_identity: run.agent_identity.clone(),
            guardrails: run.guardrails.clone(),
            timestamp,
            metrics: SuiteMetrics::from_outcomes(&run.outcomes),
            histogram: crate::attribution::attribution_histogram(&run.outcomes),
            outcomes: run.outcomes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<RunReport> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let report: RunReport =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("report: {e}")))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: REPORT_SCHEMA_VERSION,
                found: report.schema_version,
            });
        }
        Ok(report)
    }
}

/// Unicode minus for table cells; keeps signs visually aligned with the
/// plus-prefixed gains.
fn pretty_sign(s: String) -> String {
    match s.strip_prefix('-') {
        Some(rest) => format!("\u{2212}{rest}"),
        None => s,
    }
}

pub fn render_report_markdown(report: &RunReport) -> String {
    let m = &report.metrics;
    let mut out = String::new();
    out.push_str(&format!("# Run report: {}\n\n", report.suite_id));
    out.push_str(&format!("Agent: `{}`\n", report.agent_identity));
    let guardrails = if report.guardrails.is_empty() {
        "none".to_string()
    } else {
        report.guardrails.join(", ")
    };
    out.push_str(&format!("Guardrails: {guardrails}\n"));
    if let Some(ts) = &report.timestamp {
        out.push_str(&format!("Generated: {ts}\n"));
    }
    out.push_str("\n| Metric | Value |\n|---|---|\n");
    out.push_str(&format!(
        "| Scenarios | {} |\n| Successes | {} |\n| Success Rate (%) | {} |\n",
        m.scenario_count,
        m.successes,
        percent_string(m.success_rate)
    ));
    out.push_str(&format!(
        "| Violations | {} |\n| Violation Rate (%) | {} |\n",
        m.violations,
        percent_string(m.violation_rate)
    ));
    out.push_str(&format!(
        "| Risk-Weighted Failure | {} |\n",
        m.risk_weighted_failure.to_decimal_string(3)
    ));

    if !report.histogram.is_empty() {
        out.push_str("\n## Failure attribution\n\n");
        out.push_str("| Class | Episodes | Risk weight |\n|---|---|---|\n");
        for (class, (count, weight)) in &report.histogram {
            out.push_str(&format!("| {class:?} | {count} | {weight} |\n"));
        }
    }

    out.push_str("\n## Scenarios\n\n");
    out.push_str("| Scenario | Success | Violated | Attribution |\n|---|---|---|---|\n");
    for o in &report.outcomes {
        let attribution = o
            .attribution
            .as_ref()
            .map(|a| format!("{:?}", a.failure_type))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            o.scenario_id,
            if o.success { "yes" } else { "no" },
            if o.violated { "yes" } else { "no" },
            attribution
        ));
    }
    out
}

/// Side-by-side comparison of a baseline and a hardened run over the same
/// suite.
pub fn render_comparison_markdown(baseline: &RunReport, hardened: &RunReport) -> Result<String> {
    if baseline.suite_id != hardened.suite_id {
        return Err(Error::SuiteMismatch(format!(
            "cannot compare runs over different suites ({} vs {})",
            baseline.suite_id, hardened.suite_id
        )));
    }
    let d = delta(&baseline.metrics, &hardened.metrics);
    let mut out = String::new();
    out.push_str("| Metric | Baseline | Hardened | Abs. Change |\n|---|---|---|---|\n");
    out.push_str(&format!(
        "| Success Rate (%) | {} | {} | {} |\n",
        percent_string(baseline.metrics.success_rate),
        percent_string(hardened.metrics.success_rate),
        pretty_sign(d.success_rate_pp.to_signed_decimal_string(1))
    ));
    out.push_str(&format!(
        "| Violation Rate (%) | {} | {} | {} |\n",
        percent_string(baseline.metrics.violation_rate),
        percent_string(hardened.metrics.violation_rate),
        pretty_sign(d.violation_rate_pp.to_signed_decimal_string(1))
    ));
    out.push_str(&format!(
        "| Risk-Weighted Failure | {} | {} | {} |\n",
        baseline.metrics.risk_weighted_failure.to_decimal_string(3),
        hardened.metrics.risk_weighted_failure.to_decimal_string(3),
        pretty_sign(d.risk_weighted_failure.to_signed_decimal_string(3))
    ));
    Ok(out)
}
