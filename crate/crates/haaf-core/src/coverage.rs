//! Benchmark coverage accounting.
//!
//! A coverage matrix records, per benchmark, how strongly each of eight
//! assessment dimensions is exercised: primary focus, partial, or minimal.
//! Rows for external benchmarks come from a curated fixture; a row for any
//! local suite can be derived mechanically with `audit_suite`. The gap
//! report names dimensions in which no benchmark has primary coverage.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Category, FailureClass, Scenario, SocialSensitivity, Suite};

pub const COVERAGE_SCHEMA_VERSION: u32 = 1;
/// A dimension counts as a primary focus when at least this share of a
/// suite's scenarios exercises it.
pub const PRIMARY_SHARE_NUM: usize = 1;
pub const PRIMARY_SHARE_DEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageDimension {
    Task,
    Tool,
    LongHorizon,
    Factuality,
    Adversarial,
    Operational,
    Social,
    Risk,
}

impl CoverageDimension {
    pub const ALL: [CoverageDimension; 8] = [
        CoverageDimension::Task,
        CoverageDimension::Tool,
        CoverageDimension::LongHorizon,
        CoverageDimension::Factuality,
        CoverageDimension::Adversarial,
        CoverageDimension::Operational,
        CoverageDimension::Social,
        CoverageDimension::Risk,
    ];

    pub fn display(&self) -> &'static str {
        match self {
            CoverageDimension::Task => "Task",
            CoverageDimension::Tool => "Tool",
            CoverageDimension::LongHorizon => "Long-horizon",
            CoverageDimension::Factuality => "Factuality",
            CoverageDimension::Adversarial => "Adversarial",
            CoverageDimension::Operational => "Operational",
            CoverageDimension::Social => "Social",
            CoverageDimension::Risk => "Risk",
        }
    }

    /// Column position in the canonical ordering; gap ranking tie-breaker.
    pub fn column(&self) -> usize {
        Self::ALL.iter().position(|d| d == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageLevel {
    Primary,
    Partial,
    Minimal,
}

impl CoverageLevel {
    pub fn symbol(&self) -> &'static str {
        match self {
            CoverageLevel::Primary => "\u{2713}",
            CoverageLevel::Partial => "\u{25B3}",
            CoverageLevel::Minimal => "\u{00D7}",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Hand-assessed from the benchmark's published description.
    Expert,
    /// Computed from a scenario suite by `audit_suite`.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub name: String,
    pub provenance: Provenance,
    /// One level per dimension, in `CoverageDimension::ALL` order.
    pub levels: Vec<CoverageLevel>,
}

impl BenchmarkRow {
    pub fn level(&self, dim: CoverageDimension) -> CoverageLevel {
        self.levels[dim.column()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub schema_version: u32,
    pub rows: Vec<BenchmarkRow>,
}

impl CoverageMatrix {
    pub fn from_json(text: &str) -> Result<CoverageMatrix> {
        let matrix: CoverageMatrix =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("coverage matrix: {e}")))?;
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn load(path: &Path) -> Result<CoverageMatrix> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Canonical serialization; fixtures are stored in exactly this form so
    /// load-then-save is byte-identical.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("matrix serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != COVERAGE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: COVERAGE_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if row.levels.len() != CoverageDimension::ALL.len() {
                return Err(Error::validation(
                    None,
                    format!(
                        "benchmark {:?} has {} levels, expected {}",
                        row.name,
                        row.levels.len(),
                        CoverageDimension::ALL.len()
                    ),
                ));
            }
            if !seen.insert(&row.name) {
                return Err(Error::validation(
                    None,
                    format!("duplicate benchmark {:?}", row.name),
                ));
            }
        }
        Ok(())
    }

    pub fn push(&mut self, row: BenchmarkRow) {
        self.rows.push(row);
    }

    pub fn render_markdown(&self) -> String {
        let mut out = String::from("| Benchmark |");
        for dim in CoverageDimension::ALL {
            out.push_str(&format!(" {} |", dim.display()));
        }
        out.push_str(" Provenance |\n|---|");
        for _ in CoverageDimension::ALL {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.name));
            for level in &row.levels {
                out.push_str(&format!(" {} |", level.symbol()));
            }
            let provenance = match row.provenance {
                Provenance::Expert => "expert",
                Provenance::Derived => "derived",
            };
            out.push_str(&format!(" {provenance} |\n"));
        }
        out
    }
}

fn exercises(scenario: &Scenario, dim: CoverageDimension) -> bool {
    match dim {
        CoverageDimension::Task => !scenario.success_criteria.is_empty(),
        CoverageDimension::Tool => scenario.axes.interface_type != "none",
        CoverageDimension::LongHorizon => scenario.axes.interaction_horizon >= 6,
        CoverageDimension::Factuality => {
            scenario.target_failure_types.contains(&FailureClass::HT)
        }
        CoverageDimension::Adversarial => {
            scenario.category == Category::Adversarial || !scenario.injections().is_empty()
        }
        CoverageDimension::Operational => {
            scenario.category == Category::Operational || !scenario.stressors().is_empty()
        }
        CoverageDimension::Social => {
            scenario.category == Category::Social
                || scenario.axes.social_sensitivity != SocialSensitivity::None
        }
        CoverageDimension::Risk => scenario.risk_weight >= 4,
    }
}

/// Derive a coverage row for a suite: primary when at least a quarter of
/// scenarios exercise the dimension, partial when at least one does.
pub fn audit_suite(suite: &Suite) -> BenchmarkRow {
    let total = suite.scenarios.len();
    let levels = CoverageDimension::ALL
        .iter()
        .map(|dim| {
            let hits = suite
                .scenarios
                .iter()
                .filter(|s| exercises(s, *dim))
                .count();
            if hits * PRIMARY_SHARE_DEN >= total * PRIMARY_SHARE_NUM && hits > 0 {
                CoverageLevel::Primary
            } else if hits > 0 {
                CoverageLevel::Partial
            } else {
                CoverageLevel::Minimal
            }
        })
        .collect();
    BenchmarkRow {
        name: suite.suite_id.clone(),
        provenance: Provenance::Derived,
        levels,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageGap {
    pub dimension: CoverageDimension,
    pub minimal_count: usize,
    pub partial_count: usize,
}

/// Dimensions with no primary-coverage row, worst first: most minimal
/// entries, then canonical column order.
pub fn gap_report(matrix: &CoverageMatrix) -> Vec<CoverageGap> {
    let mut gaps = Vec::new();
    for dim in CoverageDimension::ALL {
        let mut primary = 0usize;
        let mut partial = 0usize;
        let mut minimal = 0usize;
        for row in &matrix.rows {
            match row.level(dim) {
                CoverageLevel::Primary => primary += 1,
                CoverageLevel::Partial => partial += 1,
                CoverageLevel::Minimal => minimal += 1,
            }
        }
        if primary == 0 {
            gaps.push(CoverageGap {
                dimension: dim,
                minimal_count: minimal,
                partial_count: partial,
            });
        }
    }
    gaps.sort_by(|a, b| {
        b.minimal_count
            .cmp(&a.minimal_count)
            .then_with(|| a.dimension.column().cmp(&b.dimension.column()))
    });
    gaps
}

pub fn render_gaps_markdown(gaps: &[CoverageGap]) -> String {
    if gaps.is_empty() {
        return "All dimensions have primary coverage.\n".to_string();
    }
    let mut out = String::from("| Gap | Minimal rows | Partial rows |\n|---|---|---|\n");
    for gap in gaps {
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            gap.dimension.display(),
            gap.minimal_count,
            gap.partial_count
        ));
    }
    out
}
