//! Embedded reference artifacts: the 24-scenario office suite, its world
//! fixture, a deployment prior, a coverage matrix for adjacent benchmarks,
//! and a policy bundle for the static linter.
//!
//! Everything here is compiled in via `include_str!` so the library stays
//! usable without a checkout of the `fixtures/` tree, and so tests pin the
//! exact bytes the CLI ships with.

use crate::error::Result;
use crate::factory::FactoryConfig;
use crate::harness::HarnessConfig;
use crate::scenario::{DeploymentPrior, Suite};
use crate::world::{WorldFixture, WorldLibrary};

/// The 24-scenario reference suite (8 benign, 8 adversarial, 4 operational,
/// 4 social), all bound to the `office` world fixture.
pub const REFERENCE_SUITE_JSON: &str = include_str!("../../../fixtures/reference/suite.json");

/// The shared office world: files, searchable documents, and database tables
/// that every reference scenario runs against.
pub const OFFICE_WORLD_JSON: &str =
    include_str!("../../../fixtures/reference/worlds/office.json");

/// Deployment prior matching the reference suite partitioned by category and
/// environmental stress (six regions).
pub const REFERENCE_PRIOR_JSON: &str = include_str!("../../../fixtures/reference/prior.json");

/// Expert-judged coverage rows for six adjacent benchmarks.
pub const COVERAGE_MATRIX_JSON: &str = include_str!("../../../fixtures/coverage/benchmarks.json");

/// A deliberately flawed deployment policy that trips every lint rule.
pub const BASELINE_POLICY_JSON: &str = include_str!("../../../fixtures/policy/baseline.json");

/// Default improvement-loop thresholds used by the CLI when no config file
/// is given.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../../fixtures/config/default.json");

/// Parse the embedded reference suite. Panics only if the embedded fixture
/// itself is malformed, which the test suite guards against.
pub fn reference_suite() -> Suite {
    Suite::from_json(REFERENCE_SUITE_JSON).expect("embedded reference suite must parse")
}

/// Resolve one of the embedded world fixtures by id.
pub fn reference_world(id: &str) -> Result<WorldFixture> {
    let library = reference_library();
    library.resolve(id).cloned()
}

/// Library containing every embedded world fixture.
pub fn reference_library() -> WorldLibrary {
    let mut library = WorldLibrary::new();
    let office =
        WorldFixture::from_json(OFFICE_WORLD_JSON).expect("embedded office world must parse");
    library
        .insert(office)
        .expect("embedded world ids are unique");
    library
}

/// Parse the embedded deployment prior.
pub fn reference_prior() -> DeploymentPrior {
    DeploymentPrior::from_json(REFERENCE_PRIOR_JSON).expect("embedded prior must parse")
}

/// Parse the embedded default pipeline config.
pub fn default_config() -> HarnessConfig {
    HarnessConfig::from_json(DEFAULT_CONFIG_JSON).expect("embedded default config must parse")
}

/// Improvement-loop thresholds from the embedded default config.
pub fn default_factory_config() -> FactoryConfig {
    default_config().factory
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_artifacts_parse_and_validate() {
        let suite = reference_suite();
        assert_eq!(suite.scenarios.len(), 24);
        let library = reference_library();
        assert!(library.resolve("office").is_ok());
        let prior = reference_prior();
        assert_eq!(prior.regions.len(), 6);
        let config = default_factory_config();
        config.validate().expect("default config within bounds");
    }

    #[test]
    fn every_reference_scenario_resolves_its_world() {
        let suite = reference_suite();
        for s in &suite.scenarios {
            assert!(
                reference_world(&s.world_fixture).is_ok(),
                "{} names a missing world {:?}",
                s.id,
                s.world_fixture
            );
        }
    }

    #[test]
    fn unknown_world_id_is_a_resolution_error() {
        assert!(reference_world("warehouse").is_err());
    }
}
