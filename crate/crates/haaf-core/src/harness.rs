//! Whole-suite execution: every scenario, one fresh agent each, one shared
//! guardrail configuration, scored as it goes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::AgentProvider;
use crate::attribution::{evaluate, ScenarioOutcome};
use crate::error::{Error, Result};
use crate::factory::FactoryConfig;
use crate::guardrails::GuardrailSettings;
use crate::sampling::SamplerConfig;
use crate::scenario::Suite;
use crate::world::{run_scenario, Trajectory, WorldLibrary};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// One configuration document for the whole pipeline: sampler weights,
/// guardrail middleware, and improvement-loop thresholds. Sections omitted
/// from the file take their documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub guardrails: GuardrailSettings,
    #[serde(default)]
    pub factory: FactoryConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            sampler: SamplerConfig::default(),
            guardrails: GuardrailSettings::default(),
            factory: FactoryConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<HarnessConfig> {
        let config: HarnessConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: CONFIG_SCHEMA_VERSION,
                found: config.schema_version,
            });
        }
        config.sampler.validate()?;
        config.factory.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<HarnessConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub suite_id: String,
    pub agent_identity: String,
    /// Active guardrail names, e.g. ["firewall", "gate"].
    pub guardrails: Vec<String>,
    pub outcomes: Vec<ScenarioOutcome>,
    pub trajectories: Vec<Trajectory>,
}

pub fn run_suite(
    suite: &Suite,
    library: &WorldLibrary,
    provider: &dyn AgentProvider,
    settings: &GuardrailSettings,
) -> Result<SuiteRun> {
    let chain = settings.build();
    let mut outcomes = Vec::with_capacity(suite.scenarios.len());
    let mut trajectories = Vec::with_capacity(suite.scenarios.len());
    for scenario in &suite.scenarios {
        let fixture = library.resolve(&scenario.world_fixture)?;
        let mut agent = provider.agent_for(scenario)?;
        let trajectory = run_scenario(scenario, fixture, agent.as_mut(), &chain)?;
        trajectory.check_invariants()?;
        outcomes.push(evaluate(scenario, fixture, &trajectory));
        trajectories.push(trajectory);
    }
    Ok(SuiteRun {
        suite_id: suite.suite_id.clone(),
        agent_identity: provider.identity(),
        guardrails: settings.active_names().iter().map(|s| s.to_string()).collect(),
        outcomes,
        trajectories,
    })
}
