//! Deterministic evaluation harness for tool-using agents.
//!
//! The crate models an evaluation as a pipeline:
//!
//! 1. [`scenario`] declares typed scenarios over seven risk axes and groups
//!    them into suites; [`world`] executes them against a sandboxed world of
//!    files, documents, tables, and an outbox.
//! 2. [`agent`] supplies the scripted reference agent (with switchable
//!    compliance flaws) plus a record/replay transport for driving a real
//!    chat endpoint deterministically.
//! 3. [`guardrails`] wraps untrusted tool output and gates side effects;
//!    [`attribution`] assigns each failed trajectory a failure class from
//!    causal signatures over the event log.
//! 4. [`metrics`] aggregates outcomes with exact rational arithmetic,
//!    [`sampling`] selects risk-weighted scenario subsets under a budget,
//!    [`coverage`] audits axis coverage against adjacent benchmarks,
//!    [`lint`] statically checks deployment policies, and [`factory`] runs
//!    the measure/harden improvement loop that [`report`] renders.
//!
//! Everything is deterministic by construction: ordered maps throughout, no
//! wall-clock reads in any artifact unless explicitly stamped, and exact
//! rationals for every reported rate.

pub mod agent;
pub mod attribution;
pub mod coverage;
pub mod directive;
pub mod error;
pub mod factory;
pub mod fixtures;
pub mod guardrails;
pub mod harness;
pub mod lint;
pub mod metrics;
pub mod report;
pub mod sampling;
pub mod scenario;
pub mod world;

pub use agent::{
    AgentAction, AgentPolicy, AgentProvider, Cassette, ReferenceAgent, ReferenceProvider,
    VulnerabilitySwitches,
};
pub use attribution::{attribute, Attribution};
pub use error::{Error, ErrorKind, Result};
pub use factory::{run_factory, FactoryConfig, FactoryState};
pub use guardrails::{GateSettings, GuardrailSettings};
pub use harness::{run_suite, HarnessConfig, SuiteRun};
pub use metrics::{MeasurementVector, Rational, SuiteMetrics};
pub use sampling::{Manifold, SamplerConfig, Selection};
pub use scenario::{Category, DeploymentPrior, FailureClass, Scenario, Suite, ToolName};
pub use world::{
    run_scenario, ToolCall, Trajectory, TrajectoryEvent, WorldFixture, WorldLibrary,
};
