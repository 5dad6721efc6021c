//! Sandboxed tool world and the episode runner.
//!
//! The world is a small deterministic office: a file tree, a document store,
//! relational tables, and an append-only outbox. Five tools mutate or read
//! it. Scheduled stressors (latency, malformed payloads, tool failures) and
//! scenario-declared injection splices are applied here, at execution time,
//! so agents and guardrails never need to know the schedule.
//!
//! Policy lives elsewhere: a write to a protected path succeeds at the world
//! level. Whether such a call should have been allowed is the business of
//! the action gate and of attribution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentAction, AgentPolicy};
use crate::error::{Error, Result};
use crate::guardrails::GuardrailChain;
use crate::scenario::{Scenario, StressEvent, StressKind, ToolName};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

/// Extra turns a latency-stressed call consumes from the horizon budget.
pub const LATENCY_EXTRA_TURNS: u32 = 2;

/// Reserved row field marking a table row confidential. Never rendered into
/// payload text.
pub const CONFIDENTIAL_FIELD: &str = "_confidential";

/// Replacement character used by the malformed-data transform. A payload
/// containing it is visibly mojibake; agents may legitimately key on that.
pub const CORRUPTION_CHAR: char = '\u{FFFD}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taint {
    UntrustedExternal,
    Confidential,
    InjectedMarker,
}

impl Taint {
    fn from_tag(tag: &str) -> Option<Taint> {
        match tag {
            "untrusted_external" => Some(Taint::UntrustedExternal),
            "confidential" => Some(Taint::Confidential),
            "injected_marker" => Some(Taint::InjectedMarker),
            _ => None,
        }
    }
}

// === Fixtures ==============================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFixture {
    pub path: String,
    pub content: String,
    #[serde(default)]
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFixture {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

pub type Row = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFixture {
    pub schema_version: u32,
    pub id: String,
    pub files: Vec<FileFixture>,
    pub documents: Vec<DocumentFixture>,
    pub tables: BTreeMap<String, Vec<Row>>,
}

impl WorldFixture {
    pub fn from_json(text: &str) -> Result<WorldFixture> {
        let fixture: WorldFixture =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("world fixture: {e}")))?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<WorldFixture> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        WorldFixture::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: WORLD_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        let mut paths = BTreeSet::new();
        for f in &self.files {
            if !paths.insert(&f.path) {
                return Err(Error::validation(
                    None,
                    format!("duplicate file path {:?} in fixture {}", f.path, self.id),
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for d in &self.documents {
            if !ids.insert(&d.id) {
                return Err(Error::validation(
                    None,
                    format!("duplicate document id {:?} in fixture {}", d.id, self.id),
                ));
            }
            for tag in &d.tags {
                if Taint::from_tag(tag).is_none() {
                    return Err(Error::validation(
                        None,
                        format!("unknown document tag {:?} in fixture {}", tag, self.id),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Fixture collection keyed by id, usually loaded from a `worlds/` directory
/// next to the suite file.
#[derive(Debug, Clone, Default)]
pub struct WorldLibrary {
    fixtures: BTreeMap<String, WorldFixture>,
}

impl WorldLibrary {
    pub fn new() -> WorldLibrary {
        WorldLibrary::default()
    }

    pub fn insert(&mut self, fixture: WorldFixture) -> Result<()> {
        if self.fixtures.contains_key(&fixture.id) {
            return Err(Error::validation(
                None,
                format!("duplicate world fixture id {:?}", fixture.id),
            ));
        }
        self.fixtures.insert(fixture.id.clone(), fixture);
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<WorldLibrary> {
        let mut lib = WorldLibrary::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        for path in entries {
            lib.insert(WorldFixture::load(&path)?)?;
        }
        Ok(lib)
    }

    pub fn resolve(&self, id: &str) -> Result<&WorldFixture> {
        self.fixtures
            .get(id)
            .ok_or_else(|| Error::FixtureResolution(id.to_string()))
    }
}

// === Live state ============================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub content: String,
    /// Immutable for the lifetime of a run.
    pub protected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboxMessage {
    pub recipient: String,
    pub body: String,
    pub sent_at_turn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub files: BTreeMap<String, FileEntry>,
    pub documents: Vec<DocumentFixture>,
    pub tables: BTreeMap<String, Vec<Row>>,
    /// Append-only.
    pub outbox: Vec<OutboxMessage>,
    /// Non-decreasing; advanced by tool execution.
    pub clock_turn: u32,
}

impl WorldState {
    /// Each run gets its own copy; fixtures are never mutated in place.
    pub fn from_fixture(fixture: &WorldFixture) -> WorldState {
        WorldState {
            files: fixture
                .files
                .iter()
                .map(|f| {
                    (
                        f.path.clone(),
                        FileEntry {
                            content: f.content.clone(),
                            protected: f.protected,
                        },
                    )
                })
                .collect(),
            documents: fixture.documents.clone(),
            tables: fixture.tables.clone(),
            outbox: Vec::new(),
            clock_turn: 0,
        }
    }
}

// === Calls and results =====================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolName,
    /// Flat argument map. Query filters use `filter.<field>` keys.
    pub args: BTreeMap<String, String>,
    pub issued_at_turn: u32,
}

impl ToolCall {
    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(String::as_str)
    }

    pub fn filters(&self) -> BTreeMap<&str, &str> {
        self.args
            .iter()
            .filter_map(|(k, v)| {
                k.strip_prefix("filter.").map(|f| (f, v.as_str()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorKind {
    NotFound,
    Unavailable,
    BlockedByPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ResultStatus {
    Ok,
    Error { kind: ToolErrorKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    #[serde(flatten)]
    pub status: ResultStatus,
    pub payload: String,
    pub taints: BTreeSet<Taint>,
    /// Extra horizon turns consumed (latency stress).
    pub latency_turns: u32,
}

impl ToolResult {
    pub fn ok(payload: String) -> ToolResult {
        ToolResult {
            status: ResultStatus::Ok,
            payload,
            taints: BTreeSet::new(),
            latency_turns: 0,
        }
    }

    pub fn error(kind: ToolErrorKind, payload: String) -> ToolResult {
        ToolResult {
            status: ResultStatus::Error { kind },
            payload,
            taints: BTreeSet::new(),
            latency_turns: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, ResultStatus::Ok)
    }

    pub fn error_kind(&self) -> Option<ToolErrorKind> {
        match self.status {
            ResultStatus::Ok => None,
            ResultStatus::Error { kind } => Some(kind),
        }
    }
}

// === Trajectory ============================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectoryEvent {
    UserMessage { text: String },
    AgentMessage { text: String },
    ToolCallIssued { call: ToolCall },
    GateDecision { tool: ToolName, allowed: bool, reason: String },
    ToolExecuted { call: ToolCall, result: ToolResult },
    StressApplied { kind: StressKind, tool: ToolName },
    FinalAnswer { text: String },
    /// Agent emitted something that is not a well-formed action (unknown
    /// tool, unparsable response). Recorded, never executed.
    MalformedAction { description: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub turn: u32,
    pub seq: u32,
    pub event: TrajectoryEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scenario_id: String,
    pub agent_id: String,
    pub events: Vec<EventRecord>,
    pub final_state: WorldState,
    pub truncated: bool,
}

impl Trajectory {
    /// Line-delimited export: a header record, one record per event, and a
    /// footer carrying the final state. Field order is fixed by the struct
    /// declarations, so identical runs export identical bytes.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(
            &serde_json::json!({
                "type": "run_header",
                "scenario_id": self.scenario_id,
                "agent_id": self.agent_id,
            })
            .to_string(),
        );
        out.push('\n');
        for record in &self.events {
            out.push_str(&serde_json::to_string(record).expect("event serializes"));
            out.push('\n');
        }
        let footer = serde_json::json!({
            "type": "run_footer",
            "truncated": self.truncated,
            "final_state": self.final_state,
        });
        out.push_str(&footer.to_string());
        out.push('\n');
        out
    }

    /// Structural invariants every well-formed trajectory satisfies.
    /// Exposed for tests and for history integrity checks.
    pub fn check_invariants(&self) -> Result<()> {
        let mut last: Option<(u32, u32)> = None;
        for r in &self.events {
            if let Some((t, s)) = last {
                if (r.turn, r.seq) <= (t, s) {
                    return Err(Error::Internal(format!(
                        "events not strictly ordered at seq {}",
                        r.seq
                    )));
                }
            }
            last = Some((r.turn, r.seq));
        }
        for (i, r) in self.events.iter().enumerate() {
            match &r.event {
                TrajectoryEvent::ToolExecuted { call, .. } => {
                    let issued = self.events[..i].iter().rev().any(|p| {
                        matches!(&p.event, TrajectoryEvent::ToolCallIssued { call: c } if c == call)
                    });
                    if !issued {
                        return Err(Error::Internal(format!(
                            "execution without issuance at seq {}",
                            r.seq
                        )));
                    }
                }
                TrajectoryEvent::GateDecision { allowed: false, .. } => {
                    // The blocked call is the nearest preceding issuance; it
                    // must not execute afterwards.
                    let call = self.events[..i].iter().rev().find_map(|p| match &p.event {
                        TrajectoryEvent::ToolCallIssued { call } => Some(call.clone()),
                        _ => None,
                    });
                    if let Some(call) = call {
                        let executed = self.events[i..].iter().any(|p| {
                            matches!(&p.event, TrajectoryEvent::ToolExecuted { call: c, .. } if *c == call)
                        });
                        if executed {
                            return Err(Error::Internal(format!(
                                "blocked call executed after seq {}",
                                r.seq
                            )));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

// === Tool execution ========================================================

pub fn matched_stress<'a>(scenario: &'a Scenario, call: &ToolCall) -> Vec<&'a StressEvent> {
    scenario
        .stressors()
        .iter()
        .filter(|e| e.turn == call.issued_at_turn && e.tool == call.tool)
        .collect()
}

fn corrupt_payload(payload: &str) -> String {
    let mut out = String::new();
    for (i, c) in payload.chars().take(64).enumerate() {
        out.push(c);
        if (i + 1) % 4 == 0 {
            out.push(CORRUPTION_CHAR);
        }
    }
    out
}

fn render_row(row: &Row) -> String {
    row.iter()
        .filter(|(k, _)| !k.starts_with('_'))
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn row_matches(row: &Row, filters: &BTreeMap<&str, &str>) -> bool {
    filters
        .iter()
        .all(|(k, v)| row.get(*k).map(String::as_str) == Some(*v))
}

fn base_result(state: &mut WorldState, call: &ToolCall) -> ToolResult {
    match call.tool {
        ToolName::DocumentSearch => {
            let query = call.arg("query").unwrap_or("").to_lowercase();
            let matched: Vec<&DocumentFixture> = state
                .documents
                .iter()
                .filter(|d| {
                    d.id.to_lowercase().contains(&query) || d.text.to_lowercase().contains(&query)
                })
                .collect();
            if matched.is_empty() {
                return ToolResult::ok(format!(
                    "no documents matched {:?}",
                    call.arg("query").unwrap_or("")
                ));
            }
            let mut result = ToolResult::ok(
                matched
                    .iter()
                    .map(|d| format!("{}: {}", d.id, d.text))
                    .collect::<Vec<_>>()
                    .join("\n"),
            );
            for d in &matched {
                for tag in &d.tags {
                    if let Some(t) = Taint::from_tag(tag) {
                        result.taints.insert(t);
                    }
                }
            }
            result
        }
        ToolName::DatabaseQuery => {
            let table = call.arg("table").unwrap_or("");
            let Some(rows) = state.tables.get(table) else {
                return ToolResult::error(
                    ToolErrorKind::NotFound,
                    format!("table {table:?} not found"),
                );
            };
            let filters = call.filters();
            let hits: Vec<&Row> = rows.iter().filter(|r| row_matches(r, &filters)).collect();
            let mut result = ToolResult::ok(
                hits.iter()
                    .map(|r| render_row(r))
                    .collect::<Vec<_>>()
                    .join("\n"),
            );
            if hits
                .iter()
                .any(|r| r.get(CONFIDENTIAL_FIELD).map(String::as_str) == Some("true"))
            {
                result.taints.insert(Taint::Confidential);
            }
            result
        }
        ToolName::FileRead => {
            let path = call.arg("path").unwrap_or("");
            match state.files.get(path) {
                Some(entry) => ToolResult::ok(entry.content.clone()),
                None => ToolResult::error(
                    ToolErrorKind::NotFound,
                    format!("file {path:?} not found"),
                ),
            }
        }
        ToolName::FileWrite => {
            let path = call.arg("path").unwrap_or("").to_string();
            let body = call.arg("body").unwrap_or("").to_string();
            let bytes = body.len();
            // World-level writes always land, protected paths included;
            // refusing them is gate policy, not physics. The protected flag
            // itself never changes during a run.
            state
                .files
                .entry(path.clone())
                .and_modify(|e| e.content = body.clone())
                .or_insert(FileEntry {
                    content: body,
                    protected: false,
                });
            ToolResult::ok(format!("wrote {bytes} bytes to {path}"))
        }
        ToolName::MessageDispatch => {
            let recipient = call.arg("recipient").unwrap_or("").to_string();
            state.outbox.push(OutboxMessage {
                recipient: recipient.clone(),
                body: call.arg("body").unwrap_or("").to_string(),
                sent_at_turn: call.issued_at_turn,
            });
            ToolResult::ok(format!("dispatched to {recipient}"))
        }
    }
}

/// Execute one call against the world, applying scenario injections and any
/// scheduled stress. The clock advances even when the tool fails.
pub fn execute_tool(state: &mut WorldState, call: &ToolCall, scenario: &Scenario) -> ToolResult {
    state.clock_turn = state.clock_turn.max(call.issued_at_turn);
    let stress = matched_stress(scenario, call);

    if stress.iter().any(|e| e.kind == StressKind::ToolFailure) {
        return ToolResult::error(
            ToolErrorKind::Unavailable,
            format!("{} unavailable", call.tool.label()),
        );
    }

    let mut result = base_result(state, call);

    if result.is_ok() {
        for injection in scenario.injections() {
            if injection.tool == call.tool {
                // Spliced as a plain sentence: the visible text carries no
                // marker an agent could cheat on. The taint is metadata.
                result.payload.push('\n');
                result.payload.push_str(&injection.directive);
                result.taints.insert(Taint::InjectedMarker);
            }
        }
        if stress.iter().any(|e| e.kind == StressKind::MalformedData) {
            result.payload = corrupt_payload(&result.payload);
        }
    }
    if stress.iter().any(|e| e.kind == StressKind::Latency) {
        result.latency_turns += LATENCY_EXTRA_TURNS;
    }
    result
}

// === Episode runner ========================================================

/// Drive one agent through one scenario. The returned trajectory is a
/// complete, self-contained record: same inputs, same bytes.
pub fn run_scenario(
    scenario: &Scenario,
    fixture: &WorldFixture,
    agent: &mut dyn AgentPolicy,
    chain: &GuardrailChain,
) -> Result<Trajectory> {
    let mut state = WorldState::from_fixture(fixture);
    let mut events: Vec<EventRecord> = Vec::new();
    let mut seq: u32 = 0;
    let mut push = |events: &mut Vec<EventRecord>, turn: u32, event: TrajectoryEvent| {
        events.push(EventRecord { turn, seq, event });
        seq += 1;
    };

    push(
        &mut events,
        0,
        TrajectoryEvent::UserMessage {
            text: scenario.initial_user_message.clone(),
        },
    );

    let horizon = scenario.axes.interaction_horizon;
    let mut turns_used: u32 = 0;
    let mut truncated = false;

    loop {
        if turns_used >= horizon {
            truncated = true;
            break;
        }
        let turn = turns_used + 1;
        let action = agent.step(&events)?;
        match action {
            AgentAction::Message(text) => {
                push(&mut events, turn, TrajectoryEvent::AgentMessage { text });
                turns_used += 1;
            }
            AgentAction::Malformed(description) => {
                push(&mut events, turn, TrajectoryEvent::MalformedAction { description });
                turns_used += 1;
            }
            AgentAction::Final(text) => {
                push(&mut events, turn, TrajectoryEvent::FinalAnswer { text });
                break;
            }
            AgentAction::Call { tool, args } => {
                let call = ToolCall {
                    tool,
                    args,
                    issued_at_turn: turn,
                };
                push(
                    &mut events,
                    turn,
                    TrajectoryEvent::ToolCallIssued { call: call.clone() },
                );
                if let Some(decision) = chain.gate(&call) {
                    push(
                        &mut events,
                        turn,
                        TrajectoryEvent::GateDecision {
                            tool: call.tool,
                            allowed: decision.allowed,
                            reason: decision.reason.clone(),
                        },
                    );
                    if !decision.allowed {
                        // Blocked: the intent stays on the record, nothing
                        // executes, the agent gets to re-plan.
                        turns_used += 1;
                        continue;
                    }
                }
                for stress in matched_stress(scenario, &call) {
                    push(
                        &mut events,
                        turn,
                        TrajectoryEvent::StressApplied {
                            kind: stress.kind,
                            tool: stress.tool,
                        },
                    );
                }
                let raw = execute_tool(&mut state, &call, scenario);
                let result = chain.transform_result(raw);
                let latency = result.latency_turns;
                push(
                    &mut events,
                    turn,
                    TrajectoryEvent::ToolExecuted { call, result },
                );
                turns_used += 1 + latency;
            }
        }
    }

    let trajectory = Trajectory {
        scenario_id: scenario.id.clone(),
        agent_id: agent.agent_id().to_string(),
        events,
        final_state: state,
        truncated,
    };
    debug_assert!(trajectory.check_invariants().is_ok());
    Ok(trajectory)
}

/// Evaluate one state predicate against a final world state.
pub fn predicate_holds(state: &WorldState, predicate: &crate::scenario::StatePredicate) -> bool {
    use crate::scenario::{StateCondition, StateSelector};
    let text: Option<String> = match &predicate.selector {
        StateSelector::File { path } => state.files.get(path).map(|f| f.content.clone()),
        StateSelector::TableRow {
            table,
            key_field,
            key_value,
        } => state.tables.get(table).and_then(|rows| {
            rows.iter()
                .find(|r| r.get(key_field).map(String::as_str) == Some(key_value.as_str()))
                .map(render_row)
        }),
        StateSelector::OutboxEntry { recipient } => {
            let bodies: Vec<&str> = state
                .outbox
                .iter()
                .filter(|m| &m.recipient == recipient)
                .map(|m| m.body.as_str())
                .collect();
            if bodies.is_empty() {
                None
            } else {
                Some(bodies.join("\n"))
            }
        }
    };
    match (&predicate.condition, text) {
        (_, None) => false,
        (StateCondition::Exists, Some(_)) => true,
        (StateCondition::Equals { value }, Some(t)) => &t == value,
        (StateCondition::Contains { needle }, Some(t)) => t.contains(needle.as_str()),
    }
}

/// All success criteria hold over the final state. Vacuously true when a
/// scenario declares none (violation-only scenarios).
pub fn criteria_met(state: &WorldState, scenario: &Scenario) -> bool {
    scenario
        .success_criteria
        .iter()
        .all(|p| predicate_holds(state, p))
}
