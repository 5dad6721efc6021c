//! `haaf`: command-line front end for the evaluation harness.
//!
//! Subcommands mirror the pipeline stages: `audit` (benchmark coverage),
//! `sample` (risk-weighted scenario selection), `lint` (policy analysis),
//! `run` (execute a suite), `factory` (measure/harden loop), and `report`
//! (render saved artifacts). Exit codes: 0 success, 1 validation error,
//! 2 run error, 3 when a factory run ends exhausted.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use haaf_core::agent::{
    ChatTransport, EndpointAgent, EndpointConfig, EndpointReplayProvider, ReferenceProvider,
    VulnerabilitySwitches,
};
use haaf_core::attribution::evaluate;
use haaf_core::coverage::{audit_suite, gap_report, render_gaps_markdown, CoverageMatrix};
use haaf_core::error::{Error, ErrorKind, Result};
use haaf_core::factory::{run_factory, CycleRecord, CycleVerdict, FactoryState};
use haaf_core::fixtures;
use haaf_core::guardrails::GuardrailSettings;
use haaf_core::harness::{run_suite, HarnessConfig, SuiteRun};
use haaf_core::lint::{lint, PolicyArtifacts};
use haaf_core::metrics::percent_string;
use haaf_core::report::{
    render_comparison_markdown, render_report_markdown, RunReport, REPORT_SCHEMA_VERSION,
};
use haaf_core::sampling::Manifold;
use haaf_core::scenario::{partition, AxisBins, AxisName, DeploymentPrior, Suite};
use haaf_core::world::{run_scenario, WorldLibrary};

#[derive(Parser)]
#[command(name = "haaf", version, about = "Deterministic evaluation harness for tool-using agents")]
struct Cli {
    /// Pipeline configuration file (sampler, guardrails, factory sections).
    /// Defaults to the embedded configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite file, or "reference" for the embedded 24-scenario suite.
    #[arg(long, default_value = "reference")]
    suite: String,
    /// World fixture directory; defaults to `worlds/` next to the suite file.
    #[arg(long)]
    worlds: Option<PathBuf>,
}

#[derive(Args)]
struct AgentArgs {
    /// Agent under evaluation: "reference" (scripted surrogate) or
    /// "endpoint" (chat endpoint via HAAF_ENDPOINT_URL / HAAF_ENDPOINT_KEY).
    #[arg(long, default_value = "reference")]
    agent: String,
    /// Reference-agent compliance flaws: "all-on" or "all-off".
    #[arg(long, default_value = "all-on")]
    switches: String,
    /// Model name sent to the endpoint.
    #[arg(long, default_value = "default")]
    model: String,
    /// Cassette directory for endpoint record/replay (one file per scenario).
    #[arg(long)]
    cassette_dir: Option<PathBuf>,
    /// Replay recorded endpoint exchanges instead of calling the network.
    #[arg(long)]
    replay: bool,
    /// Record live endpoint exchanges into --cassette-dir.
    #[arg(long)]
    record: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Audit benchmark coverage and report dimensions lacking primary focus.
    Audit {
        /// Coverage matrix file; defaults to the embedded benchmark matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Also derive and append a row for this suite.
        #[arg(long)]
        suite: Option<String>,
        /// Write the (possibly extended) matrix here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Partition a suite into regions and select a risk-weighted subset.
    Sample {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Deployment prior file overriding count-based region relevance.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Comma-separated binning axes.
        #[arg(long, default_value = "category,environmental_stress")]
        bins: String,
        /// Selection size; defaults to the sampler config, then to all.
        #[arg(long)]
        budget: Option<usize>,
        /// Write the selection here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lint deployment policy artifacts for configuration weaknesses.
    Lint {
        #[arg(long)]
        policy: PathBuf,
        /// Write findings here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a suite and emit a report.
    Run {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Guardrail middleware: none, firewall, gate, or hardened.
        #[arg(long)]
        guardrails: Option<String>,
        /// Directory for report.json and trajectories.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write report.md next to report.json.
        #[arg(long)]
        markdown: bool,
        /// Stamp the report with the wall clock (breaks bytewise
        /// reproducibility by design).
        #[arg(long)]
        stamp: bool,
    },
    /// Run the measure/harden improvement loop until convergence.
    Factory {
        #[command(flatten)]
        suite: SuiteArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Directory for factory_state.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render saved reports or factory states as markdown.
    Report {
        /// A single run report to render.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Baseline report for a side-by-side comparison.
        #[arg(long, requires = "hardened")]
        baseline: Option<PathBuf>,
        /// Hardened report for a side-by-side comparison.
        #[arg(long, requires = "baseline")]
        hardened: Option<PathBuf>,
        /// A factory state whose cycle history should be rendered.
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Run => 2,
            };
            std::process::exit(code);
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => fixtures::default_config(),
    };
    match cli.command {
        Command::Audit { matrix, suite, out } => cmd_audit(matrix, suite, out),
        Command::Sample { suite, prior, bins, budget, out } => {
            cmd_sample(&config, suite, prior, &bins, budget, out)
        }
        Command::Lint { policy, out } => cmd_lint(&policy, out),
        Command::Run { suite, agent, guardrails, out, markdown, stamp } => {
            cmd_run(&config, suite, agent, guardrails, out, markdown, stamp)
        }
        Command::Factory { suite, agent, out } => cmd_factory(&config, suite, agent, out),
        Command::Report { run, baseline, hardened, state } => {
            cmd_report(run, baseline, hardened, state)
        }
    }
}

// === Shared loading ========================================================

fn load_suite(args: &SuiteArgs) -> Result<(Suite, WorldLibrary)> {
    if args.suite == "reference" {
        return Ok((fixtures::reference_suite(), fixtures::reference_library()));
    }
    let path = PathBuf::from(&args.suite);
    if !path.is_file() {
        return Err(Error::validation(
            None,
            format!("suite file not found: {}", path.display()),
        ));
    }
    let suite = Suite::load(&path)?;
    let worlds_dir = match &args.worlds {
        Some(dir) => dir.clone(),
        None => path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("worlds"),
    };
    let library = WorldLibrary::load_dir(&worlds_dir)?;
    Ok((suite, library))
}

fn guardrail_settings(flag: Option<&str>, config: &HarnessConfig) -> Result<GuardrailSettings> {
    match flag {
        None => Ok(config.guardrails.clone()),
        Some("none") => Ok(GuardrailSettings::none()),
        Some("firewall") => Ok(GuardrailSettings::with_firewall()),
        Some("gate") => Ok(GuardrailSettings::with_gate()),
        Some("hardened") => Ok(GuardrailSettings::hardened()),
        Some(other) => Err(Error::validation(
            None,
            format!("unknown guardrail set {other:?} (expected none, firewall, gate, hardened)"),
        )),
    }
}

fn switches(flag: &str) -> Result<VulnerabilitySwitches> {
    match flag {
        "all-on" => Ok(VulnerabilitySwitches::all_on()),
        "all-off" => Ok(VulnerabilitySwitches::all_off()),
        other => Err(Error::validation(
            None,
            format!("unknown switch set {other:?} (expected all-on or all-off)"),
        )),
    }
}

fn axis(label: &str) -> Result<AxisName> {
    AxisName::ALL
        .into_iter()
        .find(|a| a.label() == label)
        .ok_or_else(|| Error::validation(None, format!("unknown binning axis {label:?}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// UTC timestamp without a clock-library dependency; stamping is explicitly
/// non-reproducible, so precision beyond seconds buys nothing.
fn utc_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = (secs / 86_400) as i64;
    let (h, m, s) = ((secs / 3600) % 24, (secs / 60) % 60, secs % 60);
    // Civil-from-days (Hinnant's algorithm), valid for the unix era.
    let z = days + 719_468;
    let era = z / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { y + 1 } else { y };
    format!("{year:04}-{month:02}-{d:02}T{h:02}:{m:02}:{s:02}Z")
}

// === Subcommands ===========================================================

fn cmd_audit(
    matrix_path: Option<PathBuf>,
    suite: Option<String>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let mut matrix = match matrix_path {
        Some(path) => CoverageMatrix::load(&path)?,
        None => CoverageMatrix::from_json(fixtures::COVERAGE_MATRIX_JSON)?,
    };
    if let Some(suite) = suite {
        let args = SuiteArgs { suite, worlds: None };
        let (suite, _) = load_suite(&args)?;
        matrix.push(audit_suite(&suite));
        matrix.validate()?;
    }
    print!("{}", matrix.render_markdown());
    println!();
    print!("{}", render_gaps_markdown(&gap_report(&matrix)));
    if let Some(path) = out {
        write_text(&path, &matrix.to_json())?;
    }
    Ok(0)
}

fn cmd_sample(
    config: &HarnessConfig,
    suite_args: SuiteArgs,
    prior: Option<PathBuf>,
    bins: &str,
    budget: Option<usize>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let (suite, _) = load_suite(&suite_args)?;
    let prior = match prior {
        Some(path) => Some(DeploymentPrior::load(&path)?),
        None => None,
    };
    let axes = bins
        .split(',')
        .map(|s| axis(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let regions = partition(&suite.scenarios, &AxisBins::keeping(&axes), prior.as_ref())?;
    let manifold = Manifold::new(&suite, &regions)?;
    let mut sampler = config.sampler.clone();
    if budget.is_some() {
        sampler.budget = budget;
    }
    let selection = manifold.select_greedy(&sampler)?;
    println!(
        "selected {} of {} scenarios (objective {:.6})",
        selection.scenario_ids.len(),
        manifold.len(),
        selection.objective
    );
    println!(
        "terms: coverage {:.6}, risk {:.6}, composition {:.6}, redundancy {:.6}",
        selection.terms.coverage,
        selection.terms.risk,
        selection.terms.composition,
        selection.terms.redundancy
    );
    for id in &selection.scenario_ids {
        println!("{id}");
    }
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&selection).expect("selection serializes");
        text.push('\n');
        write_text(&path, &text)?;
    }
    Ok(0)
}

fn cmd_lint(policy_path: &Path, out: Option<PathBuf>) -> Result<i32> {
    let policy = PolicyArtifacts::load(policy_path)?;
    let findings = lint(&policy);
    if findings.is_empty() {
        println!("no findings for {}", policy.policy_id);
    } else {
        println!("| Rule | Severity | Subject | Detail |");
        println!("|---|---|---|---|");
        for f in &findings {
            println!("| {} | {} | {} | {} |", f.rule_id, f.severity, f.subject, f.detail);
        }
    }
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&findings).expect("findings serialize");
        text.push('\n');
        write_text(&path, &text)?;
    }
    Ok(0)
}

struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    key: Option<String>,
}

impl HttpTransport {
    fn from_env() -> Result<HttpTransport> {
        let url = std::env::var("HAAF_ENDPOINT_URL").map_err(|_| {
            Error::validation(None, "endpoint agent requires HAAF_ENDPOINT_URL to be set")
        })?;
        Ok(HttpTransport {
            client: reqwest::blocking::Client::new(),
            url,
            key: std::env::var("HAAF_ENDPOINT_KEY").ok(),
        })
    }
}

impl ChatTransport for HttpTransport {
    fn post(&mut self, body_json: &str) -> Result<String> {
        let mut request = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body_json.to_string());
        if let Some(key) = &self.key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Error::Endpoint(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::Endpoint(format!("unreadable response body: {e}")))?;
        if !status.is_success() {
            return Err(Error::Endpoint(format!("endpoint returned {status}: {text}")));
        }
        Ok(text)
    }
}

fn endpoint_config(model: &str) -> Result<EndpointConfig> {
    let url = std::env::var("HAAF_ENDPOINT_URL").unwrap_or_default();
    Ok(EndpointConfig {
        url,
        api_key: std::env::var("HAAF_ENDPOINT_KEY").ok(),
        model: model.to_string(),
        temperature: 0.0,
        max_retries: 2,
    })
}

/// Record mode drives episodes by hand because each cassette must be
/// flushed (and its lock released) when its episode ends.
fn run_suite_recording(
    suite: &Suite,
    library: &WorldLibrary,
    config: &EndpointConfig,
    cassette_dir: &Path,
    settings: &GuardrailSettings,
) -> Result<SuiteRun> {
    std::fs::create_dir_all(cassette_dir).map_err(|source| Error::Io {
        path: cassette_dir.display().to_string(),
        source,
    })?;
    let chain = settings.build();
    let mut outcomes = Vec::new();
    let mut trajectories = Vec::new();
    for scenario in &suite.scenarios {
        let fixture = library.resolve(&scenario.world_fixture)?;
        let cassette = cassette_dir.join(format!("{}.json", scenario.id));
        let transport = Box::new(HttpTransport::from_env()?);
        let mut agent = EndpointAgent::record(config.clone(), transport, &cassette)?;
        let trajectory = run_scenario(scenario, fixture, &mut agent, &chain)?;
        agent.finish()?;
        trajectory.check_invariants()?;
        outcomes.push(evaluate(scenario, fixture, &trajectory));
        trajectories.push(trajectory);
    }
    Ok(SuiteRun {
        suite_id: suite.suite_id.clone(),
        agent_identity: format!("endpoint:{}", config.model),
        guardrails: settings.active_names().iter().map(|s| s.to_string()).collect(),
        outcomes,
        trajectories,
    })
}

fn execute_run(
    suite: &Suite,
    library: &WorldLibrary,
    agent: &AgentArgs,
    settings: &GuardrailSettings,
) -> Result<SuiteRun> {
    match agent.agent.as_str() {
        "reference" => {
            let provider = ReferenceProvider { switches: switches(&agent.switches)? };
            run_suite(suite, library, &provider, settings)
        }
        "endpoint" => {
            let config = endpoint_config(&agent.model)?;
            if agent.replay && agent.record {
                return Err(Error::validation(None, "--replay and --record are exclusive"));
            }
            if agent.replay {
                let dir = agent.cassette_dir.clone().ok_or_else(|| {
                    Error::validation(None, "--replay requires --cassette-dir")
                })?;
                let provider = EndpointReplayProvider { config, cassette_dir: dir };
                run_suite(suite, library, &provider, settings)
            } else if agent.record {
                let dir = agent.cassette_dir.clone().ok_or_else(|| {
                    Error::validation(None, "--record requires --cassette-dir")
                })?;
                run_suite_recording(suite, library, &config, &dir, settings)
            } else {
                Err(Error::validation(
                    None,
                    "live endpoint runs must record: pass --record with --cassette-dir \
                     (or --replay to reuse a recording)",
                ))
            }
        }
        other => Err(Error::validation(
            None,
            format!("unknown agent {other:?} (expected reference or endpoint)"),
        )),
    }
}

fn cmd_run(
    config: &HarnessConfig,
    suite_args: SuiteArgs,
    agent: AgentArgs,
    guardrails: Option<String>,
    out: Option<PathBuf>,
    markdown: bool,
    stamp: bool,
) -> Result<i32> {
    let (suite, library) = load_suite(&suite_args)?;
    let settings = guardrail_settings(guardrails.as_deref(), config)?;
    let run = execute_run(&suite, &library, &agent, &settings)?;
    let timestamp = stamp.then(utc_timestamp);
    let report = RunReport::from_run(&run, timestamp);
    print!("{}", render_report_markdown(&report));
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        report.save(&dir.join("report.json"))?;
        let mut trajectories =
            serde_json::to_string_pretty(&run.trajectories).expect("trajectories serialize");
        trajectories.push('\n');
        write_text(&dir.join("trajectories.json"), &trajectories)?;
        if markdown {
            write_text(&dir.join("report.md"), &render_report_markdown(&report))?;
        }
    }
    Ok(0)
}

fn synth_report(state: &FactoryState, record: &CycleRecord) -> RunReport {
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        suite_id: state.suite_id.clone(),
        agent_identity: state.agent_identity.clone(),
        guardrails: record.active_interventions.clone(),
        timestamp: None,
        metrics: record.metrics.clone(),
        histogram: record.histogram.clone(),
        outcomes: record.outcomes.clone(),
    }
}

fn render_factory_markdown(state: &FactoryState) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Factory history: {}\n\n", state.suite_id));
    out.push_str(&format!(
        "Agent: `{}`\nConfig hash: `{}`\n\n",
        state.agent_identity, state.config_hash
    ));
    if state.cycles.is_empty() {
        out.push_str("no cycles recorded\n");
        return out;
    }
    out.push_str("| Cycle | Guardrails | SR (%) | VR (%) | RWF | Verdict | Added |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for c in &state.cycles {
        let guardrails = if c.active_interventions.is_empty() {
            "none".to_string()
        } else {
            c.active_interventions.join(", ")
        };
        let added = if c.added_interventions.is_empty() {
            "-".to_string()
        } else {
            c.added_interventions.join(", ")
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:?} | {} |\n",
            c.cycle,
            guardrails,
            percent_string(c.metrics.success_rate),
            percent_string(c.metrics.violation_rate),
            c.metrics.risk_weighted_failure.to_decimal_string(3),
            c.verdict,
            added
        ));
    }
    if state.cycles.len() >= 2 {
        let first = synth_report(state, &state.cycles[0]);
        let last = synth_report(state, state.cycles.last().expect("nonempty"));
        if let Ok(comparison) = render_comparison_markdown(&first, &last) {
            out.push('\n');
            out.push_str(&comparison);
        }
    }
    if let Some(reason) = &state.aborted {
        out.push_str(&format!("\naborted: {reason}\n"));
    }
    out
}

fn cmd_factory(
    config: &HarnessConfig,
    suite_args: SuiteArgs,
    agent: AgentArgs,
    out: Option<PathBuf>,
) -> Result<i32> {
    let (suite, library) = load_suite(&suite_args)?;
    if agent.record {
        return Err(Error::validation(
            None,
            "record mode is not available for factory runs; record each configuration \
             with `run --record`, then replay",
        ));
    }
    let state = match agent.agent.as_str() {
        "reference" => {
            let provider = ReferenceProvider { switches: switches(&agent.switches)? };
            run_factory(&suite, &library, &provider, &config.factory)?
        }
        "endpoint" => {
            let dir = agent.cassette_dir.clone().ok_or_else(|| {
                Error::validation(None, "endpoint factory runs require --replay --cassette-dir")
            })?;
            let provider = EndpointReplayProvider {
                config: endpoint_config(&agent.model)?,
                cassette_dir: dir,
            };
            run_factory(&suite, &library, &provider, &config.factory)?
        }
        other => {
            return Err(Error::validation(
                None,
                format!("unknown agent {other:?} (expected reference or endpoint)"),
            ))
        }
    };
    print!("{}", render_factory_markdown(&state));
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        state.save(&dir.join("factory_state.json"))?;
    }
    if let Some(reason) = &state.aborted {
        return Err(Error::Internal(format!("factory aborted: {reason}")));
    }
    Ok(match state.final_verdict() {
        Some(CycleVerdict::Exhausted) => 3,
        _ => 0,
    })
}

fn cmd_report(
    run: Option<PathBuf>,
    baseline: Option<PathBuf>,
    hardened: Option<PathBuf>,
    state: Option<PathBuf>,
) -> Result<i32> {
    let mut rendered = false;
    if let Some(path) = run {
        let report = RunReport::load(&path)?;
        print!("{}", render_report_markdown(&report));
        rendered = true;
    }
    if let (Some(b), Some(h)) = (baseline, hardened) {
        let baseline = RunReport::load(&b)?;
        let hardened = RunReport::load(&h)?;
        print!("{}", render_comparison_markdown(&baseline, &hardened)?);
        rendered = true;
    }
    if let Some(path) = state {
        let state = FactoryState::load(&path)?;
        print!("{}", render_factory_markdown(&state));
        rendered = true;
    }
    if !rendered {
        return Err(Error::validation(
            None,
            "nothing to render: pass --run, --baseline with --hardened, or --state",
        ));
    }
    Ok(0)
}
