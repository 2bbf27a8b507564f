//! The `mc` operator command line.
//!
//! Administrative commands speak HTTP to a gateway; `serve` runs one and
//! `demo run` drives the seeded scenario in-process.

use std::io::{Read as _, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use modelcaller_core::{CallTarget, Category};
use serde_json::{json, Value};

use crate::demo::{run_demo, DemoScenario};
use crate::gateway::{start_service, ErrorEnvelope, GatewayConfig, API_KEY_HEADER};
use crate::quality::{Behavior, Scope};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GATEWAY: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mc", version, about = "Operate model callers through their gateway")]
pub struct Cli {
    /// Gateway base URL.
    #[arg(long, global = true, env = "MC_URL", default_value = "http://127.0.0.1:8080")]
    pub url: String,
    /// API key sent as X-Api-Key.
    #[arg(long, global = true, env = "MC_API_KEY", hide_env_values = true)]
    pub key: Option<String>,
    /// Print raw JSON responses.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    #[command(subcommand)]
    Caller(CallerCmd),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Train a registration, or the caller's own aggregation parameters.
    Train {
        caller: String,
        #[arg(long)]
        target: Option<String>,
        /// Train every trainable model in the ensemble.
        #[arg(long)]
        nested: bool,
        /// Continue from the current parameters instead of starting fresh.
        #[arg(long)]
        incremental: bool,
        #[arg(long)]
        bagging: bool,
    },
    /// Evaluate a registration, or the caller as a whole.
    Eval {
        caller: String,
        #[arg(long)]
        target: Option<String>,
        /// Score against gold data only.
        #[arg(long)]
        golden: bool,
    },
    #[command(subcommand)]
    Target(TargetCmd),
    #[command(subcommand)]
    Plan(PlanCmd),
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Debug, Subcommand)]
pub enum CallerCmd {
    /// Create a caller from a JSON request file (`-` reads stdin).
    Create { file: PathBuf },
    List,
    Show { caller: String },
    /// Register a callable from a JSON request file.
    Register { caller: String, file: PathBuf },
    /// Call with a JSON object of inputs.
    Call { caller: String, inputs: String },
    Metrics { caller: String },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Print samples as JSON lines.
    Show {
        caller: String,
        #[arg(long, value_delimiter = ',')]
        category: Vec<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewCmd {
    List {
        caller: String,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    Apply {
        token: String,
        #[command(flatten)]
        action: ReviewAction,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ReviewAction {
    #[arg(long)]
    confirm: bool,
    /// Replacement output as a JSON object.
    #[arg(long, value_name = "JSON")]
    r#override: Option<String>,
    #[arg(long, value_name = "VALUE", allow_negative_numbers = true)]
    reward: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum TargetCmd {
    /// Set the call target: host, registered or both.
    Set { caller: String, target: String },
}

#[derive(Debug, Subcommand)]
pub enum PlanCmd {
    Start {
        caller: String,
        /// Registration id of the candidate model.
        candidate: String,
        #[arg(long)]
        demote_on_drift: bool,
        #[arg(long)]
        drift_window: Option<usize>,
    },
    Step { caller: String },
    Status { caller: String },
}

#[derive(Debug, Subcommand)]
pub enum DemoCmd {
    /// Run the seeded fraud scenario and write its report.
    Run(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Scenario file (JSON or TOML); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub drift_at: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the timeline as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Exit with status 3 unless the scenario's expectations hold.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Gateway(String),
    Assertion(Vec<String>),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Gateway(_) => EXIT_GATEWAY,
            Failure::Assertion(_) => EXIT_ASSERTION,
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

struct Client {
    agent: ureq::Agent,
    base: String,
    key: Option<String>,
}

impl Client {
    fn new(url: &str, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, base: url.trim_end_matches('/').to_string(), key }
    }

    fn send(&self, method: &str, path: &str, body: Option<&Value>) -> CliResult<Value> {
        let url = format!("{}/v1{path}", self.base);
        let key = self.key.as_deref().unwrap_or("");
        let sent = match (method, body) {
            ("GET", _) => self.agent.get(&url).header(API_KEY_HEADER, key).call(),
            ("DELETE", _) => self.agent.delete(&url).header(API_KEY_HEADER, key).call(),
            ("PATCH", b) => self.agent.patch(&url).header(API_KEY_HEADER, key).send_json(b.unwrap_or(&json!({}))),
            (_, b) => self.agent.post(&url).header(API_KEY_HEADER, key).send_json(b.unwrap_or(&json!({}))),
        };
        let mut resp = sent.map_err(|e| Failure::Gateway(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Failure::Gateway(format!("{url}: {e}")))?;
        if status >= 400 {
            let detail = match serde_json::from_str::<ErrorEnvelope>(&text) {
                Ok(env) => format!("{} ({status}): {}", env.error.code, env.error.message),
                Err(_) => format!("http status {status}: {text}"),
            };
            return Err(Failure::Gateway(detail));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Gateway(format!("{url}: unreadable response: {e}")))
    }

    fn get(&self, path: &str) -> CliResult<Value> {
        self.send("GET", path, None)
    }

    fn post(&self, path: &str, body: &Value) -> CliResult<Value> {
        self.send("POST", path, Some(body))
    }
}

fn read_json_arg(path: &Path) -> CliResult<Value> {
    let mut text = String::new();
    let res = if path.as_os_str() == "-" {
        std::io::stdin().read_to_string(&mut text).map(|_| ())
    } else {
        std::fs::read_to_string(path).map(|t| text = t)
    };
    res.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

fn parse_json(text: &str, what: &str) -> CliResult<Value> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("{what}: invalid JSON: {e}")))
}

fn enc(segment: &str) -> String {
    segment
        .bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

fn load_scenario(args: &DemoArgs) -> CliResult<DemoScenario> {
    let mut scenario = match &args.config {
        None => DemoScenario::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let parsed = if path.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).map_err(|e| e.to_string())
            } else {
                serde_json::from_str(&text).map_err(|e| e.to_string())
            };
            parsed.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(steps) = args.steps {
        scenario.steps = steps;
    }
    if args.drift_at.is_some() {
        scenario.drift_at = args.drift_at;
    }
    scenario.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(scenario)
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn client(&self) -> Client {
        Client::new(&self.cli.url, self.cli.key.clone())
    }

    fn print(&mut self, text: &str) {
        let _ = writeln!(self.out, "{text}");
    }

    /// Prints `value` as JSON in `--json` mode and `human` otherwise.
    fn emit(&mut self, value: &Value, human: impl FnOnce(&Value) -> String) {
        let text = if self.cli.json { value.to_string() } else { human(value) };
        self.print(&text);
    }

    fn pretty(&mut self, value: &Value) {
        let text = if self.cli.json { value.to_string() } else { serde_json::to_string_pretty(value).unwrap_or_default() };
        self.print(&text);
    }
}

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn dispatch(ctx: &mut Ctx<'_>) -> CliResult {
    let cli = ctx.cli;
    match &cli.command {
        Command::Serve { config } => {
            let cfg = GatewayConfig::load(config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let handle = start_service(&cfg).map_err(|e| Failure::Usage(format!("cannot start: {e}")))?;
            ctx.print(&format!("listening on {}", handle.url()));
            let _ = ctx.out.flush();
            let persisted = handle.run_until_ctrl_c().map_err(|e| Failure::Gateway(format!("shutdown: {e}")))?;
            ctx.print(&format!("stopped; persisted {persisted} callers"));
        }
        Command::Caller(cmd) => caller_cmd(ctx, cmd)?,
        Command::Dataset(DatasetCmd::Show { caller, category, limit }) => {
            for c in category {
                Category::parse(c).ok_or_else(|| Failure::Usage(format!("unknown category `{c}`")))?;
            }
            let mut query = Vec::new();
            if !category.is_empty() {
                query.push(format!("category={}", enc(&category.join(","))));
            }
            if let Some(n) = limit {
                query.push(format!("limit={n}"));
            }
            let path = format!("/callers/{}/dataset?{}", enc(caller), query.join("&"));
            let samples = ctx.client().get(&path)?;
            for sample in samples.as_array().into_iter().flatten() {
                ctx.print(&sample.to_string());
            }
        }
        Command::Review(ReviewCmd::List { caller, limit }) => {
            let items = ctx.client().get(&format!("/callers/{}/reviews?state=pending&limit={limit}", enc(caller)))?;
            ctx.emit(&items, |v| {
                let rows: Vec<String> = v
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|r| format!("{}\t{}\t{}", s(&r["token"]), r["sample"]["inputs"], r["sample"]["output"]))
                    .collect();
                if rows.is_empty() {
                    "no pending reviews".into()
                } else {
                    rows.join("\n")
                }
            });
        }
        Command::Review(ReviewCmd::Apply { token, action }) => {
            let body = match (action.confirm, &action.r#override, action.reward) {
                (true, _, _) => json!({"action": "confirm"}),
                (_, Some(output), _) => json!({"action": "override", "output": parse_json(output, "--override")?}),
                (_, _, Some(value)) => json!({"action": "reward", "value": value}),
                _ => return Err(Failure::Usage("choose --confirm, --override or --reward".into())),
            };
            let sample = ctx.client().post(&format!("/reviews/{}", enc(token)), &body)?;
            ctx.emit(&sample, |v| format!("{} {} {} {}", s(&v["id"]), s(&v["split"]), s(&v["supervision"]), v["output"]));
        }
        Command::Train { caller, target, nested, incremental, bagging } => {
            let mut body = json!({
                "mode": if *nested { "nested" } else { "local" },
                "init": if *incremental { "incremental" } else { "fresh" },
                "bagging": bagging,
            });
            if let Some(t) = target {
                body["target"] = json!(t);
            }
            let report = ctx.client().post(&format!("/callers/{}/train", enc(caller)), &body)?;
            ctx.pretty(&report);
        }
        Command::Eval { caller, target, golden } => {
            let behavior = if *golden { Behavior::Golden } else { Behavior::Combined };
            let mut body = json!({"behavior": behavior, "scope": Scope::Local});
            if let Some(t) = target {
                body["target"] = json!(t);
            }
            let report = ctx.client().post(&format!("/callers/{}/eval", enc(caller)), &body)?;
            ctx.pretty(&report);
        }
        Command::Target(TargetCmd::Set { caller, target }) => {
            let parsed = CallTarget::parse(target)
                .ok_or_else(|| Failure::Usage(format!("unknown call target `{target}`, expected host, registered or both")))?;
            let config = ctx
                .client()
                .send("PATCH", &format!("/callers/{}/config", enc(caller)), Some(&json!({"call_target": parsed})))?;
            ctx.emit(&config, |v| format!("call_target: {}", s(&v["call_target"])));
        }
        Command::Plan(cmd) => plan_cmd(ctx, cmd)?,
        Command::Demo(DemoCmd::Run(args)) => {
            let scenario = load_scenario(args)?;
            let report = run_demo(&scenario).map_err(|e| Failure::Gateway(format!("demo: {e}")))?;
            let json = report.to_json();
            match &args.out {
                Some(path) => write_file(path, &format!("{json}\n"))?,
                None => ctx.print(&json),
            }
            if let Some(path) = &args.csv {
                write_file(path, &report.to_csv())?;
            }
            if args.out.is_some() {
                for r in &report.regions {
                    let acc = r.gold_accuracy.map_or("-".into(), |a| format!("{a:.4}"));
                    let alerts = r.drift_alerts.first().map_or(String::new(), |a| format!(", first drift alert at step {}", a.step));
                    ctx.print(&format!("{}: {} (gold accuracy {acc}{alerts})", r.region, r.final_state));
                }
            }
            if args.check {
                let failures = report.check();
                if !failures.is_empty() {
                    return Err(Failure::Assertion(failures));
                }
                ctx.print("checks passed");
            }
        }
    }
    Ok(())
}

fn caller_cmd(ctx: &mut Ctx<'_>, cmd: &CallerCmd) -> CliResult {
    let client = ctx.client();
    match cmd {
        CallerCmd::Create { file } => {
            let view = client.post("/callers", &read_json_arg(file)?)?;
            ctx.emit(&view, |v| format!("created {}", s(&v["id"])));
        }
        CallerCmd::List => {
            let list = client.get("/callers")?;
            ctx.emit(&list, |v| {
                v.as_array()
                    .into_iter()
                    .flatten()
                    .map(|c| {
                        format!(
                            "{}\t{}\ttarget={}\tsamples={}",
                            s(&c["id"]),
                            s(&c["name"]),
                            s(&c["config"]["call_target"]),
                            s(&c["sample_count"])
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            });
        }
        CallerCmd::Show { caller } => {
            let view = client.get(&format!("/callers/{}", enc(caller)))?;
            ctx.pretty(&view);
        }
        CallerCmd::Register { caller, file } => {
            let reg = client.post(&format!("/callers/{}/register", enc(caller)), &read_json_arg(file)?)?;
            ctx.emit(&reg, |v| format!("registered {}", s(&v["registration"])));
        }
        CallerCmd::Call { caller, inputs } => {
            let body = json!({"inputs": parse_json(inputs, "inputs")?});
            let result = client.post(&format!("/callers/{}/call", enc(caller)), &body)?;
            ctx.pretty(&result);
        }
        CallerCmd::Metrics { caller } => {
            let metrics = client.get(&format!("/callers/{}/metrics", enc(caller)))?;
            ctx.pretty(&metrics);
        }
    }
    Ok(())
}

fn plan_cmd(ctx: &mut Ctx<'_>, cmd: &PlanCmd) -> CliResult {
    let client = ctx.client();
    let summary = |v: &Value| {
        if v.is_null() {
            return "no plan".to_string();
        }
        let evidence = &v["last_evidence"];
        format!(
            "{} candidate={} steps={} gold={} silver={}",
            s(&v["state"]["state"]),
            s(&v["candidate"]),
            s(&v["steps"]),
            s(&evidence["gold_accuracy"]),
            s(&evidence["silver_accuracy"]),
        )
    };
    let plan = match cmd {
        PlanCmd::Start { caller, candidate, demote_on_drift, drift_window } => {
            let mut body = json!({"candidate": candidate, "demote_on_drift": demote_on_drift});
            if let Some(w) = drift_window {
                body["drift_window"] = json!(w);
            }
            client.post(&format!("/callers/{}/plan", enc(caller)), &body)?
        }
        PlanCmd::Step { caller } => client.post(&format!("/callers/{}/plan/step", enc(caller)), &json!({}))?,
        PlanCmd::Status { caller } => client.get(&format!("/callers/{}/plan", enc(caller)))?,
    };
    ctx.emit(&plan, summary);
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut ctx = Ctx { cli: &cli, out };
    match dispatch(&mut ctx) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Gateway(m) => {
                    let _ = writeln!(err, "error: {m}");
                }
                Failure::Assertion(list) => {
                    for m in list {
                        let _ = writeln!(err, "check failed: {m}");
                    }
                }
            }
            f.exit_code()
        }
    }
}
