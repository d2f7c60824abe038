use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use et14::bundled::families;
use et14::closure::{parse_closures, ClosureSpec, Form};
use et14::convexity::{scan_csv, LimitOptions, ScanRow};
use et14::state::parse_states;
use et14::suite::{
    convexity, reduce, reduce_states, subsystem, verify, ConvexityConfig, Output, ReduceConfig, ScanConfig, SubsystemConfig,
    Tolerances, VerifyConfig,
};

#[derive(Parser)]
#[command(name = "et14", version, about = "Seeded checks of the 14-moment closure identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frame-change, compatibility and derivative identities over sampled states.
    Verify(VerifyArgs),
    /// Hessian blocks and definiteness verdicts at state C.
    Convexity(ConvexityArgs),
    /// Canonical reduction and reconstruction round trips.
    Reduce(ReduceArgs),
    /// The 5-moment subsystem and its restriction facts.
    Subsystem(SubsystemArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    X,
    Eta,
    Sub5,
}

impl From<FormArg> for Form {
    fn from(f: FormArg) -> Form {
        match f {
            FormArg::X => Form::X,
            FormArg::Eta => Form::Eta,
            FormArg::Sub5 => Form::Sub5,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for summary.json, rows.jsonl|rows.csv and details.json. Summary goes to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    tol_exact: Option<f64>,
    #[arg(long)]
    tol_strict: Option<f64>,
    #[arg(long)]
    tol_fd: Option<f64>,
    #[arg(long)]
    tol_witness: Option<f64>,
    #[arg(long)]
    tol_round_trip: Option<f64>,
    #[arg(long)]
    tol_blocks: Option<f64>,
}

impl Common {
    fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            exact: self.tol_exact.unwrap_or(d.exact),
            strict: self.tol_strict.unwrap_or(d.strict),
            fd: self.tol_fd.unwrap_or(d.fd),
            witness: self.tol_witness.unwrap_or(d.witness),
            round_trip: self.tol_round_trip.unwrap_or(d.round_trip),
            blocks: self.tol_blocks.unwrap_or(d.blocks),
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, value_enum, default_value = "x")]
    form: FormArg,
    /// Closure JSON (one spec or an array). Defaults to the bundled families.
    #[arg(long)]
    closure: Option<PathBuf>,
    #[arg(long)]
    skip_compat: bool,
}

#[derive(Args)]
struct ConvexityArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "x")]
    form: FormArg,
    #[arg(long)]
    closure: Option<PathBuf>,
    /// Points of state C per closure.
    #[arg(long, default_value_t = 4)]
    points: usize,
    #[arg(long)]
    reproduce_form5_failure: bool,
    /// Verdicts in the lambda_ppll -> 0 limit (eta form).
    #[arg(long)]
    limit: bool,
    /// Random K search, e.g. `degree=2 count=50`.
    #[arg(long = "scan-K", num_args = 1..=2, value_delimiter = ',')]
    scan_k: Vec<String>,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// State JSON (one state or an array) instead of sampled states.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct SubsystemArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long)]
    closure: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_closures(path: &Option<PathBuf>, form: Form) -> Result<(Vec<ClosureSpec>, String), String> {
    match path {
        Some(p) => {
            let specs = parse_closures(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok((specs, p.display().to_string()))
        }
        None => Ok((families(form), "bundled".into())),
    }
}

fn parse_scan(items: &[String]) -> Result<Option<ScanConfig>, String> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut sc = ScanConfig { degree: 2, count: 50 };
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| format!("--scan-K expects key=value, got {it}"))?;
        match k.trim() {
            "degree" => sc.degree = v.trim().parse().map_err(|_| format!("bad degree {v}"))?,
            "count" => sc.count = v.trim().parse().map_err(|_| format!("bad count {v}"))?,
            _ => return Err(format!("unknown --scan-K key {k}")),
        }
    }
    Ok(Some(sc))
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_output(o: &Output, common: &Common) -> Result<(), String> {
    let mut summary = serde_json::to_value(&o.summary).map_err(|e| e.to_string())?;
    summary["timestamp"] = Value::from(timestamp());
    let text = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())? + "\n";
    let Some(dir) = &common.out else {
        print!("{text}");
        return Ok(());
    };
    let io = |p: PathBuf, s: String| fs::write(&p, s).map_err(|e| format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    io(dir.join("summary.json"), text)?;
    match common.format {
        Format::Json => io(dir.join("rows.jsonl"), o.jsonl())?,
        Format::Csv => io(dir.join("rows.csv"), o.csv())?,
    }
    if let Some(rows) = o.details.get("scan").and_then(|s| s.get("rows")) {
        let rows: Vec<ScanRow> = serde_json::from_value(rows.clone()).map_err(|e| e.to_string())?;
        io(dir.join("scan.csv"), scan_csv(&rows))?;
    }
    if !o.details.is_null() {
        io(dir.join("details.json"), serde_json::to_string_pretty(&o.details).map_err(|e| e.to_string())? + "\n")?;
    }
    Ok(())
}

fn report(o: &Output) {
    for c in &o.summary.checks {
        let tag = match (c.pass, c.gating) {
            (true, _) => "ok  ",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        eprintln!("{tag} {:<28} max_rel {:.3e}  ({})", c.name, c.max_rel, c.paper_ref);
    }
}

fn run(cli: Cli) -> Result<(Output, Common), String> {
    let e = |e: et14::Error| e.to_string();
    match cli.command {
        Command::Verify(a) => {
            let form = a.form.into();
            let (closures, source) = load_closures(&a.closure, form)?;
            let cfg = VerifyConfig {
                seed: a.common.seed,
                samples: a.samples,
                form,
                tol: a.common.tolerances(),
                skip_compat: a.skip_compat,
                closure_source: source,
                ..VerifyConfig::default()
            };
            Ok((verify(&cfg, &closures).map_err(e)?, a.common))
        }
        Command::Convexity(a) => {
            let form = a.form.into();
            let (closures, source) = load_closures(&a.closure, form)?;
            let cfg = ConvexityConfig {
                seed: a.common.seed,
                form,
                points: a.points,
                reproduce_form5_failure: a.reproduce_form5_failure,
                limit: a.limit,
                limit_options: LimitOptions::default(),
                scan: parse_scan(&a.scan_k)?,
                tol: a.common.tolerances(),
                closure_source: source,
            };
            Ok((convexity(&cfg, &closures).map_err(e)?, a.common))
        }
        Command::Reduce(a) => {
            let mut cfg = ReduceConfig { seed: a.common.seed, samples: a.samples, tol: a.common.tolerances(), ..ReduceConfig::default() };
            let states = match &a.state {
                Some(p) => {
                    cfg.state_source = p.display().to_string();
                    parse_states(&read(p)?).map_err(|err| format!("{}: {err}", p.display()))?
                }
                None => reduce_states(&cfg).map_err(e)?,
            };
            let o = reduce(&cfg, &states).map_err(e)?;
            let max = |n: &str| o.summary.checks.iter().find(|c| c.name == n).map_or(f64::NAN, |c| c.max_rel);
            eprintln!(
                "max round-trip invariant error {:.3e} (S1-determined), {:.3e} (full bundle)",
                max("round_trip_s1_invariants"),
                max("round_trip_full_bundle")
            );
            Ok((o, a.common))
        }
        Command::Subsystem(a) => {
            let (closures, source) = load_closures(&a.closure, Form::Sub5)?;
            let cfg = SubsystemConfig { seed: a.common.seed, samples: a.samples, tol: a.common.tolerances(), closure_source: source };
            Ok((subsystem(&cfg, &closures).map_err(e)?, a.common))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (o, common) = match run(cli) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    report(&o);
    if let Err(msg) = write_output(&o, &common) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    if o.summary.pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed: {}", o.summary.failing().join(", "));
        ExitCode::from(1)
    }
}
