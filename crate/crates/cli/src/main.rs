use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lembill::billing::{dso_full_audit, AuditVerdict, UserBillReport};
use lembill::mpc::EngineKind;
use lembill::protocol::{
    check_information_flow, inject_fault, run_billing_period, Approach, BillingLedger, Fault, ProtocolConfig,
    ProtocolError, LEDGER_SCHEMA,
};
use lembill::report::{bench_csv, linear_fit, BenchRow, RunReport};
use lembill::scenario::{gen_scenario, Scenario, ScenarioParams};

#[derive(Parser)]
#[command(name = "lembill", version, about = "Private billing for local energy markets")]
struct Cli {
    /// Protocol seed; scenario generation uses `--seed` on `gen-scenario`.
    #[arg(long, env = "LEMBILL_SEED", default_value_t = 1, global = true)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random cleared market scenario.
    GenScenario(GenArgs),
    /// Run one billing period and write ledger, transcript and report.
    Run(RunArgs),
    /// Time runs over a range of user counts.
    Bench(BenchArgs),
    /// Recheck a ledger's settlement against the users' bill reports.
    Audit {
        #[arg(long, default_value = "out/ledger.json")]
        ledger: PathBuf,
    },
    /// Run with one injected fault and report who got caught.
    Tamper(TamperArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "scenario.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 48)]
    periods: usize,
    #[arg(long, default_value_t = 6)]
    suppliers: u32,
    #[arg(long, default_value_t = 4)]
    zones: u32,
    /// Bits per reading and bid.
    #[arg(long, default_value_t = 12)]
    width: u32,
    #[arg(long, default_value_t = 2000)]
    max_bid: i64,
    #[arg(long, default_value_t = 200)]
    noise: i64,
    /// Scenario seed (independent of the protocol seed).
    #[arg(long = "scenario-seed", default_value_t = 1)]
    scenario_seed: u64,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = Approach::ServerCompare, value_parser = parse_approach)]
    approach: Approach,
    #[arg(long, default_value_t = EngineKind::Replicated, value_parser = parse_engine)]
    engine: EngineKind,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "scenario.json")]
    scenario: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Inclusive range `lo..hi`.
    #[arg(long, default_value = "1000..4000", value_parser = parse_range)]
    users: (usize, usize),
    #[arg(long, default_value_t = 1000)]
    step: usize,
    #[arg(long, default_value_t = 1)]
    periods: usize,
    #[arg(long, default_value_t = 12)]
    width: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    /// Shared deviation `v`.
    Deviation,
    /// Meter's masked reading.
    Reading,
    /// Supplier's reported capital.
    Capital,
    /// User sends nothing to the servers.
    Silent,
}

#[derive(Args)]
struct TamperArgs {
    #[arg(long, default_value = "scenario.json")]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    target: Target,
    #[arg(long, default_value_t = 0)]
    user: u32,
    #[arg(long, default_value_t = 0)]
    supplier: u32,
    #[arg(long, default_value_t = 0)]
    period: usize,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    delta: i64,
    #[command(flatten)]
    common: Common,
}

fn parse_approach(s: &str) -> Result<Approach, String> {
    s.parse()
}

fn parse_engine(s: &str) -> Result<EngineKind, String> {
    s.parse()
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected lo..hi")?;
    let lo: usize = lo.parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim_start_matches('=').parse().map_err(|e| format!("{e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

fn write_outputs(dir: &Path, scenario: &Scenario, cfg: &ProtocolConfig, out: &lembill::protocol::RunOutput) -> Result<RunReport> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("ledger.json"), serde_json::to_string_pretty(&out.ledger)?)?;
    fs::write(dir.join("transcript.log"), out.transcript.to_lines())?;
    let report = RunReport::new(scenario, cfg, out);
    fs::write(dir.join("report.csv"), report.to_csv()?)?;
    fs::write(dir.join("timings.csv"), bench_csv(&[BenchRow::new(scenario, cfg, out)])?)?;
    Ok(report)
}

fn summarize(out: &lembill::protocol::RunOutput, report: &RunReport, approach: Approach) -> bool {
    let ledger = &out.ledger;
    let flow = check_information_flow(&out.transcript, approach);
    println!(
        "approach {} engine {}: {} users, {} messages, {:.2}s",
        ledger.approach,
        ledger.engine,
        ledger.users.len(),
        out.transcript.entries.len(),
        out.timings.total.as_secs_f64()
    );
    println!(
        "accepted {}/{}  verified {}/{}  settlement sum {}",
        ledger.users.iter().filter(|u| u.accepted).count(),
        ledger.users.len(),
        ledger.users.iter().filter(|u| u.verified).count(),
        ledger.users.len(),
        ledger.settlement_sum
    );
    for f in &ledger.failures {
        println!("failure: {}", serde_json::to_string(f).unwrap_or_default());
    }
    for c in report.failed_checks() {
        println!("count mismatch: {} expected {} measured {}", c.name, c.expected, c.measured);
    }
    for v in &flow {
        println!("flow violation: {v}");
    }
    ledger.passed() && report.counts_match() && flow.is_empty()
}

fn run(seed: u64, args: RunArgs) -> Result<bool> {
    let scenario = Scenario::load(&args.scenario)?;
    let cfg = ProtocolConfig::new(args.common.approach, args.common.engine, seed);
    let out = run_billing_period(&scenario, &cfg)?;
    let report = write_outputs(&args.common.out, &scenario, &cfg, &out)?;
    Ok(summarize(&out, &report, cfg.approach))
}

fn tamper(seed: u64, args: TamperArgs) -> Result<bool> {
    let scenario = Scenario::load(&args.scenario)?;
    let mut cfg = ProtocolConfig::new(args.common.approach, args.common.engine, seed);
    let fault = match args.target {
        Target::Deviation => Fault::Deviation { user: args.user, period: args.period, delta: args.delta },
        Target::Reading => Fault::Reading { user: args.user, period: args.period, delta: args.delta },
        Target::Capital => Fault::Capital { supplier: args.supplier, delta: args.delta },
        Target::Silent => Fault::Silent { user: args.user, period: args.period },
    };
    inject_fault(&mut cfg, &scenario, fault)?;
    match run_billing_period(&scenario, &cfg) {
        Ok(out) => {
            let report = write_outputs(&args.common.out, &scenario, &cfg, &out)?;
            Ok(summarize(&out, &report, cfg.approach))
        }
        Err(e @ ProtocolError::MissingTuple { .. }) => {
            println!("aborted: {e}");
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn audit(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let schema = value.get("schema").and_then(|s| s.as_u64());
    if schema != Some(LEDGER_SCHEMA as u64) {
        bail!("ledger schema {schema:?}, expected {LEDGER_SCHEMA}");
    }
    let ledger: BillingLedger = serde_json::from_str(&text)?;
    let reports: Vec<UserBillReport> = ledger
        .users
        .iter()
        .map(|u| UserBillReport { user: u.user, supplier: u.supplier, d: u.d, bl: u.bl, bl_lem: u.bl_lem })
        .collect();
    let scaps: BTreeMap<u32, i128> = ledger.suppliers.iter().map(|s| (s.supplier, s.reported_scap)).collect();
    let mut customers: BTreeMap<u32, Vec<u32>> = scaps.keys().map(|&j| (j, vec![])).collect();
    for u in &ledger.users {
        customers.entry(u.supplier).or_default().push(u.user);
    }
    let outcome = dso_full_audit(&reports, &scaps, &customers);
    println!("sum of reported capital: {}", outcome.sum);
    let mut ok = true;
    for (j, v) in &outcome.verdicts {
        println!("supplier {j}: {v:?}");
        ok &= matches!(v, AuditVerdict::Ok);
    }
    Ok(ok)
}

fn bench(seed: u64, args: BenchArgs) -> Result<bool> {
    let (lo, hi) = args.users;
    let mut rows = vec![];
    let mut n = lo;
    while n <= hi {
        let scenario = gen_scenario(&ScenarioParams {
            users: n,
            periods: args.periods,
            width: args.width,
            seed,
            ..ScenarioParams::default()
        })?;
        let cfg = ProtocolConfig::new(args.common.approach, args.common.engine, seed);
        let out = run_billing_period(&scenario, &cfg)?;
        let report = RunReport::new(&scenario, &cfg, &out);
        let row = BenchRow::new(&scenario, &cfg, &out);
        println!(
            "{n} users: total {:.3}s supplier {:.3}s cs {:.3}s counts {}",
            row.total_s,
            row.supplier_s,
            row.cs_s,
            if report.counts_match() { "ok" } else { "MISMATCH" }
        );
        if !report.counts_match() || !out.ledger.passed() {
            bail!("run with {n} users failed its checks");
        }
        rows.push(row);
        n += args.step.max(1);
    }
    fs::create_dir_all(&args.common.out)?;
    fs::write(args.common.out.join("bench.csv"), bench_csv(&rows)?)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.users as f64, r.supplier_s)).collect();
    if let Some((slope, intercept, r2)) = linear_fit(&pts) {
        println!("supplier time ~ {slope:.3e} * users + {intercept:.3e}  (R^2 = {r2:.4})");
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GenScenario(a) => gen_scenario(&ScenarioParams {
            users: a.users,
            periods: a.periods,
            suppliers: a.suppliers,
            zones: a.zones,
            width: a.width,
            max_bid: a.max_bid,
            noise: a.noise,
            seed: a.scenario_seed,
            ..ScenarioParams::default()
        })
        .and_then(|s| s.save(&a.out))
        .map(|_| {
            println!("wrote {}", a.out.display());
            true
        })
        .map_err(Into::into),
        Cmd::Run(a) => run(cli.seed, a),
        Cmd::Bench(a) => bench(cli.seed, a),
        Cmd::Audit { ledger } => audit(&ledger),
        Cmd::Tamper(a) => tamper(cli.seed, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
