//! One line per acceptance criterion; exits nonzero if any line fails.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lembill::algebra::{centered_lift, encode_signed, field_byte_len, Fq, SignedBound};
use lembill::encoding::{encode_x, encode_y, Layout};
use lembill::fhipe::{encrypt_families, encrypt_single, scan, setup};
use lembill::mpc::program::{random_program, run_program};
use lembill::mpc::{Engine, EngineKind, IdealEngine, ReplicatedEngine};
use lembill::protocol::{
    check_information_flow, check_publication_reach, inject_fault, run_billing_period, Approach, Failure, Fault,
    ProtocolConfig, RunOutput,
};
use lembill::report::{linear_fit, RunReport};
use lembill::scenario::{gen_scenario, Scenario, ScenarioParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const ENGINES: [EngineKind; 2] = [EngineKind::Ideal, EngineKind::Replicated];
const SCENARIOS: u64 = 20;

struct Line {
    pass: bool,
    name: &'static str,
    detail: String,
}

fn emit(lines: &mut Vec<Line>, pass: bool, name: &'static str, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().flush();
    lines.push(Line { pass, name, detail });
}

fn progress(msg: &str) {
    eprintln!("  .. {msg}");
}

// Clear bill computed straight from the scenario, without the library's
// billing module. Returns (BL, BL_LEM) per user and, per period, the
// LEM-side money imbalance sum_i (2d-1) * lem_ik.
struct Oracle {
    bills: Vec<(i128, i128)>,
    period_imbalance: Vec<i128>,
    period_total: Vec<i64>,
}

fn half_even(num: i128, den: i128) -> i128 {
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        Ordering::Equal => q + (q & 1),
    }
}

fn oracle(sc: &Scenario) -> Oracle {
    let n = sc.users.len();
    let mut bills = vec![(0i128, 0i128); n];
    let mut period_imbalance = vec![];
    let mut period_total = vec![];
    for p in &sc.periods {
        let z = sc.zones as usize;
        let mut t = vec![0i128; z];
        let mut np = vec![0i128; z];
        let mut nc = vec![0i128; z];
        for (i, u) in sc.users.iter().enumerate() {
            let v = (p.readings[i] - p.bids[i]) as i128;
            t[u.zone as usize] += v;
            if u.d == 1 {
                np[u.zone as usize] += 1;
            } else {
                nc[u.zone as usize] += 1;
            }
        }
        let total: i128 = t.iter().sum();
        let denom: i128 = t.iter().filter(|&&tz| tz.signum() == total.signum() && tz != 0).sum();
        let (tp, fit, rp) = (p.prices.tp as i128, p.prices.fit as i128, p.prices.rp as i128);
        let mut imbalance = 0i128;
        for (i, u) in sc.users.iter().enumerate() {
            let zi = u.zone as usize;
            let m = p.readings[i] as i128;
            let v = m - p.bids[i] as i128;
            let mut lem = m * tp;
            let mut l = lem;
            if total != 0 && denom != 0 {
                // t_z * W / count with W = T / denom.
                if total > 0 && t[zi] > 0 && v > 0 && u.d == 1 && np[zi] > 0 {
                    let share = half_even(t[zi] * total, denom * np[zi]);
                    lem -= tp * share;
                    l = lem + fit * share;
                } else if total < 0 && t[zi] < 0 && v < 0 && u.d == 0 && nc[zi] > 0 {
                    let share = half_even(t[zi] * total, denom * nc[zi]);
                    lem -= tp * share;
                    l = lem + rp * share;
                }
            }
            bills[i].0 += l;
            bills[i].1 += lem;
            imbalance += if u.d == 1 { lem } else { -lem };
        }
        period_imbalance.push(imbalance);
        period_total.push(total as i64);
    }
    Oracle { bills, period_imbalance, period_total }
}

fn scenario(seed: u64) -> Scenario {
    gen_scenario(&ScenarioParams { seed, ..ScenarioParams::default() }).expect("default parameters are valid")
}

type Triple = (Vec<i128>, Vec<Vec<i128>>, Vec<i128>);

fn triple(out: &RunOutput) -> Triple {
    (
        out.ledger.users.iter().map(|u| u.bl).collect(),
        out.ledger.suppliers.iter().map(|s| s.balance.clone()).collect(),
        out.ledger.suppliers.iter().map(|s| s.scap).collect(),
    )
}

#[derive(Default)]
struct MainTally {
    runs: usize,
    oracle_mismatch: Vec<String>,
    approach_mismatch: Vec<String>,
    flow: Vec<String>,
    counts: Vec<String>,
    count_checks: usize,
    rejected: Vec<String>,
    residues: Vec<(u64, i128)>,
    trace: Option<String>,
    elapsed: Duration,
    by_approach: BTreeMap<Approach, Duration>,
}

fn money_flow_trace(sc: &Scenario, o: &Oracle, out: &RunOutput) -> String {
    let signed_bills: i128 = out.ledger.users.iter().map(|u| if u.d == 1 { -u.bl } else { u.bl }).sum();
    let mut s = String::new();
    s += &format!(
        "\n      money flow, scenario seed {}: sum SCap = {} = -sum BL_signed ({}) + sum sign(T)*SBal ({})",
        sc.seed,
        out.ledger.settlement_sum,
        -signed_bills,
        out.ledger.settlement_sum + signed_bills
    );
    let lem: i128 = o.period_imbalance.iter().sum();
    s += &format!("\n      producers' minus consumers' LEM value over all periods = {lem}");
    let mut worst: Vec<(usize, i128)> = o.period_imbalance.iter().copied().enumerate().collect();
    worst.sort_by_key(|&(_, x)| std::cmp::Reverse(x.abs()));
    for (k, x) in worst.iter().take(3) {
        s += &format!("\n      period {k}: T = {} Wh, LEM imbalance {x}", o.period_total[*k]);
    }
    s += "\n      residue is the LEM value of metered energy not matched by a counterparty or a charged share";
    s
}

fn main_runs(tally: &mut MainTally) {
    let started = Instant::now();
    for seed in 1..=SCENARIOS {
        let sc = scenario(seed);
        let o = oracle(&sc);
        let mut first: Option<(String, Triple)> = None;
        for approach in Approach::ALL {
            for engine in ENGINES {
                let tag = format!("seed {seed} approach {approach} {engine}");
                let cfg = ProtocolConfig::new(approach, engine, seed * 31 + approach.number() as u64);
                let t0 = Instant::now();
                let out = match run_billing_period(&sc, &cfg) {
                    Ok(out) => out,
                    Err(e) => {
                        tally.rejected.push(format!("{tag}: {e}"));
                        continue;
                    }
                };
                *tally.by_approach.entry(approach).or_default() += t0.elapsed();
                tally.runs += 1;
                for (u, &(bl, lem)) in out.ledger.users.iter().zip(&o.bills) {
                    if u.bl != bl || u.bl_lem != lem || !u.accepted || !u.verified {
                        tally.oracle_mismatch.push(format!("{tag} user {}: got {} expected {bl}", u.user, u.bl));
                    }
                }
                if !out.ledger.failures.is_empty() {
                    tally.rejected.push(format!("{tag}: {:?}", out.ledger.failures));
                }
                let tr = triple(&out);
                match &first {
                    None => first = Some((tag.clone(), tr)),
                    Some((t, f)) if *f != tr => tally.approach_mismatch.push(format!("{tag} vs {t}")),
                    _ => {}
                }
                let v = check_information_flow(&out.transcript, approach);
                if let Some(x) = v.first() {
                    tally.flow.push(format!("{tag}: {x}"));
                }
                let reach = check_publication_reach(&out.transcript, sc.users.len() as u32, sc.suppliers, sc.periods.len());
                if !reach.is_empty() {
                    tally.flow.push(format!("{tag}: publication reach wrong in periods {reach:?}"));
                }
                let report = RunReport::new(&sc, &cfg, &out);
                tally.count_checks += report.checks.len();
                for c in report.failed_checks() {
                    tally.counts.push(format!("{tag}: {} expected {} measured {}", c.name, c.expected, c.measured));
                }
                if approach == Approach::ServerCompare && engine == EngineKind::Replicated {
                    tally.residues.push((seed, out.ledger.settlement_sum));
                    if tally.trace.is_none() && out.ledger.settlement_sum != 0 {
                        tally.trace = Some(money_flow_trace(&sc, &o, &out));
                    }
                }
            }
        }
        progress(&format!("scenario {seed}/{SCENARIOS} done, {:.0}s", started.elapsed().as_secs_f64()));
    }
    tally.elapsed = started.elapsed();
}

fn comparison() -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(0xc0ffee);
    let layout = Layout::Compact;
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    let mut max_tests = 0usize;
    let check = |b: u64, m: u64, hit: Option<Ordering>| hit.unwrap_or(Ordering::Equal) == b.cmp(&m);
    for width in 1..=6u32 {
        let (_, msk) = setup(layout.dimension(width), &mut rng).expect("setup");
        let domain = 1u64 << width;
        let bids: Vec<_> = (0..domain)
            .map(|b| encrypt_families(&msk, &encode_x(b, width, layout).unwrap(), &mut rng).unwrap())
            .collect();
        let readings: Vec<_> = (0..domain)
            .map(|m| encrypt_single(&msk, &encode_y(m, width, layout).unwrap(), &mut rng).unwrap())
            .collect();
        for (b, fam) in bids.iter().enumerate() {
            for (m, single) in readings.iter().enumerate() {
                let res = scan(single, fam).unwrap();
                max_tests = max_tests.max(res.zero_tests);
                pairs += 1;
                if !check(b as u64, m as u64, res.hit.map(|h| h.ordering)) || res.zero_tests > 2 * width as usize {
                    mismatches += 1;
                }
            }
        }
        progress(&format!("comparison width {width}: {pairs} pairs so far"));
    }
    let exhaustive = pairs;
    let width = 12u32;
    let (_, msk) = setup(layout.dimension(width), &mut rng).expect("setup");
    for i in 0..10_000usize {
        let b = rng.gen_range(0..1u64 << width);
        // A quarter of the pairs share a long prefix or are equal.
        let m = match i % 4 {
            0 => b,
            1 => (b ^ rng.gen_range(0..8)) & ((1 << width) - 1),
            _ => rng.gen_range(0..1u64 << width),
        };
        let fam = encrypt_families(&msk, &encode_x(b, width, layout).unwrap(), &mut rng).unwrap();
        let single = encrypt_single(&msk, &encode_y(m, width, layout).unwrap(), &mut rng).unwrap();
        let res = scan(&single, &fam).unwrap();
        pairs += 1;
        if !check(b, m, res.hit.map(|h| h.ordering)) {
            mismatches += 1;
        }
    }
    (
        mismatches == 0,
        format!(
            "{exhaustive} exhaustive pairs (widths 1-6) + {} random at width 12, {mismatches} mismatches",
            pairs - exhaustive
        ),
    )
}

fn mpc() -> (bool, String) {
    let bound = SignedBound::new::<Fq>(64).unwrap();
    let wide = SignedBound::new::<Fq>(126).unwrap();
    let mut gen = ChaCha20Rng::seed_from_u64(4242);
    let mut bad = vec![];
    for i in 0..1000u64 {
        let program = random_program::<Fq>(&mut gen, 24, bound);
        let mut ideal = IdealEngine::new(i);
        let mut repl = ReplicatedEngine::<Fq>::new(i, i.wrapping_mul(0x9e37_79b9));
        let a = run_program::<Fq, _>(&mut ideal, &program, &mut ChaCha20Rng::seed_from_u64(i));
        let b = run_program::<Fq, _>(&mut repl, &program, &mut ChaCha20Rng::seed_from_u64(!i));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let lifted: Result<Vec<i128>, _> = b.iter().map(|x| centered_lift(*x, wide)).collect();
                if a != b || lifted.ok().as_ref() != Some(&program.expected) {
                    bad.push(i);
                }
            }
            _ => bad.push(i),
        }
    }
    // Multiplication-only rounds: each party sends one element per gate.
    let w = field_byte_len::<Fq>() as u64;
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut engine = ReplicatedEngine::<Fq>::new(9, 10);
    let regs: Vec<_> = (0..8)
        .map(|_| {
            let x: i64 = rng.gen_range(-1000..1000);
            engine.join(&ReplicatedEngine::<Fq>::deal(encode_signed(x as i128), &mut rng)).unwrap()
        })
        .collect();
    let mut gates = 0u64;
    for batch in [1usize, 2, 7, 64, 300] {
        let pairs: Vec<_> = (0..batch).map(|k| (regs[k % 8].clone(), regs[(k * 3 + 1) % 8].clone())).collect();
        engine.mul_many(&pairs).unwrap();
        gates += batch as u64;
    }
    let st = engine.stats();
    let per_party: Vec<u64> = (0..3).map(|p| st.online.bytes_sent_by(p)).collect();
    let gate_ok = st.online.mul_gates == gates && per_party.iter().all(|&b| b == w * gates);
    (
        bad.is_empty() && gate_ok,
        format!(
            "1000 programs, {} disagreements; {gates} gates, bytes sent per party {per_party:?} (expected {} each)",
            bad.len(),
            w * gates
        ),
    )
}

fn tamper() -> (bool, String) {
    let mut rng = ChaCha20Rng::seed_from_u64(777);
    let scenarios: Vec<Scenario> = (101..=104).map(scenario).collect();
    let mut detected = 0;
    let mut missed = vec![];
    for i in 0..100usize {
        let sc = &scenarios[i % scenarios.len()];
        let approach = if i % 2 == 0 { Approach::ServerCompare } else { Approach::Disclosed };
        let engine = ENGINES[(i / 2) % 2];
        let mut cfg = ProtocolConfig::new(approach, engine, i as u64);
        let fault = if i < 50 {
            let mag = rng.gen_range(1..=50i64);
            Fault::Deviation {
                user: rng.gen_range(0..sc.users.len() as u32),
                period: rng.gen_range(0..sc.periods.len()),
                delta: if rng.gen() { mag } else { -mag },
            }
        } else {
            let mag = rng.gen_range(1..=10_000i64);
            Fault::Capital { supplier: rng.gen_range(0..sc.suppliers), delta: if rng.gen() { mag } else { -mag } }
        };
        inject_fault(&mut cfg, sc, fault).unwrap();
        let caught = match run_billing_period(sc, &cfg) {
            Ok(out) => match fault {
                Fault::Deviation { user, .. } => {
                    out.ledger.failures == vec![Failure::Verification { user }]
                }
                Fault::Capital { supplier, .. } => {
                    out.ledger.failures == vec![Failure::Audit { supplier }] && out.ledger.audit.mismatched() == vec![supplier]
                }
                _ => false,
            },
            Err(_) => false,
        };
        if caught {
            detected += 1;
        } else {
            missed.push(format!("{fault:?}"));
        }
        if i % 25 == 24 {
            progress(&format!("tamper {}/100", i + 1));
        }
    }
    // Sum-preserving lies are not caught by the total check.
    let mut canceled_pass = 0;
    for i in 0..10u32 {
        let sc = &scenarios[i as usize % scenarios.len()];
        let mut cfg = ProtocolConfig::new(Approach::Disclosed, EngineKind::Ideal, i as u64);
        let user = rng.gen_range(0..sc.users.len() as u32);
        let delta = rng.gen_range(1..=50i64);
        inject_fault(&mut cfg, sc, Fault::Deviation { user, period: 3, delta }).unwrap();
        inject_fault(&mut cfg, sc, Fault::Deviation { user, period: 40, delta: -delta }).unwrap();
        if let Ok(out) = run_billing_period(sc, &cfg) {
            if out.ledger.users[user as usize].verified {
                canceled_pass += 1;
            }
        }
    }
    (
        detected == 100 && canceled_pass == 10,
        format!(
            "{detected}/100 single faults detected{}; canceling lies passed verification {canceled_pass}/10",
            if missed.is_empty() { String::new() } else { format!(" (missed {})", missed.join(", ")) }
        ),
    )
}

fn zero_deviation_settlement() -> (bool, String) {
    let mut bad = vec![];
    let mut runs = 0;
    for seed in 1..=SCENARIOS {
        let sc = scenario(seed).without_deviations();
        let mut configs = vec![
            ProtocolConfig::new(Approach::ServerCompare, EngineKind::Replicated, seed),
            ProtocolConfig::new(Approach::Disclosed, EngineKind::Ideal, seed),
        ];
        if seed == 1 {
            configs.push(ProtocolConfig::new(Approach::SupplierCompare, EngineKind::Replicated, seed));
        }
        for cfg in configs {
            runs += 1;
            match run_billing_period(&sc, &cfg) {
                Ok(out) if sc.is_cleared() && out.ledger.settlement_sum == 0 && out.ledger.passed() => {}
                Ok(out) => bad.push(format!("seed {seed} approach {}: sum {}", cfg.approach, out.ledger.settlement_sum)),
                Err(e) => bad.push(format!("seed {seed}: {e}")),
            }
        }
    }
    (bad.is_empty(), format!("{runs} runs on cleared zero-deviation scenarios, nonzero sums: {bad:?}"))
}

fn scale() -> (bool, String) {
    let mut pts = vec![];
    let mut t4000 = f64::INFINITY;
    for users in [1000usize, 2000, 3000, 4000] {
        let sc = gen_scenario(&ScenarioParams { users, periods: 1, seed: 9, ..ScenarioParams::default() }).unwrap();
        let mut times = vec![];
        for rep in 0..3u64 {
            let out = run_billing_period(&sc, &ProtocolConfig::new(Approach::Disclosed, EngineKind::Replicated, rep)).unwrap();
            assert!(out.ledger.passed());
            times.push(out.timings.total.as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        if users == 4000 {
            t4000 = times[2];
        }
        pts.push((users as f64, times[1]));
    }
    let r2 = linear_fit(&pts).map_or(0.0, |f| f.2);
    progress("approach 1 at 1000 users");
    let sc = gen_scenario(&ScenarioParams { users: 1000, periods: 1, seed: 9, ..ScenarioParams::default() }).unwrap();
    let t0 = Instant::now();
    let a1 = run_billing_period(&sc, &ProtocolConfig::new(Approach::SupplierCompare, EngineKind::Replicated, 1));
    let t_a1 = t0.elapsed().as_secs_f64();
    let a1_ok = a1.map(|o| o.ledger.passed()).unwrap_or(false);
    let timings: Vec<String> = pts.iter().map(|(n, t)| format!("{n}:{t:.3}s")).collect();
    (
        t4000 < 60.0 && r2 > 0.95 && a1_ok && t_a1 < 600.0,
        format!(
            "approach 3 worst 4000-user run {t4000:.2}s (< 60), median times {}, R^2 {r2:.4} (> 0.95); approach 1 at 1000 users {t_a1:.1}s (< 600)",
            timings.join(" ")
        ),
    )
}

fn main() -> ExitCode {
    let mut lines = vec![];
    let t = Instant::now();

    progress("comparison");
    let (ok, d) = comparison();
    emit(&mut lines, ok, "comparison correctness", d);

    progress("mpc programs");
    let (ok, d) = mpc();
    emit(&mut lines, ok, "mpc engine equality", d);

    progress("tamper");
    let (ok, d) = tamper();
    emit(&mut lines, ok, "tamper detection", d);

    progress("scale");
    let (ok, d) = scale();
    emit(&mut lines, ok, "scale smoke test", d);

    progress("zero-deviation settlement");
    let (ok, d) = zero_deviation_settlement();
    emit(&mut lines, ok, "settlement identity (zero deviations)", d);

    progress("oracle runs: 20 scenarios x 3 approaches x 2 engines");
    let mut tally = MainTally::default();
    main_runs(&mut tally);
    let per: Vec<String> = tally.by_approach.iter().map(|(a, d)| format!("approach {a} {:.0}s", d.as_secs_f64())).collect();
    emit(
        &mut lines,
        tally.oracle_mismatch.is_empty() && tally.rejected.is_empty() && tally.runs == 120,
        "oracle equivalence",
        format!(
            "{} runs, {} mismatching bills, {} runs with failures{}; runtime {:.0}s ({}), target 120s {}",
            tally.runs,
            tally.oracle_mismatch.len(),
            tally.rejected.len(),
            tally.oracle_mismatch.first().map(|s| format!(", first: {s}")).unwrap_or_default(),
            tally.elapsed.as_secs_f64(),
            per.join(", "),
            if tally.elapsed.as_secs() < 120 { "met" } else { "not met" }
        ),
    );
    emit(
        &mut lines,
        tally.approach_mismatch.is_empty() && tally.runs == 120,
        "approach equivalence",
        format!("(BL, SBal, SCap) compared across 6 runs per scenario, {} differences {:?}", tally.approach_mismatch.len(), tally.approach_mismatch.first()),
    );
    let nonzero: Vec<_> = tally.residues.iter().filter(|r| r.1 != 0).collect();
    emit(
        &mut lines,
        nonzero.is_empty(),
        "settlement identity (with deviations)",
        format!(
            "{}/{} scenarios with nonzero sum of SCap; residues {:?}{}",
            nonzero.len(),
            tally.residues.len(),
            nonzero.iter().take(5).map(|r| r.1).collect::<Vec<_>>(),
            tally.trace.clone().unwrap_or_default()
        ),
    );
    emit(
        &mut lines,
        tally.flow.is_empty() && tally.runs == 120,
        "information flow",
        format!("{} transcripts checked, violations {:?}", tally.runs, tally.flow.first()),
    );
    emit(
        &mut lines,
        tally.counts.is_empty() && tally.runs == 120,
        "operation counts",
        format!("{} closed-form checks over {} runs, {} mismatches {:?}", tally.count_checks, tally.runs, tally.counts.len(), tally.counts.first()),
    );

    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} criteria, {failed} failed, {:.0}s", lines.len(), t.elapsed().as_secs_f64());
    for l in lines.iter().filter(|l| !l.pass) {
        eprintln!("failed: {} ({})", l.name, l.detail.lines().next().unwrap_or(""));
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
