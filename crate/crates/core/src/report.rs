//! Run reports: instrumented counts against their closed forms, traffic per
//! party pair, and timing rows for sweeps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mpc::EngineKind;
use crate::protocol::{size, Approach, PartyKind, ProtocolConfig, RunOutput, Step};
use crate::scenario::Scenario;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Exact,
    AtMost,
}

/// One measured counter next to its closed-form value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountCheck {
    pub section: String,
    pub name: String,
    pub formula: String,
    pub bound: Bound,
    pub expected: u64,
    pub measured: u64,
}

impl CountCheck {
    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::Exact => self.measured == self.expected,
            Bound::AtMost => self.measured <= self.expected,
        }
    }
}

/// Traffic between two party kinds over the whole run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTraffic {
    pub from: PartyKind,
    pub to: PartyKind,
    pub kind: String,
    pub messages: u64,
    pub bytes: u64,
    pub model_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub approach: Approach,
    pub engine: EngineKind,
    pub users: u64,
    pub periods: u64,
    pub suppliers: u32,
    pub zones: u32,
    pub width: u32,
    pub threads: usize,
    pub checks: Vec<CountCheck>,
    pub links: Vec<LinkTraffic>,
    pub mpc: Vec<(String, u64)>,
    pub passed: bool,
    pub failures: usize,
    pub settlement_sum: i128,
}

struct Ctx<'a> {
    out: &'a RunOutput,
    checks: Vec<CountCheck>,
}

impl Ctx<'_> {
    fn check(&mut self, section: &str, name: &str, formula: &str, bound: Bound, expected: u64, measured: u64) {
        self.checks.push(CountCheck {
            section: section.into(),
            name: name.into(),
            formula: formula.into(),
            bound,
            expected,
            measured,
        });
    }

    fn bits(&self, from: PartyKind, to: PartyKind, kinds: &[&str]) -> u64 {
        self.out
            .transcript
            .filter(|e| e.from.kind == from && e.to.kind == to && kinds.contains(&e.kind.as_str()))
            .map(|e| e.model_bits)
            .sum()
    }
}

impl RunReport {
    pub fn new(scenario: &Scenario, config: &ProtocolConfig, out: &RunOutput) -> Self {
        use size::*;
        use Bound::*;
        use PartyKind::*;
        let n = scenario.users.len() as u64;
        let k = scenario.periods.len() as u64;
        let nv = scenario.width as u64;
        let a1 = config.approach == Approach::SupplierCompare;
        let a2 = config.approach == Approach::ServerCompare;
        let on = |b: bool, x: u64| if b { x } else { 0 };
        let dim = config.layout.dimension(scenario.width) as u64;
        let mk_bits = (2 * dim * dim + 1) * 32 * 8;
        let mut c = Ctx { out, checks: vec![] };
        let ops = &out.ops;

        c.check("ops", "sm_commit", "N_k*N_i", Exact, k * n, ops.meter_commits);
        c.check("ops", "user_commit", "N_k*N_i", Exact, k * n, ops.user_commits);
        c.check("ops", "supplier_homo_add", "N_k*2*N_i", Exact, 2 * k * n, ops.supplier_homo_adds);
        c.check("ops", "supplier_open", "N_i", Exact, n, ops.supplier_opens);
        c.check("ops", "sm_left_encrypt", "A1: N_k*N_i*N_v", Exact, on(a1, k * n * nv), ops.left_encrypts);
        c.check("ops", "user_right_encrypt", "A1: N_k*N_i*2*N_v", Exact, on(a1, 2 * k * n * nv), ops.right_encrypts);
        for &(j, period, zt) in &ops.zero_tests_by_supplier {
            let nj = scenario.users_of(j).len() as u64;
            c.check("ops", &format!("supplier{j}_zero_tests_tp{period}"), "A1: N_i^j*2*N_v", AtMost, on(a1, nj * 2 * nv), zt);
        }
        c.check("ops", "cs_mult", "A2: N_k*N_i", Exact, on(a2, k * n), out.stats.multiplications);
        c.check("ops", "cs_comp", "A2: N_k*N_i", Exact, on(a2, k * n), out.stats.comparisons);

        let users_cs = c.bits(User, Server, &["server_tuple"]);
        c.check("comm", "users_to_cs", "N_k*6*N_i*|[X]|", Exact, k * 6 * n * SHARE, users_cs);
        let sm_tp = c.bits(SmartMeter, Supplier, &["meter_tuple"]);
        c.check(
            "comm",
            "sm_to_suppliers_tp",
            "N_k*N_i*(|X|+|<X>|) + A1: N_k*N_i*N_v*|CT_l|",
            Exact,
            k * n * (CIPHERTEXT + COMMITMENT) + on(a1, k * n * nv * CT_LEFT),
            sm_tp,
        );
        let sm_bp = c.bits(SmartMeter, Supplier, &["randomness_total"]);
        c.check("comm", "sm_to_suppliers_bp", "N_i*|R|", Exact, n * RANDOMNESS, sm_bp);
        let lemo = c.bits(Lemo, Supplier, &["lemo_tuple"]);
        c.check(
            "comm",
            "lemo_to_suppliers_tp",
            "N_k*N_i*(|<X>|+|C|) + A1: N_k*2*N_i*N_v*|CT_r|",
            Exact,
            k * n * (COMMITMENT + CIPHERTEXT) + on(a1, k * 2 * n * nv * CT_RIGHT),
            lemo,
        );
        let cs_tp = c.bits(Server, Supplier, &["charge_share"]);
        c.check("comm", "cs_to_suppliers_tp", "A2: N_k*3*N_i*|[X]|", Exact, on(a2, k * 3 * n * SHARE), cs_tp);
        let cs_bp = c.bits(Server, Supplier, &["deviation_total"]);
        c.check("comm", "cs_to_suppliers_bp", "N_i*|X|", Exact, n * VALUE, cs_bp);
        let bills = c.bits(Supplier, User, &["bill"]);
        c.check("comm", "suppliers_to_users_bp", "N_i*|X|", Exact, n * VALUE, bills);
        let flags = c.bits(Supplier, KeyAuthority, &["charge_flags"]);
        c.check("comm", "suppliers_to_ka_tp", "N_k*2*N_i*|CN|", Exact, k * 2 * n * FLAG, flags);
        let keys = c.bits(KeyAuthority, User, &["key_bundle"]);
        c.check("comm", "ka_to_users_bp", "N_i*(2*N_k*|K|+|MK|)", Exact, n * (2 * k * KEY + mk_bits), keys);

        let mut links: BTreeMap<(PartyKind, PartyKind, String), (u64, u64, u64)> = BTreeMap::new();
        for e in &out.transcript.entries {
            let slot = links.entry((e.from.kind, e.to.kind, e.kind.clone())).or_default();
            slot.0 += 1;
            slot.1 += e.bytes as u64;
            slot.2 += e.model_bits;
        }
        let links = links
            .into_iter()
            .map(|((from, to, kind), (messages, bytes, model_bits))| LinkTraffic { from, to, kind, messages, bytes, model_bits })
            .collect();

        Self {
            schema: REPORT_SCHEMA,
            approach: config.approach,
            engine: config.engine,
            users: n,
            periods: k,
            suppliers: scenario.suppliers,
            zones: scenario.zones,
            width: scenario.width,
            threads: 1,
            checks: c.checks,
            links,
            mpc: out.stats.flat_record(),
            passed: out.ledger.passed(),
            failures: out.ledger.failures.len(),
            settlement_sum: out.ledger.settlement_sum,
        }
    }

    pub fn counts_match(&self) -> bool {
        self.checks.iter().all(CountCheck::pass)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CountCheck> {
        self.checks.iter().filter(|c| !c.pass())
    }

    /// `section,name,detail,expected,measured,status` rows. Contains no
    /// timings, so it is identical across runs with the same seed.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["section", "name", "detail", "expected", "measured", "status"])?;
        let meta = [
            ("approach", self.approach.to_string()),
            ("engine", self.engine.to_string()),
            ("users", self.users.to_string()),
            ("periods", self.periods.to_string()),
            ("suppliers", self.suppliers.to_string()),
            ("zones", self.zones.to_string()),
            ("width", self.width.to_string()),
            ("threads", self.threads.to_string()),
        ];
        for (k, v) in meta {
            w.write_record(["meta", k, "", "", &v, ""])?;
        }
        for c in &self.checks {
            let bound = match c.bound {
                Bound::Exact => "==",
                Bound::AtMost => "<=",
            };
            let status = if c.pass() { "pass" } else { "FAIL" };
            w.write_record([
                c.section.as_str(),
                &c.name,
                &format!("{bound} {}", c.formula),
                &c.expected.to_string(),
                &c.measured.to_string(),
                status,
            ])?;
        }
        for l in &self.links {
            let name = format!("{}->{}", l.from.label(), l.to.label());
            let detail = format!("{} msgs={} bytes={}", l.kind, l.messages, l.bytes);
            w.write_record(["link", &name, &detail, "", &l.model_bits.to_string(), ""])?;
        }
        for (k, v) in &self.mpc {
            w.write_record(["mpc", k, "", "", &v.to_string(), ""])?;
        }
        let verdict = if self.passed { "pass" } else { "FAIL" };
        w.write_record(["verdict", "failures", "", "0", &self.failures.to_string(), verdict])?;
        w.write_record(["verdict", "settlement_sum", "", "", &self.settlement_sum.to_string(), ""])?;
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Wall-clock figures for one run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub users: usize,
    pub periods: usize,
    pub approach: Approach,
    pub engine: EngineKind,
    pub threads: usize,
    pub total_s: f64,
    pub user_s: f64,
    pub sm_s: f64,
    pub lemo_s: f64,
    pub supplier_s: f64,
    pub cs_s: f64,
    pub ka_s: f64,
    pub dso_s: f64,
    pub compute_step_s: f64,
    pub bytes: u64,
    pub model_bits: u64,
    pub mpc_online_bytes: u64,
}

impl BenchRow {
    pub fn new(scenario: &Scenario, config: &ProtocolConfig, out: &RunOutput) -> Self {
        let t = |k: PartyKind| out.timings.by_party.get(&k).map_or(0.0, |d| d.as_secs_f64());
        Self {
            users: scenario.users.len(),
            periods: scenario.periods.len(),
            approach: config.approach,
            engine: config.engine,
            threads: 1,
            total_s: out.timings.total.as_secs_f64(),
            user_s: t(PartyKind::User),
            sm_s: t(PartyKind::SmartMeter),
            lemo_s: t(PartyKind::Lemo),
            supplier_s: t(PartyKind::Supplier),
            cs_s: t(PartyKind::Server),
            ka_s: t(PartyKind::KeyAuthority),
            dso_s: t(PartyKind::Dso),
            compute_step_s: out.timings.by_step.get(&Step::Compute).map_or(0.0, |d| d.as_secs_f64()),
            bytes: out.transcript.entries.iter().map(|e| e.bytes as u64).sum(),
            model_bits: out.transcript.entries.iter().map(|e| e.model_bits).sum(),
            mpc_online_bytes: out.stats.online.total_bytes(),
        }
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Least-squares line through the points: `(slope, intercept, r2)`.
/// `None` with fewer than two distinct x values.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_a_line_is_exact() {
        let pts: Vec<_> = (1..=4).map(|i| (i as f64 * 1000.0, 0.5 + 2e-3 * i as f64 * 1000.0)).collect();
        let (slope, intercept, r2) = linear_fit(&pts).unwrap();
        assert!((slope - 2e-3).abs() < 1e-12);
        assert!((intercept - 0.5).abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_spread() {
        assert!(linear_fit(&[(1.0, 2.0)]).is_none());
        assert!(linear_fit(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn noisy_fit_has_lower_r2() {
        let pts = [(1.0, 1.0), (2.0, 3.0), (3.0, 2.0), (4.0, 4.0)];
        let (_, _, r2) = linear_fit(&pts).unwrap();
        assert!(r2 > 0.5 && r2 < 0.9);
    }
}
