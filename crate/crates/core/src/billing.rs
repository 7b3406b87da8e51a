//! Clear-side market math and billing: zonal weights, deviation costs,
//! the supplier's encrypted comparison, per-period bill assembly, the
//! user's local bill, deviation verification and settlement.

use std::collections::BTreeMap;

use ark_ff::PrimeField;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::Layout;
use crate::fhipe::{scan, FamilyCiphertexts, IpeError, LeftCiphertext};
use crate::masked_bill::{balance_step, bill_step, BillContext, DeviationCosts};
use crate::pedersen::{combine, open, CommitRandomness, Commitment};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BillingError {
    #[error("prices for period {period} violate FiT <= TP <= RP")]
    PriceOrder { period: usize },
    #[error("negative price in period {period}")]
    NegativePrice { period: usize },
    #[error("missing {what} for period {period}")]
    Missing { what: &'static str, period: usize },
    #[error("comparison failed: {0}")]
    Comparison(#[from] IpeError),
}

/// Unit prices in milli-currency per Wh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prices {
    pub period: usize,
    pub tp: i64,
    pub fit: i64,
    pub rp: i64,
}

impl Prices {
    pub fn new(period: usize, tp: i64, fit: i64, rp: i64) -> Result<Self, BillingError> {
        let p = Self { period, tp, fit, rp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BillingError> {
        if self.fit < 0 {
            return Err(BillingError::NegativePrice { period: self.period });
        }
        if !(self.fit <= self.tp && self.tp <= self.rp) {
            return Err(BillingError::PriceOrder { period: self.period });
        }
        Ok(())
    }
}

/// Published zone totals for one trading period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneAggregate {
    pub zone: u32,
    pub period: usize,
    pub t: i64,
    pub np: u64,
    pub nc: u64,
}

impl ZoneAggregate {
    pub fn users(&self) -> u64 {
        self.np + self.nc
    }
}

/// Global deviation `T` and zonal weight `W`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketSummary {
    pub period: usize,
    pub total: i64,
    pub weight: Ratio<i128>,
}

impl MarketSummary {
    /// True if the zone carries part of `T`.
    pub fn eligible(&self, zone: &ZoneAggregate) -> bool {
        (self.total > 0 && zone.t > 0) || (self.total < 0 && zone.t < 0)
    }
}

/// `T = sum t_z`, `W = T / sum of the t_z sharing T's sign`.
pub fn market_summary(period: usize, zones: &[ZoneAggregate]) -> MarketSummary {
    let total: i64 = zones.iter().map(|z| z.t).sum();
    let eligible: i128 = zones
        .iter()
        .filter(|z| (total > 0 && z.t > 0) || (total < 0 && z.t < 0))
        .map(|z| z.t as i128)
        .sum();
    let weight = if total == 0 || eligible == 0 {
        Ratio::zero()
    } else {
        Ratio::new(total as i128, eligible)
    };
    MarketSummary { period, total, weight }
}

/// Nearest integer, ties to even.
pub fn round_half_even(r: &Ratio<i128>) -> i128 {
    let floor = r.floor();
    let frac = r - floor;
    let half = Ratio::new(1, 2);
    let f = *floor.numer();
    if frac > half || (frac == half && f.rem_euclid(2) != 0) {
        f + 1
    } else {
        f
    }
}

/// `round_half_even(t_z * W / count)`, or 0 for an empty class.
pub fn share_quantity(zone_total: i64, weight: &Ratio<i128>, count: u64) -> i64 {
    if count == 0 {
        return 0;
    }
    round_half_even(&(weight * zone_total as i128 / count as i128)) as i64
}

pub fn deviation_costs(zone: &ZoneAggregate, summary: &MarketSummary, prices: &Prices) -> DeviationCosts {
    let period = summary.period;
    if summary.weight.is_zero() {
        return DeviationCosts { period, ..Default::default() };
    }
    if summary.eligible(zone) {
        if summary.total > 0 && zone.np == 0 {
            log::warn!("zone {} period {}: surplus share has no producers, dropped", zone.zone, period);
        }
        if summary.total < 0 && zone.nc == 0 {
            log::warn!("zone {} period {}: shortfall share has no consumers, dropped", zone.zone, period);
        }
    }
    let share_p = share_quantity(zone.t, &summary.weight, zone.np);
    let share_c = share_quantity(zone.t, &summary.weight, zone.nc);
    DeviationCosts {
        period,
        share_p,
        share_c,
        dev_p: share_p as i128 * (prices.fit - prices.tp) as i128,
        dev_c: share_c as i128 * (prices.rp - prices.tp) as i128,
    }
}

/// `s` from a clear deviation.
pub fn identify_s_clear(v: i64, summary: &MarketSummary, zone: &ZoneAggregate) -> bool {
    (summary.total > 0 && zone.t > 0 && v > 0) || (summary.total < 0 && zone.t < 0 && v < 0)
}

/// Outcome of the supplier's encrypted comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupplierComparison {
    pub s: bool,
    pub zero_tests: usize,
}

/// `s` from the encrypted reading and bid. The bid families come from
/// `encode_x(b)` and the reading from `encode_y(m)`, so a "less" hit means
/// `b < m`. Zones that cannot be charged are answered without decrypting.
pub fn identify_s_supplier(
    reading: &[LeftCiphertext],
    bid: &FamilyCiphertexts,
    summary: &MarketSummary,
    zone: &ZoneAggregate,
) -> Result<SupplierComparison, BillingError> {
    use std::cmp::Ordering;
    if !summary.eligible(zone) {
        return Ok(SupplierComparison { s: false, zero_tests: 0 });
    }
    let res = scan(reading, bid)?;
    let s = match res.hit.map(|h| h.ordering) {
        Some(Ordering::Less) => summary.total > 0 && zone.t > 0,
        Some(Ordering::Greater) => summary.total < 0 && zone.t < 0,
        _ => false,
    };
    Ok(SupplierComparison { s, zero_tests: res.zero_tests })
}

/// Worst-case zero tests for one comparison.
pub fn max_zero_tests(width: u32, _layout: Layout) -> usize {
    2 * width as usize
}

/// One user's masked output for one trading period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodBill<F> {
    pub bc: F,
    pub balance_delta: F,
    pub ctx: BillContext,
    pub costs: DeviationCosts,
}

pub fn bill_trading_period<F: PrimeField>(
    mc: F,
    dc: F,
    s: bool,
    summary: &MarketSummary,
    zone: &ZoneAggregate,
    prices: &Prices,
) -> PeriodBill<F> {
    let ctx = BillContext::from_total(summary.total, s, summary.period);
    let costs = deviation_costs(zone, summary, prices);
    PeriodBill {
        bc: bill_step(mc, dc, prices.tp, &costs, &ctx),
        balance_delta: balance_step(dc, &costs, &ctx, prices.fit, prices.rp),
        ctx,
        costs,
    }
}

/// What a user knows about one of its trading periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPeriod {
    pub m: i64,
    pub d: u8,
    pub v: i64,
}

/// Bill with and without the deviation charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearBill {
    pub bl: i128,
    pub bl_lem: i128,
}

/// The user's own bill for a billing period, computed from published
/// market data. Producers sell their surplus share at FiT, consumers buy
/// their shortfall share at RP; each share is priced out of the LEM term.
pub fn user_clear_bill(
    history: &[UserPeriod],
    summaries: &[MarketSummary],
    zones: &[ZoneAggregate],
    prices: &[Prices],
) -> Result<ClearBill, BillingError> {
    let mut bl = 0i128;
    let mut bl_lem = 0i128;
    for (k, u) in history.iter().enumerate() {
        let summary = summaries.get(k).ok_or(BillingError::Missing { what: "summary", period: k })?;
        let zone = zones.get(k).ok_or(BillingError::Missing { what: "zone", period: k })?;
        let p = prices.get(k).ok_or(BillingError::Missing { what: "prices", period: k })?;
        let tp = p.tp as i128;
        let mut lem = u.m as i128 * tp;
        let mut full = lem;
        if summary.total > 0 && zone.t > 0 && u.v > 0 && u.d == 1 {
            let share = share_quantity(zone.t, &summary.weight, zone.np) as i128;
            lem -= tp * share;
            full = lem + p.fit as i128 * share;
        } else if summary.total < 0 && zone.t < 0 && u.v < 0 && u.d == 0 {
            let share = share_quantity(zone.t, &summary.weight, zone.nc) as i128;
            lem -= tp * share;
            full = lem + p.rp as i128 * share;
        }
        bl_lem += lem;
        bl += full;
    }
    Ok(ClearBill { bl, bl_lem })
}

/// Opens `prod_k <m_k> * <-b_k>` with the servers' `V` and the meter's `R`.
pub fn verify_user_deviations(
    readings: &[Commitment],
    neg_bids: &[Commitment],
    total_deviation: i128,
    randomness: &CommitRandomness,
) -> bool {
    if readings.len() != neg_bids.len() {
        return false;
    }
    let folded = readings
        .iter()
        .zip(neg_bids)
        .fold(Commitment::identity(), |acc, (m, b)| combine(&acc, &combine(m, b)));
    open(&folded, total_deviation, randomness)
}

/// `(1 - 2d) * BL`: positive when the user owes money.
pub fn signed_bill(bl: i128, d: u8) -> i128 {
    if d == 1 {
        -bl
    } else {
        bl
    }
}

/// A supplier's clear books for one billing period.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplierLedger {
    pub supplier: u32,
    /// Corrected balance per trading period.
    pub balance: Vec<i128>,
    /// Market total `T` per trading period.
    pub totals: Vec<i64>,
    /// User id to signed bill.
    pub bills: BTreeMap<u32, i128>,
}

/// `SCap = -sum BL_signed + sum_k sign(T_k) * SBal_k`.
///
/// The balance is weighted by the sign of `T` because surplus periods
/// route producer charges and shortfall periods route consumer charges
/// through it with opposite orientation relative to the signed bills.
pub fn settle_supplier(ledger: &SupplierLedger) -> i128 {
    let bills: i128 = ledger.bills.values().sum();
    let bal: i128 = ledger
        .balance
        .iter()
        .zip(&ledger.totals)
        .map(|(b, t)| t.signum() as i128 * b)
        .sum();
    -bills + bal
}

/// A user's statement to the distribution operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBillReport {
    pub user: u32,
    pub supplier: u32,
    pub d: u8,
    pub bl: i128,
    pub bl_lem: i128,
}

// Tagged enums buffer their fields, and the buffer has no i128.
pub(crate) mod i128_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &i128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<i128, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum AuditVerdict {
    Ok,
    Mismatch {
        #[serde(with = "i128_text")]
        expected: i128,
        #[serde(with = "i128_text")]
        reported: i128,
    },
    Inconclusive { missing: Vec<u32> },
    NotAudited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub triggered: bool,
    pub sum: i128,
    pub verdicts: BTreeMap<u32, AuditVerdict>,
}

impl AuditOutcome {
    pub fn mismatched(&self) -> Vec<u32> {
        self.verdicts
            .iter()
            .filter(|(_, v)| matches!(v, AuditVerdict::Mismatch { .. }))
            .map(|(j, _)| *j)
            .collect()
    }
}

/// `-sum (1 - 2d) BL_LEM` over one supplier's users.
pub fn dso_reference<'a, I: IntoIterator<Item = &'a UserBillReport>>(reports: I) -> i128 {
    -reports.into_iter().map(|r| signed_bill(r.bl_lem, r.d)).sum::<i128>()
}

/// Audits every supplier when the reported capitals do not sum to zero.
/// `customers` lists each supplier's expected users.
pub fn dso_audit(
    reports: &[UserBillReport],
    scaps: &BTreeMap<u32, i128>,
    customers: &BTreeMap<u32, Vec<u32>>,
) -> AuditOutcome {
    let sum: i128 = scaps.values().sum();
    if sum == 0 {
        let verdicts = scaps.keys().map(|&j| (j, AuditVerdict::NotAudited)).collect();
        return AuditOutcome { triggered: false, sum, verdicts };
    }
    audit_all(reports, scaps, customers, sum)
}

/// Compares every supplier with its users' reports regardless of the sum.
pub fn dso_full_audit(
    reports: &[UserBillReport],
    scaps: &BTreeMap<u32, i128>,
    customers: &BTreeMap<u32, Vec<u32>>,
) -> AuditOutcome {
    audit_all(reports, scaps, customers, scaps.values().sum())
}

fn audit_all(
    reports: &[UserBillReport],
    scaps: &BTreeMap<u32, i128>,
    customers: &BTreeMap<u32, Vec<u32>>,
    sum: i128,
) -> AuditOutcome {
    let mut by_user: BTreeMap<u32, &UserBillReport> = BTreeMap::new();
    for r in reports {
        by_user.insert(r.user, r);
    }
    let mut verdicts = BTreeMap::new();
    for (&j, &reported) in scaps {
        let users = customers.get(&j).cloned().unwrap_or_default();
        let missing: Vec<u32> = users
            .iter()
            .copied()
            .filter(|u| by_user.get(u).map_or(true, |r| r.supplier != j))
            .collect();
        let verdict = if !missing.is_empty() {
            AuditVerdict::Inconclusive { missing }
        } else {
            let expected = dso_reference(users.iter().map(|u| by_user[u]));
            if expected == reported {
                AuditVerdict::Ok
            } else {
                AuditVerdict::Mismatch { expected, reported }
            }
        };
        verdicts.insert(j, verdict);
    }
    AuditOutcome { triggered: true, sum, verdicts }
}
