//! Seeded market scenarios: users, roles, zones, suppliers and per-period
//! bids and meter readings.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billing::{BillingError, Prices};

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario schema {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error(transparent)]
    Prices(#[from] BillingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: u32,
    pub zone: u32,
    pub supplier: u32,
    /// 1 for producers, 0 for consumers.
    pub d: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodData {
    pub prices: Prices,
    /// Accepted bid volume per user, Wh.
    pub bids: Vec<i64>,
    /// Metered volume per user, Wh.
    pub readings: Vec<i64>,
}

impl PeriodData {
    pub fn deviation(&self, user: usize) -> i64 {
        self.readings[user] - self.bids[user]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub seed: u64,
    /// Bits per encoded value.
    pub width: u32,
    pub suppliers: u32,
    pub zones: u32,
    pub users: Vec<UserSpec>,
    pub periods: Vec<PeriodData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub users: usize,
    pub periods: usize,
    pub suppliers: u32,
    pub zones: u32,
    pub width: u32,
    pub max_bid: i64,
    pub noise: i64,
    pub tp: i64,
    pub fit: i64,
    pub rp: i64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            users: 100,
            periods: 48,
            suppliers: 6,
            zones: 4,
            width: 12,
            max_bid: 2000,
            noise: 200,
            tp: 200,
            fit: 100,
            rp: 300,
            seed: 1,
        }
    }
}

impl ScenarioParams {
    fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Params(m.into()));
        if self.users == 0 || self.periods == 0 || self.suppliers == 0 || self.zones == 0 {
            return bad("users, periods, suppliers and zones must be positive");
        }
        if !(1..=20).contains(&self.width) {
            return bad("width must be in 1..=20");
        }
        if self.max_bid < 1 || self.max_bid >= 1 << self.width {
            return bad("max_bid must be in 1..2^width");
        }
        if self.noise < 0 {
            return bad("noise must be non-negative");
        }
        Prices::new(0, self.tp, self.fit, self.rp)?;
        Ok(())
    }
}

/// Scales the larger side of the market down so accepted sell and buy
/// volumes are equal, handing out the rounding remainder by largest
/// fractional part.
fn clear(raw: &mut [i64], roles: &[u8]) {
    let side = |d: u8| -> i64 { raw.iter().zip(roles).filter(|(_, &r)| r == d).map(|(b, _)| *b).sum() };
    let (sell, buy) = (side(1), side(0));
    if sell == buy {
        return;
    }
    let (big_role, big, target) = if sell > buy { (1, sell, buy) } else { (0, buy, sell) };
    let mut fracs = Vec::new();
    let mut assigned = 0i64;
    for (i, (b, &r)) in raw.iter_mut().zip(roles).enumerate() {
        if r != big_role {
            continue;
        }
        let num = *b as i128 * target as i128;
        let q = (num / big as i128) as i64;
        fracs.push((num % big as i128, i));
        *b = q;
        assigned += q;
    }
    fracs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in fracs.into_iter().take((target - assigned) as usize) {
        raw[i] += 1;
    }
}

pub fn gen_scenario(params: &ScenarioParams) -> Result<Scenario, ScenarioError> {
    params.check()?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let n = params.users;
    let mut roles: Vec<u8> = (0..n).map(|i| (i < n / 2) as u8).collect();
    roles.shuffle(&mut rng);
    let users: Vec<UserSpec> = (0..n)
        .map(|i| UserSpec {
            id: i as u32,
            zone: i as u32 % params.zones,
            supplier: i as u32 % params.suppliers,
            d: roles[i],
        })
        .collect();
    let cap = (1i64 << params.width) - 1;
    let periods = (0..params.periods)
        .map(|k| {
            let mut bids: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=params.max_bid)).collect();
            clear(&mut bids, &roles);
            let readings = bids
                .iter()
                .map(|&b| (b + rng.gen_range(-params.noise..=params.noise)).clamp(0, cap))
                .collect();
            PeriodData {
                prices: Prices { period: k, tp: params.tp, fit: params.fit, rp: params.rp },
                bids,
                readings,
            }
        })
        .collect();
    let scenario = Scenario {
        schema: SCENARIO_SCHEMA,
        seed: params.seed,
        width: params.width,
        suppliers: params.suppliers,
        zones: params.zones,
        users,
        periods,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema { found: self.schema, expected: SCENARIO_SCHEMA });
        }
        if self.users.is_empty() || self.periods.is_empty() {
            return bad("no users or no periods".into());
        }
        if !(1..=20).contains(&self.width) {
            return bad(format!("width {} out of range", self.width));
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.id as usize != i {
                return bad(format!("user ids must be 0..n, found {} at {i}", u.id));
            }
            if u.zone >= self.zones || u.supplier >= self.suppliers || u.d > 1 {
                return bad(format!("user {i} has an invalid zone, supplier or role"));
            }
        }
        let cap = (1i64 << self.width) - 1;
        for (k, p) in self.periods.iter().enumerate() {
            if p.prices.period != k {
                return bad(format!("period {k} has prices for period {}", p.prices.period));
            }
            p.prices.validate()?;
            if p.bids.len() != self.users.len() || p.readings.len() != self.users.len() {
                return bad(format!("period {k} does not cover every user"));
            }
            if p.bids.iter().chain(&p.readings).any(|&x| !(0..=cap).contains(&x)) {
                return bad(format!("period {k} has values outside 0..2^{}", self.width));
            }
        }
        Ok(())
    }

    /// True if every period's accepted sell volume equals its buy volume.
    pub fn is_cleared(&self) -> bool {
        self.periods.iter().all(|p| {
            let mut net = 0i64;
            for (u, b) in self.users.iter().zip(&p.bids) {
                net += if u.d == 1 { *b } else { -*b };
            }
            net == 0
        })
    }

    /// Copy with every reading set to its bid.
    pub fn without_deviations(&self) -> Self {
        let mut s = self.clone();
        for p in &mut s.periods {
            p.readings = p.bids.clone();
        }
        s
    }

    pub fn users_of(&self, supplier: u32) -> Vec<u32> {
        self.users.iter().filter(|u| u.supplier == supplier).map(|u| u.id).collect()
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("schema").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != SCENARIO_SCHEMA {
            return Err(ScenarioError::Schema { found, expected: SCENARIO_SCHEMA });
        }
        let s: Scenario = serde_json::from_value(value)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
