use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::party::{PartyId, PartyKind};
use super::payload::Payload;
use super::transcript::{Network, Step};
use super::{
    Approach, BillingLedger, Failure, Fault, OpCounts, ProtocolConfig, ProtocolError, RunOutput, SupplierRecord,
    Timings, UserRecord, LEDGER_SCHEMA,
};
use crate::algebra::{centered_lift, encode_signed, Fq, SignedBound};
use crate::billing::{
    bill_trading_period, deviation_costs, dso_audit, identify_s_clear, identify_s_supplier, market_summary,
    settle_supplier, signed_bill, user_clear_bill, AuditVerdict, MarketSummary, SupplierLedger, UserBillReport,
    UserPeriod, ZoneAggregate,
};
use crate::encoding::{encode_x, encode_y};
use crate::fhipe::{encrypt_families, encrypt_single, setup, FamilyCiphertexts, IpeMasterKey, LeftCiphertext};
use crate::masked_bill::{
    balance_key_term, decrypt, mask, period_key, supplier_balance_key, BillContext, KeyManager, KeySet,
};
use crate::mpc::{
    aggregate_user_deviations_many, aggregate_zone, identify_s_cs_many, Engine, EngineKind, IdealEngine,
    ReplicatedEngine, Share, SharedTuple, PARTIES,
};
use crate::pedersen::{combine, commit, open, CommitRandomness, Commitment};
use crate::scenario::{Scenario, UserSpec};

/// The key authority's records: issued keys, inner-product master keys and
/// user registrations.
#[derive(Debug, Default)]
pub struct KeyRegistry {
    manager: KeyManager,
    pub keys: BTreeMap<u32, KeySet<Fq>>,
    pub master_keys: BTreeMap<u32, IpeMasterKey>,
    pub zone: BTreeMap<u32, u32>,
    pub supplier: BTreeMap<u32, u32>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Issues fresh keys for billing period `bp` and sends each user its
    /// bundle and each supplier the users' registrations and public
    /// parameters. Issuing twice for the same `(user, bp)` fails.
    pub fn distribute<R: rand::RngCore + rand::CryptoRng>(
        &mut self,
        scenario: &Scenario,
        config: &ProtocolConfig,
        net: &mut Network,
        rng: &mut R,
    ) -> Result<(), ProtocolError> {
        let bp = config.billing_period;
        let dimension = config.layout.dimension(scenario.width);
        let periods = scenario.periods.len();
        for u in &scenario.users {
            let keys = self.manager.issue::<Fq, _>(u.id, bp, periods, rng)?;
            let (_, msk) = setup(dimension, rng)?;
            self.zone.insert(u.id, u.zone);
            self.supplier.insert(u.id, u.supplier);
            net.send(
                Step::Setup,
                None,
                PartyId::ka(),
                PartyId::user(u.id),
                Payload::KeyBundle { user: u.id, sk: keys.sk.clone(), sk_t: keys.sk_t.clone(), msk: msk.clone() },
            );
            let sup = PartyId::supplier(u.supplier);
            net.send(Step::Setup, None, PartyId::ka(), sup, Payload::Registration { user: u.id, supplier: u.supplier, zone: u.zone });
            net.send(Step::Setup, None, PartyId::ka(), sup, Payload::PublicParams { user: u.id, dimension });
            self.keys.insert(u.id, keys);
            self.master_keys.insert(u.id, msk);
        }
        Ok(())
    }

    pub fn issued_count(&self) -> usize {
        self.manager.issued_count()
    }
}

struct UserActor {
    spec: UserSpec,
    sk_t: Vec<Fq>,
    msk: Option<IpeMasterKey>,
    published: Vec<(ZoneAggregate, MarketSummary)>,
    history: Vec<UserPeriod>,
    bill: Option<i128>,
}

struct MeterActor {
    sk: Vec<Fq>,
    msk: Option<IpeMasterKey>,
    r_b: Option<CommitRandomness>,
    r_total: CommitRandomness,
}

#[derive(Default)]
struct Customer {
    zone: u32,
    dimension: usize,
    blc: Fq,
    commitment: Commitment,
    key: Option<Fq>,
    bill: i128,
}

#[derive(Default)]
struct PeriodInbox {
    meter: Option<(Fq, Option<Vec<LeftCiphertext>>, Commitment)>,
    lemo: Option<(Option<FamilyCiphertexts>, Commitment, Fq)>,
    clear_v: Option<i64>,
    charge: Vec<Share<Fq>>,
}

struct SupplierActor {
    id: u32,
    customers: BTreeMap<u32, Customer>,
    balance: Vec<i128>,
    totals: Vec<i64>,
    masked_balance: Fq,
}

struct Clock {
    timings: Timings,
}

impl Clock {
    fn add(&mut self, kind: PartyKind, step: Step, d: Duration) {
        *self.timings.by_party.entry(kind).or_default() += d;
        *self.timings.by_step.entry(step).or_default() += d;
    }
}

fn party_err(party: PartyId, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::Party { party, reason: reason.into() }
}

/// Runs setup and all trading periods of one billing period, then releases
/// bills, verifies deviations and settles.
pub fn run_billing_period(scenario: &Scenario, config: &ProtocolConfig) -> Result<RunOutput, ProtocolError> {
    scenario.validate()?;
    for f in &config.faults {
        f.validate(scenario)?;
    }
    let mut seed_rng = ChaCha20Rng::seed_from_u64(config.seed ^ scenario.seed.rotate_left(32));
    let engine_seed: u64 = seed_rng.gen();
    let session = config.billing_period as u64;
    match config.engine {
        EngineKind::Ideal => run_with(IdealEngine::new(session), scenario, config, seed_rng),
        EngineKind::Replicated => run_with(ReplicatedEngine::<Fq>::new(session, engine_seed), scenario, config, seed_rng),
    }
}

fn run_with<E: Engine<Fq>>(
    mut engine: E,
    scenario: &Scenario,
    config: &ProtocolConfig,
    mut rng: ChaCha20Rng,
) -> Result<RunOutput, ProtocolError> {
    let started = Instant::now();
    let mut clock = Clock { timings: Timings::default() };
    let mut net = Network::new(config.faults.clone());
    let mut ops = OpCounts::default();
    let width = scenario.width;
    let n_periods = scenario.periods.len();
    let cmp_bound = SignedBound::new::<Fq>(width + 2).map_err(|e| party_err(PartyId::server(0), e.to_string()))?;
    let wide = SignedBound::new::<Fq>(config.bill_bits).map_err(|e| party_err(PartyId::ka(), e.to_string()))?;
    let a1 = config.approach == Approach::SupplierCompare;

    // Prerequisites: keys and registrations.
    let t0 = Instant::now();
    let mut ka = KeyRegistry::new();
    ka.distribute(scenario, config, &mut net, &mut rng)?;
    clock.add(PartyKind::KeyAuthority, Step::Setup, t0.elapsed());

    let t0 = Instant::now();
    let mut users: Vec<UserActor> = Vec::with_capacity(scenario.users.len());
    let mut meters: Vec<MeterActor> = Vec::with_capacity(scenario.users.len());
    for u in &scenario.users {
        let me = PartyId::user(u.id);
        let mut actor = UserActor { spec: *u, sk_t: vec![], msk: None, published: vec![], history: vec![], bill: None };
        for env in net.drain(me) {
            if let Payload::KeyBundle { sk, sk_t, msk, .. } = env.payload {
                actor.sk_t = sk_t;
                actor.msk = Some(msk.clone());
                net.send(Step::Setup, None, me, PartyId::meter(u.id), Payload::MeterKeys { user: u.id, sk, msk });
            }
        }
        let mut meter = MeterActor { sk: vec![], msk: None, r_b: None, r_total: CommitRandomness::zero() };
        for env in net.drain(PartyId::meter(u.id)) {
            if let Payload::MeterKeys { sk, msk, .. } = env.payload {
                meter.sk = sk;
                meter.msk = Some(msk);
            }
        }
        if actor.sk_t.len() != n_periods || meter.sk.len() != n_periods {
            return Err(party_err(me, "incomplete key bundle"));
        }
        users.push(actor);
        meters.push(meter);
    }
    clock.add(PartyKind::User, Step::Setup, t0.elapsed());

    let t0 = Instant::now();
    let mut suppliers: Vec<SupplierActor> = (0..scenario.suppliers)
        .map(|j| SupplierActor { id: j, customers: BTreeMap::new(), balance: vec![], totals: vec![], masked_balance: Fq::from(0u64) })
        .collect();
    for s in &mut suppliers {
        for env in net.drain(PartyId::supplier(s.id)) {
            match env.payload {
                Payload::Registration { user, zone, .. } => {
                    s.customers.entry(user).or_default().zone = zone;
                }
                Payload::PublicParams { user, dimension } => {
                    s.customers.entry(user).or_default().dimension = dimension;
                }
                _ => {}
            }
        }
    }
    clock.add(PartyKind::Supplier, Step::Setup, t0.elapsed());

    let mut v_history: BTreeMap<u32, Vec<E::Shared>> = BTreeMap::new();
    let mut ka_dk: BTreeMap<u32, Fq> = BTreeMap::new();

    for (k, period) in scenario.periods.iter().enumerate() {
        let prices = period.prices;
        let pk = Some(k);

        // Bids: commitment to -b, masked role and (approach 1) encrypted bid go to LEMO.
        for (i, u) in users.iter().enumerate() {
            let t0 = Instant::now();
            let id = u.spec.id;
            let b = period.bids[i];
            let r_b = CommitRandomness::random(&mut rng);
            let neg_bid = commit(-(b as i128), &r_b);
            ops.user_commits += 1;
            let dc = mask(Fq::from(u.spec.d as u64), u.sk_t[k]);
            let bid = if a1 {
                let msk = u.msk.as_ref().ok_or_else(|| party_err(PartyId::user(id), "no master key"))?;
                let f = encrypt_families(msk, &encode_x(b as u64, width, config.layout)?, &mut rng)?;
                ops.right_encrypts += (f.less.len() + f.greater.len()) as u64;
                Some(f)
            } else {
                None
            };
            clock.add(PartyKind::User, Step::Bid, t0.elapsed());
            net.send(Step::Bid, pk, PartyId::user(id), PartyId::lemo(), Payload::BidArtifacts { user: id, bid, neg_bid, dc });
            net.send(Step::Bid, pk, PartyId::user(id), PartyId::meter(id), Payload::BidRandomness { user: id, r: r_b });
        }

        // Step 1: user tuples to the servers, meter tuples and LEMO tuples to suppliers.
        for (i, u) in users.iter_mut().enumerate() {
            let t0 = Instant::now();
            let id = u.spec.id;
            let m = period.readings[i];
            let v = period.deviation(i);
            u.history.push(UserPeriod { m, d: u.spec.d, v });
            let silent = config.faults.iter().any(|f| matches!(*f, Fault::Silent { user, period } if user == id && period == k));
            let lie: i64 = config
                .faults
                .iter()
                .filter_map(|f| match *f {
                    Fault::Deviation { user, period, delta } if user == id && period == k => Some(delta),
                    _ => None,
                })
                .sum();
            let vs = E::deal(encode_signed((v + lie) as i128), &mut rng);
            let ds = E::deal(Fq::from(u.spec.d as u64), &mut rng);
            clock.add(PartyKind::User, Step::Input, t0.elapsed());
            if !silent {
                for p in 0..PARTIES {
                    net.send(
                        Step::Input,
                        pk,
                        PartyId::user(id),
                        PartyId::server(p),
                        Payload::ServerTuple { user: id, supplier: u.spec.supplier, zone: u.spec.zone, v: vs[p].clone(), d: ds[p].clone() },
                    );
                }
            }
            if config.approach == Approach::Disclosed {
                net.send(Step::Input, pk, PartyId::user(id), PartyId::supplier(u.spec.supplier), Payload::ClearDeviation { user: id, v });
            }

            let t0 = Instant::now();
            let meter = &mut meters[i];
            for env in net.drain(PartyId::meter(id)) {
                if let Payload::BidRandomness { r, .. } = env.payload {
                    meter.r_b = Some(r);
                }
            }
            let r_b = meter.r_b.take().ok_or_else(|| party_err(PartyId::meter(id), "missing bid randomness"))?;
            let misreport: i64 = config
                .faults
                .iter()
                .filter_map(|f| match *f {
                    Fault::Reading { user, period, delta } if user == id && period == k => Some(delta),
                    _ => None,
                })
                .sum();
            let mc = mask(encode_signed((m + misreport) as i128), meter.sk[k]);
            let r_m = CommitRandomness::random(&mut rng);
            let commitment = commit(m as i128, &r_m);
            ops.meter_commits += 1;
            meter.r_total = meter.r_total + r_m + r_b;
            let reading = if a1 {
                let msk = meter.msk.as_ref().ok_or_else(|| party_err(PartyId::meter(id), "no master key"))?;
                let cts = encrypt_single(msk, &encode_y(m as u64, width, config.layout)?, &mut rng)?;
                ops.left_encrypts += cts.len() as u64;
                Some(cts)
            } else {
                None
            };
            clock.add(PartyKind::SmartMeter, Step::Input, t0.elapsed());
            net.send(
                Step::Input,
                pk,
                PartyId::meter(id),
                PartyId::supplier(u.spec.supplier),
                Payload::MeterTuple { user: id, zone: u.spec.zone, mc, reading, commitment },
            );
        }
        for env in net.drain(PartyId::lemo()) {
            if let Payload::BidArtifacts { user, bid, neg_bid, dc } = env.payload {
                let supplier = scenario.users[user as usize].supplier;
                net.send(
                    Step::Input,
                    pk,
                    PartyId::lemo(),
                    PartyId::supplier(supplier),
                    Payload::LemoTuple { user, supplier, bid, neg_bid, dc },
                );
            }
        }

        // Step 2, servers: zone totals, publication, and (approach 2) charge bits.
        let t0 = Instant::now();
        let mut inbox: BTreeMap<u32, (u32, [Option<Share<Fq>>; PARTIES], [Option<Share<Fq>>; PARTIES])> = BTreeMap::new();
        for p in 0..PARTIES {
            for env in net.drain(PartyId::server(p)) {
                if let Payload::ServerTuple { user, zone, v, d, .. } = env.payload {
                    let slot = inbox.entry(user).or_insert((zone, Default::default(), Default::default()));
                    slot.1[p] = Some(v);
                    slot.2[p] = Some(d);
                }
            }
        }
        let mut tuples: Vec<SharedTuple<E::Shared>> = Vec::with_capacity(users.len());
        for u in &scenario.users {
            let missing = || ProtocolError::MissingTuple { culprit: PartyId::user(u.id), period: k };
            let (zone, vs, ds) = inbox.remove(&u.id).ok_or_else(missing)?;
            let collect = |s: [Option<Share<Fq>>; PARTIES]| -> Option<[Share<Fq>; PARTIES]> {
                let [a, b, c] = s;
                Some([a?, b?, c?])
            };
            let vs = collect(vs).ok_or_else(missing)?;
            let ds = collect(ds).ok_or_else(missing)?;
            tuples.push(SharedTuple { user: u.id, supplier: u.supplier, zone, v: engine.join(&vs)?, d: engine.join(&ds)? });
        }
        let mut zone_shares = Vec::with_capacity(scenario.zones as usize);
        for z in 0..scenario.zones {
            let members: Vec<&SharedTuple<E::Shared>> = tuples.iter().filter(|t| t.zone == z).collect();
            zone_shares.push(aggregate_zone(&engine, &members)?);
        }
        let flat: Vec<E::Shared> = zone_shares.iter().flat_map(|z| [z.t.clone(), z.np.clone(), z.nc.clone()]).collect();
        let opened = engine.open_many(&flat)?;
        let lift = |x: Fq| centered_lift(x, wide).map_err(|e| party_err(PartyId::server(0), e.to_string()));
        let mut zones = Vec::with_capacity(scenario.zones as usize);
        for (z, c) in opened.chunks(3).enumerate() {
            let (t, np, nc) = (lift(c[0])?, lift(c[1])?, lift(c[2])?);
            if np < 0 || nc < 0 {
                return Err(party_err(PartyId::server(0), format!("negative count in zone {z}")));
            }
            zones.push(ZoneAggregate { zone: z as u32, period: k, t: t as i64, np: np as u64, nc: nc as u64 });
        }
        let summary = market_summary(k, &zones);
        for t in &tuples {
            v_history.entry(t.user).or_default().push(t.v.clone());
        }
        clock.add(PartyKind::Server, Step::Compute, t0.elapsed());

        let publication = Payload::Publication { zones: zones.clone(), summary: summary.clone() };
        for j in 0..scenario.suppliers {
            net.send(Step::Compute, pk, PartyId::server(0), PartyId::supplier(j), publication.clone());
        }
        for u in &scenario.users {
            net.send(Step::Compute, pk, PartyId::server(0), PartyId::user(u.id), publication.clone());
        }
        net.send(Step::Compute, pk, PartyId::server(0), PartyId::ka(), publication);

        if config.approach == Approach::ServerCompare {
            let t0 = Instant::now();
            let items: Vec<_> = tuples
                .iter()
                .map(|t| (t.v.clone(), summary.total, zones[t.zone as usize].t))
                .collect();
            let bits = identify_s_cs_many(&mut engine, &items, cmp_bound)?;
            let shares: Vec<_> = bits.iter().map(|b| engine.split(b)).collect();
            clock.add(PartyKind::Server, Step::Compute, t0.elapsed());
            for (t, sh) in tuples.iter().zip(shares) {
                for (p, share) in sh.into_iter().enumerate() {
                    net.send(Step::Compute, pk, PartyId::server(p), PartyId::supplier(t.supplier), Payload::ChargeShare { user: t.user, share });
                }
            }
        }

        for u in users.iter_mut() {
            for env in net.drain(PartyId::user(u.spec.id)) {
                if let Payload::Publication { zones, summary } = env.payload {
                    u.published.push((zones[u.spec.zone as usize], summary));
                }
            }
        }

        // Step 2, suppliers: charge bits, masked bills and balances.
        for s in &mut suppliers {
            let t0 = Instant::now();
            let me = PartyId::supplier(s.id);
            let mut published = None;
            let mut per_user: BTreeMap<u32, PeriodInbox> = BTreeMap::new();
            for env in net.drain(me) {
                match env.payload {
                    Payload::Publication { zones, summary } => published = Some((zones, summary)),
                    Payload::MeterTuple { user, mc, reading, commitment, .. } => {
                        per_user.entry(user).or_default().meter = Some((mc, reading, commitment))
                    }
                    Payload::LemoTuple { user, bid, neg_bid, dc, .. } => {
                        per_user.entry(user).or_default().lemo = Some((bid, neg_bid, dc))
                    }
                    Payload::ClearDeviation { user, v } => per_user.entry(user).or_default().clear_v = Some(v),
                    Payload::ChargeShare { user, share } => per_user.entry(user).or_default().charge.push(share),
                    _ => {}
                }
            }
            let (zones, summary) = published.ok_or_else(|| party_err(me, "no publication"))?;
            let mut masked_balance = Fq::from(0u64);
            let mut zero_tests = 0u64;
            let mut flags = Vec::with_capacity(s.customers.len());
            for (&uid, c) in s.customers.iter_mut() {
                let inbox = per_user.remove(&uid).ok_or(ProtocolError::MissingTuple { culprit: PartyId::meter(uid), period: k })?;
                let (mc, reading, cm) = inbox.meter.ok_or(ProtocolError::MissingTuple { culprit: PartyId::meter(uid), period: k })?;
                let (bid, cb, dc) = inbox.lemo.ok_or(ProtocolError::MissingTuple { culprit: PartyId::lemo(), period: k })?;
                let zone = &zones[c.zone as usize];
                let s_bit = match config.approach {
                    Approach::SupplierCompare => {
                        let reading = reading.ok_or_else(|| party_err(PartyId::meter(uid), "no encrypted reading"))?;
                        let bid = bid.ok_or_else(|| party_err(PartyId::lemo(), "no encrypted bid"))?;
                        if reading.iter().any(|ct| ct.elems.len() != c.dimension) {
                            return Err(party_err(PartyId::meter(uid), "ciphertext dimension"));
                        }
                        let res = identify_s_supplier(&reading, &bid, &summary, zone)?;
                        zero_tests += res.zero_tests as u64;
                        res.s
                    }
                    Approach::ServerCompare => {
                        let bit = E::reconstruct(&inbox.charge)?;
                        if bit != Fq::from(0u64) && bit != Fq::from(1u64) {
                            return Err(party_err(PartyId::server(0), format!("non-binary charge bit for user {uid}")));
                        }
                        bit == Fq::from(1u64)
                    }
                    Approach::Disclosed => {
                        let v = inbox.clear_v.ok_or(ProtocolError::MissingTuple { culprit: PartyId::user(uid), period: k })?;
                        identify_s_clear(v, &summary, zone)
                    }
                };
                let out = bill_trading_period(mc, dc, s_bit, &summary, zone, &prices);
                c.blc += out.bc;
                masked_balance += out.balance_delta;
                c.commitment = combine(&c.commitment, &combine(&cm, &cb));
                ops.supplier_homo_adds += 2;
                flags.push((uid, out.ctx));
            }
            ops.zero_tests += zero_tests;
            ops.zero_tests_by_supplier.push((s.id, k, zero_tests));
            s.totals.push(summary.total);
            clock.add(PartyKind::Supplier, Step::Compute, t0.elapsed());
            for (uid, ctx) in flags {
                net.send(Step::Compute, pk, me, PartyId::ka(), Payload::ChargeFlags { user: uid, c_p: ctx.c_p, c_c: ctx.c_c });
            }
            s.masked_balance = masked_balance;
        }

        // Step 2, key authority: period keys and supplier balance keys.
        let t0 = Instant::now();
        let mut published = None;
        let mut flags = Vec::new();
        for env in net.drain(PartyId::ka()) {
            match env.payload {
                Payload::Publication { zones, summary } => published = Some((zones, summary)),
                Payload::ChargeFlags { user, c_p, c_c } => flags.push((user, c_p, c_c)),
                _ => {}
            }
        }
        let (zones, summary) = published.ok_or_else(|| party_err(PartyId::ka(), "no publication"))?;
        let mut balance_terms: BTreeMap<u32, Vec<Fq>> = (0..scenario.suppliers).map(|j| (j, vec![])).collect();
        for (user, c_p, c_c) in flags {
            let keys = ka.keys.get(&user).ok_or_else(|| party_err(PartyId::ka(), format!("unknown user {user}")))?;
            let ctx = BillContext::new(c_p, c_c, c_p || c_c, k)?;
            let zone = &zones[ka.zone[&user] as usize];
            let costs = deviation_costs(zone, &summary, &prices);
            *ka_dk.entry(user).or_insert(Fq::from(0u64)) += period_key(keys.sk[k], keys.sk_t[k], prices.tp, &costs, &ctx);
            balance_terms
                .get_mut(&ka.supplier[&user])
                .ok_or_else(|| party_err(PartyId::ka(), "unknown supplier"))?
                .push(balance_key_term(keys.sk_t[k], &costs, &ctx, prices.fit, prices.rp));
        }
        clock.add(PartyKind::KeyAuthority, Step::Compute, t0.elapsed());
        for (j, terms) in balance_terms {
            net.send(Step::Compute, pk, PartyId::ka(), PartyId::supplier(j), Payload::BalanceKey { supplier: j, key: supplier_balance_key(terms) });
        }
        for s in &mut suppliers {
            let t0 = Instant::now();
            let me = PartyId::supplier(s.id);
            let mut balance = None;
            for env in net.drain(me) {
                if let Payload::BalanceKey { key, .. } = env.payload {
                    balance = Some(decrypt(s.masked_balance, key, wide)?);
                }
            }
            s.balance.push(balance.ok_or_else(|| party_err(PartyId::ka(), format!("no balance key for supplier {}", s.id)))?);
            clock.add(PartyKind::Supplier, Step::Compute, t0.elapsed());
        }
        debug_assert_eq!(net.pending(), 0);
    }

    // Step 3: bill keys, decryption, release and local acceptance.
    let t0 = Instant::now();
    for (&user, dk) in &ka_dk {
        net.send(Step::Bills, None, PartyId::ka(), PartyId::supplier(ka.supplier[&user]), Payload::BillKey { user, key: *dk });
    }
    clock.add(PartyKind::KeyAuthority, Step::Bills, t0.elapsed());
    for s in &mut suppliers {
        let t0 = Instant::now();
        let me = PartyId::supplier(s.id);
        for env in net.drain(me) {
            if let Payload::BillKey { user, key } = env.payload {
                s.customers.get_mut(&user).ok_or_else(|| party_err(me, format!("key for unknown user {user}")))?.key = Some(key);
            }
        }
        let mut bills = Vec::new();
        for (&uid, c) in s.customers.iter_mut() {
            let key = c.key.ok_or_else(|| party_err(PartyId::ka(), format!("no bill key for user {uid}")))?;
            c.bill = decrypt(c.blc, key, wide)?;
            bills.push((uid, c.bill));
        }
        clock.add(PartyKind::Supplier, Step::Bills, t0.elapsed());
        for (uid, bl) in bills {
            net.send(Step::Bills, None, me, PartyId::user(uid), Payload::Bill { user: uid, bl });
        }
    }
    let mut records = Vec::with_capacity(users.len());
    let mut failures = Vec::new();
    for u in users.iter_mut() {
        let t0 = Instant::now();
        let me = PartyId::user(u.spec.id);
        for env in net.drain(me) {
            if let Payload::Bill { bl, .. } = env.payload {
                u.bill = Some(bl);
            }
        }
        let received = u.bill.ok_or_else(|| party_err(PartyId::supplier(u.spec.supplier), format!("no bill for user {}", u.spec.id)))?;
        let (zones, summaries): (Vec<_>, Vec<_>) = u.published.iter().cloned().unzip();
        let prices: Vec<_> = scenario.periods.iter().map(|p| p.prices).collect();
        let local = user_clear_bill(&u.history, &summaries, &zones, &prices)?;
        let accepted = received == local.bl;
        if !accepted {
            failures.push(Failure::Acceptance { user: u.spec.id, received, expected: local.bl });
        }
        clock.add(PartyKind::User, Step::Bills, t0.elapsed());
        records.push(UserRecord {
            user: u.spec.id,
            supplier: u.spec.supplier,
            zone: u.spec.zone,
            d: u.spec.d,
            bl: received,
            local_bl: local.bl,
            bl_lem: local.bl_lem,
            accepted,
            deviation_total: 0,
            verified: false,
        });
    }

    // Step 4: deviation totals from the servers, randomness totals from meters.
    let t0 = Instant::now();
    let histories: Vec<&[E::Shared]> = scenario.users.iter().map(|u| v_history[&u.id].as_slice()).collect();
    let totals = aggregate_user_deviations_many(&mut engine, &histories, wide)?;
    clock.add(PartyKind::Server, Step::Verify, t0.elapsed());
    for (u, total) in scenario.users.iter().zip(&totals) {
        net.send(Step::Verify, None, PartyId::server(0), PartyId::supplier(u.supplier), Payload::DeviationTotal { user: u.id, total: *total });
        net.send(Step::Verify, None, PartyId::meter(u.id), PartyId::supplier(u.supplier), Payload::RandomnessTotal { user: u.id, r: meters[u.id as usize].r_total });
    }
    for s in &mut suppliers {
        let t0 = Instant::now();
        let mut got: BTreeMap<u32, (Option<i128>, Option<CommitRandomness>)> = BTreeMap::new();
        for env in net.drain(PartyId::supplier(s.id)) {
            match env.payload {
                Payload::DeviationTotal { user, total } => got.entry(user).or_default().0 = Some(total),
                Payload::RandomnessTotal { user, r } => got.entry(user).or_default().1 = Some(r),
                _ => {}
            }
        }
        for (&uid, c) in &s.customers {
            let (total, r) = got.remove(&uid).unwrap_or_default();
            let total = total.ok_or(ProtocolError::MissingTuple { culprit: PartyId::server(0), period: n_periods })?;
            let r = r.ok_or(ProtocolError::MissingTuple { culprit: PartyId::meter(uid), period: n_periods })?;
            let ok = open(&c.commitment, total, &r);
            ops.supplier_opens += 1;
            let rec = &mut records[uid as usize];
            rec.deviation_total = total;
            rec.verified = ok;
            if !ok {
                failures.push(Failure::Verification { user: uid });
            }
        }
        clock.add(PartyKind::Supplier, Step::Verify, t0.elapsed());
    }

    // Step 5: settlement and audit.
    let mut supplier_records = Vec::with_capacity(suppliers.len());
    for s in &suppliers {
        let t0 = Instant::now();
        let ledger = SupplierLedger {
            supplier: s.id,
            balance: s.balance.clone(),
            totals: s.totals.clone(),
            bills: s.customers.iter().map(|(&u, c)| (u, signed_bill(c.bill, scenario.users[u as usize].d))).collect(),
        };
        let scap = settle_supplier(&ledger);
        let delta: i128 = config
            .faults
            .iter()
            .filter_map(|f| match *f {
                Fault::Capital { supplier, delta } if supplier == s.id => Some(delta as i128),
                _ => None,
            })
            .sum();
        clock.add(PartyKind::Supplier, Step::Settle, t0.elapsed());
        net.send(Step::Settle, None, PartyId::supplier(s.id), PartyId::dso(), Payload::Capital { supplier: s.id, scap: scap + delta });
        supplier_records.push(SupplierRecord { supplier: s.id, balance: s.balance.clone(), scap, reported_scap: scap + delta });
    }
    for r in &records {
        let report = UserBillReport { user: r.user, supplier: r.supplier, d: r.d, bl: r.bl, bl_lem: r.bl_lem };
        net.send(Step::Settle, None, PartyId::user(r.user), PartyId::dso(), Payload::BillReport(report));
    }
    let t0 = Instant::now();
    let mut reports = Vec::new();
    let mut scaps = BTreeMap::new();
    for env in net.drain(PartyId::dso()) {
        match env.payload {
            Payload::BillReport(r) => reports.push(r),
            Payload::Capital { supplier, scap } => {
                scaps.insert(supplier, scap);
            }
            _ => {}
        }
    }
    let customers: BTreeMap<u32, Vec<u32>> = (0..scenario.suppliers).map(|j| (j, scenario.users_of(j))).collect();
    let audit = dso_audit(&reports, &scaps, &customers);
    for (&j, v) in &audit.verdicts {
        if matches!(v, AuditVerdict::Mismatch { .. } | AuditVerdict::Inconclusive { .. }) {
            failures.push(Failure::Audit { supplier: j });
        }
    }
    clock.add(PartyKind::Dso, Step::Settle, t0.elapsed());

    clock.timings.total = started.elapsed();
    let ledger = BillingLedger {
        schema: LEDGER_SCHEMA,
        scenario_seed: scenario.seed,
        approach: config.approach,
        engine: config.engine,
        faults: config.faults.clone(),
        users: records,
        suppliers: supplier_records,
        settlement_sum: audit.sum,
        audit,
        failures,
    };
    Ok(RunOutput {
        ledger,
        stats: engine.stats().clone(),
        transcript: net.into_transcript(),
        ops,
        timings: clock.timings,
    })
}
