//! Message payloads, their wire encoding and the data classes they carry.

use serde::{Deserialize, Serialize};

use crate::algebra::{field_to_bytes, Fq};
use crate::billing::{MarketSummary, UserBillReport, ZoneAggregate};
use crate::fhipe::{FamilyCiphertexts, IpeMasterKey, LeftCiphertext};
use crate::mpc::Share;
use crate::pedersen::{CommitRandomness, Commitment};

/// Nominal sizes in bits used by the communication model.
pub mod size {
    pub const SHARE: u64 = 64;
    pub const COMMITMENT: u64 = 256;
    pub const RANDOMNESS: u64 = 256;
    pub const KEY: u64 = 128;
    pub const VALUE: u64 = 32;
    pub const CIPHERTEXT: u64 = 32;
    pub const FLAG: u64 = 1;
    /// One left inner-product ciphertext (550 bytes).
    pub const CT_LEFT: u64 = 550 * 8;
    /// One right inner-product ciphertext (1650 bytes).
    pub const CT_RIGHT: u64 = 1650 * 8;
}

/// Classes of information a payload reveals to its receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Datum {
    ClearReading,
    ClearBid,
    ClearRole,
    ClearDeviation,
    DeviationShare,
    RoleShare,
    MaskedReading,
    MaskedRole,
    ReadingCiphertext,
    BidCiphertext,
    ReadingCommitment,
    BidCommitment,
    CommitOpening,
    MaskKeys,
    IpeKey,
    IpeParams,
    Registration,
    ZoneTotals,
    ChargeShare,
    ChargeFlags,
    DecryptionKey,
    Bill,
    DeviationTotal,
    LemBill,
    Capital,
}

#[derive(Debug, Clone)]
pub enum Payload {
    /// `(S_i, S_i^t, msk_i)` for one billing period.
    KeyBundle { user: u32, sk: Vec<Fq>, sk_t: Vec<Fq>, msk: IpeMasterKey },
    /// The meter's part of the bundle, over the home link.
    MeterKeys { user: u32, sk: Vec<Fq>, msk: IpeMasterKey },
    /// Who supplies the user and where it sits.
    Registration { user: u32, supplier: u32, zone: u32 },
    PublicParams { user: u32, dimension: usize },
    /// Submitted with the bid, before clearing.
    BidArtifacts { user: u32, bid: Option<FamilyCiphertexts>, neg_bid: Commitment, dc: Fq },
    BidRandomness { user: u32, r: CommitRandomness },
    ServerTuple { user: u32, supplier: u32, zone: u32, v: Share<Fq>, d: Share<Fq> },
    MeterTuple { user: u32, zone: u32, mc: Fq, reading: Option<Vec<LeftCiphertext>>, commitment: Commitment },
    LemoTuple { user: u32, supplier: u32, bid: Option<FamilyCiphertexts>, neg_bid: Commitment, dc: Fq },
    Publication { zones: Vec<ZoneAggregate>, summary: MarketSummary },
    ChargeShare { user: u32, share: Share<Fq> },
    ClearDeviation { user: u32, v: i64 },
    ChargeFlags { user: u32, c_p: bool, c_c: bool },
    BalanceKey { supplier: u32, key: Fq },
    BillKey { user: u32, key: Fq },
    Bill { user: u32, bl: i128 },
    DeviationTotal { user: u32, total: i128 },
    RandomnessTotal { user: u32, r: CommitRandomness },
    BillReport(UserBillReport),
    Capital { supplier: u32, scap: i128 },
}

struct Wire(Vec<u8>);

impl Wire {
    fn u32(&mut self, x: u32) -> &mut Self {
        self.0.extend_from_slice(&x.to_le_bytes());
        self
    }
    fn i64(&mut self, x: i64) -> &mut Self {
        self.0.extend_from_slice(&x.to_le_bytes());
        self
    }
    fn i128(&mut self, x: i128) -> &mut Self {
        self.0.extend_from_slice(&x.to_le_bytes());
        self
    }
    fn u8(&mut self, x: u8) -> &mut Self {
        self.0.push(x);
        self
    }
    fn raw(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(b);
        self
    }
    fn field(&mut self, x: &Fq) -> &mut Self {
        self.raw(&field_to_bytes(x))
    }
    fn share(&mut self, s: &Share<Fq>) -> &mut Self {
        self.u8(s.party).u8(s.components.len() as u8);
        for c in &s.components {
            self.field(c);
        }
        self
    }
    fn families(&mut self, f: &Option<FamilyCiphertexts>) -> &mut Self {
        match f {
            None => self.u8(0),
            Some(f) => {
                self.u8(1).u32(f.less.len() as u32);
                for ct in f.less.iter().chain(&f.greater) {
                    self.raw(&ct.to_bytes());
                }
                self
            }
        }
    }
}

impl Payload {
    pub fn name(&self) -> &'static str {
        match self {
            Self::KeyBundle { .. } => "key_bundle",
            Self::MeterKeys { .. } => "meter_keys",
            Self::Registration { .. } => "registration",
            Self::PublicParams { .. } => "public_params",
            Self::BidArtifacts { .. } => "bid_artifacts",
            Self::BidRandomness { .. } => "bid_randomness",
            Self::ServerTuple { .. } => "server_tuple",
            Self::MeterTuple { .. } => "meter_tuple",
            Self::LemoTuple { .. } => "lemo_tuple",
            Self::Publication { .. } => "publication",
            Self::ChargeShare { .. } => "charge_share",
            Self::ClearDeviation { .. } => "clear_deviation",
            Self::ChargeFlags { .. } => "charge_flags",
            Self::BalanceKey { .. } => "balance_key",
            Self::BillKey { .. } => "bill_key",
            Self::Bill { .. } => "bill",
            Self::DeviationTotal { .. } => "deviation_total",
            Self::RandomnessTotal { .. } => "randomness_total",
            Self::BillReport(_) => "bill_report",
            Self::Capital { .. } => "capital",
        }
    }

    pub fn carries(&self) -> &'static [Datum] {
        use Datum::*;
        match self {
            Self::KeyBundle { .. } => &[MaskKeys, IpeKey],
            Self::MeterKeys { .. } => &[MaskKeys, IpeKey],
            Self::Registration { .. } => &[Registration],
            Self::PublicParams { .. } => &[IpeParams],
            Self::BidArtifacts { bid: Some(_), .. } | Self::LemoTuple { bid: Some(_), .. } => {
                &[BidCiphertext, BidCommitment, MaskedRole]
            }
            Self::BidArtifacts { .. } | Self::LemoTuple { .. } => &[BidCommitment, MaskedRole],
            Self::BidRandomness { .. } => &[CommitOpening],
            Self::ServerTuple { .. } => &[DeviationShare, RoleShare],
            Self::MeterTuple { reading: Some(_), .. } => &[MaskedReading, ReadingCiphertext, ReadingCommitment],
            Self::MeterTuple { .. } => &[MaskedReading, ReadingCommitment],
            Self::Publication { .. } => &[ZoneTotals],
            Self::ChargeShare { .. } => &[ChargeShare],
            Self::ClearDeviation { .. } => &[ClearDeviation],
            Self::ChargeFlags { .. } => &[ChargeFlags],
            Self::BalanceKey { .. } | Self::BillKey { .. } => &[DecryptionKey],
            Self::Bill { .. } => &[Bill],
            Self::DeviationTotal { .. } => &[DeviationTotal],
            Self::RandomnessTotal { .. } => &[CommitOpening],
            Self::BillReport(_) => &[LemBill, Bill, ClearRole],
            Self::Capital { .. } => &[Capital],
        }
    }

    /// Canonical byte encoding; its length is the accounted size.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Wire(Vec::new());
        w.u8(self.tag());
        match self {
            Self::KeyBundle { user, sk, sk_t, msk } => {
                w.u32(*user).u32(sk.len() as u32);
                for x in sk.iter().chain(sk_t) {
                    w.field(x);
                }
                w.raw(&msk.to_bytes());
            }
            Self::MeterKeys { user, sk, msk } => {
                w.u32(*user).u32(sk.len() as u32);
                for x in sk {
                    w.field(x);
                }
                w.raw(&msk.to_bytes());
            }
            Self::Registration { user, supplier, zone } => {
                w.u32(*user).u32(*supplier).u32(*zone);
            }
            Self::PublicParams { user, dimension } => {
                w.u32(*user).u32(*dimension as u32);
            }
            Self::BidArtifacts { user, bid, neg_bid, dc } => {
                w.u32(*user).families(bid).raw(&neg_bid.to_bytes()).field(dc);
            }
            Self::BidRandomness { user, r } => {
                w.u32(*user).raw(&r.to_bytes());
            }
            Self::ServerTuple { user, supplier, zone, v, d } => {
                w.u32(*user).u32(*supplier).u32(*zone).share(v).share(d);
            }
            Self::MeterTuple { user, zone, mc, reading, commitment } => {
                w.u32(*user).u32(*zone).field(mc);
                match reading {
                    None => {
                        w.u8(0);
                    }
                    Some(cts) => {
                        w.u8(1).u32(cts.len() as u32);
                        for ct in cts {
                            w.raw(&ct.to_bytes());
                        }
                    }
                }
                w.raw(&commitment.to_bytes());
            }
            Self::LemoTuple { user, supplier, bid, neg_bid, dc } => {
                w.u32(*user).u32(*supplier).families(bid).raw(&neg_bid.to_bytes()).field(dc);
            }
            Self::Publication { zones, summary } => {
                w.u32(zones.len() as u32);
                for z in zones {
                    w.u32(z.zone).i64(z.t).i64(z.np as i64).i64(z.nc as i64);
                }
                w.i64(summary.total).i128(*summary.weight.numer()).i128(*summary.weight.denom());
            }
            Self::ChargeShare { user, share } => {
                w.u32(*user).share(share);
            }
            Self::ClearDeviation { user, v } => {
                w.u32(*user).i64(*v);
            }
            Self::ChargeFlags { user, c_p, c_c } => {
                w.u32(*user).u8(*c_p as u8 | (*c_c as u8) << 1);
            }
            Self::BalanceKey { supplier, key } => {
                w.u32(*supplier).field(key);
            }
            Self::BillKey { user, key } => {
                w.u32(*user).field(key);
            }
            Self::Bill { user, bl } => {
                w.u32(*user).i128(*bl);
            }
            Self::DeviationTotal { user, total } => {
                w.u32(*user).i128(*total);
            }
            Self::RandomnessTotal { user, r } => {
                w.u32(*user).raw(&r.to_bytes());
            }
            Self::BillReport(r) => {
                w.u32(r.user).u32(r.supplier).u8(r.d).i128(r.bl).i128(r.bl_lem);
            }
            Self::Capital { supplier, scap } => {
                w.u32(*supplier).i128(*scap);
            }
        }
        w.0
    }

    fn tag(&self) -> u8 {
        match self {
            Self::KeyBundle { .. } => 1,
            Self::MeterKeys { .. } => 2,
            Self::Registration { .. } => 3,
            Self::PublicParams { .. } => 4,
            Self::BidArtifacts { .. } => 5,
            Self::BidRandomness { .. } => 6,
            Self::ServerTuple { .. } => 7,
            Self::MeterTuple { .. } => 8,
            Self::LemoTuple { .. } => 9,
            Self::Publication { .. } => 10,
            Self::ChargeShare { .. } => 11,
            Self::ClearDeviation { .. } => 12,
            Self::ChargeFlags { .. } => 13,
            Self::BalanceKey { .. } => 14,
            Self::BillKey { .. } => 15,
            Self::Bill { .. } => 16,
            Self::DeviationTotal { .. } => 17,
            Self::RandomnessTotal { .. } => 18,
            Self::BillReport(_) => 19,
            Self::Capital { .. } => 20,
        }
    }

    /// Size under the nominal communication model; only the protected
    /// fields count, identifiers are free.
    pub fn model_bits(&self, encoded_len: usize) -> u64 {
        use size::*;
        match self {
            Self::KeyBundle { sk, sk_t, msk, .. } => (sk.len() + sk_t.len()) as u64 * KEY + 8 * msk.byte_len() as u64,
            Self::MeterTuple { reading, .. } => {
                CIPHERTEXT + COMMITMENT + reading.as_ref().map_or(0, |r| r.len() as u64 * CT_LEFT)
            }
            Self::LemoTuple { bid, .. } => {
                CIPHERTEXT
                    + COMMITMENT
                    + bid.as_ref().map_or(0, |f| (f.less.len() + f.greater.len()) as u64 * CT_RIGHT)
            }
            Self::ServerTuple { .. } => 2 * SHARE,
            Self::ChargeShare { .. } => SHARE,
            Self::ChargeFlags { .. } => 2 * FLAG,
            Self::DeviationTotal { .. } | Self::Bill { .. } => VALUE,
            Self::RandomnessTotal { .. } => RANDOMNESS,
            _ => 8 * encoded_len as u64,
        }
    }
}
