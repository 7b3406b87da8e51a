use ark_ff::PrimeField;

use super::{Engine, MpcError};
use crate::algebra::{centered_lift, encode_signed, SignedBound};

/// A user's per-period submission to the servers.
#[derive(Debug, Clone)]
pub struct SharedTuple<S> {
    pub user: u32,
    pub supplier: u32,
    pub zone: u32,
    pub v: S,
    pub d: S,
}

/// Shared zone totals `(t_z, np_z, nc_z)`.
#[derive(Debug, Clone)]
pub struct ZoneShares<S> {
    pub t: S,
    pub np: S,
    pub nc: S,
}

/// Zone aggregation: `t_z = sum v`, `np_z = sum d`, `nc_z = n - np_z`.
/// Linear, so no communication.
pub fn aggregate_zone<F: PrimeField, E: Engine<F>>(
    engine: &E,
    tuples: &[&SharedTuple<E::Shared>],
) -> Result<ZoneShares<E::Shared>, MpcError> {
    let t = engine.sum(tuples.iter().map(|t| &t.v))?;
    let np = engine.sum(tuples.iter().map(|t| &t.d))?;
    let nc = engine.add_public(&engine.mul_public(&np, -F::one()), F::from(tuples.len() as u64));
    Ok(ZoneShares { t, np, nc })
}

/// `+1` when the zone and market surplus agree, `-1` when both are short,
/// `0` otherwise.
pub fn charge_selector(total: i64, zone_total: i64) -> i64 {
    if total > 0 && zone_total > 0 {
        1
    } else if total < 0 && zone_total < 0 {
        -1
    } else {
        0
    }
}

/// `[s]` for many users. Every user costs one multiplication and one
/// comparison whatever the branch: `s = [selector * v > 0]`.
pub fn identify_s_cs_many<F: PrimeField, E: Engine<F>>(
    engine: &mut E,
    items: &[(E::Shared, i64, i64)],
    bound: SignedBound,
) -> Result<Vec<E::Shared>, MpcError> {
    let pairs: Vec<_> = items
        .iter()
        .map(|(v, total, zone_total)| {
            let sel = engine.constant(encode_signed::<F>(charge_selector(*total, *zone_total) as i128));
            (sel, v.clone())
        })
        .collect();
    let products = engine.mul_many(&pairs)?;
    let shifted: Vec<_> = products.iter().map(|w| engine.add_public(w, -F::one())).collect();
    engine.ge_zero_many(&shifted, bound)
}

pub fn identify_s_cs<F: PrimeField, E: Engine<F>>(
    engine: &mut E,
    v: &E::Shared,
    total: i64,
    zone_total: i64,
    bound: SignedBound,
) -> Result<E::Shared, MpcError> {
    Ok(identify_s_cs_many(engine, &[(v.clone(), total, zone_total)], bound)?.remove(0))
}

/// `V_i = sum_k v_k`, opened and decoded.
pub fn aggregate_user_deviation<F: PrimeField, E: Engine<F>>(
    engine: &mut E,
    vs: &[E::Shared],
    bound: SignedBound,
) -> Result<i128, MpcError> {
    Ok(aggregate_user_deviations_many(engine, &[vs], bound)?[0])
}

/// Per-user totals for many users, opened in one round.
pub fn aggregate_user_deviations_many<F: PrimeField, E: Engine<F>>(
    engine: &mut E,
    users: &[&[E::Shared]],
    bound: SignedBound,
) -> Result<Vec<i128>, MpcError> {
    let totals = users.iter().map(|vs| engine.sum(vs.iter())).collect::<Result<Vec<_>, _>>()?;
    engine
        .open_many(&totals)?
        .into_iter()
        .map(|x| centered_lift(x, bound).map_err(|_| MpcError::Range))
        .collect()
}
