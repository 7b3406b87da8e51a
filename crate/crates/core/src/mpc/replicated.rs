use std::marker::PhantomData;

use ark_ff::PrimeField;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::transport::{Phase, Transport};
use super::{Engine, EngineKind, EngineStats, MpcError, Share, PARTIES};
use crate::algebra::{field_byte_len, field_from_bytes, field_to_bytes, field_to_u128, sample_uniform, SignedBound};

/// Statistical hiding parameter for masked openings.
pub const STATISTICAL_SECURITY: u32 = 40;

/// Party `i` holds the PRF keys `k_i` and `k_{i+1}`; each key is therefore
/// known to exactly two parties, and both holders advance it in lockstep.
struct Party {
    keys: [ChaCha20Rng; 2],
}

/// Semi-honest three-party replicated secret sharing over `F`.
pub struct ReplicatedEngine<F> {
    session: u64,
    parties: Vec<Party>,
    transport: Transport,
    stats: EngineStats,
    _field: PhantomData<F>,
}

/// `parts[i]` is party `i`'s pair `(x_i, x_{i+1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicatedShared<F> {
    session: u64,
    parts: [[F; 2]; PARTIES],
}

fn next(i: usize) -> usize {
    (i + 1) % PARTIES
}

fn prev(i: usize) -> usize {
    (i + PARTIES - 1) % PARTIES
}

impl<F: PrimeField> ReplicatedShared<F> {
    fn map2(&self, other: &Self, f: impl Fn(F, F) -> F) -> Self {
        let mut parts = self.parts;
        for i in 0..PARTIES {
            for k in 0..2 {
                parts[i][k] = f(self.parts[i][k], other.parts[i][k]);
            }
        }
        Self {
            session: self.session,
            parts,
        }
    }

    fn scale(&self, c: F) -> Self {
        let mut parts = self.parts;
        parts.iter_mut().flatten().for_each(|x| *x *= c);
        Self {
            session: self.session,
            parts,
        }
    }

    /// Adds `c` to component 0, held by parties 0 (first slot) and 2 (second slot).
    fn shift(&self, c: F) -> Self {
        let mut parts = self.parts;
        parts[0][0] += c;
        parts[2][1] += c;
        Self {
            session: self.session,
            parts,
        }
    }

    /// Sharing of a value known to the holders of component `j`.
    fn from_component(session: u64, j: usize, value: F) -> Self {
        let mut parts = [[F::zero(); 2]; PARTIES];
        parts[j][0] = value;
        parts[prev(j)][1] = value;
        Self { session, parts }
    }
}

impl<F: PrimeField> ReplicatedEngine<F> {
    pub fn new(session: u64, seed: u64) -> Self {
        let mut master = ChaCha20Rng::seed_from_u64(seed ^ session.rotate_left(32));
        let key_seeds: Vec<[u8; 32]> = (0..PARTIES).map(|_| master.gen()).collect();
        let parties = (0..PARTIES)
            .map(|i| Party {
                keys: [
                    ChaCha20Rng::from_seed(key_seeds[i]),
                    ChaCha20Rng::from_seed(key_seeds[next(i)]),
                ],
            })
            .collect();
        Self {
            session,
            parties,
            transport: Transport::default(),
            stats: EngineStats::default(),
            _field: PhantomData,
        }
    }

    fn check(&self, xs: &[&ReplicatedShared<F>]) -> Result<(), MpcError> {
        for x in xs {
            if x.session != self.session {
                return Err(MpcError::SessionMismatch(self.session, x.session));
            }
        }
        Ok(())
    }

    fn one(&self) -> ReplicatedShared<F> {
        self.constant(F::one())
    }

    /// Sharing whose components are uniform in `[0, 2^bits)`, without communication.
    fn bounded_shared(&mut self, bits: u32) -> ReplicatedShared<F> {
        let mask = if bits == 0 { 0 } else { u64::MAX >> (64 - bits) };
        let mut parts = [[F::zero(); 2]; PARTIES];
        for (i, p) in self.parties.iter_mut().enumerate() {
            parts[i] = [
                F::from(p.keys[0].next_u64() & mask),
                F::from(p.keys[1].next_u64() & mask),
            ];
        }
        ReplicatedShared {
            session: self.session,
            parts,
        }
    }

    /// Per-party zero shares `alpha_i = PRF(k_i) - PRF(k_{i+1})`.
    fn zero_masks(&mut self) -> [F; PARTIES] {
        let mut out = [F::zero(); PARTIES];
        for (i, p) in self.parties.iter_mut().enumerate() {
            let a: F = sample_uniform(&mut p.keys[0]);
            let b: F = sample_uniform(&mut p.keys[1]);
            out[i] = a - b;
        }
        out
    }

    fn encode(values: &[F]) -> Vec<u8> {
        values.iter().flat_map(field_to_bytes).collect()
    }

    fn decode(bytes: &[u8], n: usize) -> Result<Vec<F>, MpcError> {
        let w = field_byte_len::<F>();
        if bytes.len() != w * n {
            return Err(MpcError::Malformed);
        }
        bytes
            .chunks(w)
            .map(|c| field_from_bytes(c).ok_or(MpcError::Malformed))
            .collect()
    }

    /// Multiplication gates without touching the algorithm-level counter.
    /// Party `i` computes its 3-out-of-3 product share `z_i` and sends it to
    /// party `i - 1`; afterwards party `i` holds `(z_i, z_{i+1})`.
    fn gates(&mut self, pairs: &[(ReplicatedShared<F>, ReplicatedShared<F>)]) -> Result<Vec<ReplicatedShared<F>>, MpcError> {
        if pairs.is_empty() {
            return Ok(vec![]);
        }
        let n = pairs.len();
        let mut z: Vec<[F; PARTIES]> = Vec::with_capacity(n);
        for (a, b) in pairs {
            self.check(&[a, b])?;
            let alpha = self.zero_masks();
            let mut zi = [F::zero(); PARTIES];
            for i in 0..PARTIES {
                let [a0, a1] = a.parts[i];
                let [b0, b1] = b.parts[i];
                zi[i] = a0 * b0 + a0 * b1 + a1 * b0 + alpha[i];
            }
            z.push(zi);
        }
        for i in 0..PARTIES {
            let mine: Vec<F> = z.iter().map(|zi| zi[i]).collect();
            self.transport.send(&mut self.stats, i, prev(i), Self::encode(&mine));
        }
        let mut received: Vec<Vec<F>> = Vec::with_capacity(PARTIES);
        for i in 0..PARTIES {
            let bytes = self.transport.recv(next(i), i)?;
            received.push(Self::decode(&bytes, n)?);
        }
        self.transport.end_round(&mut self.stats);
        match self.transport.phase() {
            Phase::Online => self.stats.online.mul_gates += n as u64,
            Phase::Offline => self.stats.offline.mul_gates += n as u64,
        }
        Ok((0..n)
            .map(|g| ReplicatedShared {
                session: self.session,
                parts: std::array::from_fn(|i| [z[g][i], received[i][g]]),
            })
            .collect())
    }

    /// Party `j` sends its second component `x_{j+1}` to party `j - 1`, so
    /// every party learns the component it lacks.
    fn open_inner(&mut self, xs: &[ReplicatedShared<F>]) -> Result<Vec<F>, MpcError> {
        if xs.is_empty() {
            return Ok(vec![]);
        }
        for x in xs {
            self.check(&[x])?;
        }
        let n = xs.len();
        for j in 0..PARTIES {
            let comps: Vec<F> = xs.iter().map(|x| x.parts[j][1]).collect();
            self.transport.send(&mut self.stats, j, prev(j), Self::encode(&comps));
        }
        let mut views: Vec<Vec<F>> = Vec::with_capacity(PARTIES);
        for i in 0..PARTIES {
            let missing = Self::decode(&self.transport.recv(next(i), i)?, n)?;
            views.push(
                xs.iter()
                    .zip(&missing)
                    .map(|(x, m)| x.parts[i][0] + x.parts[i][1] + *m)
                    .collect(),
            );
        }
        self.transport.end_round(&mut self.stats);
        for g in 0..n {
            for i in 1..PARTIES {
                if views[i][g] != views[0][g] {
                    return Err(MpcError::Inconsistent { component: i });
                }
            }
        }
        Ok(views.swap_remove(0))
    }

    /// Shared uniform bits `b = u_0 xor u_1 xor u_2`, where `u_j` comes from
    /// key `k_j` and is unknown to the one party not holding that key.
    fn random_bits(&mut self, count: usize) -> Result<Vec<ReplicatedShared<F>>, MpcError> {
        let mut us: Vec<[ReplicatedShared<F>; PARTIES]> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut bits = [[0u64; 2]; PARTIES];
            for (i, p) in self.parties.iter_mut().enumerate() {
                bits[i] = [p.keys[0].next_u32() as u64 & 1, p.keys[1].next_u32() as u64 & 1];
            }
            // Component j is bits[j][0] (equal to bits[j-1][1] by construction).
            us.push(std::array::from_fn(|j| {
                ReplicatedShared::from_component(self.session, j, F::from(bits[j][0]))
            }));
        }
        let two = F::from(2u64);
        let xor = |a: &ReplicatedShared<F>, b: &ReplicatedShared<F>, ab: &ReplicatedShared<F>| {
            a.map2(b, |x, y| x + y).map2(&ab.scale(two), |x, y| x - y)
        };
        let first: Vec<_> = us.iter().map(|u| (u[0].clone(), u[1].clone())).collect();
        let prod = self.gates(&first)?;
        let t: Vec<_> = us.iter().zip(&prod).map(|(u, p)| xor(&u[0], &u[1], p)).collect();
        let second: Vec<_> = t.iter().zip(&us).map(|(t, u)| (t.clone(), u[2].clone())).collect();
        let prod = self.gates(&second)?;
        Ok(t.iter().zip(&us).zip(&prod).map(|((t, u), p)| xor(t, &u[2], p)).collect())
    }

    /// Width of the high mask part: as close to sigma + 1 as the field allows
    /// without the masked value wrapping mod q.
    fn mask_bits(bound: SignedBound) -> Result<u32, MpcError> {
        let field_bits = F::MODULUS_BIT_SIZE;
        let l = bound.bits();
        if l + 3 > field_bits || l + 3 > 127 {
            return Err(MpcError::Range);
        }
        let room = field_bits.saturating_sub(l + 4).min(127 - (l + 3));
        Ok(room.min(STATISTICAL_SECURITY + 1).min(62))
    }

    /// `[c_low < r]` for public `c_low` and shared bits of `r`, LSB first,
    /// for several instances in lockstep.
    fn bitwise_lt(&mut self, publics: &[u128], bits: &[&[ReplicatedShared<F>]]) -> Result<Vec<ReplicatedShared<F>>, MpcError> {
        let l = bits[0].len();
        let mut res: Vec<ReplicatedShared<F>> = publics
            .iter()
            .zip(bits)
            .map(|(c, r)| if c & 1 == 0 { r[0].clone() } else { r[0].scale(F::zero()) })
            .collect();
        for i in 1..l {
            let pairs: Vec<_> = res.iter().zip(bits).map(|(acc, r)| (r[i].clone(), acc.clone())).collect();
            let prods = self.gates(&pairs)?;
            res = res
                .iter()
                .zip(bits)
                .zip(publics)
                .zip(prods)
                .map(|(((acc, r), c), p)| {
                    if (c >> i) & 1 == 0 {
                        r[i].map2(acc, |a, b| a + b).map2(&p, |a, b| a - b)
                    } else {
                        p
                    }
                })
                .collect();
        }
        Ok(res)
    }

    /// Masked-opening comparison. For each `x`, opens
    /// `c = x + 2^L + r_low + 2^L r_high` and derives `[x >= 0]` and, when
    /// `with_positive`, `[x - 1 >= 0]` from the same opening.
    fn compare(
        &mut self,
        xs: &[ReplicatedShared<F>],
        bound: SignedBound,
        with_positive: bool,
    ) -> Result<Vec<(ReplicatedShared<F>, Option<ReplicatedShared<F>>)>, MpcError> {
        for x in xs {
            self.check(&[x])?;
        }
        let l = bound.bits() as usize;
        let kappa = Self::mask_bits(bound)?;
        let two_l = F::from(2u64).pow([l as u64]);
        let two_l_inv = two_l.inverse().expect("2^L invertible");

        self.transport.set_phase(Phase::Offline);
        let bits = self.random_bits(xs.len() * l)?;
        self.transport.set_phase(Phase::Online);
        let highs: Vec<_> = (0..xs.len()).map(|_| self.bounded_shared(kappa)).collect();

        let mut r_lows = Vec::with_capacity(xs.len());
        let mut masked = Vec::with_capacity(xs.len());
        for (k, x) in xs.iter().enumerate() {
            let rb = &bits[k * l..(k + 1) * l];
            let mut r_low = rb[0].clone();
            let mut pow = F::one();
            for b in &rb[1..] {
                pow.double_in_place();
                r_low = r_low.map2(&b.scale(pow), |a, c| a + c);
            }
            let c = x.shift(two_l).map2(&r_low, |a, b| a + b).map2(&highs[k].scale(two_l), |a, b| a + b);
            r_lows.push(r_low);
            masked.push(c);
        }
        let opened = self.open_inner(&masked)?;
        let cs: Vec<u128> = opened
            .iter()
            .map(|c| field_to_u128(c).ok_or(MpcError::Range))
            .collect::<Result<_, _>>()?;
        let low_mask = (1u128 << l) - 1;

        let mut publics = Vec::new();
        let mut bit_refs: Vec<&[ReplicatedShared<F>]> = Vec::new();
        for (k, c) in cs.iter().enumerate() {
            let rb = &bits[k * l..(k + 1) * l];
            publics.push(c & low_mask);
            bit_refs.push(rb);
            if with_positive {
                publics.push((c - 1) & low_mask);
                bit_refs.push(rb);
            }
        }
        let lts = self.bitwise_lt(&publics, &bit_refs)?;

        let step = if with_positive { 2 } else { 1 };
        let derive = |x: &ReplicatedShared<F>, offset: F, c_low: u128, r_low: &ReplicatedShared<F>, lt: &ReplicatedShared<F>| {
            // u mod 2^L = c_low - r_low + 2^L [c_low < r_low]
            let u = x.shift(two_l + offset);
            let u_low = r_low
                .scale(-F::one())
                .shift(F::from(c_low))
                .map2(&lt.scale(two_l), |a, b| a + b);
            u.map2(&u_low, |a, b| a - b).scale(two_l_inv)
        };
        Ok(xs
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let ge = derive(x, F::zero(), publics[k * step], &r_lows[k], &lts[k * step]);
                let pos = with_positive
                    .then(|| derive(x, -F::one(), publics[k * step + 1], &r_lows[k], &lts[k * step + 1]));
                (ge, pos)
            })
            .collect())
    }

    /// Flips one component of a party's share, for corruption tests.
    pub fn corrupt(&self, x: &ReplicatedShared<F>, party: usize, slot: usize, delta: F) -> ReplicatedShared<F> {
        let mut y = x.clone();
        y.parts[party][slot] += delta;
        y
    }
}

impl<F: PrimeField> Engine<F> for ReplicatedEngine<F> {
    type Shared = ReplicatedShared<F>;

    fn kind(&self) -> EngineKind {
        EngineKind::Replicated
    }

    fn session(&self) -> u64 {
        self.session
    }

    fn deal<R: RngCore + CryptoRng>(x: F, rng: &mut R) -> [Share<F>; PARTIES] {
        let x0: F = sample_uniform(rng);
        let x1: F = sample_uniform(rng);
        let comps = [x0, x1, x - x0 - x1];
        std::array::from_fn(|i| Share {
            party: i as u8,
            components: vec![comps[i], comps[next(i)]],
        })
    }

    /// Needs any two parties; every component present twice must agree.
    fn reconstruct(shares: &[Share<F>]) -> Result<F, MpcError> {
        let mut comps: [Option<F>; PARTIES] = [None; PARTIES];
        let mut parties = [false; PARTIES];
        for s in shares {
            let i = s.party as usize;
            if i >= PARTIES || s.components.len() != 2 {
                return Err(MpcError::Malformed);
            }
            parties[i] = true;
            for (k, &v) in s.components.iter().enumerate() {
                let j = (i + k) % PARTIES;
                match comps[j] {
                    Some(prev) if prev != v => return Err(MpcError::Inconsistent { component: j }),
                    _ => comps[j] = Some(v),
                }
            }
        }
        if parties.iter().filter(|&&p| p).count() < 2 {
            return Err(MpcError::NotEnoughShares { needed: 2 });
        }
        Ok(comps.iter().map(|c| c.unwrap()).fold(F::zero(), |a, b| a + b))
    }

    fn join(&self, shares: &[Share<F>; PARTIES]) -> Result<Self::Shared, MpcError> {
        let mut parts = [[F::zero(); 2]; PARTIES];
        for (i, s) in shares.iter().enumerate() {
            if s.party as usize != i || s.components.len() != 2 {
                return Err(MpcError::Malformed);
            }
            parts[i] = [s.components[0], s.components[1]];
        }
        Ok(ReplicatedShared {
            session: self.session,
            parts,
        })
    }

    fn split(&self, x: &Self::Shared) -> [Share<F>; PARTIES] {
        std::array::from_fn(|i| Share {
            party: i as u8,
            components: x.parts[i].to_vec(),
        })
    }

    fn constant(&self, c: F) -> Self::Shared {
        ReplicatedShared::from_component(self.session, 0, c)
    }

    fn add(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError> {
        self.check(&[a, b])?;
        Ok(a.map2(b, |x, y| x + y))
    }

    fn sub(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError> {
        self.check(&[a, b])?;
        Ok(a.map2(b, |x, y| x - y))
    }

    fn add_public(&self, a: &Self::Shared, c: F) -> Self::Shared {
        a.shift(c)
    }

    fn mul_public(&self, a: &Self::Shared, c: F) -> Self::Shared {
        a.scale(c)
    }

    fn mul_many(&mut self, pairs: &[(Self::Shared, Self::Shared)]) -> Result<Vec<Self::Shared>, MpcError> {
        let out = self.gates(pairs)?;
        self.stats.multiplications += pairs.len() as u64;
        Ok(out)
    }

    fn open_many(&mut self, xs: &[Self::Shared]) -> Result<Vec<F>, MpcError> {
        let out = self.open_inner(xs)?;
        self.stats.openings += xs.len() as u64;
        Ok(out)
    }

    fn ge_zero_many(&mut self, xs: &[Self::Shared], bound: SignedBound) -> Result<Vec<Self::Shared>, MpcError> {
        let out = self.compare(xs, bound, false)?;
        self.stats.comparisons += xs.len() as u64;
        Ok(out.into_iter().map(|(ge, _)| ge).collect())
    }

    fn sign_test_many(
        &mut self,
        xs: &[Self::Shared],
        bound: SignedBound,
    ) -> Result<Vec<(Self::Shared, Self::Shared)>, MpcError> {
        let out = self.compare(xs, bound, true)?;
        self.stats.comparisons += xs.len() as u64;
        let one = self.one();
        Ok(out
            .into_iter()
            .map(|(ge, pos)| (pos.unwrap(), one.map2(&ge, |a, b| a - b)))
            .collect())
    }

    fn stats(&self) -> &EngineStats {
        &self.stats
    }

    fn stats_mut(&mut self) -> &mut EngineStats {
        &mut self.stats
    }
}
