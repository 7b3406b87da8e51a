use ark_ff::PrimeField;
use rand::{CryptoRng, RngCore};

use super::{Engine, EngineKind, EngineStats, MpcError, Share, PARTIES};
use crate::algebra::{centered_lift, sample_uniform, SignedBound};

/// Reference engine: values are held in the clear and every operation is
/// exact field arithmetic. Counts operations but sends nothing.
#[derive(Debug, Default)]
pub struct IdealEngine {
    session: u64,
    stats: EngineStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdealShared<F> {
    session: u64,
    value: F,
}

impl IdealEngine {
    pub fn new(session: u64) -> Self {
        Self {
            session,
            stats: EngineStats::default(),
        }
    }

    fn wrap<F>(&self, value: F) -> IdealShared<F> {
        IdealShared {
            session: self.session,
            value,
        }
    }

    fn check<F>(&self, xs: &[&IdealShared<F>]) -> Result<(), MpcError> {
        for x in xs {
            if x.session != self.session {
                return Err(MpcError::SessionMismatch(self.session, x.session));
            }
        }
        Ok(())
    }
}

impl<F: PrimeField> Engine<F> for IdealEngine {
    type Shared = IdealShared<F>;

    fn kind(&self) -> EngineKind {
        EngineKind::Ideal
    }

    fn session(&self) -> u64 {
        self.session
    }

    /// Additive three-out-of-three split, one component per party.
    fn deal<R: RngCore + CryptoRng>(x: F, rng: &mut R) -> [Share<F>; PARTIES] {
        let a: F = sample_uniform(rng);
        let b: F = sample_uniform(rng);
        let parts = [a, b, x - a - b];
        std::array::from_fn(|i| Share {
            party: i as u8,
            components: vec![parts[i]],
        })
    }

    fn reconstruct(shares: &[Share<F>]) -> Result<F, MpcError> {
        let mut seen = [false; PARTIES];
        let mut acc = F::zero();
        for s in shares {
            let p = s.party as usize;
            if p >= PARTIES || s.components.len() != 1 {
                return Err(MpcError::Malformed);
            }
            if !seen[p] {
                seen[p] = true;
                acc += s.components[0];
            }
        }
        if seen.iter().all(|&b| b) {
            Ok(acc)
        } else {
            Err(MpcError::NotEnoughShares { needed: PARTIES })
        }
    }

    fn join(&self, shares: &[Share<F>; PARTIES]) -> Result<Self::Shared, MpcError> {
        Ok(self.wrap(Self::reconstruct(shares)?))
    }

    fn split(&self, x: &Self::Shared) -> [Share<F>; PARTIES] {
        let parts = [x.value, F::zero(), F::zero()];
        std::array::from_fn(|i| Share {
            party: i as u8,
            components: vec![parts[i]],
        })
    }

    fn constant(&self, c: F) -> Self::Shared {
        self.wrap(c)
    }

    fn add(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError> {
        self.check(&[a, b])?;
        Ok(self.wrap(a.value + b.value))
    }

    fn sub(&self, a: &Self::Shared, b: &Self::Shared) -> Result<Self::Shared, MpcError> {
        self.check(&[a, b])?;
        Ok(self.wrap(a.value - b.value))
    }

    fn add_public(&self, a: &Self::Shared, c: F) -> Self::Shared {
        self.wrap(a.value + c)
    }

    fn mul_public(&self, a: &Self::Shared, c: F) -> Self::Shared {
        self.wrap(a.value * c)
    }

    fn mul_many(&mut self, pairs: &[(Self::Shared, Self::Shared)]) -> Result<Vec<Self::Shared>, MpcError> {
        for (a, b) in pairs {
            self.check(&[a, b])?;
        }
        self.stats.multiplications += pairs.len() as u64;
        self.stats.online.mul_gates += pairs.len() as u64;
        Ok(pairs.iter().map(|(a, b)| self.wrap(a.value * b.value)).collect())
    }

    fn open_many(&mut self, xs: &[Self::Shared]) -> Result<Vec<F>, MpcError> {
        for x in xs {
            self.check(&[x])?;
        }
        self.stats.openings += xs.len() as u64;
        Ok(xs.iter().map(|x| x.value).collect())
    }

    fn ge_zero_many(&mut self, xs: &[Self::Shared], bound: SignedBound) -> Result<Vec<Self::Shared>, MpcError> {
        self.stats.comparisons += xs.len() as u64;
        xs.iter()
            .map(|x| {
                self.check(&[x])?;
                let v = centered_lift(x.value, bound).map_err(|_| MpcError::Range)?;
                Ok(self.wrap(F::from((v >= 0) as u64)))
            })
            .collect()
    }

    fn sign_test_many(
        &mut self,
        xs: &[Self::Shared],
        bound: SignedBound,
    ) -> Result<Vec<(Self::Shared, Self::Shared)>, MpcError> {
        self.stats.comparisons += xs.len() as u64;
        xs.iter()
            .map(|x| {
                self.check(&[x])?;
                let v = centered_lift(x.value, bound).map_err(|_| MpcError::Range)?;
                Ok((self.wrap(F::from((v > 0) as u64)), self.wrap(F::from((v < 0) as u64))))
            })
            .collect()
    }

    fn stats(&self) -> &EngineStats {
        &self.stats
    }

    fn stats_mut(&mut self) -> &mut EngineStats {
        &mut self.stats
    }
}
