//! BLS12-381 pairing groups with fixed-base tables for the two generators.

use blstrs::{Bls12, G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar};
use group::{Curve, Group};
use once_cell::sync::Lazy;
use pairing::{MillerLoopResult, MultiMillerLoop};

/// Byte-window table: `windows[i][k - 1] = k * 256^i * base`.
pub struct FixedBaseTable<G: Curve> {
    windows: Vec<Vec<G::AffineRepr>>,
}

impl<G> FixedBaseTable<G>
where
    G: Curve<Scalar = Scalar>,
    G::AffineRepr: Copy,
{
    pub fn new(base: G) -> Self {
        let mut windows = Vec::with_capacity(32);
        let mut start = base;
        for _ in 0..32 {
            let mut row = Vec::with_capacity(255);
            let mut acc = start;
            for _ in 0..255 {
                row.push(acc);
                acc += start;
            }
            // acc = 256 * start
            start = acc;
            let mut affine = vec![G::identity().to_affine(); row.len()];
            G::batch_normalize(&row, &mut affine);
            windows.push(affine);
        }
        Self { windows }
    }

    pub fn mul(&self, k: &Scalar) -> G {
        let mut acc = G::identity();
        for (row, &byte) in self.windows.iter().zip(k.to_bytes_le().iter()) {
            if byte != 0 {
                acc += &row[byte as usize - 1];
            }
        }
        acc
    }
}

/// The pairing groups with their standard generators.
pub struct PairingSuite {
    g1_table: FixedBaseTable<G1Projective>,
    g2_table: FixedBaseTable<G2Projective>,
}

static SUITE: Lazy<PairingSuite> = Lazy::new(|| PairingSuite {
    g1_table: FixedBaseTable::new(G1Projective::generator()),
    g2_table: FixedBaseTable::new(G2Projective::generator()),
});

impl PairingSuite {
    /// Shared instance; tables are built on first use.
    pub fn get() -> &'static PairingSuite {
        &SUITE
    }

    pub fn g1(&self) -> G1Projective {
        G1Projective::generator()
    }

    pub fn g2(&self) -> G2Projective {
        G2Projective::generator()
    }

    /// k * g1.
    pub fn mul_g1(&self, k: &Scalar) -> G1Projective {
        self.g1_table.mul(k)
    }

    /// k * g2.
    pub fn mul_g2(&self, k: &Scalar) -> G2Projective {
        self.g2_table.mul(k)
    }

    pub fn pair(&self, a: &G1Affine, b: &G2Affine) -> Gt {
        blstrs::pairing(a, b)
    }

    /// Whether prod_i e(a_i, b_i) is the identity of GT.
    pub fn product_is_identity(&self, terms: &[(&G1Affine, &G2Prepared)]) -> bool {
        let gt: Gt = Bls12::multi_miller_loop(terms).final_exponentiation();
        bool::from(gt.is_identity())
    }
}

/// Fresh batch of affine points from projective ones.
pub fn to_affine_g1(points: &[G1Projective]) -> Vec<G1Affine> {
    let mut out = vec![G1Affine::default(); points.len()];
    G1Projective::batch_normalize(points, &mut out);
    out
}

pub fn to_affine_g2(points: &[G2Projective]) -> Vec<G2Affine> {
    let mut out = vec![G2Affine::default(); points.len()];
    G2Projective::batch_normalize(points, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ff::Field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn fixed_base_matches_generic_mul() {
        let suite = PairingSuite::get();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..8 {
            let k = Scalar::random(&mut rng);
            assert_eq!(suite.mul_g1(&k), suite.g1() * k);
            assert_eq!(suite.mul_g2(&k), suite.g2() * k);
        }
        assert_eq!(suite.mul_g1(&Scalar::ZERO), G1Projective::identity());
        assert_eq!(suite.mul_g2(&-Scalar::ONE), -suite.g2());
    }

    #[test]
    fn bilinearity_on_random_scalars() {
        let suite = PairingSuite::get();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let base = suite.pair(&suite.g1().to_affine(), &suite.g2().to_affine());
        for _ in 0..3 {
            let a = Scalar::random(&mut rng);
            let b = Scalar::random(&mut rng);
            let lhs = suite.pair(&suite.mul_g1(&a).to_affine(), &suite.mul_g2(&b).to_affine());
            assert_eq!(lhs, base * (a * b));
        }
    }

    #[test]
    fn identity_product_detects_cancellation() {
        let suite = PairingSuite::get();
        let a = Scalar::from(5u64);
        let p1 = suite.mul_g1(&a).to_affine();
        let p2 = suite.mul_g1(&-a).to_affine();
        let q = G2Prepared::from(suite.g2().to_affine());
        assert!(suite.product_is_identity(&[(&p1, &q), (&p2, &q)]));
        assert!(!suite.product_is_identity(&[(&p1, &q), (&p1, &q)]));
    }
}
