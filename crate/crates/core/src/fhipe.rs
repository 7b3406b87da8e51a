//! Function-hiding inner-product encryption with zero-test decryption.
//!
//! The master key is a random invertible matrix `B` over the scalar field
//! and `B* = det(B) * (B^-1)^T`. Left ciphertexts carry `alpha * det(B)` and
//! `alpha * x * B` in the exponent, right ciphertexts `beta` and
//! `beta * y * B*`, so `prod_i e(C2_i, K2_i) = e(g1, g2)^(alpha beta det(B) <x, y>)`
//! is the identity exactly when `<x, y> = 0`.
//!
//! Left ciphertexts live in G2 and right ciphertexts in G1 of BLS12-381:
//! comparisons encrypt twice as many right vectors, and G1 is the cheaper
//! group.

use blstrs::{G1Affine, G1Projective, G2Affine, G2Prepared, G2Projective, Scalar};
use ff::Field;
use rand::{CryptoRng, RngCore};

use crate::algebra::{to_affine_g1, to_affine_g2, PairingSuite};
use crate::encoding::{Hit, LeftEncoding, RightEncoding};

pub const LAYOUT_VERSION: u8 = 1;
pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IpeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("vector has length {got}, key dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("encryption scalar must be nonzero")]
    ZeroScalar,
    #[error("malformed ciphertext encoding")]
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpeParams {
    pub dimension: usize,
}

#[derive(Clone)]
pub struct IpeMasterKey {
    b: Vec<Vec<Scalar>>,
    b_star: Vec<Vec<Scalar>>,
    det: Scalar,
}

impl IpeMasterKey {
    pub fn dimension(&self) -> usize {
        self.b.len()
    }

    /// Serialized size: both matrices and the determinant as 32-byte scalars.
    pub fn byte_len(&self) -> usize {
        (2 * self.dimension() * self.dimension() + 1) * 32
    }

    /// `B` and `B*` row-major, then `det(B)`, little-endian scalars.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        for x in self.b.iter().chain(&self.b_star).flatten().chain(std::iter::once(&self.det)) {
            out.extend_from_slice(&x.to_bytes_le());
        }
        out
    }
}

impl std::fmt::Debug for IpeMasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IpeMasterKey(n={})", self.dimension())
    }
}

/// `K1 = alpha det(B) g2`, `K2 = alpha x B g2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeftCiphertext {
    pub companion: G2Affine,
    pub elems: Vec<G2Affine>,
}

/// `C1 = beta g1`, `C2 = beta y B* g1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightCiphertext {
    pub companion: G1Affine,
    pub elems: Vec<G1Affine>,
}

/// Inverse and determinant by Gauss-Jordan elimination; `None` if singular.
fn invert(m: &[Vec<Scalar>]) -> Option<(Vec<Vec<Scalar>>, Scalar)> {
    let n = m.len();
    let mut a: Vec<Vec<Scalar>> = m.to_vec();
    let mut inv: Vec<Vec<Scalar>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Scalar::ONE } else { Scalar::ZERO }).collect())
        .collect();
    let mut det = Scalar::ONE;
    for col in 0..n {
        let pivot = (col..n).find(|&r| !bool::from(a[r][col].is_zero()))?;
        if pivot != col {
            a.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        let p_inv = p.invert().unwrap();
        for j in 0..n {
            a[col][j] *= p_inv;
            inv[col][j] *= p_inv;
        }
        for r in 0..n {
            if r != col {
                let factor = a[r][col];
                if !bool::from(factor.is_zero()) {
                    for j in 0..n {
                        let (t1, t2) = (a[col][j], inv[col][j]);
                        a[r][j] -= factor * t1;
                        inv[r][j] -= factor * t2;
                    }
                }
            }
        }
    }
    Some((inv, det))
}

pub fn setup<R: RngCore + CryptoRng>(dimension: usize, rng: &mut R) -> Result<(IpeParams, IpeMasterKey), IpeError> {
    if dimension == 0 {
        return Err(IpeError::ZeroDimension);
    }
    loop {
        let b: Vec<Vec<Scalar>> = (0..dimension)
            .map(|_| (0..dimension).map(|_| Scalar::random(&mut *rng)).collect())
            .collect();
        if let Some((inv, det)) = invert(&b) {
            let b_star = (0..dimension)
                .map(|i| (0..dimension).map(|j| det * inv[j][i]).collect())
                .collect();
            return Ok((IpeParams { dimension }, IpeMasterKey { b, b_star, det }));
        }
    }
}

fn row_times(v: &[Scalar], m: &[Vec<Scalar>], k: Scalar) -> Vec<Scalar> {
    (0..m.len())
        .map(|c| v.iter().zip(m).map(|(vi, row)| *vi * row[c]).sum::<Scalar>() * k)
        .collect()
}

fn check_dim(msk: &IpeMasterKey, len: usize) -> Result<(), IpeError> {
    if len != msk.dimension() {
        return Err(IpeError::DimensionMismatch {
            expected: msk.dimension(),
            got: len,
        });
    }
    Ok(())
}

pub fn left_encrypt(msk: &IpeMasterKey, alpha: Scalar, x: &[Scalar]) -> Result<LeftCiphertext, IpeError> {
    Ok(left_encrypt_many(msk, alpha, &[x.to_vec()])?.remove(0))
}

pub fn right_encrypt(msk: &IpeMasterKey, beta: Scalar, y: &[Scalar]) -> Result<RightCiphertext, IpeError> {
    Ok(right_encrypt_many(msk, beta, &[y.to_vec()])?.remove(0))
}

/// Left-encrypts several vectors under one `alpha`.
pub fn left_encrypt_many(msk: &IpeMasterKey, alpha: Scalar, xs: &[Vec<Scalar>]) -> Result<Vec<LeftCiphertext>, IpeError> {
    if bool::from(alpha.is_zero()) {
        return Err(IpeError::ZeroScalar);
    }
    let suite = PairingSuite::get();
    let n = msk.dimension();
    let mut points: Vec<G2Projective> = Vec::with_capacity(1 + xs.len() * n);
    points.push(suite.mul_g2(&(alpha * msk.det)));
    for x in xs {
        check_dim(msk, x.len())?;
        points.extend(row_times(x, &msk.b, alpha).iter().map(|k| suite.mul_g2(k)));
    }
    let affine = to_affine_g2(&points);
    Ok(affine[1..]
        .chunks(n)
        .map(|c| LeftCiphertext {
            companion: affine[0],
            elems: c.to_vec(),
        })
        .collect())
}

/// Right-encrypts several vectors under one `beta`.
pub fn right_encrypt_many(msk: &IpeMasterKey, beta: Scalar, ys: &[Vec<Scalar>]) -> Result<Vec<RightCiphertext>, IpeError> {
    if bool::from(beta.is_zero()) {
        return Err(IpeError::ZeroScalar);
    }
    let suite = PairingSuite::get();
    let n = msk.dimension();
    let mut points: Vec<G1Projective> = Vec::with_capacity(1 + ys.len() * n);
    points.push(suite.mul_g1(&beta));
    for y in ys {
        check_dim(msk, y.len())?;
        points.extend(row_times(y, &msk.b_star, beta).iter().map(|k| suite.mul_g1(k)));
    }
    let affine = to_affine_g1(&points);
    Ok(affine[1..]
        .chunks(n)
        .map(|c| RightCiphertext {
            companion: affine[0],
            elems: c.to_vec(),
        })
        .collect())
}

/// A left ciphertext with Miller-loop precomputation, for repeated tests.
pub struct PreparedLeft {
    elems: Vec<G2Prepared>,
}

impl PreparedLeft {
    pub fn new(ct: &LeftCiphertext) -> Self {
        Self {
            elems: ct.elems.iter().map(|p| G2Prepared::from(*p)).collect(),
        }
    }
}

pub fn zero_test_prepared(left: &PreparedLeft, right: &RightCiphertext) -> Result<bool, IpeError> {
    if left.elems.len() != right.elems.len() {
        return Err(IpeError::DimensionMismatch {
            expected: left.elems.len(),
            got: right.elems.len(),
        });
    }
    let terms: Vec<(&G1Affine, &G2Prepared)> = right.elems.iter().zip(&left.elems).collect();
    Ok(PairingSuite::get().product_is_identity(&terms))
}

/// True iff the encrypted vectors are orthogonal.
pub fn zero_test(pp: &IpeParams, left: &LeftCiphertext, right: &RightCiphertext) -> Result<bool, IpeError> {
    if left.elems.len() != pp.dimension {
        return Err(IpeError::DimensionMismatch {
            expected: pp.dimension,
            got: left.elems.len(),
        });
    }
    zero_test_prepared(&PreparedLeft::new(left), right)
}

impl LeftCiphertext {
    pub fn byte_len(n: usize) -> usize {
        3 + G2_BYTES * (n + 1)
    }

    /// `[version][n: u16 LE][companion][elems...]`, compressed points.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::byte_len(self.elems.len()));
        out.push(LAYOUT_VERSION);
        out.extend((self.elems.len() as u16).to_le_bytes());
        out.extend(self.companion.to_compressed());
        for e in &self.elems {
            out.extend(e.to_compressed());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IpeError> {
        let pts = parse_points::<G2_BYTES>(bytes)?;
        let mut pts = pts
            .iter()
            .map(|b| Option::from(G2Affine::from_compressed(b)).ok_or(IpeError::Malformed))
            .collect::<Result<Vec<_>, _>>()?;
        let companion = pts.remove(0);
        Ok(Self { companion, elems: pts })
    }
}

impl RightCiphertext {
    pub fn byte_len(n: usize) -> usize {
        3 + G1_BYTES * (n + 1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::byte_len(self.elems.len()));
        out.push(LAYOUT_VERSION);
        out.extend((self.elems.len() as u16).to_le_bytes());
        out.extend(self.companion.to_compressed());
        for e in &self.elems {
            out.extend(e.to_compressed());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IpeError> {
        let pts = parse_points::<G1_BYTES>(bytes)?;
        let mut pts = pts
            .iter()
            .map(|b| Option::from(G1Affine::from_compressed(b)).ok_or(IpeError::Malformed))
            .collect::<Result<Vec<_>, _>>()?;
        let companion = pts.remove(0);
        Ok(Self { companion, elems: pts })
    }
}

fn parse_points<const W: usize>(bytes: &[u8]) -> Result<Vec<[u8; W]>, IpeError> {
    if bytes.len() < 3 || bytes[0] != LAYOUT_VERSION {
        return Err(IpeError::Malformed);
    }
    let n = u16::from_le_bytes([bytes[1], bytes[2]]) as usize;
    let body = &bytes[3..];
    if body.len() != W * (n + 1) {
        return Err(IpeError::Malformed);
    }
    Ok(body.chunks(W).map(|c| c.try_into().unwrap()).collect())
}

pub fn scalar_from_i64(v: i64) -> Scalar {
    let mag = Scalar::from(v.unsigned_abs());
    if v < 0 {
        -mag
    } else {
        mag
    }
}

fn nonzero_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(&mut *rng);
        if !bool::from(s.is_zero()) {
            return s;
        }
    }
}

/// Each encoded vector is scaled by its own random nonzero factor before
/// encryption, so a nonzero product reveals nothing about its value.
fn blind(v: &[i64], rho: Scalar) -> Vec<Scalar> {
    v.iter().map(|&c| scalar_from_i64(c) * rho).collect()
}

/// Encrypted two-family operand (the bid side of a comparison).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyCiphertexts {
    pub less: Vec<RightCiphertext>,
    pub greater: Vec<RightCiphertext>,
}

/// Right-encrypts both families of `x` under one fresh `beta`.
pub fn encrypt_families<R: RngCore + CryptoRng>(
    msk: &IpeMasterKey,
    x: &LeftEncoding,
    rng: &mut R,
) -> Result<FamilyCiphertexts, IpeError> {
    let beta = nonzero_scalar(rng);
    let vecs: Vec<Vec<Scalar>> = x
        .less
        .iter()
        .chain(&x.greater)
        .map(|v| blind(v, nonzero_scalar(rng)))
        .collect();
    let mut cts = right_encrypt_many(msk, beta, &vecs)?;
    let greater = cts.split_off(x.less.len());
    Ok(FamilyCiphertexts { less: cts, greater })
}

/// Left-encrypts the single family of `y` under one fresh `alpha`.
pub fn encrypt_single<R: RngCore + CryptoRng>(
    msk: &IpeMasterKey,
    y: &RightEncoding,
    rng: &mut R,
) -> Result<Vec<LeftCiphertext>, IpeError> {
    let alpha = nonzero_scalar(rng);
    let vecs: Vec<Vec<Scalar>> = y.vectors.iter().map(|v| blind(v, nonzero_scalar(rng))).collect();
    left_encrypt_many(msk, alpha, &vecs)
}

/// Result of scanning encrypted encodings for the first zero product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scan {
    pub hit: Option<Hit>,
    pub zero_tests: usize,
}

/// Scans indices MSB first, testing "less" then "greater", stopping at the
/// first zero product.
pub fn scan(single: &[LeftCiphertext], families: &FamilyCiphertexts) -> Result<Scan, IpeError> {
    use std::cmp::Ordering;
    let mut zero_tests = 0;
    for (j, ct) in single.iter().enumerate() {
        let prepared = PreparedLeft::new(ct);
        let (less, greater) = match (families.less.get(j), families.greater.get(j)) {
            (Some(l), Some(g)) => (l, g),
            _ => return Err(IpeError::Malformed),
        };
        zero_tests += 1;
        if zero_test_prepared(&prepared, less)? {
            return Ok(Scan {
                hit: Some(Hit { index: j, ordering: Ordering::Less }),
                zero_tests,
            });
        }
        zero_tests += 1;
        if zero_test_prepared(&prepared, greater)? {
            return Ok(Scan {
                hit: Some(Hit { index: j, ordering: Ordering::Greater }),
                zero_tests,
            });
        }
    }
    Ok(Scan { hit: None, zero_tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode_x, encode_y, first_hit, Layout};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn s(v: &[i64]) -> Vec<Scalar> {
        v.iter().map(|&c| scalar_from_i64(c)).collect()
    }

    fn zt(msk: &IpeMasterKey, pp: &IpeParams, x: &[i64], y: &[i64], rng: &mut ChaCha20Rng) -> bool {
        let l = left_encrypt(msk, nonzero_scalar(rng), &s(x)).unwrap();
        let r = right_encrypt(msk, nonzero_scalar(rng), &s(y)).unwrap();
        zero_test(pp, &l, &r).unwrap()
    }

    #[test]
    fn invert_matches_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, msk) = setup(4, &mut rng).unwrap();
        // B * B*^T = det * I
        for i in 0..4 {
            for j in 0..4 {
                let v: Scalar = (0..4).map(|k| msk.b[i][k] * msk.b_star[j][k]).sum();
                assert_eq!(v, if i == j { msk.det } else { Scalar::ZERO });
            }
        }
    }

    #[test]
    fn one_dimensional_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (pp, msk) = setup(1, &mut rng).unwrap();
        assert!(zt(&msk, &pp, &[0], &[1], &mut rng));
        assert!(!zt(&msk, &pp, &[1], &[1], &mut rng));
        assert!(zt(&msk, &pp, &[0], &[0], &mut rng));
        assert!(!zt(&msk, &pp, &[2], &[3], &mut rng));
    }

    #[test]
    fn zero_vector_and_orthogonal_basis() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (pp, msk) = setup(2, &mut rng).unwrap();
        for y in [[1, 0], [5, -7], [0, 3]] {
            assert!(zt(&msk, &pp, &[0, 0], &y, &mut rng));
            assert!(zt(&msk, &pp, &y, &[0, 0], &mut rng));
        }
        assert!(zt(&msk, &pp, &[1, 0], &[0, 1], &mut rng));
        assert!(zt(&msk, &pp, &[0, 1], &[1, 0], &mut rng));
    }

    #[test]
    fn fresh_scalars_change_bytes_not_results() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (pp, msk) = setup(2, &mut rng).unwrap();
        let x = s(&[3, -2]);
        let a = left_encrypt(&msk, Scalar::from(5u64), &x).unwrap();
        let b = left_encrypt(&msk, Scalar::from(9u64), &x).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
        for y in [[2, 3], [1, 1]] {
            let r = right_encrypt(&msk, nonzero_scalar(&mut rng), &s(&y)).unwrap();
            assert_eq!(zero_test(&pp, &a, &r).unwrap(), zero_test(&pp, &b, &r).unwrap());
            let r1 = right_encrypt(&msk, Scalar::from(5u64), &s(&y)).unwrap();
            let r2 = right_encrypt(&msk, Scalar::from(9u64), &s(&y)).unwrap();
            assert_ne!(r1.to_bytes(), r2.to_bytes());
            assert_eq!(zero_test(&pp, &a, &r1).unwrap(), zero_test(&pp, &a, &r2).unwrap());
        }
    }

    #[test]
    fn exhaustive_binary_cube() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (pp, msk) = setup(3, &mut rng).unwrap();
        let cube: Vec<[i64; 3]> = (0..8).map(|i| [i & 1, (i >> 1) & 1, (i >> 2) & 1]).collect();
        for x in &cube {
            for y in &cube {
                let expect = crate::encoding::inner(x, y) == 0;
                assert_eq!(zt(&msk, &pp, x, y, &mut rng), expect, "{x:?} {y:?}");
            }
        }
    }

    #[test]
    fn independent_keys_disagree() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (pp, k1) = setup(2, &mut rng).unwrap();
        let (_, k2) = setup(2, &mut rng).unwrap();
        let mut agreements = 0;
        for _ in 0..20 {
            let a: i64 = rng.gen_range(1..1000);
            let b: i64 = rng.gen_range(1..1000);
            // <(a, b), (b, -a)> = 0 under matching keys.
            let l = left_encrypt(&k1, nonzero_scalar(&mut rng), &s(&[a, b])).unwrap();
            let r = right_encrypt(&k2, nonzero_scalar(&mut rng), &s(&[b, -a])).unwrap();
            agreements += zero_test(&pp, &l, &r).unwrap() as usize;
        }
        assert_eq!(agreements, 0);
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        assert_eq!(setup(0, &mut rng).unwrap_err(), IpeError::ZeroDimension);
        let (pp, msk) = setup(2, &mut rng).unwrap();
        assert_eq!(
            left_encrypt(&msk, Scalar::ONE, &s(&[1])).unwrap_err(),
            IpeError::DimensionMismatch { expected: 2, got: 1 }
        );
        assert_eq!(left_encrypt(&msk, Scalar::ZERO, &s(&[1, 1])).unwrap_err(), IpeError::ZeroScalar);
        let (pp3, msk3) = setup(3, &mut rng).unwrap();
        let l = left_encrypt(&msk3, Scalar::ONE, &s(&[1, 1, 1])).unwrap();
        let r = right_encrypt(&msk, Scalar::ONE, &s(&[1, 1])).unwrap();
        assert!(zero_test(&pp, &l, &r).is_err());
        assert!(zero_test(&pp3, &l, &r).is_err());
    }

    #[test]
    #[ignore]
    fn timing_twelve_bit_comparison() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let (_, msk) = setup(2, &mut rng).unwrap();
        let _ = PairingSuite::get();
        let t = std::time::Instant::now();
        let mut tests = 0;
        for _ in 0..50 {
            let b = rng.gen_range(1..2000u64);
            let m = b + rng.gen_range(0..200u64);
            let fam = encrypt_families(&msk, &encode_x(b, 12, Layout::Compact).unwrap(), &mut rng).unwrap();
            let single = encrypt_single(&msk, &encode_y(m, 12, Layout::Compact).unwrap(), &mut rng).unwrap();
            tests += scan(&single, &fam).unwrap().zero_tests;
        }
        eprintln!("{:?} per comparison, {} tests avg", t.elapsed() / 50, tests as f64 / 50.0);
    }

    #[test]
    fn serialization_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let (_, msk) = setup(2, &mut rng).unwrap();
        let l = left_encrypt(&msk, Scalar::from(3u64), &s(&[1, 2])).unwrap();
        let r = right_encrypt(&msk, Scalar::from(4u64), &s(&[1, 2])).unwrap();
        let lb = l.to_bytes();
        let rb = r.to_bytes();
        assert_eq!(lb.len(), LeftCiphertext::byte_len(2));
        assert_eq!(rb.len(), RightCiphertext::byte_len(2));
        assert_eq!(LeftCiphertext::from_bytes(&lb).unwrap(), l);
        assert_eq!(RightCiphertext::from_bytes(&rb).unwrap(), r);
        assert_eq!(LeftCiphertext::from_bytes(&rb).unwrap_err(), IpeError::Malformed);
    }

    #[test]
    fn encrypted_comparison_matches_encoding() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for layout in [Layout::Compact, Layout::BitPair] {
            let (_, msk) = setup(layout.dimension(4), &mut rng).unwrap();
            for (x, y) in [(1u64, 2u64), (5, 5), (9, 3), (0, 15), (15, 0), (7, 8)] {
                let xe = encode_x(x, 4, layout).unwrap();
                let ye = encode_y(y, 4, layout).unwrap();
                let fam = encrypt_families(&msk, &xe, &mut rng).unwrap();
                let single = encrypt_single(&msk, &ye, &mut rng).unwrap();
                let scan = scan(&single, &fam).unwrap();
                assert_eq!(scan.hit, first_hit(&xe, &ye).unwrap());
                assert!(scan.zero_tests <= 8);
            }
        }
    }
}
