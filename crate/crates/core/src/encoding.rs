//! Dual binary encoding: two integers become vector families whose
//! inner-product zero-tests decide `<`, `>` or `=`.
//!
//! `x` is encoded into a "less" and a "greater" family, `y` into one family,
//! all index-aligned and scanned from the most significant bit. At index `j`
//! the "less" product is zero exactly when `x < y` is decided at bit `j`
//! (equal higher bits, `x_j = 0`, `y_j = 1`); the "greater" product likewise
//! for `x > y`. Equal inputs produce no zero anywhere.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodingError {
    #[error("value {value} outside [0, 2^{width})")]
    OutOfDomain { value: u64, width: u32 },
    #[error("width must be in 1..=62, got {0}")]
    BadWidth(u32),
    #[error("encodings disagree on width or layout")]
    Mismatch,
    #[error("more than one zero product; the encoding is malformed")]
    Ambiguous,
}

/// Vector layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Layout {
    /// Two coordinates per index, comparing bit prefixes as integers:
    /// less `(x_j - 4X - 4, 4)`, greater `(4X - 3 - x_j, -4)`, right `(1, Y)`
    /// where `X`, `Y` are the prefixes down to bit `j`. Products are
    /// `4(Y - X - 1) + x_j` and `4(X - Y - 1) + 1 - x_j`.
    #[default]
    Compact,
    /// One coordinate pair per higher bit counting prefix mismatches, plus
    /// three tail slots; dimension `2 * width + 1`.
    BitPair,
}

impl Layout {
    pub fn dimension(&self, width: u32) -> usize {
        match self {
            Layout::Compact => 2,
            Layout::BitPair => 2 * width as usize + 1,
        }
    }
}

/// Encoding of the left operand: the "less" and "greater" families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeftEncoding {
    pub width: u32,
    pub layout: Layout,
    pub less: Vec<Vec<i64>>,
    pub greater: Vec<Vec<i64>>,
}

/// Encoding of the right operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightEncoding {
    pub width: u32,
    pub layout: Layout,
    pub vectors: Vec<Vec<i64>>,
}

fn check(value: u64, width: u32) -> Result<(), EncodingError> {
    if width == 0 || width > 62 {
        return Err(EncodingError::BadWidth(width));
    }
    if value >> width != 0 {
        return Err(EncodingError::OutOfDomain { value, width });
    }
    Ok(())
}

/// Bit `j` counted from the most significant end.
fn msb_bit(v: u64, width: u32, j: u32) -> i64 {
    ((v >> (width - 1 - j)) & 1) as i64
}

fn prefix(v: u64, width: u32, j: u32) -> i64 {
    (v >> (width - 1 - j)) as i64
}

pub fn encode_x(x: u64, width: u32, layout: Layout) -> Result<LeftEncoding, EncodingError> {
    check(x, width)?;
    let mut less = Vec::with_capacity(width as usize);
    let mut greater = Vec::with_capacity(width as usize);
    for j in 0..width {
        let xj = msb_bit(x, width, j);
        match layout {
            Layout::Compact => {
                let big_x = prefix(x, width, j);
                less.push(vec![xj - 4 * big_x - 4, 4]);
                greater.push(vec![4 * big_x - 3 - xj, -4]);
            }
            Layout::BitPair => {
                let mut pairs = vec![0i64; 2 * (width as usize - 1)];
                for k in 0..j {
                    let xk = msb_bit(x, width, k);
                    pairs[2 * k as usize] = xk;
                    pairs[2 * k as usize + 1] = 1 - xk;
                }
                let mut l = pairs.clone();
                l.extend([xj, 1, 0]);
                let mut g = pairs;
                g.extend([1 - xj, 0, 1]);
                less.push(l);
                greater.push(g);
            }
        }
    }
    Ok(LeftEncoding {
        width,
        layout,
        less,
        greater,
    })
}

pub fn encode_y(y: u64, width: u32, layout: Layout) -> Result<RightEncoding, EncodingError> {
    check(y, width)?;
    let mut vectors = Vec::with_capacity(width as usize);
    for j in 0..width {
        match layout {
            Layout::Compact => vectors.push(vec![1, prefix(y, width, j)]),
            Layout::BitPair => {
                let mut v = vec![0i64; 2 * (width as usize - 1)];
                for k in 0..j {
                    let yk = msb_bit(y, width, k);
                    v[2 * k as usize] = 1 - yk;
                    v[2 * k as usize + 1] = yk;
                }
                let yj = msb_bit(y, width, j);
                v.extend([1, 1 - yj, yj]);
                vectors.push(v);
            }
        }
    }
    Ok(RightEncoding {
        width,
        layout,
        vectors,
    })
}

pub fn inner(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which family produced a zero, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub index: usize,
    pub ordering: Ordering,
}

/// First zero product scanning indices MSB first, "less" before "greater".
pub fn first_hit(x: &LeftEncoding, y: &RightEncoding) -> Result<Option<Hit>, EncodingError> {
    if x.width != y.width || x.layout != y.layout {
        return Err(EncodingError::Mismatch);
    }
    for (j, yv) in y.vectors.iter().enumerate() {
        if inner(&x.less[j], yv) == 0 {
            return Ok(Some(Hit {
                index: j,
                ordering: Ordering::Less,
            }));
        }
        if inner(&x.greater[j], yv) == 0 {
            return Ok(Some(Hit {
                index: j,
                ordering: Ordering::Greater,
            }));
        }
    }
    Ok(None)
}

/// Clear-text comparison through the encodings; errors if more than one
/// product vanishes.
pub fn plain_compare(x: &LeftEncoding, y: &RightEncoding) -> Result<Ordering, EncodingError> {
    if x.width != y.width || x.layout != y.layout {
        return Err(EncodingError::Mismatch);
    }
    let zeros = y
        .vectors
        .iter()
        .enumerate()
        .map(|(j, yv)| {
            (inner(&x.less[j], yv) == 0) as usize + (inner(&x.greater[j], yv) == 0) as usize
        })
        .sum::<usize>();
    if zeros > 1 {
        return Err(EncodingError::Ambiguous);
    }
    Ok(first_hit(x, y)?.map_or(Ordering::Equal, |h| h.ordering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const LAYOUTS: [Layout; 2] = [Layout::Compact, Layout::BitPair];

    fn cmp(x: u64, y: u64, w: u32, layout: Layout) -> Ordering {
        plain_compare(&encode_x(x, w, layout).unwrap(), &encode_y(y, w, layout).unwrap()).unwrap()
    }

    #[test]
    fn first_hit_for_one_vs_two() {
        for layout in LAYOUTS {
            let hit = first_hit(&encode_x(1, 2, layout).unwrap(), &encode_y(2, 2, layout).unwrap())
                .unwrap()
                .unwrap();
            assert_eq!(hit.ordering, Ordering::Less);
            assert_eq!(hit.index, 0);
        }
    }

    #[test]
    fn equal_values_never_hit() {
        for layout in LAYOUTS {
            for (v, w) in [(3, 2), (0, 4), (4095, 12)] {
                let x = encode_x(v, w, layout).unwrap();
                let y = encode_y(v, w, layout).unwrap();
                assert_eq!(first_hit(&x, &y).unwrap(), None);
                assert_eq!(plain_compare(&x, &y).unwrap(), Ordering::Equal);
            }
        }
    }

    #[test]
    fn domain_and_width() {
        assert!(encode_x(4095, 12, Layout::Compact).is_ok());
        assert_eq!(
            encode_x(4096, 12, Layout::Compact).unwrap_err(),
            EncodingError::OutOfDomain { value: 4096, width: 12 }
        );
        assert_eq!(encode_y(0, 0, Layout::Compact).unwrap_err(), EncodingError::BadWidth(0));
        let x = encode_x(1, 3, Layout::Compact).unwrap();
        let y = encode_y(1, 4, Layout::Compact).unwrap();
        assert_eq!(plain_compare(&x, &y).unwrap_err(), EncodingError::Mismatch);
    }

    #[test]
    fn boundary_values() {
        for layout in LAYOUTS {
            assert_eq!(cmp(0, 4095, 12, layout), Ordering::Less);
            assert_eq!(cmp(5, 5, 12, layout), Ordering::Equal);
            for x in 0..63 {
                assert_eq!(cmp(x, 63, 6, layout), Ordering::Less);
            }
        }
    }

    #[test]
    fn dimensions_are_uniform() {
        for layout in LAYOUTS {
            let x = encode_x(37, 8, layout).unwrap();
            let y = encode_y(200, 8, layout).unwrap();
            let n = layout.dimension(8);
            assert!(x.less.iter().chain(&x.greater).chain(&y.vectors).all(|v| v.len() == n));
        }
        assert_eq!(Layout::BitPair.dimension(12), 25);
    }

    #[test]
    fn exhaustive_up_to_eight_bits() {
        for layout in LAYOUTS {
            for w in 1..=8u32 {
                let xs: Vec<_> = (0..1u64 << w).map(|x| encode_x(x, w, layout).unwrap()).collect();
                let ys: Vec<_> = (0..1u64 << w).map(|y| encode_y(y, w, layout).unwrap()).collect();
                for (x, xe) in xs.iter().enumerate() {
                    for (y, ye) in ys.iter().enumerate() {
                        assert_eq!(plain_compare(xe, ye).unwrap(), x.cmp(&y), "w={w} x={x} y={y}");
                    }
                }
            }
        }
    }

    #[test]
    fn random_pairs_at_twelve_bits() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for layout in LAYOUTS {
            for _ in 0..100_000 {
                let x = rng.gen_range(0..4096u64);
                let y = rng.gen_range(0..4096u64);
                assert_eq!(cmp(x, y, 12, layout), x.cmp(&y));
            }
        }
    }

    #[test]
    fn hit_index_is_first_differing_bit() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let x = rng.gen_range(0..4096u64);
            let y = rng.gen_range(0..4096u64);
            if x == y {
                continue;
            }
            let expect = 11 - (63 - (x ^ y).leading_zeros()) as usize;
            for layout in LAYOUTS {
                let hit = first_hit(&encode_x(x, 12, layout).unwrap(), &encode_y(y, 12, layout).unwrap())
                    .unwrap()
                    .unwrap();
                assert_eq!(hit.index, expect);
            }
        }
    }
}
