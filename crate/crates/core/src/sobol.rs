//! Unscrambled Sobol' sequence in natural (non Gray-code) order.
//!
//! Direction numbers are the Joe-Kuo "new-joe-kuo-6.21201" set for the first
//! eight dimensions; dimension 0 is the base-2 van der Corput sequence.

use crate::error::{Error, Result};

const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2..=8 of the Joe-Kuo table.
const PRIMITIVES: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

/// Largest supported dimension count.
pub const MAX_DIM: usize = PRIMITIVES.len() + 1;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (s, a, m) = PRIMITIVES[dim - 1];
    let s = s as usize;
    for i in 0..s.min(BITS) {
        v[i] = m[i] << (BITS - 1 - i);
    }
    for i in s..BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// A stream of Sobol' points over `[0, 1)^dims`.
///
/// The `n`-th call to [`SobolStream::next_point`] returns sequence index
/// `skip + n`; the stream never revisits an index.
#[derive(Debug, Clone)]
pub struct SobolStream {
    directions: Vec<[u32; BITS]>,
    dims: Vec<usize>,
    index: u64,
    skip: u64,
}

impl SobolStream {
    /// Stream over table dimensions `0..dims`.
    pub fn new(dims: usize, skip: u64) -> Result<Self> {
        Self::with_dims(&(0..dims).collect::<Vec<_>>(), skip)
    }

    /// Stream over an explicit selection of table dimensions.
    pub fn with_dims(dims: &[usize], skip: u64) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&d| d >= MAX_DIM) {
            return Err(Error::SobolDimension {
                requested: bad + 1,
                capacity: MAX_DIM,
            });
        }
        if dims.len() > MAX_DIM {
            return Err(Error::SobolDimension {
                requested: dims.len(),
                capacity: MAX_DIM,
            });
        }
        Ok(Self {
            directions: dims.iter().map(|&d| direction_numbers(d)).collect(),
            dims: dims.to_vec(),
            index: skip,
            skip,
        })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Sequence index the next call will return.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn skip(&self) -> u64 {
        self.skip
    }

    /// Point at an arbitrary sequence index, without advancing.
    pub fn point_at(&self, index: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dims.len());
        debug_assert!(index < 1 << BITS);
        for (slot, v) in out.iter_mut().zip(&self.directions) {
            let mut x = 0u32;
            let mut i = index;
            let mut bit = 0;
            while i != 0 {
                if i & 1 == 1 {
                    x ^= v[bit];
                }
                i >>= 1;
                bit += 1;
            }
            *slot = f64::from(x) / (1u64 << BITS) as f64;
        }
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        self.point_at(self.index, out);
        self.index += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dims.len()];
        self.next_into(&mut p);
        p
    }
}

/// One point of a `dims`-dimensional Sobol' stream at `index`.
pub fn sobol_point(dims: usize, index: u64) -> Result<Vec<f64>> {
    let s = SobolStream::new(dims, 0)?;
    let mut p = vec![0.0; dims];
    s.point_at(index, &mut p);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radical_inverse(mut i: u64) -> f64 {
        let mut f = 0.5;
        let mut r = 0.0;
        while i > 0 {
            if i & 1 == 1 {
                r += f;
            }
            i >>= 1;
            f *= 0.5;
        }
        r
    }

    #[test]
    fn first_dimension_is_van_der_corput() {
        let mut s = SobolStream::new(1, 1).unwrap();
        for i in 1..=1024u64 {
            assert_eq!(s.next_point()[0], radical_inverse(i), "index {i}");
        }
        assert_eq!(sobol_point(1, 1).unwrap(), vec![0.5]);
        assert_eq!(sobol_point(1, 2).unwrap(), vec![0.25]);
        assert_eq!(sobol_point(1, 3).unwrap(), vec![0.75]);
    }

    #[test]
    fn origin_at_index_zero() {
        assert_eq!(sobol_point(4, 0).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn matches_reference_table() {
        // natural-order points of the Joe-Kuo 21201 set, all eight dimensions
        let table: [(u64, [f64; 8]); 4] = [
            (2, [0.25, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25]),
            (4, [0.125, 0.625, 0.375, 0.125, 0.125, 0.375, 0.625, 0.625]),
            (8, [0.0625, 0.9375, 0.5625, 0.3125, 0.6875, 0.1875, 0.8125, 0.3125]),
            (
                37,
                [0.640625, 0.921875, 0.734375, 0.828125, 0.484375, 0.765625, 0.703125, 0.015625],
            ),
        ];
        for (index, expected) in table {
            assert_eq!(sobol_point(8, index).unwrap(), expected.to_vec(), "index {index}");
        }
    }

    #[test]
    fn too_many_dimensions() {
        assert!(matches!(
            SobolStream::new(9, 0),
            Err(Error::SobolDimension { .. })
        ));
    }

    #[test]
    fn every_dimension_stratifies_dyadic_blocks() {
        // each 1D projection of indices [0, 2^m) hits every interval [j/2^m, (j+1)/2^m)
        let m = 10;
        let s = SobolStream::new(MAX_DIM, 0).unwrap();
        let mut p = vec![0.0; MAX_DIM];
        let mut hits = vec![vec![0u32; 1 << m]; MAX_DIM];
        for i in 0..(1u64 << m) {
            s.point_at(i, &mut p);
            for d in 0..MAX_DIM {
                hits[d][(p[d] * f64::from(1u32 << m)) as usize] += 1;
            }
        }
        assert!(hits.iter().flatten().all(|&h| h == 1));
    }

    #[test]
    fn stream_index_advances() {
        let mut s = SobolStream::new(3, 5).unwrap();
        assert_eq!(s.index(), 5);
        let a = s.next_point();
        let b = s.next_point();
        assert_ne!(a, b);
        assert_eq!(s.index(), 7);
        let mut direct = vec![0.0; 3];
        s.point_at(5, &mut direct);
        assert_eq!(a, direct);
    }
}
