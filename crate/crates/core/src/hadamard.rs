//! Sylvester-ordered Walsh-Hadamard matrices and the fast transform.
//!
//! `H_1 = [1]`, `H_{2n} = H_2 ⊗ H_n`. The transform is unnormalized and keeps
//! natural (Sylvester) ordering, so `fwht(fwht(x)) = n·x` and callers apply
//! any `1/n` factor themselves. Row indices at the public boundary are
//! 1-based.

use std::ops::{Add, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest order `dense_hadamard` will materialize.
pub const DENSE_LIMIT: usize = 4096;

/// Transform length `n = 2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HadamardOrder {
    k: u32,
}

impl HadamardOrder {
    pub fn from_exponent(k: u32) -> Result<Self> {
        if k >= usize::BITS {
            return Err(Error::param(format!("exponent {k} too large")));
        }
        Ok(Self { k })
    }

    pub fn from_len(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Dimension {
                context: "Hadamard length (power of two)",
                expected: n.checked_next_power_of_two().unwrap_or(0).max(1),
                got: n,
            });
        }
        Ok(Self {
            k: n.trailing_zeros(),
        })
    }

    pub fn exponent(self) -> u32 {
        self.k
    }

    pub fn len(self) -> usize {
        1usize << self.k
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

/// In-place unnormalized fast Walsh-Hadamard transform, natural ordering.
///
/// Performs exactly `(n/2)·log₂ n` butterflies, each one addition and one
/// subtraction.
pub fn fwht_in_place<T>(x: &mut [T]) -> Result<()>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = HadamardOrder::from_len(x.len())?.len();
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Returns `H_n · x`.
pub fn fwht(x: &[f64]) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Row `i` (1-based) of `H_n`, built as the transform of the `i`-th basis
/// vector (valid because `H_n` is symmetric).
pub fn hadamard_row(n: usize, i: usize) -> Result<Vec<f64>> {
    HadamardOrder::from_len(n)?;
    if i == 0 || i > n {
        return Err(Error::Index { index: i, max: n });
    }
    let mut e = vec![0.0; n];
    e[i - 1] = 1.0;
    fwht_in_place(&mut e)?;
    Ok(e)
}

/// Explicit `H_n` from the Kronecker recursion. Test and diagnostics use only.
pub fn dense_hadamard(n: usize) -> Result<DMatrix<f64>> {
    HadamardOrder::from_len(n)?;
    if n > DENSE_LIMIT {
        return Err(Error::Capacity(format!(
            "dense Hadamard of order {n} exceeds limit {DENSE_LIMIT}"
        )));
    }
    let h2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        h = h2.kronecker(&h);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use std::cell::Cell;

    #[test]
    fn trivial_examples() {
        assert_eq!(fwht(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![4.0, 0.0, 0.0, 0.0]);
        assert_eq!(fwht(&[1.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(fwht(&[0.0, 1.0]).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn involution_length_eight() {
        let x = [3.0, -1.0, 2.5, 0.0, 7.0, 1.0, -4.0, 2.0];
        let y = fwht(&fwht(&x).unwrap()).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert_eq!(*a, 8.0 * b);
        }
    }

    #[test]
    fn integer_inputs_are_exact() {
        let mut r = rng::seeded(11);
        for k in 0..=16 {
            let n = 1usize << k;
            let x: Vec<i64> = (0..n).map(|_| r.random_range(-1000..1000)).collect();
            let mut y = x.clone();
            fwht_in_place(&mut y).unwrap();
            fwht_in_place(&mut y).unwrap();
            assert!(y.iter().zip(&x).all(|(a, b)| *a == (n as i64) * b));
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(fwht(&[1.0, 2.0, 3.0]), Err(Error::Dimension { .. })));
        assert!(fwht(&[]).is_err());
    }

    #[test]
    fn rows() {
        assert_eq!(hadamard_row(4, 1).unwrap(), vec![1.0; 4]);
        assert_eq!(hadamard_row(2, 2).unwrap(), vec![1.0, -1.0]);
        assert!(matches!(hadamard_row(4, 0), Err(Error::Index { .. })));
        assert!(matches!(hadamard_row(4, 5), Err(Error::Index { .. })));
        for i in 1..=8 {
            for j in 1..=8 {
                let d: f64 = hadamard_row(8, i)
                    .unwrap()
                    .iter()
                    .zip(hadamard_row(8, j).unwrap())
                    .map(|(a, b)| a * b)
                    .sum();
                assert_eq!(d, if i == j { 8.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn dense_matches_recursion_and_is_orthogonal() {
        let h2 = dense_hadamard(2).unwrap();
        assert_eq!(h2, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]));
        assert_eq!(dense_hadamard(4).unwrap(), h2.kronecker(&h2));
        let mut n = 1;
        while n <= 256 {
            let h = dense_hadamard(n).unwrap();
            assert_eq!(h.transpose() * &h, DMatrix::identity(n, n) * n as f64);
            n *= 2;
        }
        assert!(matches!(dense_hadamard(8192), Err(Error::Capacity(_))));
    }

    #[test]
    fn rows_agree_with_dense() {
        let h = dense_hadamard(16).unwrap();
        for i in 1..=16 {
            let row = hadamard_row(16, i).unwrap();
            assert!(row.iter().zip(h.row(i - 1).iter()).all(|(a, b)| a == b));
        }
    }

    thread_local! {
        static OPS: Cell<usize> = const { Cell::new(0) };
    }

    #[derive(Clone, Copy)]
    struct Counted(f64);

    impl Add for Counted {
        type Output = Counted;
        fn add(self, o: Counted) -> Counted {
            OPS.with(|c| c.set(c.get() + 1));
            Counted(self.0 + o.0)
        }
    }

    impl Sub for Counted {
        type Output = Counted;
        #[allow(clippy::suspicious_arithmetic_impl)]
        fn sub(self, o: Counted) -> Counted {
            OPS.with(|c| c.set(c.get() + 1));
            Counted(self.0 - o.0)
        }
    }

    #[test]
    fn operation_count_is_n_log_n() {
        for k in 0..=12u32 {
            let n = 1usize << k;
            OPS.with(|c| c.set(0));
            let mut x = vec![Counted(1.0); n];
            fwht_in_place(&mut x).unwrap();
            let ops = OPS.with(|c| c.get());
            assert_eq!(ops, n * k as usize, "n = {n}");
        }
    }
}
