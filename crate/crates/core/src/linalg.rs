//! Dense linear algebra for the MNA solver: LU factorization with partial
//! pivoting. Circuit matrices here top out at a few dozen unknowns, so a
//! flat row-major matrix and O(n^3) factorization are the right tool.

use crate::scalar::Scalar;

/// Row-major dense square-capable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = self.data[r * self.cols + c] + v;
    }

    /// Largest absolute entry; zero for an empty matrix.
    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Why a solve failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    /// A pivot fell below the relative threshold: the system is structurally
    /// singular (voltage-source loop, current-source cutset, floating nodes).
    #[error("matrix is singular")]
    Singular,
}

/// Relative pivot threshold: inputs are integer-valued, so true singularities
/// are exact and any tiny pivot is structural rather than roundoff.
pub const PIVOT_RTOL: f64 = 1e-12;

/// LU solution plus the smallest pivot magnitude relative to max|A|, a
/// cheap conditioning hint (small ratio ⇒ nearly singular system).
#[derive(Debug, Clone)]
pub struct LuSolution<S> {
    pub x: Vec<S>,
    pub min_pivot_ratio: S,
}

/// Solves `A x = b` by LU with partial pivoting, consuming a copy of `A`.
pub fn lu_solve<S: Scalar>(a: &DenseMatrix<S>, b: &[S]) -> Result<Vec<S>, LinalgError> {
    lu_solve_full(a, b).map(|solution| solution.x)
}

#[allow(clippy::needless_range_loop)]
pub fn lu_solve_full<S: Scalar>(a: &DenseMatrix<S>, b: &[S]) -> Result<LuSolution<S>, LinalgError> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "square system required");
    assert_eq!(n, b.len(), "rhs length must match");
    if n == 0 {
        return Ok(LuSolution { x: Vec::new(), min_pivot_ratio: S::one() });
    }
    let max_abs = a.max_abs();
    let threshold = S::from_f64(PIVOT_RTOL).unwrap() * max_abs;
    let mut min_pivot = S::infinity();
    let mut m = a.clone();
    let mut x = b.to_vec();

    for k in 0..n {
        // Partial pivot: largest magnitude in column k at or below the diagonal.
        let mut pivot_row = k;
        let mut pivot_mag = m.get(k, k).abs();
        for r in k + 1..n {
            let mag = m.get(r, k).abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag <= threshold {
            return Err(LinalgError::Singular);
        }
        min_pivot = min_pivot.min(pivot_mag);
        if pivot_row != k {
            for c in 0..n {
                let tmp = m.get(k, c);
                m.set(k, c, m.get(pivot_row, c));
                m.set(pivot_row, c, tmp);
            }
            x.swap(k, pivot_row);
        }
        let pivot = m.get(k, k);
        for r in k + 1..n {
            let factor = m.get(r, k) / pivot;
            if factor == S::zero() {
                continue;
            }
            m.set(r, k, S::zero());
            for c in k + 1..n {
                let v = m.get(r, c) - factor * m.get(k, c);
                m.set(r, c, v);
            }
            x[r] = x[r] - factor * x[k];
        }
    }
    // Back substitution.
    for k in (0..n).rev() {
        let mut acc = x[k];
        for c in k + 1..n {
            acc = acc - m.get(k, c) * x[c];
        }
        x[k] = acc / m.get(k, k);
    }
    let min_pivot_ratio = if max_abs > S::zero() { min_pivot / max_abs } else { S::one() };
    Ok(LuSolution { x, min_pivot_ratio })
}
