//! Small dense symmetric-positive-definite kernels. Matrices are row-major
//! `Vec<f64>` of size `n * n`; the sizes involved here (GPR subsets,
//! covariance tiles) never justify pulling in a full linear algebra crate.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

/// In-place lower Cholesky factor. The strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite { pivot: i, value: sum });
                }
                a[i * n + i] = math::sqrt(sum);
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Inverse of an SPD matrix from its lower Cholesky factor.
pub fn inverse_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // L^{-1} column by column, then (L^{-1})^T L^{-1}.
    let mut linv = vec![0.0; n * n];
    for j in 0..n {
        linv[j * n + j] = 1.0 / l[j * n + j];
        for i in (j + 1)..n {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = sum / l[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i..n {
                sum += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = sum;
            inv[j * n + i] = sum;
        }
    }
    inv
}

/// Inverse of an SPD matrix. On factorization failure, `jitter` is added to
/// the diagonal (growing tenfold per attempt, four attempts).
pub fn spd_inverse(a: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>, LinalgError> {
    let mut work = a.to_vec();
    match cholesky_in_place(&mut work, n) {
        Ok(()) => return Ok(inverse_from_cholesky(&work, n)),
        Err(e) if jitter <= 0.0 => return Err(e),
        Err(_) => {}
    }
    let mut eps = jitter;
    let mut last = None;
    for _ in 0..4 {
        work.copy_from_slice(a);
        for i in 0..n {
            work[i * n + i] += eps;
        }
        match cholesky_in_place(&mut work, n) {
            Ok(()) => return Ok(inverse_from_cholesky(&work, n)),
            Err(e) => last = Some(e),
        }
        eps *= 10.0;
    }
    Err(last.expect("at least one attempt"))
}

pub fn mat_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        out[i] = row.iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

pub fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
}

/// Inverse of a growing SPD matrix, maintained by bordering: appending a
/// row/column costs `O(n^2)` and reuses the stored inverse. The Schur
/// complement of each new pivot is the squared diagonal entry of the
/// corresponding Cholesky factor, so a non-positive pivot is reported
/// exactly as a failed Cholesky step would be.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BorderedInverse {
    n: usize,
    inv: Vec<f64>,
}

impl BorderedInverse {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inv[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.inv
    }

    /// Append a point whose covariances with the existing points are `b`
    /// and whose own (noisy) variance is `c`.
    pub fn push(&mut self, b: &[f64], c: f64) -> Result<(), LinalgError> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut u = vec![0.0; n];
        mat_vec(&self.inv, n, b, &mut u);
        let schur = c - b.iter().zip(&u).map(|(p, q)| p * q).sum::<f64>();
        if !(schur > 0.0) || !schur.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: n, value: schur });
        }
        let m = n + 1;
        let mut next = vec![0.0; m * m];
        let s_inv = 1.0 / schur;
        for i in 0..n {
            for j in 0..n {
                next[i * m + j] = self.inv[i * n + j] + u[i] * u[j] * s_inv;
            }
            next[i * m + n] = -u[i] * s_inv;
            next[n * m + i] = -u[i] * s_inv;
        }
        next[n * m + n] = s_inv;
        self.inv = next;
        self.n = m;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.n = 0;
        self.inv.clear();
    }
}
