//! Sparse LDLᵀ factorization for quasi-definite matrices.
//!
//! Up-looking factorization driven by the elimination tree, with the symbolic
//! analysis (tree and column counts) computed once per sparsity pattern and
//! reused across numeric refactorizations. No pivoting: the matrices passed
//! in are quasi-definite, so every symmetric permutation admits a factorization.

use super::csc::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum LdlError {
    ZeroPivot(usize),
    NotUpperTriangular,
    MissingDiagonal(usize),
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    // workspaces
    y_vals: Vec<f64>,
    y_marks: Vec<bool>,
    y_idx: Vec<usize>,
    elim_buf: Vec<usize>,
    l_next: Vec<usize>,
}

impl LdlFactor {
    /// Symbolic analysis of the upper-triangular pattern of `k`.
    pub fn analyze(k: &CscMatrix) -> Result<Self, LdlError> {
        let n = k.ncols;
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            let mut has_diag = false;
            for p in k.colptr[j]..k.colptr[j + 1] {
                let mut i = k.rowind[p];
                if i > j {
                    return Err(LdlError::NotUpperTriangular);
                }
                if i == j {
                    has_diag = true;
                    continue;
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
            if !has_diag {
                return Err(LdlError::MissingDiagonal(j));
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(LdlFactor {
            n,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            d_inv: vec![0.0; n],
            y_vals: vec![0.0; n],
            y_marks: vec![false; n],
            y_idx: vec![0; n],
            elim_buf: vec![0; n],
            l_next: vec![0; n],
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization of `k`, which must have the analyzed pattern.
    pub fn factor(&mut self, k: &CscMatrix) -> Result<(), LdlError> {
        self.factor_impl(k, None).map(|_| ())
    }

    /// Factorization with dynamic regularization: a pivot whose sign disagrees
    /// with `signs[i]` or whose magnitude is at most `eps` becomes
    /// `signs[i] * delta`. Returns the number of replaced pivots.
    pub fn factor_signed(
        &mut self,
        k: &CscMatrix,
        signs: &[f64],
        eps: f64,
        delta: f64,
    ) -> Result<usize, LdlError> {
        self.factor_impl(k, Some((signs, eps, delta)))
    }

    fn factor_impl(
        &mut self,
        k: &CscMatrix,
        dynamic: Option<(&[f64], f64, f64)>,
    ) -> Result<usize, LdlError> {
        let mut replaced = 0;
        let n = self.n;
        self.l_next.iter_mut().for_each(|v| *v = 0);
        self.y_marks.iter_mut().for_each(|v| *v = false);
        self.y_vals.iter_mut().for_each(|v| *v = 0.0);

        for row in 0..n {
            let mut nnz_y = 0;
            self.d[row] = 0.0;
            for p in k.colptr[row]..k.colptr[row + 1] {
                let i = k.rowind[p];
                if i == row {
                    self.d[row] = k.values[p];
                    continue;
                }
                self.y_vals[i] = k.values[p];
                if !self.y_marks[i] {
                    self.y_marks[i] = true;
                    self.elim_buf[0] = i;
                    let mut n_elim = 1;
                    let mut next = self.etree[i];
                    while next != NONE && next < row {
                        if self.y_marks[next] {
                            break;
                        }
                        self.y_marks[next] = true;
                        self.elim_buf[n_elim] = next;
                        n_elim += 1;
                        next = self.etree[next];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        self.y_idx[nnz_y] = self.elim_buf[n_elim];
                        nnz_y += 1;
                    }
                }
            }

            for idx in (0..nnz_y).rev() {
                let c = self.y_idx[idx];
                let start = self.lp[c];
                let end = start + self.l_next[c];
                let yc = self.y_vals[c];
                for p in start..end {
                    self.y_vals[self.li[p]] -= self.lx[p] * yc;
                }
                let l_rc = yc * self.d_inv[c];
                self.d[row] -= yc * l_rc;
                self.li[end] = row;
                self.lx[end] = l_rc;
                self.l_next[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_marks[c] = false;
            }

            if let Some((signs, eps, delta)) = dynamic {
                if self.d[row] * signs[row] <= eps {
                    self.d[row] = signs[row] * delta;
                    replaced += 1;
                }
            }
            if self.d[row] == 0.0 || !self.d[row].is_finite() {
                return Err(LdlError::ZeroPivot(row));
            }
            self.d_inv[row] = 1.0 / self.d[row];
        }
        Ok(replaced)
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        for c in 0..self.n {
            let bc = b[c];
            for p in self.lp[c]..self.lp[c + 1] {
                b[self.li[p]] -= self.lx[p] * bc;
            }
        }
        for (bi, di) in b.iter_mut().zip(&self.d_inv) {
            *bi *= di;
        }
        for c in (0..self.n).rev() {
            let mut acc = b[c];
            for p in self.lp[c]..self.lp[c + 1] {
                acc -= self.lx[p] * b[self.li[p]];
            }
            b[c] = acc;
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upper(n: usize, dense: &[f64]) -> CscMatrix {
        let mut trip = Vec::new();
        for r in 0..n {
            for c in r..n {
                let v = dense[r * n + c];
                if v != 0.0 || r == c {
                    trip.push((r, c, v));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &trip)
    }

    fn dense_mul(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
        (0..n)
            .map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum())
            .collect()
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [[4, 1, 1, 0], [1, 3, 0, 1], [1, 0, -2, 0], [0, 1, 0, -1]]
        let a = [
            4.0, 1.0, 1.0, 0.0, //
            1.0, 3.0, 0.0, 1.0, //
            1.0, 0.0, -2.0, 0.0, //
            0.0, 1.0, 0.0, -1.0,
        ];
        let k = upper(4, &a);
        let mut f = LdlFactor::analyze(&k).unwrap();
        f.factor(&k).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = dense_mul(4, &a, &x_true);
        f.solve(&mut b);
        for i in 0..4 {
            assert!((b[i] - x_true[i]).abs() < 1e-12);
        }
        assert_eq!(f.diagonal().iter().filter(|d| **d < 0.0).count(), 2);
    }

    #[test]
    fn tridiagonal_has_no_fill() {
        let n = 50;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
            }
        }
        let k = CscMatrix::from_triplets(n, n, &trip);
        let mut f = LdlFactor::analyze(&k).unwrap();
        assert_eq!(f.nnz_l(), n - 1);
        f.factor(&k).unwrap();
        let mut b = vec![1.0; n];
        f.solve(&mut b);
        let r = k.sym_upper_mul_vec(&b);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_zero_pivot_and_bad_patterns() {
        let k = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (0, 1, 1.0), (1, 1, 1.0)]);
        let mut f = LdlFactor::analyze(&k).unwrap();
        assert_eq!(f.factor(&k), Err(LdlError::ZeroPivot(0)));

        let lower = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            LdlFactor::analyze(&lower),
            Err(LdlError::NotUpperTriangular)
        ));
        let no_diag = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        assert!(matches!(
            LdlFactor::analyze(&no_diag),
            Err(LdlError::MissingDiagonal(1))
        ));
    }

    #[test]
    fn dynamic_regularization_replaces_bad_pivots() {
        // [[0, 1], [1, -1]] with expected signs (+, -): first pivot 0 is replaced.
        let k = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (0, 1, 1.0), (1, 1, -1.0)]);
        let mut f = LdlFactor::analyze(&k).unwrap();
        assert_eq!(f.factor_signed(&k, &[1.0, -1.0], 1e-13, 1e-7).unwrap(), 1);
        assert_eq!(f.diagonal()[0], 1e-7);
        assert!(f.diagonal()[1] < 0.0);
    }
}
