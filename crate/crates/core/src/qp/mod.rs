//! Sparse convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  lb ≤ A x ≤ ub
//! ```
//!
//! with `P` symmetric positive semidefinite (stored as its upper triangle),
//! infinite bounds allowed, and equality rows encoded as `lb = ub`.
//! [`solve`] runs a primal-dual interior-point method whose Newton systems are
//! factored with a sparse LDLᵀ after a fill-reducing ordering.

mod csc;
mod ipm;
mod ldl;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csc::CscMatrix;
pub use ldl::{LdlError, LdlFactor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("row {row}: lower bound {lb} exceeds upper bound {ub}")]
    InvalidBounds { row: usize, lb: f64, ub: f64 },
    #[error("cost matrix must be given as its upper triangle")]
    NotUpperTriangular,
    #[error("non-finite problem data: {0}")]
    NonFinite(&'static str),
    #[error("KKT factorization failed: {0:?}")]
    Factorization(LdlError),
    #[error("malformed triplet dump at line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseQP {
    /// Upper triangle of the symmetric cost matrix.
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl SparseQP {
    pub fn new(
        p: CscMatrix,
        q: Vec<f64>,
        a: CscMatrix,
        lb: Vec<f64>,
        ub: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        if p.nrows != n || p.ncols != n {
            return Err(QpError::Dimension(format!(
                "P is {}x{}, q has {}",
                p.nrows, p.ncols, n
            )));
        }
        if a.ncols != n {
            return Err(QpError::Dimension(format!(
                "A has {} columns, q has {}",
                a.ncols, n
            )));
        }
        let m = a.nrows;
        if lb.len() != m || ub.len() != m {
            return Err(QpError::Dimension(format!(
                "A has {} rows, bounds have {} and {}",
                m,
                lb.len(),
                ub.len()
            )));
        }
        if !p.is_upper_triangular() {
            return Err(QpError::NotUpperTriangular);
        }
        if p.values
            .iter()
            .chain(&a.values)
            .chain(&q)
            .any(|v| !v.is_finite())
        {
            return Err(QpError::NonFinite("P, A and q must be finite"));
        }
        for row in 0..m {
            let (l, u) = (lb[row], ub[row]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QpError::InvalidBounds { row, lb: l, ub: u });
            }
        }
        Ok(SparseQP { p, q, a, lb, ub })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.sym_upper_mul_vec(x);
        x.iter()
            .zip(&px)
            .zip(&self.q)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }

    /// Sparse triplet dump: a header line, then one `row col value` line per nonzero.
    ///
    /// ```text
    /// qp <num_vars> <num_constraints>
    /// P <nnz>        upper triangle
    /// q              one value per line
    /// A <nnz>
    /// bounds         one `lb ub` pair per line (inf / -inf allowed)
    /// ```
    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qp {} {}", self.num_vars(), self.num_constraints());
        let _ = writeln!(out, "P {}", self.p.nnz());
        for (r, c, v) in self.p.triplets() {
            let _ = writeln!(out, "{r} {c} {v:e}");
        }
        let _ = writeln!(out, "q");
        for v in &self.q {
            let _ = writeln!(out, "{v:e}");
        }
        let _ = writeln!(out, "A {}", self.a.nnz());
        for (r, c, v) in self.a.triplets() {
            let _ = writeln!(out, "{r} {c} {v:e}");
        }
        let _ = writeln!(out, "bounds");
        for (l, u) in self.lb.iter().zip(&self.ub) {
            let _ = writeln!(out, "{l:e} {u:e}");
        }
        out
    }

    pub fn from_triplet_text(text: &str) -> Result<Self, QpError> {
        let mut reader = DumpReader {
            lines: text.lines().enumerate(),
            line: 0,
        };
        let header = reader.next_line("header")?;
        let mut it = header.split_whitespace();
        if it.next() != Some("qp") {
            return Err(reader.fail("expected `qp n m`"));
        }
        let n = reader.index(it.next())?;
        let m = reader.index(it.next())?;

        let p = reader.matrix("P", n, n)?;
        reader.tag("q")?;
        let mut q = Vec::with_capacity(n);
        for _ in 0..n {
            let l = reader.next_line("q value")?;
            q.push(reader.number(Some(l))?);
        }
        let a = reader.matrix("A", m, n)?;
        reader.tag("bounds")?;
        let mut lb = Vec::with_capacity(m);
        let mut ub = Vec::with_capacity(m);
        for _ in 0..m {
            let l = reader.next_line("bound pair")?;
            let mut it = l.split_whitespace();
            lb.push(reader.number(it.next())?);
            ub.push(reader.number(it.next())?);
        }
        SparseQP::new(p, q, a, lb, ub)
    }
}

struct DumpReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> DumpReader<'a> {
    fn fail(&self, message: &str) -> QpError {
        QpError::Dump {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str, QpError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => Err(self.fail(&format!("unexpected end of input, expected {what}"))),
        }
    }

    fn tag(&mut self, tag: &str) -> Result<(), QpError> {
        if self.next_line(tag)? != tag {
            return Err(self.fail(&format!("expected `{tag}`")));
        }
        Ok(())
    }

    fn number(&self, tok: Option<&str>) -> Result<f64, QpError> {
        tok.ok_or_else(|| self.fail("missing field"))?
            .parse::<f64>()
            .map_err(|e| self.fail(&e.to_string()))
    }

    fn index(&self, tok: Option<&str>) -> Result<usize, QpError> {
        tok.ok_or_else(|| self.fail("missing field"))?
            .parse::<usize>()
            .map_err(|e| self.fail(&e.to_string()))
    }

    fn matrix(&mut self, tag: &str, rows: usize, cols: usize) -> Result<CscMatrix, QpError> {
        let head = self.next_line(tag)?;
        let mut it = head.split_whitespace();
        if it.next() != Some(tag) {
            return Err(self.fail(&format!("expected `{tag} nnz`")));
        }
        let nnz = self.index(it.next())?;
        let mut trip = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let l = self.next_line("triplet")?;
            let mut it = l.split_whitespace();
            let r = self.index(it.next())?;
            let c = self.index(it.next())?;
            let v = self.number(it.next())?;
            if r >= rows || c >= cols {
                return Err(self.fail("index out of range"));
            }
            trip.push((r, c, v));
        }
        Ok(CscMatrix::from_triplets(rows, cols, &trip))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    /// Bound on every complementarity product `s_i z_i` at termination.
    pub eps_complementarity: f64,
    /// Tolerance of the Farkas certificate test for primal infeasibility.
    pub eps_infeasible: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            eps_complementarity: 1e-9,
            eps_infeasible: 1e-7,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    /// Iterates stopped being finite.
    NumericalError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Row multipliers: positive when the upper bound is active, negative at the lower.
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

/// Infinity-norm KKT residuals of `(x, y)` for `qp`.
///
/// * primal: `‖clamp(Ax, lb, ub) - Ax‖∞`
/// * dual: `‖Px + q + Aᵀy‖∞`
/// * complementarity: largest product of a multiplier with the distance to
///   the bound it belongs to; a multiplier pointing at an infinite bound
///   counts with its own magnitude.
pub fn kkt_residuals(qp: &SparseQP, x: &[f64], y: &[f64]) -> KktResiduals {
    let ax = qp.a.mul_vec(x);
    let primal = ax
        .iter()
        .zip(qp.lb.iter().zip(&qp.ub))
        .map(|(&v, (&l, &u))| (v.clamp(l, u) - v).abs())
        .fold(0.0, f64::max);

    let px = qp.p.sym_upper_mul_vec(x);
    let aty = qp.a.tmul_vec(y);
    let dual = px
        .iter()
        .zip(&aty)
        .zip(&qp.q)
        .map(|((a, b), c)| (a + b + c).abs())
        .fold(0.0, f64::max);

    let mut complementarity: f64 = 0.0;
    for r in 0..qp.num_constraints() {
        let (l, u, yr) = (qp.lb[r], qp.ub[r], y[r]);
        let v = if yr > 0.0 {
            if u.is_finite() {
                yr * (u - ax[r]).abs()
            } else {
                yr
            }
        } else if yr < 0.0 {
            if l.is_finite() {
                -yr * (ax[r] - l).abs()
            } else {
                -yr
            }
        } else {
            0.0
        };
        complementarity = complementarity.max(v);
    }
    KktResiduals {
        primal,
        dual,
        complementarity,
    }
}

impl QpSolution {
    pub fn residuals(&self, qp: &SparseQP) -> KktResiduals {
        kkt_residuals(qp, &self.x, &self.y)
    }
}

/// Solves `qp`. A non-optimal outcome is reported through [`QpSolution::status`];
/// `Err` is reserved for numerical breakdown of the linear algebra.
pub fn solve(qp: &SparseQP, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    ipm::solve(qp, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(p: f64, q: f64, a: Option<(f64, f64, f64)>) -> SparseQP {
        let pm = CscMatrix::from_triplets(1, 1, &[(0, 0, p)]);
        match a {
            Some((coef, l, u)) => SparseQP::new(
                pm,
                vec![q],
                CscMatrix::from_triplets(1, 1, &[(0, 0, coef)]),
                vec![l],
                vec![u],
            )
            .unwrap(),
            None => SparseQP::new(pm, vec![q], CscMatrix::zeros(0, 1), vec![], vec![]).unwrap(),
        }
    }

    #[test]
    fn unconstrained_scalar() {
        let qp = scalar(1.0, 0.0, None);
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.x[0].abs() < 1e-9);
    }

    #[test]
    fn projection_onto_upper_bound() {
        // min ½(x-1)² s.t. x ≤ 0.5
        let qp = scalar(1.0, -1.0, Some((1.0, f64::NEG_INFINITY, 0.5)));
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-7);
        assert!((sol.y[0] - 0.5).abs() < 1e-6, "dual {}", sol.y[0]);
        let r = sol.residuals(&qp);
        assert!(r.primal <= 1e-6 && r.dual <= 1e-6 && r.complementarity <= 1e-6);
    }

    #[test]
    fn residuals_examples() {
        let qp = scalar(1.0, 0.0, None);
        let r = kkt_residuals(&qp, &[0.1], &[]);
        assert!(r.dual >= 0.09);

        let qp = scalar(1.0, 0.0, Some((1.0, -1.0, 0.25)));
        let r = kkt_residuals(&qp, &[0.75], &[0.0]);
        assert!((r.primal - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equality_row() {
        // min ½(x² + y²) s.t. x + y = 1
        let p = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let a = CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        let qp = SparseQP::new(p, vec![0.0, 0.0], a, vec![1.0], vec![1.0]).unwrap();
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-8 && (sol.x[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn linear_program_via_epigraph() {
        // min u s.t. u ≥ x + 1, u ≥ -(x + 1)  →  x = -1 minimizes |x + 1|
        let p = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (1, 1, 0.0)]);
        let a =
            CscMatrix::from_triplets(2, 2, &[(0, 0, -1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let inf = f64::INFINITY;
        let qp = SparseQP::new(p, vec![0.0, 1.0], a, vec![1.0, -1.0], vec![inf, inf]).unwrap();
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] + 1.0).abs() < 1e-6, "x = {}", sol.x[0]);
        assert!(sol.x[1].abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // x ≥ 1 and x ≤ -1
        let p = CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        let a = CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]);
        let inf = f64::INFINITY;
        let qp = SparseQP::new(p, vec![0.0], a, vec![1.0, -inf], vec![inf, -1.0]).unwrap();
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_infeasibility_against_redundant_equalities() {
        // x0 = x1 = 0, x0 + x1 = 0 (redundant), x0 ≥ 0.1
        let p = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let a = CscMatrix::from_triplets(
            4,
            2,
            &[
                (0, 0, 1.0),
                (1, 1, 1.0),
                (2, 0, 1.0),
                (2, 1, 1.0),
                (3, 0, 1.0),
            ],
        );
        let inf = f64::INFINITY;
        let qp = SparseQP::new(
            p,
            vec![0.0, 0.0],
            a,
            vec![0.0, 0.0, 0.0, 0.1],
            vec![0.0, 0.0, 0.0, inf],
        )
        .unwrap();
        let sol = solve(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_malformed_problems() {
        let p = CscMatrix::from_triplets(2, 2, &[(1, 0, 1.0)]);
        let a = CscMatrix::zeros(0, 2);
        assert_eq!(
            SparseQP::new(p, vec![0.0; 2], a.clone(), vec![], vec![]),
            Err(QpError::NotUpperTriangular)
        );
        let p = CscMatrix::zeros(2, 2);
        let a1 = CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]);
        assert!(matches!(
            SparseQP::new(p.clone(), vec![0.0; 2], a1, vec![1.0], vec![0.0]),
            Err(QpError::InvalidBounds { row: 0, .. })
        ));
        assert!(matches!(
            SparseQP::new(p, vec![0.0; 3], a, vec![], vec![]),
            Err(QpError::Dimension(_))
        ));
    }

    #[test]
    fn triplet_dump_roundtrip() {
        let p = CscMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 0.5), (1, 1, 1.0)]);
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -3.25)]);
        let qp = SparseQP::new(
            p,
            vec![0.1, -0.2],
            a,
            vec![f64::NEG_INFINITY, 0.0],
            vec![1.0, f64::INFINITY],
        )
        .unwrap();
        let text = qp.to_triplet_text();
        assert!(text.lines().any(|l| l == "0 1 5e-1"));
        assert_eq!(SparseQP::from_triplet_text(&text).unwrap(), qp);
        assert!(SparseQP::from_triplet_text("qp 2 2\nP 1\n0 0").is_err());
    }
}
