//! Mehrotra predictor-corrector interior-point method.
//!
//! Each finite side of a row gets a slack `s ≥ 0` and multiplier `z ≥ 0`:
//!
//! ```text
//! a x - lb - s_lo = 0        ub - a x - s_up = 0
//! y = z_up - z_lo            P x + q + Aᵀ y = 0
//! ```
//!
//! Eliminating slacks and side multipliers leaves the quasi-definite system
//!
//! ```text
//! [ P + ρI    Aᵀ  ] [dx]   [ -r_d ]
//! [ A        -Σ   ] [dy] = [  ... ]
//! ```
//!
//! with `Σ = 1 / (z_lo/s_lo + z_up/s_up)` on inequality rows and a small
//! static regularization on equality rows. Rows with two infinite bounds are
//! dropped. The ordering and symbolic factorization are computed once.

use super::csc::CscMatrix;
use super::ldl::LdlFactor;
use super::{QpError, QpSolution, SolveStatus, SolverSettings, SparseQP};

const STATIC_REG: f64 = 1e-8;
const DYNAMIC_EPS: f64 = 1e-13;
const DYNAMIC_DELTA: f64 = 2e-7;
const MAX_REFINE: usize = 10;
const STEP_FRACTION: f64 = 0.99;
/// Iterations over which the primal residual must halve before feasibility is questioned.
const STALL_WINDOW: usize = 25;
/// Phase-one violation, in units of the primal tolerance, that proves infeasibility.
const PHASE_ONE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy)]
enum RowKind {
    Eq(f64),
    Ineq { lo: Option<f64>, up: Option<f64> },
}

struct Kkt {
    n: usize,
    m: usize,
    pinv: Vec<usize>,
    k: CscMatrix,
    base: Vec<f64>,
    diag_pos: Vec<usize>,
    factor: LdlFactor,
    /// Expected pivot signs in permuted order: + for variables, - for rows.
    signs: Vec<f64>,
    work: Vec<f64>,
}

impl Kkt {
    fn new(p: &CscMatrix, a: &CscMatrix) -> Result<Self, QpError> {
        let n = p.ncols;
        let m = a.nrows;
        let dim = n + m;
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(p.nnz() + a.nnz() + dim);
        trip.extend(p.triplets());
        trip.extend((0..dim).map(|i| (i, i, 0.0)));
        trip.extend(a.triplets().map(|(r, c, v)| (c, n + r, v)));

        let pattern = CscMatrix::from_triplets(dim, dim, &trip);
        let (_, pinv) = if dim == 0 {
            (Vec::new(), Vec::new())
        } else {
            let (perm, pinv, _) = amd::order::<usize>(
                dim,
                &pattern.colptr,
                &pattern.rowind,
                &amd::Control::default(),
            )
            .map_err(|_| QpError::Dimension("fill-reducing ordering failed".into()))?;
            (perm, pinv)
        };

        let permuted: Vec<(usize, usize, f64)> = pattern
            .triplets()
            .map(|(r, c, v)| {
                let (pr, pc) = (pinv[r], pinv[c]);
                (pr.min(pc), pr.max(pc), v)
            })
            .collect();
        let k = CscMatrix::from_triplets(dim, dim, &permuted);
        let diag_pos: Vec<usize> = (0..dim).map(|i| k.colptr[pinv[i] + 1] - 1).collect();
        debug_assert!((0..dim).all(|i| k.rowind[diag_pos[i]] == pinv[i]));
        let factor = LdlFactor::analyze(&k).map_err(QpError::Factorization)?;
        let base = k.values.clone();
        let mut signs = vec![0.0; dim];
        for i in 0..dim {
            signs[pinv[i]] = if i < n { 1.0 } else { -1.0 };
        }
        Ok(Kkt {
            signs,
            n,
            m,
            pinv,
            k,
            base,
            diag_pos,
            factor,
            work: vec![0.0; dim],
        })
    }

    /// Factors with `P + ρI` in the leading block and `-sigma` on the row diagonal.
    fn factor(&mut self, sigma: &[f64]) -> Result<(), QpError> {
        self.k.values.copy_from_slice(&self.base);
        for i in 0..self.n {
            self.k.values[self.diag_pos[i]] += STATIC_REG;
        }
        for r in 0..self.m {
            // Equality rows carry sigma = 0 and are regularized; inequality rows are exact.
            let s = if sigma[r] > 0.0 { sigma[r] } else { STATIC_REG };
            self.k.values[self.diag_pos[self.n + r]] = -s;
        }
        self.factor
            .factor_signed(&self.k, &self.signs, DYNAMIC_EPS, DYNAMIC_DELTA)
            .map(|_| ())
            .map_err(QpError::Factorization)
    }

    fn solve_in_place(&mut self, b: &mut [f64]) {
        for (i, v) in b.iter().enumerate() {
            self.work[self.pinv[i]] = *v;
        }
        self.factor.solve(&mut self.work);
        for (i, v) in b.iter_mut().enumerate() {
            *v = self.work[self.pinv[i]];
        }
    }
}

struct Problem<'a> {
    p: &'a CscMatrix,
    q: &'a [f64],
    a: CscMatrix,
    rows: Vec<usize>,
    kinds: Vec<RowKind>,
}

impl Problem<'_> {
    /// `K x` for the unregularized system with `-sigma` on the row block.
    fn kkt_mul(&self, sigma: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.q.len();
        let (xv, xr) = x.split_at(n);
        let mut top = self.p.sym_upper_mul_vec(xv);
        for (t, v) in top.iter_mut().zip(self.a.tmul_vec(xr)) {
            *t += v;
        }
        let ax = self.a.mul_vec(xv);
        top.extend(ax.iter().zip(xr).zip(sigma).map(|((a, y), s)| a - s * y));
        top
    }
}

fn solve_refined(kkt: &mut Kkt, prob: &Problem, sigma: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut x = rhs.to_vec();
    kkt.solve_in_place(&mut x);
    let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..MAX_REFINE {
        let kx = prob.kkt_mul(sigma, &x);
        let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(rnorm > 1e-14 * scale) {
            break;
        }
        kkt.solve_in_place(&mut r);
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += di;
        }
    }
    x
}

#[derive(Default, Clone)]
struct Sides {
    s_lo: Vec<f64>,
    z_lo: Vec<f64>,
    s_up: Vec<f64>,
    z_up: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    dy_eq: Vec<f64>,
    d: Sides,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(super) fn solve(qp: &SparseQP, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    run(qp, settings, true)
}

/// Largest bound violation the phase-one problem can reach, or `None` if it did not converge.
///
/// Solves `min Σ (v⁺ + v⁻)` subject to `lb ≤ Ax + v⁺ - v⁻ ≤ ub`, `v ≥ 0`, which is always feasible.
fn phase_one_violation(qp: &SparseQP, settings: &SolverSettings) -> Result<Option<f64>, QpError> {
    let n = qp.num_vars();
    let m = qp.num_constraints();
    let total = n + 2 * m;
    let p = CscMatrix::from_triplets(
        total,
        total,
        &(0..total).map(|j| (j, j, 0.0)).collect::<Vec<_>>(),
    );
    let mut q = vec![0.0; n];
    q.resize(total, 1.0);
    let mut trip: Vec<_> = qp.a.triplets().collect();
    for r in 0..m {
        trip.push((r, n + r, 1.0));
        trip.push((r, n + m + r, -1.0));
        trip.push((m + r, n + r, 1.0));
        trip.push((2 * m + r, n + m + r, 1.0));
    }
    let a = CscMatrix::from_triplets(3 * m, total, &trip);
    let mut lb = qp.lb.clone();
    let mut ub = qp.ub.clone();
    lb.resize(3 * m, 0.0);
    ub.resize(3 * m, f64::INFINITY);
    let sol = run(&SparseQP::new(p, q, a, lb, ub)?, settings, false)?;
    if sol.status != SolveStatus::Optimal {
        return Ok(None);
    }
    Ok(Some((0..m).fold(0.0f64, |acc, r| {
        acc.max(sol.x[n + r] + sol.x[n + m + r])
    })))
}

fn is_infeasible(qp: &SparseQP, settings: &SolverSettings) -> Result<bool, QpError> {
    Ok(phase_one_violation(qp, settings)?
        .is_some_and(|v| v > PHASE_ONE_FACTOR * settings.eps_primal))
}

fn run(
    qp: &SparseQP,
    settings: &SolverSettings,
    mut check_feasibility: bool,
) -> Result<QpSolution, QpError> {
    let n = qp.num_vars();
    let m_all = qp.num_constraints();

    let mut rows = Vec::new();
    let mut kinds = Vec::new();
    for r in 0..m_all {
        let (l, u) = (qp.lb[r], qp.ub[r]);
        if l == u {
            rows.push(r);
            kinds.push(RowKind::Eq(l));
        } else if l.is_finite() || u.is_finite() {
            rows.push(r);
            kinds.push(RowKind::Ineq {
                lo: l.is_finite().then_some(l),
                up: u.is_finite().then_some(u),
            });
        }
    }
    let m = rows.len();
    let mut new_index = vec![usize::MAX; m_all];
    for (k, &r) in rows.iter().enumerate() {
        new_index[r] = k;
    }
    let trip: Vec<_> =
        qp.a.triplets()
            .filter(|(r, _, _)| new_index[*r] != usize::MAX)
            .map(|(r, c, v)| (new_index[r], c, v))
            .collect();
    let prob = Problem {
        p: &qp.p,
        q: &qp.q,
        a: CscMatrix::from_triplets(m, n, &trip),
        rows,
        kinds,
    };

    let mut kkt = Kkt::new(&qp.p, &prob.a)?;
    let is_eq: Vec<bool> = prob
        .kinds
        .iter()
        .map(|k| matches!(k, RowKind::Eq(_)))
        .collect();
    let lo: Vec<Option<f64>> = prob
        .kinds
        .iter()
        .map(|k| match *k {
            RowKind::Ineq { lo, .. } => lo,
            RowKind::Eq(_) => None,
        })
        .collect();
    let up: Vec<Option<f64>> = prob
        .kinds
        .iter()
        .map(|k| match *k {
            RowKind::Ineq { up, .. } => up,
            RowKind::Eq(_) => None,
        })
        .collect();
    let n_sides =
        lo.iter().filter(|v| v.is_some()).count() + up.iter().filter(|v| v.is_some()).count();

    // Starting point: minimize ½xᵀPx + qᵀx + ½‖Ax - t‖² with t inside the bounds.
    let sigma_init = vec![1.0; m];
    kkt.factor(&sigma_init)?;
    let mut rhs: Vec<f64> = qp.q.iter().map(|v| -v).collect();
    rhs.extend(prob.kinds.iter().map(|k| match *k {
        RowKind::Eq(b) => b,
        RowKind::Ineq {
            lo: Some(l),
            up: Some(u),
        } => 0.5 * (l + u),
        RowKind::Ineq {
            lo: Some(l),
            up: None,
        } => l,
        RowKind::Ineq {
            lo: None,
            up: Some(u),
        } => u,
        RowKind::Ineq { lo: None, up: None } => 0.0,
    }));
    let sol0 = solve_refined(&mut kkt, &prob, &sigma_init, &rhs);
    let mut x = sol0[..n].to_vec();
    let mut y_eq = vec![0.0; m];

    let ax = prob.a.mul_vec(&x);
    let mut st = Sides {
        s_lo: vec![0.0; m],
        z_lo: vec![0.0; m],
        s_up: vec![0.0; m],
        z_up: vec![0.0; m],
    };
    for r in 0..m {
        if let Some(l) = lo[r] {
            st.s_lo[r] = (ax[r] - l).max(1.0);
            st.z_lo[r] = 1.0;
        }
        if let Some(u) = up[r] {
            st.s_up[r] = (u - ax[r]).max(1.0);
            st.z_up[r] = 1.0;
        }
    }

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut pres: f64;
    let mut dres: f64;
    let mut sigma = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut pres_history = Vec::new();

    loop {
        let ax = prob.a.mul_vec(&x);
        let y: Vec<f64> = (0..m)
            .map(|r| {
                if is_eq[r] {
                    y_eq[r]
                } else {
                    st.z_up[r] - st.z_lo[r]
                }
            })
            .collect();
        let mut r_d = qp.p.sym_upper_mul_vec(&x);
        for ((rd, aty), qi) in r_d.iter_mut().zip(prob.a.tmul_vec(&y)).zip(qp.q.iter()) {
            *rd += aty + qi;
        }
        let mut r_lo = vec![0.0; m];
        let mut r_up = vec![0.0; m];
        let mut r_eq = vec![0.0; m];
        pres = 0.0;
        let mut comp_max: f64 = 0.0;
        let mut comp_sum = 0.0;
        for r in 0..m {
            match prob.kinds[r] {
                RowKind::Eq(b) => {
                    r_eq[r] = ax[r] - b;
                    pres = pres.max(r_eq[r].abs());
                }
                RowKind::Ineq { lo: l, up: u } => {
                    if let Some(l) = l {
                        r_lo[r] = ax[r] - l - st.s_lo[r];
                        pres = pres.max(l - ax[r]);
                        let c = st.s_lo[r] * st.z_lo[r];
                        comp_max = comp_max.max(c);
                        comp_sum += c;
                    }
                    if let Some(u) = u {
                        r_up[r] = u - ax[r] - st.s_up[r];
                        pres = pres.max(ax[r] - u);
                        let c = st.s_up[r] * st.z_up[r];
                        comp_max = comp_max.max(c);
                        comp_sum += c;
                    }
                }
            }
        }
        dres = inf_norm(&r_d);
        let finite = x
            .iter()
            .chain(&st.z_lo)
            .chain(&st.z_up)
            .chain(&y_eq)
            .all(|v| v.is_finite());
        if !finite {
            status = SolveStatus::NumericalError;
            break;
        }
        pres_history.push(pres);
        if pres <= settings.eps_primal
            && dres <= settings.eps_dual
            && comp_max <= settings.eps_complementarity
        {
            status = SolveStatus::Optimal;
            break;
        }
        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        if certifies_infeasibility(&prob, &y, settings.eps_infeasible)
            || certifies_infeasibility(&prob, &dy, settings.eps_infeasible)
        {
            status = SolveStatus::Infeasible;
            break;
        }
        if check_feasibility
            && iterations >= STALL_WINDOW
            && pres > settings.eps_primal
            && pres > 0.5 * pres_history[iterations - STALL_WINDOW]
        {
            check_feasibility = false;
            if is_infeasible(qp, settings)? {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        if iterations >= settings.max_iterations {
            break;
        }
        y_prev = y;
        iterations += 1;

        let mu = if n_sides > 0 {
            comp_sum / n_sides as f64
        } else {
            0.0
        };

        let mut dvec = vec![0.0; m];
        for r in 0..m {
            if is_eq[r] {
                sigma[r] = 0.0;
                continue;
            }
            let mut d = 0.0;
            if lo[r].is_some() {
                d += st.z_lo[r] / st.s_lo[r];
            }
            if up[r].is_some() {
                d += st.z_up[r] / st.s_up[r];
            }
            dvec[r] = d;
            sigma[r] = 1.0 / d;
        }
        kkt.factor(&sigma)?;

        let direction = |kkt: &mut Kkt, rc_lo: &[f64], rc_up: &[f64]| -> Direction {
            let mut rhs: Vec<f64> = r_d.iter().map(|v| -v).collect();
            for r in 0..m {
                if is_eq[r] {
                    rhs.push(-r_eq[r]);
                    continue;
                }
                let mut g = 0.0;
                if lo[r].is_some() {
                    g += (rc_lo[r] + st.z_lo[r] * r_lo[r]) / st.s_lo[r];
                }
                if up[r].is_some() {
                    g += (-rc_up[r] - st.z_up[r] * r_up[r]) / st.s_up[r];
                }
                rhs.push(-g / dvec[r]);
            }
            let sol = solve_refined(kkt, &prob, &sigma, &rhs);
            let dx = sol[..n].to_vec();
            let adx = prob.a.mul_vec(&dx);
            let mut d = Sides {
                s_lo: vec![0.0; m],
                z_lo: vec![0.0; m],
                s_up: vec![0.0; m],
                z_up: vec![0.0; m],
            };
            let mut dy_eq = vec![0.0; m];
            for r in 0..m {
                if is_eq[r] {
                    dy_eq[r] = sol[n + r];
                    continue;
                }
                // The side with the larger z/s takes its multiplier step from the
                // KKT solution, so `dz_up - dz_lo = dy` holds exactly and the dual
                // residual contracts linearly; dividing by a tiny slack would amplify
                // solve error instead.
                let w_r = sol[n + r];
                let ratio = |z: f64, s: f64, on: bool| if on { z / s } else { -1.0 };
                let upper_dominant = ratio(st.z_up[r], st.s_up[r], up[r].is_some())
                    >= ratio(st.z_lo[r], st.s_lo[r], lo[r].is_some());
                if upper_dominant {
                    if lo[r].is_some() {
                        d.s_lo[r] = adx[r] + r_lo[r];
                        d.z_lo[r] = (-rc_lo[r] - st.z_lo[r] * d.s_lo[r]) / st.s_lo[r];
                    }
                    d.z_up[r] = w_r + d.z_lo[r];
                    d.s_up[r] = -(rc_up[r] + st.s_up[r] * d.z_up[r]) / st.z_up[r];
                } else {
                    if up[r].is_some() {
                        d.s_up[r] = -adx[r] + r_up[r];
                        d.z_up[r] = (-rc_up[r] - st.z_up[r] * d.s_up[r]) / st.s_up[r];
                    }
                    d.z_lo[r] = d.z_up[r] - w_r;
                    d.s_lo[r] = -(rc_lo[r] + st.s_lo[r] * d.z_lo[r]) / st.z_lo[r];
                }
            }
            Direction { dx, dy_eq, d }
        };

        let max_step = |d: &Sides| -> f64 {
            let mut alpha = f64::INFINITY;
            for r in 0..m {
                for (v, dv, on) in [
                    (st.s_lo[r], d.s_lo[r], lo[r].is_some()),
                    (st.z_lo[r], d.z_lo[r], lo[r].is_some()),
                    (st.s_up[r], d.s_up[r], up[r].is_some()),
                    (st.z_up[r], d.z_up[r], up[r].is_some()),
                ] {
                    if on && dv < 0.0 {
                        alpha = alpha.min(-v / dv);
                    }
                }
            }
            alpha
        };

        // predictor
        let rc_lo: Vec<f64> = (0..m).map(|r| st.s_lo[r] * st.z_lo[r]).collect();
        let rc_up: Vec<f64> = (0..m).map(|r| st.s_up[r] * st.z_up[r]).collect();
        let aff = direction(&mut kkt, &rc_lo, &rc_up);
        let step = if n_sides > 0 {
            let alpha_aff = max_step(&aff.d).min(1.0);
            let mut mu_aff = 0.0;
            for r in 0..m {
                if lo[r].is_some() {
                    mu_aff += (st.s_lo[r] + alpha_aff * aff.d.s_lo[r])
                        * (st.z_lo[r] + alpha_aff * aff.d.z_lo[r]);
                }
                if up[r].is_some() {
                    mu_aff += (st.s_up[r] + alpha_aff * aff.d.s_up[r])
                        * (st.z_up[r] + alpha_aff * aff.d.z_up[r]);
                }
            }
            mu_aff /= n_sides as f64;
            let centering = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let rc_lo: Vec<f64> = (0..m)
                .map(|r| st.s_lo[r] * st.z_lo[r] + aff.d.s_lo[r] * aff.d.z_lo[r] - centering * mu)
                .collect();
            let rc_up: Vec<f64> = (0..m)
                .map(|r| st.s_up[r] * st.z_up[r] + aff.d.s_up[r] * aff.d.z_up[r] - centering * mu)
                .collect();
            direction(&mut kkt, &rc_lo, &rc_up)
        } else {
            aff
        };

        let alpha = (STEP_FRACTION * max_step(&step.d)).min(1.0);
        for (xi, di) in x.iter_mut().zip(&step.dx) {
            *xi += alpha * di;
        }
        for r in 0..m {
            y_eq[r] += alpha * step.dy_eq[r];
            st.s_lo[r] += alpha * step.d.s_lo[r];
            st.z_lo[r] += alpha * step.d.z_lo[r];
            st.s_up[r] += alpha * step.d.s_up[r];
            st.z_up[r] += alpha * step.d.z_up[r];
        }
    }

    if check_feasibility
        && matches!(
            status,
            SolveStatus::MaxIterations | SolveStatus::NumericalError
        )
        && is_infeasible(qp, settings)?
    {
        status = SolveStatus::Infeasible;
    }

    let mut y_full = vec![0.0; m_all];
    for (k, &r) in prob.rows.iter().enumerate() {
        y_full[r] = if is_eq[k] {
            y_eq[k]
        } else {
            st.z_up[k] - st.z_lo[k]
        };
    }
    Ok(QpSolution {
        x,
        y: y_full,
        status,
        iterations,
        primal_res: pres,
        dual_res: dres,
    })
}

/// Farkas test: `Aᵀŷ ≈ 0` while the support function of the bounds at `ŷ` is negative.
fn certifies_infeasibility(prob: &Problem, y: &[f64], eps: f64) -> bool {
    let scale = inf_norm(y);
    if !(scale > 0.0) || !scale.is_finite() {
        return false;
    }
    let y_hat: Vec<f64> = y.iter().map(|v| v / scale).collect();
    if inf_norm(&prob.a.tmul_vec(&y_hat)) > eps {
        return false;
    }
    let mut support = 0.0;
    for (k, &yk) in y_hat.iter().enumerate() {
        let (l, u) = match prob.kinds[k] {
            RowKind::Eq(b) => (Some(b), Some(b)),
            RowKind::Ineq { lo, up } => (lo, up),
        };
        if yk > 0.0 {
            match u {
                Some(u) => support += u * yk,
                None => return false,
            }
        } else if yk < 0.0 {
            match l {
                Some(l) => support += l * yk,
                None => return false,
            }
        }
    }
    support < -eps
}
