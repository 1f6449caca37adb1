//! Primal active-set method for convex quadratic programs
//!
//! ```text
//!     minimize     1/2 x' H x + c' x + c0
//!     subject to   E x  = e
//!                  G x <= g
//! ```
//!
//! `H` only needs to be positive semidefinite. Directions of zero curvature
//! are followed as rays, which is how unboundedness is certified. The
//! starting point comes from a phase-I linear program, so the method needs
//! no user-supplied feasible point. Constraint selection is deterministic:
//! the most negative multiplier leaves the working set and the first
//! blocking constraint (lowest index on ties) enters it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg;
use crate::lp::{LinearProgram, LpOutcome, Relation};

#[derive(Debug, Clone)]
pub struct QuadProgram {
    pub hess: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every iteration; non-increasing.
    pub trace: Vec<f64>,
    pub working_set: Vec<usize>,
}

/// Objective values below this are reported as unbounded.
pub const UNBOUNDED_LEVEL: f64 = -1e12;

const ACTIVE_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-12;
const MULT_TOL: f64 = 1e-10;

impl QuadProgram {
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.hess * x)[(0, 0)] + self.lin.dot(x) + self.constant
    }

    fn phase_one(&self) -> Option<DVector<f64>> {
        let n = self.dim();
        let mut lp = LinearProgram::minimize();
        let vars = lp.add_free_vars(n);
        let add = |lp: &mut LinearProgram, m: &DMatrix<f64>, rhs: &DVector<f64>, rel| {
            for i in 0..m.nrows() {
                let row: Vec<(usize, f64)> = (0..n).map(|j| (vars[j], m[(i, j)])).collect();
                lp.add_row(&row, rel, rhs[i]);
            }
        };
        add(&mut lp, &self.eq_mat, &self.eq_rhs, Relation::Eq);
        add(&mut lp, &self.ineq_mat, &self.ineq_rhs, Relation::Le);
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => Some(DVector::from_vec(x)),
            LpOutcome::Unbounded => None,
            LpOutcome::Infeasible => None,
        }
    }

    fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
        m.row(i).iter().cloned().collect()
    }

    /// Least-norm correction onto `{A x = b}` for the current working rows.
    fn polish(&self, x: &mut DVector<f64>, eq_rows: &[usize], working: &[usize]) {
        let rows: Vec<Vec<f64>> = eq_rows
            .iter()
            .map(|&i| Self::row(&self.eq_mat, i))
            .chain(working.iter().map(|&i| Self::row(&self.ineq_mat, i)))
            .collect();
        if rows.is_empty() {
            return;
        }
        let rhs: Vec<f64> = eq_rows
            .iter()
            .map(|&i| self.eq_rhs[i])
            .chain(working.iter().map(|&i| self.ineq_rhs[i]))
            .collect();
        let a = linalg::rows_to_matrix(&rows, self.dim());
        let resid = DVector::from_vec(rhs) - &a * &*x;
        *x += linalg::lstsq(&a, &resid);
    }

    pub fn solve(&self, max_iter: usize) -> QpResult {
        let n = self.dim();
        let Some(mut x) = self.phase_one() else {
            return QpResult {
                status: QpStatus::Infeasible,
                x: DVector::zeros(n),
                objective: f64::INFINITY,
                iterations: 0,
                trace: vec![],
                working_set: vec![],
            };
        };

        let eq_rows_all: Vec<Vec<f64>> = (0..self.eq_mat.nrows())
            .map(|i| Self::row(&self.eq_mat, i))
            .collect();
        let eq_rows = linalg::independent_rows(&eq_rows_all, n);

        // Initial working set: active inequalities independent of the rest.
        let mut working: Vec<usize> = Vec::new();
        {
            let mut rows: Vec<Vec<f64>> = eq_rows.iter().map(|&i| eq_rows_all[i].clone()).collect();
            for i in 0..self.ineq_mat.nrows() {
                let gi = Self::row(&self.ineq_mat, i);
                let slack = self.ineq_rhs[i] - linalg::dot(&gi, x.as_slice());
                if slack.abs() <= ACTIVE_TOL * (1.0 + self.ineq_rhs[i].abs()) {
                    rows.push(gi);
                    if linalg::independent_rows(&rows, n).len() == rows.len() {
                        working.push(i);
                    } else {
                        rows.pop();
                    }
                }
            }
        }
        self.polish(&mut x, &eq_rows, &working);

        let mut trace = vec![self.objective(&x)];
        let mut status = QpStatus::MaxIter;
        let mut iterations = 0;

        while iterations < max_iter {
            iterations += 1;
            let rows: Vec<Vec<f64>> = eq_rows
                .iter()
                .map(|&i| eq_rows_all[i].clone())
                .chain(working.iter().map(|&i| Self::row(&self.ineq_mat, i)))
                .collect();
            let g = &self.hess * &x + &self.lin;
            let null = if rows.is_empty() {
                DMatrix::identity(n, n)
            } else {
                let a = linalg::rows_to_matrix(&rows, n);
                let basis = linalg::kernel_basis(&a);
                DMatrix::from_fn(n, basis.len(), |i, j| basis[j][i])
            };

            let (p, is_ray) = if null.ncols() == 0 {
                (DVector::zeros(n), false)
            } else {
                let hr = null.transpose() * &self.hess * &null;
                let gr = null.transpose() * &g;
                let eig = SymmetricEigen::new(hr);
                let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let tol = 1e-10 * lmax.max(1.0);
                let mut s = DVector::zeros(null.ncols());
                let mut flat = DVector::zeros(null.ncols());
                for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                    let v = eig.eigenvectors.column(k);
                    let coef = v.dot(&gr);
                    if lam > tol {
                        s -= v * (coef / lam);
                    } else {
                        flat += v * coef;
                    }
                }
                if flat.norm() > 1e-10 * (1.0 + g.norm()) {
                    (-(&null * flat), true)
                } else {
                    (&null * s, false)
                }
            };

            if !is_ray && p.norm() <= STEP_TOL * (1.0 + x.norm()) {
                if working.is_empty() {
                    status = QpStatus::Optimal;
                    break;
                }
                let a = linalg::rows_to_matrix(&rows, n);
                let mult = linalg::lstsq(&a.transpose(), &(-&g));
                let offset = eq_rows.len();
                let scale = MULT_TOL * (1.0 + g.amax());
                let mut leave: Option<(usize, f64)> = None;
                for (k, _) in working.iter().enumerate() {
                    let lam = mult[offset + k];
                    if lam < -scale && leave.is_none_or(|(_, l)| lam < l) {
                        leave = Some((k, lam));
                    }
                }
                match leave {
                    None => {
                        status = QpStatus::Optimal;
                        break;
                    }
                    Some((k, _)) => {
                        working.remove(k);
                        continue;
                    }
                }
            }

            let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
            let mut block = None;
            let pnorm = p.norm();
            for i in 0..self.ineq_mat.nrows() {
                if working.contains(&i) {
                    continue;
                }
                let gi = self.ineq_mat.row(i);
                let gp = (gi * &p)[(0, 0)];
                if gp > 1e-12 * gi.norm() * pnorm {
                    let slack = (self.ineq_rhs[i] - (gi * &x)[(0, 0)]).max(0.0);
                    let ratio = slack / gp;
                    if ratio < alpha {
                        alpha = ratio;
                        block = Some(i);
                    }
                }
            }
            if alpha.is_infinite() {
                status = QpStatus::Unbounded;
                break;
            }
            x += &p * alpha;
            if let Some(i) = block {
                working.push(i);
                self.polish(&mut x, &eq_rows, &working);
            }
            let obj = self.objective(&x);
            trace.push(obj);
            if obj < UNBOUNDED_LEVEL {
                status = QpStatus::Unbounded;
                break;
            }
        }

        let objective = match status {
            QpStatus::Unbounded => f64::NEG_INFINITY,
            _ => self.objective(&x),
        };
        QpResult {
            status,
            x,
            objective,
            iterations,
            trace,
            working_set: working,
        }
    }
}
