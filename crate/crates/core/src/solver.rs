//! Solving the control problem at a fixed parameter.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex::{farkas_certificate, ConvexExpr, FarkasCertificate, Hyperplane, PolyhedralSet};
use crate::error::{Error, Result};
use crate::model::{assemble_operators, evaluate_objective, AssembledSystem, ControlProblem, Solution};
use crate::qp::{QpStatus, QuadProgram};
use crate::serde_ext::ext_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present for OPTIMAL, and for MAX_ITER as the best iterate.
    pub solution: Option<Solution>,
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub kkt: Option<FarkasCertificate>,
    pub iterations: usize,
    /// Epigraph objective after each iteration.
    pub trace: Vec<f64>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn optimal_solution(&self) -> Result<&Solution> {
        match (&self.status, &self.solution) {
            (SolveStatus::Optimal, Some(s)) => Ok(s),
            _ => Err(Error::NotSolved(format!("{:?}", self.status))),
        }
    }
}

fn check_param(p: &ControlProblem, w: &[f64]) -> Result<()> {
    if w.len() != p.param_dim() {
        return Err(Error::Dimension(format!(
            "parameter of length {}, expected {}",
            w.len(),
            p.param_dim()
        )));
    }
    Ok(())
}

/// The objective restricted to `z` with `w` fixed.
pub fn objective_at(p: &ControlProblem, w: &[f64]) -> ConvexExpr {
    p.objective_expr().fix_tail(w)
}

/// Feasible region in `z`: the rows of `K` plus the state equations.
pub fn feasible_region(sys: &AssembledSystem, w: &[f64]) -> PolyhedralSet {
    let mut s = sys.k.clone();
    let tw = crate::linalg::mat_vec(&sys.t, w);
    for i in 0..sys.m.nrows() {
        s.eqs.push(Hyperplane {
            b: sys.m.row(i).iter().cloned().collect(),
            beta: tw[i],
        });
    }
    s
}

/// Epigraph form: one variable `t ≥ |aᵀz − b|` per absolute-value atom.
fn epigraph_qp(f: &ConvexExpr, region: &PolyhedralSet) -> QuadProgram {
    let nz = f.dim;
    let atoms: Vec<_> = f.atoms.iter().filter(|a| a.weight > 0.0).collect();
    let n = nz + atoms.len();
    let mut hess = DMatrix::zeros(n, n);
    hess.view_mut((0, 0), (nz, nz)).copy_from(&f.quad);
    let mut lin = DVector::zeros(n);
    for i in 0..nz {
        lin[i] = f.lin[i];
    }
    for (j, at) in atoms.iter().enumerate() {
        lin[nz + j] = at.weight;
    }
    let eq_mat = DMatrix::from_fn(region.eqs.len(), n, |i, j| {
        if j < nz {
            region.eqs[i].b[j]
        } else {
            0.0
        }
    });
    let eq_rhs = DVector::from_iterator(region.eqs.len(), region.eqs.iter().map(|h| h.beta));
    let m = region.ineqs.len() + 2 * atoms.len();
    let mut ineq_mat = DMatrix::zeros(m, n);
    let mut ineq_rhs = DVector::zeros(m);
    for (i, h) in region.ineqs.iter().enumerate() {
        for j in 0..nz {
            ineq_mat[(i, j)] = h.a[j];
        }
        ineq_rhs[i] = h.alpha;
    }
    let base = region.ineqs.len();
    for (k, at) in atoms.iter().enumerate() {
        let (r1, r2) = (base + 2 * k, base + 2 * k + 1);
        for j in 0..nz {
            ineq_mat[(r1, j)] = at.a[j];
            ineq_mat[(r2, j)] = -at.a[j];
        }
        ineq_mat[(r1, nz + k)] = -1.0;
        ineq_mat[(r2, nz + k)] = -1.0;
        ineq_rhs[r1] = at.b;
        ineq_rhs[r2] = -at.b;
    }
    QuadProgram {
        hess,
        lin,
        constant: f.constant,
        eq_mat,
        eq_rhs,
        ineq_mat,
        ineq_rhs,
    }
}

/// Solves the problem at `w`.
pub fn solve(p: &ControlProblem, w: &[f64]) -> Result<SolveResult> {
    check_param(p, w)?;
    let sys = assemble_operators(p)?;
    let f = objective_at(p, w);
    let region = feasible_region(&sys, w);
    let qp = epigraph_qp(&f, &region);
    let max_iter = 100 + 50 * (qp.dim() + qp.ineq_mat.nrows());
    let r = qp.solve(max_iter);
    debug!(
        "qp status {:?} after {} iterations, objective {}",
        r.status, r.iterations, r.objective
    );
    let nz = sys.layout.nz;
    let z: Vec<f64> = r.x.iter().take(nz).cloned().collect();
    let result = match r.status {
        QpStatus::Infeasible => SolveResult {
            status: SolveStatus::Infeasible,
            solution: None,
            value: f64::INFINITY,
            kkt: None,
            iterations: r.iterations,
            trace: r.trace,
        },
        QpStatus::Unbounded => SolveResult {
            status: SolveStatus::Unbounded,
            solution: None,
            value: f64::NEG_INFINITY,
            kkt: None,
            iterations: r.iterations,
            trace: r.trace,
        },
        QpStatus::MaxIter => {
            let value = evaluate_objective(p, &z, w);
            SolveResult {
                status: SolveStatus::MaxIter,
                solution: Some(Solution::from_z(p, z, value)),
                value,
                kkt: None,
                iterations: r.iterations,
                trace: r.trace,
            }
        }
        QpStatus::Optimal => {
            let value = evaluate_objective(p, &z, w);
            let kkt = match kkt_verify(p, w, &z) {
                Ok(c) => c,
                Err(e) => {
                    warn!("optimality certificate unavailable: {e}");
                    None
                }
            };
            if kkt.is_none() {
                warn!("solver reports an optimum that has no optimality certificate");
            }
            SolveResult {
                status: SolveStatus::Optimal,
                solution: Some(Solution::from_z(p, z, value)),
                value,
                kkt,
                iterations: r.iterations,
                trace: r.trace,
            }
        }
    };
    Ok(result)
}

/// `V(w)`: `+∞` when infeasible, `−∞` when unbounded.
pub fn optimal_value(p: &ControlProblem, w: &[f64]) -> Result<f64> {
    let r = solve(p, w)?;
    if r.status == SolveStatus::MaxIter {
        warn!("iteration limit reached at w = {w:?}; returning best iterate");
    }
    Ok(r.value)
}

/// Optimality test for a feasible `z`: a certificate exists iff `z` is a
/// minimizer of the problem at `w`.
pub fn kkt_verify(p: &ControlProblem, w: &[f64], z: &[f64]) -> Result<Option<FarkasCertificate>> {
    check_param(p, w)?;
    let sys = assemble_operators(p)?;
    if z.len() != sys.layout.nz {
        return Err(Error::Dimension(format!(
            "candidate of length {}, expected {}",
            z.len(),
            sys.layout.nz
        )));
    }
    let f = objective_at(p, w);
    let region = feasible_region(&sys, w);
    let subgradients = f.subgradients(z);
    farkas_certificate(&region, z, &subgradients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::fixtures;

    #[test]
    fn first_example() {
        let p = fixtures::p1();
        let r = solve(&p, &[0.0]).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let z = &r.solution.as_ref().unwrap().z;
        for (a, b) in z.iter().zip([-0.4, -0.8, 0.4]) {
            assert!((a - b).abs() < 1e-9, "{z:?}");
        }
        assert!((r.value - 0.2).abs() < 1e-12);
        let kkt = r.kkt.unwrap();
        assert!(kkt.lambda.iter().all(|l| *l == 0.0));
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn second_example() {
        let p = fixtures::p2();
        let r = solve(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let z = &r.solution.as_ref().unwrap().z;
        for (a, b) in z.iter().zip([-1.0, 1.0, 0.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-9, "{z:?}");
        }
        assert!(r.value.abs() < 1e-12);
        assert!(r.kkt.is_some());
        assert!((optimal_value(&p, &[0.1, 0.2]).unwrap() - 0.205).abs() < 1e-10);
    }

    #[test]
    fn suboptimal_point_is_rejected() {
        let p = fixtures::p1();
        assert!(kkt_verify(&p, &[0.0], &[0.0, 0.0, 0.0]).unwrap().is_none());
    }

    #[test]
    fn infeasible_initial_set() {
        let mut p = fixtures::p1();
        p.initial_set = PolyhedralSet::boxed(&[1.0], &[0.0]);
        assert_eq!(optimal_value(&p, &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn unbounded_linear_cost() {
        let mut p = fixtures::p1();
        p.stage_costs[0] = ConvexExpr::new(DMatrix::zeros(3, 3), vec![0.0, -1.0, 0.0], 0.0, vec![])
            .unwrap();
        p.terminal_cost = ConvexExpr::zero(1);
        assert_eq!(solve(&p, &[0.0]).unwrap().status, SolveStatus::Unbounded);
    }
}
