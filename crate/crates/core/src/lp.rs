//! Thin wrapper over `minilp` with index-based variables.
//!
//! Every linear program in the crate (phase-I feasibility, Farkas
//! certificates, cone membership, redundancy pruning, membership tests)
//! goes through [`LinearProgram`].

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

/// A user variable expressed through nonnegative-or-bounded solver columns:
/// `value = offset + Σ coef·column`.
struct Mapped {
    offset: f64,
    cols: Vec<(Variable, f64)>,
}

pub struct LinearProgram {
    problem: Problem,
    vars: Vec<Mapped>,
    objective_offset: f64,
    trivially_infeasible: bool,
}

impl LinearProgram {
    pub fn minimize() -> Self {
        Self::new(OptimizationDirection::Minimize)
    }

    pub fn maximize() -> Self {
        Self::new(OptimizationDirection::Maximize)
    }

    fn new(dir: OptimizationDirection) -> Self {
        LinearProgram {
            problem: Problem::new(dir),
            vars: Vec::new(),
            objective_offset: 0.0,
            trivially_infeasible: false,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Adds a variable with bounds `lo ≤ x ≤ hi`. Variables without a finite
    /// lower bound are rewritten in terms of nonnegative columns, since the
    /// underlying simplex misreports unboundedness along free columns.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        if lo > hi {
            self.trivially_infeasible = true;
        }
        let mapped = if lo.is_finite() {
            Mapped {
                offset: 0.0,
                cols: vec![(self.problem.add_var(cost, (lo, hi.max(lo))), 1.0)],
            }
        } else if hi.is_finite() {
            // x = hi − s, s ≥ 0
            self.objective_offset += cost * hi;
            Mapped {
                offset: hi,
                cols: vec![(self.problem.add_var(-cost, (0.0, f64::INFINITY)), -1.0)],
            }
        } else {
            Mapped {
                offset: 0.0,
                cols: vec![
                    (self.problem.add_var(cost, (0.0, f64::INFINITY)), 1.0),
                    (self.problem.add_var(-cost, (0.0, f64::INFINITY)), -1.0),
                ],
            }
        };
        self.vars.push(mapped);
        self.vars.len() - 1
    }

    pub fn add_free_vars(&mut self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|_| self.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY))
            .collect()
    }

    /// Adds `Σ coeff·var (rel) rhs`. Repeated variables are merged.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut rhs = rhs;
        let mut terms: Vec<(Variable, f64)> = Vec::with_capacity(coeffs.len());
        for &(v, c) in coeffs {
            if c == 0.0 {
                continue;
            }
            let m = &self.vars[v];
            rhs -= c * m.offset;
            for &(col, k) in &m.cols {
                if let Some(e) = terms.iter_mut().find(|(w, _)| *w == col) {
                    e.1 += c * k;
                } else {
                    terms.push((col, c * k));
                }
            }
        }
        terms.retain(|(_, c)| *c != 0.0);
        if terms.is_empty() {
            let ok = match rel {
                Relation::Le => 0.0 <= rhs + 1e-12,
                Relation::Ge => 0.0 >= rhs - 1e-12,
                Relation::Eq => rhs.abs() <= 1e-12,
            };
            if !ok {
                self.trivially_infeasible = true;
            }
            return;
        }
        let op = match rel {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
            Relation::Eq => ComparisonOp::Eq,
        };
        self.problem.add_constraint(terms.as_slice(), op, rhs);
    }

    /// Adds `lhs - rhs` as a free residual pair `r⁺ - r⁻` on an equality
    /// row and returns the two residual variables (costed by `weight`).
    pub fn add_soft_eq(&mut self, coeffs: &[(usize, f64)], rhs: f64, weight: f64) -> (usize, usize) {
        let rp = self.add_var(weight, 0.0, f64::INFINITY);
        let rm = self.add_var(weight, 0.0, f64::INFINITY);
        let mut row = coeffs.to_vec();
        row.push((rp, 1.0));
        row.push((rm, -1.0));
        self.add_row(&row, Relation::Eq, rhs);
        (rp, rm)
    }

    pub fn solve(self) -> LpOutcome {
        if self.trivially_infeasible {
            return LpOutcome::Infeasible;
        }
        if self.vars.is_empty() {
            return LpOutcome::Optimal {
                x: vec![],
                objective: self.objective_offset,
            };
        }
        match self.problem.solve() {
            Ok(sol) => {
                let x: Vec<f64> = self
                    .vars
                    .iter()
                    .map(|m| m.offset + m.cols.iter().map(|(c, k)| k * sol[*c]).sum::<f64>())
                    .collect();
                let objective = sol.objective() + self.objective_offset;
                if !objective.is_finite() || x.iter().any(|v| !v.is_finite()) {
                    return LpOutcome::Unbounded;
                }
                LpOutcome::Optimal { x, objective }
            }
            Err(minilp::Error::Infeasible) => LpOutcome::Infeasible,
            Err(minilp::Error::Unbounded) => LpOutcome::Unbounded,
        }
    }
}
