use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm};
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Tolerance for deciding that an inequality is active at a point.
pub const ACTIVE_TOL: f64 = 1e-7;
/// Absolute feasibility tolerance for points claimed to lie in a set.
pub const FEAS_TOL: f64 = 1e-7;

/// `⟨a, x⟩ ≤ alpha`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub alpha: f64,
}

/// `⟨b, x⟩ = beta`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub b: Vec<f64>,
    pub beta: f64,
}

/// Polyhedron in H-representation. Unbounded sets are fine; the whole
/// space is the set with no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralSet {
    pub dim: usize,
    pub ineqs: Vec<Halfspace>,
    pub eqs: Vec<Hyperplane>,
}

impl PolyhedralSet {
    pub fn whole(dim: usize) -> Self {
        PolyhedralSet {
            dim,
            ineqs: vec![],
            eqs: vec![],
        }
    }

    /// Axis-aligned box; infinite bounds produce no row.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut s = Self::whole(dim);
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            if hi[i].is_finite() {
                e[i] = 1.0;
                s.ineqs.push(Halfspace {
                    a: e.clone(),
                    alpha: hi[i],
                });
            }
            if lo[i].is_finite() {
                e[i] = -1.0;
                s.ineqs.push(Halfspace {
                    a: e,
                    alpha: -lo[i],
                });
            }
        }
        s
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v_in = self
            .ineqs
            .iter()
            .map(|h| (dot(&h.a, x) - h.alpha).max(0.0))
            .fold(0.0, f64::max);
        let v_eq = self
            .eqs
            .iter()
            .map(|h| (dot(&h.b, x) - h.beta).abs())
            .fold(0.0, f64::max);
        v_in.max(v_eq)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Indices of inequalities with `|⟨a,x⟩ − α| ≤ ACTIVE_TOL`.
    pub fn active_set(&self, x: &[f64]) -> Vec<usize> {
        self.ineqs
            .iter()
            .enumerate()
            .filter(|(_, h)| norm(&h.a) > 0.0 && (dot(&h.a, x) - h.alpha).abs() <= ACTIVE_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        let mut lp = LinearProgram::minimize();
        let vars = lp.add_free_vars(self.dim);
        self.add_to_lp(&mut lp, &vars);
        !lp.solve().is_feasible()
    }

    /// Adds the rows of the set over the given LP variables.
    pub fn add_to_lp(&self, lp: &mut LinearProgram, vars: &[usize]) {
        for h in &self.ineqs {
            let row: Vec<(usize, f64)> = vars.iter().cloned().zip(h.a.iter().cloned()).collect();
            lp.add_row(&row, Relation::Le, h.alpha);
        }
        for h in &self.eqs {
            let row: Vec<(usize, f64)> = vars.iter().cloned().zip(h.b.iter().cloned()).collect();
            lp.add_row(&row, Relation::Eq, h.beta);
        }
    }

    /// Radius of the largest ball (capped at 1) fitting inside the
    /// inequality rows, or `None` when the set is empty. Equality rows are
    /// ignored here; see [`PolyhedralSet::has_interior`].
    pub fn inscribed_radius(&self) -> Option<f64> {
        let mut lp = LinearProgram::maximize();
        let vars = lp.add_free_vars(self.dim);
        let s = lp.add_var(1.0, f64::NEG_INFINITY, 1.0);
        for h in &self.ineqs {
            let mut row: Vec<(usize, f64)> =
                vars.iter().cloned().zip(h.a.iter().cloned()).collect();
            row.push((s, norm(&h.a)));
            lp.add_row(&row, Relation::Le, h.alpha);
        }
        for h in &self.eqs {
            let row: Vec<(usize, f64)> = vars.iter().cloned().zip(h.b.iter().cloned()).collect();
            lp.add_row(&row, Relation::Eq, h.beta);
        }
        match lp.solve() {
            LpOutcome::Optimal { objective, .. } if objective < -1e-12 => None,
            LpOutcome::Optimal { objective, .. } => Some(objective.max(0.0)),
            LpOutcome::Unbounded => Some(1.0),
            LpOutcome::Infeasible => None,
        }
    }

    /// Nonempty interior: positive inscribed radius and no genuine equality rows.
    pub fn has_interior(&self) -> bool {
        if self.eqs.iter().any(|h| norm(&h.b) > 0.0) {
            return false;
        }
        matches!(self.inscribed_radius(), Some(r) if r > 1e-9)
    }

    /// Lifts the set into a `total`-dimensional space where local
    /// coordinate `i` lands at `offset + i`.
    pub fn embed(&self, total: usize, offset: usize) -> PolyhedralSet {
        let lift = |v: &[f64]| {
            let mut out = vec![0.0; total];
            out[offset..offset + v.len()].copy_from_slice(v);
            out
        };
        PolyhedralSet {
            dim: total,
            ineqs: self
                .ineqs
                .iter()
                .map(|h| Halfspace {
                    a: lift(&h.a),
                    alpha: h.alpha,
                })
                .collect(),
            eqs: self
                .eqs
                .iter()
                .map(|h| Hyperplane {
                    b: lift(&h.b),
                    beta: h.beta,
                })
                .collect(),
        }
    }

    /// Intersection of two sets over the same space.
    pub fn intersect(mut self, other: &PolyhedralSet) -> PolyhedralSet {
        self.ineqs.extend(other.ineqs.iter().cloned());
        self.eqs.extend(other.eqs.iter().cloned());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_interior() {
        let omega = PolyhedralSet {
            dim: 1,
            ineqs: vec![Halfspace {
                a: vec![-1.0],
                alpha: 1.0,
            }],
            eqs: vec![],
        };
        assert!(omega.has_interior());
        assert!(omega.contains(&[0.4], 0.0));
        assert!(!omega.contains(&[-1.5], 1e-7));
    }

    #[test]
    fn point_set_has_no_interior() {
        let point = PolyhedralSet {
            dim: 1,
            ineqs: vec![],
            eqs: vec![Hyperplane {
                b: vec![1.0],
                beta: 0.0,
            }],
        };
        assert!(!point.has_interior());
        // Same point written with two inequalities.
        let squeezed = PolyhedralSet::boxed(&[0.0], &[0.0]);
        assert!(!squeezed.has_interior());
    }

    #[test]
    fn empty_set() {
        let s = PolyhedralSet::boxed(&[1.0], &[0.0]);
        assert!(s.is_empty());
        assert_eq!(s.inscribed_radius(), None);
    }

    #[test]
    fn active_rows() {
        let c = PolyhedralSet::boxed(&[f64::NEG_INFINITY], &[2.0]);
        assert!(c.active_set(&[-0.4]).is_empty());
        assert_eq!(c.active_set(&[2.0]), vec![0]);
    }
}
