//! Polyhedral cones in generator form and normal cones of H-polyhedra.

use serde::{Deserialize, Serialize};

use super::polyhedral::{PolyhedralSet, FEAS_TOL};
use super::set::{LinearDescription, SetRep};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Residual accepted when testing cone membership.
pub const CONE_TOL: f64 = 1e-8;

/// `{Σ λᵢ gᵢ + Σ μⱼ lⱼ : λ ≥ 0}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeRep {
    pub dim: usize,
    pub generators: Vec<Vec<f64>>,
    pub lineality: Vec<Vec<f64>>,
}

impl ConeRep {
    pub fn trivial(dim: usize) -> Self {
        ConeRep {
            dim,
            generators: vec![],
            lineality: vec![],
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.generators.is_empty() && self.lineality.is_empty()
    }

    /// The cone as a V-representation with apex 0.
    pub fn to_setrep(&self) -> SetRep {
        if self.is_trivial() {
            return SetRep::zero(self.dim);
        }
        let mut rays = self.generators.clone();
        for l in &self.lineality {
            rays.push(l.clone());
            rays.push(l.iter().map(|v| -v).collect());
        }
        SetRep::VPoly {
            vertices: vec![vec![0.0; self.dim]],
            rays,
        }
    }

    /// Lifted description with multipliers as auxiliary variables.
    pub fn linear_description(&self) -> LinearDescription {
        let d = self.dim;
        let ng = self.generators.len();
        let n = d + ng + self.lineality.len();
        let eqs = (0..d)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                for (j, g) in self.generators.iter().enumerate() {
                    row[d + j] = -g[i];
                }
                for (j, l) in self.lineality.iter().enumerate() {
                    row[d + ng + j] = -l[i];
                }
                (row, 0.0)
            })
            .collect();
        let mut aux_bounds = vec![(0.0, f64::INFINITY); ng];
        aux_bounds.extend(vec![(f64::NEG_INFINITY, f64::INFINITY); self.lineality.len()]);
        LinearDescription {
            aux_bounds,
            eqs,
            ineqs: vec![],
        }
    }
}

impl super::set::ConvexSet for ConeRep {
    fn dim(&self) -> usize {
        self.dim
    }

    fn linear_description(&self) -> LinearDescription {
        ConeRep::linear_description(self)
    }
}

/// `N(x; S)`: active inequality normals as generators, equality normals as
/// lineality.
pub fn normal_cone_at(s: &PolyhedralSet, x: &[f64]) -> Result<ConeRep> {
    if x.len() != s.dim {
        return Err(Error::Dimension(format!(
            "point of length {} for a set of dimension {}",
            x.len(),
            s.dim
        )));
    }
    let violation = s.violation(x);
    if violation > FEAS_TOL {
        return Err(Error::PointNotInSet { violation });
    }
    Ok(ConeRep {
        dim: s.dim,
        generators: s
            .active_set(x)
            .into_iter()
            .map(|i| s.ineqs[i].a.clone())
            .filter(|a| a.iter().any(|v| *v != 0.0))
            .collect(),
        lineality: s
            .eqs
            .iter()
            .map(|h| h.b.clone())
            .filter(|b| b.iter().any(|v| *v != 0.0))
            .collect(),
    })
}

/// Membership by an L1 fit: returns the residual of the best combination.
pub fn cone_residual(c: &ConeRep, v: &[f64]) -> f64 {
    assert_eq!(v.len(), c.dim);
    if c.is_trivial() {
        return v.iter().map(|x| x.abs()).sum();
    }
    let mut lp = LinearProgram::minimize();
    let lam: Vec<usize> = c
        .generators
        .iter()
        .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
        .collect();
    let mu = lp.add_free_vars(c.lineality.len());
    for i in 0..c.dim {
        let mut row: Vec<(usize, f64)> = vec![];
        for (j, g) in c.generators.iter().enumerate() {
            row.push((lam[j], g[i]));
        }
        for (j, l) in c.lineality.iter().enumerate() {
            row.push((mu[j], l[i]));
        }
        lp.add_soft_eq(&row, v[i], 1.0);
    }
    match lp.solve() {
        LpOutcome::Optimal { objective, .. } => objective.max(0.0),
        _ => f64::INFINITY,
    }
}

pub fn cone_contains(c: &ConeRep, v: &[f64]) -> bool {
    let scale = 1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    cone_residual(c, v) <= CONE_TOL * scale
}

/// `v ∈ cone` expressed as LP rows: `v = Σ λ g + Σ μ l`.
pub fn add_cone_membership(lp: &mut LinearProgram, c: &ConeRep, v: &[usize]) {
    let lam: Vec<usize> = c
        .generators
        .iter()
        .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
        .collect();
    let mu = lp.add_free_vars(c.lineality.len());
    for i in 0..c.dim {
        let mut row = vec![(v[i], 1.0)];
        for (j, g) in c.generators.iter().enumerate() {
            row.push((lam[j], -g[i]));
        }
        for (j, l) in c.lineality.iter().enumerate() {
            row.push((mu[j], -l[i]));
        }
        lp.add_row(&row, Relation::Eq, 0.0);
    }
}
