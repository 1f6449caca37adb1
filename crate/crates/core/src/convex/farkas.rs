//! Optimality certificates `0 ∈ ∂φ(x̄) + Σ λᵢ aᵢ + Σ μⱼ bⱼ` with `λ ≥ 0`
//! supported on the active rows.

use serde::{Deserialize, Serialize};

use super::polyhedral::{PolyhedralSet, FEAS_TOL};
use super::set::ConvexSet;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::serde_ext::ext_f64;

/// Largest residual accepted for a certificate.
pub const FARKAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    /// One entry per inequality; zero on inactive rows.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// The element of the target set used.
    pub subgradient: Vec<f64>,
    #[serde(with = "ext_f64")]
    pub residual: f64,
}

impl FarkasCertificate {
    pub fn stationarity_residual(&self, set: &PolyhedralSet) -> f64 {
        let mut r = self.subgradient.clone();
        for (h, l) in set.ineqs.iter().zip(&self.lambda) {
            for (ri, ai) in r.iter_mut().zip(&h.a) {
                *ri += l * ai;
            }
        }
        for (h, m) in set.eqs.iter().zip(&self.mu) {
            for (ri, bi) in r.iter_mut().zip(&h.b) {
                *ri += m * bi;
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|λᵢ (⟨aᵢ, x⟩ − αᵢ)|`.
    pub fn complementarity(&self, set: &PolyhedralSet, x: &[f64]) -> f64 {
        set.ineqs
            .iter()
            .zip(&self.lambda)
            .map(|(h, l)| (l * (crate::linalg::dot(&h.a, x) - h.alpha)).abs())
            .fold(0.0, f64::max)
    }
}

/// Searches for a certificate; `Ok(None)` means `x̄` is not optimal.
pub fn farkas_certificate(
    set: &PolyhedralSet,
    x: &[f64],
    target: &dyn ConvexSet,
) -> Result<Option<FarkasCertificate>> {
    let d = set.dim;
    if x.len() != d || target.dim() != d {
        return Err(Error::Dimension(format!(
            "point {}, set {d}, target {}",
            x.len(),
            target.dim()
        )));
    }
    let violation = set.violation(x);
    if violation > FEAS_TOL {
        return Err(Error::PointNotInSet { violation });
    }
    let active = set.active_set(x);

    let mut lp = LinearProgram::minimize();
    let g = lp.add_free_vars(d);
    target.constrain(&mut lp, &g);
    let lam: Vec<usize> = active
        .iter()
        .map(|_| lp.add_var(0.0, 0.0, f64::INFINITY))
        .collect();
    let mu = lp.add_free_vars(set.eqs.len());
    for i in 0..d {
        let mut row = vec![(g[i], 1.0)];
        for (k, &r) in active.iter().enumerate() {
            row.push((lam[k], set.ineqs[r].a[i]));
        }
        for (j, h) in set.eqs.iter().enumerate() {
            row.push((mu[j], h.b[i]));
        }
        lp.add_soft_eq(&row, 0.0, 1.0);
    }
    let LpOutcome::Optimal { x: sol, .. } = lp.solve() else {
        return Ok(None);
    };
    let mut lambda = vec![0.0; set.ineqs.len()];
    for (k, &r) in active.iter().enumerate() {
        lambda[r] = sol[lam[k]].max(0.0);
    }
    let mut cert = FarkasCertificate {
        lambda,
        mu: mu.iter().map(|&j| sol[j]).collect(),
        subgradient: g.iter().map(|&j| sol[j]).collect(),
        residual: 0.0,
    };
    cert.residual = cert.stationarity_residual(set);
    let scale = 1.0 + cert.subgradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((cert.residual <= FARKAS_TOL * scale).then_some(cert))
}
