//! End-to-end re-checking of a sensitivity result against the grid and
//! finite-difference oracles.

use serde::{Deserialize, Serialize};

use crate::convex::SetRep;
use crate::error::Result;
use crate::linalg::norm_inf;
use crate::model::ControlProblem;
use crate::oracle::{grid_oracle, sampled_subgradient, subgradient_inequality_check, OracleGrid};
use crate::sensitivity::{analyze, SensOptions, SensitivityReport};
use crate::serde_ext::ext_f64;
use crate::solver::{kkt_verify, solve};

/// Slack for a sampled subgradient to count as inside the reported set.
pub const FD_CONTAINMENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    #[serde(default, with = "ext_f64")]
    pub margin: f64,
    pub point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub wbar: Vec<f64>,
    /// The set whose elements were checked.
    pub checked_set: SetRep,
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &VerifyCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> VerifyCheck {
    VerifyCheck {
        name: name.into(),
        pass,
        detail: detail.into(),
        margin: 0.0,
        point: None,
    }
}

/// `±e_i` and `±(e_i + ½e_j)/‖·‖`.
fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![];
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            out.push(e);
            for j in (0..d).filter(|j| *j != i) {
                for t in [0.5, -0.5] {
                    let mut e = vec![0.0; d];
                    e[i] = s / 1.25f64.sqrt();
                    e[j] = t / 1.25f64.sqrt();
                    out.push(e);
                }
            }
        }
    }
    out
}

/// Solves at `w̄`, re-verifies optimality, and checks every vertex of the
/// reported `∂V(w̄)` (or of `{candidate}`) against the grid oracle. When no
/// candidate is given, finite-difference subgradients sampled around `w̄`
/// must also lie in the reported set.
pub fn verify(
    p: &ControlProblem,
    wbar: &[f64],
    opts: &SensOptions,
    candidate: Option<&[f64]>,
) -> Result<VerifyReport> {
    let mut checks = vec![];
    let r = solve(p, wbar)?;
    checks.push(check("solve", r.is_optimal(), format!("{:?}", r.status)));
    let sol = match r.optimal_solution() {
        Ok(s) => s.clone(),
        Err(_) => {
            return Ok(VerifyReport {
                pass: false,
                wbar: wbar.to_vec(),
                checked_set: SetRep::Empty { dim: wbar.len() },
                checks,
            })
        }
    };
    let cert = kkt_verify(p, wbar, &sol.z)?;
    checks.push(check(
        "kkt certificate",
        cert.is_some(),
        match &cert {
            Some(c) => format!("residual {:.3e}", c.residual),
            None => "no certificate at the reported solution".into(),
        },
    ));

    let mut no_grid = opts.clone();
    no_grid.grid_points = 0;
    let report: Option<SensitivityReport> = match candidate {
        Some(_) => None,
        None => Some(analyze(p, wbar, &no_grid)?),
    };
    let set = match candidate {
        Some(c) => SetRep::singleton(c.to_vec()),
        None => report.as_ref().expect("computed above").subdiff_v.clone(),
    };

    let grid = grid_oracle(p, OracleGrid::uniform(wbar.to_vec(), opts.grid_radius, opts.grid_points)?)?;
    let skipped = grid.points.iter().filter(|g| g.value.is_nan()).count();
    checks.push(check(
        "grid oracle",
        skipped == 0,
        format!("{} points, {skipped} failed", grid.points.len()),
    ));

    match set.vertices() {
        Ok((vertices, rays)) if rays.is_empty() && !vertices.is_empty() => {
            for v in &vertices {
                let c = subgradient_inequality_check(wbar, r.value, v, &grid, opts.tol)?;
                checks.push(VerifyCheck {
                    name: format!("subgradient inequality at {v:?}"),
                    pass: c.pass,
                    detail: format!("{} points checked", c.checked),
                    margin: c.worst_margin,
                    point: c.worst_point,
                });
            }
        }
        Ok((vertices, _)) if vertices.is_empty() => {
            checks.push(check("subgradient inequality", false, "reported set is empty"));
        }
        Ok(_) => checks.push(check(
            "subgradient inequality",
            false,
            "reported set is unbounded",
        )),
        Err(e) => checks.push(check("subgradient inequality", false, e.to_string())),
    }

    if let Some(rep) = &report {
        let zero = rep.singular_subdiff_v.is_singleton()
            && rep
                .singular_subdiff_v
                .contains(&vec![0.0; wbar.len()], 0.0);
        checks.push(check("singular subdifferential is {0}", zero, ""));
        for d in probe_directions(wbar.len()) {
            match sampled_subgradient(p, wbar, &d) {
                Ok(g) => {
                    let dist = set.distance(&g);
                    let tol = FD_CONTAINMENT_TOL * (1.0 + norm_inf(&g));
                    checks.push(VerifyCheck {
                        name: format!("sampled subgradient along {d:?} contained"),
                        pass: dist <= tol,
                        detail: format!("distance {dist:.3e}"),
                        margin: -dist,
                        point: Some(g),
                    });
                }
                Err(e) => checks.push(check(
                    format!("sampled subgradient along {d:?}"),
                    false,
                    e.to_string(),
                )),
            }
        }
    }

    Ok(VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        wbar: wbar.to_vec(),
        checked_set: set,
        checks,
    })
}
