//! The parametric control problem and its assembled block operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::{Block, ConvexExpr, PolyhedralSet};
use crate::error::{Error, Result};
use crate::linalg::{mat_vec, norm};

pub use crate::linalg::kernel_basis;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub horizon: usize,
    pub state_dims: Vec<usize>,
    pub control_dims: Vec<usize>,
    pub param_dims: Vec<usize>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub t: Vec<DMatrix<f64>>,
    /// `h_k` over `(x_k, u_k, w_k)`.
    pub stage_costs: Vec<ConvexExpr>,
    pub terminal_cost: ConvexExpr,
    pub initial_set: PolyhedralSet,
    pub control_sets: Vec<PolyhedralSet>,
    /// Default reference parameter.
    pub wbar: Vec<f64>,
}

/// Offsets of every block inside `z = (x₀..x_N, u₀..u_{N−1})`, `w` and the
/// rows of `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub x_off: Vec<usize>,
    pub u_off: Vec<usize>,
    pub w_off: Vec<usize>,
    /// Row offset of state equation `k` (whose rows are `x_{k+1}`).
    pub row_off: Vec<usize>,
    pub nx: usize,
    pub nu: usize,
    pub nz: usize,
    pub nw: usize,
    pub rows: usize,
}

impl Layout {
    pub fn new(p: &ControlProblem) -> Self {
        let prefix = |d: &[usize]| -> Vec<usize> {
            d.iter()
                .scan(0, |acc, &n| {
                    let o = *acc;
                    *acc += n;
                    Some(o)
                })
                .collect()
        };
        let nx: usize = p.state_dims.iter().sum();
        let nu: usize = p.control_dims.iter().sum();
        let nw: usize = p.param_dims.iter().sum();
        let u_off = prefix(&p.control_dims).into_iter().map(|o| o + nx).collect();
        Layout {
            x_off: prefix(&p.state_dims),
            u_off,
            w_off: prefix(&p.param_dims),
            row_off: prefix(&p.state_dims[1..]),
            nx,
            nu,
            nz: nx + nu,
            nw,
            rows: nx - p.state_dims[0],
        }
    }
}

impl ControlProblem {
    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn stage_dim(&self, k: usize) -> usize {
        self.state_dims[k] + self.control_dims[k] + self.param_dims[k]
    }

    /// Global `(z, w)` coordinates of the stage-`k` cost variables.
    pub fn stage_indices(&self, k: usize) -> Vec<usize> {
        let l = self.layout();
        let x = l.x_off[k]..l.x_off[k] + self.state_dims[k];
        let u = l.u_off[k]..l.u_off[k] + self.control_dims[k];
        let w = l.nz + l.w_off[k]..l.nz + l.w_off[k] + self.param_dims[k];
        x.chain(u).chain(w).collect()
    }

    pub fn stage_point(&self, k: usize, z: &[f64], w: &[f64]) -> Vec<f64> {
        let nz = z.len();
        self.stage_indices(k)
            .into_iter()
            .map(|i| if i < nz { z[i] } else { w[i - nz] })
            .collect()
    }

    pub fn terminal_indices(&self) -> Vec<usize> {
        let l = self.layout();
        let n = self.horizon;
        (l.x_off[n]..l.x_off[n] + self.state_dims[n]).collect()
    }

    /// `f(z, w) = Σ h_k + h_N` over the stacked `(z, w)`.
    pub fn objective_expr(&self) -> ConvexExpr {
        let l = self.layout();
        let total = l.nz + l.nw;
        let mut f = self.terminal_cost.scatter(total, &self.terminal_indices());
        for k in 0..self.horizon {
            f = f.plus(&self.stage_costs[k].scatter(total, &self.stage_indices(k)));
        }
        f
    }

    pub fn param_dim(&self) -> usize {
        self.param_dims.iter().sum()
    }

    /// Simulates the dynamics from `x0` with controls `u`.
    pub fn simulate(&self, x0: &[f64], u: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
        let l = self.layout();
        let mut z = vec![0.0; l.nz];
        z[..x0.len()].copy_from_slice(x0);
        for k in 0..self.horizon {
            let xk = z[l.x_off[k]..l.x_off[k] + self.state_dims[k]].to_vec();
            let wk = &w[l.w_off[k]..l.w_off[k] + self.param_dims[k]];
            let ax = mat_vec(&self.a[k], &xk);
            let bu = mat_vec(&self.b[k], &u[k]);
            let tw = mat_vec(&self.t[k], wk);
            for i in 0..self.state_dims[k + 1] {
                z[l.x_off[k + 1] + i] = ax[i] + bu[i] + tw[i];
            }
            z[l.u_off[k]..l.u_off[k] + self.control_dims[k]].copy_from_slice(&u[k]);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub objective: f64,
    pub z: Vec<f64>,
}

impl Solution {
    pub fn from_z(p: &ControlProblem, z: Vec<f64>, objective: f64) -> Self {
        let l = p.layout();
        Solution {
            x: (0..=p.horizon)
                .map(|k| z[l.x_off[k]..l.x_off[k] + p.state_dims[k]].to_vec())
                .collect(),
            u: (0..p.horizon)
                .map(|k| z[l.u_off[k]..l.u_off[k] + p.control_dims[k]].to_vec())
                .collect(),
            objective,
            z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&ValidationCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.all_pass() {
            return Ok(());
        }
        let msg: Vec<String> = self
            .failures()
            .iter()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        Err(Error::Invalid(msg.join("; ")))
    }
}

fn shape_problems(p: &ControlProblem) -> Vec<String> {
    let n = p.horizon;
    let mut out = vec![];
    if n == 0 {
        out.push("horizon must be positive".into());
        return out;
    }
    let lens = [
        ("state dims", p.state_dims.len(), n + 1),
        ("control dims", p.control_dims.len(), n),
        ("param dims", p.param_dims.len(), n),
        ("A", p.a.len(), n),
        ("B", p.b.len(), n),
        ("T", p.t.len(), n),
        ("stage costs", p.stage_costs.len(), n),
        ("control sets", p.control_sets.len(), n),
    ];
    for (name, got, want) in lens {
        if got != want {
            out.push(format!("{name}: {got} entries, expected {want}"));
        }
    }
    if !out.is_empty() {
        return out;
    }
    for k in 0..n {
        let rows = p.state_dims[k + 1];
        let check = |out: &mut Vec<String>, name: &str, m: &DMatrix<f64>, cols: usize| {
            if m.nrows() != rows || m.ncols() != cols {
                out.push(format!(
                    "{name}_{k} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                ));
            }
        };
        check(&mut out, "A", &p.a[k], p.state_dims[k]);
        check(&mut out, "B", &p.b[k], p.control_dims[k]);
        check(&mut out, "T", &p.t[k], p.param_dims[k]);
        if p.stage_costs[k].dim != p.stage_dim(k) {
            out.push(format!(
                "stage cost {k} has dimension {}, expected {}",
                p.stage_costs[k].dim,
                p.stage_dim(k)
            ));
        }
        if p.control_sets[k].dim != p.control_dims[k] {
            out.push(format!("control set {k} has the wrong dimension"));
        }
    }
    if p.terminal_cost.dim != p.state_dims[n] {
        out.push("terminal cost has the wrong dimension".into());
    }
    if p.initial_set.dim != p.state_dims[0] {
        out.push("initial set has the wrong dimension".into());
    }
    if p.wbar.len() != p.param_dim() {
        out.push(format!(
            "wbar has length {}, expected {}",
            p.wbar.len(),
            p.param_dim()
        ));
    }
    let finite = p
        .a
        .iter()
        .chain(&p.b)
        .chain(&p.t)
        .all(|m| m.iter().all(|v| v.is_finite()));
    if !finite {
        out.push("dynamics contain non-finite entries".into());
    }
    out
}

pub fn validate_problem(p: &ControlProblem) -> ValidationReport {
    let mut checks = vec![];
    let shape = shape_problems(p);
    let shapes_ok = shape.is_empty();
    checks.push(ValidationCheck {
        name: "shapes".into(),
        pass: shapes_ok,
        detail: if shapes_ok {
            "consistent".into()
        } else {
            shape.join("; ")
        },
    });
    if !shapes_ok {
        return ValidationReport { checks };
    }
    let costs = p
        .stage_costs
        .iter()
        .enumerate()
        .map(|(k, c)| (format!("convexity h_{k}"), c))
        .chain(std::iter::once(("convexity h_N".to_string(), &p.terminal_cost)));
    for (name, c) in costs {
        let cert = c.convexity_certificate();
        checks.push(ValidationCheck {
            name,
            pass: cert.holds(),
            detail: format!(
                "min eigenvalue {:.3e}, symmetric {}, nonnegative weights {}",
                cert.min_eigenvalue, cert.symmetric, cert.weights_nonnegative
            ),
        });
    }
    for (k, omega) in p.control_sets.iter().enumerate() {
        let has_eq = omega.eqs.iter().any(|h| norm(&h.b) > 0.0);
        let radius = omega.inscribed_radius();
        let pass = !has_eq && matches!(radius, Some(r) if r > 1e-9);
        let detail = match (has_eq, radius) {
            (true, _) => "equality rows leave no interior".to_string(),
            (false, None) => "set is empty".to_string(),
            (false, Some(r)) => format!("inscribed radius {r:.3e}"),
        };
        checks.push(ValidationCheck {
            name: format!("interior of control set {k}"),
            pass,
            detail,
        });
    }
    let c_empty = p.initial_set.is_empty();
    checks.push(ValidationCheck {
        name: "initial set nonempty".into(),
        pass: !c_empty,
        detail: if c_empty { "empty" } else { "nonempty" }.into(),
    });
    ValidationReport { checks }
}

/// `M z = T w` with `z ∈ K` describes the feasible pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub m: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub k: PolyhedralSet,
    pub layout: Layout,
}

impl AssembledSystem {
    /// `Φ(w, z) = −T w + M z`.
    pub fn phi(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let mz = mat_vec(&self.m, z);
        let tw = mat_vec(&self.t, w);
        mz.iter().zip(tw).map(|(a, b)| a - b).collect()
    }
}

pub fn assemble_operators(p: &ControlProblem) -> Result<AssembledSystem> {
    let shape = shape_problems(p);
    if !shape.is_empty() {
        return Err(Error::Dimension(shape.join("; ")));
    }
    let l = p.layout();
    let mut m = DMatrix::zeros(l.rows, l.nz);
    let mut t = DMatrix::zeros(l.rows, l.nw);
    for k in 0..p.horizon {
        let r = l.row_off[k];
        let nr = p.state_dims[k + 1];
        m.view_mut((r, l.x_off[k]), (nr, p.state_dims[k]))
            .copy_from(&(-&p.a[k]));
        for i in 0..nr {
            m[(r + i, l.x_off[k + 1] + i)] = 1.0;
        }
        m.view_mut((r, l.u_off[k]), (nr, p.control_dims[k]))
            .copy_from(&(-&p.b[k]));
        t.view_mut((r, l.w_off[k]), (nr, p.param_dims[k]))
            .copy_from(&p.t[k]);
    }
    let mut kset = p.initial_set.embed(l.nz, l.x_off[0]);
    for (j, omega) in p.control_sets.iter().enumerate() {
        kset = kset.intersect(&omega.embed(l.nz, l.u_off[j]));
    }
    Ok(AssembledSystem {
        m,
        t,
        k: kset,
        layout: l,
    })
}

/// `Σ h_k(x_k, u_k, w_k) + h_N(x_N)`.
pub fn evaluate_objective(p: &ControlProblem, z: &[f64], w: &[f64]) -> f64 {
    let stages: f64 = (0..p.horizon)
        .map(|k| p.stage_costs[k].eval(&p.stage_point(k, z, w)))
        .sum();
    let xn: Vec<f64> = p.terminal_indices().into_iter().map(|i| z[i]).collect();
    stages + p.terminal_cost.eval(&xn)
}

/// Labels for the coordinates of stage cost `k`.
pub fn stage_blocks(p: &ControlProblem, k: usize) -> Vec<Block> {
    std::iter::repeat_n(Block::State, p.state_dims[k])
        .chain(std::iter::repeat_n(Block::Control, p.control_dims[k]))
        .chain(std::iter::repeat_n(Block::Param, p.param_dims[k]))
        .collect()
}
