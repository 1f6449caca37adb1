//! JSON problem files.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::{AbsAtom, ConvexExpr, Halfspace, Hyperplane, PolyhedralSet};
use crate::error::{Error, Result};
use crate::model::{stage_blocks, ControlProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub horizon: usize,
    pub dims: Dims,
    pub dynamics: Vec<DynamicsFile>,
    pub costs: Vec<CostFile>,
    pub terminal_cost: CostFile,
    #[serde(default)]
    pub initial_set: SetFile,
    pub control_sets: Vec<SetFile>,
    #[serde(default)]
    pub wbar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub state: Vec<usize>,
    pub control: Vec<usize>,
    pub param: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abs_atoms: Vec<AbsAtom>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticFile {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q_mat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetFile {
    #[serde(default)]
    pub ineq: Vec<Halfspace>,
    #[serde(default)]
    pub eq: Vec<Hyperplane>,
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    // Zero-width blocks may be written as [] or as rows of [].
    if ncols == 0 || nrows == 0 {
        if rows.iter().any(|r| !r.is_empty()) || (rows.len() != nrows && !rows.is_empty()) {
            return Err(Error::Malformed(format!(
                "{name} should be {nrows}x{ncols}"
            )));
        }
        return Ok(DMatrix::zeros(nrows, ncols));
    }
    if rows.len() != nrows {
        return Err(Error::Malformed(format!(
            "{name} has {} rows, expected {nrows}",
            rows.len()
        )));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Malformed(format!(
            "{name} row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn cost(name: &str, c: &CostFile, dim: usize) -> Result<ConvexExpr> {
    let (q_mat, q, constant) = match &c.quadratic {
        None => (DMatrix::zeros(dim, dim), vec![0.0; dim], 0.0),
        Some(qf) => {
            let q_mat = match &qf.q_mat {
                Some(rows) => matrix(&format!("{name}.Q"), rows, dim, dim)?,
                None => DMatrix::zeros(dim, dim),
            };
            let q = qf.q.clone().unwrap_or_else(|| vec![0.0; dim]);
            if q.len() != dim {
                return Err(Error::Malformed(format!(
                    "{name}.q has length {}, expected {dim}",
                    q.len()
                )));
            }
            (q_mat, q, qf.c)
        }
    };
    for (i, at) in c.abs_atoms.iter().enumerate() {
        if at.a.len() != dim {
            return Err(Error::Malformed(format!(
                "{name}.abs_atoms[{i}].a has length {}, expected {dim}",
                at.a.len()
            )));
        }
    }
    ConvexExpr::new(q_mat, q, constant, c.abs_atoms.clone())
        .map_err(|e| Error::NotConvex(format!("{name}: {e}")))
}

fn set(name: &str, s: &SetFile, dim: usize) -> Result<PolyhedralSet> {
    for (i, h) in s.ineq.iter().enumerate() {
        if h.a.len() != dim {
            return Err(Error::Malformed(format!(
                "{name}.ineq[{i}].a has length {}, expected {dim}",
                h.a.len()
            )));
        }
    }
    for (i, h) in s.eq.iter().enumerate() {
        if h.b.len() != dim {
            return Err(Error::Malformed(format!(
                "{name}.eq[{i}].b has length {}, expected {dim}",
                h.b.len()
            )));
        }
    }
    Ok(PolyhedralSet {
        dim,
        ineqs: s.ineq.clone(),
        eqs: s.eq.clone(),
    })
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<ControlProblem> {
        let n = self.horizon;
        if n == 0 {
            return Err(Error::Malformed("horizon must be positive".into()));
        }
        let d = &self.dims;
        let counts = [
            ("dims.state", d.state.len(), n + 1),
            ("dims.control", d.control.len(), n),
            ("dims.param", d.param.len(), n),
            ("dynamics", self.dynamics.len(), n),
            ("costs", self.costs.len(), n),
            ("control_sets", self.control_sets.len(), n),
        ];
        for (name, got, want) in counts {
            if got != want {
                return Err(Error::Malformed(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        let mut a = vec![];
        let mut b = vec![];
        let mut t = vec![];
        for (k, dy) in self.dynamics.iter().enumerate() {
            let r = d.state[k + 1];
            a.push(matrix(&format!("dynamics[{k}].A"), &dy.a, r, d.state[k])?);
            b.push(matrix(&format!("dynamics[{k}].B"), &dy.b, r, d.control[k])?);
            t.push(matrix(&format!("dynamics[{k}].T"), &dy.t, r, d.param[k])?);
        }
        let mut stage_costs = vec![];
        for (k, c) in self.costs.iter().enumerate() {
            let dim = d.state[k] + d.control[k] + d.param[k];
            stage_costs.push(cost(&format!("costs[{k}]"), c, dim)?);
        }
        let terminal_cost = cost("terminal_cost", &self.terminal_cost, d.state[n])?;
        let initial_set = set("initial_set", &self.initial_set, d.state[0])?;
        let control_sets = self
            .control_sets
            .iter()
            .enumerate()
            .map(|(k, s)| set(&format!("control_sets[{k}]"), s, d.control[k]))
            .collect::<Result<Vec<_>>>()?;
        let pdim: usize = d.param.iter().sum();
        let wbar = self.wbar.unwrap_or_else(|| vec![0.0; pdim]);
        if wbar.len() != pdim {
            return Err(Error::Malformed(format!(
                "wbar has length {}, expected {pdim}",
                wbar.len()
            )));
        }
        let mut p = ControlProblem {
            horizon: n,
            state_dims: d.state.clone(),
            control_dims: d.control.clone(),
            param_dims: d.param.clone(),
            a,
            b,
            t,
            stage_costs,
            terminal_cost,
            initial_set,
            control_sets,
            wbar,
        };
        for k in 0..n {
            let blocks = stage_blocks(&p, k);
            p.stage_costs[k].blocks = blocks;
        }
        Ok(p)
    }

    pub fn from_problem(p: &ControlProblem) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().cloned().collect())
                .collect()
        };
        let cost = |e: &ConvexExpr| CostFile {
            quadratic: Some(QuadraticFile {
                q_mat: Some(rows(&e.quad)),
                q: Some(e.lin.clone()),
                c: e.constant,
            }),
            abs_atoms: e.atoms.clone(),
        };
        let set = |s: &PolyhedralSet| SetFile {
            ineq: s.ineqs.clone(),
            eq: s.eqs.clone(),
        };
        ProblemFile {
            horizon: p.horizon,
            dims: Dims {
                state: p.state_dims.clone(),
                control: p.control_dims.clone(),
                param: p.param_dims.clone(),
            },
            dynamics: (0..p.horizon)
                .map(|k| DynamicsFile {
                    a: rows(&p.a[k]),
                    b: rows(&p.b[k]),
                    t: rows(&p.t[k]),
                })
                .collect(),
            costs: p.stage_costs.iter().map(cost).collect(),
            terminal_cost: cost(&p.terminal_cost),
            initial_set: set(&p.initial_set),
            control_sets: p.control_sets.iter().map(set).collect(),
            wbar: Some(p.wbar.clone()),
        }
    }
}

/// Parses a problem document; syntax errors carry line and column.
pub fn parse_problem(text: &str) -> Result<ControlProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| {
        Error::Malformed(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    file.into_problem()
}

pub fn load_problem(path: &std::path::Path) -> Result<ControlProblem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

pub fn problem_to_json(p: &ControlProblem) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_problem(p)).expect("serializable")
}

/// The two reference problems shipped with the crate.
pub mod fixtures {
    pub const P1: &str = include_str!("../examples/p1.json");
    pub const P2: &str = include_str!("../examples/p2.json");

    pub fn p1() -> crate::model::ControlProblem {
        super::parse_problem(P1).expect("bundled problem")
    }

    pub fn p2() -> crate::model::ControlProblem {
        super::parse_problem(P2).expect("bundled problem")
    }
}
