//! Subdifferential and singular subdifferential of the optimal value
//! function at a reference parameter.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::convex::cone::{add_cone_membership, cone_residual, CONE_TOL};
use crate::convex::set::EXACT_DIM_CAP;
use crate::convex::{
    affine_image, minkowski_sum, normal_cone_at, ConeRep, ConvexExpr, ConvexSet, ImageMode,
    PolyhedralSet, SetRep, Zonotope,
};
use crate::error::{Error, Result};
use crate::linalg::{kernel_basis, mat_t_vec, mat_vec, norm, norm_inf, rank, rank_threshold};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::model::{assemble_operators, AssembledSystem, ControlProblem, Solution};
use crate::oracle::{grid_oracle, subgradient_inequality_check, CheckReport, OracleGrid};
use crate::polyhedron::LinearSystem;
use crate::solver::{kkt_verify, solve};

/// Residual (relative to `1 + ‖cand‖∞`) below which a candidate is a member.
pub const MEMBER_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensMode {
    SmoothExact,
    OuterInterval,
    OuterPolytope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeRequest {
    Smooth,
    Interval,
    Polytope,
    Auto,
}

impl std::str::FromStr for ModeRequest {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "smooth" => Ok(ModeRequest::Smooth),
            "interval" => Ok(ModeRequest::Interval),
            "polytope" => Ok(ModeRequest::Polytope),
            "auto" => Ok(ModeRequest::Auto),
            other => Err(format!(
                "unknown mode {other:?} (expected smooth, interval, polytope or auto)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub closed_range: bool,
    pub closed_range_note: String,
    pub kernel_inclusion_holds: bool,
    pub ker_t_star_basis: Vec<Vec<f64>>,
    pub ker_m_star_basis: Vec<Vec<f64>>,
    /// Whether each `T_k` is onto.
    pub surjectivity_shortcut: Vec<bool>,
    /// A vector of ker Tᵀ outside ker Mᵀ, when the inclusion fails.
    pub failing_vector: Option<Vec<f64>>,
}

/// Checks `ker Tᵀ ⊂ ker Mᵀ`.
pub fn check_regularity(sys: &AssembledSystem) -> RegularityReport {
    let mt = sys.m.transpose();
    let tt = sys.t.transpose();
    let ker_t = kernel_basis(&tt);
    let ker_m = kernel_basis(&mt);
    let tau = rank_threshold(&sys.m).max(f64::MIN_POSITIVE);
    let failing = ker_t
        .iter()
        .find(|v| norm(&mat_vec(&mt, v)) > tau)
        .cloned();
    let l = &sys.layout;
    let surj = (0..l.row_off.len())
        .map(|k| {
            let r0 = l.row_off[k];
            let r1 = if k + 1 < l.row_off.len() {
                l.row_off[k + 1]
            } else {
                l.rows
            };
            let c0 = l.w_off[k];
            let c1 = if k + 1 < l.w_off.len() { l.w_off[k + 1] } else { l.nw };
            let block = sys.t.view((r0, c0), (r1 - r0, c1 - c0)).into_owned();
            r1 == r0 || rank(&block) == r1 - r0
        })
        .collect();
    RegularityReport {
        closed_range: true,
        closed_range_note: "automatic in finite dimensions".into(),
        kernel_inclusion_holds: failing.is_none(),
        ker_t_star_basis: ker_t,
        ker_m_star_basis: ker_m,
        surjectivity_shortcut: surj,
        failing_vector: failing,
    }
}

fn require_regular(sys: &AssembledSystem) -> Result<RegularityReport> {
    let reg = check_regularity(sys);
    match &reg.failing_vector {
        Some(v) => Err(Error::Regularity { vector: v.clone() }),
        None => Ok(reg),
    }
}

/// Costates and multipliers of the smooth case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointChain {
    /// `x̃*_1, …, x̃*_N`.
    pub xtilde: Vec<Vec<f64>>,
    pub x0star: Vec<f64>,
    pub ustar: Vec<Vec<f64>>,
    pub wstar: Vec<Vec<f64>>,
}

/// Set-valued counterpart of [`AdjointChain`] for the outer estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSets {
    pub xtilde: Vec<SetRep>,
    /// Range of `x₀*` implied by the costate sets alone.
    pub x0star_range: SetRep,
    /// That range intersected with `N(x̄₀; C)`.
    pub x0star: SetRep,
    pub ustar_range: Vec<SetRep>,
    pub ustar: Vec<SetRep>,
    pub wstar: Vec<SetRep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub mode: SensMode,
    pub wbar: Vec<f64>,
    pub value: f64,
    pub z: Vec<f64>,
    pub regularity: RegularityReport,
    pub subdiff_v: SetRep,
    pub singular_subdiff_v: SetRep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<AdjointChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_sets: Option<ChainSets>,
    pub cone_checks: Vec<ConeCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_check: Option<CheckReport>,
    /// Polytope mode was requested but the interval estimate is reported.
    #[serde(default)]
    pub fallback: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Everything the formulas need at `(z̄, w̄)`.
struct Anchor<'a> {
    p: &'a ControlProblem,
    sys: AssembledSystem,
    zbar: Vec<f64>,
    wbar: Vec<f64>,
    value: f64,
    /// `∂f(z̄, w̄)` over the stacked `(z, w)`.
    subgradients: Zonotope,
}

impl<'a> Anchor<'a> {
    fn new(p: &'a ControlProblem, wbar: &[f64], sol: &Solution) -> Result<Self> {
        let sys = assemble_operators(p)?;
        if sol.z.len() != sys.layout.nz || wbar.len() != sys.layout.nw {
            return Err(Error::Dimension("solution or parameter has the wrong size".into()));
        }
        let zw: Vec<f64> = sol.z.iter().chain(wbar).cloned().collect();
        let subgradients = p.objective_expr().subgradients(&zw);
        Ok(Anchor {
            p,
            sys,
            zbar: sol.z.clone(),
            wbar: wbar.to_vec(),
            value: sol.objective,
            subgradients,
        })
    }

    fn x_range(&self, k: usize) -> std::ops::Range<usize> {
        let o = self.sys.layout.x_off[k];
        o..o + self.p.state_dims[k]
    }

    fn u_range(&self, k: usize) -> std::ops::Range<usize> {
        let o = self.sys.layout.u_off[k];
        o..o + self.p.control_dims[k]
    }

    fn w_range(&self, k: usize) -> std::ops::Range<usize> {
        let o = self.sys.layout.nz + self.sys.layout.w_off[k];
        o..o + self.p.param_dims[k]
    }

    fn x0(&self) -> Vec<f64> {
        self.zbar[self.x_range(0)].to_vec()
    }

    fn u(&self, k: usize) -> Vec<f64> {
        self.zbar[self.u_range(k)].to_vec()
    }

    fn initial_cone(&self) -> Result<ConeRep> {
        normal_cone_at(&self.p.initial_set, &self.x0())
    }

    fn control_cone(&self, k: usize) -> Result<ConeRep> {
        normal_cone_at(&self.p.control_sets[k], &self.u(k))
    }

    /// Partial subdifferential over a block of coordinates.
    fn partial(&self, range: std::ops::Range<usize>) -> SetRep {
        let z = self.subgradients.project(range);
        z.to_setrep().unwrap_or_else(|_| {
            let (lo, hi) = z.bounding_box();
            SetRep::Box { lo, hi }
        })
    }

    fn kinked_atoms(&self) -> Vec<String> {
        let mut out = vec![];
        for k in 0..self.p.horizon {
            let e = &self.p.stage_costs[k];
            let pt = self.p.stage_point(k, &self.zbar, &self.wbar);
            for i in e.kinks(&pt) {
                out.push(format!("h_{k} atom {i}"));
            }
        }
        let xn: Vec<f64> = self.p.terminal_indices().into_iter().map(|i| self.zbar[i]).collect();
        for i in self.p.terminal_cost.kinks(&xn) {
            out.push(format!("h_N atom {i}"));
        }
        out
    }
}

fn check_optimal(p: &ControlProblem, wbar: &[f64], sol: &Solution) -> Result<()> {
    if kkt_verify(p, wbar, &sol.z)?.is_none() {
        return Err(Error::NotSolved(
            "the supplied point has no optimality certificate".into(),
        ));
    }
    Ok(())
}

fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

fn smooth_chain(a: &Anchor) -> AdjointChain {
    let p = a.p;
    let n = p.horizon;
    let g = &a.subgradients.center;
    let mut xt: Vec<Vec<f64>> = vec![vec![]; n + 1];
    xt[n] = g[a.x_range(n)].to_vec();
    for k in (1..n).rev() {
        xt[k] = add_vec(&g[a.x_range(k)], &mat_t_vec(&p.a[k], &xt[k + 1]));
    }
    let x0star = sub_vec(&neg(&g[a.x_range(0)]), &mat_t_vec(&p.a[0], &xt[1]));
    let ustar = (0..n)
        .map(|k| sub_vec(&neg(&g[a.u_range(k)]), &mat_t_vec(&p.b[k], &xt[k + 1])))
        .collect();
    let wstar = (0..n)
        .map(|k| add_vec(&g[a.w_range(k)], &mat_t_vec(&p.t[k], &xt[k + 1])))
        .collect();
    AdjointChain {
        xtilde: xt.into_iter().skip(1).collect(),
        x0star,
        ustar,
        wstar,
    }
}

fn cone_check(name: String, cone: &ConeRep, v: &[f64]) -> ConeCheck {
    let residual = cone_residual(cone, v);
    ConeCheck {
        name,
        pass: residual <= CONE_TOL * (1.0 + norm_inf(v)),
        residual,
    }
}

/// Exact `∂V(w̄)` when every cost is differentiable at the solution.
pub fn subdiff_v_smooth(p: &ControlProblem, wbar: &[f64], sol: &Solution) -> Result<SensitivityReport> {
    let a = Anchor::new(p, wbar, sol)?;
    let regularity = require_regular(&a.sys)?;
    if !a.subgradients.is_singleton() {
        return Err(Error::NotSmooth(a.kinked_atoms().join(", ")));
    }
    check_optimal(p, wbar, sol)?;
    let chain = smooth_chain(&a);
    let mut checks = vec![cone_check("x0* in N(x0; C)".into(), &a.initial_cone()?, &chain.x0star)];
    for k in 0..p.horizon {
        checks.push(cone_check(
            format!("u{k}* in N(u{k}; Omega_{k})"),
            &a.control_cone(k)?,
            &chain.ustar[k],
        ));
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    if !failed.is_empty() {
        return Err(Error::ConeCheckFailed { failed });
    }
    let w: Vec<f64> = chain.wstar.concat();
    Ok(SensitivityReport {
        mode: SensMode::SmoothExact,
        wbar: wbar.to_vec(),
        value: a.value,
        z: a.zbar.clone(),
        regularity,
        subdiff_v: SetRep::singleton(w),
        singular_subdiff_v: singular_subdiff_v(p, wbar, sol)?,
        chain: Some(chain),
        chain_sets: None,
        cone_checks: checks,
        oracle_check: None,
        fallback: false,
        warnings: vec![],
    })
}

/// Minkowski sum, or the sum of bounding boxes when the exact sum is refused.
fn sum_or_box(a: &SetRep, b: &SetRep) -> SetRep {
    minkowski_sum(a, b).unwrap_or_else(|_| {
        let (la, ha) = a.bounding_box().expect("nonempty");
        let (lb, hb) = b.bounding_box().expect("nonempty");
        SetRep::Box {
            lo: add_vec(&la, &lb),
            hi: add_vec(&ha, &hb),
        }
    })
}

fn image_box(m: &DMatrix<f64>, s: &SetRep) -> SetRep {
    affine_image(m, s, ImageMode::OuterBox).expect("shapes agree")
}

fn negated(s: &SetRep) -> SetRep {
    let d = s.dim();
    let m = -DMatrix::<f64>::identity(d, d);
    affine_image(&m, s, ImageMode::Exact).unwrap_or_else(|_| image_box(&m, s))
}

/// Bounding box of `range ∩ cone`, with `range` inflated by a small slack.
fn intersect_with_cone(range: &SetRep, cone: &ConeRep) -> SetRep {
    let d = range.dim();
    if let SetRep::Empty { .. } = range {
        return SetRep::Empty { dim: d };
    }
    let slack = 1e-9
        * (1.0
            + range
                .bounding_box()
                .map(|(l, h)| norm_inf(&l).max(norm_inf(&h)))
                .unwrap_or(0.0));
    if cone.is_trivial() {
        let inflated = match range.bounding_box() {
            Some((l, h)) => l.iter().all(|v| *v <= slack) && h.iter().all(|v| *v >= -slack),
            None => false,
        };
        if !inflated || range.distance(&vec![0.0; d]) > slack {
            return SetRep::Empty { dim: d };
        }
        return SetRep::zero(d);
    }
    let build = |lp: &mut LinearProgram| -> Vec<usize> {
        let v = lp.add_free_vars(d);
        let r = lp.add_free_vars(d);
        range.constrain(lp, &r);
        for i in 0..d {
            let e = lp.add_var(0.0, -slack, slack);
            lp.add_row(&[(v[i], 1.0), (r[i], -1.0), (e, -1.0)], Relation::Eq, 0.0);
        }
        add_cone_membership(lp, cone, &v);
        v
    };
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for i in 0..d {
        for (sign, out) in [(1.0, &mut hi), (-1.0, &mut lo)] {
            let mut lp = LinearProgram::maximize();
            let v = build(&mut lp);
            let t = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
            lp.add_row(&[(t, 1.0), (v[i], -sign)], Relation::Eq, 0.0);
            out[i] = match lp.solve() {
                LpOutcome::Optimal { objective, .. } => sign * objective,
                LpOutcome::Unbounded => sign * f64::INFINITY,
                LpOutcome::Infeasible => return SetRep::Empty { dim: d },
            };
        }
    }
    SetRep::Box { lo, hi }.canonical()
}

/// Stage-by-stage propagation with box enclosures and a one-shot
/// intersection with the normal cones.
fn interval_estimate(a: &Anchor) -> Result<(SetRep, ChainSets, Vec<ConeCheck>)> {
    let p = a.p;
    let n = p.horizon;
    let mut xt: Vec<SetRep> = vec![SetRep::zero(0); n + 1];
    xt[n] = a.partial(a.x_range(n));
    for k in (1..n).rev() {
        let carried = image_box(&p.a[k].transpose(), &xt[k + 1]);
        xt[k] = sum_or_box(&a.partial(a.x_range(k)), &carried);
    }
    let x0_range = sum_or_box(
        &negated(&a.partial(a.x_range(0))),
        &image_box(&(-p.a[0].transpose()), &xt[1]),
    );
    let x0 = intersect_with_cone(&x0_range, &a.initial_cone()?);
    let mut checks = vec![ConeCheck {
        name: "x0* range meets N(x0; C)".into(),
        pass: !x0.is_empty(),
        residual: if x0.is_empty() { f64::INFINITY } else { 0.0 },
    }];
    let mut u_ranges = vec![];
    let mut us = vec![];
    let mut ws = vec![];
    for k in 0..n {
        let ur = sum_or_box(
            &negated(&a.partial(a.u_range(k))),
            &image_box(&(-p.b[k].transpose()), &xt[k + 1]),
        );
        let u = intersect_with_cone(&ur, &a.control_cone(k)?);
        checks.push(ConeCheck {
            name: format!("u{k}* range meets N(u{k}; Omega_{k})"),
            pass: !u.is_empty(),
            residual: if u.is_empty() { f64::INFINITY } else { 0.0 },
        });
        u_ranges.push(ur);
        us.push(u);
        ws.push(sum_or_box(
            &a.partial(a.w_range(k)),
            &image_box(&p.t[k].transpose(), &xt[k + 1]),
        ));
    }
    let nw = a.sys.layout.nw;
    let estimate = if checks.iter().any(|c| !c.pass) {
        SetRep::Empty { dim: nw }
    } else {
        let mut lo = vec![];
        let mut hi = vec![];
        for w in &ws {
            let (l, h) = w.bounding_box().expect("nonempty");
            lo.extend(l);
            hi.extend(h);
        }
        SetRep::Box { lo, hi }.canonical()
    };
    let sets = ChainSets {
        xtilde: xt.into_iter().skip(1).collect(),
        x0star_range: x0_range,
        x0star: x0,
        ustar_range: u_ranges,
        ustar: us,
        wstar: ws,
    };
    Ok((estimate, sets, checks))
}

/// Variables `[w* | x̃* | σ | λ | μ]` and the equalities linking them:
/// `Mᵀx̃* = c_z + G_z σ + Σ λ g + Σ μ l` and `w* = c_w + G_w σ + Tᵀx̃*`.
struct InclusionSystem {
    n: usize,
    nw: usize,
    eqs: Vec<(Vec<f64>, f64)>,
    bounds: Vec<(usize, f64, f64)>,
}

impl InclusionSystem {
    fn build(sys: &AssembledSystem, sub: &Zonotope, cone: &ConeRep) -> Self {
        let l = &sys.layout;
        let (nz, nw, rows) = (l.nz, l.nw, l.rows);
        let ns = sub.generators.len();
        let ng = cone.generators.len();
        let nl = cone.lineality.len();
        let (ox, os, og, ol) = (nw, nw + rows, nw + rows + ns, nw + rows + ns + ng);
        let n = ol + nl;
        let mut eqs = Vec::with_capacity(nz + nw);
        for j in 0..nz {
            let mut row = vec![0.0; n];
            for i in 0..rows {
                row[ox + i] = sys.m[(i, j)];
            }
            for (s, g) in sub.generators.iter().enumerate() {
                row[os + s] = -g[j];
            }
            for (s, g) in cone.generators.iter().enumerate() {
                row[og + s] = -g[j];
            }
            for (s, g) in cone.lineality.iter().enumerate() {
                row[ol + s] = -g[j];
            }
            eqs.push((row, sub.center[j]));
        }
        for j in 0..nw {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            for i in 0..rows {
                row[ox + i] = -sys.t[(i, j)];
            }
            for (s, g) in sub.generators.iter().enumerate() {
                row[os + s] = -g[nz + j];
            }
            eqs.push((row, sub.center[nz + j]));
        }
        let mut bounds: Vec<(usize, f64, f64)> = (0..ns).map(|s| (os + s, -1.0, 1.0)).collect();
        bounds.extend((0..ng).map(|s| (og + s, 0.0, f64::INFINITY)));
        InclusionSystem {
            n,
            nw,
            eqs,
            bounds,
        }
    }

    fn linear_system(&self) -> LinearSystem {
        let mut ls = LinearSystem::new(self.n);
        for (r, b) in &self.eqs {
            ls.add_eq(r.clone(), *b);
        }
        for &(j, lo, hi) in &self.bounds {
            if hi.is_finite() {
                let mut r = vec![0.0; self.n];
                r[j] = 1.0;
                ls.add_ineq(r, hi);
            }
            if lo.is_finite() {
                let mut r = vec![0.0; self.n];
                r[j] = -1.0;
                ls.add_ineq(r, -lo);
            }
        }
        ls
    }

    /// LP with every equality softened; returns the variable handles.
    fn soft_lp(&self, lp: &mut LinearProgram) -> Vec<usize> {
        let mut lo = vec![f64::NEG_INFINITY; self.n];
        let mut hi = vec![f64::INFINITY; self.n];
        for &(j, l, h) in &self.bounds {
            lo[j] = l;
            hi[j] = h;
        }
        let vars: Vec<usize> = (0..self.n).map(|j| lp.add_var(0.0, lo[j], hi[j])).collect();
        for (r, b) in &self.eqs {
            let row: Vec<(usize, f64)> = r
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (vars[j], *v))
                .collect();
            lp.add_soft_eq(&row, *b, 1.0);
        }
        vars
    }
}

/// Bounding boxes of the costate blocks over the lifted system.
fn costate_boxes(a: &Anchor, inc: &InclusionSystem) -> Vec<SetRep> {
    let p = a.p;
    let mut out = vec![];
    for k in 0..p.horizon {
        let r0 = a.sys.layout.row_off[k];
        let d = p.state_dims[k + 1];
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for i in 0..d {
            for (sign, slot) in [(1.0, &mut hi[i]), (-1.0, &mut lo[i])] {
                let mut lp = LinearProgram::minimize();
                let vars = inc.soft_lp(&mut lp);
                // Small weight: keeps residuals at their minimum first.
                let t = lp.add_var(-1e-6 * sign, f64::NEG_INFINITY, f64::INFINITY);
                lp.add_row(&[(t, 1.0), (vars[inc.nw + r0 + i], -1.0)], Relation::Eq, 0.0);
                *slot = match lp.solve() {
                    LpOutcome::Optimal { x, .. } => x[t],
                    _ => sign * f64::INFINITY,
                };
            }
        }
        out.push(SetRep::Box { lo, hi }.canonical());
    }
    out
}

fn polytope_estimate(a: &Anchor) -> Result<(SetRep, Vec<SetRep>)> {
    let nw = a.sys.layout.nw;
    if nw > EXACT_DIM_CAP {
        return Err(Error::DimCapExceeded(format!(
            "parameter dimension {nw} exceeds {EXACT_DIM_CAP}"
        )));
    }
    let cone = normal_cone_at(&a.sys.k, &a.zbar)?;
    let inc = InclusionSystem::build(&a.sys, &a.subgradients, &cone);
    let projected: PolyhedralSet = inc.linear_system().project(nw)?;
    let set = if projected.is_empty() {
        SetRep::Empty { dim: nw }
    } else {
        let h = SetRep::HPoly(projected);
        if h.is_bounded() {
            match h.to_vpoly() {
                Ok(v) => v.simplify(),
                Err(e) => {
                    warn!("keeping the H-representation: {e}");
                    h
                }
            }
        } else {
            h
        }
    };
    Ok((set, costate_boxes(a, &inc)))
}

/// Outer estimate of `∂V(w̄)` in the nonsmooth case.
pub fn subdiff_v_outer(
    p: &ControlProblem,
    wbar: &[f64],
    sol: &Solution,
    mode: SensMode,
) -> Result<SensitivityReport> {
    let a = Anchor::new(p, wbar, sol)?;
    let regularity = require_regular(&a.sys)?;
    check_optimal(p, wbar, sol)?;
    let singular = singular_subdiff_v(p, wbar, sol)?;
    let (interval, sets, checks) = interval_estimate(&a)?;
    let mut report = SensitivityReport {
        mode: SensMode::OuterInterval,
        wbar: wbar.to_vec(),
        value: a.value,
        z: a.zbar.clone(),
        regularity,
        subdiff_v: interval,
        singular_subdiff_v: singular,
        chain: None,
        chain_sets: Some(sets),
        cone_checks: checks,
        oracle_check: None,
        fallback: false,
        warnings: vec![],
    };
    match mode {
        SensMode::OuterInterval => {}
        SensMode::OuterPolytope | SensMode::SmoothExact => match polytope_estimate(&a) {
            Ok((set, boxes)) => {
                report.mode = SensMode::OuterPolytope;
                report.subdiff_v = set;
                report.cone_checks.push(ConeCheck {
                    name: "inclusion system feasible".into(),
                    pass: !report.subdiff_v.is_empty(),
                    residual: if report.subdiff_v.is_empty() { f64::INFINITY } else { 0.0 },
                });
                if let Some(cs) = report.chain_sets.as_mut() {
                    cs.xtilde = boxes;
                }
            }
            Err(e @ Error::DimCapExceeded(_)) => {
                let msg = format!("polytope estimate unavailable ({e}); reporting the interval box");
                warn!("{msg}");
                report.fallback = true;
                report.warnings.push(msg);
            }
            Err(e) => return Err(e),
        },
    }
    Ok(report)
}

/// `∂^∞V(w̄)`: the backward recursion started from zero.
pub fn singular_subdiff_v(p: &ControlProblem, wbar: &[f64], sol: &Solution) -> Result<SetRep> {
    let sys = assemble_operators(p)?;
    require_regular(&sys)?;
    if sol.z.len() != sys.layout.nz || wbar.len() != sys.layout.nw {
        return Err(Error::Dimension("solution or parameter has the wrong size".into()));
    }
    let n = p.horizon;
    let mut xt = vec![vec![0.0; p.state_dims[n]]];
    for k in (1..n).rev() {
        let next = mat_t_vec(&p.a[k], xt.last().unwrap());
        xt.push(next);
    }
    xt.reverse();
    // xt[k] is x̃_{k+1}.
    let w: Vec<f64> = p.t.iter().zip(&xt).flat_map(|(t, x)| mat_t_vec(t, x)).collect();
    assert!(
        w.iter().chain(xt.iter().flatten()).all(|v| *v == 0.0),
        "zero recursion produced a nonzero costate"
    );
    Ok(SetRep::zero(sys.layout.nw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Membership {
    Member,
    NotMember,
    Undecided,
}

/// Decides `cand ∈ ∂V(w̄)` on the assembled problem: is there `x*` with
/// `Mᵀx* ∈ ∂_z f + N(z̄; K)` and `cand ∈ ∂_w f + Tᵀx*`, the two
/// subgradients taken jointly from `∂f(z̄, w̄)`?
pub fn membership_general(
    sys: &AssembledSystem,
    f: &ConvexExpr,
    zbar: &[f64],
    wbar: &[f64],
    cand: &[f64],
) -> Result<Membership> {
    require_regular(sys)?;
    let l = &sys.layout;
    if f.dim != l.nz + l.nw || zbar.len() != l.nz || wbar.len() != l.nw || cand.len() != l.nw {
        return Err(Error::Dimension("membership inputs disagree in size".into()));
    }
    let zw: Vec<f64> = zbar.iter().chain(wbar).cloned().collect();
    let sub = f.subgradients(&zw);
    let cone = normal_cone_at(&sys.k, zbar)?;
    let inc = InclusionSystem::build(sys, &sub, &cone);
    let mut lp = LinearProgram::minimize();
    let vars = inc.soft_lp(&mut lp);
    for (j, c) in cand.iter().enumerate() {
        lp.add_row(&[(vars[j], 1.0)], Relation::Eq, *c);
    }
    Ok(match lp.solve() {
        LpOutcome::Optimal { objective, .. } => {
            if objective <= MEMBER_TOL * (1.0 + norm_inf(cand)) {
                Membership::Member
            } else {
                Membership::NotMember
            }
        }
        LpOutcome::Infeasible => Membership::NotMember,
        LpOutcome::Unbounded => Membership::Undecided,
    })
}

/// Settings for [`analyze`].
#[derive(Debug, Clone, PartialEq)]
pub struct SensOptions {
    pub mode: ModeRequest,
    pub grid_radius: f64,
    /// Points per axis of the oracle grid; 0 skips the oracle check.
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for SensOptions {
    fn default() -> Self {
        SensOptions {
            mode: ModeRequest::Auto,
            grid_radius: 0.1,
            grid_points: 5,
            tol: crate::oracle::SUBGRADIENT_TOL,
        }
    }
}

/// Whether every cost is differentiable at `(z̄, w̄)`.
pub fn is_smooth_at(p: &ControlProblem, wbar: &[f64], sol: &Solution) -> bool {
    let zw: Vec<f64> = sol.z.iter().chain(wbar).cloned().collect();
    p.objective_expr().subgradients(&zw).is_singleton()
}

/// Subgradient-inequality check of every vertex of `set` on a grid.
pub fn oracle_check_set(
    p: &ControlProblem,
    wbar: &[f64],
    vbar: f64,
    set: &SetRep,
    radius: f64,
    points: usize,
    tol: f64,
) -> Result<Option<CheckReport>> {
    let (vertices, rays) = match set.vertices() {
        Ok(v) => v,
        Err(e) => {
            warn!("oracle check skipped: {e}");
            return Ok(None);
        }
    };
    if !rays.is_empty() || vertices.is_empty() {
        return Ok(None);
    }
    let grid = grid_oracle(p, OracleGrid::uniform(wbar.to_vec(), radius, points)?)?;
    let mut worst: Option<CheckReport> = None;
    for v in &vertices {
        let r = subgradient_inequality_check(wbar, vbar, v, &grid, tol)?;
        if worst.as_ref().is_none_or(|w| r.worst_margin < w.worst_margin) {
            worst = Some(r);
        }
    }
    Ok(worst)
}

/// Solves at `w̄` and reports `∂V(w̄)` and `∂^∞V(w̄)` in the requested mode.
pub fn analyze(p: &ControlProblem, wbar: &[f64], opts: &SensOptions) -> Result<SensitivityReport> {
    let r = solve(p, wbar)?;
    let sol = r.optimal_solution()?.clone();
    let mut report = match opts.mode {
        ModeRequest::Smooth => subdiff_v_smooth(p, wbar, &sol)?,
        ModeRequest::Interval => subdiff_v_outer(p, wbar, &sol, SensMode::OuterInterval)?,
        ModeRequest::Polytope => subdiff_v_outer(p, wbar, &sol, SensMode::OuterPolytope)?,
        ModeRequest::Auto => {
            if is_smooth_at(p, wbar, &sol) {
                subdiff_v_smooth(p, wbar, &sol)?
            } else {
                subdiff_v_outer(p, wbar, &sol, SensMode::OuterPolytope)?
            }
        }
    };
    if opts.grid_points > 0 {
        report.oracle_check = oracle_check_set(
            p,
            wbar,
            report.value,
            &report.subdiff_v,
            opts.grid_radius,
            opts.grid_points,
            opts.tol,
        )?;
    }
    Ok(report)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: Vec<f64>,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub value: f64,
    /// The unique gradient of `V`, when the costs are smooth at the solution.
    pub wstar: Option<Vec<f64>>,
}

/// `V` and, where available, `∇V` on a grid over a 1- or 2-dimensional
/// parameter. A zero radius gives a single row.
pub fn sweep(p: &ControlProblem, center: &[f64], radius: f64, points: usize) -> Result<Vec<SweepRow>> {
    let d = p.param_dim();
    if d == 0 || d > 2 {
        return Err(Error::Invalid(format!(
            "sweeps need a 1- or 2-dimensional parameter, got {d}"
        )));
    }
    let points = if radius == 0.0 { 1 } else { points };
    let grid = OracleGrid::uniform(center.to_vec(), radius, points)?;
    let one = |i: usize| -> SweepRow {
        let w = grid.coordinates(i);
        let (value, wstar) = match solve(p, &w) {
            Ok(r) => match r.optimal_solution() {
                Ok(sol) => {
                    let g = subdiff_v_smooth(p, &w, sol)
                        .ok()
                        .and_then(|rep| rep.chain.map(|c| c.wstar.concat()));
                    (r.value, g)
                }
                Err(_) => (r.value, None),
            },
            Err(e) => {
                warn!("sweep point {w:?} failed: {e}");
                (f64::NAN, None)
            }
        };
        SweepRow { w, value, wstar }
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        (0..grid.len()).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows = (0..grid.len()).map(one).collect();
    Ok(rows)
}

/// CSV with columns `w_0,…,V,dV_0,…`; gradient cells are empty where `V`
/// is not differentiable.
pub fn sweep_csv(rows: &[SweepRow], dim: usize) -> String {
    use crate::oracle::fmt_num;
    let mut head: Vec<String> = (0..dim).map(|i| format!("w_{i}")).collect();
    head.push("V".into());
    head.extend((0..dim).map(|i| format!("dV_{i}")));
    let mut out = head.join(",");
    out.push('\n');
    for r in rows {
        let mut cells: Vec<String> = r.w.iter().map(|v| fmt_num(*v)).collect();
        cells.push(fmt_num(r.value));
        match &r.wstar {
            Some(g) => cells.extend(g.iter().map(|v| fmt_num(*v))),
            None => cells.extend((0..dim).map(|_| String::new())),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
