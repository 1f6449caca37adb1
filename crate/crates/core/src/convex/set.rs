//! Set representations for subdifferentials, normal cones and estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::polyhedral::{Halfspace, Hyperplane, PolyhedralSet};
use crate::error::{Error, Result};
use crate::linalg::{add, dot, mat_vec, norm_inf, sub};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::polyhedron;
use crate::qp::{QpStatus, QuadProgram};
use crate::serde_ext::ext_vec;

/// Exact polyhedral operations are limited to this ambient dimension.
pub const EXACT_DIM_CAP: usize = 10;
/// ... and to this many vertices.
pub const VERTEX_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SetRep {
    Empty {
        dim: usize,
    },
    Singleton {
        point: Vec<f64>,
    },
    Box {
        #[serde(with = "ext_vec")]
        lo: Vec<f64>,
        #[serde(with = "ext_vec")]
        hi: Vec<f64>,
    },
    #[serde(rename = "hpoly")]
    HPoly(PolyhedralSet),
    #[serde(rename = "vpoly")]
    VPoly {
        vertices: Vec<Vec<f64>>,
        #[serde(default)]
        rays: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMode {
    Exact,
    OuterBox,
}

/// Rows over the stacked variables `[y; aux]` that describe `y ∈ S`.
#[derive(Debug, Clone, Default)]
pub struct LinearDescription {
    pub aux_bounds: Vec<(f64, f64)>,
    pub eqs: Vec<(Vec<f64>, f64)>,
    pub ineqs: Vec<(Vec<f64>, f64)>,
}

/// Anything with a lifted linear description can appear in an LP.
pub trait ConvexSet {
    fn dim(&self) -> usize;
    fn linear_description(&self) -> LinearDescription;

    /// Constrains the LP variables `y` to the set; returns auxiliary vars.
    fn constrain(&self, lp: &mut LinearProgram, y: &[usize]) -> Vec<usize> {
        let desc = self.linear_description();
        let aux: Vec<usize> = desc
            .aux_bounds
            .iter()
            .map(|&(lo, hi)| lp.add_var(0.0, lo, hi))
            .collect();
        let vars: Vec<usize> = y.iter().chain(aux.iter()).cloned().collect();
        let to_row = |coef: &[f64]| -> Vec<(usize, f64)> {
            vars.iter().cloned().zip(coef.iter().cloned()).collect()
        };
        for (c, r) in &desc.eqs {
            lp.add_row(&to_row(c), Relation::Eq, *r);
        }
        for (c, r) in &desc.ineqs {
            lp.add_row(&to_row(c), Relation::Le, *r);
        }
        aux
    }
}

/// `{center + Σ σᵢ gᵢ : σ ∈ [−1, 1]}`; the shape of every subdifferential
/// of the atom grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

impl Zonotope {
    pub fn point(center: Vec<f64>) -> Self {
        Zonotope {
            center,
            generators: vec![],
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.generators.is_empty()
    }

    /// Keeps only the coordinates in `range`.
    pub fn project(&self, range: std::ops::Range<usize>) -> Zonotope {
        Zonotope {
            center: self.center[range.clone()].to_vec(),
            generators: self
                .generators
                .iter()
                .map(|g| g[range.clone()].to_vec())
                .filter(|g| g.iter().any(|v| *v != 0.0))
                .collect(),
        }
    }

    pub fn support(&self, d: &[f64]) -> f64 {
        dot(&self.center, d) + self.generators.iter().map(|g| dot(g, d).abs()).sum::<f64>()
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        for g in &self.generators {
            for i in 0..g.len() {
                lo[i] -= g[i].abs();
                hi[i] += g[i].abs();
            }
        }
        (lo, hi)
    }

    pub fn to_setrep(&self) -> Result<SetRep> {
        if self.generators.is_empty() {
            return Ok(SetRep::Singleton {
                point: self.center.clone(),
            });
        }
        let axis_aligned = self
            .generators
            .iter()
            .all(|g| g.iter().filter(|v| **v != 0.0).count() <= 1);
        if axis_aligned {
            let (lo, hi) = self.bounding_box();
            return Ok(SetRep::Box { lo, hi }.canonical());
        }
        let k = self.generators.len();
        if k > 13 || self.center.len() > EXACT_DIM_CAP {
            return Err(Error::DimCapExceeded(format!(
                "zonotope with {k} generators in dimension {}",
                self.center.len()
            )));
        }
        let mut pts = Vec::with_capacity(1 << k);
        for mask in 0..(1usize << k) {
            let mut p = self.center.clone();
            for (j, g) in self.generators.iter().enumerate() {
                let s = if mask & (1 << j) != 0 { 1.0 } else { -1.0 };
                for i in 0..p.len() {
                    p[i] += s * g[i];
                }
            }
            pts.push(p);
        }
        Ok(SetRep::VPoly {
            vertices: prune_points(pts, &[]),
            rays: vec![],
        }
        .canonical())
    }
}

impl ConvexSet for Zonotope {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn linear_description(&self) -> LinearDescription {
        let d = self.center.len();
        let k = self.generators.len();
        let eqs = (0..d)
            .map(|i| {
                let mut row = vec![0.0; d + k];
                row[i] = 1.0;
                for (j, g) in self.generators.iter().enumerate() {
                    row[d + j] = -g[i];
                }
                (row, self.center[i])
            })
            .collect();
        LinearDescription {
            aux_bounds: vec![(-1.0, 1.0); k],
            eqs,
            ineqs: vec![],
        }
    }
}

impl ConvexSet for SetRep {
    fn dim(&self) -> usize {
        SetRep::dim(self)
    }

    fn linear_description(&self) -> LinearDescription {
        let d = SetRep::dim(self);
        let unit = |i: usize, s: f64, n: usize| {
            let mut r = vec![0.0; n];
            r[i] = s;
            r
        };
        match self {
            SetRep::Empty { .. } => LinearDescription {
                ineqs: vec![(vec![0.0; d], -1.0)],
                ..Default::default()
            },
            SetRep::Singleton { point } => LinearDescription {
                eqs: (0..d).map(|i| (unit(i, 1.0, d), point[i])).collect(),
                ..Default::default()
            },
            SetRep::Box { lo, hi } => {
                let mut ineqs = vec![];
                for i in 0..d {
                    if hi[i].is_finite() {
                        ineqs.push((unit(i, 1.0, d), hi[i]));
                    }
                    if lo[i].is_finite() {
                        ineqs.push((unit(i, -1.0, d), -lo[i]));
                    }
                }
                LinearDescription {
                    ineqs,
                    ..Default::default()
                }
            }
            SetRep::HPoly(p) => LinearDescription {
                ineqs: p.ineqs.iter().map(|h| (h.a.clone(), h.alpha)).collect(),
                eqs: p.eqs.iter().map(|h| (h.b.clone(), h.beta)).collect(),
                ..Default::default()
            },
            SetRep::VPoly { vertices, rays } => {
                let nv = vertices.len();
                let n = d + nv + rays.len();
                let mut eqs: Vec<(Vec<f64>, f64)> = (0..d)
                    .map(|i| {
                        let mut row = unit(i, 1.0, n);
                        for (j, v) in vertices.iter().enumerate() {
                            row[d + j] = -v[i];
                        }
                        for (j, r) in rays.iter().enumerate() {
                            row[d + nv + j] = -r[i];
                        }
                        (row, 0.0)
                    })
                    .collect();
                let mut convex = vec![0.0; n];
                for j in 0..nv {
                    convex[d + j] = 1.0;
                }
                eqs.push((convex, 1.0));
                LinearDescription {
                    aux_bounds: vec![(0.0, f64::INFINITY); nv + rays.len()],
                    eqs,
                    ineqs: vec![],
                }
            }
        }
    }
}

impl SetRep {
    pub fn singleton(point: Vec<f64>) -> Self {
        SetRep::Singleton { point }
    }

    pub fn zero(dim: usize) -> Self {
        SetRep::Singleton {
            point: vec![0.0; dim],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        SetRep::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SetRep::Empty { dim } => *dim,
            SetRep::Singleton { point } => point.len(),
            SetRep::Box { lo, .. } => lo.len(),
            SetRep::HPoly(p) => p.dim,
            SetRep::VPoly { vertices, .. } => vertices.first().map_or(0, |v| v.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            SetRep::Empty { .. } => true,
            SetRep::Box { lo, hi } => lo.iter().zip(hi).any(|(l, h)| l > h),
            SetRep::HPoly(p) => p.is_empty(),
            SetRep::VPoly { vertices, .. } => vertices.is_empty(),
            SetRep::Singleton { .. } => false,
        }
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self.clone().canonical(), SetRep::Singleton { .. })
    }

    /// Collapses degenerate boxes and one-vertex polytopes to singletons.
    pub fn canonical(self) -> SetRep {
        match self {
            SetRep::Box { lo, hi } if lo.iter().zip(&hi).all(|(l, h)| l == h) => {
                SetRep::Singleton { point: lo }
            }
            SetRep::VPoly { vertices, rays } if vertices.len() == 1 && rays.is_empty() => {
                SetRep::Singleton {
                    point: vertices.into_iter().next().unwrap(),
                }
            }
            other => other,
        }
    }

    /// Rewrites a V-polytope that is an axis-aligned box (all corners
    /// present) as a `Box`, and one-point sets as singletons.
    pub fn simplify(self) -> SetRep {
        let s = self.canonical();
        if let SetRep::VPoly { vertices, rays } = &s {
            if rays.is_empty() && !vertices.is_empty() {
                let d = vertices[0].len();
                let mut lo = vertices[0].clone();
                let mut hi = vertices[0].clone();
                for v in vertices {
                    for i in 0..d {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                let scale = 1.0 + norm_inf(&lo).max(norm_inf(&hi));
                let tol = 1e-10 * scale;
                let free = (0..d).filter(|&i| hi[i] - lo[i] > tol).count();
                let is_corner = |v: &Vec<f64>| {
                    (0..d).all(|i| (v[i] - lo[i]).abs() <= tol || (v[i] - hi[i]).abs() <= tol)
                };
                if free < usize::BITS as usize
                    && vertices.len() == 1usize << free
                    && vertices.iter().all(is_corner)
                {
                    for i in 0..d {
                        if hi[i] - lo[i] <= tol {
                            hi[i] = lo[i];
                        }
                    }
                    return SetRep::Box { lo, hi }.canonical();
                }
            }
        }
        s
    }

    /// Support function `sup { ⟨d, s⟩ : s ∈ S }`.
    pub fn support(&self, d: &[f64]) -> f64 {
        match self {
            SetRep::Empty { .. } => f64::NEG_INFINITY,
            SetRep::Singleton { point } => dot(point, d),
            SetRep::Box { lo, hi } => d
                .iter()
                .enumerate()
                .map(|(i, &di)| {
                    if di > 0.0 {
                        di * hi[i]
                    } else if di < 0.0 {
                        di * lo[i]
                    } else {
                        0.0
                    }
                })
                .sum(),
            SetRep::VPoly { vertices, rays } => {
                if rays.iter().any(|r| dot(r, d) > 1e-12) {
                    return f64::INFINITY;
                }
                vertices
                    .iter()
                    .map(|v| dot(v, d))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            SetRep::HPoly(_) => {
                let mut lp = LinearProgram::maximize();
                let y: Vec<usize> = d
                    .iter()
                    .map(|&di| lp.add_var(di, f64::NEG_INFINITY, f64::INFINITY))
                    .collect();
                self.constrain(&mut lp, &y);
                match lp.solve() {
                    LpOutcome::Optimal { objective, .. } => objective,
                    LpOutcome::Unbounded => f64::INFINITY,
                    LpOutcome::Infeasible => f64::NEG_INFINITY,
                }
            }
        }
    }

    /// Membership up to an L1 residual of `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            SetRep::Empty { .. } => false,
            SetRep::Singleton { point } => norm_inf(&sub(point, x)) <= tol,
            SetRep::Box { lo, hi } => x
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= lo[i] - tol && v <= hi[i] + tol),
            SetRep::HPoly(p) => p.contains(x, tol),
            SetRep::VPoly { .. } => {
                let mut lp = LinearProgram::minimize();
                let y = lp.add_free_vars(x.len());
                self.constrain(&mut lp, &y);
                for (i, &yi) in y.iter().enumerate() {
                    lp.add_soft_eq(&[(yi, 1.0)], x[i], 1.0);
                }
                matches!(lp.solve(), LpOutcome::Optimal { objective, .. } if objective <= tol)
            }
        }
    }

    /// Coordinate-wise bounds, or `None` for an empty set.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        match self {
            SetRep::Empty { .. } => None,
            SetRep::Singleton { point } => Some((point.clone(), point.clone())),
            SetRep::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => {
                if self.is_empty() {
                    return None;
                }
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                for i in 0..d {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    hi[i] = self.support(&e);
                    e[i] = -1.0;
                    lo[i] = -self.support(&e);
                }
                Some((lo, hi))
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self.bounding_box() {
            None => true,
            Some((lo, hi)) => lo.iter().chain(hi.iter()).all(|v| v.is_finite()),
        }
    }

    /// Vertices and extreme rays. Unbounded H-polyhedra are refused.
    pub fn vertices(&self) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let d = self.dim();
        match self {
            SetRep::Empty { .. } => Ok((vec![], vec![])),
            SetRep::Singleton { point } => Ok((vec![point.clone()], vec![])),
            SetRep::VPoly { vertices, rays } => Ok((vertices.clone(), rays.clone())),
            SetRep::Box { lo, hi } => {
                let mut rays = vec![];
                let mut free_axes = vec![];
                let mut base = vec![0.0; d];
                for i in 0..d {
                    let mut e = vec![0.0; d];
                    match (lo[i].is_finite(), hi[i].is_finite()) {
                        (true, true) => {
                            base[i] = lo[i];
                            if hi[i] > lo[i] {
                                free_axes.push(i);
                            }
                        }
                        (true, false) => {
                            base[i] = lo[i];
                            e[i] = 1.0;
                            rays.push(e);
                        }
                        (false, true) => {
                            base[i] = hi[i];
                            e[i] = -1.0;
                            rays.push(e);
                        }
                        (false, false) => {
                            e[i] = 1.0;
                            rays.push(e.clone());
                            e[i] = -1.0;
                            rays.push(e);
                        }
                    }
                }
                if free_axes.len() > 13 {
                    return Err(Error::DimCapExceeded(format!(
                        "box with {} free axes",
                        free_axes.len()
                    )));
                }
                let mut verts = Vec::with_capacity(1 << free_axes.len());
                for mask in 0..(1usize << free_axes.len()) {
                    let mut v = base.clone();
                    for (j, &i) in free_axes.iter().enumerate() {
                        if mask & (1 << j) != 0 {
                            v[i] = hi[i];
                        }
                    }
                    verts.push(v);
                }
                Ok((verts, rays))
            }
            SetRep::HPoly(p) => {
                if d > EXACT_DIM_CAP {
                    return Err(Error::DimCapExceeded(format!("H-polyhedron in dimension {d}")));
                }
                if !self.is_bounded() {
                    return Err(Error::Unrepresentable(
                        "unbounded H-polyhedron has no vertex list".into(),
                    ));
                }
                Ok((polyhedron::enumerate_vertices(p)?, vec![]))
            }
        }
    }

    pub fn to_vpoly(&self) -> Result<SetRep> {
        let (vertices, rays) = self.vertices()?;
        if vertices.is_empty() {
            return Ok(SetRep::Empty { dim: self.dim() });
        }
        Ok(SetRep::VPoly { vertices, rays })
    }

    /// Euclidean distance from `x` to the set (QP projection).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            SetRep::Empty { .. } => f64::INFINITY,
            SetRep::Singleton { point } => crate::linalg::norm(&sub(point, x)),
            SetRep::Box { lo, hi } => x
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let c = v.clamp(lo[i], hi[i]);
                    (v - c) * (v - c)
                })
                .sum::<f64>()
                .sqrt(),
            _ => distance_qp(self, x),
        }
    }

    /// Hausdorff distance between two bounded sets.
    pub fn hausdorff(&self, other: &SetRep) -> Result<f64> {
        let (va, _) = self.vertices()?;
        let (vb, _) = other.vertices()?;
        let ab = va.iter().map(|v| other.distance(v)).fold(0.0, f64::max);
        let ba = vb.iter().map(|v| self.distance(v)).fold(0.0, f64::max);
        Ok(ab.max(ba))
    }

    /// Product set `self × other` (used to assemble per-stage estimates).
    pub fn product(&self, other: &SetRep) -> Result<SetRep> {
        let cat = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().chain(b).cloned().collect() };
        match (self, other) {
            (SetRep::Empty { .. }, _) | (_, SetRep::Empty { .. }) => Ok(SetRep::Empty {
                dim: self.dim() + other.dim(),
            }),
            _ => {
                if let (Some((la, ha)), Some((lb, hb))) = (self.as_box(), other.as_box()) {
                    return Ok(SetRep::Box {
                        lo: cat(&la, &lb),
                        hi: cat(&ha, &hb),
                    }
                    .canonical());
                }
                let da = self.dim();
                let db = other.dim();
                let pa = self.to_hpoly()?;
                let pb = other.to_hpoly()?;
                let mut out = pa.embed(da + db, 0);
                let pb = pb.embed(da + db, da);
                out = out.intersect(&pb);
                Ok(SetRep::HPoly(out))
            }
        }
    }

    fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SetRep::Singleton { point } => Some((point.clone(), point.clone())),
            SetRep::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => None,
        }
    }

    /// H-representation; V-polytopes are converted by projecting their
    /// lifted description.
    pub fn to_hpoly(&self) -> Result<PolyhedralSet> {
        let d = self.dim();
        match self {
            SetRep::HPoly(p) => Ok(p.clone()),
            SetRep::VPoly { .. } => {
                let desc = self.linear_description();
                let n_aux = desc.aux_bounds.len();
                let mut sys = polyhedron::LinearSystem::new(d + n_aux);
                for (c, r) in desc.eqs {
                    sys.add_eq(c, r);
                }
                for (j, (lo, _)) in desc.aux_bounds.iter().enumerate() {
                    debug_assert_eq!(*lo, 0.0);
                    let mut row = vec![0.0; d + n_aux];
                    row[d + j] = -1.0;
                    sys.add_ineq(row, 0.0);
                }
                sys.project(d)
            }
            _ => {
                let desc = self.linear_description();
                Ok(PolyhedralSet {
                    dim: d,
                    ineqs: desc
                        .ineqs
                        .into_iter()
                        .map(|(a, alpha)| Halfspace { a, alpha })
                        .collect(),
                    eqs: desc
                        .eqs
                        .into_iter()
                        .map(|(b, beta)| Hyperplane { b, beta })
                        .collect(),
                })
            }
        }
    }
}

fn distance_qp(set: &SetRep, x: &[f64]) -> f64 {
    let d = x.len();
    let desc = set.linear_description();
    let n_aux = desc.aux_bounds.len();
    let n = d + n_aux;
    let mut hess = DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    for i in 0..d {
        hess[(i, i)] = 2.0;
        lin[i] = -2.0 * x[i];
    }
    let mut ineqs = desc.ineqs.clone();
    for (j, &(lo, hi)) in desc.aux_bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut r = vec![0.0; n];
            r[d + j] = 1.0;
            ineqs.push((r, hi));
        }
        if lo.is_finite() {
            let mut r = vec![0.0; n];
            r[d + j] = -1.0;
            ineqs.push((r, -lo));
        }
    }
    let to_mat = |rows: &[(Vec<f64>, f64)]| {
        (
            DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]),
            DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        )
    };
    let (eq_mat, eq_rhs) = to_mat(&desc.eqs);
    let (ineq_mat, ineq_rhs) = to_mat(&ineqs);
    let qp = QuadProgram {
        hess,
        lin,
        constant: dot(x, x),
        eq_mat,
        eq_rhs,
        ineq_mat,
        ineq_rhs,
    };
    let r = qp.solve(1000);
    match r.status {
        QpStatus::Optimal => r.objective.max(0.0).sqrt(),
        QpStatus::Infeasible => f64::INFINITY,
        _ => f64::NAN,
    }
}

/// Removes duplicates and points lying in the convex hull of the others
/// (plus the cone of `rays`).
pub fn prune_points(points: Vec<Vec<f64>>, rays: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let scale = 1.0 + norm_inf(&p);
        if !pts.iter().any(|q| norm_inf(&sub(q, &p)) <= 1e-12 * scale) {
            pts.push(p);
        }
    }
    if pts.len() <= 1 {
        return pts;
    }
    let d = pts[0].len();
    if d == 1 && rays.is_empty() {
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return if lo == hi { vec![vec![lo]] } else { vec![vec![lo], vec![hi]] };
    }
    let mut keep = vec![true; pts.len()];
    for i in 0..pts.len() {
        let others: Vec<Vec<f64>> = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i && keep[*j])
            .map(|(_, p)| p.clone())
            .collect();
        if others.is_empty() {
            continue;
        }
        let hull = SetRep::VPoly {
            vertices: others,
            rays: rays.to_vec(),
        };
        if hull.contains(&pts[i], 1e-10 * (1.0 + norm_inf(&pts[i]))) {
            keep[i] = false;
        }
    }
    pts.into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| p)
        .collect()
}

fn dedupe_rays(rays: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rays {
        let n = norm_inf(&r);
        if n == 0.0 {
            continue;
        }
        let u: Vec<f64> = r.iter().map(|v| v / n).collect();
        if !out.iter().any(|q| norm_inf(&sub(q, &u)) <= 1e-12) {
            out.push(u);
        }
    }
    out
}

/// Exact Minkowski sum `a ⊕ b`.
pub fn minkowski_sum(a: &SetRep, b: &SetRep) -> Result<SetRep> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "minkowski sum of dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    match (a, b) {
        (SetRep::Empty { .. }, _) | (_, SetRep::Empty { .. }) => Ok(SetRep::Empty { dim: d }),
        (SetRep::Singleton { point: p }, s) | (s, SetRep::Singleton { point: p }) => {
            Ok(translate(s, p))
        }
        (SetRep::Box { lo: l1, hi: h1 }, SetRep::Box { lo: l2, hi: h2 }) => Ok(SetRep::Box {
            lo: add(l1, l2),
            hi: add(h1, h2),
        }
        .canonical()),
        _ => {
            if d > EXACT_DIM_CAP {
                return Err(Error::UnsupportedCombination(format!(
                    "exact sum in dimension {d} exceeds the cap of {EXACT_DIM_CAP}"
                )));
            }
            let to_v = |s: &SetRep| {
                s.vertices().map_err(|e| {
                    Error::UnsupportedCombination(format!("cannot list vertices: {e}"))
                })
            };
            let (va, ra) = to_v(a)?;
            let (vb, rb) = to_v(b)?;
            if va.len().saturating_mul(vb.len()) > VERTEX_CAP * 100 {
                return Err(Error::DimCapExceeded(format!(
                    "{} x {} vertex sums",
                    va.len(),
                    vb.len()
                )));
            }
            let mut sums = Vec::with_capacity(va.len() * vb.len());
            for p in &va {
                for q in &vb {
                    sums.push(add(p, q));
                }
            }
            let rays = dedupe_rays(ra.into_iter().chain(rb).collect());
            let vertices = prune_points(sums, &rays);
            if vertices.len() > VERTEX_CAP {
                return Err(Error::DimCapExceeded(format!("{} vertices", vertices.len())));
            }
            Ok(SetRep::VPoly { vertices, rays }.canonical())
        }
    }
}

fn translate(s: &SetRep, p: &[f64]) -> SetRep {
    match s {
        SetRep::Empty { dim } => SetRep::Empty { dim: *dim },
        SetRep::Singleton { point } => SetRep::Singleton {
            point: add(point, p),
        },
        SetRep::Box { lo, hi } => SetRep::Box {
            lo: add(lo, p),
            hi: add(hi, p),
        },
        SetRep::VPoly { vertices, rays } => SetRep::VPoly {
            vertices: vertices.iter().map(|v| add(v, p)).collect(),
            rays: rays.clone(),
        },
        SetRep::HPoly(poly) => SetRep::HPoly(PolyhedralSet {
            dim: poly.dim,
            ineqs: poly
                .ineqs
                .iter()
                .map(|h| Halfspace {
                    a: h.a.clone(),
                    alpha: h.alpha + dot(&h.a, p),
                })
                .collect(),
            eqs: poly
                .eqs
                .iter()
                .map(|h| Hyperplane {
                    b: h.b.clone(),
                    beta: h.beta + dot(&h.b, p),
                })
                .collect(),
        }),
    }
}

/// Image of `s` under the linear map `m`.
///
/// `Exact` maps vertices and rays; `OuterBox` returns an interval enclosure
/// of the image (interval matrix-vector product of the bounding box).
pub fn affine_image(m: &DMatrix<f64>, s: &SetRep, mode: ImageMode) -> Result<SetRep> {
    if m.ncols() != s.dim() {
        return Err(Error::Dimension(format!(
            "map with {} columns applied to a set of dimension {}",
            m.ncols(),
            s.dim()
        )));
    }
    let r = m.nrows();
    if let SetRep::Empty { .. } = s {
        return Ok(SetRep::Empty { dim: r });
    }
    if let SetRep::Singleton { point } = s {
        return Ok(SetRep::Singleton {
            point: mat_vec(m, point),
        });
    }
    match mode {
        ImageMode::OuterBox => {
            let (lo, hi) = s.bounding_box().expect("nonempty");
            let (lo2, hi2) = interval_mat_vec(m, &lo, &hi);
            Ok(SetRep::Box { lo: lo2, hi: hi2 }.canonical())
        }
        ImageMode::Exact => {
            // A box maps to a box when every output row reads one input.
            if let SetRep::Box { lo, hi } = s {
                let single = (0..r).all(|i| m.row(i).iter().filter(|v| **v != 0.0).count() <= 1);
                if single {
                    let (lo2, hi2) = interval_mat_vec(m, lo, hi);
                    return Ok(SetRep::Box { lo: lo2, hi: hi2 }.canonical());
                }
            }
            if let SetRep::HPoly(_) = s {
                if !s.is_bounded() {
                    return Err(Error::Unrepresentable(
                        "exact image of an unbounded H-polyhedron".into(),
                    ));
                }
            }
            let (verts, rays) = s.vertices()?;
            let verts: Vec<Vec<f64>> = verts.iter().map(|v| mat_vec(m, v)).collect();
            let rays = dedupe_rays(rays.iter().map(|v| mat_vec(m, v)).collect());
            Ok(SetRep::VPoly {
                vertices: prune_points(verts, &rays),
                rays,
            }
            .canonical())
        }
    }
}

fn interval_mat_vec(m: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = vec![0.0; m.nrows()];
    let mut out_hi = vec![0.0; m.nrows()];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let c = m[(i, j)];
            if c == 0.0 {
                continue;
            }
            let (a, b) = (c * lo[j], c * hi[j]);
            out_lo[i] += a.min(b);
            out_hi[i] += a.max(b);
        }
    }
    (out_lo, out_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(lo: f64, hi: f64) -> SetRep {
        SetRep::interval(lo, hi)
    }

    #[test]
    fn translation_of_interval() {
        let s = minkowski_sum(&seg(-1.0, 1.0), &SetRep::singleton(vec![0.5])).unwrap();
        assert_eq!(s, seg(-0.5, 1.5));
    }

    #[test]
    fn box_plus_box() {
        assert_eq!(minkowski_sum(&seg(-1.0, 1.0), &seg(-1.0, 1.0)).unwrap(), seg(-2.0, 2.0));
        let z = minkowski_sum(&SetRep::zero(1), &SetRep::zero(1)).unwrap();
        assert_eq!(z, SetRep::zero(1));
    }

    #[test]
    fn scaling_and_reflection() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(affine_image(&a, &seg(-1.0, 1.0), ImageMode::Exact).unwrap(), seg(-2.0, 2.0));
        let r = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert_eq!(affine_image(&r, &seg(0.0, 1.0), ImageMode::Exact).unwrap(), seg(-1.0, 0.0));
    }

    #[test]
    fn projection_of_unit_square() {
        let square = SetRep::VPoly {
            vertices: vec![vec![-1., -1.], vec![1., -1.], vec![1., 1.], vec![-1., 1.]],
            rays: vec![],
        };
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let img = affine_image(&m, &square, ImageMode::Exact).unwrap();
        assert!((img.support(&[1.0]) - 2.0).abs() < 1e-12);
        assert!((img.support(&[-1.0]) - 2.0).abs() < 1e-12);
        if let SetRep::VPoly { vertices, .. } = &img {
            assert_eq!(vertices.len(), 2);
        } else {
            panic!("{img:?}");
        }
    }

    #[test]
    fn diamond_sum_is_octagon() {
        let diamond = SetRep::VPoly {
            vertices: vec![vec![1., 0.], vec![0., 1.], vec![-1., 0.], vec![0., -1.]],
            rays: vec![],
        };
        let square = SetRep::Box {
            lo: vec![-1., -1.],
            hi: vec![1., 1.],
        };
        let s = minkowski_sum(&diamond, &square).unwrap();
        match &s {
            SetRep::VPoly { vertices, .. } => assert_eq!(vertices.len(), 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zonotope_conversion() {
        let z = Zonotope {
            center: vec![0.0, 0.0],
            generators: vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![2.0, 0.0]],
        };
        let s = z.to_setrep().unwrap();
        for d in [[1.0, 0.0], [0.3, -0.7], [-1.0, 2.0]] {
            assert!((s.support(&d) - z.support(&d)).abs() < 1e-12);
        }
        let axis = Zonotope {
            center: vec![0.5],
            generators: vec![vec![1.0]],
        };
        assert_eq!(axis.to_setrep().unwrap(), seg(-0.5, 1.5));
    }

    #[test]
    fn unbounded_box_vertices_and_rays() {
        let half = SetRep::Box {
            lo: vec![0.0, -1.0],
            hi: vec![f64::INFINITY, 1.0],
        };
        let (v, r) = half.vertices().unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(r, vec![vec![1.0, 0.0]]);
        assert_eq!(half.support(&[1.0, 0.0]), f64::INFINITY);
        assert!(half.contains(&[5.0, 0.0], 0.0));
    }

    #[test]
    fn hausdorff_of_segments() {
        let a = SetRep::Box {
            lo: vec![0.0, -1.0],
            hi: vec![0.0, 1.0],
        };
        let b = SetRep::VPoly {
            vertices: vec![vec![0.0, -1.0], vec![0.0, 1.5]],
            rays: vec![],
        };
        assert!((a.hausdorff(&b).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn simplify_recovers_boxes() {
        let v = SetRep::VPoly {
            vertices: vec![vec![0.0, -1.0], vec![0.0, 1.0]],
            rays: vec![],
        };
        assert_eq!(
            v.simplify(),
            SetRep::Box {
                lo: vec![0.0, -1.0],
                hi: vec![0.0, 1.0]
            }
        );
        let tri = SetRep::VPoly {
            vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            rays: vec![],
        };
        assert_eq!(tri.clone().simplify(), tri);
    }

    #[test]
    fn json_shape() {
        let s = seg(-2.0, 2.0);
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"type":"box","lo":[-2.0],"hi":[2.0]}"#
        );
        let u = SetRep::Box {
            lo: vec![f64::NEG_INFINITY],
            hi: vec![0.0],
        };
        let txt = serde_json::to_string(&u).unwrap();
        assert_eq!(serde_json::from_str::<SetRep>(&txt).unwrap(), u);
    }
}
