//! Fourier–Motzkin projection and vertex enumeration for small polyhedra.

use nalgebra::{DMatrix, DVector};

use crate::convex::polyhedral::{Halfspace, Hyperplane, PolyhedralSet};
use crate::error::{Error, Result};
use crate::linalg::{dot, kernel_basis, lstsq, mat_vec, norm_inf, rank};
use crate::lp::{LinearProgram, LpOutcome, Relation};

const ZERO: f64 = 1e-12;
const MAX_ROWS: usize = 20_000;
const MAX_COMBINATIONS: usize = 200_000;

/// `{y : E y = e, G y ≤ g}` over `n` variables, built row by row.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub n: usize,
    pub eqs: Vec<(Vec<f64>, f64)>,
    pub ineqs: Vec<(Vec<f64>, f64)>,
}

impl LinearSystem {
    pub fn new(n: usize) -> Self {
        LinearSystem {
            n,
            eqs: vec![],
            ineqs: vec![],
        }
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.n);
        self.eqs.push((row, rhs));
    }

    pub fn add_ineq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.n);
        self.ineqs.push((row, rhs));
    }

    /// Projection onto the first `keep` coordinates.
    pub fn project(&self, keep: usize) -> Result<PolyhedralSet> {
        let mut eqs = self.eqs.clone();
        let mut ineqs = self.ineqs.clone();
        let n = self.n;
        let mut alive: Vec<usize> = (keep..n).collect();
        for (row, rhs) in eqs.iter_mut().chain(ineqs.iter_mut()) {
            clean(row, rhs);
        }

        // Equalities first: each pivot removes a variable without growth.
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for (r, (row, _)) in eqs.iter().enumerate() {
                let scale = norm_inf(row).max(1.0);
                for &j in &alive {
                    let c = row[j].abs() / scale;
                    if c > 0.0 && best.is_none_or(|b| c > b.2) {
                        best = Some((r, j, c));
                    }
                }
            }
            let Some((r, j, _)) = best else { break };
            let (prow, prhs) = eqs.swap_remove(r);
            let piv = prow[j];
            let substitute = |row: &mut Vec<f64>, rhs: &mut f64| {
                let f = row[j] / piv;
                if f != 0.0 {
                    for i in 0..n {
                        row[i] -= f * prow[i];
                    }
                    row[j] = 0.0;
                    *rhs -= f * prhs;
                    clean(row, rhs);
                }
            };
            for (row, rhs) in eqs.iter_mut() {
                substitute(row, rhs);
            }
            for (row, rhs) in ineqs.iter_mut() {
                substitute(row, rhs);
            }
            alive.retain(|&v| v != j);
        }

        let mut infeasible = false;
        eqs.retain(|(row, rhs)| {
            if norm_inf(row) == 0.0 {
                if rhs.abs() > 1e-9 {
                    infeasible = true;
                }
                false
            } else {
                true
            }
        });
        ineqs = tidy(ineqs, &mut infeasible);

        while !alive.is_empty() && !infeasible {
            // Pick the variable with the fewest generated rows.
            let mut choice = None;
            for &j in &alive {
                let p = ineqs.iter().filter(|r| r.0[j] > ZERO).count();
                let m = ineqs.iter().filter(|r| r.0[j] < -ZERO).count();
                let cost = p * m;
                if choice.is_none_or(|(_, c)| cost < c) {
                    choice = Some((j, cost));
                }
            }
            let (j, _) = choice.unwrap();
            let (pos, rest): (Vec<_>, Vec<_>) = ineqs.into_iter().partition(|r| r.0[j] > ZERO);
            let (neg, zero): (Vec<_>, Vec<_>) = rest.into_iter().partition(|r| r.0[j] < -ZERO);
            let mut next: Vec<(Vec<f64>, f64)> = zero
                .into_iter()
                .map(|(mut r, b)| {
                    r[j] = 0.0;
                    (r, b)
                })
                .collect();
            if pos.len() * neg.len() > MAX_ROWS {
                return Err(Error::DimCapExceeded(format!(
                    "elimination would create {} rows",
                    pos.len() * neg.len()
                )));
            }
            for (rp, bp) in &pos {
                for (rn, bn) in &neg {
                    let cp = rp[j];
                    let cn = -rn[j];
                    let mut row: Vec<f64> = (0..n).map(|i| cn * rp[i] + cp * rn[i]).collect();
                    row[j] = 0.0;
                    next.push((row, cn * bp + cp * bn));
                }
            }
            alive.retain(|&v| v != j);
            ineqs = tidy(next, &mut infeasible);
            ineqs = prune_redundant(ineqs, &eqs, n);
        }

        if infeasible {
            let mut empty = PolyhedralSet::whole(keep);
            empty.ineqs.push(Halfspace {
                a: vec![0.0; keep],
                alpha: -1.0,
            });
            return Ok(empty);
        }
        Ok(PolyhedralSet {
            dim: keep,
            ineqs: ineqs
                .into_iter()
                .map(|(a, alpha)| Halfspace {
                    a: a[..keep].to_vec(),
                    alpha,
                })
                .collect(),
            eqs: eqs
                .into_iter()
                .map(|(b, beta)| Hyperplane {
                    b: b[..keep].to_vec(),
                    beta,
                })
                .collect(),
        })
    }
}

/// Flushes cancellation noise left behind by a substitution.
fn clean(row: &mut [f64], rhs: &mut f64) {
    let scale = norm_inf(row).max(1.0);
    for v in row.iter_mut() {
        if v.abs() <= 1e-11 * scale {
            *v = 0.0;
        }
    }
    if rhs.abs() <= 1e-13 * scale {
        *rhs = 0.0;
    }
}

/// Normalizes rows, drops trivial ones and duplicates.
fn tidy(rows: Vec<(Vec<f64>, f64)>, infeasible: &mut bool) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (mut r, mut b) in rows {
        let s = norm_inf(&r);
        if s <= ZERO * (1.0 + b.abs()) {
            if b < -1e-9 {
                *infeasible = true;
            }
            continue;
        }
        for v in r.iter_mut() {
            *v /= s;
            if v.abs() < ZERO {
                *v = 0.0;
            }
        }
        b /= s;
        if let Some(k) = out
            .iter()
            .position(|(q, _)| q.iter().zip(&r).all(|(x, y)| (x - y).abs() <= 1e-10))
        {
            if b < out[k].1 {
                out[k].1 = b;
            }
        } else {
            out.push((r, b));
        }
    }
    out
}

/// Drops each inequality implied by the remaining rows.
fn prune_redundant(
    mut rows: Vec<(Vec<f64>, f64)>,
    eqs: &[(Vec<f64>, f64)],
    n: usize,
) -> Vec<(Vec<f64>, f64)> {
    let mut i = 0;
    while i < rows.len() {
        let mut lp = LinearProgram::maximize();
        let vars: Vec<usize> = (0..n)
            .map(|j| lp.add_var(rows[i].0[j], f64::NEG_INFINITY, f64::INFINITY))
            .collect();
        let sparse = |r: &[f64]| -> Vec<(usize, f64)> {
            r.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (vars[j], *v))
                .collect()
        };
        for (k, (r, b)) in rows.iter().enumerate() {
            if k != i {
                lp.add_row(&sparse(r), Relation::Le, *b);
            }
        }
        // Relaxing the tested row keeps the LP bounded when it is redundant.
        lp.add_row(&sparse(&rows[i].0), Relation::Le, rows[i].1 + 1.0);
        for (r, b) in eqs {
            lp.add_row(&sparse(r), Relation::Eq, *b);
        }
        let redundant = match lp.solve() {
            LpOutcome::Optimal { objective, .. } => {
                objective <= rows[i].1 + 1e-9 * (1.0 + rows[i].1.abs())
            }
            _ => false,
        };
        if redundant {
            rows.remove(i);
        } else {
            i += 1;
        }
    }
    rows
}

/// Vertices of a bounded polyhedron (basic feasible points).
pub fn enumerate_vertices(p: &PolyhedralSet) -> Result<Vec<Vec<f64>>> {
    let d = p.dim;
    if p.is_empty() {
        return Ok(vec![]);
    }
    // Parametrize the affine hull of the equalities: x = x0 + N y.
    let (x0, basis) = if p.eqs.is_empty() {
        let mut b = vec![vec![0.0; d]; d];
        for (i, row) in b.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        (vec![0.0; d], b)
    } else {
        let e = DMatrix::from_fn(p.eqs.len(), d, |i, j| p.eqs[i].b[j]);
        let rhs = DVector::from_iterator(p.eqs.len(), p.eqs.iter().map(|h| h.beta));
        let x0 = lstsq(&e, &rhs);
        (x0.iter().cloned().collect(), kernel_basis(&e))
    };
    let k = basis.len();
    let nb = DMatrix::from_fn(d, k, |i, j| basis[j][i]);
    let lift = |y: &[f64]| -> Vec<f64> {
        let ny = if k == 0 { vec![0.0; d] } else { mat_vec(&nb, y) };
        x0.iter().zip(ny).map(|(a, b)| a + b).collect()
    };
    let rows: Vec<(Vec<f64>, f64)> = p
        .ineqs
        .iter()
        .map(|h| {
            let a: Vec<f64> = (0..k).map(|j| dot(&h.a, &basis[j])).collect();
            (a, h.alpha - dot(&h.a, &x0))
        })
        .collect();
    let feasible = |y: &[f64]| {
        rows.iter()
            .all(|(a, b)| dot(a, y) <= b + 1e-9 * (1.0 + b.abs() + norm_inf(a) * norm_inf(y)))
    };
    if k == 0 {
        return Ok(if feasible(&[]) { vec![x0] } else { vec![] });
    }
    let m = rows.len();
    if binomial(m, k) > MAX_COMBINATIONS {
        return Err(Error::DimCapExceeded(format!(
            "{m} facets in dimension {k} give too many vertex candidates"
        )));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if m >= k {
        loop {
            let a = DMatrix::from_fn(k, k, |i, j| rows[idx[i]].0[j]);
            if rank(&a) == k {
                let b = DVector::from_iterator(k, idx.iter().map(|&i| rows[i].1));
                if let Some(y) = a.clone().lu().solve(&b) {
                    let y: Vec<f64> = y.iter().cloned().collect();
                    if feasible(&y) {
                        let x = lift(&y);
                        let scale = 1.0 + norm_inf(&x);
                        if !out.iter().any(|q| {
                            q.iter().zip(&x).all(|(u, v)| (u - v).abs() <= 1e-9 * scale)
                        }) {
                            out.push(x);
                        }
                    }
                }
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
