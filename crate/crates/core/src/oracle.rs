//! Brute-force evaluation of `V` on parameter grids and finite-difference
//! estimates. These never look at multipliers or subdifferentials, so they
//! can be used to check the sensitivity results independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::ControlProblem;
use crate::serde_ext::ext_f64;
use crate::solver::{solve, SolveStatus};

pub const MAX_GRID_POINTS: usize = 100_000;
/// Default slack of the subgradient inequality.
pub const SUBGRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub w: Vec<f64>,
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub status: Option<SolveStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub points_per_axis: usize,
    /// Row-major over the axes, first axis slowest. Empty until filled.
    pub points: Vec<GridPoint>,
}

impl OracleGrid {
    pub fn new(center: Vec<f64>, radii: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        if points_per_axis == 0 || points_per_axis.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "points per axis must be odd, got {points_per_axis}"
            )));
        }
        if radii.len() != center.len() {
            return Err(Error::Dimension("one radius per coordinate".into()));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Invalid("radii must be finite and nonnegative".into()));
        }
        let total = (points_per_axis as f64).powi(center.len() as i32);
        if total > MAX_GRID_POINTS as f64 {
            return Err(Error::DimCapExceeded(format!(
                "{total} grid points exceed the cap of {MAX_GRID_POINTS}"
            )));
        }
        Ok(OracleGrid {
            center,
            radii,
            points_per_axis,
            points: vec![],
        })
    }

    pub fn uniform(center: Vec<f64>, radius: f64, points_per_axis: usize) -> Result<Self> {
        let radii = vec![radius; center.len()];
        Self::new(center, radii, points_per_axis)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.center.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of grid point number `idx`.
    pub fn coordinates(&self, idx: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let d = self.center.len();
        let mut rem = idx;
        let mut w = vec![0.0; d];
        for axis in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            let s = if n == 1 {
                0.0
            } else {
                -1.0 + 2.0 * i as f64 / (n - 1) as f64
            };
            w[axis] = self.center[axis] + self.radii[axis] * s;
        }
        w
    }

    pub fn is_filled(&self) -> bool {
        self.points.len() == self.len()
    }

    /// `w_0,…,w_{p−1},V` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.center.len()).map(|i| format!("w_{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",V\n");
        for pt in &self.points {
            let mut row: Vec<String> = pt.w.iter().map(|v| fmt_num(*v)).collect();
            row.push(fmt_num(pt.value));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// 12 significant digits, `inf`/`-inf` for infinities.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let r = crate::serde_ext::round_sig(v, 12);
        format!("{r}")
    }
}

fn evaluate(p: &ControlProblem, w: Vec<f64>) -> GridPoint {
    match solve(p, &w) {
        Ok(r) => GridPoint {
            w,
            value: r.value,
            status: Some(r.status),
        },
        Err(e) => {
            log::warn!("grid point {w:?} failed: {e}");
            GridPoint {
                w,
                value: f64::NAN,
                status: None,
            }
        }
    }
}

/// Evaluates `V` at every grid point. Points are independent, so they may
/// be computed in parallel; the stored order is fixed by the index.
pub fn grid_oracle(p: &ControlProblem, mut g: OracleGrid) -> Result<OracleGrid> {
    if g.center.len() != p.param_dim() {
        return Err(Error::Dimension(format!(
            "grid of dimension {} for a parameter of dimension {}",
            g.center.len(),
            p.param_dim()
        )));
    }
    let n = g.len();
    #[cfg(feature = "parallel")]
    let points: Vec<GridPoint> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| evaluate(p, g.coordinates(i)))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let points: Vec<GridPoint> = (0..n).map(|i| evaluate(p, g.coordinates(i))).collect();
    g.points = points;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    /// `min V(w) − V̄ − ⟨cand, w − w̄⟩` over the grid.
    #[serde(with = "ext_f64")]
    pub worst_margin: f64,
    pub worst_point: Option<Vec<f64>>,
    pub checked: usize,
    /// Points where `V` is not available (solver failure).
    pub skipped: usize,
    #[serde(with = "ext_f64")]
    pub tol: f64,
}

/// Subgradient inequality `V(w) ≥ V̄ + ⟨cand, w − w̄⟩ − tol` on a filled grid.
pub fn subgradient_inequality_check(
    wbar: &[f64],
    vbar: f64,
    cand: &[f64],
    g: &OracleGrid,
    tol: f64,
) -> Result<CheckReport> {
    if !g.is_filled() {
        return Err(Error::Invalid("grid has not been evaluated".into()));
    }
    if cand.len() != wbar.len() || g.center.len() != wbar.len() {
        return Err(Error::Dimension("candidate, grid and w̄ must agree".into()));
    }
    let mut worst = f64::INFINITY;
    let mut worst_point = None;
    let mut checked = 0;
    let mut skipped = 0;
    for pt in &g.points {
        if pt.value.is_nan() {
            skipped += 1;
            continue;
        }
        checked += 1;
        let dw: Vec<f64> = pt.w.iter().zip(wbar).map(|(a, b)| a - b).collect();
        let margin = if pt.value == f64::INFINITY {
            f64::INFINITY
        } else {
            pt.value - vbar - dot(cand, &dw)
        };
        if margin < worst {
            worst = margin;
            worst_point = Some(pt.w.clone());
        }
    }
    Ok(CheckReport {
        pass: skipped == 0 && worst >= -tol,
        worst_margin: worst,
        worst_point,
        checked,
        skipped,
        tol,
    })
}

fn value(p: &ControlProblem, w: &[f64]) -> Result<f64> {
    let r = solve(p, w)?;
    match r.status {
        SolveStatus::Optimal => Ok(r.value),
        s => Err(Error::NotSolved(format!("{s:?} at w = {w:?}"))),
    }
}

fn shifted(w: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    w.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// `(V(w + h d) − V(w − h d)) / 2h`.
pub fn central_difference(p: &ControlProblem, w: &[f64], d: &[f64], h: f64) -> Result<f64> {
    Ok((value(p, &shifted(w, d, h))? - value(p, &shifted(w, d, -h))?) / (2.0 * h))
}

/// `(V(w + t d) − V(w)) / t`.
pub fn one_sided_difference(p: &ControlProblem, w: &[f64], d: &[f64], t: f64) -> Result<f64> {
    Ok((value(p, &shifted(w, d, t))? - value(p, w)?) / t)
}

pub const FD_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Directional derivative `V'(w; d)` from one-sided differences at
/// [`FD_STEPS`] with one Richardson step on the last two.
pub fn directional_derivative(p: &ControlProblem, w: &[f64], d: &[f64]) -> Result<f64> {
    let q: Vec<f64> = FD_STEPS
        .iter()
        .map(|&t| one_sided_difference(p, w, d, t))
        .collect::<Result<_>>()?;
    Ok(richardson(q[1], q[2], 10.0))
}

/// Eliminates the first-order error term between steps `h` and `h / ratio`.
pub fn richardson(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (ratio * fine - coarse) / (ratio - 1.0)
}

/// Central-difference gradient at `w`.
pub fn fd_gradient(p: &ControlProblem, w: &[f64], h: f64) -> Result<Vec<f64>> {
    (0..w.len())
        .map(|i| {
            let mut e = vec![0.0; w.len()];
            e[i] = 1.0;
            central_difference(p, w, &e, h)
        })
        .collect()
}

/// A subgradient of `V` at `w̄` obtained as the limit of gradients at
/// `w̄ + δ d` for `δ` in [`FD_STEPS`], extrapolated to `δ = 0`. `V` is
/// generically differentiable along such rays, and limits of gradients
/// belong to `∂V(w̄)`.
pub fn sampled_subgradient(p: &ControlProblem, wbar: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let grads: Vec<Vec<f64>> = FD_STEPS
        .iter()
        .map(|&delta| fd_gradient(p, &shifted(wbar, d, delta), 1e-3 * delta))
        .collect::<Result<_>>()?;
    Ok(grads[1]
        .iter()
        .zip(&grads[2])
        .map(|(c, f)| richardson(*c, *f, 10.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::fixtures;

    #[test]
    fn grid_layout() {
        let g = OracleGrid::new(vec![0.0, 1.0], vec![1.0, 0.5], 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.coordinates(0), vec![-1.0, 0.5]);
        assert_eq!(g.coordinates(4), vec![0.0, 1.0]);
        assert_eq!(g.coordinates(5), vec![0.0, 1.5]);
        assert!(OracleGrid::uniform(vec![0.0], 1.0, 4).is_err());
    }

    #[test]
    fn first_example_slope() {
        let p = fixtures::p1();
        let g = grid_oracle(&p, OracleGrid::uniform(vec![0.0], 0.1, 5).unwrap()).unwrap();
        let v = |i: usize| g.points[i].value;
        let slope = (v(4) - v(0)) / 0.2;
        assert!((slope - 1.3).abs() < 1e-9, "{slope}");
        let vbar = v(2);
        assert!(subgradient_inequality_check(&[0.0], vbar, &[1.3], &g, 1e-6).unwrap().pass);
        assert!(!subgradient_inequality_check(&[0.0], vbar, &[2.0], &g, 1e-6).unwrap().pass);
        let csv = g.to_csv();
        assert!(csv.starts_with("w_0,V\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn kinked_directional_derivatives() {
        let p = fixtures::p2();
        let d = directional_derivative(&p, &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-6);
        let d = directional_derivative(&p, &[0.0, 0.0], &[0.0, -1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-6);
        let g = sampled_subgradient(&p, &[0.0, 0.0], &[0.6, -0.8]).unwrap();
        assert!(g[0].abs() < 1e-6 && (g[1] + 1.0).abs() < 1e-6, "{g:?}");
    }
}
