//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ocsens_core::convex::{AbsAtom, ConvexExpr, PolyhedralSet};
use ocsens_core::model::stage_blocks;
use ocsens_core::ControlProblem;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.gen_range(lo..hi)
}

pub fn vector(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(r, lo, hi)).collect()
}

pub fn unit_vector(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = vector(r, n, -1.0, 1.0);
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if s > 0.1 {
            return v.iter().map(|x| x / s).collect();
        }
    }
}

pub fn matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(r, lo, hi))
}

/// `LLᵀ + εI`.
pub fn psd(r: &mut ChaCha8Rng, n: usize, eps: f64) -> DMatrix<f64> {
    let l = matrix(r, n, n, -1.0, 1.0);
    &l * l.transpose() + DMatrix::identity(n, n) * eps
}

fn finish(mut p: ControlProblem) -> ControlProblem {
    for k in 0..p.horizon {
        p.stage_costs[k].blocks = stage_blocks(&p, k);
    }
    p
}

struct Shape {
    n: usize,
    xd: Vec<usize>,
    ud: Vec<usize>,
    wd: Vec<usize>,
}

/// Horizon ≤ 3, all dimensions ≤ 2, `T_k` onto so the kernel condition holds.
fn shape(r: &mut ChaCha8Rng) -> Shape {
    let n = r.gen_range(1..=3);
    let xd: Vec<usize> = (0..=n).map(|_| r.gen_range(1..=2)).collect();
    let ud = (0..n).map(|_| r.gen_range(1..=2)).collect();
    let wd = (0..n).map(|k| r.gen_range(xd[k + 1]..=2)).collect();
    Shape { n, xd, ud, wd }
}

fn well_conditioned(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let m = matrix(r, rows, cols, -1.0, 1.0);
        let sv = m.clone().svd(false, false).singular_values;
        if sv.iter().cloned().fold(f64::INFINITY, f64::min) > 0.2 {
            return m;
        }
    }
}

fn boxes(r: &mut ChaCha8Rng, d: usize) -> PolyhedralSet {
    let lo = vector(r, d, -1.5, -0.5);
    let hi = vector(r, d, 0.5, 1.5);
    PolyhedralSet::boxed(&lo, &hi)
}

fn dynamics(r: &mut ChaCha8Rng, s: &Shape) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let a = (0..s.n).map(|k| matrix(r, s.xd[k + 1], s.xd[k], -1.0, 1.0)).collect();
    let b = (0..s.n).map(|k| matrix(r, s.xd[k + 1], s.ud[k], -1.0, 1.0)).collect();
    let t = (0..s.n).map(|k| well_conditioned(r, s.xd[k + 1], s.wd[k])).collect();
    (a, b, t)
}

fn assemble(
    s: Shape,
    dy: (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>),
    stage_costs: Vec<ConvexExpr>,
    terminal_cost: ConvexExpr,
    initial_set: PolyhedralSet,
    control_sets: Vec<PolyhedralSet>,
    wbar: Vec<f64>,
) -> ControlProblem {
    finish(ControlProblem {
        horizon: s.n,
        state_dims: s.xd,
        control_dims: s.ud,
        param_dims: s.wd,
        a: dy.0,
        b: dy.1,
        t: dy.2,
        stage_costs,
        terminal_cost,
        initial_set,
        control_sets,
        wbar,
    })
}

/// Strictly convex quadratic costs and box constraints.
pub fn smooth_instance(seed: u64) -> ControlProblem {
    let mut r = rng(seed);
    let s = shape(&mut r);
    let dy = dynamics(&mut r, &s);
    let stage_costs = (0..s.n)
        .map(|k| {
            let d = s.xd[k] + s.ud[k] + s.wd[k];
            let q = psd(&mut r, d, 0.5);
            let lin = vector(&mut r, d, -1.0, 1.0);
            ConvexExpr::new(q, lin, 0.0, vec![]).unwrap()
        })
        .collect();
    let xn = s.xd[s.n];
    let terminal = ConvexExpr::new(psd(&mut r, xn, 0.5), vector(&mut r, xn, -1.0, 1.0), 0.0, vec![]).unwrap();
    let c = boxes(&mut r, s.xd[0]);
    let omegas = (0..s.n).map(|k| boxes(&mut r, s.ud[k])).collect();
    let pdim: usize = s.wd.iter().sum();
    let wbar = vector(&mut r, pdim, -0.5, 0.5);
    assemble(s, dy, stage_costs, terminal, c, omegas, wbar)
}

/// Quadratic costs plus a few weighted absolute-value atoms.
pub fn kinked_instance(seed: u64) -> ControlProblem {
    let mut r = rng(seed);
    let s = shape(&mut r);
    let dy = dynamics(&mut r, &s);
    let atoms = |r: &mut ChaCha8Rng, d: usize| -> Vec<AbsAtom> {
        (0..r.gen_range(0..=2))
            .map(|_| AbsAtom {
                a: vector(r, d, -1.0, 1.0),
                b: uniform(r, -0.5, 0.5),
                weight: uniform(r, 0.1, 1.0),
            })
            .collect()
    };
    let stage_costs = (0..s.n)
        .map(|k| {
            let d = s.xd[k] + s.ud[k] + s.wd[k];
            let q = psd(&mut r, d, 0.2);
            let lin = vector(&mut r, d, -1.0, 1.0);
            let at = atoms(&mut r, d);
            ConvexExpr::new(q, lin, 0.0, at).unwrap()
        })
        .collect();
    let xn = s.xd[s.n];
    let at = atoms(&mut r, xn);
    let terminal = ConvexExpr::new(psd(&mut r, xn, 0.2), vector(&mut r, xn, -1.0, 1.0), 0.0, at).unwrap();
    let c = boxes(&mut r, s.xd[0]);
    let omegas = (0..s.n).map(|k| boxes(&mut r, s.ud[k])).collect();
    let pdim: usize = s.wd.iter().sum();
    let wbar = vector(&mut r, pdim, -0.5, 0.5);
    assemble(s, dy, stage_costs, terminal, c, omegas, wbar)
}

/// Grid step on which every vertex of the polyhedral instances lies.
pub const POLY_GRID_STEP: f64 = 0.125;

fn quarter(r: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    r.gen_range(lo..=hi) as f64 * 0.25
}

fn sign(r: &mut ChaCha8Rng) -> f64 {
    [-1.0, 0.0, 1.0][r.gen_range(0..3)]
}

/// Piecewise-linear instance with `N = 1`, scalar state and control:
/// `z = (x₀, x₁, u₀)`, box constraints on `x₀` and `u₀`. Every kink line in
/// the free coordinates `(x₀, u₀)` has coefficients in {−1, 0, 1} and a
/// right-hand side on the quarter grid, so all vertices of the cost's
/// linearity regions sit on the eighth grid.
pub fn polyhedral_instance(seed: u64) -> ControlProblem {
    let mut r = rng(seed);
    let s = Shape {
        n: 1,
        xd: vec![1, 1],
        ud: vec![1],
        wd: vec![1],
    };
    let a = DMatrix::from_element(1, 1, [-1.0, 1.0][r.gen_range(0..2)]);
    let b = DMatrix::from_element(1, 1, [-1.0, 1.0][r.gen_range(0..2)]);
    let t = DMatrix::from_element(1, 1, 1.0);
    let mut h0_atoms = vec![];
    for _ in 0..r.gen_range(1..=3) {
        let (cx, cu) = loop {
            let c = (sign(&mut r), sign(&mut r));
            if c != (0.0, 0.0) {
                break c;
            }
        };
        h0_atoms.push(AbsAtom {
            a: vec![cx, cu, 0.0],
            b: quarter(&mut r, -3, 3),
            weight: r.gen_range(1..=3) as f64,
        });
    }
    let lin0 = vec![quarter(&mut r, -4, 4), quarter(&mut r, -4, 4), 0.0];
    let h0 = ConvexExpr::new(DMatrix::zeros(3, 3), lin0, 0.0, h0_atoms).unwrap();
    let terminal_atoms = (0..r.gen_range(0..=2))
        .map(|_| AbsAtom {
            a: vec![1.0],
            b: quarter(&mut r, -3, 3),
            weight: r.gen_range(1..=3) as f64,
        })
        .collect();
    let h1 = ConvexExpr::new(DMatrix::zeros(1, 1), vec![quarter(&mut r, -4, 4)], 0.0, terminal_atoms).unwrap();
    let bound = |r: &mut ChaCha8Rng| (quarter(r, -4, -1), quarter(r, 1, 4));
    let (xl, xh) = bound(&mut r);
    let (ul, uh) = bound(&mut r);
    let wbar = vec![quarter(&mut r, -2, 2)];
    assemble(
        s,
        (vec![a], vec![b], vec![t]),
        vec![h0],
        h1,
        PolyhedralSet::boxed(&[xl], &[xh]),
        vec![PolyhedralSet::boxed(&[ul], &[uh])],
        wbar,
    )
}

/// Points `lo, lo + step, …, hi` (inclusive).
pub fn grid_1d(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}
