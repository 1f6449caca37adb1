mod common;

use nalgebra::DMatrix;
use ocsens_core::convex::{
    affine_image, cone_contains, minkowski_sum, normal_cone_at, AbsAtom, ConvexExpr, Halfspace,
    ImageMode, PolyhedralSet, SetRep,
};
use ocsens_core::linalg::{dot, norm, sub};
use ocsens_core::lp::{LinearProgram, LpOutcome};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

fn expr(r: &mut ChaCha8Rng, d: usize, atoms: usize) -> ConvexExpr {
    let q = common::psd(r, d, 0.0);
    let lin = common::vector(r, d, -1.0, 1.0);
    let atoms = (0..atoms)
        .map(|_| AbsAtom {
            a: common::vector(r, d, -1.0, 1.0),
            b: common::uniform(r, -0.5, 0.5),
            weight: common::uniform(r, 0.1, 2.0),
        })
        .collect();
    ConvexExpr::new(q, lin, 0.3, atoms).unwrap()
}

/// A point on as many kink hyperplanes as the dimension allows.
fn kinked_point(e: &ConvexExpr) -> Vec<f64> {
    let d = e.dim;
    let k = e.atoms.len().min(d);
    if k == 0 {
        return vec![0.1; d];
    }
    let a = DMatrix::from_fn(k, d, |i, j| e.atoms[i].a[j]);
    let b = nalgebra::DVector::from_fn(k, |i, _| e.atoms[i].b);
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    sol.iter().cloned().collect()
}

fn random_set(r: &mut ChaCha8Rng, d: usize) -> SetRep {
    let n = 1 + (common::uniform(r, 0.0, 4.0) as usize);
    SetRep::VPoly {
        vertices: (0..n).map(|_| common::vector(r, d, -1.0, 1.0)).collect(),
        rays: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn subgradients_satisfy_inequality(seed in any::<u64>(), d in 1usize..4, atoms in 0usize..4) {
        let mut r = common::rng(seed);
        let e = expr(&mut r, d, atoms);
        let zbar = kinked_point(&e);
        let sub_set = e.subdiff(&zbar).unwrap();
        let (verts, _) = sub_set.vertices().unwrap();
        let fbar = e.eval(&zbar);
        for _ in 0..100 {
            let z = common::vector(&mut r, d, -2.0, 2.0);
            for g in &verts {
                let lhs = e.eval(&z);
                let rhs = fbar + dot(g, &sub(&z, &zbar));
                prop_assert!(lhs >= rhs - 1e-9, "{} < {}", lhs, rhs);
            }
        }
    }

    #[test]
    fn gradient_matches_central_difference(seed in any::<u64>(), d in 1usize..5, atoms in 0usize..3) {
        let mut r = common::rng(seed);
        let e = expr(&mut r, d, atoms);
        let z = common::vector(&mut r, d, -1.0, 1.0);
        if let Some(g) = e.grad(&z) {
            let h = 1e-6 * (1.0 + norm(&z));
            for i in 0..d {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                // Skip coordinates whose stencil straddles a kink.
                if e.kinks(&zp) != e.kinks(&z) || e.kinks(&zm) != e.kinks(&z) {
                    continue;
                }
                let signs = |x: &[f64]| e.atoms.iter().map(|a| a.residual(x) > 0.0).collect::<Vec<_>>();
                if signs(&zp) != signs(&zm) {
                    continue;
                }
                let fd = (e.eval(&zp) - e.eval(&zm)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{} vs {}", fd, g[i]);
            }
        }
    }

    #[test]
    fn normal_cone_members_are_normal(seed in any::<u64>(), d in 1usize..4, extra in 0usize..3) {
        let mut r = common::rng(seed);
        let mut s = PolyhedralSet::boxed(&vec![-1.0; d], &vec![1.0; d]);
        for _ in 0..extra {
            s.ineqs.push(Halfspace { a: common::vector(&mut r, d, -1.0, 1.0), alpha: common::uniform(&mut r, 0.2, 1.0) });
        }
        // A vertex: maximize a random direction.
        let c = common::vector(&mut r, d, -1.0, 1.0);
        let mut lp = LinearProgram::maximize();
        let vars: Vec<usize> = c.iter().map(|ci| lp.add_var(*ci, f64::NEG_INFINITY, f64::INFINITY)).collect();
        s.add_to_lp(&mut lp, &vars);
        let xbar = match lp.solve() {
            LpOutcome::Optimal { x, .. } => vars.iter().map(|v| x[*v]).collect::<Vec<f64>>(),
            _ => return Ok(()),
        };
        let cone = normal_cone_at(&s, &xbar).unwrap();
        let mut candidates = vec![c.clone()];
        for _ in 0..5 {
            candidates.push(common::vector(&mut r, d, -1.0, 1.0));
        }
        for v in candidates {
            if !cone_contains(&cone, &v) {
                continue;
            }
            let mut tried = 0;
            while tried < 100 {
                let y = common::vector(&mut r, d, -1.0, 1.0);
                if !s.contains(&y, 0.0) {
                    continue;
                }
                tried += 1;
                prop_assert!(dot(&v, &sub(&y, &xbar)) <= 1e-8);
            }
        }
    }

    #[test]
    fn support_functions_commute(seed in any::<u64>(), d in 1usize..4, rows in 1usize..4) {
        let mut r = common::rng(seed);
        let a = random_set(&mut r, d);
        let b = random_set(&mut r, d);
        let sum = minkowski_sum(&a, &b).unwrap();
        let m = common::matrix(&mut r, rows, d, -1.0, 1.0);
        let img = affine_image(&m, &a, ImageMode::Exact).unwrap();
        for _ in 0..50 {
            let dir = common::vector(&mut r, d, -1.0, 1.0);
            let want = a.support(&dir) + b.support(&dir);
            prop_assert!((sum.support(&dir) - want).abs() <= 1e-9);
            let dr = common::vector(&mut r, rows, -1.0, 1.0);
            let mt = m.transpose() * nalgebra::DVector::from_vec(dr.clone());
            let want = a.support(mt.as_slice());
            prop_assert!((img.support(&dr) - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn outer_box_contains_exact_image(seed in any::<u64>(), d in 1usize..4, rows in 1usize..4) {
        let mut r = common::rng(seed);
        let s = random_set(&mut r, d);
        let m = common::matrix(&mut r, rows, d, -1.0, 1.0);
        let exact = affine_image(&m, &s, ImageMode::Exact).unwrap();
        let outer = affine_image(&m, &s, ImageMode::OuterBox).unwrap();
        let (verts, _) = exact.vertices().unwrap();
        for v in verts {
            prop_assert!(outer.contains(&v, 1e-9));
        }
    }
}
