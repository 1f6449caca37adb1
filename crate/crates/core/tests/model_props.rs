mod common;

use ocsens_core::linalg::{dot, kernel_basis, mat_t_vec, mat_vec, norm, rank_threshold};
use ocsens_core::{assemble_operators, ControlProblem};
use proptest::prelude::*;

fn slice(v: &[f64], off: usize, len: usize) -> &[f64] {
    &v[off..off + len]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulated_pairs_satisfy_dynamics(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let mut r = common::rng(seed);
        let x0 = common::vector(&mut r, p.state_dims[0], -2.0, 2.0);
        let u: Vec<Vec<f64>> = p.control_dims.iter().map(|&d| common::vector(&mut r, d, -2.0, 2.0)).collect();
        let w = common::vector(&mut r, p.param_dim(), -2.0, 2.0);
        let z = p.simulate(&x0, &u, &w);
        let sys = assemble_operators(&p).unwrap();
        let res = norm(&sys.phi(&w, &z));
        prop_assert!(res <= 1e-12 * (1.0 + norm(&z) + norm(&w)), "residual {}", res);
    }

    #[test]
    fn adjoints_match_block_formulas(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let sys = assemble_operators(&p).unwrap();
        let l = p.layout();
        let mut r = common::rng(seed.wrapping_add(1));
        let y = common::vector(&mut r, l.rows, -1.0, 1.0);
        let mty = mat_t_vec(&sys.m, &y);
        let tty = mat_t_vec(&sys.t, &y);
        let n = p.horizon;
        let yk = |k: usize| slice(&y, l.row_off[k], p.state_dims[k + 1]);
        for k in 0..=n {
            // x_k appears as −A_k x_k in block k and as x_k in block k − 1.
            let mut want = vec![0.0; p.state_dims[k]];
            if k < n {
                want = mat_t_vec(&p.a[k], yk(k)).iter().map(|v| -v).collect();
            }
            if k > 0 {
                for (a, b) in want.iter_mut().zip(yk(k - 1)) {
                    *a += b;
                }
            }
            let got = slice(&mty, l.x_off[k], p.state_dims[k]);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
        for k in 0..n {
            let want: Vec<f64> = mat_t_vec(&p.b[k], yk(k)).iter().map(|v| -v).collect();
            let got = slice(&mty, l.u_off[k], p.control_dims[k]);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let want = mat_t_vec(&p.t[k], yk(k));
            let got = slice(&tty, l.w_off[k], p.param_dims[k]);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_basis_is_orthonormal_null_space(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, r in 0usize..5) {
        let mut g = common::rng(seed);
        let r = r.min(rows).min(cols);
        let m = common::matrix(&mut g, rows, r, -1.0, 1.0) * common::matrix(&mut g, r, cols, -1.0, 1.0);
        let basis = kernel_basis(&m);
        prop_assert_eq!(basis.len(), cols - r);
        let tau = rank_threshold(&m);
        for (i, v) in basis.iter().enumerate() {
            prop_assert!(norm(&mat_vec(&m, v)) <= tau.max(1e-12));
            for (j, u) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(u, v) - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn atom_order_does_not_change_objective(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let mut q: ControlProblem = p.clone();
        for e in q.stage_costs.iter_mut().chain(std::iter::once(&mut q.terminal_cost)) {
            e.atoms.reverse();
            if e.atoms.len() > 2 {
                e.atoms.swap(0, 1);
            }
        }
        let mut r = common::rng(seed ^ 3);
        let zw = common::vector(&mut r, p.layout().nz + p.param_dim(), -2.0, 2.0);
        let a = p.objective_expr().eval(&zw);
        let b = q.objective_expr().eval(&zw);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
