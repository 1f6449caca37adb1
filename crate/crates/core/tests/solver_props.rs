mod common;

use ocsens_core::model::evaluate_objective;
use ocsens_core::oracle::{grid_oracle, OracleGrid};
use ocsens_core::solver::kkt_verify;
use ocsens_core::{solve, SolveStatus};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn value_matches_brute_force(seed in any::<u64>()) {
        let p = common::polyhedral_instance(seed);
        let w = p.wbar.clone();
        let bound = |s: &ocsens_core::convex::PolyhedralSet| {
            let hi = s.ineqs.iter().filter(|h| h.a[0] > 0.0).map(|h| h.alpha / h.a[0]).fold(f64::INFINITY, f64::min);
            let lo = s.ineqs.iter().filter(|h| h.a[0] < 0.0).map(|h| h.alpha / h.a[0]).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let (xl, xh) = bound(&p.initial_set);
        let (ul, uh) = bound(&p.control_sets[0]);
        let mut best = f64::INFINITY;
        for x0 in common::grid_1d(xl, xh, common::POLY_GRID_STEP) {
            for u0 in common::grid_1d(ul, uh, common::POLY_GRID_STEP) {
                let z = p.simulate(&[x0], &[vec![u0]], &w);
                best = best.min(evaluate_objective(&p, &z, &w));
            }
        }
        let r = solve(&p, &w).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!((r.value - best).abs() <= 1e-4, "solver {} grid {}", r.value, best);
    }

    #[test]
    fn optimal_points_have_certificates(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let r = solve(&p, &p.wbar).unwrap();
        if r.status == SolveStatus::Optimal {
            let z = &r.solution.as_ref().unwrap().z;
            prop_assert!(kkt_verify(&p, &p.wbar, z).unwrap().is_some());
        }
    }

    #[test]
    fn value_function_is_convex(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let mut r = common::rng(seed ^ 11);
        let d = common::unit_vector(&mut r, p.param_dim());
        // V along a line through w̄, so every midpoint of a pair with an even gap is on the grid.
        let line: Vec<f64> = (0..9).map(|i| -0.4 + 0.1 * i as f64).collect();
        let v: Vec<f64> = line
            .iter()
            .map(|t| {
                let w: Vec<f64> = p.wbar.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                solve(&p, &w).unwrap().value
            })
            .collect();
        for i in 0..v.len() {
            for k in (i + 2..v.len()).step_by(2) {
                let m = (i + k) / 2;
                prop_assert!(v[m] <= 0.5 * (v[i] + v[k]) + 1e-6, "{:?}", v);
            }
        }
    }

    #[test]
    fn epigraph_trace_is_non_increasing(seed in any::<u64>()) {
        let p = common::kinked_instance(seed);
        let r = solve(&p, &p.wbar).unwrap();
        for w in r.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{:?}", r.trace);
        }
    }
}

#[test]
fn grid_triples_on_second_example() {
    let p = ocsens_core::io::fixtures::p2();
    let g = grid_oracle(&p, OracleGrid::uniform(vec![0.0, 0.0], 0.5, 5).unwrap()).unwrap();
    for a in &g.points {
        for b in &g.points {
            let m: Vec<f64> = a.w.iter().zip(&b.w).map(|(x, y)| 0.5 * (x + y)).collect();
            let vm = solve(&p, &m).unwrap().value;
            assert!(vm <= 0.5 * (a.value + b.value) + 1e-6);
        }
    }
}
