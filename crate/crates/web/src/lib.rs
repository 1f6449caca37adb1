//! WebAssembly bindings for the browser demo in `www/`. The exported
//! functions take and return JSON strings; [`api`] holds the same calls
//! with plain Rust errors so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod api {
    use ocsens_core::io::{fixtures, parse_problem};
    use ocsens_core::sensitivity::{analyze, sweep, ModeRequest, SensOptions};
    use ocsens_core::serde_ext::round_json;
    use ocsens_core::{solve, ControlProblem};
    use serde::Serialize;

    fn to_json<T: Serialize>(v: &T) -> String {
        let mut v = serde_json::to_value(v).expect("reports serialize");
        round_json(&mut v, 12);
        v.to_string()
    }

    fn load(problem: &str, wbar: &[f64]) -> Result<(ControlProblem, Vec<f64>), String> {
        let p = parse_problem(problem).map_err(|e| e.to_string())?;
        let w = if wbar.is_empty() { p.wbar.clone() } else { wbar.to_vec() };
        if w.len() != p.param_dim() {
            return Err(format!(
                "expected {} parameter values, got {}",
                p.param_dim(),
                w.len()
            ));
        }
        Ok((p, w))
    }

    pub fn example(name: &str) -> Result<String, String> {
        match name {
            "p1" => Ok(fixtures::P1.to_string()),
            "p2" => Ok(fixtures::P2.to_string()),
            other => Err(format!("no example named {other:?}")),
        }
    }

    pub fn solve_json(problem: &str, wbar: &[f64]) -> Result<String, String> {
        let (p, w) = load(problem, wbar)?;
        solve(&p, &w).map(|r| to_json(&r)).map_err(|e| e.to_string())
    }

    pub fn sensitivity_json(
        problem: &str,
        wbar: &[f64],
        mode: &str,
        grid_radius: f64,
        grid_points: usize,
    ) -> Result<String, String> {
        let (p, w) = load(problem, wbar)?;
        let opts = SensOptions {
            mode: mode.parse::<ModeRequest>()?,
            grid_radius,
            grid_points,
            ..SensOptions::default()
        };
        analyze(&p, &w, &opts).map(|r| to_json(&r)).map_err(|e| e.to_string())
    }

    pub fn sweep_json(
        problem: &str,
        wbar: &[f64],
        radius: f64,
        points: usize,
    ) -> Result<String, String> {
        let (p, w) = load(problem, wbar)?;
        sweep(&p, &w, radius, points)
            .map(|r| to_json(&r))
            .map_err(|e| e.to_string())
    }
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn example(name: &str) -> Result<String, JsError> {
    js(api::example(name))
}

/// An empty `wbar` uses the reference parameter stored in the problem.
#[wasm_bindgen]
pub fn solve(problem: &str, wbar: &[f64]) -> Result<String, JsError> {
    js(api::solve_json(problem, wbar))
}

#[wasm_bindgen]
pub fn sensitivity(
    problem: &str,
    wbar: &[f64],
    mode: &str,
    grid_radius: f64,
    grid_points: usize,
) -> Result<String, JsError> {
    js(api::sensitivity_json(problem, wbar, mode, grid_radius, grid_points))
}

#[wasm_bindgen]
pub fn sweep(problem: &str, wbar: &[f64], radius: f64, points: usize) -> Result<String, JsError> {
    js(api::sweep_json(problem, wbar, radius, points))
}
