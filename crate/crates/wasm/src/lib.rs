//! Browser bindings: constant-policy simulation, regional social cost of CO2
//! and a short cooperative solve, all on the embedded default scenario.

use std::sync::OnceLock;

use rice_game::cooperative::solve_swm;
use rice_game::model::{social_cost_of_co2, year};
use rice_game::{build_default_scenario, simulate, ControlProfile, RegionControl, Scenario, SolveOptions};
use wasm_bindgen::prelude::*;

/// Longest horizon the page may simulate, in 5-year steps.
pub const MAX_SIM_STEPS: usize = 120;
/// Longest horizon the page may optimize; larger solves stall the tab.
pub const MAX_SOLVE_STEPS: usize = 40;

fn default_scenario() -> &'static Scenario {
    static SCENARIO: OnceLock<Scenario> = OnceLock::new();
    SCENARIO.get_or_init(|| build_default_scenario().expect("embedded scenario is valid"))
}

fn constant_policy(sc: &Scenario, saving: f64, abatement: f64) -> Result<ControlProfile, String> {
    let c = RegionControl::new(saving, abatement);
    if !sc.bounds.contains(&c) {
        return Err(format!("controls ({saving}, {abatement}) are outside the allowed box"));
    }
    Ok(ControlProfile::uniform(sc.n(), sc.steps(), c))
}

fn check_horizon(horizon: usize, max: usize) -> Result<(), String> {
    if (1..=max).contains(&horizon) {
        Ok(())
    } else {
        Err(format!("horizon must be between 1 and {max} steps"))
    }
}

pub fn temperature_path_inner(saving: f64, abatement: f64, horizon: usize) -> Result<Vec<f64>, String> {
    check_horizon(horizon, MAX_SIM_STEPS)?;
    let sc = default_scenario().with_horizon(horizon);
    let profile = constant_policy(&sc, saving, abatement)?;
    let traj = simulate(&sc.x0, &profile, &sc.model).map_err(|e| e.to_string())?;
    Ok(traj.t_at()[..=horizon].to_vec())
}

pub fn scc_by_region_inner(saving: f64, abatement: f64, step: usize) -> Result<Vec<f64>, String> {
    let sc = default_scenario();
    if step > sc.horizon {
        return Err(format!("step must be at most {}", sc.horizon));
    }
    let profile = constant_policy(sc, saving, abatement)?;
    (0..sc.n())
        .map(|i| social_cost_of_co2(&sc.x0, &profile, &sc.model, i, step, 1e-3).map_err(|e| e.to_string()))
        .collect()
}

pub fn cooperative_path_inner(horizon: usize) -> Result<Vec<f64>, String> {
    check_horizon(horizon, MAX_SOLVE_STEPS)?;
    let sc = default_scenario().with_horizon(horizon);
    let opts = SolveOptions {
        multistart: 1,
        ..SolveOptions::default()
    };
    let sol = solve_swm(&sc, &opts).map_err(|e| e.to_string())?;
    Ok(sol.trajectory.t_at()[..=horizon].to_vec())
}

#[wasm_bindgen(js_name = regionNames)]
pub fn region_names() -> Vec<String> {
    default_scenario().info.iter().map(|r| r.name.clone()).collect()
}

#[wasm_bindgen]
pub fn years(steps: usize) -> Vec<u32> {
    (0..steps).map(year).collect()
}

/// Atmospheric temperature (degC) for steps 0..=horizon when every region
/// holds the same saving rate and abatement fraction.
#[wasm_bindgen(js_name = temperaturePath)]
pub fn temperature_path(saving: f64, abatement: f64, horizon: usize) -> Result<Vec<f64>, JsError> {
    temperature_path_inner(saving, abatement, horizon).map_err(|e| JsError::new(&e))
}

/// Social cost of CO2 (USD/tCO2) per region at `step` under a constant policy.
#[wasm_bindgen(js_name = sccByRegion)]
pub fn scc_by_region(saving: f64, abatement: f64, step: usize) -> Result<Vec<f64>, JsError> {
    scc_by_region_inner(saving, abatement, step).map_err(|e| JsError::new(&e))
}

/// Atmospheric temperature under the welfare-maximizing cooperative policy.
#[wasm_bindgen(js_name = cooperativePath)]
pub fn cooperative_path(horizon: usize) -> Result<Vec<f64>, JsError> {
    cooperative_path_inner(horizon).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_have_one_entry_per_state() {
        let t = temperature_path_inner(0.25, 0.1, 20).unwrap();
        assert_eq!(t.len(), 21);
        assert_eq!(t[0], default_scenario().x0.t_at);
        assert_eq!(years(3), vec![2020, 2025, 2030]);
        assert_eq!(region_names().len(), 12);
    }

    #[test]
    fn full_abatement_runs_cooler() {
        let dirty = temperature_path_inner(0.25, 0.0, 30).unwrap();
        let clean = temperature_path_inner(0.25, 1.0, 30).unwrap();
        assert!(clean[30] < dirty[30]);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        assert!(temperature_path_inner(1.5, 0.1, 10).is_err());
        assert!(temperature_path_inner(0.25, 0.1, 0).is_err());
        assert!(cooperative_path_inner(MAX_SOLVE_STEPS + 1).is_err());
        assert!(scc_by_region_inner(0.25, 0.1, 10_000).is_err());
    }

    #[test]
    fn scc_is_positive_and_cooperation_cools() {
        assert!(scc_by_region_inner(0.25, 0.1, 2).unwrap().iter().all(|v| *v > 0.0));
        let coop = cooperative_path_inner(12).unwrap();
        let bau = temperature_path_inner(0.25, 0.0, 12).unwrap();
        assert!(coop[12] <= bau[12]);
    }
}
