//! Cooperative solution concepts: weighted social welfare, the
//! developed/developing Pareto frontier, and receding-horizon welfare control.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Cluster, Scenario};
use crate::error::{Result, RiceError};
use crate::model::{regional_welfares, simulate, simulate_from, ControlProfile, RiceState, Trajectory};
use crate::solver::{optimize_profile, SolveDiagnostics, SolveOptions, WelfareProblem};

/// A full-horizon optimum with its replayed trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CooperativeSolution {
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    /// Objective value under the weights it was solved for.
    pub objective: f64,
    pub regional_welfare: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

fn solve_weighted(
    scenario: &Scenario,
    weights: Vec<f64>,
    init: &ControlProfile,
    opts: &SolveOptions,
) -> Result<CooperativeSolution> {
    let problem = WelfareProblem::new(&scenario.model, scenario.x0.clone(), 0, weights)?;
    let sol = optimize_profile(&problem, init, &scenario.bounds, opts)?;
    let trajectory = simulate(&scenario.x0, &sol.profile, &scenario.model)?;
    Ok(CooperativeSolution {
        regional_welfare: regional_welfares(&trajectory),
        profile: sol.profile,
        trajectory,
        objective: sol.objective,
        diagnostics: sol.diagnostics,
    })
}

/// Maximizes the Negishi-weighted welfare over the full horizon, starting
/// from `s = 0.25`, `mu = 0.1`.
pub fn solve_swm(scenario: &Scenario, opts: &SolveOptions) -> Result<CooperativeSolution> {
    solve_swm_from(scenario, &scenario.default_guess(scenario.steps()), opts)
}

pub fn solve_swm_from(scenario: &Scenario, init: &ControlProfile, opts: &SolveOptions) -> Result<CooperativeSolution> {
    check_steps(scenario, init)?;
    solve_weighted(scenario, scenario.weights.clone(), init, opts)
}

fn check_steps(scenario: &Scenario, init: &ControlProfile) -> Result<()> {
    if init.regions() != scenario.n() || init.steps() != scenario.steps() {
        return Err(RiceError::Dimension(format!(
            "initial profile is {}x{}, scenario needs {}x{}",
            init.regions(),
            init.steps(),
            scenario.n(),
            scenario.steps()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub p: f64,
    pub profile: ControlProfile,
    /// Unweighted sum of member welfares, utils.
    pub w_developed: f64,
    pub w_developing: f64,
    pub t_at_final: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Unweighted cluster welfare totals of a trajectory.
pub fn cluster_welfare(scenario: &Scenario, traj: &Trajectory) -> (f64, f64) {
    let j = regional_welfares(traj);
    let sum = |c| scenario.cluster_members(c).iter().map(|&i| j[i]).sum::<f64>();
    (sum(Cluster::Developed), sum(Cluster::Developing))
}

/// Per-region weights `p` (developed) and `1 - p` (developing).
fn cluster_weights(scenario: &Scenario, p: f64) -> Vec<f64> {
    scenario
        .info
        .iter()
        .map(|r| match r.cluster {
            Cluster::Developed => p,
            Cluster::Developing => 1.0 - p,
        })
        .collect()
}

/// Maximizes `p * W_developed + (1 - p) * W_developing`.
pub fn solve_pareto_point(
    scenario: &Scenario,
    p: f64,
    init: Option<&ControlProfile>,
    opts: &SolveOptions,
) -> Result<ParetoPoint> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RiceError::domain("solve_pareto_point", format!("p must lie in [0, 1], got {p}")));
    }
    let guess = scenario.default_guess(scenario.steps());
    let init = init.unwrap_or(&guess);
    check_steps(scenario, init)?;
    let sol = solve_weighted(scenario, cluster_weights(scenario, p), init, opts)?;
    let (w_developed, w_developing) = cluster_welfare(scenario, &sol.trajectory);
    Ok(ParetoPoint {
        p,
        t_at_final: sol.trajectory.final_t_at(),
        profile: sol.profile,
        w_developed,
        w_developing,
        diagnostics: sol.diagnostics,
    })
}

/// `k` evenly spaced scalarization weights in `[0.001, 0.999]`.
pub fn default_grid(k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..k)
            .map(|j| 0.001 + 0.998 * j as f64 / (k - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominancePair {
    pub dominating: f64,
    pub dominated: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frontier {
    pub points: Vec<ParetoPoint>,
    /// `(p, error message)` for grid points whose solve failed.
    pub failures: Vec<(f64, String)>,
    /// Pairs where one point beats another in both cluster welfares by more
    /// than the tolerance.
    pub dominated: Vec<DominancePair>,
}

impl Frontier {
    /// Largest relative spread of developed-cluster welfare across points.
    pub fn developed_spread(&self) -> f64 {
        let vals: Vec<f64> = self.points.iter().map(|p| p.w_developed).collect();
        relative_spread(&vals)
    }
}

pub(crate) fn relative_spread(vals: &[f64]) -> f64 {
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if vals.is_empty() {
        0.0
    } else {
        (hi - lo) / hi.abs().max(lo.abs())
    }
}

/// Points strictly better in both welfares, by more than `rel_tol` relative.
pub fn dominance_audit(points: &[ParetoPoint], rel_tol: f64) -> Vec<DominancePair> {
    let beats = |a: f64, b: f64| a - b > rel_tol * a.abs().max(b.abs());
    let mut out = Vec::new();
    for a in points {
        for b in points {
            if beats(a.w_developed, b.w_developed) && beats(a.w_developing, b.w_developing) {
                out.push(DominancePair {
                    dominating: a.p,
                    dominated: b.p,
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierMode {
    /// Each point warm-starts from its solved neighbor.
    Chained,
    /// Points solved independently from the default guess, in parallel.
    Parallel,
}

/// Solves every grid point and audits the result for dominance with
/// tolerance `audit_tol`.
pub fn pareto_frontier(
    scenario: &Scenario,
    grid: &[f64],
    mode: FrontierMode,
    audit_tol: f64,
    opts: &SolveOptions,
) -> Result<Frontier> {
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RiceError::domain(
            "pareto_frontier",
            "grid values must lie in [0, 1], sorted and without duplicates",
        ));
    }
    let results: Vec<(f64, Result<ParetoPoint>)> = match mode {
        FrontierMode::Parallel => grid
            .par_iter()
            .map(|&p| (p, solve_pareto_point(scenario, p, None, opts)))
            .collect(),
        FrontierMode::Chained => {
            let mut prev: Option<ControlProfile> = None;
            grid.iter()
                .map(|&p| {
                    let r = solve_pareto_point(scenario, p, prev.as_ref(), opts);
                    if let Ok(pt) = &r {
                        prev = Some(pt.profile.clone());
                    }
                    (p, r)
                })
                .collect()
        }
    };
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in results {
        match r {
            Ok(pt) => points.push(pt),
            Err(e) => failures.push((p, e.to_string())),
        }
    }
    let dominated = dominance_audit(&points, audit_tol);
    Ok(Frontier {
        points,
        failures,
        dominated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub t_sim: usize,
    pub t_rh: usize,
}

impl MpcConfig {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.t_sim == 0 || self.t_rh == 0 {
            return Err(RiceError::domain("MpcConfig", "t_sim and t_rh must be at least 1"));
        }
        let need = self.t_sim + self.t_rh;
        if scenario.model.exo.len() < need {
            return Err(RiceError::domain(
                "MpcConfig",
                format!(
                    "exogenous paths cover {} steps, receding horizon needs {need}",
                    scenario.model.exo.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Result of a receding-horizon run: the applied controls and the realized path.
#[derive(Clone, Debug, PartialEq)]
pub struct RecedingRun {
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    pub regional_welfare: Vec<f64>,
    /// Window objective at the shifted initializer and after solving, per step.
    pub window_objectives: Vec<(f64, f64)>,
}

/// Receding-horizon weighted-welfare control: at every step solve the
/// `t_rh + 1`-step window from the observed state, apply its first control.
pub fn mpc_rice(scenario: &Scenario, cfg: MpcConfig, opts: &SolveOptions) -> Result<RecedingRun> {
    cfg.validate(scenario)?;
    let n = scenario.n();
    let window = cfg.t_rh + 1;
    let mut plan = scenario.default_guess(window);
    let mut applied = scenario.default_guess(cfg.t_sim);
    let mut state: RiceState = scenario.x0.clone();
    let mut window_objectives = Vec::with_capacity(cfg.t_sim);
    for t in 0..cfg.t_sim {
        let wrap = |e| RiceError::Window {
            step: t,
            region: None,
            source: Box::new(e),
        };
        let problem = WelfareProblem::new(&scenario.model, state.clone(), t, scenario.weights.clone()).map_err(wrap)?;
        let sol = optimize_profile(&problem, &plan, &scenario.bounds, opts).map_err(wrap)?;
        window_objectives.push((sol.diagnostics.initial_objective, sol.objective));
        for i in 0..n {
            applied.set(i, t, sol.profile.get(i, 0));
        }
        let one = sol.profile.truncated(1);
        let step_traj = simulate_from(&state, t, &one, &scenario.model).map_err(wrap)?;
        state = step_traj.states[1].clone();
        plan = sol.profile.window(1, window);
    }
    let trajectory = simulate(&scenario.x0, &applied, &scenario.model)?;
    Ok(RecedingRun {
        regional_welfare: regional_welfares(&trajectory),
        profile: applied,
        trajectory,
        window_objectives,
    })
}
