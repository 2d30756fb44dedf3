//! Welfare maximization over control profiles, for all regions jointly or for
//! a single region with the others frozen.

use serde::{Deserialize, Serialize};

use super::adjoint::WelfareProblem;
use super::lbfgs::{maximize_scaled, DecisionVector, SolveOptions, SolveReport, Termination};
use crate::error::Result;
use crate::model::{ControlBounds, ControlProfile};

/// Solver diagnostics without the decision vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub start_index: usize,
    pub initial_objective: f64,
    pub objective_log: Vec<f64>,
}

impl SolveDiagnostics {
    fn from_report(r: &SolveReport) -> Self {
        SolveDiagnostics {
            iterations: r.iterations,
            evaluations: r.evaluations,
            termination: r.termination,
            start_index: r.start_index,
            initial_objective: r.objective_log.first().copied().unwrap_or(r.objective),
            objective_log: r.objective_log.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSolution {
    pub profile: ControlProfile,
    pub objective: f64,
    pub diagnostics: SolveDiagnostics,
}

fn box_for(len: usize, bounds: &ControlBounds) -> (Vec<f64>, Vec<f64>) {
    let lower = (0..len)
        .map(|j| if j % 2 == 0 { bounds.s_lo } else { bounds.mu_lo })
        .collect();
    let upper = (0..len)
        .map(|j| if j % 2 == 0 { bounds.s_hi } else { bounds.mu_hi })
        .collect();
    (lower, upper)
}

/// Maximizes the problem's weighted welfare over every control in `init`.
pub fn optimize_profile(
    problem: &WelfareProblem,
    init: &ControlProfile,
    bounds: &ControlBounds,
    opts: &SolveOptions,
) -> Result<ProfileSolution> {
    let (n, steps) = (init.regions(), init.steps());
    let flat = init.to_flat();
    let (lower, upper) = box_for(flat.len(), bounds);
    let start = DecisionVector::new(flat, lower, upper)?.with_values(init.to_flat());
    let scale = problem.coordinate_scale(&ControlProfile::from_flat(n, steps, &start.values)?)?;
    let f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
        let profile = ControlProfile::from_flat(n, steps, x)?;
        let (v, grad) = problem.value_and_gradient(&profile)?;
        g.copy_from_slice(&grad);
        Ok(v)
    };
    let report = maximize_scaled(f, &start, Some(&scale), opts)?;
    Ok(ProfileSolution {
        profile: ControlProfile::from_flat(n, steps, &report.solution.values)?,
        objective: report.objective,
        diagnostics: SolveDiagnostics::from_report(&report),
    })
}

/// Maximizes over region `region`'s controls only; every other row of `init`
/// stays fixed.
pub fn optimize_region(
    problem: &WelfareProblem,
    region: usize,
    init: &ControlProfile,
    bounds: &ControlBounds,
    opts: &SolveOptions,
) -> Result<ProfileSolution> {
    let (n, steps) = (init.regions(), init.steps());
    if region >= n {
        return Err(crate::error::RiceError::Dimension(format!(
            "region {region} out of range for {n} regions"
        )));
    }
    let span = region * 2 * steps..(region + 1) * 2 * steps;
    let full = init.to_flat();
    let (lower, upper) = box_for(2 * steps, bounds);
    let start = DecisionVector::new(full[span.clone()].to_vec(), lower, upper)?;
    let start = start.with_values(start.values.clone());

    let mut seeded = full.clone();
    seeded[span.clone()].copy_from_slice(&start.values);
    let full_scale = problem.coordinate_scale(&ControlProfile::from_flat(n, steps, &seeded)?)?;
    let slice = &full_scale[span.clone()];
    let top = slice.iter().cloned().fold(0.0, f64::max);
    let scale: Vec<f64> = slice.iter().map(|v| (v / top).max(1e-4)).collect();

    let assemble = |x: &[f64]| -> Result<ControlProfile> {
        let mut flat = full.clone();
        flat[span.clone()].copy_from_slice(x);
        ControlProfile::from_flat(n, steps, &flat)
    };
    let f = |x: &[f64], g: &mut [f64]| -> Result<f64> {
        let (v, grad) = problem.value_and_gradient(&assemble(x)?)?;
        g.copy_from_slice(&grad[span.clone()]);
        Ok(v)
    };
    let report = maximize_scaled(f, &start, Some(&scale), opts)?;
    Ok(ProfileSolution {
        profile: assemble(&report.solution.values)?,
        objective: report.objective,
        diagnostics: SolveDiagnostics::from_report(&report),
    })
}
