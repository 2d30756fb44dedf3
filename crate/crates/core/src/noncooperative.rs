//! Noncooperative play: best responses, best-response dynamics toward an
//! open-loop Nash equilibrium, an epsilon-equilibrium check, and
//! receding-horizon feedback play.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Scenario;
use crate::cooperative::solve_swm;
use crate::error::{Result, RiceError};
use crate::model::{regional_welfares, simulate, simulate_from, ControlProfile, RegionControl, Trajectory};
use crate::solver::{optimize_region, ProfileSolution, SolveOptions, WelfareProblem};

fn unit_weights(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
}

/// Region `region`'s welfare-maximizing controls against `profile` with the
/// other rows frozen. Row `region` of `profile` is the initializer.
pub fn best_response(
    scenario: &Scenario,
    region: usize,
    profile: &ControlProfile,
    opts: &SolveOptions,
) -> Result<ProfileSolution> {
    if profile.regions() != scenario.n() || profile.steps() > scenario.model.exo.len() {
        return Err(RiceError::Dimension(format!(
            "profile is {}x{} for a {}-region scenario",
            profile.regions(),
            profile.steps(),
            scenario.n()
        )));
    }
    let problem = WelfareProblem::new(&scenario.model, scenario.x0.clone(), 0, unit_weights(scenario.n(), region))?;
    optimize_region(&problem, region, profile, &scenario.bounds, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// All regions respond to the previous episode's profile.
    Jacobi,
    /// Regions respond in index order, each seeing earlier updates.
    GaussSeidel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbaConfig {
    pub episodes: usize,
    pub update: UpdateRule,
    /// Stop once the inter-episode infinity distance falls below this.
    pub stop_distance: f64,
}

impl Default for RbaConfig {
    fn default() -> Self {
        RbaConfig {
            episodes: 10,
            update: UpdateRule::Jacobi,
            stop_distance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    /// `U^(k+1)`.
    pub profile: ControlProfile,
    pub welfare: Vec<f64>,
    /// `|U^(k+1) - U^(k)|` in the infinity norm.
    pub distance_inf: f64,
    pub distance_l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// `U^(0)` and its welfares.
    pub initial: ControlProfile,
    pub initial_welfare: Vec<f64>,
    pub episodes: Vec<Episode>,
    /// Episode count at which the early-stop distance was reached, if it was.
    pub stopped_early: Option<usize>,
}

impl EpisodeLog {
    pub fn final_profile(&self) -> &ControlProfile {
        self.episodes.last().map_or(&self.initial, |e| &e.profile)
    }

    pub fn distances_inf(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.distance_inf).collect()
    }
}

/// Best-response dynamics started from the cooperative optimum.
pub fn rba_dg(scenario: &Scenario, cfg: &RbaConfig, opts: &SolveOptions) -> Result<EpisodeLog> {
    let coop = solve_swm(scenario, opts)?;
    rba_dg_from(scenario, coop.profile, cfg, opts)
}

/// Best-response dynamics from an explicit `U^(0)`.
pub fn rba_dg_from(
    scenario: &Scenario,
    initial: ControlProfile,
    cfg: &RbaConfig,
    opts: &SolveOptions,
) -> Result<EpisodeLog> {
    if cfg.episodes == 0 {
        return Err(RiceError::domain("rba_dg", "at least one episode is required"));
    }
    let n = scenario.n();
    let initial_welfare = regional_welfares(&simulate(&scenario.x0, &initial, &scenario.model)?);
    let mut log = EpisodeLog {
        initial: initial.clone(),
        initial_welfare,
        episodes: Vec::with_capacity(cfg.episodes),
        stopped_early: None,
    };
    let mut current = initial;
    for k in 0..cfg.episodes {
        let wrap = |i: usize| {
            move |e| RiceError::Episode {
                episode: k,
                region: i,
                source: Box::new(e),
            }
        };
        let mut next = current.clone();
        match cfg.update {
            UpdateRule::Jacobi => {
                let rows: Vec<Result<Vec<RegionControl>>> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        best_response(scenario, i, &current, opts)
                            .map(|s| s.profile.region(i).to_vec())
                            .map_err(wrap(i))
                    })
                    .collect();
                for (i, row) in rows.into_iter().enumerate() {
                    next.region_mut(i).copy_from_slice(&row?);
                }
            }
            UpdateRule::GaussSeidel => {
                for i in 0..n {
                    let sol = best_response(scenario, i, &next, opts).map_err(wrap(i))?;
                    next = sol.profile;
                }
            }
        }
        let traj = simulate(&scenario.x0, &next, &scenario.model)?;
        let episode = Episode {
            welfare: regional_welfares(&traj),
            distance_inf: next.max_abs_diff(&current),
            distance_l2: next.l2_diff(&current),
            profile: next.clone(),
        };
        let done = episode.distance_inf < cfg.stop_distance;
        log.episodes.push(episode);
        current = next;
        if done {
            log.stopped_early = Some(k + 1);
            break;
        }
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub welfare_candidate: f64,
    pub welfare_deviation: f64,
    /// `(deviation - candidate) / |candidate|`.
    pub relative_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeCertificate {
    pub regions: Vec<DeviationCheck>,
    pub epsilon: f64,
}

/// Re-solves every region's best response against `candidate` and reports the
/// largest relative welfare gain from deviating.
pub fn verify_epsilon_ne(scenario: &Scenario, candidate: &ControlProfile, opts: &SolveOptions) -> Result<NeCertificate> {
    if !candidate.is_within(&scenario.bounds) {
        return Err(RiceError::domain("verify_epsilon_ne", "candidate violates the control bounds"));
    }
    let base = regional_welfares(&simulate(&scenario.x0, candidate, &scenario.model)?);
    let regions: Vec<DeviationCheck> = (0..scenario.n())
        .into_par_iter()
        .map(|i| {
            let sol = best_response(scenario, i, candidate, opts)?;
            Ok(DeviationCheck {
                welfare_candidate: base[i],
                welfare_deviation: sol.objective,
                relative_gain: (sol.objective - base[i]) / base[i].abs().max(1e-300),
            })
        })
        .collect::<Result<_>>()?;
    let epsilon = regions.iter().map(|r| r.relative_gain).fold(f64::NEG_INFINITY, f64::max);
    Ok(NeCertificate { regions, epsilon })
}

/// The played profile of receding-horizon feedback play and its trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackRun {
    pub profile: ControlProfile,
    pub trajectory: Trajectory,
    pub regional_welfare: Vec<f64>,
}

/// Receding-horizon feedback play over `t_sim` steps.
///
/// Step 0 plays `opening` (normally the cooperative optimum's first controls).
/// At every later step each region observes the state, assumes the others
/// repeat their last controls over its `t_rh`-step window, and plays the first
/// control of its own optimal plan.
pub fn rhfa_dg_with(
    scenario: &Scenario,
    t_sim: usize,
    t_rh: usize,
    opening: &[RegionControl],
    opts: &SolveOptions,
) -> Result<FeedbackRun> {
    let n = scenario.n();
    if t_sim == 0 || t_rh == 0 {
        return Err(RiceError::domain("rhfa_dg", "t_sim and t_rh must be at least 1"));
    }
    if scenario.model.exo.len() < t_sim + t_rh {
        return Err(RiceError::domain(
            "rhfa_dg",
            format!(
                "exogenous paths cover {} steps, need {}",
                scenario.model.exo.len(),
                t_sim + t_rh
            ),
        ));
    }
    if opening.len() != n {
        return Err(RiceError::Dimension(format!("{} opening controls for {n} regions", opening.len())));
    }
    let mut played = ControlProfile::uniform(n, t_sim, opening[0]);
    for (i, c) in opening.iter().enumerate() {
        played.set(i, 0, scenario.bounds.clamp(*c));
    }
    let mut state = scenario.x0.clone();
    let mut plans: Vec<Vec<RegionControl>> = (0..n).map(|i| vec![played.get(i, 0); t_rh]).collect();
    for t in 0..t_sim - 1 {
        let current = played.at_step(t);
        let one = ControlProfile::from_rows(current.iter().map(|c| vec![*c]).collect())?;
        state = simulate_from(&state, t, &one, &scenario.model)
            .map_err(|e| RiceError::Window {
                step: t,
                region: None,
                source: Box::new(e),
            })?
            .states[1]
            .clone();
        let next: Vec<Result<(RegionControl, Vec<RegionControl>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rows: Vec<Vec<RegionControl>> = current.iter().map(|c| vec![*c; t_rh]).collect();
                rows[i] = plans[i].clone();
                let init = ControlProfile::from_rows(rows)?;
                let problem = WelfareProblem::new(&scenario.model, state.clone(), t + 1, unit_weights(n, i))?;
                let sol = optimize_region(&problem, i, &init, &scenario.bounds, opts).map_err(|e| RiceError::Window {
                    step: t + 1,
                    region: Some(i),
                    source: Box::new(e),
                })?;
                let plan = sol.profile.region(i);
                let mut shifted = plan[1..].to_vec();
                shifted.push(plan[t_rh - 1]);
                Ok((plan[0], shifted))
            })
            .collect();
        for (i, r) in next.into_iter().enumerate() {
            let (c, shifted) = r?;
            played.set(i, t + 1, c);
            plans[i] = shifted;
        }
    }
    let trajectory = simulate(&scenario.x0, &played, &scenario.model)?;
    Ok(FeedbackRun {
        regional_welfare: regional_welfares(&trajectory),
        profile: played,
        trajectory,
    })
}

/// [`rhfa_dg_with`] opened by the full-horizon cooperative optimum.
pub fn rhfa_dg(scenario: &Scenario, t_sim: usize, t_rh: usize, opts: &SolveOptions) -> Result<FeedbackRun> {
    let coop = solve_swm(scenario, opts)?;
    rhfa_dg_with(scenario, t_sim, t_rh, &coop.profile.at_step(0), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::build_default_scenario;
    use crate::cooperative::{mpc_rice, MpcConfig};

    fn pair() -> Scenario {
        build_default_scenario().unwrap().subset(&[0, 6]).unwrap().with_horizon(10)
    }

    fn opts() -> SolveOptions {
        SolveOptions::default().single_start()
    }

    #[test]
    fn single_region_best_response_is_swm() {
        let sc = build_default_scenario().unwrap().subset(&[5]).unwrap().with_horizon(10);
        let swm = solve_swm(&sc, &opts()).unwrap();
        let br = best_response(&sc, 0, &sc.default_guess(11), &opts()).unwrap();
        assert!(br.profile.max_abs_diff(&swm.profile) < 1e-4);
        assert!((br.objective - swm.regional_welfare[0]).abs() <= 1e-9 * br.objective.abs());
    }

    #[test]
    fn best_response_never_loses() {
        let sc = pair();
        let start = sc.default_guess(11);
        let base = regional_welfares(&simulate(&sc.x0, &start, &sc.model).unwrap());
        for i in 0..2 {
            let br = best_response(&sc, i, &start, &opts()).unwrap();
            assert!(br.objective >= base[i]);
            assert_eq!(br.profile.region(1 - i), start.region(1 - i));
        }
    }

    #[test]
    fn dynamics_settle_and_certify() {
        let sc = pair();
        for update in [UpdateRule::Jacobi, UpdateRule::GaussSeidel] {
            let cfg = RbaConfig {
                episodes: 8,
                update,
                stop_distance: 1e-7,
            };
            let log = rba_dg(&sc, &cfg, &opts()).unwrap();
            assert!(log.episodes.iter().all(|e| e.distance_inf >= 0.0 && e.profile.is_within(&sc.bounds)));
            let d = log.distances_inf();
            assert!(*d.last().unwrap() < 1e-3, "{update:?}: {d:?}");
            let cert = verify_epsilon_ne(&sc, log.final_profile(), &opts()).unwrap();
            assert!(cert.epsilon < 1e-6, "{update:?}: {}", cert.epsilon);
            assert!(cert.regions.iter().all(|r| r.relative_gain >= -1e-9));
        }
    }

    #[test]
    fn cooperative_profile_is_not_an_equilibrium() {
        let sc = pair();
        let coop = solve_swm(&sc, &opts()).unwrap();
        let cert = verify_epsilon_ne(&sc, &coop.profile, &opts()).unwrap();
        assert!(cert.epsilon > 1e-6);
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let sc = pair();
        let cfg = RbaConfig {
            episodes: 0,
            ..RbaConfig::default()
        };
        assert!(rba_dg_from(&sc, sc.default_guess(11), &cfg, &opts()).is_err());
    }

    #[test]
    fn single_region_feedback_is_mpc() {
        // A feedback window of t_rh + 1 steps from x(t+1) is the MPC window
        // of t_rh + 1 steps at t+1.
        let sc = build_default_scenario().unwrap().subset(&[6]).unwrap().with_horizon(10);
        let mpc = mpc_rice(&sc, MpcConfig { t_sim: 6, t_rh: 4 }, &opts()).unwrap();
        let fb = rhfa_dg_with(&sc, 6, 5, &mpc.profile.at_step(0), &opts()).unwrap();
        assert!(fb.profile.max_abs_diff(&mpc.profile) < 1e-4, "{}", fb.profile.max_abs_diff(&mpc.profile));
    }

    #[test]
    fn feedback_checks_inputs() {
        let sc = pair();
        let open = sc.default_guess(1).at_step(0);
        assert!(rhfa_dg_with(&sc, 0, 3, &open, &opts()).is_err());
        assert!(rhfa_dg_with(&sc, 5, 1000, &open, &opts()).is_err());
        assert!(rhfa_dg_with(&sc, 5, 3, &open[..1], &opts()).is_err());
        let run = rhfa_dg_with(&sc, 5, 3, &open, &opts()).unwrap();
        assert_eq!(run.profile.at_step(0), open);
        assert_eq!(run.trajectory.steps(), 5);
    }
}
