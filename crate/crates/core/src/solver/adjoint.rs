//! Exact gradients of welfare objectives through the discrete dynamics.

use std::f64::consts::LN_2;

use crate::error::{Result, RiceError};
use crate::model::{
    combine_welfare, discount_factor, per_capita, CONSUMPTION_FLOOR, PER_CAPITA_SCALE, simulate_from, ControlProfile, RegionControl, RiceModel,
    RiceState, Trajectory,
};

/// `sum_i w_i J_i` over a window of steps starting at `start_step` from `start_state`.
#[derive(Clone, Debug)]
pub struct WelfareProblem<'a> {
    pub model: &'a RiceModel,
    pub start_state: RiceState,
    pub start_step: usize,
    /// One nonnegative weight per region; they need not sum to one.
    pub weights: Vec<f64>,
}

impl<'a> WelfareProblem<'a> {
    pub fn new(model: &'a RiceModel, start_state: RiceState, start_step: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != model.n() {
            return Err(RiceError::Dimension(format!(
                "{} weights for {} regions",
                weights.len(),
                model.n()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(RiceError::Weights("objective weights must be nonnegative".into()));
        }
        Ok(WelfareProblem {
            model,
            start_state,
            start_step,
            weights,
        })
    }

    pub fn simulate(&self, profile: &ControlProfile) -> Result<Trajectory> {
        simulate_from(&self.start_state, self.start_step, profile, self.model)
    }

    pub fn value(&self, profile: &ControlProfile) -> Result<f64> {
        Ok(combine_welfare(&self.simulate(profile)?, &self.weights))
    }

    /// Objective value and its gradient in flat `(region, step, [s, mu])` order.
    pub fn value_and_gradient(&self, profile: &ControlProfile) -> Result<(f64, Vec<f64>)> {
        let traj = self.simulate(profile)?;
        let mut grad = vec![0.0; 2 * profile.regions() * profile.steps()];
        self.backward(&traj, profile, &mut grad);
        Ok((combine_welfare(&traj, &self.weights), grad))
    }

    fn backward(&self, traj: &Trajectory, profile: &ControlProfile, grad: &mut [f64]) {
        let geo = &self.model.geo;
        let exo = &self.model.exo;
        let n = profile.regions();
        let steps = profile.steps();

        // Adjoints of the state one step ahead; the final state carries no payoff.
        let (mut l_tat, mut l_tlo, mut l_mat, mut l_mup, mut l_mlo) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut l_k = vec![0.0; n];

        for k in (0..steps).rev() {
            let t = self.start_step + k;
            let x = &traj.states[k];
            let sig = &traj.signals[k];

            let bar_e = l_mat * geo.xi1;
            let bar_f = l_tat * geo.xi2;
            let mut n_tat = geo.phi11 * l_tat + geo.phi21 * l_tlo;
            let n_tlo = geo.phi12 * l_tat + geo.phi22 * l_tlo;
            let n_mat = geo.zeta11 * l_mat + geo.zeta21 * l_mup + bar_f * geo.eta / (x.m_at * LN_2);
            let n_mup = geo.zeta12 * l_mat + geo.zeta22 * l_mup + geo.zeta32 * l_mlo;
            let n_mlo = geo.zeta23 * l_mup + geo.zeta33 * l_mlo;

            for i in 0..n {
                let p = &self.model.regions[i];
                let RegionControl { s, mu } = profile.get(i, k);
                let labor = exo.labor[i][t];
                let y = sig.gross_output[i];
                let q = sig.net_output[i];
                let lambda = sig.abatement[i];
                let omega = sig.damage[i];

                let bar_c = if sig.floored[i] || self.weights[i] == 0.0 {
                    0.0
                } else {
                    self.weights[i] * discount_factor(p.rho, t) * PER_CAPITA_SCALE * per_capita(sig.consumption[i], labor).powf(-p.alpha)
                };
                let bar_q = bar_c * (1.0 - s) + l_k[i] * 5.0 * s;
                let bar_s = -bar_c * q + l_k[i] * 5.0 * q;
                let sigma = exo.sigma[i][t];
                let bar_y = bar_q * omega * lambda + bar_e * sigma * (1.0 - mu);
                let dlambda_dmu = if mu > 0.0 {
                    -sig.theta1[i] * p.theta2 * mu.powf(p.theta2 - 1.0)
                } else {
                    0.0
                };
                let bar_mu = bar_q * omega * y * dlambda_dmu - bar_e * sigma * y;
                let bar_omega = bar_q * lambda * y;
                let domega_dt = if x.t_at > 0.0 {
                    -(p.a1 + p.a2 * p.a3 * x.t_at.powf(p.a3 - 1.0))
                } else {
                    -p.a1
                };
                n_tat += bar_omega * domega_dt;

                l_k[i] = l_k[i] * (1.0 - p.delta_k).powi(5) + bar_y * p.gamma * y / x.capital[i];
                let idx = 2 * (i * steps + k);
                grad[idx] = bar_s;
                grad[idx + 1] = bar_mu;
            }
            l_tat = n_tat;
            l_tlo = n_tlo;
            l_mat = n_mat;
            l_mup = n_mup;
            l_mlo = n_mlo;
        }
    }

    /// Per-coordinate preconditioner: square root of the weighted, discounted
    /// marginal utility of each region's net output, relative to its maximum.
    pub fn coordinate_scale(&self, profile: &ControlProfile) -> Result<Vec<f64>> {
        let traj = self.simulate(profile)?;
        let n = profile.regions();
        let steps = profile.steps();
        let mut h = vec![0.0; n * steps];
        for i in 0..n {
            let p = &self.model.regions[i];
            for k in 0..steps {
                let t = self.start_step + k;
                let sig = &traj.signals[k];
                let pc = per_capita(sig.consumption[i], self.model.exo.labor[i][t]).max(CONSUMPTION_FLOOR);
                h[i * steps + k] = self.weights[i] * discount_factor(p.rho, t) * pc.powf(-p.alpha) * sig.net_output[i];
            }
        }
        Ok(relative_sqrt_scale(&h))
    }
}

/// `sqrt(h / max h)` with a floor, duplicated for the `[s, mu]` pair.
pub(crate) fn relative_sqrt_scale(h: &[f64]) -> Vec<f64> {
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    h.iter()
        .flat_map(|v| {
            let r = if hmax > 0.0 { (v / hmax).max(1e-8).sqrt() } else { 1.0 };
            [r, r]
        })
        .collect()
}

/// Gradient of `sum_i w_i J_i` over the whole profile from `x0` at step 0.
pub fn gradient_adjoint(
    profile: &ControlProfile,
    model: &RiceModel,
    x0: &RiceState,
    weights: &[f64],
) -> Result<Vec<f64>> {
    let problem = WelfareProblem::new(model, x0.clone(), 0, weights.to_vec())?;
    Ok(problem.value_and_gradient(profile)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::build_default_scenario;
    use crate::solver::fd::{gradient_fd_stencil, FdStencil};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_profile(n: usize, steps: usize, seed: u64) -> ControlProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = (0..2 * n * steps)
            .map(|j| if j % 2 == 0 { rng.gen_range(0.1..0.9) } else { rng.gen_range(0.05..0.95) })
            .collect();
        ControlProfile::from_flat(n, steps, &flat).unwrap()
    }

    #[test]
    fn matches_fourth_order_differences() {
        let sc = build_default_scenario().unwrap().subset(&[0, 5, 6]).unwrap();
        let profile = random_profile(3, 8, 11);
        let problem = WelfareProblem::new(&sc.model, sc.x0.clone(), 0, sc.weights.clone()).unwrap();
        let (_, adj) = problem.value_and_gradient(&profile).unwrap();
        let f = |x: &[f64]| problem.value(&ControlProfile::from_flat(3, 8, x)?);
        let fd = gradient_fd_stencil(f, &profile.to_flat(), 2e-3, None, FdStencil::Central4).unwrap();
        let scale = adj.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, b) in adj.iter().zip(&fd.gradient) {
            assert!((a - b).abs() <= 1e-5 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn later_window_gradient_matches() {
        let sc = build_default_scenario().unwrap().subset(&[1, 8]).unwrap();
        let profile = random_profile(2, 5, 2);
        let x = simulate_from(&sc.x0, 0, &random_profile(2, 7, 9), &sc.model).unwrap().states[7].clone();
        let problem = WelfareProblem::new(&sc.model, x, 7, vec![0.3, 0.9]).unwrap();
        let (_, adj) = problem.value_and_gradient(&profile).unwrap();
        let f = |x: &[f64]| problem.value(&ControlProfile::from_flat(2, 5, x)?);
        let fd = gradient_fd_stencil(f, &profile.to_flat(), 2e-3, None, FdStencil::Central4).unwrap();
        let scale = adj.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, b) in adj.iter().zip(&fd.gradient) {
            assert!((a - b).abs() <= 1e-5 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn unweighted_final_saving_has_no_effect() {
        let sc = build_default_scenario().unwrap().subset(&[0, 6]).unwrap();
        let profile = random_profile(2, 6, 5);
        let g = gradient_adjoint(&profile, &sc.model, &sc.x0, &[1.0, 0.0]).unwrap();
        // Region 1's saving at the last step only feeds capital that is never used.
        assert_eq!(g[2 * (6 + 5)], 0.0);
        // Region 0's own last-step saving only lowers its consumption.
        assert!(g[2 * 5] < 0.0);
    }

    #[test]
    fn decoupled_abatement_gradient_is_nonpositive() {
        let mut sc = build_default_scenario().unwrap().without_damage().subset(&[0, 5]).unwrap();
        for row in &mut sc.model.exo.sigma {
            row.iter_mut().for_each(|v| *v = 1e-3);
        }
        let profile = random_profile(2, 6, 8);
        let mut clean = sc.clone();
        for row in &mut clean.model.exo.sigma {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for s in [&sc, &clean] {
            let g = gradient_adjoint(&profile, &s.model, &s.x0, &s.weights).unwrap();
            assert!(g.iter().skip(1).step_by(2).all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn scale_is_normalized() {
        let sc = build_default_scenario().unwrap();
        let problem = WelfareProblem::new(&sc.model, sc.x0.clone(), 0, sc.weights.clone()).unwrap();
        let d = problem.coordinate_scale(&sc.default_guess(30)).unwrap();
        assert_eq!(d.len(), 2 * 12 * 30);
        assert!(d.iter().all(|v| *v > 0.0 && *v <= 1.0));
        assert!(d.iter().any(|v| *v == 1.0));
    }

    #[test]
    fn rejects_bad_weights() {
        let sc = build_default_scenario().unwrap();
        assert!(WelfareProblem::new(&sc.model, sc.x0.clone(), 0, vec![1.0; 3]).is_err());
        let mut w = vec![0.0; 12];
        w[0] = -1.0;
        assert!(WelfareProblem::new(&sc.model, sc.x0.clone(), 0, w).is_err());
    }
}
