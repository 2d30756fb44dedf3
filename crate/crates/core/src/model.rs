//! RICE dynamics, payoffs and the social cost of CO2.
//!
//! Units: carbon stocks in GtC, emissions in GtCO2/year, money in trillions of
//! 2005 USD, population in millions, temperatures in °C above 1750. One step
//! is five years and step `t` is calendar year `2020 + 5t`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiceError};

pub const BASE_YEAR: u32 = 2020;
pub const YEARS_PER_STEP: f64 = 5.0;

/// Per-capita consumption floor (thousand USD per person) applied before the utility power.
pub const CONSUMPTION_FLOOR: f64 = 1e-6;

/// Thousand USD per person in one trillion USD per million people.
pub const PER_CAPITA_SCALE: f64 = 1000.0;

pub fn year(t: usize) -> u32 {
    BASE_YEAR + 5 * t as u32
}

/// Climate-sector constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoParams {
    pub zeta11: f64,
    pub zeta12: f64,
    pub zeta21: f64,
    pub zeta22: f64,
    pub zeta23: f64,
    pub zeta32: f64,
    pub zeta33: f64,
    /// GtC added to the atmosphere per GtCO2/year of emissions over one step.
    pub xi1: f64,
    pub phi11: f64,
    pub phi12: f64,
    pub phi21: f64,
    pub phi22: f64,
    /// °C per W/m² of forcing per step.
    pub xi2: f64,
    /// W/m² per doubling of atmospheric carbon.
    pub eta: f64,
    pub m_at_1750: f64,
}

impl GeoParams {
    /// Row-major carbon transition matrix acting on `[m_at, m_up, m_lo]`.
    pub fn carbon_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.zeta11, self.zeta12, 0.0],
            [self.zeta21, self.zeta22, self.zeta23],
            [0.0, self.zeta32, self.zeta33],
        ]
    }

    pub fn temperature_matrix(&self) -> [[f64; 2]; 2] {
        [[self.phi11, self.phi12], [self.phi21, self.phi22]]
    }
}

/// Economic constants of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionParams {
    /// Capital elasticity of output.
    pub gamma: f64,
    /// Annual capital depreciation.
    pub delta_k: f64,
    /// Elasticity of marginal utility.
    pub alpha: f64,
    /// Annual pure rate of time preference.
    pub rho: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Abatement cost exponent.
    pub theta2: f64,
    /// Backstop price at step 0, USD per tCO2.
    pub pb: f64,
    /// Backstop price decline per step.
    pub delta_pb: f64,
}

/// Exogenous signals, indexed `[region][step]` (except `f_ex`, indexed by step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExogenousPaths {
    pub tfp: Vec<Vec<f64>>,
    /// Population in millions.
    pub labor: Vec<Vec<f64>>,
    /// Carbon intensity, GtCO2 per trillion USD of gross output.
    pub sigma: Vec<Vec<f64>>,
    /// Land-use emissions, GtCO2/year.
    pub e_land: Vec<Vec<f64>>,
    /// Forcing from other greenhouse gases, W/m².
    pub f_ex: Vec<f64>,
}

impl ExogenousPaths {
    pub fn regions(&self) -> usize {
        self.tfp.len()
    }

    /// Number of steps covered by every path.
    pub fn len(&self) -> usize {
        self.tfp
            .iter()
            .chain(&self.labor)
            .chain(&self.sigma)
            .chain(&self.e_land)
            .map(Vec::len)
            .chain(std::iter::once(self.f_ex.len()))
            .min()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Game state `[t_at, t_lo, m_at, m_up, m_lo, k_1, ..., k_n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiceState {
    pub t_at: f64,
    pub t_lo: f64,
    pub m_at: f64,
    pub m_up: f64,
    pub m_lo: f64,
    /// Capital stock per region, trillion USD.
    pub capital: Vec<f64>,
}

impl RiceState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.t_at, self.t_lo, self.m_at, self.m_up, self.m_lo];
        v.extend_from_slice(&self.capital);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 6 {
            return Err(RiceError::Dimension(format!(
                "state vector needs at least 6 entries, got {}",
                v.len()
            )));
        }
        Ok(RiceState {
            t_at: v[0],
            t_lo: v[1],
            m_at: v[2],
            m_up: v[3],
            m_lo: v[4],
            capital: v[5..].to_vec(),
        })
    }

    pub fn carbon(&self) -> [f64; 3] {
        [self.m_at, self.m_up, self.m_lo]
    }

    pub fn total_carbon(&self) -> f64 {
        self.m_at + self.m_up + self.m_lo
    }
}

/// Saving rate and emission-reduction rate of one region at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionControl {
    pub s: f64,
    pub mu: f64,
}

impl RegionControl {
    pub const fn new(s: f64, mu: f64) -> Self {
        RegionControl { s, mu }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub s_lo: f64,
    pub s_hi: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds {
            s_lo: 0.05,
            s_hi: 0.95,
            mu_lo: 0.0,
            mu_hi: 1.0,
        }
    }
}

impl ControlBounds {
    pub fn contains(&self, c: &RegionControl) -> bool {
        (self.s_lo..=self.s_hi).contains(&c.s) && (self.mu_lo..=self.mu_hi).contains(&c.mu)
    }

    pub fn clamp(&self, c: RegionControl) -> RegionControl {
        RegionControl {
            s: c.s.clamp(self.s_lo, self.s_hi),
            mu: c.mu.clamp(self.mu_lo, self.mu_hi),
        }
    }
}

/// Controls of all regions over a run of consecutive steps, stored region-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    regions: usize,
    steps: usize,
    controls: Vec<RegionControl>,
}

impl ControlProfile {
    pub fn uniform(regions: usize, steps: usize, control: RegionControl) -> Self {
        ControlProfile {
            regions,
            steps,
            controls: vec![control; regions * steps],
        }
    }

    /// Builds a profile from `rows[i][t]`; all rows must have the same length.
    pub fn from_rows(rows: Vec<Vec<RegionControl>>) -> Result<Self> {
        let regions = rows.len();
        let steps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != steps) {
            return Err(RiceError::Dimension(
                "control profile rows have unequal lengths".into(),
            ));
        }
        Ok(ControlProfile {
            regions,
            steps,
            controls: rows.into_iter().flatten().collect(),
        })
    }

    /// Inverse of [`ControlProfile::to_flat`]: `(region, step, [s, mu])` order.
    pub fn from_flat(regions: usize, steps: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * regions * steps {
            return Err(RiceError::Dimension(format!(
                "flat profile has {} entries, expected {}",
                flat.len(),
                2 * regions * steps
            )));
        }
        Ok(ControlProfile {
            regions,
            steps,
            controls: flat
                .chunks_exact(2)
                .map(|c| RegionControl::new(c[0], c[1]))
                .collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.controls.iter().flat_map(|c| [c.s, c.mu]).collect()
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, region: usize, step: usize) -> RegionControl {
        self.controls[region * self.steps + step]
    }

    pub fn set(&mut self, region: usize, step: usize, control: RegionControl) {
        self.controls[region * self.steps + step] = control;
    }

    pub fn region(&self, region: usize) -> &[RegionControl] {
        &self.controls[region * self.steps..(region + 1) * self.steps]
    }

    pub fn region_mut(&mut self, region: usize) -> &mut [RegionControl] {
        &mut self.controls[region * self.steps..(region + 1) * self.steps]
    }

    /// Controls of every region at one step.
    pub fn at_step(&self, step: usize) -> Vec<RegionControl> {
        (0..self.regions).map(|i| self.get(i, step)).collect()
    }

    pub fn is_within(&self, bounds: &ControlBounds) -> bool {
        self.controls.iter().all(|c| bounds.contains(c))
    }

    /// First `steps` steps of the profile.
    pub fn truncated(&self, steps: usize) -> ControlProfile {
        self.window(0, steps)
    }

    /// Steps `start..start+len`, repeating the last step past the end.
    pub fn window(&self, start: usize, len: usize) -> ControlProfile {
        let mut out = Vec::with_capacity(self.regions * len);
        for i in 0..self.regions {
            for k in 0..len {
                let t = (start + k).min(self.steps.saturating_sub(1));
                out.push(self.get(i, t));
            }
        }
        ControlProfile {
            regions: self.regions,
            steps: len,
            controls: out,
        }
    }

    /// Largest absolute difference over all entries.
    pub fn max_abs_diff(&self, other: &ControlProfile) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_diff(&self, other: &ControlProfile) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Everything [`step`] needs besides the state and controls.
#[derive(Clone, Debug, PartialEq)]
pub struct RiceModel {
    pub geo: GeoParams,
    pub regions: Vec<RegionParams>,
    pub exo: ExogenousPaths,
}

impl RiceModel {
    pub fn n(&self) -> usize {
        self.regions.len()
    }
}

/// Intermediate signals of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSignals {
    pub gross_output: Vec<f64>,
    pub net_output: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Industrial emissions per region, GtCO2/year.
    pub emissions: Vec<f64>,
    /// Output fraction left after abatement spending.
    pub abatement: Vec<f64>,
    /// Output fraction left after climate damage.
    pub damage: Vec<f64>,
    pub theta1: Vec<f64>,
    /// Discounted utility per region.
    pub utility: Vec<f64>,
    /// True where per-capita consumption hit [`CONSUMPTION_FLOOR`].
    pub floored: Vec<bool>,
    pub total_emissions: f64,
    pub forcing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Absolute step index of `states[0]`.
    pub start_step: usize,
    /// One more state than there are control steps.
    pub states: Vec<RiceState>,
    pub signals: Vec<StepSignals>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.signals.len()
    }

    /// Atmospheric temperature at the last controlled step (year 2620 for T = 120).
    pub fn final_t_at(&self) -> f64 {
        self.states[self.steps() - 1].t_at
    }

    pub fn t_at(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t_at).collect()
    }

    pub fn any_floored(&self) -> bool {
        self.signals.iter().any(|s| s.floored.iter().any(|&f| f))
    }
}

pub fn radiative_forcing(m_at: f64, f_ex: f64, geo: &GeoParams) -> Result<f64> {
    if !(m_at > 0.0) {
        return Err(RiceError::domain(
            "radiative_forcing",
            format!("atmospheric carbon must be positive, got {m_at}"),
        ));
    }
    Ok(geo.eta * (m_at / geo.m_at_1750).log2() + f_ex)
}

pub fn step_carbon(m: [f64; 3], e_total: f64, geo: &GeoParams) -> [f64; 3] {
    let phi = geo.carbon_matrix();
    let mut out = [0.0; 3];
    for (row, o) in phi.iter().zip(out.iter_mut()) {
        *o = row[0] * m[0] + row[1] * m[1] + row[2] * m[2];
    }
    out[0] += geo.xi1 * e_total;
    out
}

pub fn step_temperature(temp: [f64; 2], forcing: f64, geo: &GeoParams) -> [f64; 2] {
    [
        geo.phi11 * temp[0] + geo.phi12 * temp[1] + geo.xi2 * forcing,
        geo.phi21 * temp[0] + geo.phi22 * temp[1],
    ]
}

/// Cobb-Douglas output `a * k^gamma * l^(1-gamma)`.
pub fn gross_output(a: f64, k: f64, l: f64, gamma: f64) -> Result<f64> {
    if !(a > 0.0 && k > 0.0 && l > 0.0) {
        return Err(RiceError::domain(
            "gross_output",
            format!("tfp, capital and labor must be positive (a={a}, k={k}, l={l})"),
        ));
    }
    Ok(a * k.powf(gamma) * l.powf(1.0 - gamma))
}

/// Abatement cost coefficient at step `t`. The `(t - 1)` exponent is applied as
/// written, so step 0 carries a factor `1 / (1 - delta_pb)`.
pub fn backstop_theta1(t: usize, p: &RegionParams, sigma_t: f64) -> Result<f64> {
    if t == 0 && p.delta_pb >= 1.0 {
        return Err(RiceError::domain(
            "backstop_theta1",
            "delta_pb = 1 makes the step-0 factor divide by zero",
        ));
    }
    let decay = (1.0 - p.delta_pb).powi(t as i32 - 1);
    Ok(p.pb / (1000.0 * p.theta2) * decay * sigma_t)
}

pub fn abatement_fraction(mu: f64, theta1: f64, theta2: f64) -> Result<f64> {
    let v = 1.0 - theta1 * mu.powf(theta2);
    if v <= 0.0 {
        return Err(RiceError::domain(
            "abatement_fraction",
            format!("abatement cost exceeds output (fraction {v})"),
        ));
    }
    Ok(v)
}

pub fn damage_fraction(t_at: f64, p: &RegionParams) -> Result<f64> {
    if t_at < 0.0 {
        return Err(RiceError::domain(
            "damage_fraction",
            format!("temperature deviation must be nonnegative, got {t_at}"),
        ));
    }
    let v = 1.0 - p.a1 * t_at - p.a2 * t_at.powf(p.a3);
    if v <= 0.0 {
        return Err(RiceError::domain(
            "damage_fraction",
            format!("damage exceeds output (fraction {v})"),
        ));
    }
    Ok(v)
}

/// Total emissions: industrial emissions of every region plus land use.
pub fn global_emissions(outputs: &[f64], mus: &[f64], sigma_t: &[f64], e_land_t: &[f64]) -> Result<f64> {
    let n = outputs.len();
    if mus.len() != n || sigma_t.len() != n || e_land_t.len() != n {
        return Err(RiceError::Dimension(
            "global_emissions inputs must have one entry per region".into(),
        ));
    }
    Ok((0..n)
        .map(|i| sigma_t[i] * (1.0 - mus[i]) * outputs[i] + e_land_t[i])
        .sum())
}

pub fn step_capital(k: f64, s: f64, q_net: f64, delta_k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(RiceError::domain(
            "step_capital",
            format!("capital must be positive, got {k}"),
        ));
    }
    Ok((1.0 - delta_k).powi(5) * k + YEARS_PER_STEP * s * q_net)
}

pub fn discount_factor(rho: f64, t: usize) -> f64 {
    (1.0 + rho).powf(-YEARS_PER_STEP * t as f64)
}

/// Per-capita consumption in thousand USD per person, from trillion USD and millions.
pub fn per_capita(c: f64, l: f64) -> f64 {
    PER_CAPITA_SCALE * c / l
}

/// Discounted population-weighted utility of per-capita consumption.
pub fn utility(c: f64, l: f64, alpha: f64, rho: f64, t: usize) -> Result<f64> {
    if !(c > 0.0 && l > 0.0) {
        return Err(RiceError::domain(
            "utility",
            format!("consumption and population must be positive (c={c}, l={l})"),
        ));
    }
    Ok(l * per_capita_utility(per_capita(c, l), alpha) * discount_factor(rho, t))
}

fn per_capita_utility(pc: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        pc.ln()
    } else {
        (pc.powf(1.0 - alpha) - 1.0) / (1.0 - alpha)
    }
}

/// Extra emissions or payoff-only consumption injected at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Perturbation {
    pub step: usize,
    pub region: usize,
    pub emissions: f64,
    pub consumption: f64,
}

/// One application of the dynamics at absolute step `t`.
pub fn step(
    t: usize,
    x: &RiceState,
    u: &[RegionControl],
    model: &RiceModel,
) -> Result<(RiceState, StepSignals)> {
    step_perturbed(t, x, u, model, None)
}

pub(crate) fn step_perturbed(
    t: usize,
    x: &RiceState,
    u: &[RegionControl],
    model: &RiceModel,
    pert: Option<&Perturbation>,
) -> Result<(RiceState, StepSignals)> {
    let n = model.n();
    if u.len() != n || x.capital.len() != n {
        return Err(RiceError::Dimension(format!(
            "step expects {n} regions, got {} controls and {} capital stocks",
            u.len(),
            x.capital.len()
        )));
    }
    if t >= model.exo.len() {
        return Err(RiceError::Dimension(format!(
            "exogenous paths cover {} steps, step {t} requested",
            model.exo.len()
        )));
    }
    let exo = &model.exo;
    let pert = pert.filter(|p| p.step == t);

    let mut sig = StepSignals {
        gross_output: Vec::with_capacity(n),
        net_output: Vec::with_capacity(n),
        consumption: Vec::with_capacity(n),
        emissions: Vec::with_capacity(n),
        abatement: Vec::with_capacity(n),
        damage: Vec::with_capacity(n),
        theta1: Vec::with_capacity(n),
        utility: Vec::with_capacity(n),
        floored: Vec::with_capacity(n),
        total_emissions: 0.0,
        forcing: 0.0,
    };
    let mut capital = Vec::with_capacity(n);
    let mut e_total = 0.0;

    for (i, (p, c)) in model.regions.iter().zip(u).enumerate() {
        let labor = exo.labor[i][t];
        let y = gross_output(exo.tfp[i][t], x.capital[i], labor, p.gamma)?;
        let theta1 = backstop_theta1(t, p, exo.sigma[i][t])?;
        let lambda = abatement_fraction(c.mu, theta1, p.theta2).map_err(|_| RiceError::Breakdown {
            what: "abatement fraction",
            region: i,
            step: t,
            value: 1.0 - theta1 * c.mu.powf(p.theta2),
        })?;
        let omega = damage_fraction(x.t_at, p).map_err(|e| match e {
            RiceError::Domain { .. } if x.t_at >= 0.0 => RiceError::Breakdown {
                what: "damage fraction",
                region: i,
                step: t,
                value: 1.0 - p.a1 * x.t_at - p.a2 * x.t_at.powf(p.a3),
            },
            e => e,
        })?;
        let q = omega * lambda * y;
        let mut cons = (1.0 - c.s) * q;
        if let Some(pt) = pert.filter(|pt| pt.region == i) {
            cons += pt.consumption;
        }
        let floored = per_capita(cons, labor) < CONSUMPTION_FLOOR;
        let pc = per_capita(cons, labor).max(CONSUMPTION_FLOOR);
        let util = labor * per_capita_utility(pc, p.alpha) * discount_factor(p.rho, t);
        let e_ind = exo.sigma[i][t] * (1.0 - c.mu) * y;
        e_total += e_ind + exo.e_land[i][t];

        capital.push(step_capital(x.capital[i], c.s, q, p.delta_k)?);
        sig.gross_output.push(y);
        sig.net_output.push(q);
        sig.consumption.push((1.0 - c.s) * q);
        sig.emissions.push(e_ind);
        sig.abatement.push(lambda);
        sig.damage.push(omega);
        sig.theta1.push(theta1);
        sig.utility.push(util);
        sig.floored.push(floored);
    }
    if let Some(pt) = pert {
        e_total += pt.emissions;
    }

    let m = step_carbon(x.carbon(), e_total, &model.geo);
    let forcing = radiative_forcing(x.m_at, exo.f_ex[t], &model.geo)?;
    let temp = step_temperature([x.t_at, x.t_lo], forcing, &model.geo);
    sig.total_emissions = e_total;
    sig.forcing = forcing;

    let next = RiceState {
        t_at: temp[0],
        t_lo: temp[1],
        m_at: m[0],
        m_up: m[1],
        m_lo: m[2],
        capital,
    };
    Ok((next, sig))
}

/// Simulates from step 0 over every step of `profile`.
pub fn simulate(x0: &RiceState, profile: &ControlProfile, model: &RiceModel) -> Result<Trajectory> {
    simulate_from(x0, 0, profile, model)
}

/// Simulates from absolute step `start`; `profile` step `k` is applied at `start + k`.
pub fn simulate_from(
    x0: &RiceState,
    start: usize,
    profile: &ControlProfile,
    model: &RiceModel,
) -> Result<Trajectory> {
    simulate_perturbed(x0, start, profile, model, None)
}

pub(crate) fn simulate_perturbed(
    x0: &RiceState,
    start: usize,
    profile: &ControlProfile,
    model: &RiceModel,
    pert: Option<&Perturbation>,
) -> Result<Trajectory> {
    if profile.regions() != model.n() {
        return Err(RiceError::Dimension(format!(
            "profile has {} regions, model has {}",
            profile.regions(),
            model.n()
        )));
    }
    if start + profile.steps() > model.exo.len() {
        return Err(RiceError::Dimension(format!(
            "profile reaches step {} but exogenous paths cover {} steps",
            start + profile.steps(),
            model.exo.len()
        )));
    }
    let mut states = Vec::with_capacity(profile.steps() + 1);
    let mut signals = Vec::with_capacity(profile.steps());
    states.push(x0.clone());
    for k in 0..profile.steps() {
        let t = start + k;
        let (next, sig) = step_perturbed(t, &states[k], &profile.at_step(k), model, pert)
            .map_err(|e| e.at_step(t))?;
        states.push(next);
        signals.push(sig);
    }
    Ok(Trajectory {
        start_step: start,
        states,
        signals,
    })
}

/// Cumulative discounted welfare of one region over the trajectory.
pub fn regional_welfare(traj: &Trajectory, region: usize) -> f64 {
    traj.signals.iter().map(|s| s.utility[region]).sum()
}

pub fn regional_welfares(traj: &Trajectory) -> Vec<f64> {
    let n = traj.states[0].capital.len();
    (0..n).map(|i| regional_welfare(traj, i)).collect()
}

/// `sum_i c_i J_i` with weights that must be nonnegative and sum to one.
pub fn weighted_welfare(traj: &Trajectory, weights: &[f64]) -> Result<f64> {
    check_weights(weights)?;
    let n = traj.states[0].capital.len();
    if weights.len() != n {
        return Err(RiceError::Dimension(format!(
            "{} weights for {n} regions",
            weights.len()
        )));
    }
    Ok(combine_welfare(traj, weights))
}

/// `sum_i w_i J_i` for arbitrary weights.
pub(crate) fn combine_welfare(traj: &Trajectory, weights: &[f64]) -> f64 {
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, w)| w * regional_welfare(traj, i))
        .sum()
}

pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(RiceError::Weights("weights must be nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(RiceError::Weights(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Regional social cost of CO2 at step `t` in USD/tCO2.
///
/// Both derivatives are central differences of re-simulations: `eps` GtCO2 is
/// added to (and removed from) the carbon step at `t`, and a small amount of
/// consumption is added to region `i`'s payoff at `t` only.
pub fn social_cost_of_co2(
    x0: &RiceState,
    profile: &ControlProfile,
    model: &RiceModel,
    region: usize,
    t: usize,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(RiceError::domain("social_cost_of_co2", "eps must be positive"));
    }
    if t >= profile.steps() || region >= model.n() {
        return Err(RiceError::Dimension(format!(
            "SCC requested for region {region} at step {t}, profile has {} regions and {} steps",
            model.n(),
            profile.steps()
        )));
    }
    let welfare = |emissions: f64, consumption: f64| -> Result<f64> {
        let pert = Perturbation {
            step: t,
            region,
            emissions,
            consumption,
        };
        let traj = simulate_perturbed(x0, 0, profile, model, Some(&pert))?;
        Ok(regional_welfare(&traj, region))
    };
    let dj_de = (welfare(eps, 0.0)? - welfare(-eps, 0.0)?) / (2.0 * eps);

    let base = simulate(x0, &profile.truncated(t + 1), model)?;
    let c = base.signals[t].consumption[region];
    let dc = 1e-6 * c;
    let dj_dc = (welfare(0.0, dc)? - welfare(0.0, -dc)?) / (2.0 * dc);
    if dj_dc.abs() < 1e-300 {
        return Err(RiceError::domain(
            "social_cost_of_co2",
            "marginal welfare of consumption vanishes",
        ));
    }
    Ok(-1000.0 * dj_de / dj_dc)
}
