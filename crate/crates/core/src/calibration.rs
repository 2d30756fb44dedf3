//! Scenario construction: parameter files, exogenous generators, damage
//! calibration, Negishi weights and validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RiceError};
use crate::model::{
    per_capita, simulate, ControlBounds, ControlProfile, ExogenousPaths, GeoParams, RegionControl,
    RegionParams, RiceModel, RiceState, CONSUMPTION_FLOOR,
};

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped default parameter file.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../data/default_scenario.toml");

/// Saving rate of the no-abatement baseline used for Negishi weights.
pub const NEGISHI_SAVING_RATE: f64 = 0.25;

/// Tons of CO2 per ton of carbon.
pub const CO2_PER_C: f64 = 3.666;

pub const STANDARD_REGIONS: [&str; 12] = [
    "US", "EU", "Japan", "Russia", "Eurasia", "China", "India", "MidEast", "Africa", "LatAm", "OHI",
    "OthAsia",
];
pub const DEVELOPED_REGIONS: [&str; 4] = ["US", "EU", "Japan", "OHI"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cluster {
    Developed,
    Developing,
}

/// Per-region generator settings. Rates are per five-year step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGrowth {
    pub tfp_initial: f64,
    pub tfp_growth_per_step: f64,
    pub tfp_growth_decline_per_step: f64,
    pub population_initial_millions: f64,
    pub population_asymptote_millions: f64,
    pub population_convergence_per_step: f64,
    pub sigma_initial_gtco2_per_trillion_usd: f64,
    pub sigma_decline_per_step: f64,
    pub sigma_decline_decay_per_step: f64,
    pub e_land_initial_gtco2_per_year: f64,
    pub e_land_decay_per_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousGrowthSpec {
    pub f_ex_start_wm2: f64,
    pub f_ex_end_wm2: f64,
    pub f_ex_ramp_steps: usize,
    pub regions: Vec<RegionGrowth>,
}

/// Generates deterministic exogenous paths of `length` steps.
///
/// TFP grows at a per-step rate that decays geometrically, population moves
/// geometrically toward its asymptote, carbon intensity declines at a rate that
/// itself decays, land-use emissions decay geometrically, and other forcing
/// ramps linearly then holds.
pub fn generate_exogenous(spec: &ExogenousGrowthSpec, length: usize) -> ExogenousPaths {
    let n = spec.regions.len();
    let mut exo = ExogenousPaths {
        tfp: vec![Vec::with_capacity(length); n],
        labor: vec![Vec::with_capacity(length); n],
        sigma: vec![Vec::with_capacity(length); n],
        e_land: vec![Vec::with_capacity(length); n],
        f_ex: Vec::with_capacity(length),
    };
    for (i, g) in spec.regions.iter().enumerate() {
        let (mut a, mut l, mut s) = (
            g.tfp_initial,
            g.population_initial_millions,
            g.sigma_initial_gtco2_per_trillion_usd,
        );
        for t in 0..length {
            exo.tfp[i].push(a);
            exo.labor[i].push(l);
            exo.sigma[i].push(s);
            exo.e_land[i]
                .push(g.e_land_initial_gtco2_per_year * (1.0 - g.e_land_decay_per_step).powi(t as i32));
            let ga = g.tfp_growth_per_step * (1.0 - g.tfp_growth_decline_per_step).powi(t as i32);
            a /= 1.0 - ga;
            l *= (g.population_asymptote_millions / l).powf(g.population_convergence_per_step);
            s *= 1.0 - g.sigma_decline_per_step * (1.0 - g.sigma_decline_decay_per_step).powi(t as i32);
        }
    }
    for t in 0..length {
        let frac = if spec.f_ex_ramp_steps == 0 {
            1.0
        } else {
            (t as f64 / spec.f_ex_ramp_steps as f64).min(1.0)
        };
        exo.f_ex
            .push(spec.f_ex_start_wm2 + (spec.f_ex_end_wm2 - spec.f_ex_start_wm2) * frac);
    }
    exo
}

/// Quadratic damage closure `(a1, a2, a3) = (0, loss / 4, 2)` so that the
/// damage fraction at 2 °C equals `1 - loss`.
pub fn calibrate_damage(loss_at_2c: f64) -> Result<(f64, f64, f64)> {
    if !(loss_at_2c > 0.0 && loss_at_2c < 1.0) {
        return Err(RiceError::domain(
            "calibrate_damage",
            format!("loss at 2 °C must lie in (0, 1), got {loss_at_2c}"),
        ));
    }
    Ok((0.0, loss_at_2c / 4.0, 2.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub name: String,
    pub cluster: Cluster,
    /// Output loss at 2 °C the damage coefficients were calibrated to.
    pub loss_at_2c: f64,
    /// Backstop price at step 0 as tabulated, USD per ton of carbon.
    pub backstop_usd_per_tc: f64,
}

/// Everything needed to run any solution concept.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub model: RiceModel,
    pub growth: ExogenousGrowthSpec,
    pub x0: RiceState,
    /// Last decision step `T`; decisions are made at steps `0..=T`.
    pub horizon: usize,
    /// Extra path length past the horizon reserved for prediction windows.
    pub margin: usize,
    pub weights: Vec<f64>,
    pub bounds: ControlBounds,
    pub info: Vec<RegionInfo>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.model.n()
    }

    /// Number of decision steps, `T + 1`.
    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.info.iter().position(|r| r.name == name)
    }

    pub fn cluster_members(&self, cluster: Cluster) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.info[i].cluster == cluster).collect()
    }

    /// Same scenario with a new horizon; exogenous paths are regenerated to
    /// cover `horizon + 1 + margin` steps.
    pub fn with_horizon(&self, horizon: usize) -> Scenario {
        let mut s = self.clone();
        s.horizon = horizon;
        s.model.exo = generate_exogenous(&s.growth, horizon + 1 + s.margin);
        s
    }

    pub fn with_margin(&self, margin: usize) -> Scenario {
        let mut s = self.clone();
        s.margin = margin;
        s.model.exo = generate_exogenous(&s.growth, s.horizon + 1 + margin);
        s
    }

    /// Sub-game over the listed regions, with weights renormalized.
    pub fn subset(&self, regions: &[usize]) -> Result<Scenario> {
        if regions.is_empty() || regions.iter().any(|&i| i >= self.n()) {
            return Err(RiceError::Dimension("invalid region subset".into()));
        }
        let pick = |v: &Vec<Vec<f64>>| regions.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let exo = &self.model.exo;
        let total: f64 = regions.iter().map(|&i| self.weights[i]).sum();
        Ok(Scenario {
            model: RiceModel {
                geo: self.model.geo.clone(),
                regions: regions.iter().map(|&i| self.model.regions[i].clone()).collect(),
                exo: ExogenousPaths {
                    tfp: pick(&exo.tfp),
                    labor: pick(&exo.labor),
                    sigma: pick(&exo.sigma),
                    e_land: pick(&exo.e_land),
                    f_ex: exo.f_ex.clone(),
                },
            },
            growth: ExogenousGrowthSpec {
                regions: regions.iter().map(|&i| self.growth.regions[i].clone()).collect(),
                ..self.growth.clone()
            },
            x0: RiceState {
                capital: regions.iter().map(|&i| self.x0.capital[i]).collect(),
                ..self.x0.clone()
            },
            horizon: self.horizon,
            margin: self.margin,
            weights: regions.iter().map(|&i| self.weights[i] / total).collect(),
            bounds: self.bounds,
            info: regions.iter().map(|&i| self.info[i].clone()).collect(),
        })
    }

    /// Same scenario with every damage coefficient set to zero.
    pub fn without_damage(&self) -> Scenario {
        let mut s = self.clone();
        for (p, info) in s.model.regions.iter_mut().zip(&mut s.info) {
            p.a1 = 0.0;
            p.a2 = 0.0;
            info.loss_at_2c = 0.0;
        }
        s
    }

    /// Initial guess used by the cooperative solvers: `s = 0.25`, `mu = 0.1`.
    pub fn default_guess(&self, steps: usize) -> ControlProfile {
        ControlProfile::uniform(self.n(), steps, self.bounds.clamp(RegionControl::new(0.25, 0.1)))
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| RiceError::Parse(e.to_string()))?;
        file.into_scenario()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&ScenarioFile::from_scenario(self)).map_err(|e| RiceError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| RiceError::io(path, e))?;
        Scenario::from_toml_str(&text)
    }

    /// SHA-256 of the canonical serialized form, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// On-disk scenario layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub horizon_steps: usize,
    pub prediction_margin_steps: usize,
    pub geo: GeoParams,
    pub bounds: ControlBounds,
    pub initial_state: InitialStateFile,
    pub weights: WeightsFile,
    pub regions: Vec<RegionFile>,
    pub exogenous: ExogenousGrowthSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateFile {
    pub t_at_degc: f64,
    pub t_lo_degc: f64,
    pub m_at_gtc: f64,
    pub m_up_gtc: f64,
    pub m_lo_gtc: f64,
    pub capital_trillion_usd: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightsFile {
    /// Computed from the no-abatement baseline.
    Negishi,
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub name: String,
    pub cluster: Cluster,
    pub damage_loss_at_2c: f64,
    pub gamma: f64,
    pub delta_k_per_year: f64,
    pub alpha: f64,
    pub rho_per_year: f64,
    pub theta2: f64,
    pub backstop_price_usd_per_tc: f64,
    pub delta_pb_per_step: f64,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(RiceError::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let n = self.regions.len();
        if self.exogenous.regions.len() != n || self.initial_state.capital_trillion_usd.len() != n {
            return Err(RiceError::Parse(format!(
                "{n} regions but {} growth entries and {} capital stocks",
                self.exogenous.regions.len(),
                self.initial_state.capital_trillion_usd.len()
            )));
        }
        let mut regions = Vec::with_capacity(n);
        let mut info = Vec::with_capacity(n);
        for r in &self.regions {
            let (a1, a2, a3) = if r.damage_loss_at_2c == 0.0 {
                (0.0, 0.0, 2.0)
            } else {
                calibrate_damage(r.damage_loss_at_2c)?
            };
            regions.push(RegionParams {
                gamma: r.gamma,
                delta_k: r.delta_k_per_year,
                alpha: r.alpha,
                rho: r.rho_per_year,
                a1,
                a2,
                a3,
                theta2: r.theta2,
                pb: r.backstop_price_usd_per_tc / CO2_PER_C,
                delta_pb: r.delta_pb_per_step,
            });
            info.push(RegionInfo {
                name: r.name.clone(),
                cluster: r.cluster,
                loss_at_2c: r.damage_loss_at_2c,
                backstop_usd_per_tc: r.backstop_price_usd_per_tc,
            });
        }
        let exo = generate_exogenous(&self.exogenous, self.horizon_steps + 1 + self.prediction_margin_steps);
        let st = self.initial_state;
        let mut scenario = Scenario {
            model: RiceModel {
                geo: self.geo,
                regions,
                exo,
            },
            growth: self.exogenous,
            x0: RiceState {
                t_at: st.t_at_degc,
                t_lo: st.t_lo_degc,
                m_at: st.m_at_gtc,
                m_up: st.m_up_gtc,
                m_lo: st.m_lo_gtc,
                capital: st.capital_trillion_usd,
            },
            horizon: self.horizon_steps,
            margin: self.prediction_margin_steps,
            weights: vec![1.0 / n as f64; n],
            bounds: self.bounds,
            info,
        };
        scenario.weights = match self.weights {
            // An invalid file can break the weight simulation; report why.
            WeightsFile::Negishi => negishi_weights(&scenario).map_err(|e| {
                let v = validate_scenario(&scenario);
                if v.is_empty() {
                    e
                } else {
                    RiceError::Validation(v)
                }
            })?,
            WeightsFile::Explicit { values } => values,
        };
        Ok(scenario)
    }

    pub fn from_scenario(s: &Scenario) -> ScenarioFile {
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            horizon_steps: s.horizon,
            prediction_margin_steps: s.margin,
            geo: s.model.geo.clone(),
            bounds: s.bounds,
            initial_state: InitialStateFile {
                t_at_degc: s.x0.t_at,
                t_lo_degc: s.x0.t_lo,
                m_at_gtc: s.x0.m_at,
                m_up_gtc: s.x0.m_up,
                m_lo_gtc: s.x0.m_lo,
                capital_trillion_usd: s.x0.capital.clone(),
            },
            weights: WeightsFile::Explicit {
                values: s.weights.clone(),
            },
            regions: s
                .model
                .regions
                .iter()
                .zip(&s.info)
                .map(|(p, info)| RegionFile {
                    name: info.name.clone(),
                    cluster: info.cluster,
                    damage_loss_at_2c: info.loss_at_2c,
                    gamma: p.gamma,
                    delta_k_per_year: p.delta_k,
                    alpha: p.alpha,
                    rho_per_year: p.rho,
                    theta2: p.theta2,
                    backstop_price_usd_per_tc: info.backstop_usd_per_tc,
                    delta_pb_per_step: p.delta_pb,
                })
                .collect(),
            exogenous: s.growth.clone(),
        }
    }
}

/// Weights proportional to the inverse time-averaged marginal utility of
/// per-capita consumption on the no-abatement baseline, normalized to sum 1.
pub fn negishi_weights(scenario: &Scenario) -> Result<Vec<f64>> {
    let baseline = ControlProfile::uniform(
        scenario.n(),
        scenario.steps(),
        RegionControl::new(NEGISHI_SAVING_RATE, 0.0),
    );
    let traj = simulate(&scenario.x0, &baseline, &scenario.model)?;
    let raw: Vec<f64> = (0..scenario.n())
        .map(|i| {
            let alpha = scenario.model.regions[i].alpha;
            let mean = traj
                .signals
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let pc = per_capita(s.consumption[i], scenario.model.exo.labor[i][t]).max(CONSUMPTION_FLOOR);
                    pc.powf(-alpha)
                })
                .sum::<f64>()
                / traj.steps() as f64;
            1.0 / mean
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// The shipped default: DICE-2016 geophysics, RICE-2011 regional economics,
/// quadratic damages at the tabulated 2 °C losses and tabulated backstop prices.
pub fn build_default_scenario() -> Result<Scenario> {
    let scenario = Scenario::from_toml_str(DEFAULT_SCENARIO_TOML)?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(RiceError::Validation(violations))
    }
}

/// Every violated invariant, as a human-readable line. Empty means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    let mut v = Vec::new();
    let n = s.n();
    let geo = &s.model.geo;

    let phi = geo.carbon_matrix();
    let entries_ok = phi.iter().flatten().all(|x| *x >= 0.0);
    let columns_ok = (0..3).all(|c| ((0..3).map(|r| phi[r][c]).sum::<f64>() - 1.0).abs() <= 1e-6);
    if !entries_ok || !columns_ok {
        v.push("geo: carbon transition matrix must be nonnegative with unit column sums".into());
    }
    for (name, val) in [
        ("eta", geo.eta),
        ("m_at_1750", geo.m_at_1750),
        ("xi1", geo.xi1),
        ("xi2", geo.xi2),
    ] {
        if !(val > 0.0) {
            v.push(format!("geo: {name} must be positive, got {val}"));
        }
    }
    for (name, val) in [("phi11", geo.phi11), ("phi22", geo.phi22)] {
        if !(val > 0.0 && val < 1.0) {
            v.push(format!("geo: {name} must lie in (0, 1), got {val}"));
        }
    }

    if s.info.len() != n {
        v.push(format!("regions: {} labels for {n} regions", s.info.len()));
    }
    for (i, p) in s.model.regions.iter().enumerate() {
        let name = s.info.get(i).map_or("?", |r| r.name.as_str());
        let checks = [
            ("gamma in (0,1)", p.gamma > 0.0 && p.gamma < 1.0),
            ("delta_k in (0,1)", p.delta_k > 0.0 && p.delta_k < 1.0),
            ("alpha > 0", p.alpha > 0.0),
            ("rho > 0", p.rho > 0.0),
            ("theta2 > 1", p.theta2 > 1.0),
            ("pb > 0", p.pb > 0.0),
            ("delta_pb in [0,1)", (0.0..1.0).contains(&p.delta_pb)),
        ];
        for (what, ok) in checks {
            if !ok {
                v.push(format!("region {name}: requires {what}"));
            }
        }
        if let Some(info) = s.info.get(i) {
            let loss = p.a1 * 2.0 + p.a2 * 2f64.powf(p.a3);
            if (loss - info.loss_at_2c).abs() > 1e-9 {
                v.push(format!(
                    "region {name}: damage at 2 °C is {loss}, calibrated loss is {}",
                    info.loss_at_2c
                ));
            }
            let pb = info.backstop_usd_per_tc / CO2_PER_C;
            if (p.pb - pb).abs() > 1e-9 * pb.abs().max(1.0) {
                v.push(format!(
                    "region {name}: backstop price {} USD/tCO2 does not match {} USD/tC",
                    p.pb, info.backstop_usd_per_tc
                ));
            }
        }
    }
    let names: Vec<&str> = s.info.iter().map(|r| r.name.as_str()).collect();
    if names == STANDARD_REGIONS {
        let developed: Vec<&str> = s
            .info
            .iter()
            .filter(|r| r.cluster == Cluster::Developed)
            .map(|r| r.name.as_str())
            .collect();
        if developed != DEVELOPED_REGIONS {
            v.push(format!(
                "clusters: developed regions must be {DEVELOPED_REGIONS:?}, got {developed:?}"
            ));
        }
    }

    let exo = &s.model.exo;
    if exo.regions() != n
        || exo.labor.len() != n
        || exo.sigma.len() != n
        || exo.e_land.len() != n
    {
        v.push("exogenous: paths must have one row per region".into());
    } else {
        let need = s.horizon + 1 + s.margin;
        if exo.len() < need {
            v.push(format!(
                "exogenous: paths cover {} steps, need {need}",
                exo.len()
            ));
        }
        let all = |rows: &Vec<Vec<f64>>, f: fn(f64) -> bool| rows.iter().flatten().all(|x| f(*x));
        if !all(&exo.tfp, |x| x.is_finite() && x > 0.0) {
            v.push("exogenous: tfp must be finite and positive".into());
        }
        if !all(&exo.labor, |x| x.is_finite() && x > 0.0) {
            v.push("exogenous: labor must be finite and positive".into());
        }
        if !all(&exo.sigma, |x| x.is_finite() && x >= 0.0) {
            v.push("exogenous: sigma must be finite and nonnegative".into());
        }
        if !all(&exo.e_land, |x| x.is_finite() && x >= 0.0) {
            v.push("exogenous: land emissions must be finite and nonnegative".into());
        }
        if !exo.f_ex.iter().all(|x| x.is_finite()) {
            v.push("exogenous: f_ex must be finite".into());
        }
    }
    for (i, g) in s.growth.regions.iter().enumerate() {
        let rates = [
            g.tfp_growth_per_step,
            g.tfp_growth_decline_per_step,
            g.population_convergence_per_step,
            g.sigma_decline_per_step,
            g.sigma_decline_decay_per_step,
            g.e_land_decay_per_step,
        ];
        if rates.iter().any(|r| !(0.0..1.0).contains(r)) || !(g.population_asymptote_millions >= 0.0) {
            let name = s.info.get(i).map_or("?", |r| r.name.as_str());
            v.push(format!(
                "exogenous: growth rates for {name} must lie in [0,1) with a nonnegative population asymptote"
            ));
        }
    }

    let x0 = &s.x0;
    if x0.capital.len() != n {
        v.push(format!("initial_state: {} capital stocks for {n} regions", x0.capital.len()));
    }
    if !(x0.m_at > 0.0 && x0.m_up > 0.0 && x0.m_lo > 0.0) {
        v.push("initial_state: carbon stocks must be positive".into());
    }
    if !x0.capital.iter().all(|k| *k > 0.0 && k.is_finite()) {
        v.push("initial_state: capital must be positive".into());
    }
    if !(x0.t_at.is_finite() && x0.t_lo.is_finite()) {
        v.push("initial_state: temperatures must be finite".into());
    }

    let wsum: f64 = s.weights.iter().sum();
    if s.weights.len() != n || (wsum - 1.0).abs() > 1e-9 || s.weights.iter().any(|w| !(*w > 0.0)) {
        v.push(format!(
            "weights: need {n} positive weights summing to 1, got {} summing to {wsum}",
            s.weights.len()
        ));
    }

    let b = &s.bounds;
    if !(0.0 <= b.s_lo && b.s_lo <= b.s_hi && b.s_hi <= 1.0 && 0.0 <= b.mu_lo && b.mu_lo <= b.mu_hi && b.mu_hi <= 1.0) {
        v.push("bounds: control bounds must be ordered subsets of [0, 1]".into());
    }
    v
}
