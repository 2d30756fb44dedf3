//! Plot-ready CSV and JSON output.
//!
//! Floating-point cells use 17 significant digits so every value parses back
//! to the identical `f64`. Units are part of the column names.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::Scenario;
use crate::cooperative::ParetoPoint;
use crate::error::{Result, RiceError};
use crate::model::{social_cost_of_co2, year, ControlProfile, RegionControl, RiceState, Trajectory};
use crate::noncooperative::EpisodeLog;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Round-trip exact rendering of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| RiceError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> RiceError {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    RiceError::io(path, io)
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| RiceError::io(path, e))
}

/// Column names of [`write_trajectory_csv`].
pub fn trajectory_header(names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["year", "t_at_degC", "t_lo_degC", "m_at_gtc", "m_up_gtc", "m_lo_gtc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(names.iter().map(|n| format!("k_{n}_trillion_usd")));
    for n in names {
        h.extend([
            format!("s_{n}"),
            format!("mu_{n}"),
            format!("y_{n}_trillion_usd"),
            format!("q_{n}_trillion_usd"),
            format!("c_{n}_trillion_usd"),
            format!("lambda_{n}"),
            format!("omega_{n}"),
        ]);
    }
    h.push("e_total_gtco2_per_year".into());
    h.push("forcing_w_per_m2".into());
    h
}

/// Rows of a trajectory table: one per control step plus the terminal state,
/// whose control and signal cells are empty.
pub fn trajectory_rows(traj: &Trajectory, profile: &ControlProfile) -> Result<Vec<Vec<String>>> {
    let steps = traj.steps();
    if profile.steps() != steps || traj.states.len() != steps + 1 {
        return Err(RiceError::Dimension(format!(
            "trajectory has {steps} steps, profile has {}",
            profile.steps()
        )));
    }
    let n = profile.regions();
    let mut rows = Vec::with_capacity(steps + 1);
    for (k, state) in traj.states.iter().enumerate() {
        let mut row = vec![year(traj.start_step + k).to_string()];
        row.extend(state.to_vec().into_iter().map(fmt_f64));
        match traj.signals.get(k) {
            Some(sig) => {
                for i in 0..n {
                    let c = profile.get(i, k);
                    row.extend(
                        [
                            c.s,
                            c.mu,
                            sig.gross_output[i],
                            sig.net_output[i],
                            sig.consumption[i],
                            sig.abatement[i],
                            sig.damage[i],
                        ]
                        .map(fmt_f64),
                    );
                }
                row.push(fmt_f64(sig.total_emissions));
                row.push(fmt_f64(sig.forcing));
            }
            None => row.extend(std::iter::repeat(String::new()).take(7 * n + 2)),
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_trajectory_csv(traj: &Trajectory, profile: &ControlProfile, names: &[String], path: &Path) -> Result<()> {
    if names.len() != profile.regions() {
        return Err(RiceError::Dimension(format!(
            "{} names for {} regions",
            names.len(),
            profile.regions()
        )));
    }
    write_rows(path, &trajectory_header(names), &trajectory_rows(traj, profile)?)
}

/// States and controls recovered from a file written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path, regions: usize) -> Result<(Vec<RiceState>, ControlProfile)> {
    let file = File::open(path).map_err(|e| RiceError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut states = Vec::new();
    let mut controls: Vec<Vec<RegionControl>> = vec![Vec::new(); regions];
    let parse = |s: &str| s.parse::<f64>().map_err(|e| RiceError::Parse(format!("{path:?}: {e}")));
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let state: Vec<f64> = (1..6 + regions).map(|j| parse(&rec[j])).collect::<Result<_>>()?;
        states.push(RiceState::from_slice(&state)?);
        let base = 6 + regions;
        if !rec[base].is_empty() {
            for (i, row) in controls.iter_mut().enumerate() {
                let s = parse(&rec[base + 7 * i])?;
                let mu = parse(&rec[base + 7 * i + 1])?;
                row.push(RegionControl::new(s, mu));
            }
        }
    }
    Ok((states, ControlProfile::from_rows(controls)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SccRow {
    pub year: u32,
    pub region: String,
    pub scc_usd_per_tco2: f64,
}

/// Perturbation size for SCC differences, GtCO2.
pub const SCC_EPS: f64 = 1e-3;

pub fn scc_table(scenario: &Scenario, profile: &ControlProfile, steps: &[usize]) -> Result<Vec<SccRow>> {
    let mut rows = Vec::with_capacity(steps.len() * scenario.n());
    for &t in steps {
        for i in 0..scenario.n() {
            rows.push(SccRow {
                year: year(t),
                region: scenario.info[i].name.clone(),
                scc_usd_per_tco2: social_cost_of_co2(&scenario.x0, profile, &scenario.model, i, t, SCC_EPS)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_scc_table(scenario: &Scenario, profile: &ControlProfile, steps: &[usize], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = scc_table(scenario, profile, steps)?
        .into_iter()
        .map(|r| vec![r.year.to_string(), r.region, fmt_f64(r.scc_usd_per_tco2)])
        .collect();
    let header = ["year", "region", "scc_usd_per_tco2"].map(String::from);
    write_rows(path, &header, &rows)
}

pub fn write_frontier_csv(points: &[ParetoPoint], path: &Path) -> Result<()> {
    let header = ["p", "w_developed", "w_developing", "t_at_final"].map(String::from);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![fmt_f64(p.p), fmt_f64(p.w_developed), fmt_f64(p.w_developing), fmt_f64(p.t_at_final)])
        .collect();
    write_rows(path, &header, &rows)
}

/// One row per episode: distances then each region's welfare.
pub fn write_episode_log_csv(log: &EpisodeLog, names: &[String], path: &Path) -> Result<()> {
    let mut header: Vec<String> = ["episode", "distance_inf", "distance_l2"].map(String::from).to_vec();
    header.extend(names.iter().map(|n| format!("welfare_{n}")));
    let rows: Vec<Vec<String>> = log
        .episodes
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut row = vec![(k + 1).to_string(), fmt_f64(e.distance_inf), fmt_f64(e.distance_l2)];
            row.extend(e.welfare.iter().map(|w| fmt_f64(*w)));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Controls only, one row per step and region.
pub fn write_profile_csv(profile: &ControlProfile, names: &[String], path: &Path) -> Result<()> {
    let header = ["year", "region", "s", "mu"].map(String::from);
    let mut rows = Vec::with_capacity(profile.steps() * profile.regions());
    for t in 0..profile.steps() {
        for (i, name) in names.iter().enumerate() {
            let c = profile.get(i, t);
            rows.push(vec![year(t).to_string(), name.clone(), fmt_f64(c.s), fmt_f64(c.mu)]);
        }
    }
    write_rows(path, &header, &rows)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| RiceError::Parse(e.to_string()))?;
    let mut f = File::create(path).map_err(|e| RiceError::io(path, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| RiceError::io(path, e))
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Scenario file path, or `embedded-default`.
    pub scenario: String,
    pub options: BTreeMap<String, String>,
    pub tool_version: String,
    pub scenario_sha256: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, scenario_source: &str, scenario: &Scenario, options: BTreeMap<String, String>) -> Result<Self> {
        Ok(RunManifest {
            subcommand: subcommand.to_string(),
            scenario: scenario_source.to_string(),
            options,
            tool_version: TOOL_VERSION.to_string(),
            scenario_sha256: scenario.content_hash()?,
            outputs: Vec::new(),
        })
    }
}

/// Terminal state and welfare of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub final_year: u32,
    pub t_at_final_degc: f64,
    pub regional_welfare: BTreeMap<String, f64>,
    pub weighted_welfare: f64,
    pub any_consumption_floored: bool,
}

impl TrajectorySummary {
    pub fn new(scenario: &Scenario, traj: &Trajectory) -> Self {
        let j = crate::model::regional_welfares(traj);
        TrajectorySummary {
            final_year: year(traj.start_step + traj.steps() - 1),
            t_at_final_degc: traj.final_t_at(),
            weighted_welfare: j.iter().zip(&scenario.weights).map(|(a, b)| a * b).sum(),
            regional_welfare: scenario.info.iter().map(|r| r.name.clone()).zip(j).collect(),
            any_consumption_floored: traj.any_floored(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::build_default_scenario;
    use crate::model::simulate;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rice-report-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn names(s: &Scenario) -> Vec<String> {
        s.info.iter().map(|r| r.name.clone()).collect()
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 84.049] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn trajectory_csv_round_trips() {
        let sc = build_default_scenario().unwrap().subset(&[0, 6, 8]).unwrap();
        let u = sc.default_guess(9);
        let traj = simulate(&sc.x0, &u, &sc.model).unwrap();
        let path = tmp("traj.csv");
        write_trajectory_csv(&traj, &u, &names(&sc), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("year,t_at_degC,t_lo_degC,m_at_gtc,m_up_gtc,m_lo_gtc,k_US_trillion_usd"));
        assert!(header.ends_with("e_total_gtco2_per_year,forcing_w_per_m2"));
        assert_eq!(text.lines().count(), 11);
        let (states, controls) = read_trajectory_csv(&path, 3).unwrap();
        assert_eq!(states, traj.states);
        assert_eq!(controls, u);
        assert!(write_trajectory_csv(&traj, &u, &names(&sc)[..2], &path).is_err());
    }

    #[test]
    fn zero_damage_scc_table_is_zero() {
        let sc = build_default_scenario().unwrap().subset(&[0, 6]).unwrap().with_horizon(20).without_damage();
        let u = sc.default_guess(21);
        let path = tmp("scc.csv");
        write_scc_table(&sc, &u, &[0, 5], &path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["year", "region", "scc_usd_per_tco2"]);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(&rows[2][0], "2045");
        for row in rows {
            assert!(row[2].parse::<f64>().unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn episode_log_and_profile_layout() {
        let sc = build_default_scenario().unwrap().subset(&[0, 6]).unwrap().with_horizon(5);
        let cfg = crate::noncooperative::RbaConfig { episodes: 2, ..Default::default() };
        let opts = crate::solver::SolveOptions::default().single_start();
        let log = crate::noncooperative::rba_dg(&sc, &cfg, &opts).unwrap();
        let path = tmp("episodes.csv");
        write_episode_log_csv(&log, &names(&sc), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,distance_inf,distance_l2,welfare_US,welfare_India\n1,"));
        let path = tmp("profile.csv");
        write_profile_csv(log.final_profile(), &names(&sc), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1 + 2 * 6);
    }

    #[test]
    fn manifest_pins_the_scenario() {
        let sc = build_default_scenario().unwrap();
        let m = RunManifest::new("swm", "embedded-default", &sc, BTreeMap::new()).unwrap();
        assert_eq!(m.scenario_sha256.len(), 64);
        let other = RunManifest::new("swm", "embedded-default", &sc.with_horizon(60), BTreeMap::new()).unwrap();
        assert_ne!(m.scenario_sha256, other.scenario_sha256);
        let path = tmp("manifest.json");
        write_json(&m, &path).unwrap();
        let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
