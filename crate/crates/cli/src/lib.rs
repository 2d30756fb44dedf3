//! Command-line front end: loads a scenario, runs one solution concept and
//! writes CSV tables, a JSON summary and a run manifest into an output
//! directory.

use std::collections::BTreeMap;
use std::error::Error as _;
use std::path::PathBuf;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use rice_game::cooperative::{default_grid, mpc_rice, pareto_frontier, solve_swm, FrontierMode, MpcConfig};
use rice_game::noncooperative::{rba_dg, rhfa_dg, verify_epsilon_ne, NeCertificate, RbaConfig};
use rice_game::report::{
    read_trajectory_csv, write_episode_log_csv, write_frontier_csv, write_json, write_profile_csv,
    write_scc_table, write_trajectory_csv, RunManifest, TrajectorySummary,
};
use rice_game::solver::SolveDiagnostics;
use rice_game::{build_default_scenario, simulate, validate_scenario, RiceError, Scenario, SolveOptions};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "RICE_GAME_OUT";

#[derive(Parser, Debug)]
#[command(name = "rice-game", version, about = "Twelve-region climate-economy game solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replay a fixed control profile.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV whose controls are replayed; default s = 0.25, mu = 0.1.
        #[arg(long)]
        controls: Option<PathBuf>,
    },
    /// Maximize Negishi-weighted global welfare.
    Swm {
        #[command(flatten)]
        common: Common,
    },
    /// Developed/developing Pareto frontier.
    Pareto {
        #[command(flatten)]
        common: Common,
        /// Number of scalarization weights in [0.001, 0.999].
        #[arg(long, default_value_t = 21)]
        grid: usize,
    },
    /// Receding-horizon cooperative control.
    Mpc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        receding: Receding,
    },
    /// Best-response dynamics towards an open-loop Nash equilibrium.
    Rba {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Receding-horizon feedback play.
    Rhfa {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        receding: Receding,
    },
    /// Regional social cost of CO2 under the cooperative optimum, 2020 to 2100.
    Scc {
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file and list every violation.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario TOML; the embedded default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario horizon, in 5-year steps.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Receding {
    /// Prediction horizon in steps.
    #[arg(long = "t-rh", default_value_t = 10)]
    t_rh: usize,
    /// Simulated steps; defaults to horizon + 1.
    #[arg(long = "t-sim")]
    t_sim: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Swm { .. } => "swm",
            Command::Pareto { .. } => "pareto",
            Command::Mpc { .. } => "mpc",
            Command::Rba { .. } => "rba",
            Command::Rhfa { .. } => "rhfa",
            Command::Scc { .. } => "scc",
            Command::Validate { .. } => "validate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Swm { common }
            | Command::Pareto { common, .. }
            | Command::Mpc { common, .. }
            | Command::Rba { common, .. }
            | Command::Rhfa { common, .. }
            | Command::Scc { common }
            | Command::Validate { common } => common,
        }
    }
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(Failure::Validation(msgs)) => {
            for m in msgs {
                eprintln!("validation: {m}");
            }
            EXIT_VALIDATION
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            let mut cause = e.source();
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            EXIT_SOLVER
        }
    }
}

enum Failure {
    Validation(Vec<String>),
    Solver(RiceError),
}

impl From<RiceError> for Failure {
    fn from(e: RiceError) -> Self {
        Failure::Solver(e)
    }
}

fn load_scenario(common: &Common) -> Result<(Scenario, String), Failure> {
    let (scenario, source) = match &common.scenario {
        None => (build_default_scenario()?, "embedded-default".to_string()),
        Some(path) => match Scenario::load(path) {
            Ok(s) => (s, path.display().to_string()),
            Err(RiceError::Validation(v)) => return Err(Failure::Validation(v)),
            Err(e @ (RiceError::Parse(_) | RiceError::Io { .. })) => return Err(Failure::Validation(vec![e.to_string()])),
            Err(e) => return Err(e.into()),
        },
    };
    let scenario = match common.horizon {
        Some(h) if h == 0 => return Err(Failure::Validation(vec!["--horizon must be at least 1".into()])),
        Some(h) => scenario.with_horizon(h),
        None => scenario,
    };
    Ok((scenario, source))
}

/// Collects written files so the manifest can list them.
struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, Failure> {
        std::fs::create_dir_all(&dir).map_err(|e| RiceError::Io {
            path: dir.clone(),
            source: e,
        })?;
        Ok(Output { dir, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

#[derive(Serialize)]
struct SolvedSummary<'a> {
    #[serde(flatten)]
    trajectory: TrajectorySummary,
    objective: f64,
    diagnostics: &'a SolveDiagnostics,
}

#[derive(Serialize)]
struct FrontierSummary {
    points: usize,
    failures: Vec<(f64, String)>,
    dominated_pairs: usize,
    developed_spread_relative: f64,
    t_at_final_min_degc: f64,
    t_at_final_max_degc: f64,
}

#[derive(Serialize)]
struct RbaSummary {
    #[serde(flatten)]
    trajectory: TrajectorySummary,
    episodes: usize,
    stopped_early: Option<usize>,
    distances_inf: Vec<f64>,
    certificate: NeCertificate,
}

#[derive(Serialize)]
struct ValidationSummary {
    violations: Vec<String>,
}

fn run(cmd: &Command) -> Result<i32, Failure> {
    let common = cmd.common();
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(Failure::Validation(vec!["--threads must be at least 1".into()]));
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let (scenario, source) = load_scenario(common)?;
    if !matches!(cmd, Command::Validate { .. }) {
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            return Err(Failure::Validation(violations));
        }
    }
    let out_dir = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| common.out.clone());
    let mut out = Output::new(out_dir)?;
    let opts = SolveOptions {
        seed: common.seed,
        ..SolveOptions::default()
    };
    let names: Vec<String> = scenario.info.iter().map(|r| r.name.clone()).collect();

    let mut options = BTreeMap::new();
    options.insert("horizon".to_string(), scenario.horizon.to_string());
    options.insert("seed".to_string(), common.seed.to_string());
    let mut code = EXIT_OK;

    match cmd {
        Command::Simulate { controls, .. } => {
            let profile = match controls {
                Some(path) => {
                    options.insert("controls".into(), path.display().to_string());
                    read_trajectory_csv(path, scenario.n())?.1
                }
                None => scenario.default_guess(scenario.steps()),
            };
            let traj = simulate(&scenario.x0, &profile, &scenario.model)?;
            write_trajectory_csv(&traj, &profile, &names, &out.path("trajectory.csv"))?;
            write_json(&TrajectorySummary::new(&scenario, &traj), &out.path("summary.json"))?;
        }
        Command::Swm { .. } => {
            let sol = solve_swm(&scenario, &opts)?;
            write_trajectory_csv(&sol.trajectory, &sol.profile, &names, &out.path("trajectory.csv"))?;
            write_profile_csv(&sol.profile, &names, &out.path("profile.csv"))?;
            let summary = SolvedSummary {
                trajectory: TrajectorySummary::new(&scenario, &sol.trajectory),
                objective: sol.objective,
                diagnostics: &sol.diagnostics,
            };
            write_json(&summary, &out.path("summary.json"))?;
        }
        Command::Pareto { grid, .. } => {
            if *grid < 2 {
                return Err(Failure::Validation(vec!["--grid must be at least 2".into()]));
            }
            options.insert("grid".into(), grid.to_string());
            let frontier = pareto_frontier(
                &scenario,
                &default_grid(*grid),
                FrontierMode::Chained,
                opts.objective_tolerance,
                &opts,
            )?;
            write_frontier_csv(&frontier.points, &out.path("frontier.csv"))?;
            let temps = frontier.points.iter().map(|p| p.t_at_final);
            let summary = FrontierSummary {
                points: frontier.points.len(),
                failures: frontier.failures.clone(),
                dominated_pairs: frontier.dominated.len(),
                developed_spread_relative: frontier.developed_spread(),
                t_at_final_min_degc: temps.clone().fold(f64::INFINITY, f64::min),
                t_at_final_max_degc: temps.fold(f64::NEG_INFINITY, f64::max),
            };
            write_json(&summary, &out.path("summary.json"))?;
            if !frontier.failures.is_empty() {
                code = EXIT_SOLVER;
            }
        }
        Command::Mpc { receding, .. } | Command::Rhfa { receding, .. } => {
            let t_sim = receding.t_sim.unwrap_or(scenario.steps());
            options.insert("t_rh".into(), receding.t_rh.to_string());
            options.insert("t_sim".into(), t_sim.to_string());
            let scenario = with_room(&scenario, t_sim + receding.t_rh);
            let (profile, traj) = if matches!(cmd, Command::Mpc { .. }) {
                let run = mpc_rice(&scenario, MpcConfig { t_sim, t_rh: receding.t_rh }, &opts)?;
                (run.profile, run.trajectory)
            } else {
                let run = rhfa_dg(&scenario, t_sim, receding.t_rh, &opts)?;
                (run.profile, run.trajectory)
            };
            write_trajectory_csv(&traj, &profile, &names, &out.path("trajectory.csv"))?;
            write_profile_csv(&profile, &names, &out.path("profile.csv"))?;
            write_json(&TrajectorySummary::new(&scenario, &traj), &out.path("summary.json"))?;
        }
        Command::Rba { episodes, .. } => {
            options.insert("episodes".into(), episodes.to_string());
            let cfg = RbaConfig {
                episodes: *episodes,
                ..RbaConfig::default()
            };
            let log = rba_dg(&scenario, &cfg, &opts)?;
            let profile = log.final_profile();
            let traj = simulate(&scenario.x0, profile, &scenario.model)?;
            write_episode_log_csv(&log, &names, &out.path("episodes.csv"))?;
            write_trajectory_csv(&traj, profile, &names, &out.path("trajectory.csv"))?;
            write_profile_csv(profile, &names, &out.path("profile.csv"))?;
            let summary = RbaSummary {
                trajectory: TrajectorySummary::new(&scenario, &traj),
                episodes: log.episodes.len(),
                stopped_early: log.stopped_early,
                distances_inf: log.distances_inf(),
                certificate: verify_epsilon_ne(&scenario, profile, &opts)?,
            };
            write_json(&summary, &out.path("summary.json"))?;
        }
        Command::Scc { .. } => {
            let sol = solve_swm(&scenario, &opts)?;
            let steps: Vec<usize> = (0..=scenario.horizon.min(16)).collect();
            write_scc_table(&scenario, &sol.profile, &steps, &out.path("scc.csv"))?;
            let summary = SolvedSummary {
                trajectory: TrajectorySummary::new(&scenario, &sol.trajectory),
                objective: sol.objective,
                diagnostics: &sol.diagnostics,
            };
            write_json(&summary, &out.path("summary.json"))?;
        }
        Command::Validate { .. } => {
            let violations = validate_scenario(&scenario);
            for v in &violations {
                eprintln!("validation: {v}");
            }
            if !violations.is_empty() {
                code = EXIT_VALIDATION;
            }
            write_json(&ValidationSummary { violations }, &out.path("validation.json"))?;
        }
    }

    let manifest_path = out.dir.join("manifest.json");
    let mut manifest = RunManifest::new(cmd.name(), &source, &scenario, options)?;
    manifest.outputs = std::mem::take(&mut out.written);
    write_json(&manifest, &manifest_path)?;
    println!("{} finished; outputs in {}", cmd.name(), out.dir.display());
    Ok(code)
}

/// Extends the exogenous paths when a receding-horizon run looks past them.
fn with_room(scenario: &Scenario, need: usize) -> Scenario {
    if scenario.model.exo.len() >= need {
        scenario.clone()
    } else {
        scenario.with_margin(need - scenario.horizon - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receding_runs_get_enough_exogenous_steps() {
        let s = build_default_scenario().unwrap().with_horizon(4);
        let have = s.model.exo.len();
        assert_eq!(with_room(&s, have - 1).model.exo.len(), have);
        assert_eq!(with_room(&s, have + 7).model.exo.len(), have + 7);
    }

    #[test]
    fn help_and_version_exit_cleanly() {
        assert_eq!(cli_dispatch(["rice-game", "--version"]), EXIT_OK);
        assert_eq!(cli_dispatch(["rice-game"]), EXIT_USAGE);
    }
}
