//! Projected limited-memory quasi-Newton ascent over a box.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiceError};

/// Values together with their elementwise box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DecisionVector {
    pub fn new(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if values.len() != lower.len() || values.len() != upper.len() {
            return Err(RiceError::Dimension(
                "decision vector and bounds differ in length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(RiceError::Solver("lower bound above upper bound".into()));
        }
        Ok(DecisionVector {
            values,
            lower,
            upper,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_feasible(&self) -> bool {
        self.values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Same bounds, new values clamped into them.
    pub fn with_values(&self, values: Vec<f64>) -> DecisionVector {
        let mut out = DecisionVector {
            values,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        };
        out.project();
        out
    }

    pub fn project(&mut self) {
        for ((v, l), u) in self.values.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    /// Sufficient-increase constant.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Infinity norm of the projected gradient of the scaled objective.
    pub gradient_tolerance: f64,
    /// Relative objective change between accepted iterates.
    pub objective_tolerance: f64,
    pub line_search: LineSearch,
    /// Number of correction pairs kept.
    pub memory: usize,
    pub multistart: usize,
    pub seed: u64,
    /// Multiplier on the objective; `None` means `1 / |f(init)|`.
    pub objective_scale: Option<f64>,
    /// Half-width of multistart perturbations as a fraction of each box width.
    pub perturbation: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 2000,
            gradient_tolerance: 1e-9,
            objective_tolerance: 1e-13,
            line_search: LineSearch::default(),
            memory: 10,
            multistart: 4,
            seed: 0,
            objective_scale: None,
            perturbation: 0.1,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0 && self.objective_tolerance > 0.0) {
            return Err(RiceError::Solver("tolerances must be positive".into()));
        }
        if self.multistart == 0 {
            return Err(RiceError::Solver("multistart count must be at least 1".into()));
        }
        if self.memory == 0 {
            return Err(RiceError::Solver("quasi-Newton memory must be at least 1".into()));
        }
        Ok(())
    }

    /// Single start, otherwise identical.
    pub fn single_start(&self) -> SolveOptions {
        SolveOptions {
            multistart: 1,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Gradient,
    ObjectiveChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: DecisionVector,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective (unscaled) after each accepted iterate, starting with the initial point.
    pub objective_log: Vec<f64>,
    /// Index of the multistart run that produced the solution.
    pub start_index: usize,
}

/// Maximizes `objective` over the box of `init`.
///
/// `objective(x, grad)` returns the value at `x` and writes its gradient into
/// `grad`. Errors during the run count as failed trial points; an error at the
/// initial point is returned.
pub fn maximize<F>(objective: F, init: &DecisionVector, opts: &SolveOptions) -> Result<SolveReport>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64> + Sync,
{
    maximize_scaled(objective, init, None, opts)
}

/// As [`maximize`], with a positive per-coordinate scale `d`: the iteration runs
/// in `z = d * x`, which acts as a diagonal preconditioner.
pub fn maximize_scaled<F>(
    objective: F,
    init: &DecisionVector,
    scale: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SolveReport>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64> + Sync,
{
    opts.validate()?;
    if let Some(d) = scale {
        if d.len() != init.len() || d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(RiceError::Solver(
                "coordinate scale must be positive and match the dimension".into(),
            ));
        }
    }
    let starts = multistart_points(init, opts);
    let runs: Vec<Result<SolveReport>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, start)| {
            let mut r = run_single(&objective, start, scale, opts)?;
            r.start_index = k;
            Ok(r)
        })
        .collect();

    let mut best: Option<SolveReport> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.objective > b.objective) {
                    best = Some(r);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(RiceError::Solver("no start produced a result".into())),
    }
}

fn multistart_points(init: &DecisionVector, opts: &SolveOptions) -> Vec<DecisionVector> {
    let mut starts = vec![init.with_values(init.values.clone())];
    for k in 1..opts.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        let values = init
            .values
            .iter()
            .zip(init.lower.iter().zip(&init.upper))
            .map(|(v, (l, u))| {
                let half = opts.perturbation * (u - l);
                v + rng.gen_range(-1.0..=1.0) * half
            })
            .collect();
        starts.push(init.with_values(values));
    }
    starts
}

struct Scaled<'a, F> {
    f: &'a F,
    d: Vec<f64>,
    /// Sign-flipped multiplier: the run minimizes `-scale * f`.
    mult: f64,
    x: Vec<f64>,
    gx: Vec<f64>,
    evaluations: usize,
}

impl<F> Scaled<'_, F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64>,
{
    /// Returns `(phi, raw objective)` and writes the gradient of `phi` in `z`.
    fn eval(&mut self, z: &[f64], g: &mut [f64]) -> Option<(f64, f64)> {
        for ((x, z), d) in self.x.iter_mut().zip(z).zip(&self.d) {
            *x = z / d;
        }
        self.evaluations += 1;
        let v = (self.f)(&self.x, &mut self.gx).ok()?;
        if !v.is_finite() {
            return None;
        }
        for ((g, gx), d) in g.iter_mut().zip(&self.gx).zip(&self.d) {
            *g = -self.mult * gx / d;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((-self.mult * v, v))
    }
}

fn run_single<F>(
    objective: &F,
    init: &DecisionVector,
    scale: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<SolveReport>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = init.len();
    let d: Vec<f64> = scale.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let lo: Vec<f64> = init.lower.iter().zip(&d).map(|(l, d)| l * d).collect();
    let hi: Vec<f64> = init.upper.iter().zip(&d).map(|(u, d)| u * d).collect();
    let mut z: Vec<f64> = init.values.iter().zip(&d).map(|(x, d)| x * d).collect();
    project(&mut z, &lo, &hi);

    // Evaluate once unscaled to fix the objective multiplier.
    let mut gx = vec![0.0; n];
    let x0: Vec<f64> = z.iter().zip(&d).map(|(z, d)| z / d).collect();
    let f0 = objective(&x0, &mut gx)?;
    if !f0.is_finite() {
        return Err(RiceError::Solver(format!(
            "objective is not finite at the initial point ({f0})"
        )));
    }
    let mult = match opts.objective_scale {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(RiceError::Solver("objective scale must be positive".into())),
        None if f0 != 0.0 => 1.0 / f0.abs(),
        None => 1.0,
    };
    let mut problem = Scaled {
        f: objective,
        d,
        mult,
        x: vec![0.0; n],
        gx,
        evaluations: 1,
    };

    let mut g = vec![0.0; n];
    let (mut phi, mut raw) = problem
        .eval(&z, &mut g)
        .ok_or_else(|| RiceError::Solver("objective failed at the initial point".into()))?;

    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut log = vec![raw];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let mut z_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut free = vec![true; n];

    while iterations < opts.max_iterations {
        let pg = projected_gradient_norm(&z, &g, &lo, &hi);
        if pg < opts.gradient_tolerance {
            termination = Termination::Gradient;
            break;
        }
        for j in 0..n {
            let width = 1e-12 * (1.0 + hi[j].abs().max(lo[j].abs()));
            free[j] = !((z[j] <= lo[j] + width && g[j] > 0.0) || (z[j] >= hi[j] - width && g[j] < 0.0));
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let steepest = attempt == 1 || memory.is_empty();
            if steepest {
                memory.clear();
                for j in 0..n {
                    dir[j] = if free[j] { -g[j] } else { 0.0 };
                }
            } else {
                two_loop(&memory, &g, &free, &mut dir);
                let slope: f64 = dir.iter().zip(&g).map(|(p, g)| p * g).sum();
                if !(slope < 0.0) {
                    continue;
                }
            }
            // Without curvature information, start with a unit step in the infinity norm.
            let mut alpha = if steepest {
                let m = dir.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if m > 0.0 {
                    (1.0 / m).min(1.0)
                } else {
                    1.0
                }
            } else {
                1.0
            };
            for _ in 0..opts.line_search.max_backtracks {
                let mut moved = false;
                let mut predicted = 0.0;
                for j in 0..n {
                    z_new[j] = (z[j] + alpha * dir[j]).clamp(lo[j], hi[j]);
                    let step = z_new[j] - z[j];
                    moved |= step != 0.0;
                    predicted += g[j] * step;
                }
                if !moved {
                    break;
                }
                if let Some((phi_new, raw_new)) = problem.eval(&z_new, &mut g_new) {
                    if phi_new <= phi + opts.line_search.armijo * predicted {
                        accepted = Some((phi_new, raw_new));
                        break;
                    }
                }
                alpha *= opts.line_search.shrink;
            }
            if accepted.is_some() || steepest {
                break;
            }
        }

        let Some((phi_new, raw_new)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * yy && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let change = (phi - phi_new).abs() / phi.abs().max(phi_new.abs()).max(1e-300);
        std::mem::swap(&mut z, &mut z_new);
        std::mem::swap(&mut g, &mut g_new);
        phi = phi_new;
        raw = raw_new;
        log.push(raw);
        if change < opts.objective_tolerance {
            termination = Termination::ObjectiveChange;
            break;
        }
    }

    let values: Vec<f64> = z.iter().zip(&problem.d).map(|(z, d)| z / d).collect();
    Ok(SolveReport {
        solution: init.with_values(values),
        objective: raw,
        iterations,
        evaluations: problem.evaluations,
        termination,
        objective_log: log,
        start_index: 0,
    })
}

fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((z, l), h) in z.iter_mut().zip(lo).zip(hi) {
        *z = z.clamp(*l, *h);
    }
}

/// Infinity norm of `P(z - g) - z`.
pub(crate) fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((z, g), (l, h))| ((z - g).clamp(*l, *h) - z).abs())
        .fold(0.0, f64::max)
}

/// `dir = -H g` on the free coordinates, zero elsewhere.
fn two_loop(memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64], free: &[bool], dir: &mut [f64]) {
    let masked = |v: &[f64], j: usize| if free[j] { v[j] } else { 0.0 };
    for (j, q) in dir.iter_mut().enumerate() {
        *q = masked(g, j);
    }
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * (0..dir.len()).map(|j| masked(s, j) * dir[j]).sum::<f64>();
        for j in 0..dir.len() {
            dir[j] -= a * masked(y, j);
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let sy: f64 = (0..dir.len()).map(|j| masked(s, j) * masked(y, j)).sum();
        let yy: f64 = (0..dir.len()).map(|j| masked(y, j).powi(2)).sum();
        if sy > 0.0 && yy > 0.0 {
            let gamma = sy / yy;
            dir.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * (0..dir.len()).map(|j| masked(y, j) * dir[j]).sum::<f64>();
        for j in 0..dir.len() {
            dir[j] += (a - b) * masked(s, j);
        }
    }
    for (j, v) in dir.iter_mut().enumerate() {
        *v = if free[j] { -*v } else { 0.0 };
    }
}
