use rayon::prelude::*;
use serde::Serialize;

use super::{IfProblem, IfpError, Policy};

/// Root-solve stop: `|g(t)| ≤ G_TOL · u′(t)`.
const G_TOL: f64 = 1e-14;
/// Root-solve stop: bracket width `≤ WIDTH_TOL · hi`.
const WIDTH_TOL: f64 = 1e-15;
const FIRST_STEP: f64 = 1e-6;

/// Solve the Euler equation at `(a, z)` for the policy of the next
/// iteration, starting the bracket search at `hint`.
fn solve_node(
    problem: &IfProblem,
    policy: &Policy,
    z: usize,
    a: f64,
    hint: f64,
) -> Result<f64, IfpError> {
    let u = problem.utility();
    let mu_a = u.marginal_unchecked(a);
    if problem.discounted_expectation(policy, z, a, a) <= mu_a {
        return Ok(a);
    }
    // Strictly decreasing in t with g(a) < 0 here and g(0+) > 0.
    let g = |t: f64| u.marginal_unchecked(t) - problem.discounted_expectation(policy, z, a, t);

    let hint = if hint > 0.0 && hint < a { hint } else { 0.5 * a };
    let (mut lo, mut hi);
    if g(hint) > 0.0 {
        lo = hint;
        hi = a;
        let mut d = FIRST_STEP;
        while d < 1.0 {
            let cand = hint + d * (a - hint);
            if g(cand) <= 0.0 {
                hi = cand;
                break;
            }
            lo = cand;
            d *= 4.0;
        }
    } else {
        hi = hint;
        let mut d = FIRST_STEP;
        loop {
            let cand = if d < 0.5 { hint * (1.0 - d) } else { hi * 0.5 };
            if !(cand > f64::MIN_POSITIVE) {
                return Err(IfpError::SolverError(format!(
                    "no positive Euler root below a = {a} in state {z}"
                )));
            }
            if g(cand) > 0.0 {
                lo = cand;
                break;
            }
            hi = cand;
            d *= 4.0;
        }
    }

    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= WIDTH_TOL * hi {
            return Ok(mid);
        }
        let gm = g(mid);
        if !gm.is_finite() {
            return Err(IfpError::SolverError(format!(
                "non-finite residual at t = {mid}, a = {a}, state {z}"
            )));
        }
        if gm.abs() <= G_TOL * u.marginal_unchecked(mid) {
            return Ok(mid);
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One application of the Coleman operator. States with identical
/// transition rows share a single root solve per node.
pub fn coleman_step(policy: &Policy, problem: &IfProblem) -> Result<Policy, IfpError> {
    let k = problem.income().len();
    if policy.states() != k || policy.grid() != problem.grid() {
        return Err(IfpError::InvalidPolicy(
            "policy grid or state count does not match the problem".into(),
        ));
    }
    let nodes = problem.grid().nodes();
    let n = nodes.len();
    let groups = problem.income().row_groups();
    let solved: Vec<f64> = (0..groups.len() * n)
        .into_par_iter()
        .map(|task| {
            let (gi, i) = (task / n, task % n);
            let z = groups[gi][0];
            solve_node(problem, policy, z, nodes[i], policy.values(z)[i])
        })
        .collect::<Result<_, _>>()?;

    let mut out = vec![0.0; k * n];
    for (gi, group) in groups.iter().enumerate() {
        let row = &solved[gi * n..(gi + 1) * n];
        // Rounding in the root solve can leave tiny inversions; restore
        // monotonicity and feasibility.
        let mut running = 0.0f64;
        let cleaned: Vec<f64> = row
            .iter()
            .zip(nodes)
            .map(|(c, a)| {
                running = running.max(*c);
                running.min(*a)
            })
            .collect();
        for &z in group {
            out[z * n..(z + 1) * n].copy_from_slice(&cleaned);
        }
    }
    Ok(Policy::from_flat(policy.grid_arc().clone(), out, k))
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Stop once the metric is at most this; defaults to `1e−9 · u′(a_max)`.
    pub tol: Option<f64>,
    /// Relative float floor: the effective tolerance is never below
    /// `noise_floor · max u′(c)` over nodes where the constraint is slack.
    pub noise_floor: f64,
    pub max_iter: usize,
    pub initial: Option<Policy>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: None,
            noise_floor: 1e-11,
            max_iter: 20_000,
            initial: None,
        }
    }
}

/// Number of trailing metric ratios summarized in `observed_modulus`.
pub const MODULUS_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_metric: f64,
    pub tolerance: f64,
    pub effective_tolerance: f64,
    /// Largest ratio of successive metrics over the last ten iterations.
    pub observed_modulus: Option<f64>,
    pub beta_r: f64,
    pub converged: bool,
    pub metric_history: Vec<f64>,
}

fn trailing_modulus(history: &[f64]) -> Option<f64> {
    let ratios: Vec<f64> = history
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let start = ratios.len().saturating_sub(MODULUS_WINDOW);
    ratios[start..].iter().copied().reduce(f64::max)
}

/// Iterate the Coleman operator from `c(a, z) = a` (or `config.initial`)
/// until the marginal-utility metric meets the tolerance.
pub fn solve(problem: &IfProblem, config: &SolveConfig) -> Result<(Policy, SolveReport), IfpError> {
    let u = *problem.utility();
    let k = problem.income().len();
    let tol = config
        .tol
        .unwrap_or_else(|| 1e-9 * u.marginal_unchecked(problem.grid().a_max()));
    if !(tol > 0.0) || config.max_iter == 0 {
        return Err(IfpError::InvalidProblem(
            "tolerance must be positive and max_iter at least 1".into(),
        ));
    }
    let mut current = match &config.initial {
        Some(p) => p.clone(),
        None => Policy::consume_everything(problem.grid_arc().clone(), k),
    };
    let mut mu_cur: Vec<f64> = current.flat().iter().map(|c| u.marginal_unchecked(*c)).collect();
    let nodes = problem.grid().nodes();
    let mut history = Vec::new();
    let mut effective = tol;
    for it in 1..=config.max_iter {
        let next = coleman_step(&current, problem)?;
        let mu_next: Vec<f64> = next.flat().iter().map(|c| u.marginal_unchecked(*c)).collect();
        let metric = mu_cur
            .iter()
            .zip(&mu_next)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        history.push(metric);
        let scale = next
            .flat()
            .iter()
            .zip(nodes.iter().cycle())
            .zip(&mu_next)
            .filter(|((c, a), _)| c < a)
            .map(|(_, mu)| *mu)
            .fold(0.0, f64::max);
        effective = tol.max(config.noise_floor * scale);
        current = next;
        mu_cur = mu_next;
        if metric <= effective {
            let report = SolveReport {
                iterations: it,
                final_metric: metric,
                tolerance: tol,
                effective_tolerance: effective,
                observed_modulus: trailing_modulus(&history),
                beta_r: problem.beta() * problem.r(),
                converged: true,
                metric_history: history,
            };
            return Ok((current, report));
        }
    }
    let report = SolveReport {
        iterations: config.max_iter,
        final_metric: *history.last().unwrap(),
        tolerance: tol,
        effective_tolerance: effective,
        observed_modulus: trailing_modulus(&history),
        beta_r: problem.beta() * problem.r(),
        converged: false,
        metric_history: history,
    };
    Err(IfpError::NotConverged(Box::new((current, report))))
}
