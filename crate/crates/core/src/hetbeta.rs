//! Perpetual-youth economy with heterogeneous discount factors.
//!
//! Type `j` has population share `π_j`, death probability `p_j`, endowment
//! `y_j`, discount factor `β_j` and CRRA coefficient `γ_j`. Annuity markets
//! pay `R̃_j = R/(1−p_j)`, so a newborn holds `w_{j0} = R̃_j y_j/(R̃_j − 1)`
//! and a survivor's wealth grows by `G_j = (β_j R)^{1/γ_j}` each period.
//! The survivor tail `Pr(w ≥ G_j^n w_{j0}) = (1−p_j)^n` is exactly Pareto
//! on the lattice `G_j^n w_{j0}`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contraction::sample_row;
use crate::rng::{substream, uniform, Stream};
use crate::tails::{TailError, TailSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HetBetaError {
    #[error("invalid agent type {index}: {reason}")]
    InvalidType { index: usize, reason: String },
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),
    #[error("R = {r} outside [1, {r_bar})")]
    DomainError { r: f64, r_bar: f64 },
    #[error("root bracketing failed: {0}")]
    SolverError(String),
    #[error("type {0} does not grow (G <= 1)")]
    NotGrowing(usize),
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Tail(#[from] TailError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentType {
    pub pi: f64,
    pub p: f64,
    pub y: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl AgentType {
    fn validate(&self, index: usize) -> Result<(), HetBetaError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let bad = |reason: &str| {
            Err(HetBetaError::InvalidType {
                index,
                reason: reason.into(),
            })
        };
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return bad("pi must lie in (0, 1]");
        }
        if !open_unit(self.p) {
            return bad("p must lie in (0, 1)");
        }
        if !(self.y.is_finite() && self.y > 0.0) {
            return bad("y must be positive");
        }
        if !open_unit(self.beta) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        Ok(())
    }

    /// `[β(1−p)^γ]^{−1}`: growth rate `G` reaches `1/(1−p)` here.
    fn r_cap(&self) -> f64 {
        1.0 / (self.beta * (1.0 - self.p).powf(self.gamma))
    }

    fn growth(&self, r: f64) -> f64 {
        (self.beta * r).powf(1.0 / self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Economy {
    types: Vec<AgentType>,
}

const SHARE_TOL: f64 = 1e-12;

impl Economy {
    pub fn new(types: Vec<AgentType>) -> Result<Self, HetBetaError> {
        if types.is_empty() {
            return Err(HetBetaError::InvalidEconomy("need at least one type".into()));
        }
        for (j, t) in types.iter().enumerate() {
            t.validate(j)?;
        }
        let total: f64 = types.iter().map(|t| t.pi).sum();
        if (total - 1.0).abs() > SHARE_TOL {
            return Err(HetBetaError::InvalidEconomy(format!(
                "population shares sum to {total}"
            )));
        }
        Ok(Self { types })
    }

    pub fn types(&self) -> &[AgentType] {
        &self.types
    }

    /// `min_j [β_j(1−p_j)^{γ_j}]^{−1}`.
    pub fn r_bar(&self) -> f64 {
        self.types.iter().map(AgentType::r_cap).fold(f64::INFINITY, f64::min)
    }

    pub fn is_homogeneous_beta(&self) -> bool {
        self.types.iter().all(|t| t.beta == self.types[0].beta)
    }

    /// Same economy with every endowment multiplied by `c`.
    pub fn scale_endowments(&self, c: f64) -> Result<Self, HetBetaError> {
        Self::new(
            self.types
                .iter()
                .map(|t| AgentType { y: t.y * c, ..*t })
                .collect(),
        )
    }
}

/// Aggregate excess asset demand
/// `f(R) = Σ_j R π_j y_j (G_j − 1) / [(R/(1−p_j) − 1)(1 − (1−p_j) G_j)]`.
pub fn excess_demand(economy: &Economy, r: f64) -> Result<f64, HetBetaError> {
    let r_bar = economy.r_bar();
    if !(r >= 1.0 && r < r_bar) {
        return Err(HetBetaError::DomainError { r, r_bar });
    }
    Ok(economy
        .types
        .iter()
        .map(|t| {
            let g = t.growth(r);
            r * t.pi * t.y * (g - 1.0) / ((r / (1.0 - t.p) - 1.0) * (1.0 - (1.0 - t.p) * g))
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeOutcome {
    /// `R/(1−p)`.
    pub r_tilde: f64,
    pub w0: f64,
    pub growth: f64,
    /// Mean wealth of the type.
    pub mean_wealth: f64,
    /// `−γ log(1−p)/log(βR)` for growing types.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub r: f64,
    pub r_bar: f64,
    pub excess_demand: f64,
    pub types: Vec<TypeOutcome>,
    /// Pareto exponent of the cross-section; absent when `β` is common.
    pub alpha: Option<f64>,
    pub degenerate: bool,
    pub bisection_iterations: usize,
    /// `f` on an even grid of the open bracket.
    pub scan: Vec<[f64; 2]>,
    pub scan_sign_changes: usize,
}

/// Endpoint offset of the initial bracket `[1+ε, R̄(1−ε)]`.
pub const BRACKET_EPS: f64 = 1e-8;
/// Types with `βR ≤ 1 + KNIFE_EDGE` are treated as non-growing.
pub const KNIFE_EDGE: f64 = 1e-12;
const SCAN_POINTS: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`, `f(lo) < 0 < f(hi)`.
/// Stops at `|f| ≤ tol` or when the bracket collapses to adjacent floats.
pub fn bisect(
    f: impl Fn(f64) -> Result<f64, HetBetaError>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64, usize), HetBetaError> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(HetBetaError::SolverError(format!(
            "f({lo}) = {flo}, f({hi}) = {fhi} do not bracket a root"
        )));
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for it in 1..=2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok((best.0, best.1, it));
        }
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm.abs() <= tol {
            return Ok((mid, fm, it));
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((best.0, best.1, 2000))
}

fn type_outcomes(economy: &Economy, r: f64, homogeneous: bool) -> Vec<TypeOutcome> {
    economy
        .types
        .iter()
        .map(|t| {
            let r_tilde = r / (1.0 - t.p);
            let w0 = r_tilde / (r_tilde - 1.0) * t.y;
            let growth = if homogeneous { 1.0 } else { t.growth(r) };
            let mean_wealth = t.p * w0 / (1.0 - (1.0 - t.p) * growth);
            let alpha = (!homogeneous && t.beta * r > 1.0 + KNIFE_EDGE)
                .then(|| -t.gamma * (1.0 - t.p).ln() / (t.beta * r).ln());
            TypeOutcome {
                r_tilde,
                w0,
                growth,
                mean_wealth,
                alpha,
            }
        })
        .collect()
}

fn scan(economy: &Economy, lo: f64, hi: f64) -> (Vec<[f64; 2]>, usize) {
    let pts: Vec<[f64; 2]> = (0..SCAN_POINTS)
        .filter_map(|i| {
            let r = lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64;
            excess_demand(economy, r).ok().map(|f| [r, f])
        })
        .collect();
    let changes = pts
        .windows(2)
        .filter(|w| (w[0][1] < 0.0) != (w[1][1] < 0.0))
        .count();
    (pts, changes)
}

/// Stationary equilibrium rate and per-type wealth statistics.
pub fn solve_equilibrium(economy: &Economy, tol: f64) -> Result<EquilibriumResult, HetBetaError> {
    if !(tol > 0.0) {
        return Err(HetBetaError::InvalidEconomy("tolerance must be positive".into()));
    }
    let r_bar = economy.r_bar();
    let lo = 1.0 + BRACKET_EPS;
    let (scan_pts, sign_changes) = scan(economy, lo, r_bar * (1.0 - BRACKET_EPS));

    if economy.is_homogeneous_beta() {
        let r = 1.0 / economy.types[0].beta;
        let types = type_outcomes(economy, r, true);
        let f = excess_demand(economy, r)?;
        return Ok(EquilibriumResult {
            r,
            r_bar,
            excess_demand: f,
            types,
            alpha: None,
            degenerate: true,
            bisection_iterations: 0,
            scan: scan_pts,
            scan_sign_changes: sign_changes,
        });
    }

    let f = |r: f64| excess_demand(economy, r);
    if f(lo)? >= 0.0 {
        return Err(HetBetaError::SolverError(format!(
            "f(1+eps) = {} is not negative",
            f(lo)?
        )));
    }
    let mut eps = BRACKET_EPS;
    let mut hi = r_bar * (1.0 - eps);
    while f(hi)? <= 0.0 {
        eps *= 0.1;
        if eps < 1e-15 {
            return Err(HetBetaError::SolverError(
                "f stays nonpositive up to the upper bracket".into(),
            ));
        }
        hi = r_bar * (1.0 - eps);
    }
    let (r, fr, iterations) = bisect(f, lo, hi, tol)?;
    let types = type_outcomes(economy, r, false);
    if let Some(j) = economy
        .types
        .iter()
        .zip(&types)
        .position(|(t, o)| (1.0 - t.p) * o.growth >= 1.0)
    {
        return Err(HetBetaError::SolverError(format!(
            "type {j} has infinite mean wealth at R = {r}"
        )));
    }
    let alpha = types.iter().filter_map(|o| o.alpha).reduce(f64::min);
    Ok(EquilibriumResult {
        r,
        r_bar,
        excess_demand: fr,
        types,
        alpha,
        degenerate: false,
        bisection_iterations: iterations,
        scan: scan_pts,
        scan_sign_changes: sign_changes,
    })
}

/// `(G_j^n w_{j0}, (1−p_j)^n)`: exact point on type `j`'s survivor tail.
pub fn analytic_tail(
    economy: &Economy,
    result: &EquilibriumResult,
    j: usize,
    n: u32,
) -> Result<(f64, f64), HetBetaError> {
    let (t, o) = economy
        .types
        .get(j)
        .zip(result.types.get(j))
        .ok_or_else(|| HetBetaError::InvalidSettings(format!("no type {j}")))?;
    if o.growth <= 1.0 {
        return Err(HetBetaError::NotGrowing(j));
    }
    Ok((o.growth.powi(n as i32) * o.w0, (1.0 - t.p).powi(n as i32)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathPanel {
    pub wealth: TailSample,
    pub types: Vec<usize>,
    pub ages: Vec<u64>,
    /// Agents whose wealth was capped at [`WEALTH_CAP`].
    pub capped: usize,
    pub horizon: usize,
    pub seed: u64,
}

pub const WEALTH_CAP: f64 = 1e300;
pub const MIN_AGENTS: usize = 100_000;
/// Required bound on `(1 − min p)^T`.
pub const HORIZON_MASS: f64 = 1e-4;

/// Smallest `T` with `(1 − min_j p_j)^T < 1e−4`.
pub fn minimum_horizon(economy: &Economy) -> usize {
    let p_min = economy.types.iter().map(|t| t.p).fold(1.0, f64::min);
    ((HORIZON_MASS.ln() / (1.0 - p_min).ln()).floor() as usize) + 1
}

fn wealth_at_age(o: &TypeOutcome, age: u64) -> (f64, bool) {
    let w = o.w0 * o.growth.powf(age as f64);
    if !(w <= WEALTH_CAP) {
        (WEALTH_CAP, true)
    } else {
        (w, false)
    }
}

/// Type and terminal age of agent `index`.
fn run_agent(economy: &Economy, horizon: usize, seed: u64, index: u64) -> (usize, u64) {
    let mut rng = substream(seed, Stream::BirthDeath, index);
    let shares: Vec<f64> = economy.types.iter().map(|t| t.pi).collect();
    let j = sample_row(&shares, uniform(&mut rng));
    let p = economy.types[j].p;
    // Stationary age law: Pr(age = k) = p (1−p)^k.
    let u = uniform(&mut rng);
    let mut age = ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64;
    for _ in 0..horizon {
        if uniform(&mut rng) < p {
            age = 0;
        } else {
            age += 1;
        }
    }
    (j, age)
}

/// Cross-section at `T` of `agents` households. Newborns start at `w_{j0}`
/// and survivors grow by `G_j`; wealth is `G_j^{age} w_{j0}`.
pub fn simulate_birth_death(
    economy: &Economy,
    result: &EquilibriumResult,
    agents: usize,
    horizon: usize,
    seed: u64,
) -> Result<BirthDeathPanel, HetBetaError> {
    if agents < MIN_AGENTS {
        return Err(HetBetaError::InvalidSettings(format!(
            "need at least {MIN_AGENTS} agents, got {agents}"
        )));
    }
    let t_min = minimum_horizon(economy);
    if horizon < t_min {
        return Err(HetBetaError::InvalidSettings(format!(
            "horizon {horizon} leaves (1 - p_min)^T >= {HORIZON_MASS}; need T >= {t_min}"
        )));
    }
    if result.types.len() != economy.types.len() {
        return Err(HetBetaError::InvalidSettings(
            "equilibrium result does not match the economy".into(),
        ));
    }
    let draws: Vec<(usize, u64)> = (0..agents as u64)
        .into_par_iter()
        .map(|i| run_agent(economy, horizon, seed, i))
        .collect();
    let mut capped = 0;
    let mut wealth = Vec::with_capacity(agents);
    for &(j, age) in &draws {
        let (w, hit) = wealth_at_age(&result.types[j], age);
        capped += hit as usize;
        wealth.push(w);
    }
    let (types, ages) = draws.into_iter().unzip();
    Ok(BirthDeathPanel {
        wealth: TailSample::new(wealth, "birth-death cross-section")?,
        types,
        ages,
        capped,
        horizon,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivorPoint {
    pub n: u32,
    pub threshold: f64,
    pub exact: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// `|empirical − exact| / std_error`.
    pub z_score: f64,
}

/// Empirical `Pr(w ≥ G_j^n w_{j0})` among type-`j` agents for `n = 1..=n_max`.
pub fn survivor_tail_check(
    economy: &Economy,
    result: &EquilibriumResult,
    panel: &BirthDeathPanel,
    j: usize,
    n_max: u32,
) -> Result<Vec<SurvivorPoint>, HetBetaError> {
    let mine: Vec<f64> = panel
        .types
        .iter()
        .zip(panel.wealth.values())
        .filter(|(t, _)| **t == j)
        .map(|(_, w)| *w)
        .collect();
    if mine.is_empty() {
        return Err(HetBetaError::InvalidSettings(format!("no agents of type {j}")));
    }
    let m = mine.len() as f64;
    (1..=n_max)
        .map(|n| {
            let (threshold, exact) = analytic_tail(economy, result, j, n)?;
            let cut = threshold * (1.0 - 1e-12);
            let empirical = mine.iter().filter(|w| **w >= cut).count() as f64 / m;
            let std_error = (exact * (1.0 - exact) / m).sqrt();
            Ok(SurvivorPoint {
                n,
                threshold,
                exact,
                empirical,
                std_error,
                z_score: (empirical - exact).abs() / std_error,
            })
        })
        .collect()
}
