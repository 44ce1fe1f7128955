//! Stochastic recursions `X_t = φ(X_{t−1}) + Y_t` with `limsup φ(x)/x < 1`.
//!
//! Simulating the equality version gives the extremal process allowed by the
//! bound `X_t ≤ φ(X_{t−1}) + Y_t`. With compactly supported shocks the paths
//! stay below `y_max/(1−ρ) + x0`; with light-tailed shocks of rate `λ` the
//! terminal law has decay rate at least `(1−ρ)λ`; with Pareto shocks of
//! exponent `α` the polynomial rate is at least `α`. Perfectly correlated
//! shocks attain the light and heavy bounds.
//!
//! Multiplicative (Kesten-type) recursions `X_t = A_t X_{t−1} + Y_t` are not
//! modelled here.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rng::{substream, uniform, Stream};
use crate::tails::{exponential_decay_rate, polynomial_decay_rate, TailError, TailSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractionError {
    #[error("not a contraction: asymptotic slope {0} must lie in [0, 1)")]
    NotAContraction(f64),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid shocks: {0}")]
    InvalidShocks(String),
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Tail(#[from] TailError),
}

#[derive(Debug, Clone, PartialEq)]
enum MapKind {
    Linear,
    /// `φ(x) = max(ρx, cap)`.
    LinearPlusCap { cap: f64 },
    /// Piecewise-linear through `(xs, phis)`, extended above the last node
    /// with slope `ρ`.
    Custom { xs: Vec<f64>, phis: Vec<f64> },
}

/// The map `φ` of the recursion, with asymptotic slope `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionMap {
    kind: MapKind,
    rho: f64,
}

fn check_rho(rho: f64) -> Result<(), ContractionError> {
    if rho.is_finite() && (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(ContractionError::NotAContraction(rho))
    }
}

impl ContractionMap {
    pub fn linear(rho: f64) -> Result<Self, ContractionError> {
        check_rho(rho)?;
        Ok(Self {
            kind: MapKind::Linear,
            rho,
        })
    }

    pub fn linear_plus_cap(rho: f64, cap: f64) -> Result<Self, ContractionError> {
        check_rho(rho)?;
        if !(cap.is_finite() && cap >= 0.0) {
            return Err(ContractionError::InvalidMap(format!(
                "cap must be finite and nonnegative, got {cap}"
            )));
        }
        Ok(Self {
            kind: MapKind::LinearPlusCap { cap },
            rho,
        })
    }

    /// Tabulated `φ` on nodes starting at zero.
    pub fn custom(xs: Vec<f64>, phis: Vec<f64>, rho: f64) -> Result<Self, ContractionError> {
        check_rho(rho)?;
        if xs.len() < 2 || xs.len() != phis.len() {
            return Err(ContractionError::InvalidMap(
                "need at least two nodes and one value per node".into(),
            ));
        }
        if xs[0] != 0.0 {
            return Err(ContractionError::InvalidMap(
                "first node must be at x = 0".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(ContractionError::InvalidMap(
                "nodes must be finite and strictly increasing".into(),
            ));
        }
        if phis.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(ContractionError::InvalidMap(
                "tabulated values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            kind: MapKind::Custom { xs, phis },
            rho,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, MapKind::Linear)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            MapKind::Linear => self.rho * x,
            MapKind::LinearPlusCap { cap } => (self.rho * x).max(*cap),
            MapKind::Custom { xs, phis } => {
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return phis[last] + self.rho * (x - xs[last]);
                }
                let i = xs.partition_point(|v| *v <= x).max(1) - 1;
                let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
                phis[i] + w * (phis[i + 1] - phis[i])
            }
        }
    }

    /// Constant `M` with `φ(x) ≤ ρx + M` for all `x ≥ 0`.
    fn affine_offset(&self) -> f64 {
        match &self.kind {
            MapKind::Linear => 0.0,
            MapKind::LinearPlusCap { cap } => *cap,
            MapKind::Custom { xs, phis } => xs
                .iter()
                .zip(phis)
                .map(|(x, p)| (p - self.rho * x).max(0.0))
                .fold(0.0, f64::max),
        }
    }
}

/// Marginal law of a single shock, sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub enum ShockDistribution {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Pareto { alpha: f64, xmin: f64 },
}

impl ShockDistribution {
    fn validate(&self) -> Result<(), ContractionError> {
        let ok = match *self {
            ShockDistribution::Constant(v) => v.is_finite() && v >= 0.0,
            ShockDistribution::Uniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo
            }
            ShockDistribution::Exponential { rate } => rate.is_finite() && rate > 0.0,
            ShockDistribution::Pareto { alpha, xmin } => {
                alpha.is_finite() && alpha > 0.0 && xmin.is_finite() && xmin > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ContractionError::InvalidShocks(format!(
                "parameters out of range: {self:?}"
            )))
        }
    }

    /// `F^{-1}(u)` for `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ShockDistribution::Constant(v) => v,
            ShockDistribution::Uniform { lo, hi } => lo + (hi - lo) * u,
            ShockDistribution::Exponential { rate } => -(1.0 - u).ln() / rate,
            ShockDistribution::Pareto { alpha, xmin } => xmin * (1.0 - u).powf(-1.0 / alpha),
        }
    }

    /// Upper end of the support, if finite.
    pub fn sup(&self) -> Option<f64> {
        match *self {
            ShockDistribution::Constant(v) => Some(v),
            ShockDistribution::Uniform { hi, .. } => Some(hi),
            _ => None,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        match *self {
            ShockDistribution::Constant(v) => ShockDistribution::Constant(c * v),
            ShockDistribution::Uniform { lo, hi } => ShockDistribution::Uniform {
                lo: c * lo,
                hi: c * hi,
            },
            ShockDistribution::Exponential { rate } => {
                ShockDistribution::Exponential { rate: rate / c }
            }
            ShockDistribution::Pareto { alpha, xmin } => ShockDistribution::Pareto {
                alpha,
                xmin: c * xmin,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShockKind {
    Iid(ShockDistribution),
    /// A finite Markov chain selects which distribution the shock is drawn from.
    MarkovModulated {
        transition: Vec<Vec<f64>>,
        per_state: Vec<ShockDistribution>,
        initial_state: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Correlation {
    Iid,
    /// `Y_t = Y_1` on every path.
    PerfectlyCorrelated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockFamily {
    kind: ShockKind,
    correlation: Correlation,
}

impl ShockFamily {
    pub fn new(kind: ShockKind, correlation: Correlation) -> Result<Self, ContractionError> {
        match &kind {
            ShockKind::Iid(d) => d.validate()?,
            ShockKind::MarkovModulated {
                transition,
                per_state,
                initial_state,
            } => {
                let k = per_state.len();
                if k == 0 || transition.len() != k || transition.iter().any(|r| r.len() != k) {
                    return Err(ContractionError::InvalidShocks(
                        "transition matrix must be square with one row per state".into(),
                    ));
                }
                for row in transition {
                    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                        || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
                    {
                        return Err(ContractionError::InvalidShocks(
                            "transition rows must be probability vectors".into(),
                        ));
                    }
                }
                if *initial_state >= k {
                    return Err(ContractionError::InvalidShocks(
                        "initial state out of range".into(),
                    ));
                }
                for d in per_state {
                    d.validate()?;
                }
            }
        }
        Ok(Self { kind, correlation })
    }

    pub fn iid(dist: ShockDistribution) -> Result<Self, ContractionError> {
        Self::new(ShockKind::Iid(dist), Correlation::Iid)
    }

    pub fn perfectly_correlated(dist: ShockDistribution) -> Result<Self, ContractionError> {
        Self::new(ShockKind::Iid(dist), Correlation::PerfectlyCorrelated)
    }

    pub fn kind(&self) -> &ShockKind {
        &self.kind
    }

    pub fn correlation(&self) -> Correlation {
        self.correlation
    }

    /// Same family with every draw multiplied by `c > 0` under common random numbers.
    pub fn scaled(&self, c: f64) -> Result<Self, ContractionError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(ContractionError::InvalidShocks(format!(
                "scale must be positive, got {c}"
            )));
        }
        let kind = match &self.kind {
            ShockKind::Iid(d) => ShockKind::Iid(d.scaled(c)),
            ShockKind::MarkovModulated {
                transition,
                per_state,
                initial_state,
            } => ShockKind::MarkovModulated {
                transition: transition.clone(),
                per_state: per_state.iter().map(|d| d.scaled(c)).collect(),
                initial_state: *initial_state,
            },
        };
        Ok(Self {
            kind,
            correlation: self.correlation,
        })
    }

    /// Largest possible shock, if the support is bounded.
    pub fn sup(&self) -> Option<f64> {
        match &self.kind {
            ShockKind::Iid(d) => d.sup(),
            ShockKind::MarkovModulated { per_state, .. } => per_state
                .iter()
                .map(|d| d.sup())
                .try_fold(0.0f64, |acc, s| s.map(|s| acc.max(s))),
        }
    }
}

/// Per-path shock generator. Every step consumes the same number of uniforms
/// regardless of parameters, which is what couples scaled families.
struct ShockSampler<'a> {
    family: &'a ShockFamily,
    state: usize,
    first: Option<f64>,
}

impl<'a> ShockSampler<'a> {
    fn new(family: &'a ShockFamily) -> Self {
        let state = match &family.kind {
            ShockKind::MarkovModulated { initial_state, .. } => *initial_state,
            ShockKind::Iid(_) => 0,
        };
        Self {
            family,
            state,
            first: None,
        }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let (Correlation::PerfectlyCorrelated, Some(y)) = (self.family.correlation, self.first)
        {
            return y;
        }
        let y = match &self.family.kind {
            ShockKind::Iid(d) => d.quantile(uniform(rng)),
            ShockKind::MarkovModulated {
                transition,
                per_state,
                ..
            } => {
                let u_state = uniform(rng);
                let u_value = uniform(rng);
                self.state = sample_row(&transition[self.state], u_state);
                per_state[self.state].quantile(u_value)
            }
        };
        self.first.get_or_insert(y);
        y
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding can leave the cumulative sum a hair below one.
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

/// Full trajectory of one path, for per-path identities.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    /// `X_0, X_1, …, X_T`.
    pub values: Vec<f64>,
    /// `Y_1, …, Y_T`.
    pub shocks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPanel {
    pub terminal_values: TailSample,
    /// Largest `X_t` over all paths and all `t ≥ 1`.
    pub running_max: f64,
    /// Per-path maximum over `t ≥ 1`, in path order.
    pub path_maxima: Vec<f64>,
    pub rho_used: f64,
    pub x0: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

/// Trace path `index` of the experiment keyed by `seed`.
pub fn trace_path(
    map: &ContractionMap,
    shocks: &ShockFamily,
    x0: f64,
    steps: usize,
    seed: u64,
    index: u64,
) -> PathTrace {
    let mut rng = substream(seed, Stream::Contraction, index);
    let mut sampler = ShockSampler::new(shocks);
    let mut values = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps);
    let mut x = x0;
    values.push(x);
    for _ in 0..steps {
        let y = sampler.draw(&mut rng);
        x = map.eval(x) + y;
        ys.push(y);
        values.push(x);
    }
    PathTrace { values, shocks: ys }
}

fn run_path(
    map: &ContractionMap,
    shocks: &ShockFamily,
    x0: f64,
    steps: usize,
    seed: u64,
    index: u64,
) -> (f64, f64) {
    let mut rng = substream(seed, Stream::Contraction, index);
    let mut sampler = ShockSampler::new(shocks);
    let mut x = x0;
    let mut max = f64::NEG_INFINITY;
    for _ in 0..steps {
        x = map.eval(x) + sampler.draw(&mut rng);
        max = max.max(x);
    }
    (x, max)
}

/// Simulate `paths` independent paths of `X_t = φ(X_{t−1}) + Y_t` for `steps`
/// periods from `x0`. Deterministic in `seed`.
pub fn simulate_recursion(
    map: &ContractionMap,
    shocks: &ShockFamily,
    x0: f64,
    steps: usize,
    paths: usize,
    seed: u64,
) -> Result<PathPanel, ContractionError> {
    if steps == 0 || paths == 0 {
        return Err(ContractionError::InvalidSettings(
            "need at least one step and one path".into(),
        ));
    }
    if !(x0.is_finite() && x0 >= 0.0) {
        return Err(ContractionError::InvalidSettings(format!(
            "x0 must be finite and nonnegative, got {x0}"
        )));
    }
    let results: Vec<(f64, f64)> = (0..paths as u64)
        .into_par_iter()
        .map(|i| run_path(map, shocks, x0, steps, seed, i))
        .collect();
    let (terminal, path_maxima): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    let running_max = path_maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PathPanel {
        terminal_values: TailSample::new(terminal, "terminal X_T")?,
        running_max,
        path_maxima,
        rho_used: map.rho(),
        x0,
        steps,
        paths,
        seed,
    })
}

/// Upper bound `(y_max + M)/(1−ρ) + x0` on every path when shocks live in
/// `[0, y_max]` and `φ(x) ≤ ρx + M` (`M = 0` for a linear map).
pub fn compact_support_bound(
    map: &ContractionMap,
    y_max: f64,
    x0: f64,
) -> Result<f64, ContractionError> {
    check_rho(map.rho())?;
    if !(y_max.is_finite() && y_max >= 0.0) {
        return Err(ContractionError::InvalidShocks(format!(
            "y_max must be finite and nonnegative, got {y_max}"
        )));
    }
    Ok((y_max + map.affine_offset()) / (1.0 - map.rho()) + x0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactCaseReport {
    pub bound: f64,
    pub running_max: f64,
    pub violations: usize,
    pub holds: bool,
}

/// Count paths whose running maximum exceeds the compact-support bound.
pub fn verify_compact_case(
    panel: &PathPanel,
    map: &ContractionMap,
    y_max: f64,
) -> Result<CompactCaseReport, ContractionError> {
    let bound = compact_support_bound(map, y_max, panel.x0)?;
    let violations = panel.path_maxima.iter().filter(|m| **m > bound).count();
    Ok(CompactCaseReport {
        bound,
        running_max: panel.running_max,
        violations,
        holds: violations == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCaseReport {
    pub estimate: f64,
    pub std_error: f64,
    /// Theoretical lower bound on the decay rate.
    pub bound: f64,
    pub tolerance: f64,
    pub points: usize,
    pub holds: bool,
}

/// Default slack subtracted from the light-tail bound.
pub const LIGHT_TOLERANCE: f64 = 0.05;
/// Default slack subtracted from the heavy-tail bound.
pub const HEAVY_TOLERANCE: f64 = 0.1;

/// Check `λ̂′ ≥ (1−ρ)λ − tolerance` on the terminal values.
pub fn verify_light_tail_case(
    panel: &PathPanel,
    shock_lambda: f64,
    tolerance: f64,
) -> Result<DecayCaseReport, ContractionError> {
    let est = exponential_decay_rate(&panel.terminal_values, 0.1)?;
    let bound = (1.0 - panel.rho_used) * shock_lambda;
    Ok(DecayCaseReport {
        estimate: est.estimate,
        std_error: est.std_error,
        bound,
        tolerance,
        points: est.points,
        holds: est.estimate >= bound - tolerance,
    })
}

/// Check the Hill estimate `α̂′ ≥ α − tolerance` using the top `k` terminal values.
pub fn verify_heavy_tail_case(
    panel: &PathPanel,
    shock_alpha: f64,
    k: usize,
    tolerance: f64,
) -> Result<DecayCaseReport, ContractionError> {
    if !(shock_alpha > 1.0) {
        return Err(ContractionError::InvalidShocks(format!(
            "heavy case needs a finite shock mean (alpha > 1), got {shock_alpha}"
        )));
    }
    let est = polynomial_decay_rate(&panel.terminal_values, k)?;
    Ok(DecayCaseReport {
        estimate: est.estimate,
        std_error: est.std_error,
        bound: shock_alpha,
        tolerance,
        points: est.points,
        holds: est.estimate >= shock_alpha - tolerance,
    })
}
