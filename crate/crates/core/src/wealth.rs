//! Wealth panels under a solved consumption policy.
//!
//! Above the asset level where `c(a, z) ≥ m·a`, wealth obeys
//! `a_{t+1} ≤ ρ a_t + y_{t+1}` with `ρ = R(1 − m)`. Below it `a_{t+1} < RA + y_{t+1}`,
//! so the recursion is bounded by `φ(x) = max{ρx, RA}` plus income and the
//! wealth tail is no heavier than the income tail.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contraction::sample_row;
use crate::ifp::{IfProblem, IfpError, Policy};
use crate::rng::{substream, uniform, Stream};
use crate::tails::{
    classify_tail, exponential_decay_rate, polynomial_decay_rate, ClassifyConfig, TailClass,
    TailError, TailReport, TailSample,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WealthError {
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Ifp(#[from] IfpError),
    #[error(transparent)]
    Tail(#[from] TailError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhoRegime {
    /// `R < 1`: `ρ = R`.
    SubUnitR,
    /// `R ≥ 1`: `ρ` inside `((βR)^{1/γ̄}, 1)`.
    ImpatientR,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoBound {
    pub rho: f64,
    pub regime: RhoRegime,
    /// Open interval the coefficient was taken from (degenerate for `SubUnitR`).
    pub lower: f64,
    pub upper: f64,
}

/// Contraction coefficient of the wealth recursion. For `R ≥ 1` this is the
/// interval midpoint, which equals `R(1 − m)` at the margin midpoint `m`
/// used by [`crate::ifp::pih_margin_check`].
pub fn derive_rho(problem: &IfProblem, gamma_bar: f64) -> Result<RhoBound, WealthError> {
    let (beta, r) = (problem.beta(), problem.r());
    if r < 1.0 {
        return Ok(RhoBound {
            rho: r,
            regime: RhoRegime::SubUnitR,
            lower: r,
            upper: r,
        });
    }
    if !(gamma_bar.is_finite() && gamma_bar > 0.0) {
        return Err(WealthError::AssumptionViolated(format!(
            "asymptotic relative risk aversion must be finite, got {gamma_bar}"
        )));
    }
    let lower = (beta * r).powf(1.0 / gamma_bar);
    Ok(RhoBound {
        rho: 0.5 * (lower + 1.0),
        regime: RhoRegime::ImpatientR,
        lower,
        upper: 1.0,
    })
}

/// Horizon, population and initial condition of a panel run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelSettings {
    pub agents: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Initial wealth; `None` means mean income.
    pub a0: Option<f64>,
}

impl PanelSettings {
    pub fn new(agents: usize, horizon: usize, seed: u64) -> Self {
        Self {
            agents,
            horizon,
            seed,
            a0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthPanel {
    pub terminal_wealth: TailSample,
    pub terminal_income: TailSample,
    pub seed: u64,
    pub horizon: usize,
    pub agents: usize,
    pub a0: f64,
    /// Steps where wealth fell below the bottom grid node and was reset to it.
    pub clamped: usize,
    /// Cross-sectional mean wealth at `t = 0, …, T`.
    pub mean_path: Vec<f64>,
}

/// One step of the budget constraint as seen by an observer.
#[derive(Debug, Clone, Copy)]
struct Step {
    a: f64,
    c: f64,
    a_next: f64,
    y_next: f64,
}

struct AgentOutcome {
    a: f64,
    y: f64,
    clamped: usize,
}

fn resolve_a0(problem: &IfProblem, settings: &PanelSettings) -> Result<f64, WealthError> {
    let a0 = settings.a0.unwrap_or_else(|| problem.income().mean());
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(WealthError::InvalidSettings(format!(
            "initial wealth must be positive, got {a0} (give a0 explicitly for zero-income problems)"
        )));
    }
    Ok(a0)
}

fn check_policy(policy: &Policy, problem: &IfProblem) -> Result<(), WealthError> {
    if policy.states() != problem.income().len() || policy.grid() != problem.grid() {
        return Err(WealthError::InvalidSettings(
            "policy does not belong to this problem".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_agent(
    policy: &Policy,
    problem: &IfProblem,
    stationary: &[f64],
    a0: f64,
    horizon: usize,
    seed: u64,
    index: u64,
    mut observe: impl FnMut(usize, Step),
    mut record: impl FnMut(usize, f64),
) -> AgentOutcome {
    let mut rng = substream(seed, Stream::WealthPanel, index);
    let inc = problem.income();
    let (y, p) = (inc.y(), inc.transition());
    let a_floor = problem.grid().a_min();
    let r = problem.r();
    let mut z = sample_row(stationary, uniform(&mut rng));
    let mut a = a0;
    let mut clamped = 0;
    record(0, a);
    for t in 0..horizon {
        let c = policy.eval(z, a);
        let z_next = sample_row(&p[z], uniform(&mut rng));
        let y_next = y[z_next];
        let mut a_next = r * (a - c) + y_next;
        if a_next < a_floor {
            a_next = a_floor;
            clamped += 1;
        }
        observe(t, Step {
            a,
            c,
            a_next,
            y_next,
        });
        a = a_next;
        z = z_next;
        record(t + 1, a);
    }
    AgentOutcome {
        a,
        y: y[z],
        clamped,
    }
}

const CHUNK: usize = 1024;

/// Simulate `agents` independent households for `horizon` periods.
pub fn simulate_panel(
    policy: &Policy,
    problem: &IfProblem,
    settings: &PanelSettings,
) -> Result<WealthPanel, WealthError> {
    check_policy(policy, problem)?;
    if settings.agents == 0 {
        return Err(WealthError::InvalidSettings("need at least one agent".into()));
    }
    let a0 = resolve_a0(problem, settings)?;
    let stationary = problem.income().stationary();
    let horizon = settings.horizon;
    let chunks: Vec<(Vec<AgentOutcome>, Vec<f64>)> = (0..settings.agents.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let start = ci * CHUNK;
            let end = (start + CHUNK).min(settings.agents);
            let mut sums = vec![0.0; horizon + 1];
            let outcomes = (start..end)
                .map(|i| {
                    run_agent(
                        policy,
                        problem,
                        &stationary,
                        a0,
                        horizon,
                        settings.seed,
                        i as u64,
                        |_, _| {},
                        |t, a| sums[t] += a,
                    )
                })
                .collect();
            (outcomes, sums)
        })
        .collect();

    let mut wealth = Vec::with_capacity(settings.agents);
    let mut income = Vec::with_capacity(settings.agents);
    let mut clamped = 0;
    let mut mean_path = vec![0.0; horizon + 1];
    for (outcomes, sums) in chunks {
        for o in outcomes {
            wealth.push(o.a);
            income.push(o.y);
            clamped += o.clamped;
        }
        for (m, s) in mean_path.iter_mut().zip(sums) {
            *m += s;
        }
    }
    let n = settings.agents as f64;
    mean_path.iter_mut().for_each(|m| *m /= n);
    Ok(WealthPanel {
        terminal_wealth: TailSample::new(wealth, "terminal wealth")?,
        terminal_income: TailSample::new(income, "terminal income")?,
        seed: settings.seed,
        horizon,
        agents: settings.agents,
        a0,
        clamped,
        mean_path,
    })
}

/// Full history of one household.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    /// `a_0, …, a_T`.
    pub wealth: Vec<f64>,
    /// `c_0, …, c_{T−1}`.
    pub consumption: Vec<f64>,
    /// `y_1, …, y_T`.
    pub income: Vec<f64>,
    pub clamped: usize,
}

/// Trace agent `index` of the panel defined by `settings`.
pub fn simulate_agent(
    policy: &Policy,
    problem: &IfProblem,
    settings: &PanelSettings,
    index: u64,
) -> Result<AgentTrace, WealthError> {
    check_policy(policy, problem)?;
    let a0 = resolve_a0(problem, settings)?;
    let stationary = problem.income().stationary();
    let mut wealth = vec![a0];
    let mut consumption = Vec::new();
    let mut income = Vec::new();
    let out = run_agent(
        policy,
        problem,
        &stationary,
        a0,
        settings.horizon,
        settings.seed,
        index,
        |_, s| {
            consumption.push(s.c);
            income.push(s.y_next);
            wealth.push(s.a_next);
        },
        |_, _| {},
    );
    Ok(AgentTrace {
        wealth,
        consumption,
        income,
        clamped: out.clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    pub rho: f64,
    pub a_hat: f64,
    pub slack: f64,
    /// Steps with `a_t ≥ A_hat`.
    pub checked_steps: usize,
    pub violations: usize,
    /// Largest `a_{t+1} − ρ a_t − y_{t+1}` over checked steps.
    pub max_excess: f64,
    pub holds: bool,
}

/// Re-run the panel and test `a_{t+1} ≤ ρ a_t + y_{t+1} + slack` at every
/// step with `a_t ≥ a_hat`.
pub fn ar1_domination_check(
    policy: &Policy,
    problem: &IfProblem,
    settings: &PanelSettings,
    rho: f64,
    a_hat: f64,
    slack: f64,
) -> Result<DominationReport, WealthError> {
    check_policy(policy, problem)?;
    let a0 = resolve_a0(problem, settings)?;
    let stationary = problem.income().stationary();
    let per_chunk: Vec<(usize, usize, f64)> = (0..settings.agents.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let start = ci * CHUNK;
            let end = (start + CHUNK).min(settings.agents);
            let (mut checked, mut bad, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
            for i in start..end {
                run_agent(
                    policy,
                    problem,
                    &stationary,
                    a0,
                    settings.horizon,
                    settings.seed,
                    i as u64,
                    |_, s| {
                        if s.a >= a_hat {
                            checked += 1;
                            let excess = s.a_next - rho * s.a - s.y_next;
                            worst = worst.max(excess);
                            if excess > slack {
                                bad += 1;
                            }
                        }
                    },
                    |_, _| {},
                );
            }
            (checked, bad, worst)
        })
        .collect();
    let (checked_steps, violations, max_excess) = per_chunk.into_iter().fold(
        (0, 0, f64::NEG_INFINITY),
        |(c, v, w), (c2, v2, w2)| (c + c2, v + v2, w.max(w2)),
    );
    Ok(DominationReport {
        rho,
        a_hat,
        slack,
        checked_steps,
        violations,
        max_excess,
        holds: violations == 0,
    })
}

/// `max{a0, RA + y_max, y_max/(1−ρ)}`: no path of the recursion
/// `a′ ≤ max{ρa, RA} + y′` started at `a0` exceeds it.
pub fn wealth_hard_bound(r: f64, a_hat: f64, rho: f64, y_max: f64, a0: f64) -> f64 {
    a0.max(r * a_hat + y_max).max(y_max / (1.0 - rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InheritanceConfig {
    pub classify: ClassifyConfig,
    pub light_tolerance: f64,
    pub heavy_tolerance: f64,
    /// Hill window as a fraction of the panel size.
    pub hill_fraction: f64,
    /// Survival-slope window as a fraction of the panel size.
    pub slope_fraction: f64,
}

impl Default for InheritanceConfig {
    fn default() -> Self {
        Self {
            classify: ClassifyConfig::default(),
            light_tolerance: 0.05,
            heavy_tolerance: 0.1,
            hill_fraction: 0.01,
            slope_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    /// Whether the income classification makes this check binding.
    pub applicable: bool,
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InheritanceReport {
    pub rho: f64,
    pub income: TailReport,
    pub wealth: TailReport,
    pub lambda_income: Option<f64>,
    pub lambda_wealth: Option<f64>,
    pub alpha_income: Option<f64>,
    pub alpha_wealth: Option<f64>,
    pub hill_k: usize,
    pub max_wealth: f64,
    pub hard_bound: Option<f64>,
    pub checks: Vec<BoundCheck>,
    pub warnings: Vec<String>,
    /// All applicable checks pass.
    pub holds: bool,
}

/// Compare the wealth tail with the income tail. `a_hat` enables the hard
/// bound for bounded income.
pub fn tail_inheritance_report(
    panel: &WealthPanel,
    problem: &IfProblem,
    rho: f64,
    a_hat: Option<f64>,
    config: &InheritanceConfig,
) -> Result<InheritanceReport, WealthError> {
    let income = classify_tail(&panel.terminal_income, &config.classify);
    let wealth = classify_tail(&panel.terminal_wealth, &config.classify);
    let mut warnings = Vec::new();
    for (name, rep) in [("income", &income), ("wealth", &wealth)] {
        if rep.classification == TailClass::Indeterminate {
            warnings.push(format!("{name} tail classification is indeterminate"));
        }
    }

    let n = panel.agents;
    let hill_k = ((config.hill_fraction * n as f64).floor() as usize).max(20);
    let slope = |s: &TailSample| exponential_decay_rate(s, config.slope_fraction).ok();
    let hill = |s: &TailSample| polynomial_decay_rate(s, hill_k).ok();
    let lambda_income = slope(&panel.terminal_income).map(|e| e.estimate);
    let lambda_wealth = slope(&panel.terminal_wealth).map(|e| e.estimate);
    let alpha_income = hill(&panel.terminal_income).map(|e| e.estimate);
    let alpha_wealth = hill(&panel.terminal_wealth).map(|e| e.estimate);

    let max_wealth = panel.terminal_wealth.max();
    let y_max = problem.income().y_max();
    let hard_bound = a_hat.map(|a| wealth_hard_bound(problem.r(), a, rho, y_max, panel.a0));

    let class = income.classification;
    let wealth_not_heavy = matches!(wealth.classification, TailClass::Compact | TailClass::Light);
    let mut checks = Vec::new();
    if let Some(b) = hard_bound {
        checks.push(BoundCheck {
            name: "wealth_below_hard_bound",
            applicable: class == TailClass::Compact,
            measured: max_wealth,
            bound: b,
            holds: max_wealth <= b * (1.0 + 1e-12),
        });
    }
    checks.push(BoundCheck {
        name: "wealth_not_heavy",
        applicable: matches!(class, TailClass::Compact | TailClass::Light),
        measured: f64::NAN,
        bound: f64::NAN,
        holds: wealth_not_heavy,
    });
    if let (Some(li), Some(lw)) = (lambda_income, lambda_wealth) {
        let bound = (1.0 - rho) * li - config.light_tolerance;
        checks.push(BoundCheck {
            name: "light_decay_rate",
            applicable: class == TailClass::Light,
            measured: lw,
            bound,
            holds: lw >= bound,
        });
    } else {
        warnings.push("survival-slope estimate unavailable".into());
    }
    if let (Some(ai), Some(aw)) = (alpha_income, alpha_wealth) {
        let bound = ai - config.heavy_tolerance;
        checks.push(BoundCheck {
            name: "heavy_decay_rate",
            applicable: class == TailClass::Heavy,
            measured: aw,
            bound,
            holds: aw >= bound,
        });
    } else {
        warnings.push("Hill estimate unavailable".into());
    }
    if panel.clamped > 0 {
        warnings.push(format!(
            "{} steps clamped at the bottom grid node",
            panel.clamped
        ));
    }
    let holds = checks.iter().filter(|c| c.applicable).all(|c| c.holds);
    Ok(InheritanceReport {
        rho,
        income,
        wealth,
        lambda_income,
        lambda_wealth,
        alpha_income,
        alpha_wealth,
        hill_k,
        max_wealth,
        hard_bound,
        checks,
        warnings,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifp::{c0_rate, solve, AssetGrid, MarkovIncome, SolveConfig};
    use crate::utility::UtilitySpec;

    fn two_state() -> (IfProblem, Policy) {
        let p = IfProblem::with_default_grid(
            0.95,
            1.02,
            UtilitySpec::crra(2.0).unwrap(),
            MarkovIncome::two_state(0.5, 1.5, 0.9).unwrap(),
        )
        .unwrap();
        let (pol, _) = solve(&p, &SolveConfig::default()).unwrap();
        (p, pol)
    }

    #[test]
    fn derive_rho_regimes() {
        let inc = MarkovIncome::iid(vec![1.0], vec![1.0]).unwrap();
        let grid = AssetGrid::geometric(1e-3, 300.0, 60).unwrap();
        let u = UtilitySpec::crra(2.0).unwrap();
        let low = IfProblem::new(0.95, 0.99, u, inc.clone(), grid.clone()).unwrap();
        let rb = derive_rho(&low, 2.0).unwrap();
        assert_eq!((rb.rho, rb.regime), (0.99, RhoRegime::SubUnitR));

        let p = IfProblem::new(0.95, 1.02, u, inc, grid).unwrap();
        let rb = derive_rho(&p, 2.0).unwrap();
        let lower = (0.95f64 * 1.02).sqrt();
        assert!((rb.lower - lower).abs() < 1e-15);
        assert!((rb.rho - 0.5 * (lower + 1.0)).abs() < 1e-15);
        assert!(rb.rho > 0.9844 && rb.rho < 1.0);
        // ρ = R(1 − m) at the margin midpoint.
        let m = 0.5 * ((1.0 - 1.0 / 1.02) + c0_rate(0.95, 1.02, 2.0));
        assert!((rb.rho - 1.02 * (1.0 - m)).abs() < 1e-12);
        assert!(matches!(
            derive_rho(&p, f64::INFINITY),
            Err(WealthError::AssumptionViolated(_))
        ));
    }

    #[test]
    fn rho_approaches_one_as_impatience_vanishes() {
        let inc = MarkovIncome::iid(vec![1.0], vec![1.0]).unwrap();
        let grid = AssetGrid::geometric(1e-3, 300.0, 60).unwrap();
        let u = UtilitySpec::crra(2.0).unwrap();
        let p = IfProblem::new(0.98, 1.0 / 0.98 - 1e-9, u, inc, grid).unwrap();
        assert!(derive_rho(&p, 2.0).unwrap().rho > 1.0 - 1e-9);
    }

    #[test]
    fn zero_steps_returns_initial_wealth() {
        let (p, pol) = two_state();
        let s = PanelSettings {
            a0: Some(3.5),
            ..PanelSettings::new(1, 0, 11)
        };
        let panel = simulate_panel(&pol, &p, &s).unwrap();
        assert_eq!(panel.terminal_wealth.values(), &[3.5]);
        assert_eq!(panel.mean_path, vec![3.5]);
    }

    #[test]
    fn zero_income_decays_geometrically() {
        let p = IfProblem::new(
            0.95,
            1.02,
            UtilitySpec::crra(2.0).unwrap(),
            MarkovIncome::iid(vec![0.0], vec![1.0]).unwrap(),
            AssetGrid::geometric(1e-3, 300.0, 200).unwrap(),
        )
        .unwrap();
        let (pol, _) = solve(&p, &SolveConfig::default()).unwrap();
        let m = c0_rate(0.95, 1.02, 2.0);
        let s = PanelSettings {
            a0: Some(10.0),
            ..PanelSettings::new(3, 40, 2)
        };
        let panel = simulate_panel(&pol, &p, &s).unwrap();
        let expected = (1.02 * (1.0 - m)).powi(40) * 10.0;
        for v in panel.terminal_wealth.values() {
            assert!((v - expected).abs() < 1e-8 * expected, "{v} vs {expected}");
        }
        assert_eq!(panel.clamped, 0);
    }

    #[test]
    fn budget_identity_holds_along_a_path() {
        let (p, pol) = two_state();
        let s = PanelSettings::new(10, 200, 5);
        let tr = simulate_agent(&pol, &p, &s, 3).unwrap();
        assert_eq!(tr.wealth.len(), 201);
        for t in 0..200 {
            let lhs = tr.wealth[t + 1] - tr.income[t];
            let rhs = 1.02 * (tr.wealth[t] - tr.consumption[t]);
            assert!((lhs - rhs).abs() <= 1e-12 * tr.wealth[t + 1].max(1.0), "t = {t}");
        }
        let panel = simulate_panel(&pol, &p, &s).unwrap();
        assert_eq!(panel.terminal_wealth.values()[3], tr.wealth[200]);
    }

    #[test]
    fn panel_is_deterministic() {
        let (p, pol) = two_state();
        let s = PanelSettings::new(3000, 50, 9);
        let a = simulate_panel(&pol, &p, &s).unwrap();
        let b = simulate_panel(&pol, &p, &s).unwrap();
        assert_eq!(a, b);
        let c = simulate_panel(&pol, &p, &PanelSettings::new(3000, 50, 10)).unwrap();
        assert_ne!(a.terminal_wealth, c.terminal_wealth);
    }

    #[test]
    fn bounded_income_wealth_respects_hard_bound() {
        let (p, pol) = two_state();
        let rho = derive_rho(&p, 2.0).unwrap().rho;
        let s = PanelSettings::new(5000, 300, 4);
        let panel = simulate_panel(&pol, &p, &s).unwrap();
        let a_hat = crate::ifp::pih_margin_check(&pol, &p, 2.0).unwrap().a_hat.unwrap();
        let r = tail_inheritance_report(&panel, &p, rho, Some(a_hat), &InheritanceConfig::default())
            .unwrap();
        let bound = r.hard_bound.unwrap();
        assert!(r.max_wealth <= bound);
        // The tighter bound never exceeds y_max R/(1−ρ).
        assert!(bound <= 1.5 * 1.02 / (1.0 - rho));
        let dom = ar1_domination_check(&pol, &p, &s, rho, a_hat, 1e-8).unwrap();
        assert!(dom.holds && dom.checked_steps > 0, "{dom:?}");
    }

    #[test]
    fn rejects_foreign_policy() {
        let (p, _) = two_state();
        let other = IfProblem::with_default_grid(
            0.95,
            1.02,
            UtilitySpec::crra(2.0).unwrap(),
            MarkovIncome::iid(vec![1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        let pol = Policy::consume_everything(std::sync::Arc::new(other.grid().clone()), 1);
        assert!(simulate_panel(&pol, &p, &PanelSettings::new(1, 1, 1)).is_err());
    }
}
