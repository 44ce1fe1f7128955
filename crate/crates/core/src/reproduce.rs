//! Canned experiments with fixed seeds, one per acceptance criterion.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::contraction::{
    simulate_recursion, verify_compact_case, verify_heavy_tail_case, verify_light_tail_case,
    ContractionMap, ShockDistribution, ShockFamily,
};
use crate::hetbeta::{
    minimum_horizon, simulate_birth_death, solve_equilibrium, survivor_tail_check, AgentType,
    Economy,
};
use crate::ifp::{pih_margin_check, solve, AssetGrid, IfProblem, MarkovIncome, SolveConfig};
use crate::tails::{ks_distance, polynomial_decay_rate, TailClass};
use crate::utility::{consratio_check, default_probes, UtilitySpec, MARGIN_FLOOR};
use crate::wealth::{
    ar1_domination_check, derive_rho, simulate_panel, tail_inheritance_report, InheritanceConfig,
    PanelSettings,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Every id accepted by [`reproduce`], in criterion order.
pub const IDS: [&str; 13] = [
    "tailbound-case1",
    "tailbound-case2",
    "tailbound-case3",
    "sharpness",
    "coleman-modulus",
    "zero-income",
    "pih-margin",
    "impossibility-light",
    "impossibility-heavy",
    "ar1-domination",
    "hetbeta-pareto",
    "hetbeta-degenerate",
    "consratio-control",
];

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("unknown experiment id {0:?}")]
    UnknownId(String),
    #[error("{0}")]
    Failed(String),
}

fn fail(e: impl std::fmt::Display) -> ReproduceError {
    ReproduceError::Failed(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, relation: Relation, bound: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
            Relation::Below => measured < bound,
            Relation::Above => measured > bound,
        };
        Self {
            name: name.into(),
            measured,
            relation,
            bound,
            passed,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, ok as u8 as f64, Relation::AtLeast, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reproduction {
    pub id: String,
    pub criterion: usize,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub details: Value,
}

impl Reproduction {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Run experiment `id`; `seed` overrides [`DEFAULT_SEED`].
pub fn reproduce(id: &str, seed: Option<u64>) -> Result<Reproduction, ReproduceError> {
    let criterion = IDS
        .iter()
        .position(|x| *x == id)
        .ok_or_else(|| ReproduceError::UnknownId(id.to_string()))?
        + 1;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let (checks, details) = match id {
        "tailbound-case1" => tailbound_case1(seed)?,
        "tailbound-case2" => tailbound_case2(seed)?,
        "tailbound-case3" => tailbound_case3(seed)?,
        "sharpness" => sharpness(seed)?,
        "coleman-modulus" => coleman_modulus()?,
        "zero-income" => zero_income()?,
        "pih-margin" => pih_margin()?,
        "impossibility-light" => impossibility(seed, Income::Exponential)?,
        "impossibility-heavy" => impossibility(seed, Income::Pareto)?,
        "ar1-domination" => domination(seed)?,
        "hetbeta-pareto" => hetbeta_pareto(seed)?,
        "hetbeta-degenerate" => hetbeta_degenerate(seed)?,
        "consratio-control" => consratio_control()?,
        _ => unreachable!(),
    };
    Ok(Reproduction {
        id: id.to_string(),
        criterion,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
        details,
    })
}

type Outcome = Result<(Vec<Check>, Value), ReproduceError>;

fn tailbound_case1(seed: u64) -> Outcome {
    let (rho, x0) = (0.9, 0.0);
    let map = ContractionMap::linear(rho).map_err(fail)?;
    let shocks = ShockFamily::iid(ShockDistribution::Uniform { lo: 0.0, hi: 1.0 }).map_err(fail)?;
    let panel = simulate_recursion(&map, &shocks, x0, 200, 100_000, seed).map_err(fail)?;
    let rep = verify_compact_case(&panel, &map, 1.0).map_err(fail)?;
    Ok((
        vec![
            Check::new("running_max", rep.running_max, Relation::AtMost, 10.0 + x0),
            Check::new("violations", rep.violations as f64, Relation::AtMost, 0.0),
        ],
        json!({ "rho": rho, "x0": x0, "steps": 200, "paths": 100_000, "report": rep }),
    ))
}

fn tailbound_case2(seed: u64) -> Outcome {
    let map = ContractionMap::linear(0.5).map_err(fail)?;
    let shocks = ShockFamily::iid(ShockDistribution::Exponential { rate: 1.0 }).map_err(fail)?;
    let panel = simulate_recursion(&map, &shocks, 0.0, 80, 1_000_000, seed).map_err(fail)?;
    let rep = verify_light_tail_case(&panel, 1.0, 0.05).map_err(fail)?;
    Ok((
        vec![Check::new("lambda_hat", rep.estimate, Relation::AtLeast, 0.45)],
        json!({ "rho": 0.5, "steps": 80, "paths": 1_000_000, "report": rep }),
    ))
}

fn tailbound_case3(seed: u64) -> Outcome {
    let map = ContractionMap::linear(0.5).map_err(fail)?;
    let dist = ShockDistribution::Pareto {
        alpha: 2.0,
        xmin: 1.0,
    };
    let shocks = ShockFamily::iid(dist).map_err(fail)?;
    let panel = simulate_recursion(&map, &shocks, 0.0, 80, 1_000_000, seed).map_err(fail)?;
    let rep = verify_heavy_tail_case(&panel, 2.0, 10_000, 0.1).map_err(fail)?;
    Ok((
        vec![Check::new("alpha_hat", rep.estimate, Relation::AtLeast, 1.9)],
        json!({ "rho": 0.5, "steps": 80, "paths": 1_000_000, "hill_k": 10_000, "report": rep }),
    ))
}

fn sharpness(seed: u64) -> Outcome {
    let map = ContractionMap::linear(0.5).map_err(fail)?;
    let exp = ShockFamily::perfectly_correlated(ShockDistribution::Exponential { rate: 1.0 })
        .map_err(fail)?;
    let panel = simulate_recursion(&map, &exp, 0.0, 80, 1_000_000, seed).map_err(fail)?;
    let ks = ks_distance(&panel.terminal_values, |x| {
        if x <= 0.0 {
            0.0
        } else {
            -(-0.5 * x).exp_m1()
        }
    });
    let pareto = ShockFamily::perfectly_correlated(ShockDistribution::Pareto {
        alpha: 2.0,
        xmin: 1.0,
    })
    .map_err(fail)?;
    let panel_p = simulate_recursion(&map, &pareto, 0.0, 80, 100_000, seed).map_err(fail)?;
    let min = panel_p.terminal_values.min();
    Ok((
        vec![
            Check::new("ks_exp_half", ks, Relation::Below, 0.01),
            Check::new("pareto_min_low", min, Relation::AtLeast, 1.99),
            Check::new("pareto_min_high", min, Relation::AtMost, 2.01),
        ],
        json!({ "rho": 0.5, "steps": 80, "paths_exp": 1_000_000, "paths_pareto": 100_000,
                "ks": ks, "pareto_minimum": min }),
    ))
}

fn two_state_problem() -> Result<IfProblem, ReproduceError> {
    IfProblem::with_default_grid(
        0.95,
        1.02,
        UtilitySpec::crra(2.0).map_err(fail)?,
        MarkovIncome::two_state(0.5, 1.5, 0.9).map_err(fail)?,
    )
    .map_err(fail)
}

fn coleman_modulus() -> Outcome {
    let problem = two_state_problem()?;
    let (_, report) = solve(&problem, &SolveConfig::default()).map_err(fail)?;
    let modulus = report.observed_modulus.unwrap_or(f64::INFINITY);
    let bound = 0.969 * 1.01;
    let history_tail: Vec<f64> = report
        .metric_history
        .iter()
        .rev()
        .take(11)
        .rev()
        .copied()
        .collect();
    Ok((
        vec![
            Check::flag("converged", report.converged),
            Check::new("observed_modulus", modulus, Relation::AtMost, bound),
        ],
        json!({ "beta_r": report.beta_r, "iterations": report.iterations,
                "final_metric": report.final_metric, "metric_tail": history_tail }),
    ))
}

fn zero_income() -> Outcome {
    let mut checks = Vec::new();
    let mut cases = Vec::new();
    for (beta, r, gamma) in [(0.95, 1.02, 2.0), (0.9, 1.05, 1.0), (0.96, 1.0, 3.0)] {
        let problem = IfProblem::new(
            beta,
            r,
            UtilitySpec::crra(gamma).map_err(fail)?,
            MarkovIncome::iid(vec![0.0], vec![1.0]).map_err(fail)?,
            AssetGrid::geometric(1e-3, 300.0, 200).map_err(fail)?,
        )
        .map_err(fail)?;
        let (policy, report) = solve(&problem, &SolveConfig::default()).map_err(fail)?;
        let m = crate::ifp::c0_rate(beta, r, gamma);
        let nodes = problem.grid().nodes();
        let max_rel = policy
            .values(0)
            .iter()
            .zip(nodes)
            .filter(|(c, a)| **c < **a)
            .map(|(c, a)| (c - m * a).abs() / (m * a))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("rel_err_beta{beta}_r{r}_gamma{gamma}"),
            max_rel,
            Relation::Below,
            1e-4,
        ));
        cases.push(json!({ "beta": beta, "r": r, "gamma": gamma, "c0_rate": m,
                           "max_rel_err": max_rel, "iterations": report.iterations }));
    }
    Ok((checks, json!({ "cases": cases })))
}

fn pih_margin() -> Outcome {
    let problem = two_state_problem()?;
    let (policy, _) = solve(&problem, &SolveConfig::default()).map_err(fail)?;
    let rep = pih_margin_check(&policy, &problem, 2.0).map_err(fail)?;
    let a_hat = rep.a_hat.unwrap_or(f64::INFINITY);
    Ok((
        vec![Check::new("a_hat", a_hat, Relation::Below, rep.a_max / 2.0)],
        json!({ "report": rep }),
    ))
}

#[derive(Clone, Copy)]
enum Income {
    Exponential,
    Pareto,
}

fn proxy_problem(kind: Income) -> Result<IfProblem, ReproduceError> {
    let income = match kind {
        Income::Exponential => MarkovIncome::exponential_proxy(1.0, 15, 1e-5),
        Income::Pareto => MarkovIncome::pareto_proxy(2.0, 1.0, 15, 1e-5),
    }
    .map_err(fail)?;
    IfProblem::with_default_grid(0.95, 1.02, UtilitySpec::crra(2.0).map_err(fail)?, income)
        .map_err(fail)
}

fn impossibility(seed: u64, kind: Income) -> Outcome {
    let problem = proxy_problem(kind)?;
    let (policy, _) = solve(&problem, &SolveConfig::default()).map_err(fail)?;
    let rho = derive_rho(&problem, 2.0).map_err(fail)?.rho;
    let a_hat = pih_margin_check(&policy, &problem, 2.0).map_err(fail)?.a_hat;
    let settings = PanelSettings::new(100_000, 500, seed);
    let panel = simulate_panel(&policy, &problem, &settings).map_err(fail)?;
    let rep = tail_inheritance_report(&panel, &problem, rho, a_hat, &InheritanceConfig::default())
        .map_err(fail)?;
    let missing = f64::NAN;
    let checks = match kind {
        Income::Exponential => {
            let lw = rep.lambda_wealth.unwrap_or(missing);
            let li = rep.lambda_income.unwrap_or(missing);
            vec![
                Check::flag(
                    "wealth_light_or_compact",
                    matches!(rep.wealth.classification, TailClass::Light | TailClass::Compact),
                ),
                Check::new("lambda_wealth", lw, Relation::AtLeast, (1.0 - rho) * li - 0.05),
            ]
        }
        Income::Pareto => {
            let aw = rep.alpha_wealth.unwrap_or(missing);
            let ai = rep.alpha_income.unwrap_or(missing);
            vec![Check::new("alpha_wealth", aw, Relation::AtLeast, ai - 0.1)]
        }
    };
    Ok((
        checks,
        json!({ "rho": rho, "a_hat": a_hat, "agents": 100_000, "horizon": 500,
                "clamped": panel.clamped,
                "truncation_quantile": problem.income().truncation_quantile(),
                "report": rep }),
    ))
}

fn domination(seed: u64) -> Outcome {
    let problem = proxy_problem(Income::Exponential)?;
    let (policy, _) = solve(&problem, &SolveConfig::default()).map_err(fail)?;
    let rho = derive_rho(&problem, 2.0).map_err(fail)?.rho;
    let pih = pih_margin_check(&policy, &problem, 2.0).map_err(fail)?;
    let a_hat = pih
        .a_hat
        .ok_or_else(|| fail("no asset level satisfies the consumption margin"))?;
    let settings = PanelSettings::new(100_000, 500, seed);
    let rep = ar1_domination_check(&policy, &problem, &settings, rho, a_hat, 1e-8).map_err(fail)?;
    Ok((
        vec![
            Check::new("violations", rep.violations as f64, Relation::AtMost, 0.0),
            Check::new("checked_steps", rep.checked_steps as f64, Relation::AtLeast, 1.0),
        ],
        json!({ "report": rep }),
    ))
}

fn two_type_economy() -> Result<Economy, ReproduceError> {
    let t = |beta| AgentType {
        pi: 0.5,
        p: 0.02,
        y: 1.0,
        beta,
        gamma: 2.0,
    };
    Economy::new(vec![t(0.92), t(0.96)]).map_err(fail)
}

fn hetbeta_pareto(seed: u64) -> Outcome {
    let economy = two_type_economy()?;
    let result = solve_equilibrium(&economy, 1e-12).map_err(fail)?;
    let alpha = result
        .alpha
        .ok_or_else(|| fail("heterogeneous economy returned no tail exponent"))?;
    let accounting = economy
        .types()
        .iter()
        .zip(&result.types)
        .map(|(t, o)| {
            let rhs = (1.0 - t.p) * o.growth * o.mean_wealth + t.p * o.w0;
            (o.mean_wealth - rhs).abs() / o.mean_wealth
        })
        .fold(0.0, f64::max);

    let agents = 1_000_000;
    let horizon = minimum_horizon(&economy);
    let panel = simulate_birth_death(&economy, &result, agents, horizon, seed).map_err(fail)?;
    let hill = polynomial_decay_rate(&panel.wealth, agents / 100).map_err(fail)?;
    let rel = (hill.estimate - alpha).abs() / alpha;

    let growing = result
        .types
        .iter()
        .position(|o| o.alpha == Some(alpha))
        .ok_or_else(|| fail("no type attains the tail exponent"))?;
    let points = survivor_tail_check(&economy, &result, &panel, growing, 20).map_err(fail)?;
    let worst_z = points.iter().map(|p| p.z_score).fold(0.0, f64::max);
    Ok((
        vec![
            Check::new("abs_excess_demand", result.excess_demand.abs(), Relation::Below, 1e-10),
            Check::new("accounting_residual", accounting, Relation::Below, 1e-12),
            Check::new("hill_rel_error", rel, Relation::AtMost, 0.1),
            Check::new("survivor_max_z", worst_z, Relation::AtMost, 3.0),
            Check::new("alpha", alpha, Relation::Above, 1.0),
        ],
        json!({ "r": result.r, "alpha": alpha, "hill": hill, "agents": agents,
                "horizon": horizon, "capped": panel.capped, "survivor": points }),
    ))
}

fn hetbeta_degenerate(seed: u64) -> Outcome {
    let beta = 0.95;
    let economy = Economy::new(vec![AgentType {
        pi: 1.0,
        p: 0.02,
        y: 1.0,
        beta,
        gamma: 2.0,
    }])
    .map_err(fail)?;
    let result = solve_equilibrium(&economy, 1e-12).map_err(fail)?;
    let horizon = minimum_horizon(&economy);
    let panel = simulate_birth_death(&economy, &result, 100_000, horizon, seed).map_err(fail)?;
    // Zero variance is checked exactly as max == min within each type.
    let mut worst_spread: f64 = 0.0;
    for j in 0..economy.types().len() {
        let (lo, hi) = panel
            .types
            .iter()
            .zip(panel.wealth.values())
            .filter(|(t, _)| **t == j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, w)| {
                (lo.min(*w), hi.max(*w))
            });
        worst_spread = worst_spread.max(hi - lo);
    }
    Ok((
        vec![
            Check::new("abs_r_beta_minus_one", (result.r * beta - 1.0).abs(), Relation::AtMost, 1e-12),
            Check::new("wealth_spread", worst_spread, Relation::AtMost, 0.0),
            Check::flag("degenerate_without_alpha", result.degenerate && result.alpha.is_none()),
        ],
        json!({ "r": result.r, "growth": result.types[0].growth, "horizon": horizon }),
    ))
}

fn consratio_control() -> Outcome {
    let kappa = 0.5;
    let probes = default_probes();
    let cara = consratio_check(&UtilitySpec::cara(1.0).map_err(fail)?, kappa, &probes, MARGIN_FLOOR)
        .map_err(fail)?;
    let crra = consratio_check(&UtilitySpec::crra(2.0).map_err(fail)?, kappa, &probes, MARGIN_FLOOR)
        .map_err(fail)?;
    let expected = kappa.powf(-0.5) - 1.0;
    Ok((
        vec![
            Check::flag("cara_fails", !cara.holds),
            Check::new("cara_ratio_gap", (cara.min_ratio - 1.0).abs(), Relation::AtMost, MARGIN_FLOOR),
            Check::flag("crra_holds", crra.holds),
            Check::new("crra_margin_error", (crra.margin - expected).abs(), Relation::AtMost, 1e-12),
        ],
        json!({ "kappa": kappa, "cara": cara, "crra": crra, "crra_expected_margin": expected }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id() {
        assert!(matches!(
            reproduce("nope", None),
            Err(ReproduceError::UnknownId(_))
        ));
    }

    #[test]
    fn cheap_experiments_pass() {
        for id in ["consratio-control", "hetbeta-degenerate"] {
            let r = reproduce(id, None).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }
}
