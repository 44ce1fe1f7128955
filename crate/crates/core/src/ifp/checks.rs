use serde::Serialize;

use super::{IfProblem, IfpError, Policy};
use crate::utility::UtilitySpec;

/// Consumption rate `1 − β^{1/γ} R^{1/γ − 1}` of the zero-income CRRA
/// problem, i.e. `c0(a) = c0_rate · a`.
pub fn c0_rate(beta: f64, r: f64, gamma: f64) -> f64 {
    1.0 - beta.powf(1.0 / gamma) * r.powf(1.0 / gamma - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PihReport {
    pub m_lower: f64,
    pub m_upper: f64,
    /// Midpoint of `(m_lower, m_upper)`.
    pub m: f64,
    /// Smallest node with `c(a, z) ≥ m a` at it and every node above.
    pub a_hat: Option<f64>,
    pub a_hat_index: Option<usize>,
    pub a_max: f64,
    pub holds: bool,
}

/// Scan for the asset level above which consumption dominates `m · a`.
pub fn pih_margin_check(
    policy: &Policy,
    problem: &IfProblem,
    gamma_bar: f64,
) -> Result<PihReport, IfpError> {
    let (beta, r) = (problem.beta(), problem.r());
    if r < 1.0 {
        return Err(IfpError::RateBelowOne(r));
    }
    if !(gamma_bar.is_finite() && gamma_bar > 0.0) {
        return Err(IfpError::AssumptionViolated(format!(
            "asymptotic relative risk aversion must be finite and positive, got {gamma_bar}"
        )));
    }
    let m_lower = 1.0 - 1.0 / r;
    let m_upper = c0_rate(beta, r, gamma_bar);
    if !(m_upper > m_lower) {
        return Err(IfpError::AssumptionViolated(format!(
            "empty margin interval ({m_lower}, {m_upper})"
        )));
    }
    let m = 0.5 * (m_lower + m_upper);
    let nodes = problem.grid().nodes();
    let mut index = None;
    for i in (0..nodes.len()).rev() {
        if (0..policy.states()).all(|z| policy.values(z)[i] >= m * nodes[i]) {
            index = Some(i);
        } else {
            break;
        }
    }
    let a_max = problem.grid().a_max();
    let a_hat = index.map(|i| nodes[i]);
    Ok(PihReport {
        m_lower,
        m_upper,
        m,
        a_hat,
        a_hat_index: index,
        a_max,
        holds: a_hat.is_some_and(|a| a < a_max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub c0_rate: f64,
    /// `min (c − c0)/a` over all nodes.
    pub min_gap: f64,
    pub violations: usize,
    pub holds: bool,
}

/// Check `c(a, z) ≥ c0(a) − tol · a` at every node. CRRA only.
pub fn policy_lower_bound_check(
    policy: &Policy,
    problem: &IfProblem,
    tol: f64,
) -> Result<LowerBoundReport, IfpError> {
    let UtilitySpec::Crra { gamma } = *problem.utility() else {
        return Err(IfpError::InvalidProblem(
            "the closed-form lower bound needs CRRA utility".into(),
        ));
    };
    let m = c0_rate(problem.beta(), problem.r(), gamma);
    let nodes = problem.grid().nodes();
    let mut min_gap = f64::INFINITY;
    let mut violations = 0;
    for z in 0..policy.states() {
        for (c, a) in policy.values(z).iter().zip(nodes) {
            let gap = (c - m * a) / a;
            min_gap = min_gap.min(gap);
            if gap < -tol {
                violations += 1;
            }
        }
    }
    Ok(LowerBoundReport {
        c0_rate: m,
        min_gap,
        violations,
        holds: violations == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerReport {
    /// Largest `|u′(c) − max{βR E[u′(c′)], u′(a)}| / u′(c)` over interior nodes.
    pub max_rel_residual: f64,
    pub binding_nodes: usize,
    pub interior_nodes: usize,
    /// Binding nodes where the Euler inequality `u′(a) ≥ βR E[u′(c′)]` fails.
    pub binding_violations: usize,
}

pub fn euler_residuals(policy: &Policy, problem: &IfProblem) -> EulerReport {
    let u = problem.utility();
    let nodes = problem.grid().nodes();
    let mut report = EulerReport {
        max_rel_residual: 0.0,
        binding_nodes: 0,
        interior_nodes: 0,
        binding_violations: 0,
    };
    for z in 0..policy.states() {
        for (c, a) in policy.values(z).iter().zip(nodes) {
            let mu_a = u.marginal_unchecked(*a);
            if *c >= *a {
                report.binding_nodes += 1;
                let e = problem.discounted_expectation(policy, z, *a, *a);
                if e > mu_a * (1.0 + 1e-10) {
                    report.binding_violations += 1;
                }
            } else {
                report.interior_nodes += 1;
                let mu_c = u.marginal_unchecked(*c);
                let rhs = problem.discounted_expectation(policy, z, *a, *c).max(mu_a);
                report.max_rel_residual = report.max_rel_residual.max((mu_c - rhs).abs() / mu_c);
            }
        }
    }
    report
}
