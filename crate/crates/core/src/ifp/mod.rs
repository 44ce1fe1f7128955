//! Income fluctuation problem
//!
//! ```text
//! max E Σ β^t u(c_t)  s.t.  a_{t+1} = R(a_t − c_t) + y_{t+1},  0 < c_t ≤ a_t,
//! ```
//!
//! with `y_t = y(z_t)` for a finite Markov chain `z_t`, solved by iterating
//! the Coleman operator on consumption policies and measuring progress in
//! the sup distance between marginal utilities.

mod checks;
mod grid;
mod income;
mod policy;
mod solver;

use std::sync::Arc;

use thiserror::Error;

use crate::utility::{UtilityError, UtilitySpec};

pub use checks::{
    c0_rate, euler_residuals, pih_margin_check, policy_lower_bound_check, EulerReport,
    LowerBoundReport, PihReport,
};
pub use grid::{AssetGrid, Spacing, DEFAULT_A_MAX_MULTIPLE, DEFAULT_A_MIN, DEFAULT_NODES, MIN_NODES};
pub use income::MarkovIncome;
pub use policy::Policy;
pub use solver::{coleman_step, solve, SolveConfig, SolveReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IfpError {
    #[error("invalid income process: {0}")]
    InvalidIncome(String),
    #[error("invalid asset grid: {0}")]
    InvalidGrid(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("impatience fails: beta * R = {0} must be below 1")]
    ImpatienceViolated(f64),
    #[error("root solve failed: {0}")]
    SolverError(String),
    #[error("no convergence after {} iterations (metric {:e})", .0.1.iterations, .0.1.final_metric)]
    NotConverged(Box<(Policy, SolveReport)>),
    #[error("R = {0} < 1: use rho = R directly")]
    RateBelowOne(f64),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

/// `(β, R, u, income, grid)` with `βR < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IfProblem {
    beta: f64,
    r: f64,
    utility: UtilitySpec,
    income: MarkovIncome,
    grid: Arc<AssetGrid>,
}

impl IfProblem {
    pub fn new(
        beta: f64,
        r: f64,
        utility: UtilitySpec,
        income: MarkovIncome,
        grid: AssetGrid,
    ) -> Result<Self, IfpError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(IfpError::InvalidProblem(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(IfpError::InvalidProblem(format!("R must be positive, got {r}")));
        }
        if beta * r >= 1.0 {
            return Err(IfpError::ImpatienceViolated(beta * r));
        }
        if let UtilitySpec::Hara { a, .. } = utility {
            if a < 0.0 {
                return Err(IfpError::InvalidProblem(
                    "HARA with a < 0 has a bliss point; marginal utility must stay positive"
                        .into(),
                ));
            }
        }
        Ok(Self {
            beta,
            r,
            utility,
            income,
            grid: Arc::new(grid),
        })
    }

    /// Uses [`AssetGrid::default_for_mean_income`].
    pub fn with_default_grid(
        beta: f64,
        r: f64,
        utility: UtilitySpec,
        income: MarkovIncome,
    ) -> Result<Self, IfpError> {
        let grid = AssetGrid::default_for_mean_income(income.mean())?;
        Self::new(beta, r, utility, income, grid)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn income(&self) -> &MarkovIncome {
        &self.income
    }

    pub fn grid(&self) -> &AssetGrid {
        &self.grid
    }

    pub(crate) fn grid_arc(&self) -> &Arc<AssetGrid> {
        &self.grid
    }

    /// `βR Σ_{z′} P(z, z′) u′(c(R(a − t) + y(z′), z′))`.
    #[inline]
    pub(crate) fn discounted_expectation(&self, policy: &Policy, z: usize, a: f64, t: f64) -> f64 {
        let savings = self.r * (a - t);
        let y = self.income.y();
        let mut acc = 0.0;
        for (zp, p) in self.income.transition()[z].iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let c = policy.eval(zp, savings + y[zp]);
            acc += p * self.utility.marginal_unchecked(c);
        }
        self.beta * self.r * acc
    }
}
