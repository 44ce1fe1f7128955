use serde::Serialize;

use super::IfpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Geometric,
    Linear,
}

/// Strictly increasing positive asset nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetGrid {
    nodes: Vec<f64>,
    spacing: Spacing,
}

pub const MIN_NODES: usize = 50;
pub const DEFAULT_A_MIN: f64 = 1e-3;
pub const DEFAULT_NODES: usize = 200;
/// Default top node as a multiple of mean income.
pub const DEFAULT_A_MAX_MULTIPLE: f64 = 300.0;

impl AssetGrid {
    pub fn new(a_min: f64, a_max: f64, n: usize, spacing: Spacing) -> Result<Self, IfpError> {
        if n < MIN_NODES {
            return Err(IfpError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        if !(a_min.is_finite() && a_min > 0.0 && a_max.is_finite() && a_max > a_min) {
            return Err(IfpError::InvalidGrid(format!(
                "need 0 < a_min < a_max, got {a_min}, {a_max}"
            )));
        }
        let last = (n - 1) as f64;
        let mut nodes: Vec<f64> = match spacing {
            Spacing::Geometric => {
                let ratio = (a_max / a_min).ln();
                (0..n).map(|i| a_min * (ratio * i as f64 / last).exp()).collect()
            }
            Spacing::Linear => (0..n)
                .map(|i| a_min + (a_max - a_min) * i as f64 / last)
                .collect(),
        };
        nodes[0] = a_min;
        nodes[n - 1] = a_max;
        Ok(Self { nodes, spacing })
    }

    pub fn geometric(a_min: f64, a_max: f64, n: usize) -> Result<Self, IfpError> {
        Self::new(a_min, a_max, n, Spacing::Geometric)
    }

    /// Geometric grid on `[1e−3, 300 × mean income]` with 200 nodes.
    pub fn default_for_mean_income(mean_income: f64) -> Result<Self, IfpError> {
        if !(mean_income > 0.0) {
            return Err(IfpError::InvalidGrid(
                "zero mean income: give a_max explicitly".into(),
            ));
        }
        Self::geometric(
            DEFAULT_A_MIN,
            DEFAULT_A_MAX_MULTIPLE * mean_income,
            DEFAULT_NODES,
        )
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn a_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn a_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
}
