use std::sync::Arc;

use super::{AssetGrid, IfpError};

/// Consumption `c(a, z)` on the asset grid, interpolated piecewise-linearly
/// in `a` for each income state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    grid: Arc<AssetGrid>,
    /// Row-major `[z][i]`.
    values: Vec<f64>,
    states: usize,
}

impl Policy {
    /// Validates `0 < c ≤ a` and monotonicity in `a` for every state.
    pub fn new(grid: Arc<AssetGrid>, values: Vec<Vec<f64>>) -> Result<Self, IfpError> {
        let n = grid.len();
        let states = values.len();
        if states == 0 || values.iter().any(|v| v.len() != n) {
            return Err(IfpError::InvalidPolicy(format!(
                "expected one row of {n} values per income state"
            )));
        }
        for (z, row) in values.iter().enumerate() {
            for (i, (&c, &a)) in row.iter().zip(grid.nodes()).enumerate() {
                if !(c > 0.0 && c <= a) {
                    return Err(IfpError::InvalidPolicy(format!(
                        "c = {c} at node {i} (a = {a}), state {z} violates 0 < c <= a"
                    )));
                }
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(IfpError::InvalidPolicy(format!(
                    "consumption decreases in a for state {z}"
                )));
            }
        }
        Ok(Self::from_flat(grid, values.concat(), states))
    }

    pub(crate) fn from_flat(grid: Arc<AssetGrid>, values: Vec<f64>, states: usize) -> Self {
        debug_assert_eq!(values.len(), grid.len() * states);
        Self {
            grid,
            values,
            states,
        }
    }

    /// `c(a, z) = a`.
    pub fn consume_everything(grid: Arc<AssetGrid>, states: usize) -> Self {
        let values = grid.nodes().repeat(states);
        Self::from_flat(grid, values, states)
    }

    pub fn grid(&self) -> &AssetGrid {
        &self.grid
    }

    pub(crate) fn grid_arc(&self) -> &Arc<AssetGrid> {
        &self.grid
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn values(&self, z: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[z * n..(z + 1) * n]
    }

    pub(crate) fn flat(&self) -> &[f64] {
        &self.values
    }

    /// Off-grid evaluation. Below `a_1` the policy is the ray through the
    /// origin and `(a_1, c_1)`; above `a_max` it extends the top segment.
    /// Results are clipped to `(0, a]`.
    #[inline]
    pub fn eval(&self, z: usize, a: f64) -> f64 {
        let nodes = self.grid.nodes();
        let c = self.values(z);
        let n = nodes.len();
        if a <= 0.0 {
            return 0.0;
        }
        if a <= nodes[0] {
            return c[0] * (a / nodes[0]);
        }
        if a >= nodes[n - 1] {
            let slope = (c[n - 1] - c[n - 2]) / (nodes[n - 1] - nodes[n - 2]);
            return (c[n - 1] + slope * (a - nodes[n - 1])).min(a);
        }
        let i = nodes.partition_point(|x| *x <= a) - 1;
        let w = (a - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (c[i] + w * (c[i + 1] - c[i])).min(a)
    }

    /// Largest nodewise `|f(c) − f(d)|`.
    pub fn sup_distance(&self, other: &Policy, f: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(c, d)| (f(*c) - f(*d)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<AssetGrid> {
        Arc::new(AssetGrid::geometric(0.01, 100.0, 60).unwrap())
    }

    #[test]
    fn validation() {
        let g = grid();
        let n = g.len();
        assert!(Policy::new(g.clone(), vec![g.nodes().to_vec()]).is_ok());
        let mut too_much = g.nodes().to_vec();
        too_much[3] *= 1.01;
        assert!(Policy::new(g.clone(), vec![too_much]).is_err());
        let mut decreasing: Vec<f64> = g.nodes().iter().map(|a| 0.5 * a).collect();
        decreasing[10] = decreasing[9] * 0.9;
        assert!(Policy::new(g.clone(), vec![decreasing]).is_err());
        assert!(Policy::new(g, vec![vec![0.001; n - 1]]).is_err());
    }

    #[test]
    fn linear_policy_is_reproduced_everywhere() {
        let g = grid();
        let vals: Vec<f64> = g.nodes().iter().map(|a| 0.3 * a).collect();
        let p = Policy::new(g, vec![vals]).unwrap();
        for a in [0.001, 0.01, 0.37, 5.5, 100.0, 1e4] {
            assert!((p.eval(0, a) - 0.3 * a).abs() < 1e-12 * a.max(1.0), "{a}");
        }
        assert_eq!(p.eval(0, 0.0), 0.0);
    }

    #[test]
    fn extrapolation_is_clipped_to_assets() {
        let g = grid();
        let vals = g.nodes().to_vec();
        let p = Policy::new(g, vec![vals]).unwrap();
        assert!(p.eval(0, 500.0) <= 500.0);
        assert!((p.eval(0, 500.0) - 500.0).abs() < 1e-9);
    }
}
