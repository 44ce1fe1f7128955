use super::IfpError;

/// Income `y(z_t)` driven by a finite Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovIncome {
    labels: Vec<String>,
    transition: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Set on discretizations built from a continuous law.
    truncation_quantile: Option<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl MarkovIncome {
    pub fn new(
        labels: Vec<String>,
        transition: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self, IfpError> {
        let k = y.len();
        if k == 0 {
            return Err(IfpError::InvalidIncome("need at least one state".into()));
        }
        if labels.len() != k {
            return Err(IfpError::InvalidIncome(format!(
                "{} labels for {k} states",
                labels.len()
            )));
        }
        if transition.len() != k || transition.iter().any(|r| r.len() != k) {
            return Err(IfpError::InvalidIncome(format!(
                "transition matrix must be {k}x{k}"
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(IfpError::InvalidIncome(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(IfpError::InvalidIncome(format!("row {i} sums to {s}")));
            }
        }
        if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(IfpError::InvalidIncome(
                "income values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            labels,
            transition,
            y,
            truncation_quantile: None,
        })
    }

    fn default_labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("z{i}")).collect()
    }

    /// IID draws of `y[i]` with probability `probs[i]`.
    pub fn iid(y: Vec<f64>, probs: Vec<f64>) -> Result<Self, IfpError> {
        if probs.len() != y.len() {
            return Err(IfpError::InvalidIncome(
                "one probability per income value required".into(),
            ));
        }
        let k = y.len();
        Self::new(Self::default_labels(k), vec![probs; k], y)
    }

    /// Two states with equal persistence `stay`.
    pub fn two_state(y_lo: f64, y_hi: f64, stay: f64) -> Result<Self, IfpError> {
        Self::new(
            vec!["low".into(), "high".into()],
            vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]],
            vec![y_lo, y_hi],
        )
    }

    /// IID proxy for a continuous law: `states` bins with survival
    /// breakpoints `1, τ^{1/(K−1)}, …, τ, 0`, each represented by the
    /// quantile at its probability midpoint. `q_surv(s)` is the quantile at
    /// survival probability `s`.
    pub fn quantile_proxy(
        states: usize,
        tail_prob: f64,
        q_surv: impl Fn(f64) -> f64,
    ) -> Result<Self, IfpError> {
        if states < 2 {
            return Err(IfpError::InvalidIncome("proxy needs at least two states".into()));
        }
        if !(tail_prob > 0.0 && tail_prob < 1.0) {
            return Err(IfpError::InvalidIncome(format!(
                "tail probability must lie in (0, 1), got {tail_prob}"
            )));
        }
        let k = states;
        let mut surv: Vec<f64> = (0..k)
            .map(|i| tail_prob.powf(i as f64 / (k - 1) as f64))
            .collect();
        surv.push(0.0);
        let probs: Vec<f64> = surv.windows(2).map(|w| w[0] - w[1]).collect();
        let y: Vec<f64> = surv
            .windows(2)
            .map(|w| q_surv(0.5 * (w[0] + w[1])))
            .collect();
        let total: f64 = probs.iter().sum();
        let probs = probs.into_iter().map(|p| p / total).collect();
        let mut inc = Self::iid(y, probs)?;
        inc.truncation_quantile = Some(1.0 - tail_prob);
        Ok(inc)
    }

    pub fn exponential_proxy(rate: f64, states: usize, tail_prob: f64) -> Result<Self, IfpError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(IfpError::InvalidIncome(format!("rate must be positive, got {rate}")));
        }
        Self::quantile_proxy(states, tail_prob, |s| -s.ln() / rate)
    }

    pub fn pareto_proxy(
        alpha: f64,
        xmin: f64,
        states: usize,
        tail_prob: f64,
    ) -> Result<Self, IfpError> {
        if !(alpha.is_finite() && alpha > 0.0 && xmin.is_finite() && xmin > 0.0) {
            return Err(IfpError::InvalidIncome(format!(
                "Pareto proxy needs alpha > 0 and xmin > 0, got {alpha}, {xmin}"
            )));
        }
        Self::quantile_proxy(states, tail_prob, |s| xmin * s.powf(-1.0 / alpha))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_max(&self) -> f64 {
        self.y.iter().copied().fold(0.0, f64::max)
    }

    pub fn truncation_quantile(&self) -> Option<f64> {
        self.truncation_quantile
    }

    /// `sup_z E[y(z′) | z]`.
    pub fn sup_conditional_mean(&self) -> f64 {
        self.transition
            .iter()
            .map(|row| row.iter().zip(&self.y).map(|(p, y)| p * y).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Stationary law by power iteration on the lazy chain `(I + P)/2`,
    /// which shares the invariant law and is aperiodic.
    pub fn stationary(&self) -> Vec<f64> {
        let k = self.len();
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..1_000_000 {
            let mut next = vec![0.0; k];
            for (i, row) in self.transition.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            let mut diff = 0.0f64;
            for j in 0..k {
                next[j] = 0.5 * (pi[j] + next[j]);
                diff = diff.max((next[j] - pi[j]).abs());
            }
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= s);
            pi = next;
            if diff < 1e-16 {
                break;
            }
        }
        pi
    }

    pub fn mean(&self) -> f64 {
        self.stationary().iter().zip(&self.y).map(|(p, y)| p * y).sum()
    }

    /// Groups of states with bitwise-identical transition rows. States in a
    /// group face the same continuation problem.
    pub(crate) fn row_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for z in 0..self.len() {
            match groups
                .iter_mut()
                .find(|g| self.transition[g[0]] == self.transition[z])
            {
                Some(g) => g.push(z),
                None => groups.push(vec![z]),
            }
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        let r = MarkovIncome::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.5, 0.5], vec![0.7, 0.4]],
            vec![1.0, 2.0],
        );
        assert!(matches!(r, Err(IfpError::InvalidIncome(_))));
        assert!(MarkovIncome::iid(vec![-1.0], vec![1.0]).is_err());
    }

    #[test]
    fn stationary_of_periodic_chain() {
        let inc = MarkovIncome::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.0, 2.0],
        )
        .unwrap();
        let pi = inc.stationary();
        assert!((pi[0] - 0.5).abs() < 1e-14);
        assert!((inc.mean() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_of_asymmetric_chain() {
        let inc = MarkovIncome::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let pi = inc.stationary();
        assert!((pi[0] - 0.75).abs() < 1e-12, "{pi:?}");
    }

    #[test]
    fn pareto_proxy_layout() {
        let inc = MarkovIncome::pareto_proxy(2.0, 1.0, 15, 1e-5).unwrap();
        assert_eq!(inc.len(), 15);
        let probs = &inc.transition()[0];
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((probs[14] - 1e-5).abs() < 1e-17);
        assert!(inc.y().windows(2).all(|w| w[1] > w[0]));
        // Last bin midpoint at survival 5e-6.
        assert!((inc.y()[14] - 5e-6f64.powf(-0.5)).abs() < 1e-9);
        assert_eq!(inc.truncation_quantile(), Some(1.0 - 1e-5));
        assert_eq!(inc.row_groups().len(), 1);
    }

    #[test]
    fn exponential_proxy_mean_close_to_one() {
        let inc = MarkovIncome::exponential_proxy(1.0, 15, 1e-5).unwrap();
        assert!((inc.mean() - 1.0).abs() < 0.05, "{}", inc.mean());
    }

    #[test]
    fn two_state_groups() {
        let inc = MarkovIncome::two_state(0.5, 1.5, 0.9).unwrap();
        assert_eq!(inc.row_groups(), vec![vec![0], vec![1]]);
        assert!((inc.mean() - 1.0).abs() < 1e-12);
        assert!((inc.sup_conditional_mean() - 1.4).abs() < 1e-12);
    }
}
