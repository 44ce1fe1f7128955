//! Tail-thickness diagnostics built on the moment generating function.
//!
//! A sample is *light*-tailed when its MGF is finite at some `s > 0` and
//! *heavy*-tailed otherwise. The exponential decay rate `λ` is the supremum of
//! such `s`; the polynomial decay rate `α` is the supremum of `s` with
//! `E[X^s] < ∞`. On finite samples `λ` is estimated from the slope of the log
//! empirical survival function and `α` with the Hill estimator; both are
//! combined with a support-width heuristic in [`classify_tail`].

use serde::Serialize;
use thiserror::Error;

/// Empirical MGF entries above this value are treated as divergent.
pub const MGF_OVERFLOW: f64 = 1e300;

/// Sample size below which the survival-slope estimator refuses to run.
pub const MIN_SAMPLE_FOR_SLOPE: usize = 100;

/// Minimum number of points in any tail-fitting window.
pub const MIN_TAIL_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailError {
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient tail data: {have} points available, need at least {need}")]
    InsufficientTailData { have: usize, need: usize },
    #[error("degenerate tail: {0}")]
    DegenerateTail(String),
    #[error("Markov bound not applicable: empirical MGF diverges at s = {0}")]
    BoundNotApplicable(f64),
}

/// A nonempty collection of nonnegative draws.
///
/// `pooled` marks samples built by stacking draws from several time indices,
/// which is how uniform-in-`t` statements are approximated.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSample {
    values: Vec<f64>,
    label: String,
    pooled: bool,
}

impl TailSample {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self, TailError> {
        if values.is_empty() {
            return Err(TailError::InvalidSample("sample is empty".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(TailError::InvalidSample(format!(
                "value {v} at index {i} is not a finite nonnegative number"
            )));
        }
        Ok(Self {
            values,
            label: label.into(),
            pooled: false,
        })
    }

    pub fn with_pooled(mut self, pooled: bool) -> Self {
        self.pooled = pooled;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_pooled(&self) -> bool {
        self.pooled
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Multiply every value by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, TailError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(TailError::InvalidArgument(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v * c).collect(),
            label: self.label.clone(),
            pooled: self.pooled,
        })
    }

    /// Values sorted in descending order (ties keep no particular order, which
    /// is harmless since equal values are interchangeable).
    pub fn sorted_descending(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_unstable_by(|a, b| b.total_cmp(a));
        v
    }
}

/// One entry of an empirical MGF curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MgfValue {
    Finite(f64),
    Divergent,
}

impl MgfValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            MgfValue::Finite(v) => Some(v),
            MgfValue::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, MgfValue::Divergent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfCurve {
    pub s_points: Vec<f64>,
    pub m_values: Vec<MgfValue>,
}

/// Sample mean of `exp(s·x)` at each `s`.
///
/// An entry is flagged [`MgfValue::Divergent`] as soon as one summand
/// overflows or the running mean exceeds [`MGF_OVERFLOW`].
pub fn empirical_mgf(sample: &TailSample, s_points: &[f64]) -> Result<MgfCurve, TailError> {
    if sample.is_empty() {
        return Err(TailError::InvalidSample("sample is empty".into()));
    }
    if s_points.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(TailError::InvalidArgument(
            "s points must be finite and nonnegative".into(),
        ));
    }
    if s_points.windows(2).any(|w| w[1] < w[0]) {
        return Err(TailError::InvalidArgument(
            "s points must be sorted ascending".into(),
        ));
    }
    let m_values = s_points
        .iter()
        .map(|&s| mgf_at(sample.values(), s))
        .collect();
    Ok(MgfCurve {
        s_points: s_points.to_vec(),
        m_values,
    })
}

fn mgf_at(values: &[f64], s: f64) -> MgfValue {
    if s == 0.0 {
        return MgfValue::Finite(1.0);
    }
    let mut sum = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let term = (s * x).exp();
        if !term.is_finite() {
            return MgfValue::Divergent;
        }
        sum += term;
        if !sum.is_finite() || sum > MGF_OVERFLOW * (i + 1) as f64 {
            return MgfValue::Divergent;
        }
    }
    MgfValue::Finite(sum / values.len() as f64)
}

/// Point estimate of a decay rate with its standard error and the window used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Number of upper order statistics in the fitting window.
    pub points: usize,
    /// Smallest sample value inside (survival slope) or bounding (Hill) the window.
    pub threshold: f64,
}

/// Exponential decay rate from the least-squares slope of `log P̂(X ≥ x)`
/// against `x` over the top `upper_fraction` of order statistics.
///
/// The `j`-th largest value is paired with the plotting position `j/n`.
pub fn exponential_decay_rate(
    sample: &TailSample,
    upper_fraction: f64,
) -> Result<DecayEstimate, TailError> {
    survival_slope(&sample.sorted_descending(), upper_fraction)
}

fn survival_slope(desc: &[f64], upper_fraction: f64) -> Result<DecayEstimate, TailError> {
    if !(upper_fraction > 0.0 && upper_fraction < 1.0) {
        return Err(TailError::InvalidArgument(format!(
            "upper_fraction must lie in (0, 1), got {upper_fraction}"
        )));
    }
    let n = desc.len();
    if n < MIN_SAMPLE_FOR_SLOPE {
        return Err(TailError::InsufficientTailData {
            have: n,
            need: MIN_SAMPLE_FOR_SLOPE,
        });
    }
    let m = (upper_fraction * n as f64).floor() as usize;
    if m < MIN_TAIL_POINTS {
        return Err(TailError::InsufficientTailData {
            have: m,
            need: MIN_TAIL_POINTS,
        });
    }
    let window = &desc[..m];
    let nf = n as f64;
    let ys: Vec<f64> = (1..=m).map(|j| (j as f64 / nf).ln()).collect();
    let mf = m as f64;
    let mean_x = window.iter().sum::<f64>() / mf;
    let mean_y = ys.iter().sum::<f64>() / mf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in window.iter().zip(&ys) {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxy += dx * (y - mean_y);
    }
    if !(sxx > 0.0) {
        return Err(TailError::DegenerateTail(
            "all values in the fitting window are equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = window
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let std_error = (ssr / (mf - 2.0) / sxx).sqrt();
    Ok(DecayEstimate {
        estimate: -slope,
        std_error,
        points: m,
        threshold: window[m - 1],
    })
}

/// Hill estimate of the polynomial decay rate from the top `k` order
/// statistics: `α̂ = k / Σ_{i≤k} log(x_(i) / x_(k+1))`, standard error `α̂/√k`.
pub fn polynomial_decay_rate(sample: &TailSample, k: usize) -> Result<DecayEstimate, TailError> {
    hill(&sample.sorted_descending(), k)
}

fn hill(desc: &[f64], k: usize) -> Result<DecayEstimate, TailError> {
    if k < MIN_TAIL_POINTS {
        return Err(TailError::InsufficientTailData {
            have: k,
            need: MIN_TAIL_POINTS,
        });
    }
    if k >= desc.len() {
        return Err(TailError::InvalidArgument(format!(
            "k = {k} must be smaller than the sample size {}",
            desc.len()
        )));
    }
    let threshold = desc[k];
    if !(threshold > 0.0) {
        return Err(TailError::DegenerateTail(
            "order statistic x_(k+1) is zero".into(),
        ));
    }
    let denom: f64 = desc[..k].iter().map(|x| (x / threshold).ln()).sum();
    if !(denom > 0.0) {
        return Err(TailError::DegenerateTail(
            "top k order statistics are all tied with x_(k+1)".into(),
        ));
    }
    let estimate = k as f64 / denom;
    Ok(DecayEstimate {
        estimate,
        std_error: estimate / (k as f64).sqrt(),
        points: k,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailClass {
    Compact,
    Light,
    Heavy,
    Indeterminate,
}

/// Decision thresholds for [`classify_tail`]; all are echoed in the report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyConfig {
    /// Fraction of the sample that forms the "top" for the width test.
    pub compact_top_fraction: f64,
    /// Compact when `(max − x_top) / max` is below this.
    pub compact_rel_width: f64,
    /// Window for the survival-slope fit.
    pub upper_fraction: f64,
    /// Hill uses `k = hill_fraction · n` order statistics.
    pub hill_fraction: f64,
    /// Explicit Hill `k`; overrides `hill_fraction` when set.
    pub hill_k: Option<usize>,
    /// Hill estimates above this are treated as effectively light.
    pub light_alpha: f64,
    /// `λ̂` times the fit threshold below this is read as a polynomial tail.
    pub heavy_lambda_scaled: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            compact_top_fraction: 0.01,
            compact_rel_width: 0.05,
            upper_fraction: 0.1,
            hill_fraction: 0.01,
            hill_k: None,
            light_alpha: 5.0,
            heavy_lambda_scaled: 1.5,
        }
    }
}

/// Raw estimator output behind a classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailDiagnostics {
    pub top_rel_width: f64,
    pub lambda_raw: Option<f64>,
    pub lambda_se: Option<f64>,
    pub lambda_scaled: Option<f64>,
    pub lambda_window: Option<usize>,
    pub alpha_raw: Option<f64>,
    pub alpha_se: Option<f64>,
    pub hill_k: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub classification: TailClass,
    pub lambda_hat: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub k_upper: usize,
    pub thresholds: ClassifyConfig,
    pub diagnostics: TailDiagnostics,
}

/// Classify a sample as Compact, Light, Heavy or Indeterminate.
///
/// Compact when the top `compact_top_fraction` of values spans a relative
/// width below `compact_rel_width`. Otherwise Heavy when the Hill estimate is
/// at most `light_alpha` and the scale-free slope `λ̂·x_thr` is below
/// `heavy_lambda_scaled`; Light when both signals point the other way; and
/// Indeterminate when they disagree or an estimator fails.
pub fn classify_tail(sample: &TailSample, config: &ClassifyConfig) -> TailReport {
    let desc = sample.sorted_descending();
    let n = desc.len();
    let mut notes = Vec::new();

    let top = ((config.compact_top_fraction * n as f64).ceil() as usize).clamp(1, n);
    let max = desc[0];
    let top_edge = desc[top - 1];
    let top_rel_width = if max > 0.0 { (max - top_edge) / max } else { 0.0 };

    let lambda = survival_slope(&desc, config.upper_fraction);
    if let Err(e) = &lambda {
        notes.push(format!("survival slope: {e}"));
    }
    let hill_k = config
        .hill_k
        .unwrap_or(((config.hill_fraction * n as f64).floor() as usize).max(MIN_TAIL_POINTS));
    let alpha = hill(&desc, hill_k);
    if let Err(e) = &alpha {
        notes.push(format!("hill: {e}"));
    }
    let lambda = lambda.ok();
    let alpha = alpha.ok();
    let lambda_scaled = lambda.map(|l| l.estimate * l.threshold);

    let diagnostics = TailDiagnostics {
        top_rel_width,
        lambda_raw: lambda.map(|l| l.estimate),
        lambda_se: lambda.map(|l| l.std_error),
        lambda_scaled,
        lambda_window: lambda.map(|l| l.points),
        alpha_raw: alpha.map(|a| a.estimate),
        alpha_se: alpha.map(|a| a.std_error),
        hill_k,
        notes,
    };
    let report = |classification, lambda_hat, alpha_hat, k_upper, diagnostics| TailReport {
        classification,
        lambda_hat,
        alpha_hat,
        k_upper,
        thresholds: *config,
        diagnostics,
    };

    if n < MIN_SAMPLE_FOR_SLOPE && desc[n - 1] != max {
        let mut diagnostics = diagnostics;
        diagnostics.notes.push(format!(
            "sample of {n} values is too small to classify (need {MIN_SAMPLE_FOR_SLOPE})"
        ));
        return report(TailClass::Indeterminate, None, None, 0, diagnostics);
    }

    if top_rel_width < config.compact_rel_width {
        let lambda_hat = lambda.map(|l| l.estimate).filter(|l| *l > 0.0);
        return report(TailClass::Compact, lambda_hat, None, top, diagnostics);
    }

    match (lambda, alpha, lambda_scaled) {
        (Some(l), Some(a), Some(scaled)) => {
            let heavy_signal = a.estimate <= config.light_alpha;
            let light_signal = scaled >= config.heavy_lambda_scaled && l.estimate > 0.0;
            match (heavy_signal, light_signal) {
                (true, false) => report(
                    TailClass::Heavy,
                    None,
                    Some(a.estimate),
                    a.points,
                    diagnostics,
                ),
                (false, true) => report(
                    TailClass::Light,
                    Some(l.estimate),
                    None,
                    l.points,
                    diagnostics,
                ),
                _ => report(TailClass::Indeterminate, None, None, 0, diagnostics),
            }
        }
        _ => report(TailClass::Indeterminate, None, None, 0, diagnostics),
    }
}

/// One evaluation of the exponential Markov bound `P(X > x) ≤ M(s)·e^{−sx}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovBoundPoint {
    pub x: f64,
    /// Empirical survival `P̂(X > x)`.
    pub lhs: f64,
    /// `M̂(s)·e^{−sx}`.
    pub rhs: f64,
    pub holds: bool,
}

/// Relative slack allowed for floating-point rounding in the Markov bound.
const MARKOV_ROUNDING: f64 = 1e-12;

/// Evaluate the Markov bound on the empirical measure at each `x`.
///
/// On the empirical measure the inequality is an identity, so `holds` only
/// allows for rounding.
pub fn markov_bound_check(
    sample: &TailSample,
    s: f64,
    x_points: &[f64],
) -> Result<Vec<MarkovBoundPoint>, TailError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(TailError::InvalidArgument(format!(
            "s must be positive, got {s}"
        )));
    }
    let mgf = match mgf_at(sample.values(), s) {
        MgfValue::Finite(m) => m,
        MgfValue::Divergent => return Err(TailError::BoundNotApplicable(s)),
    };
    let mut asc = sample.values().to_vec();
    asc.sort_unstable_by(f64::total_cmp);
    let n = asc.len() as f64;
    Ok(x_points
        .iter()
        .map(|&x| {
            let above = asc.len() - asc.partition_point(|v| *v <= x);
            let lhs = above as f64 / n;
            let rhs = mgf * (-s * x).exp();
            MarkovBoundPoint {
                x,
                lhs,
                rhs,
                holds: lhs <= rhs * (1.0 + MARKOV_ROUNDING),
            }
        })
        .collect())
}

/// Kolmogorov–Smirnov distance between the empirical CDF and `cdf`.
pub fn ks_distance(sample: &TailSample, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut asc = sample.values().to_vec();
    asc.sort_unstable_by(f64::total_cmp);
    let n = asc.len() as f64;
    asc.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let below = i as f64 / n;
            let upto = (i + 1) as f64 / n;
            (f - below).abs().max((upto - f).abs())
        })
        .fold(0.0, f64::max)
}
