//! Marginal-utility families and risk-aversion diagnostics.
//!
//! Only `u′` matters for the Euler machinery, so no utility levels are
//! computed. Every family also exposes `ln u′` and an inverse taking `ln m`,
//! because CARA marginal utility underflows long before the probe grid ends.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("invalid utility parameters: {0}")]
    InvalidParameters(String),
    #[error("{what} = {value} is outside the admissible domain")]
    DomainError { what: &'static str, value: f64 },
    #[error("invalid probe grid: {0}")]
    InvalidProbeGrid(String),
}

/// `u′` family. Construct through the checked constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    /// `u′(x) = x^{−γ}`.
    Crra { gamma: f64 },
    /// `u′(x) = (ax + b)^{−1/a}` on `ax + b > 0`; `a = 0` is CARA with scale `b`.
    Hara { a: f64, b: f64 },
    /// `u′(x) = e^{−x/b}`.
    Cara { b: f64 },
    /// `u′(x) = 1/(x + b)`.
    LogShifted { b: f64 },
}

fn positive(name: &str, v: f64) -> Result<(), UtilityError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(UtilityError::InvalidParameters(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl UtilitySpec {
    pub fn crra(gamma: f64) -> Result<Self, UtilityError> {
        positive("gamma", gamma)?;
        Ok(Self::Crra { gamma })
    }

    pub fn hara(a: f64, b: f64) -> Result<Self, UtilityError> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(UtilityError::InvalidParameters(
                "HARA parameters must be finite".into(),
            ));
        }
        if a == 0.0 {
            positive("b (CARA limit)", b)?;
        } else if a < 0.0 && b <= 0.0 {
            return Err(UtilityError::InvalidParameters(
                "HARA with a < 0 needs b > 0 for a nonempty domain".into(),
            ));
        }
        Ok(Self::Hara { a, b })
    }

    pub fn cara(b: f64) -> Result<Self, UtilityError> {
        positive("b", b)?;
        Ok(Self::Cara { b })
    }

    pub fn log_shifted(b: f64) -> Result<Self, UtilityError> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(UtilityError::InvalidParameters(format!(
                "b must be finite and nonnegative, got {b}"
            )));
        }
        Ok(Self::LogShifted { b })
    }

    /// Short family name used in reports.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Crra { .. } => "crra",
            Self::Hara { .. } => "hara",
            Self::Cara { .. } => "cara",
            Self::LogShifted { .. } => "log_shifted",
        }
    }

    /// CARA scale `b` if this spec is CARA or HARA with `a = 0`.
    fn cara_scale(&self) -> Option<f64> {
        match *self {
            Self::Cara { b } => Some(b),
            Self::Hara { a: 0.0, b } => Some(b),
            _ => None,
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        if self.cara_scale().is_some() {
            return x >= 0.0;
        }
        match *self {
            Self::Crra { .. } => x > 0.0,
            Self::Hara { a, b } => x >= 0.0 && a * x + b > 0.0,
            Self::LogShifted { b } => x >= 0.0 && x + b > 0.0,
            Self::Cara { .. } => unreachable!(),
        }
    }

    fn check(&self, x: f64) -> Result<(), UtilityError> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(UtilityError::DomainError {
                what: "x",
                value: x,
            })
        }
    }

    pub fn marginal(&self, x: f64) -> Result<f64, UtilityError> {
        self.check(x)?;
        Ok(self.marginal_unchecked(x))
    }

    /// `u′(x)` without the domain check. Callers guarantee admissibility.
    #[inline]
    pub(crate) fn marginal_unchecked(&self, x: f64) -> f64 {
        if let Some(b) = self.cara_scale() {
            return (-x / b).exp();
        }
        match *self {
            Self::Crra { gamma } => {
                if gamma == 2.0 {
                    1.0 / (x * x)
                } else {
                    x.powf(-gamma)
                }
            }
            Self::Hara { a, b } => (a * x + b).powf(-1.0 / a),
            Self::LogShifted { b } => 1.0 / (x + b),
            Self::Cara { .. } => unreachable!(),
        }
    }

    pub fn log_marginal(&self, x: f64) -> Result<f64, UtilityError> {
        self.check(x)?;
        if let Some(b) = self.cara_scale() {
            return Ok(-x / b);
        }
        Ok(match *self {
            Self::Crra { gamma } => -gamma * x.ln(),
            Self::Hara { a, b } => -(a * x + b).ln() / a,
            Self::LogShifted { b } => -(x + b).ln(),
            Self::Cara { .. } => unreachable!(),
        })
    }

    /// `(u′)^{−1}(m)`.
    pub fn inverse_marginal(&self, m: f64) -> Result<f64, UtilityError> {
        if !(m.is_finite() && m > 0.0) {
            return Err(UtilityError::DomainError {
                what: "marginal utility",
                value: m,
            });
        }
        let x = self.inverse_marginal_unchecked(m);
        self.check_inverse(x, m)
    }

    #[inline]
    pub(crate) fn inverse_marginal_unchecked(&self, m: f64) -> f64 {
        if let Some(b) = self.cara_scale() {
            return -b * m.ln();
        }
        match *self {
            Self::Crra { gamma } => {
                if gamma == 2.0 {
                    1.0 / m.sqrt()
                } else {
                    m.powf(-1.0 / gamma)
                }
            }
            Self::Hara { a, b } => (m.powf(-a) - b) / a,
            Self::LogShifted { b } => 1.0 / m - b,
            Self::Cara { .. } => unreachable!(),
        }
    }

    /// `(u′)^{−1}(e^{log_m})`, usable where `e^{log_m}` underflows.
    pub fn inverse_marginal_log(&self, log_m: f64) -> Result<f64, UtilityError> {
        if !log_m.is_finite() {
            return Err(UtilityError::DomainError {
                what: "log marginal utility",
                value: log_m,
            });
        }
        let x = if let Some(b) = self.cara_scale() {
            -b * log_m
        } else {
            match *self {
                Self::Crra { gamma } => (-log_m / gamma).exp(),
                Self::Hara { a, b } => ((-a * log_m).exp() - b) / a,
                Self::LogShifted { b } => (-log_m).exp() - b,
                Self::Cara { .. } => unreachable!(),
            }
        };
        self.check_inverse(x, log_m.exp())
    }

    fn check_inverse(&self, x: f64, m: f64) -> Result<f64, UtilityError> {
        // Values whose preimage is negative (or past a HARA bliss point) have
        // no admissible consumption level.
        if self.in_domain(x) {
            Ok(x)
        } else {
            Err(UtilityError::DomainError {
                what: "marginal utility",
                value: m,
            })
        }
    }

    /// Local relative risk aversion `γ(x) = −x u″(x)/u′(x)`.
    pub fn rra(&self, x: f64) -> Result<f64, UtilityError> {
        self.check(x)?;
        if let Some(b) = self.cara_scale() {
            return Ok(x / b);
        }
        Ok(match *self {
            Self::Crra { gamma } => gamma,
            Self::Hara { a, b } => x / (a * x + b),
            Self::LogShifted { b } => x / (x + b),
            Self::Cara { .. } => unreachable!(),
        })
    }

    /// Closed-form `limsup γ(x)` as `x → ∞`; infinite when the domain is
    /// bounded above or risk aversion grows without bound.
    pub fn gamma_bar_exact(&self) -> f64 {
        if self.cara_scale().is_some() {
            return f64::INFINITY;
        }
        match *self {
            Self::Crra { gamma } => gamma,
            Self::Hara { a, .. } if a > 0.0 => 1.0 / a,
            Self::Hara { .. } => f64::INFINITY,
            Self::LogShifted { .. } => 1.0,
            Self::Cara { .. } => unreachable!(),
        }
    }
}

/// Geometric probe grid from `10^lo_exp` to `10^hi_exp` with `per_decade`
/// points per decade.
pub fn geometric_probes(lo_exp: i32, hi_exp: i32, per_decade: usize) -> Vec<f64> {
    let n = ((hi_exp - lo_exp) as usize) * per_decade;
    (0..=n)
        .map(|i| 10f64.powf(lo_exp as f64 + i as f64 / per_decade as f64))
        .collect()
}

/// `10^2 .. 10^8`, ten points per decade.
pub fn default_probes() -> Vec<f64> {
    geometric_probes(2, 8, 10)
}

fn validate_probes(probes: &[f64]) -> Result<(), UtilityError> {
    if probes.len() < 2 {
        return Err(UtilityError::InvalidProbeGrid("need at least two probes".into()));
    }
    if probes.windows(2).any(|w| !(w[1] > w[0])) || !(probes[0] > 0.0) {
        return Err(UtilityError::InvalidProbeGrid(
            "probes must be positive and strictly increasing".into(),
        ));
    }
    let last = probes[probes.len() - 1];
    if !last.is_finite() || last / probes[0] < 1e6 * (1.0 - 1e-9) {
        return Err(UtilityError::InvalidProbeGrid(
            "probes must span at least six orders of magnitude".into(),
        ));
    }
    Ok(())
}

/// Probes in the top decade of the grid.
fn top_decade(probes: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let cut = probes[probes.len() - 1] / 10.0 * (1.0 - 1e-12);
    probes.iter().copied().filter(move |x| *x >= cut)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RraProfile {
    pub gamma_bar: f64,
    /// Maximum of `γ(x)` over admissible top-decade probes; `None` if no probe
    /// there is admissible.
    pub probe_estimate: Option<f64>,
    pub brra: bool,
    pub ceiling: f64,
    pub probe_points: Vec<f64>,
}

/// Default ceiling on `γ̄` for declaring bounded relative risk aversion.
pub const BRRA_CEILING: f64 = 1e3;

pub fn asymptotic_rra(
    u: &UtilitySpec,
    probes: &[f64],
    ceiling: f64,
) -> Result<RraProfile, UtilityError> {
    validate_probes(probes)?;
    let probe_estimate = top_decade(probes)
        .filter_map(|x| u.rra(x).ok())
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
    let gamma_bar = u.gamma_bar_exact();
    Ok(RraProfile {
        gamma_bar,
        probe_estimate,
        brra: gamma_bar.is_finite() && gamma_bar < ceiling,
        ceiling,
        probe_points: probes.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsRatioReport {
    pub kappa: f64,
    /// `min r(x)` over the top decade, `r(x) = (u′)^{−1}(κ u′(x))/x`.
    pub min_ratio: f64,
    /// `min_ratio − 1`.
    pub margin: f64,
    pub margin_floor: f64,
    pub holds: bool,
}

/// Smallest margin accepted as evidence that `r(x)` stays away from one.
pub const MARGIN_FLOOR: f64 = 1e-6;

/// `(u′)^{−1}(κ u′(x))/x`.
pub fn consumption_ratio(u: &UtilitySpec, kappa: f64, x: f64) -> Result<f64, UtilityError> {
    let m = u.marginal(x)?;
    let target = kappa * m;
    let inv = if target.is_normal() && m.is_normal() {
        u.inverse_marginal(target)?
    } else {
        u.inverse_marginal_log(kappa.ln() + u.log_marginal(x)?)?
    };
    Ok(inv / x)
}

pub fn consratio_check(
    u: &UtilitySpec,
    kappa: f64,
    probes: &[f64],
    margin_floor: f64,
) -> Result<ConsRatioReport, UtilityError> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(UtilityError::InvalidParameters(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    validate_probes(probes)?;
    let mut min_ratio = f64::INFINITY;
    for x in top_decade(probes) {
        min_ratio = min_ratio.min(consumption_ratio(u, kappa, x)?);
    }
    let margin = min_ratio - 1.0;
    Ok(ConsRatioReport {
        kappa,
        min_ratio,
        margin,
        margin_floor,
        holds: margin > margin_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_examples() {
        assert_eq!(UtilitySpec::crra(2.0).unwrap().marginal(1.0).unwrap(), 1.0);
        assert_eq!(UtilitySpec::hara(1.0, 0.0).unwrap().marginal(2.0).unwrap(), 0.5);
        assert_eq!(UtilitySpec::cara(1.0).unwrap().marginal(0.0).unwrap(), 1.0);
        assert_eq!(UtilitySpec::log_shifted(1.0).unwrap().marginal(1.0).unwrap(), 0.5);
    }

    #[test]
    fn domain_errors() {
        let h = UtilitySpec::hara(-1.0, 2.0).unwrap();
        assert!(h.marginal(1.0).is_ok());
        assert!(matches!(h.marginal(2.0), Err(UtilityError::DomainError { .. })));
        let c = UtilitySpec::crra(2.0).unwrap();
        assert!(c.marginal(0.0).is_err());
        assert!(c.marginal(-1.0).is_err());
        assert!(c.inverse_marginal(0.0).is_err());
        // e^{−x} = 2 would need negative consumption.
        assert!(UtilitySpec::cara(1.0).unwrap().inverse_marginal(2.0).is_err());
        assert!(UtilitySpec::crra(0.0).is_err());
        assert!(UtilitySpec::hara(-1.0, 0.0).is_err());
    }

    #[test]
    fn rra_examples() {
        assert_eq!(UtilitySpec::crra(3.0).unwrap().rra(17.0).unwrap(), 3.0);
        let h = UtilitySpec::hara(2.0, 1.0).unwrap();
        assert!((h.rra(1e9).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(UtilitySpec::cara(1.0).unwrap().rra(10.0).unwrap(), 10.0);
    }

    #[test]
    fn hara_with_zero_a_behaves_as_cara() {
        let h = UtilitySpec::hara(0.0, 2.0).unwrap();
        let c = UtilitySpec::cara(2.0).unwrap();
        for x in [0.0, 0.5, 3.0] {
            assert_eq!(h.marginal(x).unwrap(), c.marginal(x).unwrap());
            assert_eq!(h.rra(x).unwrap(), c.rra(x).unwrap());
        }
    }

    #[test]
    fn asymptotic_rra_examples() {
        let p = default_probes();
        let crra = asymptotic_rra(&UtilitySpec::crra(2.0).unwrap(), &p, BRRA_CEILING).unwrap();
        assert_eq!(crra.gamma_bar, 2.0);
        assert!(crra.brra);

        let hara =
            asymptotic_rra(&UtilitySpec::hara(0.5, 3.0).unwrap(), &p, BRRA_CEILING).unwrap();
        assert_eq!(hara.gamma_bar, 2.0);
        assert!((hara.probe_estimate.unwrap() - 2.0).abs() < 1e-6);
        assert!(hara.brra);

        let cara = asymptotic_rra(&UtilitySpec::cara(1.0).unwrap(), &p, BRRA_CEILING).unwrap();
        assert!(!cara.brra);
        assert_eq!(cara.probe_estimate, Some(1e8));

        let bliss =
            asymptotic_rra(&UtilitySpec::hara(-1.0, 5.0).unwrap(), &p, BRRA_CEILING).unwrap();
        assert!(!bliss.brra);
        assert_eq!(bliss.probe_estimate, None);
    }

    #[test]
    fn probe_grid_must_span_six_decades() {
        let u = UtilitySpec::crra(2.0).unwrap();
        assert!(asymptotic_rra(&u, &geometric_probes(0, 5, 4), BRRA_CEILING).is_err());
        assert!(asymptotic_rra(&u, &geometric_probes(0, 6, 4), BRRA_CEILING).is_ok());
        assert!(asymptotic_rra(&u, &[3.0, 1.0], BRRA_CEILING).is_err());
    }

    #[test]
    fn consratio_crra_is_constant() {
        for gamma in [0.5, 1.0, 2.0, 5.0] {
            let u = UtilitySpec::crra(gamma).unwrap();
            for kappa in [0.1, 0.5, 0.9] {
                let r = consratio_check(&u, kappa, &default_probes(), MARGIN_FLOOR).unwrap();
                let exact = kappa.powf(-1.0 / gamma);
                assert!((r.min_ratio - exact).abs() < 1e-12, "{gamma} {kappa} {r:?}");
                assert!(r.holds);
            }
        }
    }

    #[test]
    fn consratio_cara_fails() {
        let u = UtilitySpec::cara(1.0).unwrap();
        let r = consratio_check(&u, 0.5, &default_probes(), MARGIN_FLOOR).unwrap();
        assert!(!r.holds);
        let expected = 2f64.ln() / 1e8;
        assert!((r.margin - expected).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn consratio_approaches_one_as_kappa_to_one() {
        let u = UtilitySpec::crra(2.0).unwrap();
        let p = default_probes();
        let a = consratio_check(&u, 0.9, &p, MARGIN_FLOOR).unwrap().margin;
        let b = consratio_check(&u, 0.999, &p, MARGIN_FLOOR).unwrap().margin;
        assert!(b > 0.0 && b < a);
        assert!(consratio_check(&u, 1.0, &p, MARGIN_FLOOR).is_err());
    }

    #[test]
    fn log_inverse_agrees_with_direct() {
        let u = UtilitySpec::hara(0.5, 1.0).unwrap();
        for x in [0.1, 1.0, 50.0] {
            let direct = u.inverse_marginal(u.marginal(x).unwrap()).unwrap();
            let via_log = u.inverse_marginal_log(u.log_marginal(x).unwrap()).unwrap();
            assert!((direct - x).abs() < 1e-12 * x.max(1.0));
            assert!((via_log - x).abs() < 1e-12 * x.max(1.0));
        }
    }
}
