//! Motility functions γ, source functions f, and the model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signal-dependent motility γ(v). All variants are positive, nonincreasing
/// and smooth on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotilitySpec {
    /// `e^{-s}`
    #[default]
    Exp,
    /// `e^{-s} + floor`, bounded below by `floor`.
    ExpShifted { floor: f64 },
    /// `(s + s0)^{-k}`
    Power { k: f64, s0: f64 },
    /// `e^{-s²}`
    ExpSquare,
}

/// Damping source `f` entering the cell equation as `-u f(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    #[default]
    Zero,
    /// `mu s^{l-1} - lambda`, i.e. the logistic term `lambda u - mu u^l`.
    Logistic { mu: f64, lambda: f64, l: f64 },
    /// `mu ln(1 + s)`
    LogGrowth { mu: f64 },
}

fn check_arg(s: f64) -> Result<()> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("argument must be nonnegative, got {s}")));
    }
    Ok(())
}

impl MotilitySpec {
    /// `(γ(s), γ'(s))` for `s ≥ 0`.
    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        check_arg(s)?;
        Ok(self.eval_unchecked(s))
    }

    /// Same as [`eval`](Self::eval) without the domain check; used in hot loops
    /// where `s ≥ 0` is already guaranteed up to rounding.
    #[inline]
    pub fn eval_unchecked(&self, s: f64) -> (f64, f64) {
        match *self {
            MotilitySpec::Exp => {
                let e = (-s).exp();
                (e, -e)
            }
            MotilitySpec::ExpShifted { floor } => {
                let e = (-s).exp();
                (e + floor, -e)
            }
            MotilitySpec::Power { k, s0 } => {
                let base = s + s0;
                let g = base.powf(-k);
                (g, -k * g / base)
            }
            MotilitySpec::ExpSquare => {
                let e = (-s * s).exp();
                (e, -2.0 * s * e)
            }
        }
    }

    #[inline]
    pub fn gamma(&self, s: f64) -> f64 {
        self.eval_unchecked(s).0
    }

    /// `ln γ(s)`, finite even where `γ` underflows.
    pub fn ln_gamma(&self, s: f64) -> f64 {
        match *self {
            MotilitySpec::Exp => -s,
            MotilitySpec::ExpShifted { floor } => floor.ln() + ((-s).exp() / floor).ln_1p(),
            MotilitySpec::Power { k, s0 } => -k * (s + s0).ln(),
            MotilitySpec::ExpSquare => -s * s,
        }
    }

    /// `γ* = γ(0)`.
    pub fn gamma_max(&self) -> f64 {
        self.gamma(0.0)
    }

    /// Positive lower bound of γ, when one exists.
    pub fn gamma_floor(&self) -> Option<f64> {
        match *self {
            MotilitySpec::ExpShifted { floor } => Some(floor),
            _ => None,
        }
    }

    /// Checks parameters and samples `γ > 0`, `γ' ≤ 0` on `[0, 10³]`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            MotilitySpec::ExpShifted { floor } if !(floor > 0.0 && floor.is_finite()) => {
                return Err(Error::InvalidArgument(format!("motility floor must be positive, got {floor}")));
            }
            MotilitySpec::Power { k, s0 } if !(k > 0.0 && s0 > 0.0 && k.is_finite() && s0.is_finite()) => {
                return Err(Error::InvalidArgument(format!(
                    "power motility needs k > 0 and s0 > 0, got k = {k}, s0 = {s0}"
                )));
            }
            _ => {}
        }
        for s in sample_points(1e3, 200) {
            let (_, dg) = self.eval_unchecked(s);
            let lg = self.ln_gamma(s);
            if !lg.is_finite() || dg > 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "motility {self:?} violates positivity or monotonicity at s = {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_exp(&self) -> bool {
        matches!(self, MotilitySpec::Exp)
    }
}

impl SourceSpec {
    pub fn eval(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(self.eval_unchecked(s))
    }

    #[inline]
    pub fn eval_unchecked(&self, s: f64) -> f64 {
        match *self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Logistic { mu, lambda, l } => mu * s.powf(l - 1.0) - lambda,
            SourceSpec::LogGrowth { mu } => mu * s.ln_1p(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceSpec::Zero)
    }

    /// Checks parameters and the growth condition `f(s) → ∞`, sampled as
    /// `f(10⁶) > f(10³) > 0`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::Zero => return Ok(()),
            SourceSpec::Logistic { mu, lambda, l } => {
                if !(mu > 0.0 && lambda.is_finite() && l >= 2.0 && l.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "logistic source needs mu > 0, finite lambda, l >= 2; got mu = {mu}, lambda = {lambda}, l = {l}"
                    )));
                }
            }
            SourceSpec::LogGrowth { mu } => {
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(Error::InvalidArgument(format!("log-growth source needs mu > 0, got {mu}")));
                }
            }
        }
        let (lo, hi) = (self.eval_unchecked(1e3), self.eval_unchecked(1e6));
        if !(hi > lo && lo > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "source {self:?} does not grow without bound (f(1e3) = {lo}, f(1e6) = {hi})"
            )));
        }
        Ok(())
    }
}

/// `0`, then `count - 1` log-spaced points up to `max`.
fn sample_points(max: f64, count: usize) -> impl Iterator<Item = f64> {
    let lo = 1e-6_f64.ln();
    let hi = max.ln();
    std::iter::once(0.0).chain((0..count - 1).map(move |i| {
        let t = i as f64 / (count - 2) as f64;
        (lo + t * (hi - lo)).exp()
    }))
}

/// Time-scale constants and constitutive functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub motility: MotilitySpec,
    #[serde(default)]
    pub source: SourceSpec,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { tau: 1.0, delta: 1.0, motility: MotilitySpec::Exp, source: SourceSpec::Zero }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be positive, got {}", self.delta)));
        }
        self.motility.validate()?;
        self.source.validate()
    }

    /// γ = e^{-v} and τ = δ = 1: the setting where the Lyapunov pair exists.
    pub fn is_energy_regime(&self) -> bool {
        self.motility.is_exp() && self.tau == 1.0 && self.delta == 1.0
    }
}
