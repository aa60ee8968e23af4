//! Time-dependent transition intensities.
//!
//! Every variant has a closed-form antiderivative, so interval integrals are
//! exact. Arbitrary closures are deliberately not representable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonnegative, locally integrable intensity `t -> r(t)` (events per unit time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRate", into = "RawRate")]
pub enum RateFunction {
    Constant(f64),
    /// Right-continuous step function: `values[0]` on `[0, breaks[0])`,
    /// `values[k]` on `[breaks[k-1], breaks[k])`, last value after the final break.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// `base * (1 + amp * sin(2*pi*freq*t + phase))`.
    Sinusoidal {
        base: f64,
        amp: f64,
        freq: f64,
        phase: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawRate {
    #[serde(rename = "const")]
    Const { value: f64 },
    #[serde(rename = "piecewise")]
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    #[serde(rename = "sin")]
    Sin {
        base: f64,
        amp: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TryFrom<RawRate> for RateFunction {
    type Error = Error;

    fn try_from(raw: RawRate) -> Result<Self> {
        match raw {
            RawRate::Const { value } => RateFunction::constant(value),
            RawRate::Piecewise { breaks, values } => RateFunction::piecewise(breaks, values),
            RawRate::Sin {
                base,
                amp,
                freq,
                phase,
            } => RateFunction::sinusoidal(base, amp, freq, phase),
        }
    }
}

impl From<RateFunction> for RawRate {
    fn from(rate: RateFunction) -> Self {
        match rate {
            RateFunction::Constant(value) => RawRate::Const { value },
            RateFunction::PiecewiseConstant { breaks, values } => {
                RawRate::Piecewise { breaks, values }
            }
            RateFunction::Sinusoidal {
                base,
                amp,
                freq,
                phase,
            } => RawRate::Sin {
                base,
                amp,
                freq,
                phase,
            },
        }
    }
}

fn check_value(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidRate(format!(
            "{what} must be finite and nonnegative, got {v}"
        )));
    }
    Ok(())
}

impl RateFunction {
    pub fn constant(value: f64) -> Result<Self> {
        check_value(value, "constant rate")?;
        Ok(RateFunction::Constant(value))
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return Err(Error::InvalidRate(format!(
                "piecewise rate needs {} values for {} breakpoints, got {}",
                breaks.len() + 1,
                breaks.len(),
                values.len()
            )));
        }
        for &b in &breaks {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidRate(format!("invalid breakpoint {b}")));
            }
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRate(
                "breakpoints must be strictly ascending".into(),
            ));
        }
        for &v in &values {
            check_value(v, "piecewise value")?;
        }
        Ok(RateFunction::PiecewiseConstant { breaks, values })
    }

    pub fn sinusoidal(base: f64, amp: f64, freq: f64, phase: f64) -> Result<Self> {
        check_value(base, "sinusoid base")?;
        if !amp.is_finite() || amp.abs() > 1.0 {
            return Err(Error::InvalidRate(format!(
                "sinusoid amplitude fraction must satisfy |amp| <= 1, got {amp}"
            )));
        }
        check_value(freq, "sinusoid frequency")?;
        if !phase.is_finite() {
            return Err(Error::InvalidRate("sinusoid phase must be finite".into()));
        }
        Ok(RateFunction::Sinusoidal {
            base,
            amp,
            freq,
            phase,
        })
    }

    pub fn zero() -> Self {
        RateFunction::Constant(0.0)
    }

    /// Value at `t`; rejects negative times.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.value(t))
    }

    /// Exact `∫_s^t r(τ) dτ`.
    pub fn integrate(&self, s: f64, t: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::NegativeTime(s));
        }
        if s > t {
            return Err(Error::ReversedInterval { start: s, end: t });
        }
        Ok(self.integral(s, t))
    }

    /// Unchecked evaluation for hot loops; callers guarantee `t >= 0`.
    pub(crate) fn value(&self, t: f64) -> f64 {
        match self {
            RateFunction::Constant(c) => *c,
            RateFunction::PiecewiseConstant { breaks, values } => {
                // number of breakpoints <= t, which makes the step right-continuous
                let idx = breaks.partition_point(|&b| b <= t);
                values[idx]
            }
            RateFunction::Sinusoidal {
                base,
                amp,
                freq,
                phase,
            } => base * (1.0 + amp * (2.0 * PI * freq * t + phase).sin()),
        }
    }

    /// Unchecked exact integral; callers guarantee `0 <= s <= t`.
    pub(crate) fn integral(&self, s: f64, t: f64) -> f64 {
        match self {
            RateFunction::Constant(c) => c * (t - s),
            RateFunction::PiecewiseConstant { breaks, values } => {
                let mut total = 0.0;
                let mut lo = s;
                let mut idx = breaks.partition_point(|&b| b <= s);
                while lo < t {
                    let hi = breaks.get(idx).map_or(t, |&b| b.min(t));
                    total += values[idx] * (hi - lo);
                    lo = hi;
                    idx += 1;
                }
                total
            }
            RateFunction::Sinusoidal {
                base,
                amp,
                freq,
                phase,
            } => {
                if *freq == 0.0 {
                    return base * (1.0 + amp * phase.sin()) * (t - s);
                }
                let w = 2.0 * PI * freq;
                // cos a - cos b = -2 sin((a+b)/2) sin((a-b)/2), stable for short intervals
                let a = w * s + phase;
                let b = w * t + phase;
                let cos_diff = -2.0 * ((a + b) / 2.0).sin() * ((a - b) / 2.0).sin();
                base * ((t - s) + amp * cos_diff / w)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            RateFunction::Constant(_) => true,
            RateFunction::PiecewiseConstant { values, .. } => {
                values.iter().all(|&v| v == values[0])
            }
            RateFunction::Sinusoidal {
                base, amp, freq, ..
            } => *base == 0.0 || *amp == 0.0 || *freq == 0.0,
        }
    }

    /// Fundamental period for non-constant periodic rates.
    pub fn period(&self) -> Option<f64> {
        match self {
            RateFunction::Sinusoidal { freq, .. } if !self.is_constant() => Some(1.0 / freq),
            _ => None,
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self {
            RateFunction::Sinusoidal { freq, .. } if !self.is_constant() => Some(*freq),
            _ => None,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            RateFunction::PiecewiseConstant { breaks, .. } => breaks,
            _ => &[],
        }
    }

    /// Times in `[0, horizon]` where the rate attains its supremum
    /// (sinusoid crests); empty for the other variants.
    pub fn crest_times(&self, horizon: f64) -> Vec<f64> {
        let RateFunction::Sinusoidal {
            amp, freq, phase, ..
        } = self
        else {
            return Vec::new();
        };
        if self.is_constant() {
            return Vec::new();
        }
        let target = if *amp > 0.0 { PI / 2.0 } else { 1.5 * PI };
        let w = 2.0 * PI * freq;
        let mut t0 = (target - phase) / w;
        let period = 1.0 / freq;
        t0 -= (t0 / period).floor() * period;
        let mut out = Vec::new();
        let mut t = t0;
        while t <= horizon {
            out.push(t);
            t += period;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sin_rate() -> RateFunction {
        RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        let c = RateFunction::constant(4.0).unwrap();
        assert_eq!(c.eval(1.3).unwrap(), 4.0);
        assert_relative_eq!(sin_rate().eval(0.25).unwrap(), 1.5, epsilon = 1e-15);
        let p = RateFunction::piecewise(vec![1.0], vec![2.0, 7.0]).unwrap();
        assert_eq!(p.eval(1.0).unwrap(), 7.0);
        assert_eq!(p.eval(0.999).unwrap(), 2.0);
    }

    #[test]
    fn integrate_examples() {
        let c = RateFunction::constant(4.0).unwrap();
        assert_eq!(c.integrate(0.0, 2.0).unwrap(), 8.0);
        assert_relative_eq!(
            sin_rate().integrate(0.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let p = RateFunction::piecewise(vec![1.0], vec![2.0, 7.0]).unwrap();
        assert_eq!(p.integrate(0.0, 2.0).unwrap(), 9.0);
        assert_eq!(p.integrate(1.5, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = RateFunction::constant(1.0).unwrap();
        assert!(matches!(c.eval(-0.1), Err(Error::NegativeTime(_))));
        assert!(matches!(
            c.integrate(2.0, 1.0),
            Err(Error::ReversedInterval { .. })
        ));
        assert!(RateFunction::constant(-1.0).is_err());
        assert!(RateFunction::sinusoidal(1.0, 1.5, 1.0, 0.0).is_err());
        assert!(RateFunction::piecewise(vec![2.0, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(RateFunction::piecewise(vec![1.0], vec![1.0]).is_err());
        assert!(RateFunction::piecewise(vec![1.0], vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn json_round_trip_uses_tagged_objects() {
        let r: RateFunction =
            serde_json::from_str(r#"{"kind":"sin","base":1.0,"amp":0.5,"freq":1.0,"phase":0.0}"#)
                .unwrap();
        assert_eq!(r, sin_rate());
        let s = serde_json::to_string(&RateFunction::Constant(2.0)).unwrap();
        assert_eq!(s, r#"{"kind":"const","value":2.0}"#);
        let bad: std::result::Result<RateFunction, _> =
            serde_json::from_str(r#"{"kind":"sin","base":1.0,"amp":2.0,"freq":1.0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn crest_times_hit_the_supremum() {
        let r = RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.3).unwrap();
        let crests = r.crest_times(3.0);
        assert_eq!(crests.len(), 3);
        for t in crests {
            assert_relative_eq!(r.value(t), 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn period_detection() {
        assert_eq!(sin_rate().period(), Some(1.0));
        assert_eq!(RateFunction::Constant(3.0).period(), None);
        assert!(RateFunction::sinusoidal(0.0, 0.5, 2.0, 0.0)
            .unwrap()
            .is_constant());
    }
}
