//! Exponential envelope `e^{−∫ₛᵗ α*} ≤ M e^{−β(t−s)}` for a sampled `α*`.

use serde::Serialize;

use crate::error::{Error, Result};

/// How `β` is obtained from `α*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvelopeMode {
    /// `α*` constant in time; the profile is a single point.
    Constant,
    /// `α*` periodic; the profile covers exactly one period and `β` is its mean.
    Periodic { period: f64 },
    /// Aperiodic `α*` on a finite horizon; `β = inf α*` over the grid.
    Infimum,
}

/// `α*` sampled on a grid, with exact cumulative integrals `∫_{t_0}^{t_k} α*`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaProfile {
    times: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AlphaProfile {
    pub fn new(times: Vec<f64>, values: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() || times.len() != cumulative.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                got: values.len().min(cumulative.len()),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("profile grid must be ascending".into()));
        }
        Ok(Self {
            times,
            values,
            cumulative,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
            cumulative: vec![0.0],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// `∫_{t_i}^{t_j} α*` between grid points `i <= j`.
    pub fn integral_between(&self, i: usize, j: usize) -> f64 {
        self.cumulative[j] - self.cumulative[i]
    }

    /// Grid over `[0, horizon]` with integrals extended by periodicity or constancy.
    pub fn extend(&self, mode: EnvelopeMode, horizon: f64, points_per_unit: usize) -> AlphaProfile {
        match mode {
            EnvelopeMode::Constant => {
                let n = ((horizon * points_per_unit as f64).ceil() as usize).max(1);
                let a = self.values[0];
                let times: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
                AlphaProfile {
                    values: vec![a; times.len()],
                    cumulative: times.iter().map(|t| a * t).collect(),
                    times,
                }
            }
            EnvelopeMode::Periodic { period } => {
                let cells = self.len() - 1;
                let total = self.cumulative[cells];
                let periods = (horizon / period).ceil() as usize;
                let mut out = AlphaProfile {
                    times: vec![0.0],
                    values: vec![self.values[0]],
                    cumulative: vec![0.0],
                };
                for p in 0..periods.max(1) {
                    for k in 1..=cells {
                        out.times.push(p as f64 * period + self.times[k]);
                        out.values.push(self.values[k]);
                        out.cumulative.push(p as f64 * total + self.cumulative[k]);
                    }
                }
                out
            }
            EnvelopeMode::Infimum => self.clone(),
        }
    }
}

/// Fitted `(M, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub beta: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub certified: bool,
}

/// Fits `(M, β)`:
///
/// * periodic: `β` is the period mean of `α*`, `M = exp(max F − min F)` over one
///   period with `F(t) = ∫₀ᵗ α* − βt` (F is periodic, so pairs `s ≤ t` spanning
///   several periods reach every ordering);
/// * constant / infimum: `β = min α*` on the grid and
///   `M = exp(max_{s ≤ t} [β(t−s) − ∫ₛᵗ α*])`.
///
/// `certified` is `β > 0`.
pub fn fit_envelope(profile: &AlphaProfile, mode: EnvelopeMode) -> Envelope {
    let beta = match mode {
        EnvelopeMode::Periodic { period } => profile.cumulative[profile.len() - 1] / period,
        EnvelopeMode::Constant | EnvelopeMode::Infimum => {
            profile.values.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    let f: Vec<f64> = profile
        .times
        .iter()
        .zip(&profile.cumulative)
        .map(|(t, i)| i - beta * (t - profile.times[0]))
        .collect();
    let log_m = match mode {
        EnvelopeMode::Periodic { .. } => {
            let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        }
        _ => max_forward_drop(&f),
    };
    Envelope {
        beta,
        m: log_m.max(0.0).exp(),
        certified: beta > 0.0,
    }
}

/// `max_{s ≤ t} F(s) − F(t)`, which is `≥ 0`.
fn max_forward_drop(f: &[f64]) -> f64 {
    let mut running_max = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in f {
        running_max = running_max.max(v);
        worst = worst.max(running_max - v);
    }
    worst
}

impl Envelope {
    /// Largest violation `ln(e^{−∫ₛᵗ α*} / (M e^{−β(t−s)}))` over all grid pairs
    /// of `profile`; the envelope holds on the grid iff this is `<= ln(1 + slack)`.
    pub fn worst_log_excess(&self, profile: &AlphaProfile) -> f64 {
        let t0 = profile.times[0];
        let f: Vec<f64> = profile
            .times
            .iter()
            .zip(&profile.cumulative)
            .map(|(t, i)| i - self.beta * (t - t0))
            .collect();
        max_forward_drop(&f) - self.m.ln()
    }

    pub fn holds_on(&self, profile: &AlphaProfile, slack: f64) -> bool {
        self.worst_log_excess(profile) <= (1.0 + slack).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sampled(n: usize, f: impl Fn(f64) -> f64, antideriv: impl Fn(f64) -> f64) -> AlphaProfile {
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        let cumulative = times
            .iter()
            .map(|&t| antideriv(t) - antideriv(0.0))
            .collect();
        AlphaProfile::new(times, values, cumulative).unwrap()
    }

    #[test]
    fn constant_alpha() {
        let env = fit_envelope(&AlphaProfile::constant(0.5), EnvelopeMode::Constant);
        assert_eq!(env.beta, 0.5);
        assert_eq!(env.m, 1.0);
        assert!(env.certified);
    }

    #[test]
    fn negative_alpha_is_uncertified() {
        let env = fit_envelope(&AlphaProfile::constant(-0.1), EnvelopeMode::Constant);
        assert!(!env.certified);
        assert_eq!(env.beta, -0.1);
    }

    #[test]
    fn sinusoidal_alpha() {
        let p = sampled(
            512,
            |t| 0.5 + 0.3 * (2.0 * PI * t).sin(),
            |t| 0.5 * t - 0.3 * (2.0 * PI * t).cos() / (2.0 * PI),
        );
        let env = fit_envelope(&p, EnvelopeMode::Periodic { period: 1.0 });
        assert!((env.beta - 0.5).abs() < 1e-14);
        assert!((env.m - (0.3 / PI).exp()).abs() < 1e-12, "{}", env.m);
        assert!((env.m - 1.1002).abs() < 1e-4);
        let long = p.extend(EnvelopeMode::Periodic { period: 1.0 }, 5.0, 0);
        assert_eq!(long.len(), 5 * 512 + 1);
        assert!(env.holds_on(&long, 1e-9));
    }

    #[test]
    fn infimum_mode_has_unit_prefactor_when_alpha_is_above_beta() {
        let p = sampled(100, |t| 1.0 + t, |t| t + 0.5 * t * t);
        let env = fit_envelope(&p, EnvelopeMode::Infimum);
        assert_eq!(env.beta, 1.0);
        assert_eq!(env.m, 1.0);
    }

    #[test]
    fn inflated_beta_breaks_the_envelope() {
        let p = AlphaProfile::constant(0.5).extend(EnvelopeMode::Constant, 10.0, 8);
        let mut env = fit_envelope(&p, EnvelopeMode::Constant);
        assert!(env.holds_on(&p, 1e-9));
        env.beta *= 1.5;
        assert!(!env.holds_on(&p, 1e-9));
        assert!((env.worst_log_excess(&p) - 2.5).abs() < 1e-12);
    }
}
