//! Closed-form rates for the pair-service queue (single arrivals at `λ(t)`,
//! groups of two served at `μ(t)`) under the Satin scaling family.

use crate::error::{Error, Result};
use crate::rates::RateFunction;

/// `min[λ(1−δ⁻¹), μ(1+δ) − λ(δ²−1), μ(1−δ⁻¹) − λ(δ−1)]` at time `t`,
/// a lower bound on `α*(t)` for the pair-service queue.
pub fn example_alpha(lambda: &RateFunction, mu: &RateFunction, delta: f64, t: f64) -> Result<f64> {
    if !(delta > 1.0) || !delta.is_finite() {
        return Err(Error::InvalidDelta(delta));
    }
    let (l, m) = (lambda.eval(t)?, mu.eval(t)?);
    Ok(example_alpha_values(l, m, delta))
}

pub(crate) fn example_alpha_values(l: f64, m: f64, delta: f64) -> f64 {
    let first = l * (1.0 - 1.0 / delta);
    let second = m * (1.0 + delta) - l * (delta * delta - 1.0);
    let third = m * (1.0 - 1.0 / delta) - l * (delta - 1.0);
    first.min(second).min(third)
}

/// `δ = √(μ/λ)` and `α* = min[(√μ − √λ)², λ(1 − √(λ/μ))]` for a homogeneous
/// pair-service queue; requires `0 < λ < μ`.
pub fn optimal_delta(lambda: f64, mu: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || !(lambda < mu) || !mu.is_finite() {
        return Err(Error::Uncertifiable(format!(
            "need 0 < lambda < mu, got lambda = {lambda}, mu = {mu}"
        )));
    }
    let delta = (mu / lambda).sqrt();
    let gap = (mu.sqrt() - lambda.sqrt()).powi(2);
    let alpha = gap.min(lambda * (1.0 - (lambda / mu).sqrt()));
    Ok((delta, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> RateFunction {
        RateFunction::constant(v).unwrap()
    }

    #[test]
    fn example_alpha_values_from_closed_form() {
        assert_eq!(example_alpha(&c(1.0), &c(4.0), 2.0, 3.0).unwrap(), 0.5);
        assert_eq!(example_alpha(&c(0.0), &c(4.0), 2.0, 0.0).unwrap(), 0.0);
        // second term vanishes, third is 0.5 - 1
        assert_eq!(example_alpha(&c(1.0), &c(1.0), 2.0, 0.0).unwrap(), -0.5);
        assert!(matches!(
            example_alpha(&c(1.0), &c(4.0), 1.0, 0.0),
            Err(Error::InvalidDelta(_))
        ));
    }

    #[test]
    fn optimal_delta_examples() {
        assert_eq!(optimal_delta(1.0, 4.0).unwrap(), (2.0, 0.5));
        assert_eq!(optimal_delta(0.25, 1.0).unwrap(), (2.0, 0.125));
        let (_, a) = optimal_delta(1.0 - 1e-9, 1.0).unwrap();
        assert!(a < 1e-9);
        assert!(optimal_delta(1.0, 1.0).is_err());
        assert!(optimal_delta(0.0, 1.0).is_err());
        assert!(optimal_delta(2.0, 1.0).is_err());
    }
}
