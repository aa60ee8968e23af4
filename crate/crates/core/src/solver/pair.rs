use std::fmt::Write as _;

use serde::Serialize;

use super::{
    check_distribution, integrate_stacked, log_drift, prepare, ConjugateOperator, Control,
};
use crate::bounds::{
    cumulative_exact, BStarBands, ConvergenceBound, FixedScalingAlpha, InitialNorms, ScalingFamily,
    SignPattern,
};
use crate::chain::ChainModel;
use crate::error::{Error, Result};

/// Relative slack in `gap₁(t) ≤ bound(t)`.
pub const HOLDS_SLACK: f64 = 1e-6;
/// Coordinates with `|u_k| ≤ DEAD_BAND · ‖u‖_∞` do not define the sign pattern.
pub const DEAD_BAND: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated,
    /// The certificate has `β ≤ 0`; nothing to check.
    NotApplicable,
}

/// Distances between two trajectories against the certificate bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub times: Vec<f64>,
    /// `‖p*(t) − p**(t)‖₁`.
    pub gap1: Vec<f64>,
    /// `Σ_k d*(k) |u_k(t)|`.
    pub gap_weighted: Vec<f64>,
    pub bound: Vec<f64>,
    /// Minus the least-squares slope of `ln gap₁` over the second half of the grid.
    pub fitted_rate: Option<f64>,
    pub verdict: Verdict,
    pub norms: InitialNorms,
    pub max_drift: f64,
    /// Largest increase of `gap₁` between consecutive grid points.
    pub tv_slack: f64,
    /// `min_t ln(bound(t) / gap₁(t))`.
    pub min_log_margin: f64,
}

#[derive(Serialize)]
struct Summary {
    verdict: Verdict,
    fitted_rate: Option<f64>,
    min_log_margin: f64,
    max_drift: f64,
    tv_slack: f64,
    initial_norm_difference: f64,
    initial_norm_tail: f64,
    points: usize,
}

impl PairReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    /// Columns `t,gap1,gap_weighted,bound,holds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,gap1,gap_weighted,bound,holds\n");
        for k in 0..self.times.len() {
            let ok = self.gap1[k] <= self.bound[k] * (1.0 + HOLDS_SLACK);
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{}",
                self.times[k], self.gap1[k], self.gap_weighted[k], self.bound[k], ok
            )
            .unwrap();
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(Summary {
            verdict: self.verdict,
            fitted_rate: self.fitted_rate,
            min_log_margin: self.min_log_margin,
            max_drift: self.max_drift,
            tv_slack: self.tv_slack,
            initial_norm_difference: self.norms.difference,
            initial_norm_tail: self.norms.tail,
            points: self.times.len(),
        })
        .expect("summary serializes")
    }
}

/// Least-squares decay rate of `gaps` over the second half of `times`.
pub(crate) fn fitted_rate(times: &[f64], gaps: &[f64]) -> Option<f64> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mid = 0.5 * (t0 + t1);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(gaps)
        .filter(|(t, g)| **t >= mid && **g > 0.0 && g.is_finite())
        .map(|(t, g)| (*t, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    Some(-sxy / sxx)
}

/// Integrates `p0a` and `p0b` on `{0..=n}` and compares their distance with
/// the certificate's right-hand side (conservative initial norm).
///
/// The difference `p0a − p0b` is carried as its own block with error control
/// relative to its size, so small gaps stay accurate.
pub fn pair_report(
    model: &ChainModel,
    n: usize,
    p0a: &[f64],
    p0b: &[f64],
    grid: &[f64],
    certificate: &ConvergenceBound,
    tol: f64,
) -> Result<PairReport> {
    let gen = prepare(model, n, grid, tol)?;
    check_distribution(p0a, n)?;
    check_distribution(p0b, n)?;
    let w0: Vec<f64> = p0a.iter().zip(p0b).map(|(a, b)| a - b).collect();
    let blocks = integrate_stacked(
        &gen,
        &model.breakpoints(),
        vec![p0a.to_vec(), w0],
        vec![Control::Absolute, Control::Relative(vec![1.0; n + 1])],
        grid,
        tol,
    )?;
    let (pa, w) = (&blocks[0], &blocks[1]);

    let max_drift = pa
        .iter()
        .zip(w)
        .map(|(a, d)| {
            let sa: f64 = a.iter().sum();
            let sd: f64 = d.iter().sum();
            (sa - 1.0).abs().max((sa - sd - 1.0).abs())
        })
        .fold(0.0, f64::max);
    log_drift("pair_report", max_drift);

    let norms = certificate.initial_norms(p0a, p0b)?;
    let weights = certificate.weights(n);
    let zeros = vec![0.0; n + 1];
    let gap1: Vec<f64> = w.iter().map(|d| d.iter().map(|x| x.abs()).sum()).collect();
    let gap_weighted = w
        .iter()
        .map(|d| {
            let u = super::compute_u(d, &zeros)?;
            Ok(u.iter().zip(&weights).map(|(x, wk)| wk * x.abs()).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let bound: Vec<f64> = grid
        .iter()
        .map(|&t| certificate.rhs(t, norms.conservative()))
        .collect();

    let all_below = gap1
        .iter()
        .zip(&bound)
        .all(|(g, b)| *g <= b * (1.0 + HOLDS_SLACK));
    let verdict = if !certificate.certified {
        Verdict::NotApplicable
    } else if all_below {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    let tv_slack = gap1.windows(2).map(|g| g[1] - g[0]).fold(0.0, f64::max);
    let min_log_margin = gap1
        .iter()
        .zip(&bound)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, b)| (b / g).ln())
        .fold(f64::INFINITY, f64::min);

    Ok(PairReport {
        times: grid.to_vec(),
        fitted_rate: fitted_rate(grid, &gap1),
        gap1,
        gap_weighted,
        bound,
        verdict,
        norms,
        max_drift,
        tv_slack,
        min_log_margin,
    })
}

/// Outcome of the per-interval contraction check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionReport {
    /// Maximal grid intervals (two or more points) with a constant sign pattern.
    pub intervals: usize,
    /// `max ln(‖Du(t)‖₁ e^{∫ₛᵗ α_D} / ‖Du(s)‖₁)` over intervals and points.
    pub worst_log_excess: f64,
    pub holds: bool,
}

/// Checks `‖Du(t)‖₁ ≤ e^{−∫ₛᵗ α_D} ‖Du(s)‖₁ (1 + slack)` on every maximal grid
/// interval where the sign pattern of `u` is constant, `D` being the family's
/// scaling for that pattern.
///
/// `u` is integrated directly as `u' = B*(t) u` for the chain truncated at
/// `size`, where this inequality is exact; `p0a`, `p0b` live on `{0..=size}`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_check(
    model: &ChainModel,
    family: ScalingFamily,
    size: usize,
    p0a: &[f64],
    p0b: &[f64],
    grid: &[f64],
    tol: f64,
    slack: f64,
) -> Result<ContractionReport> {
    prepare(model, size, grid, tol)?;
    check_distribution(p0a, size)?;
    check_distribution(p0b, size)?;
    let bands = BStarBands::new(model, size)?;
    let op = ConjugateOperator::new(model, size)?;
    let u0 = super::compute_u(p0a, p0b)?;
    let mut us = integrate_stacked(
        &op,
        &model.breakpoints(),
        vec![u0],
        vec![Control::Relative(family.d_star_weights(size))],
        grid,
        tol,
    )?
    .remove(0);

    let keys: Vec<Vec<i8>> = us
        .iter()
        .map(|u| {
            let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            SignPattern::key_with_dead_band(u, DEAD_BAND * scale)
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut intervals = 0;
    let mut start = 0;
    while start < grid.len() {
        let mut end = start;
        while end + 1 < grid.len() && keys[end + 1] == keys[start] {
            end += 1;
        }
        if end > start && keys[start].iter().any(|&s| s != 0) {
            intervals += 1;
            let pattern = pattern_from_key(&keys[start]);
            let d = family.diagonal(&pattern);
            let alpha = FixedScalingAlpha::new(&bands, d.clone())?;
            let (_, cumulative) = cumulative_exact(&alpha, &grid[start..=end]);
            let norm = |u: &[f64]| u.iter().zip(&d).map(|(x, dk)| (x * dk).abs()).sum::<f64>();
            let base = norm(&us[start]);
            for k in start + 1..=end {
                let excess = (norm(&us[k]) / base).ln() + cumulative[k - start];
                worst = worst.max(excess);
            }
        }
        start = end + 1;
    }
    us.clear();
    if intervals == 0 {
        return Err(Error::InvalidModel(
            "no grid interval with a constant nonzero sign pattern".into(),
        ));
    }
    Ok(ContractionReport {
        intervals,
        worst_log_excess: worst,
        holds: worst <= (1.0 + slack).ln(),
    })
}

/// Dead-band coordinates count as `+`; the global sign is fixed by `s_1 = +`.
fn pattern_from_key(key: &[i8]) -> SignPattern {
    let mut signs: Vec<i8> = key.iter().map(|&s| if s == 0 { 1 } else { s }).collect();
    if signs[0] < 0 {
        signs.iter_mut().for_each(|s| *s = -*s);
    }
    SignPattern::new(signs)
}
