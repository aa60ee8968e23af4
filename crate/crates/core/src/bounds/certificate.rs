use rayon::prelude::*;
use serde::Serialize;

use super::alpha::{cumulative_exact, AlphaEvaluator, PatternSearch};
use super::envelope::{fit_envelope, AlphaProfile, Envelope, EnvelopeMode};
use super::family::{ScalingFamily, ScalingRule};
use crate::chain::ChainModel;
use crate::error::{Error, Result};

/// Knobs for certificate construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConfig {
    /// Truncation size `S` of the sign-pattern minimization.
    pub size: usize,
    pub horizon: f64,
    /// Grid cells per period (periodic rates) or per unit time (aperiodic rates).
    pub resolution: usize,
    pub search: PatternSearch,
    /// Forces periodic mode with this period instead of detecting it.
    pub period: Option<f64>,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            size: 12,
            horizon: 25.0,
            resolution: 512,
            search: PatternSearch::Exhaustive,
            period: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridInfo {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

/// Convergence certificate: `‖p*(t) − p**(t)‖₁ ≤ (2M/d) e^{−βt} ‖p₀*(0) − p₀**(0)‖_{1D*}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBound {
    pub family: ScalingFamily,
    pub size: usize,
    pub beta: f64,
    pub m: f64,
    pub d: f64,
    pub d_hat: f64,
    /// `d*(k)` for `k = 1..=S`.
    pub d_star: Vec<f64>,
    pub prefactor: f64,
    pub certified: bool,
    pub exhaustive: bool,
    pub mode: EnvelopeMode,
    pub grid: GridInfo,
    /// `α*` on the certificate grid with cumulative integrals.
    pub alpha_star_trace: AlphaProfile,
}

#[derive(Serialize)]
struct CertificateJson<'a> {
    delta: f64,
    beta: f64,
    #[serde(rename = "M")]
    m: f64,
    d: f64,
    prefactor: f64,
    certified: bool,
    #[serde(rename = "S")]
    size: usize,
    grid: GridInfo,
    family: &'static str,
    exhaustive: bool,
    mode: EnvelopeMode,
    d_hat: f64,
    d_star: &'a [f64],
    alpha_star_trace: Vec<[f64; 2]>,
}

/// Both initial norms appearing in the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialNorms {
    /// `‖p₀*(0) − p₀**(0)‖_{1D*}` (coordinates `1, 2, …`).
    pub difference: f64,
    /// `‖u(0)‖_{1D*}` with `u = T(p₀* − p₀**)`.
    pub tail: f64,
}

impl InitialNorms {
    pub fn conservative(&self) -> f64 {
        self.difference.max(self.tail)
    }
}

impl ConvergenceBound {
    pub fn envelope(&self) -> Envelope {
        Envelope {
            beta: self.beta,
            m: self.m,
            certified: self.certified,
        }
    }

    /// Replaces `β` (and the certified flag); for falsification runs only.
    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            certified: beta > 0.0,
            ..self.clone()
        }
    }

    /// `d*(k)` weights for `k = 1..=n`, from the family rule.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        self.family.d_star_weights(n)
    }

    /// Weighted norms of the initial pair; `p0a`, `p0b` include coordinate 0.
    pub fn initial_norms(&self, p0a: &[f64], p0b: &[f64]) -> Result<InitialNorms> {
        if p0a.len() != p0b.len() {
            return Err(Error::Dimension {
                expected: p0a.len(),
                got: p0b.len(),
            });
        }
        let n = p0a.len().saturating_sub(1);
        let w = self.weights(n);
        let diff: Vec<f64> = p0a[1..].iter().zip(&p0b[1..]).map(|(a, b)| a - b).collect();
        let u = crate::solver::compute_u(p0a, p0b)?;
        let weighted = |v: &[f64]| v.iter().zip(&w).map(|(x, wk)| wk * x.abs()).sum::<f64>();
        Ok(InitialNorms {
            difference: weighted(&diff),
            tail: weighted(&u),
        })
    }

    /// `(2M/d) e^{−βt} · norm`.
    pub fn rhs(&self, t: f64, norm: f64) -> f64 {
        self.prefactor * (-self.beta * t).exp() * norm
    }

    pub fn to_json(&self) -> serde_json::Value {
        let json = CertificateJson {
            delta: self.family.delta(),
            beta: self.beta,
            m: self.m,
            d: self.d,
            prefactor: self.prefactor,
            certified: self.certified,
            size: self.size,
            grid: self.grid,
            family: self.family.rule().name(),
            exhaustive: self.exhaustive,
            mode: self.mode,
            d_hat: self.d_hat,
            d_star: &self.d_star,
            alpha_star_trace: self
                .alpha_star_trace
                .times()
                .iter()
                .zip(self.alpha_star_trace.values())
                .map(|(&t, &a)| [t, a])
                .collect(),
        };
        serde_json::to_value(json).expect("certificate serializes")
    }

    /// Profile over `[0, horizon]` for checking the envelope on long spans.
    pub fn horizon_profile(&self, horizon: f64, points_per_unit: usize) -> AlphaProfile {
        self.alpha_star_trace
            .extend(self.mode, horizon, points_per_unit)
    }
}

fn certificate_grid(model: &ChainModel, config: &CertificateConfig) -> (EnvelopeMode, Vec<f64>) {
    if model.is_homogeneous() && config.period.is_none() {
        return (EnvelopeMode::Constant, vec![0.0]);
    }
    let cells = config.resolution.max(1);
    if let Some(period) = config.period.or_else(|| model.period()) {
        let grid = (0..=cells)
            .map(|k| period * k as f64 / cells as f64)
            .collect();
        return (EnvelopeMode::Periodic { period }, grid);
    }
    let horizon = config.horizon;
    let n = ((horizon.ceil() as usize).max(1)) * cells;
    let mut grid: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    grid.extend(
        model
            .breakpoints()
            .into_iter()
            .filter(|&b| b > 0.0 && b < horizon),
    );
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    (EnvelopeMode::Infimum, grid)
}

/// Builds the convergence certificate for `model` under `family`.
pub fn theorem1_certificate(
    model: &ChainModel,
    family: ScalingFamily,
    config: &CertificateConfig,
) -> Result<ConvergenceBound> {
    if !(config.horizon > 0.0) {
        return Err(Error::InvalidModel(format!(
            "horizon must be positive, got {}",
            config.horizon
        )));
    }
    let evaluator = AlphaEvaluator::new(model, family, config.size, config.search)?;
    let (mode, grid) = certificate_grid(model, config);
    let (values, cumulative) = cumulative_exact(&evaluator, &grid);
    let grid_info = GridInfo {
        start: grid[0],
        end: grid[grid.len() - 1],
        points: grid.len(),
    };
    let profile = AlphaProfile::new(grid, values, cumulative)?;
    let envelope = fit_envelope(&profile, mode);
    let d = family.d(config.size);
    let bound = ConvergenceBound {
        family,
        size: config.size,
        beta: envelope.beta,
        m: envelope.m,
        d,
        d_hat: family.d_hat(config.size),
        d_star: family.d_star_weights(config.size),
        prefactor: 2.0 * envelope.m / d,
        certified: envelope.certified,
        exhaustive: config.search == PatternSearch::Exhaustive,
        mode,
        grid: grid_info,
        alpha_star_trace: profile,
    };
    log::info!(
        "certificate: family={} delta={} beta={:.6} M={:.6} certified={}",
        family.rule().name(),
        family.delta(),
        bound.beta,
        bound.m,
        bound.certified
    );
    Ok(bound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub beta: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub prefactor: f64,
    pub certified: bool,
    /// Largest `β` among certified rows (first on ties).
    pub best: bool,
}

/// One certificate per `δ` in `deltas`.
pub fn sweep_delta(
    model: &ChainModel,
    rule: ScalingRule,
    config: &CertificateConfig,
    deltas: &[f64],
) -> Result<Vec<SweepRow>> {
    if deltas.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let families = deltas
        .iter()
        .map(|&delta| ScalingFamily::new(rule, delta))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = families
        .par_iter()
        .map(|&family| {
            let c = theorem1_certificate(model, family, config)?;
            Ok(SweepRow {
                delta: family.delta(),
                beta: c.beta,
                m: c.m,
                prefactor: c.prefactor,
                certified: c.certified,
                best: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows.iter().enumerate().filter(|(_, r)| r.certified).fold(
        None::<(usize, f64)>,
        |acc, (i, r)| match acc {
            Some((_, b)) if b >= r.beta => acc,
            _ => Some((i, r.beta)),
        },
    );
    if let Some((i, _)) = best {
        rows[i].best = true;
    }
    Ok(rows)
}
