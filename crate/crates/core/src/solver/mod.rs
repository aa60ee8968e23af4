//! Direct integration of the truncated forward Kolmogorov system
//! `dp/dt = A(t) p` and empirical checks of certificates against it.

mod dopri;
mod pair;

pub use pair::{
    contraction_check, pair_report, ContractionReport, PairReport, Verdict, HOLDS_SLACK,
};

use dopri::{integrate_on_grid, OdeSystem};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::chain::{ChainModel, TimeGenerator};
use crate::error::{Error, Result};
use crate::transform::bstar_components;

/// Largest admissible `L · t_end` for the explicit stepper.
pub const STIFFNESS_LIMIT: f64 = 1e6;
/// Default local error tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Normalization drift above this is logged.
pub const DRIFT_WARN: f64 = 1e-9;
/// Doubling gaps above this flag an inadequate truncation.
pub const DOUBLING_TOL: f64 = 1e-8;

/// A solution sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `p(t_k)` on states `0..=N`.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    /// `max_k |Σ_i p_i(t_k) − 1|`.
    pub fn max_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn last(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }
}

/// `n + 1` equally spaced points on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

/// Unit mass at `state` on `{0..=n}`.
pub fn point_mass(n: usize, state: usize) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[state.min(n)] = 1.0;
    p
}

/// The report pair `(δ₀, δ_m)` with `m = min(50, N/3)`.
pub fn extreme_pair(n: usize) -> (Vec<f64>, Vec<f64>) {
    (point_mass(n, 0), point_mass(n, (n / 3).min(50)))
}

/// `u_k = Σ_{i≥k} (pa_i − pb_i)` for `k = 1..N`.
pub fn compute_u(pa: &[f64], pb: &[f64]) -> Result<Vec<f64>> {
    if pa.len() != pb.len() {
        return Err(Error::Dimension {
            expected: pa.len(),
            got: pb.len(),
        });
    }
    let mut u = vec![0.0; pa.len().saturating_sub(1)];
    let mut acc = 0.0;
    for k in (1..pa.len()).rev() {
        acc += pa[k] - pb[k];
        u[k - 1] = acc;
    }
    Ok(u)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::Tolerance(tol));
    }
    Ok(())
}

fn check_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n + 1 {
        return Err(Error::InvalidDistribution(format!(
            "expected {} entries, got {}",
            n + 1,
            p.len()
        )));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::InvalidDistribution(format!("entry {i} is {}", p[i])));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!(
            "mass is {total}, not 1"
        )));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid[0] < 0.0 {
        return Err(Error::NegativeTime(grid[0]));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::ReversedInterval {
            start: w[0],
            end: w[1],
        });
    }
    Ok(())
}

fn check_stiffness(model: &ChainModel, t_end: f64) -> Result<()> {
    let product = model.intensity_bound(t_end, 256) * t_end;
    if product > STIFFNESS_LIMIT {
        return Err(Error::StiffnessLimit {
            product,
            limit: STIFFNESS_LIMIT,
        });
    }
    Ok(())
}

/// Error measure of one block of the stacked state.
#[derive(Debug, Clone)]
pub(crate) enum Control {
    /// `|e_i| ≤ tol (1 + |y_i|)`: probability vectors.
    Absolute,
    /// `w_i |e_i| ≤ tol ‖W y‖_∞`: decaying differences, accurate relative to their own size.
    Relative(Vec<f64>),
}

fn block_error(control: &Control, err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
    match control {
        Control::Absolute => err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| e.abs() / (tol * (1.0 + a.abs().max(b.abs()))))
            .fold(0.0, f64::max),
        Control::Relative(w) => {
            let scale = y0
                .iter()
                .zip(y1)
                .zip(w)
                .map(|((a, b), wi)| wi * a.abs().max(b.abs()))
                .fold(0.0, f64::max);
            let e = err
                .iter()
                .zip(w)
                .map(|(e, wi)| wi * e.abs())
                .fold(0.0, f64::max);
            if e == 0.0 {
                0.0
            } else if scale == 0.0 {
                f64::INFINITY
            } else {
                e / (tol * scale)
            }
        }
    }
}

/// `y' = A(t) y` for `A(t) = Σ_r ρ_r(t) A_r`.
pub(crate) trait LinearOperator: Sync {
    fn size(&self) -> usize;
    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for TimeGenerator {
    fn size(&self) -> usize {
        TimeGenerator::size(self)
    }

    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]) {
        TimeGenerator::apply(self, t, x, y)
    }
}

/// `B*(t)` as a combination of dense unit-rate components.
pub(crate) struct ConjugateOperator {
    rates: Vec<crate::rates::RateFunction>,
    parts: Vec<DMatrix<f64>>,
}

impl ConjugateOperator {
    pub(crate) fn new(model: &ChainModel, size: usize) -> Result<Self> {
        Ok(Self {
            rates: model.components().into_iter().cloned().collect(),
            parts: bstar_components(model, size)?
                .into_iter()
                .map(|m| m.into_matrix())
                .collect(),
        })
    }
}

impl LinearOperator for ConjugateOperator {
    fn size(&self) -> usize {
        self.parts[0].nrows()
    }

    fn apply(&self, t: f64, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let n = x.len();
        for (rate, part) in self.rates.iter().zip(&self.parts) {
            let v = rate.value(t);
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                let xj = v * x[j];
                if xj != 0.0 {
                    for (i, yi) in y.iter_mut().enumerate() {
                        *yi += part[(i, j)] * xj;
                    }
                }
            }
        }
    }
}

/// Several copies of one linear system integrated with a shared step sequence.
pub(crate) struct Stacked<'a, L: LinearOperator> {
    pub op: &'a L,
    pub controls: Vec<Control>,
}

impl<L: LinearOperator> OdeSystem for Stacked<'_, L> {
    fn dim(&self) -> usize {
        self.op.size() * self.controls.len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.op.size();
        for (yb, db) in y.chunks(n).zip(dy.chunks_mut(n)) {
            self.op.apply(t, yb, db);
        }
    }

    fn error_norm(&self, err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
        let n = self.op.size();
        self.controls
            .iter()
            .enumerate()
            .map(|(b, c)| {
                let r = b * n..(b + 1) * n;
                block_error(c, &err[r.clone()], &y0[r.clone()], &y1[r], tol)
            })
            .fold(0.0, f64::max)
    }
}

/// Integrates the blocks of `y0` under `op`, returning the samples on `grid`.
pub(crate) fn integrate_stacked<L: LinearOperator>(
    op: &L,
    stops: &[f64],
    y0: Vec<Vec<f64>>,
    controls: Vec<Control>,
    grid: &[f64],
    tol: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = op.size();
    let blocks = y0.len();
    let sys = Stacked { op, controls };
    let flat: Vec<f64> = y0.into_iter().flatten().collect();
    let mut out = vec![Vec::with_capacity(grid.len()); blocks];
    let stats = integrate_on_grid(&sys, &flat, grid, stops, tol, |_, y| {
        for (b, o) in out.iter_mut().enumerate() {
            o.push(y[b * n..(b + 1) * n].to_vec());
        }
    })?;
    log::debug!(
        "integrated {blocks}x{n} system on [{}, {}]: {} steps, {} rejected",
        grid[0],
        grid[grid.len() - 1],
        stats.accepted,
        stats.rejected
    );
    Ok(out)
}

pub(crate) fn prepare(
    model: &ChainModel,
    n: usize,
    grid: &[f64],
    tol: f64,
) -> Result<TimeGenerator> {
    check_tol(tol)?;
    check_grid(grid)?;
    check_stiffness(model, grid[grid.len() - 1])?;
    model.time_generator(n)
}

pub(crate) fn log_drift(label: &str, drift: f64) {
    if drift > DRIFT_WARN {
        log::warn!("{label}: normalization drift {drift:e} exceeds {DRIFT_WARN:e}");
    } else {
        log::debug!("{label}: normalization drift {drift:e}");
    }
}

/// Solves the forward system on `{0..=n}` from `p0`, sampled on `grid`.
///
/// The state is never renormalized; the drift is logged.
pub fn integrate(
    model: &ChainModel,
    n: usize,
    p0: &[f64],
    grid: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    let gen = prepare(model, n, grid, tol)?;
    check_distribution(p0, n)?;
    let mut blocks = integrate_stacked(
        &gen,
        &model.breakpoints(),
        vec![p0.to_vec()],
        vec![Control::Absolute],
        grid,
        tol,
    )?;
    let traj = Trajectory {
        times: grid.to_vec(),
        states: blocks.remove(0),
    };
    log_drift("integrate", traj.max_drift());
    Ok(traj)
}

/// Largest `ℓ₁` distance on states `0..=n` between the solutions truncated at
/// `n` and at `2n`, over a 257-point grid on `[0, t_end]`.
pub fn truncation_doubling(model: &ChainModel, n: usize, p0: &[f64], t_end: f64) -> Result<f64> {
    let grid = uniform_grid(t_end, 256);
    let mut wide = p0.to_vec();
    wide.resize(2 * n + 1, 0.0);
    let (small, large) = rayon::join(
        || integrate(model, n, p0, &grid, DEFAULT_TOL),
        || integrate(model, 2 * n, &wide, &grid, DEFAULT_TOL),
    );
    let (small, large) = (small?, large?);
    let gap = small
        .states
        .par_iter()
        .zip(&large.states)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .reduce(|| 0.0, f64::max);
    log::info!("truncation doubling N={n} -> {}: max gap {gap:e}", 2 * n);
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateFunction;

    fn c(v: f64) -> RateFunction {
        RateFunction::constant(v).unwrap()
    }

    fn mm1(l: f64, m: f64) -> ChainModel {
        ChainModel::simple_birth_death(c(l), c(m)).unwrap()
    }

    #[test]
    fn compute_u_examples() {
        assert_eq!(
            compute_u(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap(),
            vec![0.0, 0.0]
        );
        let u = compute_u(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(u, vec![-1.0, -1.0, 0.0]);
        assert!(compute_u(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn idle_chain_stays_put() {
        let p0 = vec![0.1, 0.2, 0.3, 0.4];
        let traj = integrate(&mm1(0.0, 0.0), 3, &p0, &uniform_grid(5.0, 10), 1e-10).unwrap();
        assert!(traj.states.iter().all(|p| p == &p0));
    }

    #[test]
    fn two_state_chain_matches_scalar_solution() {
        let grid = uniform_grid(3.0, 60);
        let traj = integrate(&mm1(1.0, 4.0), 1, &[1.0, 0.0], &grid, 1e-12).unwrap();
        for (t, p) in grid.iter().zip(&traj.states) {
            let exact = 0.2 * (1.0 - (-5.0 * t).exp());
            assert!((p[1] - exact).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn mm1_reaches_geometric_law() {
        let n = 150;
        let traj = integrate(
            &mm1(1.0, 4.0),
            n,
            &point_mass(n, 0),
            &uniform_grid(40.0, 8),
            1e-10,
        )
        .unwrap();
        let rho: f64 = 0.25;
        let dist: f64 = traj
            .last()
            .iter()
            .enumerate()
            .map(|(i, p)| (p - (1.0 - rho) * rho.powi(i as i32)).abs())
            .sum();
        assert!(dist < 1e-6, "{dist}");
        assert!(traj.max_drift() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = mm1(1.0, 4.0);
        let g = uniform_grid(1.0, 4);
        assert!(matches!(
            integrate(&m, 2, &[1.0, 0.0, 0.0], &g, 1e-3),
            Err(Error::Tolerance(_))
        ));
        assert!(matches!(
            integrate(&m, 2, &[0.5, 0.0, 0.0], &g, 1e-10),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            integrate(&m, 2, &[1.0, 0.0], &g, 1e-10),
            Err(Error::InvalidDistribution(_))
        ));
        let stiff = mm1(1e5, 1e5);
        assert!(matches!(
            integrate(&stiff, 2, &[1.0, 0.0, 0.0], &uniform_grid(10.0, 4), 1e-10),
            Err(Error::StiffnessLimit { .. })
        ));
    }

    #[test]
    fn doubling_detects_inadequate_truncation() {
        assert_eq!(
            truncation_doubling(&mm1(0.0, 0.0), 10, &point_mass(10, 0), 5.0).unwrap(),
            0.0
        );
        let ok = truncation_doubling(&mm1(1.0, 4.0), 150, &point_mass(150, 0), 40.0).unwrap();
        assert!(ok <= DOUBLING_TOL, "{ok}");
        let bad = truncation_doubling(&mm1(4.0, 1.0), 20, &point_mass(20, 0), 40.0).unwrap();
        assert!(bad > 0.1, "{bad}");
    }

    #[test]
    fn extreme_pair_convention() {
        let (a, b) = extreme_pair(150);
        assert_eq!(a[0], 1.0);
        assert_eq!(b[50], 1.0);
        let (_, b) = extreme_pair(30);
        assert_eq!(b[10], 1.0);
    }
}
