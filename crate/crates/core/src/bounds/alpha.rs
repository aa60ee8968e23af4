//! Contraction rates `α_D(t)` and their minimum `α*(t)` over sign patterns.
//!
//! `B*(t) = Σ_r ρ_r(t) B*_r` is linear in the rate components, so each column
//! sum of `D B*(t) D⁻¹` is a fixed linear functional of `ρ(t)`. Both `α_D` and
//! `α*` are minima of finitely many such functionals; [`integrate_exact`] uses
//! this to integrate them with closed-form rate integrals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{Branch, ScalingFamily, SignPattern};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::rates::RateFunction;
use crate::transform::{bstar_components, bstar_numeric, ConjugatedMatrix};

/// Largest `S` for exhaustive enumeration (`2^{S−1}` patterns).
pub const EXHAUSTIVE_LIMIT: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternSearch {
    /// All `2^{S−1}` patterns modulo global flip.
    Exhaustive,
    /// Patterns with at most two sign changes along the index axis; not a bound.
    FewSignChanges,
}

/// Column-major band storage; slot `j * w + (i + band − j)` holds entry `(i, j)`.
#[derive(Debug, Clone)]
struct Band {
    size: usize,
    band: usize,
    data: Vec<f64>,
}

impl Band {
    fn width(&self) -> usize {
        2 * self.band + 1
    }

    fn from_conjugated(m: &ConjugatedMatrix, band: usize) -> Result<Self> {
        let size = m.size();
        let scale = m.matrix().amax().max(1.0);
        let off = m.max_off_band(band);
        if off > 1e-9 * scale {
            return Err(Error::InvalidModel(format!(
                "B* has off-band entry of size {off:e}; band limit {band} violated"
            )));
        }
        let w = 2 * band + 1;
        let mut data = vec![0.0; size * w];
        for j in 0..size {
            for i in j.saturating_sub(band)..=(j + band).min(size - 1) {
                data[j * w + i + band - j] = m.get(i + 1, j + 1);
            }
        }
        Ok(Self { size, band, data })
    }

    /// Rows `(i, slot)` present in column `j`.
    #[inline]
    fn rows(&self, j: usize) -> std::ops::RangeInclusive<usize> {
        j.saturating_sub(self.band)..=(j + self.band).min(self.size - 1)
    }
}

/// Banded unit components of `B*` at a fixed size.
#[derive(Debug, Clone)]
pub struct BStarBands {
    rates: Vec<RateFunction>,
    parts: Vec<Band>,
    size: usize,
    band: usize,
}

impl BStarBands {
    pub fn new(model: &ChainModel, size: usize) -> Result<Self> {
        let band = model.band();
        if size < band + 2 {
            return Err(Error::SizeTooSmall { size, band });
        }
        let parts = bstar_components(model, size)?
            .iter()
            .map(|m| Band::from_conjugated(m, band))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rates: model.components().into_iter().cloned().collect(),
            parts,
            size,
            band,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn rates(&self) -> &[RateFunction] {
        &self.rates
    }

    fn at(&self, t: f64) -> Band {
        let mut out = Band {
            size: self.size,
            band: self.band,
            data: vec![0.0; self.parts[0].data.len()],
        };
        for (rate, part) in self.rates.iter().zip(&self.parts) {
            let v = rate.value(t);
            if v != 0.0 {
                for (o, p) in out.data.iter_mut().zip(&part.data) {
                    *o += v * p;
                }
            }
        }
        out
    }

    /// Whether all off-diagonal entries of `B*(t)` are nonnegative.
    pub fn essentially_nonnegative(&self, t: f64) -> bool {
        let b = self.at(t);
        let w = b.width();
        (0..b.size).all(|j| {
            b.rows(j)
                .filter(|&i| i != j)
                .all(|i| b.data[j * w + i + b.band - j] >= -1e-14)
        })
    }

    /// Coefficients of `−Σ_i (d_i/d_j) b*_ij(t)` with respect to the rate components.
    fn column_functional(&self, d: &[f64], j: usize) -> Vec<f64> {
        let w = 2 * self.band + 1;
        self.parts
            .iter()
            .map(|p| {
                -p.rows(j)
                    .map(|i| d[i] / d[j] * p.data[j * w + i + self.band - j])
                    .sum::<f64>()
            })
            .collect()
    }

    /// `α_D(t)` and the (0-based) column attaining it.
    fn alpha_for_signed(&self, bstar: &Band, d: &[f64]) -> (f64, usize) {
        let w = bstar.width();
        let mut worst = (f64::NEG_INFINITY, 0);
        for j in 0..bstar.size {
            let sum: f64 = bstar
                .rows(j)
                .map(|i| d[i] / d[j] * bstar.data[j * w + i + bstar.band - j])
                .sum();
            if sum > worst.0 {
                worst = (sum, j);
            }
        }
        (-worst.0, worst.1)
    }
}

/// A point value of `α*(t)` with the minimizing pattern and column.
#[derive(Debug, Clone)]
pub struct AlphaPoint {
    pub value: f64,
    pub pattern: SignPattern,
    /// 1-based column whose sum attains `α_D` for the minimizing pattern.
    pub column: usize,
    functional: Vec<f64>,
}

/// Evaluates `α*(t)` for a model, family and size.
#[derive(Debug, Clone)]
pub struct AlphaEvaluator {
    bands: BStarBands,
    family: ScalingFamily,
    search: PatternSearch,
    /// Per branch: `|d_i| / |d_j|` in band layout.
    ratios: Vec<(Branch, Vec<f64>)>,
}

impl AlphaEvaluator {
    pub fn new(
        model: &ChainModel,
        family: ScalingFamily,
        size: usize,
        search: PatternSearch,
    ) -> Result<Self> {
        if search == PatternSearch::Exhaustive && size > EXHAUSTIVE_LIMIT {
            return Err(Error::ExhaustiveTooLarge {
                size,
                limit: EXHAUSTIVE_LIMIT,
            });
        }
        let bands = BStarBands::new(model, size)?;
        let band = bands.band;
        let w = 2 * band + 1;
        let ratios = family
            .branches()
            .iter()
            .map(|&b| {
                let m = family.branch_magnitudes(b, size);
                let mut r = vec![0.0; size * w];
                for j in 0..size {
                    for i in j.saturating_sub(band)..=(j + band).min(size - 1) {
                        r[j * w + i + band - j] = m[i] / m[j];
                    }
                }
                (b, r)
            })
            .collect();
        Ok(Self {
            bands,
            family,
            search,
            ratios,
        })
    }

    pub fn size(&self) -> usize {
        self.bands.size
    }

    pub fn family(&self) -> ScalingFamily {
        self.family
    }

    pub fn search(&self) -> PatternSearch {
        self.search
    }

    pub fn bands(&self) -> &BStarBands {
        &self.bands
    }

    fn weighted(&self, bstar: &Band) -> Vec<(Branch, Vec<f64>)> {
        self.ratios
            .iter()
            .map(|(b, r)| (*b, r.iter().zip(&bstar.data).map(|(x, y)| x * y).collect()))
            .collect()
    }

    /// `(α_D, column)` for a pattern given branch-weighted entries.
    fn pattern_alpha(&self, weighted: &[(Branch, Vec<f64>)], signs: &[i8]) -> (f64, usize) {
        let branch = self.family.branch(signs);
        let table = &weighted
            .iter()
            .find(|(b, _)| *b == branch)
            .expect("branch table present")
            .1;
        let (size, band) = (self.bands.size, self.bands.band);
        let w = 2 * band + 1;
        let mut worst = (f64::NEG_INFINITY, 0);
        for j in 0..size {
            let col = &table[j * w..(j + 1) * w];
            let sj = signs[j];
            let mut sum = 0.0;
            for i in j.saturating_sub(band)..=(j + band).min(size - 1) {
                let v = col[i + band - j];
                sum += if signs[i] == sj { v } else { -v };
            }
            if sum > worst.0 {
                worst = (sum, j);
            }
        }
        (-worst.0, worst.1)
    }

    /// `α*(t)` with its minimizing pattern (ties broken lexicographically).
    pub fn eval(&self, t: f64) -> AlphaPoint {
        let bstar = self.bands.at(t);
        let weighted = self.weighted(&bstar);
        let size = self.bands.size;
        let (value, pattern, column) = match self.search {
            PatternSearch::Exhaustive => {
                let count = 1u64 << (size - 1);
                let (value, index, column) = (0..count)
                    .into_par_iter()
                    .map_init(
                        || vec![1i8; size],
                        |signs, p| {
                            for (k, s) in signs.iter_mut().enumerate().skip(1) {
                                *s = if (p >> (size - 1 - k)) & 1 == 1 {
                                    -1
                                } else {
                                    1
                                };
                            }
                            let (a, j) = self.pattern_alpha(&weighted, signs);
                            (a, p, j)
                        },
                    )
                    .reduce(
                        || (f64::INFINITY, u64::MAX, 0),
                        |x, y| {
                            if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
                                y
                            } else {
                                x
                            }
                        },
                    );
                (value, SignPattern::from_index(index, size), column)
            }
            PatternSearch::FewSignChanges => {
                let candidates = few_change_patterns(size);
                let best = candidates
                    .par_iter()
                    .map(|p| {
                        let (a, j) = self.pattern_alpha(&weighted, p.signs());
                        (a, p, j)
                    })
                    .reduce_with(|x, y| {
                        let take_y = y.0 < x.0 || (y.0 == x.0 && y.1.lex_cmp(x.1).is_lt());
                        if take_y {
                            y
                        } else {
                            x
                        }
                    })
                    .expect("at least one pattern");
                (best.0, best.1.clone(), best.2)
            }
        };
        let d = self.family.diagonal(&pattern);
        let functional = self.bands.column_functional(&d, column);
        AlphaPoint {
            value,
            pattern,
            column: column + 1,
            functional,
        }
    }

    /// `α_D(t)` for the family's diagonal on a given pattern.
    pub fn alpha_on_pattern(&self, pattern: &SignPattern, t: f64) -> f64 {
        let bstar = self.bands.at(t);
        let weighted = self.weighted(&bstar);
        self.pattern_alpha(&weighted, pattern.signs()).0
    }
}

/// Patterns with `s_1 = +` and at most two sign changes, in lexicographic order.
pub fn few_change_patterns(size: usize) -> Vec<SignPattern> {
    let mut out = vec![SignPattern::all_positive(size)];
    for c1 in 1..size {
        let mut s = vec![1i8; size];
        s[c1..].iter_mut().for_each(|v| *v = -1);
        out.push(SignPattern::new(s));
        for c2 in c1 + 1..size {
            let mut s = vec![1i8; size];
            s[c1..c2].iter_mut().for_each(|v| *v = -1);
            out.push(SignPattern::new(s));
        }
    }
    out.sort_by(|a, b| a.lex_cmp(b));
    out
}

/// `α_D(t)` for a fixed signed diagonal `D`, as a minimum of column functionals.
#[derive(Debug, Clone)]
pub struct FixedScalingAlpha<'a> {
    bands: &'a BStarBands,
    d: Vec<f64>,
}

impl<'a> FixedScalingAlpha<'a> {
    pub fn new(bands: &'a BStarBands, d: Vec<f64>) -> Result<Self> {
        if d.len() != bands.size {
            return Err(Error::Dimension {
                expected: bands.size,
                got: d.len(),
            });
        }
        if let Some(k) = d.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroScaling { index: k + 1 });
        }
        Ok(Self { bands, d })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.bands.alpha_for_signed(&self.bands.at(t), &self.d).0
    }
}

/// A function of time that is the minimum of finitely many linear functionals
/// of the rate components.
pub(crate) trait MinOfFunctionals: Sync {
    fn rates(&self) -> &[RateFunction];
    /// Minimum value at `t` and the coefficients of a functional attaining it.
    fn active(&self, t: f64) -> (f64, Vec<f64>);
}

impl MinOfFunctionals for AlphaEvaluator {
    fn rates(&self) -> &[RateFunction] {
        &self.bands.rates
    }

    fn active(&self, t: f64) -> (f64, Vec<f64>) {
        let p = self.eval(t);
        (p.value, p.functional)
    }
}

impl MinOfFunctionals for FixedScalingAlpha<'_> {
    fn rates(&self) -> &[RateFunction] {
        &self.bands.rates
    }

    fn active(&self, t: f64) -> (f64, Vec<f64>) {
        let (value, j) = self.bands.alpha_for_signed(&self.bands.at(t), &self.d);
        (value, self.bands.column_functional(&self.d, j))
    }
}

fn functional_value(rates: &[RateFunction], coef: &[f64], t: f64) -> f64 {
    rates
        .iter()
        .zip(coef)
        .filter(|(_, c)| **c != 0.0)
        .map(|(r, c)| c * r.value(t))
        .sum()
}

fn functional_integral(rates: &[RateFunction], coef: &[f64], a: f64, b: f64) -> f64 {
    rates
        .iter()
        .zip(coef)
        .filter(|(_, c)| **c != 0.0)
        .map(|(r, c)| c * r.integral(a, b))
        .sum()
}

fn same_functional(x: &[f64], y: &[f64]) -> bool {
    let scale = x.iter().chain(y).fold(1.0f64, |m, v| m.max(v.abs()));
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-13 * scale)
}

const MAX_DEPTH: u32 = 48;

/// Exact `∫_a^b f` for a minimum of functionals, given the active functional
/// at both ends. Switching points are located by bisection.
pub(crate) fn integrate_exact<F: MinOfFunctionals + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    left: &(f64, Vec<f64>),
    right: &(f64, Vec<f64>),
) -> f64 {
    segment(f, a, b, left, right, MAX_DEPTH)
}

fn segment<F: MinOfFunctionals + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    left: &(f64, Vec<f64>),
    right: &(f64, Vec<f64>),
    depth: u32,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rates = f.rates();
    let mid = 0.5 * (a + b);
    if same_functional(&left.1, &right.1) {
        let at_mid = f.active(mid);
        let candidate = functional_value(rates, &left.1, mid);
        if candidate - at_mid.0 <= 1e-12 * (1.0 + at_mid.0.abs()) {
            return functional_integral(rates, &left.1, a, b);
        }
        if depth == 0 {
            return simpson(f, a, b);
        }
        return segment(f, a, mid, left, &at_mid, depth - 1)
            + segment(f, mid, b, &at_mid, right, depth - 1);
    }
    if depth == 0 {
        return simpson(f, a, b);
    }
    // left functional is minimal at a, right one at b: locate the switch
    let gap = |t: f64| functional_value(rates, &left.1, t) - functional_value(rates, &right.1, t);
    let (ga, gb) = (gap(a), gap(b));
    if ga <= 0.0 && gb >= 0.0 {
        let (mut lo, mut hi) = (a, b);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                break;
            }
            if gap(m) <= 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let x = 0.5 * (lo + hi);
        let v = functional_value(rates, &left.1, x);
        let at_x_left = (v, left.1.clone());
        let at_x_right = (v, right.1.clone());
        return segment(f, a, x, left, &at_x_left, depth - 1)
            + segment(f, x, b, &at_x_right, right, depth - 1);
    }
    let at_mid = f.active(mid);
    segment(f, a, mid, left, &at_mid, depth - 1) + segment(f, mid, b, &at_mid, right, depth - 1)
}

fn simpson<F: MinOfFunctionals + ?Sized>(f: &F, a: f64, b: f64) -> f64 {
    log::debug!("exact integration fell back to Simpson on [{a}, {b}]");
    (b - a) / 6.0 * (f.active(a).0 + 4.0 * f.active(0.5 * (a + b)).0 + f.active(b).0)
}

/// `∫` over consecutive grid cells, parallel over cells; returns the
/// point values at the grid and the cumulative integrals from `grid[0]`.
pub(crate) fn cumulative_exact<F: MinOfFunctionals + ?Sized>(
    f: &F,
    grid: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let actives: Vec<(f64, Vec<f64>)> = grid.par_iter().map(|&t| f.active(t)).collect();
    let cells: Vec<f64> = (1..grid.len())
        .into_par_iter()
        .map(|k| integrate_exact(f, grid[k - 1], grid[k], &actives[k - 1], &actives[k]))
        .collect();
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for c in cells {
        acc += c;
        cumulative.push(acc);
    }
    (actives.into_iter().map(|a| a.0).collect(), cumulative)
}

/// `α_D(t) = −max_j Σ_i (d_i/d_j) b*_ij(t)` at truncation `N = S`, via dense `B**`.
pub fn alpha_for_d(model: &ChainModel, size: usize, d: &[f64], t: f64) -> Result<f64> {
    let band = model.band();
    if size < band + 2 {
        return Err(Error::SizeTooSmall { size, band });
    }
    let bstar = bstar_numeric(model, size, t)?;
    let scaled = crate::transform::scale_d(&bstar, d)?;
    let worst = (1..=size)
        .map(|j| scaled.column_sum(j))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(-worst)
}

/// `α*(t)`: minimum of `α_D(t)` over sign patterns (modulo global flip).
pub fn alpha_star(
    model: &ChainModel,
    family: ScalingFamily,
    size: usize,
    t: f64,
    search: PatternSearch,
) -> Result<AlphaPoint> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(AlphaEvaluator::new(model, family, size, search)?.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::family::ScalingFamily;

    fn c(v: f64) -> RateFunction {
        RateFunction::constant(v).unwrap()
    }

    #[test]
    fn birth_death_geometric_alpha_is_one() {
        let m = ChainModel::simple_birth_death(c(1.0), c(4.0)).unwrap();
        for size in [4, 7, 12] {
            let d: Vec<f64> = (0..size).map(|k| 2f64.powi(k as i32)).collect();
            let a = alpha_for_d(&m, size, &d, 0.0).unwrap();
            assert!((a - 1.0).abs() < 1e-12, "S={size}: {a}");
        }
    }

    #[test]
    fn identity_scaling_gives_zero_for_birth_death() {
        let m = ChainModel::simple_birth_death(c(1.0), c(4.0)).unwrap();
        let a = alpha_for_d(&m, 6, &[1.0; 6], 0.0).unwrap();
        assert!(a.abs() < 1e-12, "{a}");
    }

    #[test]
    fn pair_service_all_positive_pattern() {
        let m = ChainModel::pair_service(c(1.0), c(4.0)).unwrap();
        let f = ScalingFamily::satin(2.0).unwrap();
        let d = f.diagonal(&SignPattern::all_positive(10));
        let a = alpha_for_d(&m, 10, &d, 0.0).unwrap();
        assert!(a >= 0.5 - 1e-12, "{a}");
    }

    #[test]
    fn size_and_search_limits() {
        let m = ChainModel::pair_service(c(1.0), c(4.0)).unwrap();
        let f = ScalingFamily::satin(2.0).unwrap();
        assert!(matches!(
            alpha_star(&m, f, 3, 0.0, PatternSearch::Exhaustive),
            Err(Error::SizeTooSmall { size: 3, band: 2 })
        ));
        assert!(matches!(
            alpha_star(&m, f, 23, 0.0, PatternSearch::Exhaustive),
            Err(Error::ExhaustiveTooLarge { .. })
        ));
        let heuristic = alpha_star(&m, f, 40, 0.0, PatternSearch::FewSignChanges).unwrap();
        assert!((heuristic.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn few_change_pattern_count() {
        let s = 7;
        let pats = few_change_patterns(s);
        assert_eq!(pats.len(), 1 + (s - 1) + (s - 1) * (s - 2) / 2);
        assert!(pats
            .iter()
            .all(|p| p.sign_changes() <= 2 && p.signs()[0] == 1));
    }

    #[test]
    fn evaluator_agrees_with_dense_route() {
        let m = ChainModel::batch_both(vec![c(0.6), c(0.2)], vec![c(1.0), c(2.5)]).unwrap();
        let f = ScalingFamily::geometric(1.7).unwrap();
        let ev = AlphaEvaluator::new(&m, f, 9, PatternSearch::Exhaustive).unwrap();
        for idx in [0u64, 5, 77, 255] {
            let p = SignPattern::from_index(idx, 9);
            let fast = ev.alpha_on_pattern(&p, 0.0);
            let dense = alpha_for_d(&m, 9, &f.diagonal(&p), 0.0).unwrap();
            assert!((fast - dense).abs() < 1e-12, "{idx}: {fast} vs {dense}");
        }
    }

    #[test]
    fn exact_integral_of_switching_minimum() {
        // α*(t) = min(0.5 λ(t), 2 − λ(t)) for the pair-service model with δ = 2
        let lam = RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.0).unwrap();
        let m = ChainModel::pair_service(lam, c(4.0)).unwrap();
        let f = ScalingFamily::satin(2.0).unwrap();
        let ev = AlphaEvaluator::new(&m, f, 8, PatternSearch::Exhaustive).unwrap();
        let grid: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let (_, cum) = cumulative_exact(&ev, &grid);
        let theta0 = (2.0f64 / 3.0).asin();
        let pi = std::f64::consts::PI;
        let expected = 0.5 + (pi - 2.0 * theta0) / (4.0 * pi) - 5f64.sqrt() / (4.0 * pi);
        assert!(
            (cum[16] - expected).abs() < 1e-13,
            "{} vs {expected}",
            cum[16]
        );
    }
}
