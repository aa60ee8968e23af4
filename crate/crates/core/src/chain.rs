//! The four transition classes and the truncated transposed intensity matrix `A(t)`.
//!
//! Rates enter `A(t)` linearly: the model is a list of rate components
//! `ρ_r(t)` (λ, μ, a_k, b_k) and `A(t) = Σ_r ρ_r(t) A_r` for fixed unit
//! matrices `A_r`. Everything downstream (reduction, conjugation, column sums)
//! is linear too, which is what makes exact integration of decay rates possible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateFunction;

/// Time-independent per-state factor applied to a state-dependent rate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Multipliers {
    /// `m_i = 1`.
    #[default]
    Constant,
    /// `m_i = min(i, cap)`, e.g. a `cap`-server death rate.
    LinearCapped { cap: usize },
    /// `m_i = values[i]`; states beyond the list reuse the last entry.
    Explicit { values: Vec<f64> },
}

impl Multipliers {
    pub fn validate(&self) -> Result<()> {
        match self {
            Multipliers::Constant => Ok(()),
            Multipliers::LinearCapped { cap } if *cap == 0 => Err(Error::InvalidModel(
                "linear-capped multiplier needs cap >= 1".into(),
            )),
            Multipliers::LinearCapped { .. } => Ok(()),
            Multipliers::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidModel("explicit multipliers are empty".into()));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidModel(
                        "explicit multipliers must be finite and nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, state: usize) -> f64 {
        match self {
            Multipliers::Constant => 1.0,
            Multipliers::LinearCapped { cap } => state.min(*cap) as f64,
            Multipliers::Explicit { values } => values[state.min(values.len() - 1)],
        }
    }

    /// First state from which the multiplier no longer changes.
    fn settles_at(&self) -> usize {
        match self {
            Multipliers::Constant => 0,
            Multipliers::LinearCapped { cap } => *cap,
            Multipliers::Explicit { values } => values.len(),
        }
    }
}

/// A state-dependent rate `base(t) * m_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub base: RateFunction,
    pub multipliers: Multipliers,
}

impl StateRate {
    pub fn new(base: RateFunction, multipliers: Multipliers) -> Self {
        Self { base, multipliers }
    }

    pub fn uniform(base: RateFunction) -> Self {
        Self::new(base, Multipliers::Constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainClass {
    I,
    II,
    III,
    IV,
}

impl ChainClass {
    pub fn name(self) -> &'static str {
        match self {
            ChainClass::I => "I",
            ChainClass::II => "II",
            ChainClass::III => "III",
            ChainClass::IV => "IV",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transitions {
    /// Class I: `i -> i+1` at `λ_i(t)`, `i -> i-1` at `μ_i(t)`.
    BirthDeath { birth: StateRate, death: StateRate },
    /// Class II: `i -> i+k` at `a_k(t)`, `i -> i-1` at `μ_i(t)`.
    BatchArrivals {
        arrivals: Vec<RateFunction>,
        death: StateRate,
    },
    /// Class III: `i -> i+1` at `λ_i(t)`, `i -> i-k` at `b_k(t)` when `k <= i`.
    BatchServices {
        birth: StateRate,
        services: Vec<RateFunction>,
    },
    /// Class IV: `i -> i+k` at `a_k(t)`, `i -> i-k` at `b_k(t)` when `k <= i`.
    BatchBoth {
        arrivals: Vec<RateFunction>,
        services: Vec<RateFunction>,
    },
}

/// One of the four transition classes with band limit `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    transitions: Transitions,
    band: usize,
}

fn padded(mut rates: Vec<RateFunction>, band: usize) -> Vec<RateFunction> {
    rates.resize(band, RateFunction::zero());
    rates
}

impl ChainModel {
    /// Builds a model; `band` may exceed the natural jump range (batch vectors
    /// are zero-padded) but not fall below it.
    pub fn new(transitions: Transitions, band: usize) -> Result<Self> {
        let natural = match &transitions {
            Transitions::BirthDeath { .. } => 1,
            Transitions::BatchArrivals { arrivals, .. } => arrivals.len().max(1),
            Transitions::BatchServices { services, .. } => services.len().max(1),
            Transitions::BatchBoth { arrivals, services } => {
                arrivals.len().max(services.len()).max(1)
            }
        };
        if band < natural {
            return Err(Error::InvalidModel(format!(
                "band limit R = {band} is below the largest jump size {natural}"
            )));
        }
        let transitions = match transitions {
            Transitions::BatchArrivals { arrivals, death } => Transitions::BatchArrivals {
                arrivals: padded(arrivals, band),
                death,
            },
            Transitions::BatchServices { birth, services } => Transitions::BatchServices {
                birth,
                services: padded(services, band),
            },
            Transitions::BatchBoth { arrivals, services } => Transitions::BatchBoth {
                arrivals: padded(arrivals, band),
                services: padded(services, band),
            },
            other => other,
        };
        for m in transitions_multipliers(&transitions) {
            m.validate()?;
        }
        Ok(Self { transitions, band })
    }

    pub fn birth_death(birth: StateRate, death: StateRate) -> Result<Self> {
        Self::new(Transitions::BirthDeath { birth, death }, 1)
    }

    pub fn batch_arrivals(arrivals: Vec<RateFunction>, death: StateRate) -> Result<Self> {
        let band = arrivals.len().max(1);
        Self::new(Transitions::BatchArrivals { arrivals, death }, band)
    }

    pub fn batch_services(birth: StateRate, services: Vec<RateFunction>) -> Result<Self> {
        let band = services.len().max(1);
        Self::new(Transitions::BatchServices { birth, services }, band)
    }

    pub fn batch_both(arrivals: Vec<RateFunction>, services: Vec<RateFunction>) -> Result<Self> {
        let band = arrivals.len().max(services.len()).max(1);
        Self::new(Transitions::BatchBoth { arrivals, services }, band)
    }

    /// Single arrivals at `λ(t)` and service of groups of two at `μ(t)`
    /// (class III with `b₁ = 0`, `b₂ = μ`).
    pub fn pair_service(lambda: RateFunction, mu: RateFunction) -> Result<Self> {
        Self::batch_services(StateRate::uniform(lambda), vec![RateFunction::zero(), mu])
    }

    /// Homogeneous-structure birth–death chain with uniform multipliers.
    pub fn simple_birth_death(lambda: RateFunction, mu: RateFunction) -> Result<Self> {
        Self::birth_death(StateRate::uniform(lambda), StateRate::uniform(mu))
    }

    pub fn class(&self) -> ChainClass {
        match self.transitions {
            Transitions::BirthDeath { .. } => ChainClass::I,
            Transitions::BatchArrivals { .. } => ChainClass::II,
            Transitions::BatchServices { .. } => ChainClass::III,
            Transitions::BatchBoth { .. } => ChainClass::IV,
        }
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    /// Rate components in a fixed order: I `[λ, μ]`, II `[a_1..a_R, μ]`,
    /// III `[λ, b_1..b_R]`, IV `[a_1..a_R, b_1..b_R]`.
    pub fn components(&self) -> Vec<&RateFunction> {
        match &self.transitions {
            Transitions::BirthDeath { birth, death } => vec![&birth.base, &death.base],
            Transitions::BatchArrivals { arrivals, death } => arrivals
                .iter()
                .chain(std::iter::once(&death.base))
                .collect(),
            Transitions::BatchServices { birth, services } => std::iter::once(&birth.base)
                .chain(services.iter())
                .collect(),
            Transitions::BatchBoth { arrivals, services } => {
                arrivals.iter().chain(services.iter()).collect()
            }
        }
    }

    pub fn component_values(&self, t: f64) -> Vec<f64> {
        self.components().iter().map(|r| r.value(t)).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.components().iter().all(|r| r.is_constant())
    }

    /// Common period of all time-varying components, when one exists
    /// (only sinusoids with commensurate frequencies qualify).
    pub fn period(&self) -> Option<f64> {
        let comps = self.components();
        let varying: Vec<_> = comps.iter().filter(|r| !r.is_constant()).collect();
        if varying.is_empty() {
            return None;
        }
        let freqs: Option<Vec<f64>> = varying.iter().map(|r| r.frequency()).collect();
        let freqs = freqs?;
        let base = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
        for f in &freqs {
            let ratio = f / base;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return None;
            }
        }
        Some(1.0 / base)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .components()
            .iter()
            .flat_map(|r| r.breakpoints().iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Outgoing transitions `(from, to, rate)` of `state` in the untruncated chain.
    fn for_each_jump(&self, state: usize, values: &[f64], mut emit: impl FnMut(usize, f64)) {
        let r = self.band;
        match &self.transitions {
            Transitions::BirthDeath { birth, death } => {
                emit(state + 1, values[0] * birth.multipliers.at(state));
                if state >= 1 {
                    emit(state - 1, values[1] * death.multipliers.at(state));
                }
            }
            Transitions::BatchArrivals { death, .. } => {
                for k in 1..=r {
                    emit(state + k, values[k - 1]);
                }
                if state >= 1 {
                    emit(state - 1, values[r] * death.multipliers.at(state));
                }
            }
            Transitions::BatchServices { birth, .. } => {
                emit(state + 1, values[0] * birth.multipliers.at(state));
                for k in 1..=r.min(state) {
                    emit(state - k, values[k]);
                }
            }
            Transitions::BatchBoth { .. } => {
                for k in 1..=r {
                    emit(state + k, values[k - 1]);
                }
                for k in 1..=r.min(state) {
                    emit(state - k, values[r + k - 1]);
                }
            }
        }
    }

    /// Total outflow of `state` (untruncated) for given component values.
    pub fn outflow(&self, state: usize, values: &[f64]) -> f64 {
        let mut total = 0.0;
        self.for_each_jump(state, values, |_, rate| total += rate);
        total
    }

    /// Assembles the truncated `A` for the given component values.
    /// Jumps leaving `{0..n_max}` are dropped and the diagonal compensates.
    pub fn assemble(&self, n_max: usize, values: &[f64]) -> GeneratorMatrix {
        let mut a = GeneratorMatrix::zeros(n_max + 1, self.band);
        for from in 0..=n_max {
            let mut out = 0.0;
            self.for_each_jump(from, values, |to, rate| {
                if to <= n_max && rate != 0.0 {
                    a.add(to, from, rate);
                    out += rate;
                }
            });
            a.add(from, from, -out);
        }
        a
    }

    fn check_truncation(&self, n_max: usize) -> Result<()> {
        if n_max < self.band {
            return Err(Error::TruncationTooSmall {
                n: n_max,
                band: self.band,
            });
        }
        Ok(())
    }

    /// `A(t)` truncated to states `{0..n_max}`.
    pub fn generator(&self, n_max: usize, t: f64) -> Result<GeneratorMatrix> {
        self.check_truncation(n_max)?;
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.assemble(n_max, &self.component_values(t)))
    }

    /// Splits `A(t)` into its unit component matrices.
    pub fn time_generator(&self, n_max: usize) -> Result<TimeGenerator> {
        self.check_truncation(n_max)?;
        let rates: Vec<RateFunction> = self.components().into_iter().cloned().collect();
        let parts = (0..rates.len())
            .map(|r| {
                let mut unit = vec![0.0; rates.len()];
                unit[r] = 1.0;
                self.assemble(n_max, &unit)
            })
            .collect();
        Ok(TimeGenerator { rates, parts })
    }

    /// Sampled supremum of total outflow over time and states (the constant `L`).
    ///
    /// Exact for time-homogeneous rates; otherwise the supremum over a grid of
    /// `samples` points on `[0, horizon]` plus all breakpoints and sinusoid crests.
    pub fn intensity_bound(&self, horizon: f64, samples: usize) -> f64 {
        let horizon = horizon.max(0.0);
        let mut times: Vec<f64> = if self.is_homogeneous() {
            vec![0.0]
        } else {
            let n = samples.max(2);
            (0..n)
                .map(|k| horizon * k as f64 / (n - 1) as f64)
                .collect()
        };
        for r in self.components() {
            times.extend(r.breakpoints().iter().copied().filter(|&b| b <= horizon));
            times.extend(r.crest_times(horizon));
        }
        let mut settle = self.band + 2;
        match &self.transitions {
            Transitions::BirthDeath { birth, death } => {
                settle += birth
                    .multipliers
                    .settles_at()
                    .max(death.multipliers.settles_at());
            }
            Transitions::BatchArrivals { death, .. } => settle += death.multipliers.settles_at(),
            Transitions::BatchServices { birth, .. } => settle += birth.multipliers.settles_at(),
            Transitions::BatchBoth { .. } => {}
        }
        times
            .iter()
            .map(|&t| {
                let values = self.component_values(t);
                (0..=settle)
                    .map(|i| self.outflow(i, &values))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn transitions_multipliers(t: &Transitions) -> Vec<&Multipliers> {
    match t {
        Transitions::BirthDeath { birth, death } => vec![&birth.multipliers, &death.multipliers],
        Transitions::BatchArrivals { death, .. } => vec![&death.multipliers],
        Transitions::BatchServices { birth, .. } => vec![&birth.multipliers],
        Transitions::BatchBoth { .. } => vec![],
    }
}

/// Banded square matrix; entries with `|i - j| > band` are structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    size: usize,
    band: usize,
    data: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn zeros(size: usize, band: usize) -> Self {
        Self {
            size,
            band,
            data: vec![0.0; size * (2 * band + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i.abs_diff(j) > self.band || i >= self.size || j >= self.size {
            return None;
        }
        Some(i * (2 * self.band + 1) + j + self.band - i)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.size];
        for i in 0..self.size {
            let lo = i.saturating_sub(self.band);
            let hi = (i + self.band).min(self.size - 1);
            for (j, sum) in sums.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *sum += self.get(i, j);
            }
        }
        sums
    }

    /// `y += scale * A x`.
    pub fn mul_add(&self, scale: f64, x: &[f64], y: &mut [f64]) {
        let w = 2 * self.band + 1;
        for (i, yi) in y.iter_mut().enumerate().take(self.size) {
            let lo = i.saturating_sub(self.band);
            let hi = (i + self.band).min(self.size - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[j + self.band - i] * x[j];
            }
            *yi += scale * acc;
        }
    }

    /// `self += scale * other` for matrices of identical shape.
    pub fn add_scaled(&mut self, scale: f64, other: &GeneratorMatrix) {
        debug_assert_eq!(self.size, other.size);
        debug_assert_eq!(self.band, other.band);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// `A(t) = Σ_r ρ_r(t) A_r` at a fixed truncation.
#[derive(Debug, Clone)]
pub struct TimeGenerator {
    rates: Vec<RateFunction>,
    parts: Vec<GeneratorMatrix>,
}

impl TimeGenerator {
    pub fn size(&self) -> usize {
        self.parts[0].size()
    }

    pub fn rates(&self) -> &[RateFunction] {
        &self.rates
    }

    pub fn parts(&self) -> &[GeneratorMatrix] {
        &self.parts
    }

    pub fn at(&self, t: f64) -> GeneratorMatrix {
        let mut a = GeneratorMatrix::zeros(self.size(), self.parts[0].band());
        for (rate, part) in self.rates.iter().zip(&self.parts) {
            let v = rate.value(t);
            if v != 0.0 {
                a.add_scaled(v, part);
            }
        }
        a
    }

    /// `y = A(t) x`.
    pub fn apply(&self, t: f64, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (rate, part) in self.rates.iter().zip(&self.parts) {
            let v = rate.value(t);
            if v != 0.0 {
                part.mul_add(v, x, y);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> RateFunction {
        RateFunction::constant(v).unwrap()
    }

    #[test]
    fn birth_death_generator_matches_transcription() {
        let m = ChainModel::simple_birth_death(c(1.0), c(4.0)).unwrap();
        let a = m.generator(2, 0.7).unwrap();
        // columns [-1,1,0], [4,-5,1], [0,4,-4]
        let expected = [[-1.0, 4.0, 0.0], [1.0, -5.0, 4.0], [0.0, 1.0, -4.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(a.get(i, j), v, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn zero_rates_give_zero_matrix() {
        let models = [
            ChainModel::simple_birth_death(c(0.0), c(0.0)).unwrap(),
            ChainModel::batch_arrivals(vec![c(0.0); 3], StateRate::uniform(c(0.0))).unwrap(),
            ChainModel::batch_services(StateRate::uniform(c(0.0)), vec![c(0.0); 2]).unwrap(),
            ChainModel::batch_both(vec![c(0.0); 2], vec![c(0.0); 3]).unwrap(),
        ];
        for m in models {
            let a = m.generator(6, 1.0).unwrap();
            assert!(a.to_dense().iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pair_service_generator() {
        let m = ChainModel::pair_service(c(1.0), c(4.0)).unwrap();
        assert_eq!(m.band(), 2);
        let a = m.generator(3, 0.0).unwrap();
        let q = |i: usize, j: usize| a.get(j, i);
        for i in 0..=3usize {
            for j in 0..=3usize {
                if i == j {
                    continue;
                }
                let expected = if j == i + 1 {
                    1.0
                } else if i >= 2 && j == i - 2 {
                    4.0
                } else {
                    0.0
                };
                assert_eq!(q(i, j), expected, "q({i},{j})");
            }
        }
        assert_eq!(a.get(0, 0), -1.0);
        assert_eq!(a.get(1, 1), -1.0);
        assert_eq!(a.get(2, 2), -5.0);
        assert_eq!(a.get(3, 3), -4.0);
        assert!(a.column_sums().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn truncation_below_band_is_rejected() {
        let m = ChainModel::batch_both(vec![c(1.0); 3], vec![c(1.0); 3]).unwrap();
        assert!(matches!(
            m.generator(2, 0.0),
            Err(Error::TruncationTooSmall { n: 2, band: 3 })
        ));
        assert!(m.generator(3, -1.0).is_err());
    }

    #[test]
    fn intensity_bound_examples() {
        let m = ChainModel::simple_birth_death(c(1.0), c(4.0)).unwrap();
        assert_eq!(m.intensity_bound(10.0, 16), 5.0);
        let lam = RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.0).unwrap();
        let m = ChainModel::pair_service(lam, c(4.0)).unwrap();
        assert!((m.intensity_bound(1.0, 7) - 5.5).abs() < 1e-12);
        let m = ChainModel::simple_birth_death(c(0.0), c(0.0)).unwrap();
        assert_eq!(m.intensity_bound(1.0, 4), 0.0);
    }

    #[test]
    fn intensity_bound_sees_state_dependence() {
        let m = ChainModel::birth_death(
            StateRate::uniform(c(1.0)),
            StateRate::new(c(2.0), Multipliers::LinearCapped { cap: 3 }),
        )
        .unwrap();
        assert_eq!(m.intensity_bound(1.0, 2), 7.0);
    }

    #[test]
    fn band_can_be_widened_but_not_narrowed() {
        let t = Transitions::BatchServices {
            birth: StateRate::uniform(c(1.0)),
            services: vec![c(0.0), c(4.0)],
        };
        assert!(ChainModel::new(t.clone(), 1).is_err());
        let m = ChainModel::new(t, 4).unwrap();
        assert_eq!(m.components().len(), 5);
        assert_eq!(m.generator(5, 0.0).unwrap().band(), 4);
    }

    #[test]
    fn commensurate_periods() {
        let m = ChainModel::batch_both(
            vec![RateFunction::sinusoidal(1.0, 0.3, 2.0, 0.0).unwrap()],
            vec![RateFunction::sinusoidal(3.0, 0.3, 1.0, 0.5).unwrap()],
        )
        .unwrap();
        assert!((m.period().unwrap() - 1.0).abs() < 1e-15);
        let m = ChainModel::batch_both(
            vec![RateFunction::sinusoidal(1.0, 0.3, 2.0, 0.0).unwrap()],
            vec![RateFunction::sinusoidal(3.0, 0.3, std::f64::consts::PI, 0.5).unwrap()],
        )
        .unwrap();
        assert!(m.period().is_none());
    }

    #[test]
    fn time_generator_matches_direct_assembly() {
        let lam = RateFunction::sinusoidal(1.0, 0.5, 1.0, 0.2).unwrap();
        let m = ChainModel::batch_services(
            StateRate::new(
                lam,
                Multipliers::Explicit {
                    values: vec![1.0, 2.0, 0.5],
                },
            ),
            vec![c(0.3), c(1.2), c(0.7)],
        )
        .unwrap();
        let tg = m.time_generator(9).unwrap();
        for &t in &[0.0, 0.31, 2.9] {
            let direct = m.generator(9, t).unwrap();
            let combined = tg.at(t);
            for i in 0..10 {
                for j in 0..10 {
                    assert!((direct.get(i, j) - combined.get(i, j)).abs() < 1e-14);
                }
            }
        }
    }
}
