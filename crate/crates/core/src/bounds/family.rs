use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signs `s_1..s_S` of the coordinates of `u(t)`; `s_1 = +1` after
/// factoring out the global flip.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignPattern(Vec<i8>);

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Self {
        debug_assert!(signs.iter().all(|&s| s == 1 || s == -1));
        Self(signs)
    }

    pub fn all_positive(size: usize) -> Self {
        Self(vec![1; size])
    }

    /// Pattern number `index` in lexicographic order (`+` before `−`) among
    /// patterns of length `size` with `s_1 = +`.
    pub fn from_index(index: u64, size: usize) -> Self {
        let mut signs = vec![1i8; size];
        for (k, s) in signs.iter_mut().enumerate().skip(1) {
            if (index >> (size - 1 - k)) & 1 == 1 {
                *s = -1;
            }
        }
        Self(signs)
    }

    /// Signs of `values`, treating `|v| <= dead_band` as `0`.
    pub fn key_with_dead_band(values: &[f64], dead_band: f64) -> Vec<i8> {
        values
            .iter()
            .map(|&v| {
                if v.abs() <= dead_band {
                    0
                } else if v > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of adjacent sign alternations.
    pub fn sign_changes(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Lexicographic comparison with `+` ordered before `−`.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match b.cmp(a) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl std::fmt::Display for SignPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.0 {
            f.write_str(if s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingRule {
    /// `|d_k| = δ^{k−1}` on every pattern.
    Geometric,
    /// `|d| = (1, 1/δ, δ, δ², …)` when `u_1` and `u_2` share a sign,
    /// `|d_k| = δ^{k−1}` otherwise.
    #[serde(rename = "satin")]
    SatinExample,
}

impl ScalingRule {
    pub fn name(self) -> &'static str {
        match self {
            ScalingRule::Geometric => "geometric",
            ScalingRule::SatinExample => "satin",
        }
    }
}

/// Rule assigning the diagonal `D` to each sign pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFamily {
    rule: ScalingRule,
    delta: f64,
}

/// Magnitude branch selected by a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Branch {
    Geometric,
    Satin,
}

impl ScalingFamily {
    pub fn new(rule: ScalingRule, delta: f64) -> Result<Self> {
        if !(delta > 1.0) || !delta.is_finite() {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self { rule, delta })
    }

    pub fn geometric(delta: f64) -> Result<Self> {
        Self::new(ScalingRule::Geometric, delta)
    }

    pub fn satin(delta: f64) -> Result<Self> {
        Self::new(ScalingRule::SatinExample, delta)
    }

    pub fn rule(&self) -> ScalingRule {
        self.rule
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Whether `|d_k|` is the same on every pattern.
    pub fn is_pattern_independent(&self) -> bool {
        self.rule == ScalingRule::Geometric
    }

    pub(crate) fn branch(&self, signs: &[i8]) -> Branch {
        match self.rule {
            ScalingRule::SatinExample if signs.len() < 2 || signs[0] == signs[1] => Branch::Satin,
            _ => Branch::Geometric,
        }
    }

    pub(crate) fn branches(&self) -> &'static [Branch] {
        match self.rule {
            ScalingRule::Geometric => &[Branch::Geometric],
            ScalingRule::SatinExample => &[Branch::Satin, Branch::Geometric],
        }
    }

    /// `|d_k|`, `k = 1..=size`, for a branch.
    pub(crate) fn branch_magnitudes(&self, branch: Branch, size: usize) -> Vec<f64> {
        let delta = self.delta;
        (1..=size)
            .map(|k| match (branch, k) {
                (Branch::Satin, 1) => 1.0,
                (Branch::Satin, 2) => 1.0 / delta,
                (Branch::Satin, k) => delta.powi(k as i32 - 2),
                (Branch::Geometric, k) => delta.powi(k as i32 - 1),
            })
            .collect()
    }

    pub fn magnitudes(&self, pattern: &SignPattern) -> Vec<f64> {
        self.branch_magnitudes(self.branch(pattern.signs()), pattern.len())
    }

    /// Signed diagonal `d_k = s_k |d_k|`.
    pub fn diagonal(&self, pattern: &SignPattern) -> Vec<f64> {
        self.magnitudes(pattern)
            .into_iter()
            .zip(pattern.signs())
            .map(|(m, &s)| m * f64::from(s))
            .collect()
    }

    /// `d = inf_k |d_k|` over all patterns of length `size`.
    pub fn d(&self, size: usize) -> f64 {
        self.branches()
            .iter()
            .flat_map(|&b| self.branch_magnitudes(b, size))
            .fold(f64::INFINITY, f64::min)
    }

    /// `d̂ = sup |d_k| / |d_m|` over patterns and adjacent `k, m`.
    pub fn d_hat(&self, size: usize) -> f64 {
        self.branches()
            .iter()
            .flat_map(|&b| {
                let m = self.branch_magnitudes(b, size);
                m.windows(2)
                    .flat_map(|w| [w[0] / w[1], w[1] / w[0]])
                    .collect::<Vec<_>>()
            })
            .fold(1.0, f64::max)
    }

    /// `d*(k) = max |d_i| / |d_m|` over patterns and `i, m <= k`, for `k = 1..=n`.
    pub fn d_star_weights(&self, n: usize) -> Vec<f64> {
        let mut weights = vec![1.0f64; n];
        for &b in self.branches() {
            let m = self.branch_magnitudes(b, n);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (k, &v) in m.iter().enumerate() {
                lo = lo.min(v);
                hi = hi.max(v);
                weights[k] = weights[k].max(hi / lo);
            }
        }
        weights
    }

    pub fn d_star(&self, size: usize) -> f64 {
        self.d_star_weights(size).last().copied().unwrap_or(1.0)
    }
}
