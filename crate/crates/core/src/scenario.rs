//! JSON scenario files.
//!
//! ```json
//! {
//!   "model": {
//!     "class": "III", "N": 150,
//!     "rates": {
//!       "lambda": {"kind": "const", "value": 1.0},
//!       "services": [{"kind": "const", "value": 0.0}, {"kind": "const", "value": 4.0}]
//!     }
//!   },
//!   "family": {"rule": "satin", "delta": 2.0},
//!   "analysis": {"S": 12, "horizon": 25.0, "grid": 512, "tol": 1e-10}
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{CertificateConfig, PatternSearch, ScalingFamily, ScalingRule};
use crate::chain::{ChainClass, ChainModel, Multipliers, StateRate};
use crate::error::{Error, Result};
use crate::rates::RateFunction;
use crate::solver::{extreme_pair, point_mass, uniform_grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    pub family: FamilySpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub class: ChainClass,
    /// Band limit; defaults to the longest jump of the rates given.
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    /// Truncation level: states `0..=N`.
    #[serde(rename = "N")]
    pub n: usize,
    pub rates: RatesSpec,
    #[serde(default)]
    pub multipliers: MultipliersSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<RateFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<RateFunction>,
    /// `a_1..a_R` (classes II and IV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<Vec<RateFunction>>,
    /// `b_1..b_R` (classes III and IV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<Vec<RateFunction>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipliersSpec {
    #[serde(default)]
    pub lambda: Multipliers,
    #[serde(default)]
    pub mu: Multipliers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub rule: ScalingRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    #[serde(rename = "S")]
    pub size: usize,
    pub horizon: f64,
    /// Number of points of the report grid on `[0, horizon]`.
    pub grid: usize,
    /// Certificate grid cells per period or per unit time.
    pub resolution: usize,
    pub tol: f64,
    pub search: PatternSearch,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Initial states of the report pair; defaults to `(0, min(50, N/3))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[usize; 2]>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        let c = CertificateConfig::default();
        Self {
            size: c.size,
            horizon: c.horizon,
            grid: 512,
            resolution: c.resolution,
            tol: crate::solver::DEFAULT_TOL,
            search: c.search,
            period: None,
            pair: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn required<T: Clone>(value: &Option<T>, path: &str, class: ChainClass) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::config(path, format!("required for class {}", class.name())))
}

fn forbidden<T>(value: &Option<T>, path: &str, class: ChainClass) -> Result<()> {
    match value {
        Some(_) => Err(Error::config(
            path,
            format!("not used by class {}", class.name()),
        )),
        None => Ok(()),
    }
}

fn nonempty(rates: Vec<RateFunction>, path: &str) -> Result<Vec<RateFunction>> {
    if rates.is_empty() {
        return Err(Error::config(path, "need at least one rate"));
    }
    Ok(rates)
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Checks every block; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let model = self.chain_model()?;
        if self.model.n < model.band() {
            return Err(Error::config(
                "model.N",
                format!(
                    "N = {} is below the band limit R = {}",
                    self.model.n,
                    model.band()
                ),
            ));
        }
        match (&self.family.delta, &self.family.delta_grid) {
            (None, None) => {
                return Err(Error::config("family", "need `delta` or `delta_grid`"));
            }
            (Some(d), _) if !(*d > 1.0) || !d.is_finite() => {
                return Err(Error::config(
                    "family.delta",
                    format!("need delta > 1, got {d}"),
                ));
            }
            _ => {}
        }
        if let Some(grid) = &self.family.delta_grid {
            if let Some((i, d)) = grid
                .iter()
                .enumerate()
                .find(|(_, d)| !(**d > 1.0) || !d.is_finite())
            {
                return Err(Error::config(
                    format!("family.delta_grid[{i}]"),
                    format!("need delta > 1, got {d}"),
                ));
            }
        }
        let a = &self.analysis;
        if a.size < model.band() + 2 {
            return Err(Error::config(
                "analysis.S",
                format!(
                    "S = {} too small; need S >= R + 2 = {}",
                    a.size,
                    model.band() + 2
                ),
            ));
        }
        if !(a.horizon > 0.0) || !a.horizon.is_finite() {
            return Err(Error::config("analysis.horizon", "must be positive"));
        }
        if a.grid < 2 {
            return Err(Error::config("analysis.grid", "need at least 2 points"));
        }
        if a.resolution == 0 {
            return Err(Error::config("analysis.resolution", "must be positive"));
        }
        if !(1e-12..=1e-6).contains(&a.tol) {
            return Err(Error::config(
                "analysis.tol",
                format!("{} outside [1e-12, 1e-6]", a.tol),
            ));
        }
        if let Some(p) = a.period {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::config("analysis.period", "must be positive"));
            }
        }
        if let Some([i, j]) = a.pair {
            if i > self.model.n || j > self.model.n {
                return Err(Error::config(
                    "analysis.pair",
                    format!("states must be <= N = {}", self.model.n),
                ));
            }
        }
        Ok(())
    }

    pub fn chain_model(&self) -> Result<ChainModel> {
        let m = &self.model;
        let r = &m.rates;
        let class = m.class;
        let mult = &m.multipliers;
        mult.lambda
            .validate()
            .map_err(|e| Error::config("model.multipliers.lambda", e.to_string()))?;
        mult.mu
            .validate()
            .map_err(|e| Error::config("model.multipliers.mu", e.to_string()))?;
        let birth = || -> Result<StateRate> {
            Ok(StateRate::new(
                required(&r.lambda, "model.rates.lambda", class)?,
                mult.lambda.clone(),
            ))
        };
        let death = || -> Result<StateRate> {
            Ok(StateRate::new(
                required(&r.mu, "model.rates.mu", class)?,
                mult.mu.clone(),
            ))
        };
        let arrivals = || {
            nonempty(
                required(&r.arrivals, "model.rates.arrivals", class)?,
                "model.rates.arrivals",
            )
        };
        let services = || {
            nonempty(
                required(&r.services, "model.rates.services", class)?,
                "model.rates.services",
            )
        };
        let transitions = match class {
            ChainClass::I => {
                forbidden(&r.arrivals, "model.rates.arrivals", class)?;
                forbidden(&r.services, "model.rates.services", class)?;
                crate::chain::Transitions::BirthDeath {
                    birth: birth()?,
                    death: death()?,
                }
            }
            ChainClass::II => {
                forbidden(&r.lambda, "model.rates.lambda", class)?;
                forbidden(&r.services, "model.rates.services", class)?;
                crate::chain::Transitions::BatchArrivals {
                    arrivals: arrivals()?,
                    death: death()?,
                }
            }
            ChainClass::III => {
                forbidden(&r.mu, "model.rates.mu", class)?;
                forbidden(&r.arrivals, "model.rates.arrivals", class)?;
                crate::chain::Transitions::BatchServices {
                    birth: birth()?,
                    services: services()?,
                }
            }
            ChainClass::IV => {
                forbidden(&r.lambda, "model.rates.lambda", class)?;
                forbidden(&r.mu, "model.rates.mu", class)?;
                crate::chain::Transitions::BatchBoth {
                    arrivals: arrivals()?,
                    services: services()?,
                }
            }
        };
        let natural = match &transitions {
            crate::chain::Transitions::BirthDeath { .. } => 1,
            crate::chain::Transitions::BatchArrivals { arrivals, .. } => arrivals.len(),
            crate::chain::Transitions::BatchServices { services, .. } => services.len(),
            crate::chain::Transitions::BatchBoth { arrivals, services } => {
                arrivals.len().max(services.len())
            }
        };
        let band = m.band.unwrap_or(natural);
        ChainModel::new(transitions, band).map_err(|e| Error::config("model.R", e.to_string()))
    }

    /// The family at the scenario's single `delta`.
    pub fn family(&self) -> Result<ScalingFamily> {
        let delta = self
            .family
            .delta
            .ok_or_else(|| Error::config("family.delta", "required for this command"))?;
        ScalingFamily::new(self.family.rule, delta)
    }

    /// The sweep grid; a single `delta` is a one-point grid.
    pub fn delta_grid(&self) -> Result<Vec<f64>> {
        match (&self.family.delta_grid, self.family.delta) {
            (Some(grid), _) if grid.is_empty() => Err(Error::EmptyGrid),
            (Some(grid), _) => Ok(grid.clone()),
            (None, Some(d)) => Ok(vec![d]),
            (None, None) => Err(Error::EmptyGrid),
        }
    }

    pub fn certificate_config(&self) -> CertificateConfig {
        CertificateConfig {
            size: self.analysis.size,
            horizon: self.analysis.horizon,
            resolution: self.analysis.resolution,
            search: self.analysis.search,
            period: self.analysis.period,
        }
    }

    /// `grid` equally spaced points on `[0, horizon]`.
    pub fn report_grid(&self) -> Vec<f64> {
        uniform_grid(self.analysis.horizon, self.analysis.grid - 1)
    }

    pub fn initial_pair(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.model.n;
        match self.analysis.pair {
            Some([i, j]) => (point_mass(n, i), point_mass(n, j)),
            None => extreme_pair(n),
        }
    }

    pub fn output_dir(&self) -> Option<&Path> {
        self.output.dir.as_deref()
    }
}
