//! Reduced, conjugated and rescaled forms of the generator.
//!
//! Matrix accessors use 1-based indices so that `get(i, j)` lines up with the
//! coordinates `p_1, p_2, …` of the reduced system.
//!
//! The closed form for class III was fixed by expanding
//! `b*_ij = Σ_{k≥i} (a_kj − a_{k,j−1})` (with `a_{k0}` in place of `a_{k,j−1}` for `j = 1`):
//!
//! * subdiagonal `b*_{r+1,r} = λ_r`,
//! * diagonal `b*_rr = −(λ_{r−1} + Σ_{i ≤ min(r,R)} b_i)`,
//! * upper triangle `b*_ij = b_{j−i} − b_j` for `j > i`, with `b_m = 0` outside `1..=R`,
//!
//! and every other entry is zero. The first row reads `(−(λ₀+b₁), b₁−b₂, b₂−b₃, …)`
//! and the second `(λ₁, −(λ₁+b₁+b₂), b₁−b₃, b₂−b₄, …)`.

use nalgebra::DMatrix;

use serde::Serialize;

use crate::chain::{ChainClass, ChainModel, GeneratorMatrix, Transitions};
use crate::error::{Error, Result};

/// `B(t)` with entries `a_ij − a_i0`, `i, j ∈ 1..=S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrix(DMatrix<f64>);

/// `B*(t) = T B(t) T⁻¹` (or any matrix in those coordinates, e.g. `B**`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatedMatrix(DMatrix<f64>);

macro_rules! square_accessors {
    ($ty:ident) => {
        impl $ty {
            pub fn from_dense(m: DMatrix<f64>) -> Self {
                assert!(m.is_square(), "matrix must be square");
                Self(m)
            }

            pub fn zeros(size: usize) -> Self {
                Self(DMatrix::zeros(size, size))
            }

            pub fn size(&self) -> usize {
                self.0.nrows()
            }

            /// Entry at 1-based `(i, j)`.
            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.0[(i - 1, j - 1)]
            }

            pub fn matrix(&self) -> &DMatrix<f64> {
                &self.0
            }

            pub fn into_matrix(self) -> DMatrix<f64> {
                self.0
            }
        }
    };
}

square_accessors!(ReducedMatrix);
square_accessors!(ConjugatedMatrix);

impl ConjugatedMatrix {
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i - 1, j - 1)] = v;
    }

    /// Largest `|b_ij|` with `|i − j| > band`.
    pub fn max_off_band(&self, band: usize) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                if i.abs_diff(j) > band {
                    worst = worst.max(self.0[(i, j)].abs());
                }
            }
        }
        worst
    }

    /// Sum of column `j` (1-based).
    pub fn column_sum(&self, j: usize) -> f64 {
        self.0.column(j - 1).sum()
    }

    /// Largest entrywise difference restricted to `1..=limit` in both indices,
    /// with the location of the worst entry (1-based).
    pub fn max_diff_on_block(&self, other: &ConjugatedMatrix, limit: usize) -> (f64, usize, usize) {
        let limit = limit.min(self.size()).min(other.size());
        let mut worst = (0.0, 1, 1);
        for i in 1..=limit {
            for j in 1..=limit {
                let d = (self.get(i, j) - other.get(i, j)).abs();
                if d > worst.0 || d.is_nan() {
                    worst = (d, i, j);
                }
            }
        }
        worst
    }
}

/// Eliminates `p_0` through normalization.
pub fn reduce(a: &GeneratorMatrix) -> ReducedMatrix {
    let s = a.size().saturating_sub(1);
    ReducedMatrix(DMatrix::from_fn(s, s, |i, j| {
        a.get(i + 1, j + 1) - a.get(i + 1, 0)
    }))
}

/// `T B T⁻¹` using the action of `T` (tail sums down each column) followed by the
/// right action of `T⁻¹` (differences of adjacent columns). No inversion.
pub fn conjugate_numeric(b: &ReducedMatrix) -> ConjugatedMatrix {
    let s = b.size();
    let mut tb = b.0.clone();
    for j in 0..s {
        for i in (0..s.saturating_sub(1)).rev() {
            tb[(i, j)] += tb[(i + 1, j)];
        }
    }
    let mut out = tb.clone();
    for j in 1..s {
        for i in 0..s {
            out[(i, j)] = tb[(i, j)] - tb[(i, j - 1)];
        }
    }
    ConjugatedMatrix(out)
}

/// Reference conjugation with explicit dense `T` and an LU inverse.
pub fn conjugate_dense(b: &ReducedMatrix) -> ConjugatedMatrix {
    let s = b.size();
    let t = DMatrix::from_fn(s, s, |i, j| if j >= i { 1.0 } else { 0.0 });
    let t_inv = t
        .clone()
        .lu()
        .try_inverse()
        .expect("upper unitriangular matrix is invertible");
    ConjugatedMatrix(&t * &b.0 * t_inv)
}

/// Displayed stencils of `B*(t)` for classes I and III, truncated to `S × S`.
///
/// These describe the infinite matrix; rows and columns within `R` of the
/// truncation edge differ from the numeric conjugation of a truncated generator.
pub fn bstar_closed_form(model: &ChainModel, size: usize, t: f64) -> Result<ConjugatedMatrix> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let mut out = ConjugatedMatrix::zeros(size);
    match model.transitions() {
        Transitions::BirthDeath { birth, death } => {
            let (lam, mu) = (birth.base.value(t), death.base.value(t));
            let lambda = |r: usize| lam * birth.multipliers.at(r);
            let mu_at = |r: usize| mu * death.multipliers.at(r);
            for r in 1..=size {
                out.set(r, r, -(lambda(r - 1) + mu_at(r)));
                if r < size {
                    out.set(r, r + 1, mu_at(r));
                    out.set(r + 1, r, lambda(r));
                }
            }
        }
        Transitions::BatchServices { birth, services } => {
            let lam = birth.base.value(t);
            let lambda = |r: usize| lam * birth.multipliers.at(r);
            let b: Vec<f64> = services.iter().map(|s| s.value(t)).collect();
            let band = b.len();
            let b_at = |m: usize| {
                if (1..=band).contains(&m) {
                    b[m - 1]
                } else {
                    0.0
                }
            };
            for r in 1..=size {
                let served: f64 = (1..=r.min(band)).map(b_at).sum();
                out.set(r, r, -(lambda(r - 1) + served));
                if r < size {
                    out.set(r + 1, r, lambda(r));
                }
                for j in r + 1..=size.min(r + band) {
                    out.set(r, j, b_at(j - r) - b_at(j));
                }
            }
        }
        Transitions::BatchArrivals { .. } => return Err(Error::NoClosedForm("II")),
        Transitions::BatchBoth { .. } => return Err(Error::NoClosedForm("IV")),
    }
    Ok(out)
}

/// `B** = D B* D⁻¹`, i.e. `b**_ij = (d_i / d_j) b*_ij`.
pub fn scale_d(bstar: &ConjugatedMatrix, d: &[f64]) -> Result<ConjugatedMatrix> {
    let s = bstar.size();
    if d.len() != s {
        return Err(Error::Dimension {
            expected: s,
            got: d.len(),
        });
    }
    if let Some(k) = d.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroScaling { index: k + 1 });
    }
    Ok(ConjugatedMatrix(DMatrix::from_fn(s, s, |i, j| {
        d[i] / d[j] * bstar.0[(i, j)]
    })))
}

/// `B*` of the chain truncated at `N = size`, computed from the generator.
pub fn bstar_numeric(model: &ChainModel, size: usize, t: f64) -> Result<ConjugatedMatrix> {
    let a = model.generator(size, t)?;
    Ok(conjugate_numeric(&reduce(&a)))
}

/// Unit-rate components of `B*`: `B*(t) = Σ_r ρ_r(t) B*_r` at truncation `N = size`.
pub fn bstar_components(model: &ChainModel, size: usize) -> Result<Vec<ConjugatedMatrix>> {
    let tg = model.time_generator(size)?;
    Ok(tg
        .parts()
        .iter()
        .map(|part| conjugate_numeric(&reduce(part)))
        .collect())
}

/// Independent reference for [`bstar_numeric`]: the displayed closed form for
/// classes I and III, the dense product `T B T⁻¹` otherwise.
pub fn oracle_reference(
    model: &ChainModel,
    size: usize,
    t: f64,
) -> Result<(OracleKind, ConjugatedMatrix)> {
    match model.class() {
        ChainClass::I | ChainClass::III => {
            Ok((OracleKind::ClosedForm, bstar_closed_form(model, size, t)?))
        }
        ChainClass::II | ChainClass::IV => Ok((
            OracleKind::DenseProduct,
            conjugate_dense(&reduce(&model.generator(size, t)?)),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ClosedForm,
    DenseProduct,
}
