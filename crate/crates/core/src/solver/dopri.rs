//! Dormand–Prince 5(4) with PI step control and 5th-order dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 10_000_000;

/// Right-hand side and error measure of a first-order system.
pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Error of a step scaled so that `<= 1` is acceptable.
    fn error_norm(&self, err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates from `grid[0]` to the last grid point, calling `emit(k, y(grid[k]))`
/// for every grid point. Steps never cross an entry of `stops`, where the
/// right-hand side may jump.
pub(crate) fn integrate_on_grid<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    grid: &[f64],
    stops: &[f64],
    tol: f64,
    mut emit: impl FnMut(usize, &[f64]),
) -> Result<StepStats> {
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut stats = StepStats::default();
    if grid.is_empty() {
        return Ok(stats);
    }
    let (t0, t_end) = (grid[0], grid[grid.len() - 1]);
    let mut segments = vec![t0];
    segments.extend(stops.iter().copied().filter(|&s| s > t0 && s < t_end));
    segments.push(t_end);
    segments.dedup();

    let mut y = y0.to_vec();
    let mut next = 0usize;
    while next < grid.len() && grid[next] <= t0 {
        emit(next, &y);
        next += 1;
    }

    let mut ws = Workspace::new(n);
    let mut h = f64::NAN;
    for seg in segments.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b <= a {
            continue;
        }
        sys.rhs(a, &y, &mut ws.k1);
        if !h.is_finite() {
            let f0 = ws.k1.clone();
            h = initial_step(sys, a, b, &y, &f0, tol, &mut ws);
        }
        let mut t = a;
        let mut fac_old = 1e-4f64;
        let mut last_rejected = false;
        while t < b {
            if stats.accepted + stats.rejected >= MAX_STEPS {
                return Err(Error::StepUnderflow {
                    start: a,
                    end: b,
                    step: h,
                });
            }
            let finishing = t + 1.01 * h >= b;
            let h_try = if finishing { b - t } else { h };
            if h_try <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow {
                    start: a,
                    end: b,
                    step: h_try,
                });
            }
            ws.step(sys, t, h_try, &y);
            let err = sys.error_norm(&ws.err, &y, &ws.y1, tol);
            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h_try / fac;
                if last_rejected {
                    h_new = h_new.min(h_try);
                }
                fac_old = err.max(1e-4);
                let t_new = if finishing { b } else { t + h_try };
                while next < grid.len() && grid[next] <= t_new {
                    let theta = ((grid[next] - t) / h_try).clamp(0.0, 1.0);
                    ws.dense(theta, h_try, &y);
                    if grid[next] == t_new {
                        emit(next, &ws.y1);
                    } else {
                        emit(next, &ws.yd);
                    }
                    next += 1;
                }
                y.copy_from_slice(&ws.y1);
                std::mem::swap(&mut ws.k1, &mut ws.k7);
                t = t_new;
                stats.accepted += 1;
                last_rejected = false;
                if !finishing {
                    h = h_new;
                }
            } else {
                let shrink = if err.is_finite() {
                    (fac11 / SAFETY).min(1.0 / FAC_MIN)
                } else {
                    1.0 / FAC_MIN
                };
                h = h_try / shrink;
                stats.rejected += 1;
                last_rejected = true;
            }
        }
    }
    while next < grid.len() {
        emit(next, &y);
        next += 1;
    }
    Ok(stats)
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    a: f64,
    b: f64,
    y: &[f64],
    f0: &[f64],
    tol: f64,
    ws: &mut Workspace,
) -> f64 {
    let span = b - a;
    let zero = vec![0.0; y.len()];
    // error norms of y and f measured like a local error
    let d0 = sys.error_norm(y, y, y, tol);
    let d1 = sys.error_norm(f0, y, y, tol);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    for ((t, &yi), &fi) in ws.tmp.iter_mut().zip(y).zip(f0) {
        *t = yi + h0 * fi;
    }
    sys.rhs(a + h0, &ws.tmp, &mut ws.k2);
    for ((e, &f1), &fi) in ws.err.iter_mut().zip(&ws.k2).zip(f0) {
        *e = f1 - fi;
    }
    let d2 = sys.error_norm(&ws.err, y, &zero, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    k5: Vec<f64>,
    k6: Vec<f64>,
    k7: Vec<f64>,
    tmp: Vec<f64>,
    y1: Vec<f64>,
    yd: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            k5: z(),
            k6: z(),
            k7: z(),
            tmp: z(),
            y1: z(),
            yd: z(),
            err: z(),
        }
    }

    /// One trial step from `(t, y)` with `k1 = f(t, y)` already stored.
    fn step<S: OdeSystem>(&mut self, sys: &S, t: f64, h: f64, y: &[f64]) {
        let n = y.len();
        for i in 0..n {
            self.tmp[i] = y[i] + h * A21 * self.k1[i];
        }
        sys.rhs(t + C2 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + h * (A31 * self.k1[i] + A32 * self.k2[i]);
        }
        sys.rhs(t + C3 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * (A41 * self.k1[i] + A42 * self.k2[i] + A43 * self.k3[i]);
        }
        sys.rhs(t + C4 * h, &self.tmp, &mut self.k4);
        for i in 0..n {
            self.tmp[i] = y[i]
                + h * (A51 * self.k1[i] + A52 * self.k2[i] + A53 * self.k3[i] + A54 * self.k4[i]);
        }
        sys.rhs(t + C5 * h, &self.tmp, &mut self.k5);
        for i in 0..n {
            self.tmp[i] = y[i]
                + h * (A61 * self.k1[i]
                    + A62 * self.k2[i]
                    + A63 * self.k3[i]
                    + A64 * self.k4[i]
                    + A65 * self.k5[i]);
        }
        sys.rhs(t + h, &self.tmp, &mut self.k6);
        for i in 0..n {
            self.y1[i] = y[i]
                + h * (A71 * self.k1[i]
                    + A73 * self.k3[i]
                    + A74 * self.k4[i]
                    + A75 * self.k5[i]
                    + A76 * self.k6[i]);
        }
        sys.rhs(t + h, &self.y1, &mut self.k7);
        for i in 0..n {
            self.err[i] = h
                * (E1 * self.k1[i]
                    + E3 * self.k3[i]
                    + E4 * self.k4[i]
                    + E5 * self.k5[i]
                    + E6 * self.k6[i]
                    + E7 * self.k7[i]);
        }
    }

    /// Dense output at `t + θh` into `yd`, after a successful `step`.
    fn dense(&mut self, theta: f64, h: f64, y: &[f64]) {
        let t1 = 1.0 - theta;
        for i in 0..y.len() {
            let ydiff = self.y1[i] - y[i];
            let bspl = h * self.k1[i] - ydiff;
            let r4 = ydiff - h * self.k7[i] - bspl;
            let r5 = h
                * (D1 * self.k1[i]
                    + D3 * self.k3[i]
                    + D4 * self.k4[i]
                    + D5 * self.k5[i]
                    + D6 * self.k6[i]
                    + D7 * self.k7[i]);
            self.yd[i] = y[i] + theta * (ydiff + t1 * (bspl + theta * (r4 + t1 * r5)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
        fn error_norm(&self, err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
            err[0].abs() / (tol * (1.0 + y0[0].abs().max(y1[0].abs())))
        }
    }

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn error_norm(&self, err: &[f64], _y0: &[f64], _y1: &[f64], tol: f64) -> f64 {
            err.iter().fold(0.0f64, |m, e| m.max(e.abs())) / tol
        }
    }

    #[test]
    fn exponential_decay_on_a_grid() {
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let mut out = vec![0.0; grid.len()];
        integrate_on_grid(&Decay(1.3), &[2.0], &grid, &[], 1e-11, |k, y| out[k] = y[0]).unwrap();
        for (t, v) in grid.iter().zip(&out) {
            assert!((v - 2.0 * (-1.3 * t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn dense_output_is_fifth_order_accurate() {
        // sparse steps, dense grid: interpolation error dominates
        let grid: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let mut worst = 0.0f64;
        integrate_on_grid(&Oscillator, &[0.0, 1.0], &grid, &[], 1e-10, |k, y| {
            worst = worst.max((y[0] - grid[k].sin()).abs());
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn stops_are_respected_and_grid_fully_emitted() {
        let grid = [0.0, 0.5, 1.0, 3.0];
        let mut seen = Vec::new();
        integrate_on_grid(&Decay(1.0), &[1.0], &grid, &[0.7, 2.0], 1e-10, |k, _| {
            seen.push(k)
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}
