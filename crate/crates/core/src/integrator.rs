//! Adaptive Gragg-Bulirsch-Stoer extrapolation for autonomous ODEs.
//!
//! Each step runs the modified midpoint rule with 2, 4, ..., 16 substeps and
//! extrapolates the results in the squared substep size. With the number of
//! stages fixed this is an explicit Runge-Kutta scheme of order 16; the
//! difference to the order-14 tableau entry drives step-size control.
//!
//! The independent variable may be complex: integration runs along the ray
//! `t = direction * s` for real progress `s`, which is how critical times on
//! the imaginary axis are reached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const STAGES: usize = 8;

/// Tolerances and limits for the flow integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Largest admissible `|t|`.
    pub max_horizon: f64,
    pub initial_step: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 200_000,
            max_horizon: 20.0,
            initial_step: 0.1,
        }
    }
}

impl IntegratorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.max_steps > 0
            && self.max_horizon > 0.0
            && self.initial_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid integrator settings {self:?}")))
        }
    }
}

/// Right-hand side of an autonomous system `dy/dt = f(y)`.
pub trait OdeRhs<T: Scalar> {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[T], dy: &mut [T]);
}

/// Counters gathered during an integration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates from progress 0 along `t = direction * s` and returns the state
/// at every entry of `stops` (non-decreasing, non-negative progress values).
pub fn integrate<T: Scalar, F: OdeRhs<T>>(
    rhs: &F,
    y0: &[T],
    direction: T,
    stops: &[f64],
    spec: &IntegratorSpec,
) -> Result<(Vec<Vec<T>>, IntegrationStats)> {
    spec.validate()?;
    if y0.len() != rhs.dim() {
        return Err(Error::DimensionMismatch {
            expected: rhs.dim(),
            got: y0.len(),
        });
    }
    if stops.iter().any(|s| !s.is_finite() || *s < 0.0) || stops.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input(
            "integration stops must be finite, non-negative and sorted".into(),
        ));
    }
    let total = stops.last().copied().unwrap_or(0.0);
    let mut stepper = Stepper::new(rhs, direction, spec);
    let mut y = y0.to_vec();
    let mut s = 0.0;
    let mut h = spec.initial_step.min(total.max(f64::MIN_POSITIVE));
    let mut out = Vec::with_capacity(stops.len());
    let mut stats = IntegrationStats::default();
    for &stop in stops {
        while s < stop {
            if stats.accepted + stats.rejected >= spec.max_steps {
                return Err(Error::Integration {
                    steps: stats.accepted + stats.rejected,
                    reached: s,
                    requested: total,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = stop - s;
            let truncated = h >= remaining;
            let step = if truncated { remaining } else { h };
            let (y_new, err) = stepper.step(&y, step);
            if !err.is_finite() {
                return Err(Error::Integration {
                    steps: stats.accepted + stats.rejected,
                    reached: s,
                    requested: total,
                    reason: "non-finite state".into(),
                });
            }
            let factor = if err == 0.0 {
                4.0
            } else {
                (0.9 * err.powf(-1.0 / (2.0 * STAGES as f64 - 1.0))).clamp(0.2, 4.0)
            };
            if err <= 1.0 {
                stats.accepted += 1;
                y = y_new;
                s = if truncated { stop } else { s + step };
                h = if truncated { h.max(step * factor) } else { step * factor };
            } else {
                stats.rejected += 1;
                h = step * factor;
                if h < 1e-14 * total.max(1.0) {
                    return Err(Error::Integration {
                        steps: stats.accepted + stats.rejected,
                        reached: s,
                        requested: total,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

struct Stepper<'a, T: Scalar, F: OdeRhs<T>> {
    rhs: &'a F,
    direction: T,
    spec: &'a IntegratorSpec,
    /// Extrapolation tableau, `table[j][k]` for `k <= j`.
    table: Vec<Vec<Vec<T>>>,
    f0: Vec<T>,
    work: [Vec<T>; 3],
}

impl<'a, T: Scalar, F: OdeRhs<T>> Stepper<'a, T, F> {
    fn new(rhs: &'a F, direction: T, spec: &'a IntegratorSpec) -> Self {
        let n = rhs.dim();
        Self {
            rhs,
            direction,
            spec,
            table: (0..STAGES).map(|j| vec![vec![T::zero(); n]; j + 1]).collect(),
            f0: vec![T::zero(); n],
            work: [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]],
        }
    }

    /// Modified midpoint rule over `big` with `substeps` equal substeps,
    /// written into `table[row][0]`.
    fn midpoint(&mut self, y: &[T], big: f64, substeps: usize, row: usize) {
        let h = self.direction * T::lift(big / substeps as f64);
        let two_h = h + h;
        let n = y.len();
        let [prev, cur, f] = &mut self.work;
        prev.copy_from_slice(y);
        for i in 0..n {
            cur[i] = y[i] + h * self.f0[i];
        }
        for _ in 1..substeps {
            self.rhs.eval(cur, f);
            for i in 0..n {
                let next = prev[i] + two_h * f[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        self.rhs.eval(cur, f);
        let half = T::lift(0.5);
        let out = &mut self.table[row][0];
        for i in 0..n {
            out[i] = half * (cur[i] + prev[i] + h * f[i]);
        }
    }

    /// One extrapolated step; returns the new state and the scaled error.
    fn step(&mut self, y: &[T], big: f64) -> (Vec<T>, f64) {
        self.rhs.eval(y, &mut self.f0);
        let n = y.len();
        for j in 0..STAGES {
            self.midpoint(y, big, 2 * (j + 1), j);
            for k in 1..=j {
                let ratio = (j + 1) as f64 / (j + 1 - k) as f64;
                let denom = T::lift(ratio * ratio - 1.0);
                let (upper, lower) = self.table.split_at_mut(j);
                let older = &upper[j - 1][k - 1];
                let row = &mut lower[0];
                let (left, right) = row.split_at_mut(k);
                let newer = &left[k - 1];
                let target = &mut right[0];
                for i in 0..n {
                    target[i] = newer[i] + (newer[i] - older[i]) / denom;
                }
            }
        }
        let last = &self.table[STAGES - 1];
        let best = last[STAGES - 1].clone();
        let second = &last[STAGES - 2];
        let mut acc = 0.0;
        for i in 0..n {
            let scale = self.spec.atol + self.spec.rtol * y[i].modulus().max(best[i].modulus());
            let e = (best[i] - second[i]).modulus() / scale;
            acc += e * e;
        }
        (best, (acc / n as f64).sqrt())
    }
}
