//! Hamiltonian flow with its monodromy matrix and action.
//!
//! The state integrated is `(q, p, A, B, C, D, S)` where the monodromy
//! `M = [[A, B], [C, D]]` solves the variational equation and
//! `dS/dt = p . dq/dt - H`. Real and complex times share the same code
//! through [`Scalar`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorSpec, OdeRhs};
use crate::potential::Potential;
use crate::scalar::Scalar;

/// Largest configuration-space dimension supported by the flow.
pub const MAX_DIMENSION: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::Input("phase point has non-finite coordinates".into()));
        }
        Ok(Self { q, p })
    }

    /// Splits a `2d` vector `(q, p)`.
    pub fn from_slice(z: &[f64]) -> Self {
        let d = z.len() / 2;
        Self {
            q: z[..d].to_vec(),
            p: z[d..].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn energy(&self, pot: &Potential) -> f64 {
        pot.hamiltonian(&self.q, &self.p)
    }
}

/// End state of the flow `Phi^t` applied to a start point.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub time: f64,
    pub start: PhasePoint,
    pub end: PhasePoint,
    /// `d Phi^t` at `start`, in `(q, p)` block order.
    pub monodromy: DMatrix<f64>,
    /// `S(t, q, p) = int_0^t (p . dq/ds - H) ds`.
    pub action: f64,
    /// Relative energy change between start and end.
    pub energy_drift: f64,
}

impl FlowResult {
    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    /// The blocks `(A, B, C, D)` of the monodromy.
    pub fn blocks(&self) -> [DMatrix<f64>; 4] {
        split_blocks(&self.monodromy)
    }

    pub fn symplectic_residual(&self) -> f64 {
        symplectic_residual(&self.monodromy)
    }

    /// Max-norm residuals of `A^T C` symmetric, `A^T D - C^T B = I` and
    /// `B^T D` symmetric.
    pub fn block_identity_residuals(&self) -> [f64; 3] {
        let [a, b, c, d] = self.blocks();
        let atc = a.transpose() * &c;
        let btd = b.transpose() * &d;
        let cross = a.transpose() * &d - c.transpose() * &b - DMatrix::identity(self.dim(), self.dim());
        [
            (&atc - atc.transpose()).amax(),
            cross.amax(),
            (&btd - btd.transpose()).amax(),
        ]
    }
}

/// Partial derivatives of the action `S(t, q, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPartials {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
    pub dt: f64,
}

/// Splits a `2d x 2d` matrix into its `d x d` blocks `[A, B, C, D]`.
pub fn split_blocks<T: Scalar>(m: &DMatrix<T>) -> [DMatrix<T>; 4] {
    let d = m.nrows() / 2;
    [
        m.view((0, 0), (d, d)).into_owned(),
        m.view((0, d), (d, d)).into_owned(),
        m.view((d, 0), (d, d)).into_owned(),
        m.view((d, d), (d, d)).into_owned(),
    ]
}

/// The standard symplectic form `[[0, I], [-I, 0]]`.
pub fn symplectic_form(d: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        omega[(i, d + i)] = 1.0;
        omega[(d + i, i)] = -1.0;
    }
    omega
}

/// `max |M^T Omega M - Omega|`.
pub fn symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(m.nrows() / 2);
    (m.transpose() * &omega * m - omega).amax()
}

struct FlowSystem<'a> {
    pot: &'a Potential,
    d: usize,
}

impl<T: Scalar> OdeRhs<T> for FlowSystem<'_> {
    fn dim(&self) -> usize {
        state_len(self.d)
    }

    fn eval(&self, y: &[T], dy: &mut [T]) {
        let d = self.d;
        let dd = d * d;
        let (q, rest) = y.split_at(d);
        let (p, rest) = rest.split_at(d);
        let (a, rest) = rest.split_at(dd);
        let (b, rest) = rest.split_at(dd);
        let (c, rest) = rest.split_at(dd);
        let dmat = &rest[..dd];
        let mut grad = [T::zero(); MAX_DIMENSION];
        let mut curv = [T::zero(); MAX_DIMENSION];
        self.pot.gradient(q, &mut grad[..d]);
        self.pot.hessian_diagonal(q, &mut curv[..d]);

        let (dq, rest) = dy.split_at_mut(d);
        let (dp, rest) = rest.split_at_mut(d);
        let (da, rest) = rest.split_at_mut(dd);
        let (db, rest) = rest.split_at_mut(dd);
        let (dc, rest) = rest.split_at_mut(dd);
        let (ddm, ds) = rest.split_at_mut(dd);
        dq.copy_from_slice(p);
        for i in 0..d {
            dp[i] = -grad[i];
        }
        da.copy_from_slice(c);
        db.copy_from_slice(dmat);
        for i in 0..d {
            for j in 0..d {
                dc[i * d + j] = -curv[i] * a[i * d + j];
                ddm[i * d + j] = -curv[i] * b[i * d + j];
            }
        }
        let kinetic = p.iter().fold(T::zero(), |acc, v| acc + *v * *v);
        ds[0] = T::lift(0.5) * kinetic - self.pot.value(q);
    }
}

fn state_len(d: usize) -> usize {
    2 * d + 4 * d * d + 1
}

/// State along a (possibly complex-time) trajectory.
#[derive(Clone, Debug)]
pub(crate) struct TrajectoryState<T: Scalar> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub monodromy: DMatrix<T>,
    pub action: T,
}

/// Integrates to the times `fraction * t` for each sorted fraction in `[0, 1]`.
pub(crate) fn propagate<T: Scalar>(
    pot: &Potential,
    q0: &[T],
    p0: &[T],
    t: T,
    fractions: &[f64],
    spec: &IntegratorSpec,
) -> Result<Vec<TrajectoryState<T>>> {
    let d = pot.dimension();
    if q0.len() != d || p0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: q0.len().max(p0.len()),
        });
    }
    if d > MAX_DIMENSION {
        return Err(Error::Input(format!("dimension {d} exceeds {MAX_DIMENSION}")));
    }
    let length = t.modulus();
    if !length.is_finite() || length > spec.max_horizon {
        return Err(Error::Domain(format!(
            "|t| = {length} exceeds the maximum horizon {}",
            spec.max_horizon
        )));
    }
    let direction = if length == 0.0 { T::one() } else { t / T::lift(length) };
    let dd = d * d;
    let mut y0 = vec![T::zero(); state_len(d)];
    y0[..d].copy_from_slice(q0);
    y0[d..2 * d].copy_from_slice(p0);
    for i in 0..d {
        y0[2 * d + i * d + i] = T::one();
        y0[2 * d + 3 * dd + i * d + i] = T::one();
    }
    let stops: Vec<f64> = fractions.iter().map(|f| f * length).collect();
    let system = FlowSystem { pot, d };
    let (states, _) = integrate(&system, &y0, direction, &stops, spec)?;
    Ok(states.into_iter().map(|y| unpack(&y, d)).collect())
}

fn unpack<T: Scalar>(y: &[T], d: usize) -> TrajectoryState<T> {
    let dd = d * d;
    let block = |k: usize| DMatrix::from_row_slice(d, d, &y[2 * d + k * dd..2 * d + (k + 1) * dd]);
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for (k, (r, c)) in [(0, 0), (0, d), (d, 0), (d, d)].into_iter().enumerate() {
        m.view_mut((r, c), (d, d)).copy_from(&block(k));
    }
    TrajectoryState {
        q: y[..d].to_vec(),
        p: y[d..2 * d].to_vec(),
        monodromy: m,
        action: y[state_len(d) - 1],
    }
}

fn to_result(pot: &Potential, start: &PhasePoint, time: f64, st: TrajectoryState<f64>) -> FlowResult {
    let end = PhasePoint { q: st.q, p: st.p };
    let h0 = start.energy(pot);
    let h1 = end.energy(pot);
    let energy_drift = if h0 != 0.0 { ((h1 - h0) / h0).abs() } else { h1.abs() };
    FlowResult {
        time,
        start: start.clone(),
        end,
        monodromy: st.monodromy,
        action: st.action,
        energy_drift,
    }
}

fn check_point(pot: &Potential, pt: &PhasePoint) -> Result<()> {
    pot.validate()?;
    if pt.q.len() != pot.dimension() || pt.p.len() != pot.dimension() {
        return Err(Error::DimensionMismatch {
            expected: pot.dimension(),
            got: pt.q.len(),
        });
    }
    if pt.q.iter().chain(&pt.p).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite phase point".into()));
    }
    Ok(())
}

/// Flows `pt` for time `t` (negative times run backwards).
pub fn flow(pot: &Potential, pt: &PhasePoint, t: f64, spec: &IntegratorSpec) -> Result<FlowResult> {
    check_point(pot, pt)?;
    if !t.is_finite() {
        return Err(Error::Input("flow time must be finite".into()));
    }
    let st = propagate(pot, &pt.q, &pt.p, t, &[1.0], spec)?.remove(0);
    Ok(to_result(pot, pt, t, st))
}

/// Flow results at several times from one integration. The times must all
/// have the same sign and be sorted by increasing magnitude.
pub fn flow_samples(pot: &Potential, pt: &PhasePoint, times: &[f64], spec: &IntegratorSpec) -> Result<Vec<FlowResult>> {
    check_point(pot, pt)?;
    let Some(&last) = times.iter().max_by(|a, b| a.abs().total_cmp(&b.abs())) else {
        return Ok(Vec::new());
    };
    let same_sign = times.iter().all(|t| t * last >= 0.0);
    let sorted = times.windows(2).all(|w| w[0].abs() <= w[1].abs());
    if !same_sign || !sorted || !last.is_finite() {
        return Err(Error::Input(
            "sample times must share a sign and grow in magnitude".into(),
        ));
    }
    let fractions: Vec<f64> = if last == 0.0 {
        vec![0.0; times.len()]
    } else {
        times.iter().map(|t| t / last).collect()
    };
    let states = propagate(pot, &pt.q, &pt.p, last, &fractions, spec)?;
    Ok(times
        .iter()
        .zip(states)
        .map(|(t, st)| to_result(pot, pt, *t, st))
        .collect())
}

/// Partial derivatives of `S(t, q, p)` from the end state and monodromy:
/// `dS/dq = A^T p_t - p`, `dS/dp = B^T p_t`, `dS/dt = p_t . dq_t/dt - H`.
pub fn action_partials(pot: &Potential, pt: &PhasePoint, t: f64, spec: &IntegratorSpec) -> Result<ActionPartials> {
    let fr = flow(pot, pt, t, spec)?;
    let [a, b, _, _] = fr.blocks();
    let pt_end = nalgebra::DVector::from_column_slice(&fr.end.p);
    let dq = (a.transpose() * &pt_end)
        .iter()
        .zip(&pt.p)
        .map(|(x, p)| x - p)
        .collect();
    let dp = (b.transpose() * &pt_end).iter().copied().collect();
    let kinetic: f64 = fr.end.p.iter().map(|v| v * v).sum();
    let dt = kinetic - fr.end.energy(pot);
    Ok(ActionPartials { dq, dp, dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(q: f64, p: f64) -> PhasePoint {
        PhasePoint::new(vec![q], vec![p]).unwrap()
    }

    #[test]
    fn oscillator_flow_is_a_rotation() {
        let pot = Potential::harmonic(1);
        let t = 1.234;
        let fr = flow(&pot, &pt(0.7, -0.2), t, &IntegratorSpec::default()).unwrap();
        let (c, s) = (t.cos(), t.sin());
        assert!((fr.end.q[0] - (0.7 * c - 0.2 * s)).abs() < 1e-12);
        assert!((fr.end.p[0] - (-0.2 * c - 0.7 * s)).abs() < 1e-12);
        assert!((fr.monodromy[(0, 1)] - s).abs() < 1e-12);
        assert!((fr.monodromy[(1, 0)] + s).abs() < 1e-12);
    }

    #[test]
    fn oscillator_action_closed_form() {
        // S = (p_t q_t - p q) / 2 for the unit oscillator.
        let pot = Potential::harmonic(1);
        let fr = flow(&pot, &pt(0.4, 0.9), 2.1, &IntegratorSpec::default()).unwrap();
        let expected = 0.5 * (fr.end.p[0] * fr.end.q[0] - 0.9 * 0.4);
        assert!((fr.action - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let pot = Potential::cosine_perturbed(2, 0.2).unwrap();
        let p0 = PhasePoint::new(vec![0.1, 0.2], vec![0.3, -0.4]).unwrap();
        let fr = flow(&pot, &p0, 0.0, &IntegratorSpec::default()).unwrap();
        assert_eq!(fr.end, p0);
        assert_eq!(fr.monodromy, DMatrix::identity(4, 4));
        assert_eq!(fr.action, 0.0);
    }

    #[test]
    fn horizon_is_enforced() {
        let pot = Potential::harmonic(1);
        assert!(matches!(
            flow(&pot, &pt(1.0, 0.0), 25.0, &IntegratorSpec::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let pot = Potential::harmonic(2);
        assert!(matches!(
            flow(&pot, &pt(1.0, 0.0), 1.0, &IntegratorSpec::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn samples_agree_with_single_flows() {
        let pot = Potential::cosine_perturbed(1, 0.3).unwrap();
        let spec = IntegratorSpec::default();
        let start = pt(0.5, 0.8);
        let samples = flow_samples(&pot, &start, &[-0.5, -1.0, -2.0], &spec).unwrap();
        for s in &samples {
            let single = flow(&pot, &start, s.time, &spec).unwrap();
            assert!((s.end.q[0] - single.end.q[0]).abs() < 1e-11);
            assert!((s.action - single.action).abs() < 1e-11);
        }
        assert!(flow_samples(&pot, &start, &[1.0, -2.0], &spec).is_err());
    }

    #[test]
    fn cosine_energy_and_symplecticity() {
        let pot = Potential::cosine_perturbed(2, 0.5).unwrap();
        let start = PhasePoint::new(vec![0.9, -0.3], vec![0.2, 1.1]).unwrap();
        let fr = flow(&pot, &start, 5.0, &IntegratorSpec::default()).unwrap();
        assert!(fr.energy_drift < 1e-10);
        assert!(fr.symplectic_residual() < 1e-9);
        assert!(fr.block_identity_residuals().iter().all(|r| *r < 1e-9));
    }
}
