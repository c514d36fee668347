//! Midpoint map `Theta^t(z) = (z + Phi^t(z)) / 2`, its critical times on an
//! energy shell and the fold of `Theta` along the shell.
//!
//! For a query `w = (x, xi)` and energy `E`, a critical time `t` is one at
//! which the chord of an energy-`E` arc of duration `t` has midpoint `w`.
//! The search is nested: for fixed `t` the base point solves
//! `Theta^t(z) = w` by Newton's method, and `t` itself is the root of the
//! level function `h(t) - E` with `h(t) = H(z(t))`. The level function is
//! even and analytic in `tau = t^2`, so the root is sought in `tau`, which
//! keeps it well conditioned at the fold (`t -> 0`) and lets it continue
//! smoothly to negative `tau`, i.e. imaginary critical times, for queries
//! outside the shell.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::classical::{flow, flow_samples, propagate, FlowResult, PhasePoint, TrajectoryState};
use crate::error::{Error, Result};
use crate::integrator::IntegratorSpec;
use crate::potential::Potential;
use crate::scalar::Scalar;
use crate::specfun::gauss_legendre;

/// Controls for the nested critical-time search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// Accepted Newton residual, relative to `max(1, |w|)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Queries must satisfy `1 - H(w)/E <= tube_width`.
    pub tube_width: f64,
    /// Absolute tolerance of the outer root in `tau = t^2`.
    pub tau_tol: f64,
    /// Relative energy step for `dt/dE` finite differences.
    pub energy_step: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            newton_tol: 1e-11,
            newton_max_iter: 40,
            tube_width: 0.5,
            tau_tol: 1e-15,
            energy_step: 1e-3,
        }
    }
}

const ARC_SAMPLES: usize = 64;

/// Rounding allowance on the tube boundary, so that a query built at
/// exactly `s = 1 - tube_width` is accepted.
pub(crate) const TUBE_SLACK: f64 = 1e-12;

/// Positive critical time of a query inside the shell, with its arc.
#[derive(Clone, Debug)]
pub struct MidpointSolution {
    pub query: PhasePoint,
    pub energy: f64,
    /// `H(query) / E`.
    pub shell_fraction: f64,
    pub t_plus: f64,
    /// Start of the arc, `Theta^{t_plus}(base) = query`.
    pub base: PhasePoint,
    /// Flow of `base` over `[0, t_plus]`.
    pub flow: FlowResult,
    /// Uniform samples of the arc, `arc[k] = Phi^{k t_plus / 64}(base)`.
    pub arc: Vec<PhasePoint>,
    pub newton_residual: f64,
}

/// Oscillator reference values for `H = |x|^2/2 + |xi|^2/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorClosedForms {
    pub beta: f64,
    pub b_squared: f64,
    pub alpha0: f64,
    pub t_plus: f64,
    pub det_one_plus_m: f64,
    pub dt_de: f64,
    pub area: f64,
}

/// Result of probing `Theta` along the shell at `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    /// `|d/ds Theta(alpha(s))|` at `s = 0` for `alpha(s) = (2s, Phi^{-s}(z))`.
    pub kernel_residual: f64,
    /// Same for the wrong direction `alpha(s) = (s, z)`, which equals `|Xi_H| / 2`.
    pub off_kernel_residual: f64,
    /// Determinant of `d Theta` restricted to `R x T Sigma_E` at `t = 0`.
    pub jacobian_det_theta: f64,
}

fn check_inputs(pot: &Potential, query: &PhasePoint, energy: f64) -> Result<()> {
    pot.validate()?;
    if query.dim() != pot.dimension() {
        return Err(Error::DimensionMismatch {
            expected: pot.dimension(),
            got: query.dim(),
        });
    }
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::Input(format!("energy {energy} must be positive")));
    }
    Ok(())
}

/// Inverse of the oscillator midpoint map for a frequency `omega` per axis,
/// generic so that it also seeds complex-time solves.
pub(crate) fn harmonic_seed<T: Scalar>(pot: &Potential, w: &[T], t: T) -> Vec<T> {
    let d = w.len() / 2;
    let freqs = pot.harmonic_frequencies();
    let mut z = vec![T::zero(); 2 * d];
    for k in 0..d {
        let om = T::lift(freqs[k]);
        let tn = (om * t * T::lift(0.5)).tan();
        z[k] = w[k] - tn * w[d + k] / om;
        z[d + k] = w[d + k] + tn * om * w[k];
    }
    z
}

/// Inverse of the unit-oscillator midpoint map: `q = x - tan(t/2) xi`,
/// `p = xi + tan(t/2) x`.
pub fn oscillator_inverse_midpoint(query: &PhasePoint, t: f64) -> PhasePoint {
    let tn = (t / 2.0).tan();
    PhasePoint {
        q: query.q.iter().zip(&query.p).map(|(x, xi)| x - tn * xi).collect(),
        p: query.p.iter().zip(&query.q).map(|(xi, x)| xi + tn * x).collect(),
    }
}

/// Newton solve of `Theta^t(z) = w`, generic over real and complex time.
pub(crate) fn invert_generic<T: Scalar>(
    pot: &Potential,
    w: &[T],
    t: T,
    seed: Vec<T>,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<(Vec<T>, TrajectoryState<T>, f64)> {
    let n = w.len();
    let d = n / 2;
    let scale = w.iter().fold(1.0f64, |m, v| m.max(v.modulus()));
    let residual_of = |z: &[T]| -> Result<(TrajectoryState<T>, Vec<T>, f64)> {
        let st = propagate(pot, &z[..d], &z[d..], t, &[1.0], integ)?.remove(0);
        let half = T::lift(0.5);
        let f: Vec<T> = (0..n)
            .map(|i| {
                let end = if i < d { st.q[i] } else { st.p[i - d] };
                half * (z[i] + end) - w[i]
            })
            .collect();
        let norm = f.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
        Ok((st, f, norm))
    };
    let mut z = seed;
    let (mut st, mut f, mut res) = residual_of(&z)?;
    let mut history = vec![res];
    for _ in 0..solver.newton_max_iter {
        if res <= 1e-15 * scale {
            break;
        }
        let jac = (DMatrix::identity(n, n) + &st.monodromy) * T::lift(0.5);
        let Some(step) = jac.lu().solve(&DVector::from_vec(f.clone())) else {
            return Err(Error::Solver {
                message: "singular midpoint Jacobian".into(),
                residuals: history,
            });
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let trial: Vec<T> = z
                .iter()
                .zip(step.iter())
                .map(|(a, b)| *a - *b * T::lift(lambda))
                .collect();
            let (st_t, f_t, res_t) = residual_of(&trial)?;
            if res_t < res {
                z = trial;
                st = st_t;
                f = f_t;
                res = res_t;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        history.push(res);
        if !improved {
            break;
        }
    }
    if res <= solver.newton_tol * scale {
        Ok((z, st, res))
    } else {
        Err(Error::Solver {
            message: format!("midpoint inversion stalled at residual {res:e}"),
            residuals: history,
        })
    }
}

/// Solves `Theta^t(z) = query` for `z`, starting from `seed` or from the
/// harmonic inverse.
pub fn invert_midpoint_map(
    pot: &Potential,
    query: &PhasePoint,
    t: f64,
    seed: Option<&PhasePoint>,
    integ: &IntegratorSpec,
) -> Result<PhasePoint> {
    check_inputs(pot, query, 1.0)?;
    let w = query.to_vec();
    let seed = seed
        .map(PhasePoint::to_vec)
        .unwrap_or_else(|| harmonic_seed(pot, &w, t));
    let (z, _, _) = invert_generic(pot, &w, t, seed, integ, &SolverSpec::default())?;
    Ok(PhasePoint::from_slice(&z))
}

/// Critical time as a complex number from `tau = t^2`: `sqrt(tau)` for
/// `tau >= 0`, `i sqrt(-tau)` otherwise.
pub(crate) fn time_from_tau(tau: f64) -> Complex64 {
    if tau >= 0.0 {
        Complex64::new(tau.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-tau).sqrt())
    }
}

/// Base point and flow at the time encoded by `tau`, plus `h = H(base)`.
pub(crate) struct LevelPoint {
    pub time: Complex64,
    pub base: Vec<Complex64>,
    pub state: TrajectoryState<Complex64>,
    pub level: f64,
    pub residual: f64,
}

pub(crate) fn level_point(
    pot: &Potential,
    query: &PhasePoint,
    tau: f64,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<LevelPoint> {
    let d = query.dim();
    let time = time_from_tau(tau);
    let to_complex = |v: &[f64]| v.iter().map(|x| Complex64::new(*x, 0.0)).collect::<Vec<_>>();
    if tau >= 0.0 {
        let w = query.to_vec();
        let seed = harmonic_seed(pot, &w, time.re);
        let (z, st, residual) = invert_generic(pot, &w, time.re, seed, integ, solver)?;
        let level = pot.hamiltonian(&z[..d], &z[d..]);
        let state = TrajectoryState {
            q: to_complex(&st.q),
            p: to_complex(&st.p),
            monodromy: st.monodromy.map(|v| Complex64::new(v, 0.0)),
            action: Complex64::new(st.action, 0.0),
        };
        Ok(LevelPoint {
            time,
            base: to_complex(&z),
            state,
            level,
            residual,
        })
    } else {
        let w = to_complex(&query.to_vec());
        let seed = harmonic_seed(pot, &w, time);
        let (z, state, residual) = invert_generic(pot, &w, time, seed, integ, solver)?;
        let level = pot.hamiltonian(&z[..d], &z[d..]).re;
        Ok(LevelPoint {
            time,
            base: z,
            state,
            level,
            residual,
        })
    }
}

/// Root `tau = t^2` of `h(t) = E`; negative for queries outside the shell.
pub(crate) fn critical_tau(
    pot: &Potential,
    query: &PhasePoint,
    energy: f64,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<f64> {
    let h0 = query.energy(pot);
    let gap = h0 - energy;
    if gap == 0.0 {
        return Ok(0.0);
    }
    let omega_max = pot.harmonic_frequencies().into_iter().fold(0.0f64, f64::max);
    let s = h0 / energy;
    // Harmonic estimate of tau, then expand until the level function changes sign.
    let estimate = if s < 1.0 {
        (2.0 * (1.0 - s).sqrt().asin() / omega_max).powi(2)
    } else {
        -(2.0 * s.sqrt().acosh() / omega_max).powi(2)
    };
    let tau_limit = (0.98 * std::f64::consts::PI / omega_max).powi(2);
    let error: RefCell<Option<Error>> = RefCell::new(None);
    let g = |tau: f64| -> f64 {
        match level_point(pot, query, tau, integ, solver) {
            Ok(lp) => lp.level - energy,
            Err(e) => {
                error.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let mut far = 1.5 * estimate + 1e-3 * estimate.signum();
    let mut g_far = f64::NAN;
    for _ in 0..30 {
        if far.abs() > tau_limit {
            far = tau_limit * far.signum();
        }
        g_far = g(far);
        if g_far.is_nan() || g_far * gap < 0.0 || far.abs() >= tau_limit {
            break;
        }
        far *= 2.0;
    }
    if let Some(e) = error.borrow_mut().take() {
        return Err(e);
    }
    if g_far * gap > 0.0 {
        return Err(Error::Domain(format!(
            "no critical time with |t| below {:.3} for energy fraction {s}",
            tau_limit.sqrt()
        )));
    }
    let (lo, hi) = if far > 0.0 { (0.0, far) } else { (far, 0.0) };
    let mut conv = SimpleConvergency {
        eps: solver.tau_tol,
        max_iter: 200,
    };
    let root = find_root_brent(lo, hi, g, &mut conv);
    if let Some(e) = error.borrow_mut().take() {
        return Err(e);
    }
    root.map_err(|e| Error::Solver {
        message: format!("critical-time root search failed: {e:?}"),
        residuals: vec![],
    })
}

/// Finds the positive critical time and arc for a query inside the shell.
pub fn solve_midpoint(
    query: &PhasePoint,
    energy: f64,
    pot: &Potential,
    integ: &IntegratorSpec,
) -> Result<MidpointSolution> {
    solve_midpoint_with(query, energy, pot, integ, &SolverSpec::default())
}

pub fn solve_midpoint_with(
    query: &PhasePoint,
    energy: f64,
    pot: &Potential,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<MidpointSolution> {
    check_inputs(pot, query, energy)?;
    let s = query.energy(pot) / energy;
    if s > 1.0 {
        return Err(Error::Domain(format!("query lies outside the shell (H/E = {s})")));
    }
    if 1.0 - s > solver.tube_width + TUBE_SLACK {
        return Err(Error::Domain(format!(
            "query is outside the tube: 1 - H/E = {} exceeds {}",
            1.0 - s,
            solver.tube_width
        )));
    }
    let tau = critical_tau(pot, query, energy, integ, solver)?.max(0.0);
    let lp = level_point(pot, query, tau, integ, solver)?;
    let base = PhasePoint::from_slice(&lp.base.iter().map(|v| v.re).collect::<Vec<_>>());
    let t_plus = lp.time.re;
    let times: Vec<f64> = (0..=ARC_SAMPLES)
        .map(|k| t_plus * k as f64 / ARC_SAMPLES as f64)
        .collect();
    let samples = flow_samples(pot, &base, &times, integ)?;
    let arc = samples.iter().map(|fr| fr.end.clone()).collect();
    let flow = samples.into_iter().last().expect("arc has samples");
    Ok(MidpointSolution {
        query: query.clone(),
        energy,
        shell_fraction: s,
        t_plus,
        base,
        flow,
        arc,
        newton_residual: lp.residual,
    })
}

/// `d tau / dE` at the query by Richardson-extrapolated central differences.
pub(crate) fn dtau_de(
    pot: &Potential,
    query: &PhasePoint,
    energy: f64,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<f64> {
    let central = |delta: f64| -> Result<f64> {
        let up = critical_tau(pot, query, energy + delta, integ, solver)?;
        let down = critical_tau(pot, query, energy - delta, integ, solver)?;
        Ok((up - down) / (2.0 * delta))
    };
    let delta = solver.energy_step * energy;
    let coarse = central(delta)?;
    let fine = central(delta / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `d t_plus / dE` at fixed query, by finite differences of `tau(E)` and
/// `dt/dE = (d tau / dE) / (2 t)`.
pub fn dt_de(sol: &MidpointSolution, pot: &Potential, integ: &IntegratorSpec) -> Result<f64> {
    if sol.t_plus <= 0.0 {
        return Err(Error::Degenerate("dt/dE diverges on the shell".into()));
    }
    let slope = dtau_de(pot, &sol.query, sol.energy, integ, &SolverSpec::default())?;
    Ok(slope / (2.0 * sol.t_plus))
}

/// Derivative of the level function, `h'(t) = grad H(z) . dz/dt` with
/// `dz/dt = -(I + M)^{-1} Xi_H(Phi^t z)` from the implicit function theorem.
pub fn level_slope(pot: &Potential, base: &PhasePoint, fr: &FlowResult) -> Result<f64> {
    let d = base.dim();
    let n = 2 * d;
    let mut grad_end = vec![0.0; d];
    pot.gradient(&fr.end.q, &mut grad_end);
    let mut field = DVector::zeros(n);
    for k in 0..d {
        field[k] = fr.end.p[k];
        field[d + k] = -grad_end[k];
    }
    let jac = DMatrix::identity(n, n) + &fr.monodromy;
    let dz = jac
        .lu()
        .solve(&field)
        .ok_or_else(|| Error::Degenerate("1 + M is singular".into()))?;
    let mut grad_base = vec![0.0; d];
    pot.gradient(&base.q, &mut grad_base);
    let dot: f64 = (0..d).map(|k| grad_base[k] * dz[k] + base.p[k] * dz[d + k]).sum();
    Ok(-dot)
}

/// `dt/dE` as `1 / h'(t_plus)`, an independent route to [`dt_de`].
pub fn dt_de_jacobi(sol: &MidpointSolution, pot: &Potential) -> Result<f64> {
    let slope = level_slope(pot, &sol.base, &sol.flow)?;
    if slope == 0.0 {
        return Err(Error::Degenerate("level function is stationary".into()));
    }
    Ok(1.0 / slope)
}

/// Signed symplectic area enclosed by the arc and its chord, computed as
/// `int_arc p dq` (Gauss-Legendre in time) plus the straight closing chord.
pub fn chord_area(sol: &MidpointSolution, pot: &Potential, integ: &IntegratorSpec) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(48);
    let t = sol.t_plus;
    let times: Vec<f64> = nodes.iter().map(|x| t * (x + 1.0) / 2.0).collect();
    let samples = flow_samples(pot, &sol.base, &times, integ)?;
    let arc: f64 = samples
        .iter()
        .zip(&weights)
        .map(|(fr, w)| w * fr.end.p.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        * t
        / 2.0;
    let start = &sol.base;
    let end = &sol.flow.end;
    let closing: f64 = (0..start.dim())
        .map(|k| 0.5 * (start.p[k] + end.p[k]) * (start.q[k] - end.q[k]))
        .sum();
    Ok(arc + closing)
}

/// Probes the fold of `(t, z) -> Theta^t(z)` at a shell point.
pub fn fold_diagnostics(pt: &PhasePoint, pot: &Potential, integ: &IntegratorSpec) -> Result<FoldDiagnostics> {
    pot.validate()?;
    let d = pt.dim();
    let h = 1e-4;
    // Theta along alpha(s) = (2s, Phi^{-s} z), composing the two flows
    // rather than shortcutting Phi^{2s} Phi^{-s} = Phi^{s}.
    let theta_along = |s: f64| -> Result<Vec<f64>> {
        let w = flow(pot, pt, -s, integ)?.end;
        let image = flow(pot, &w, 2.0 * s, integ)?.end;
        Ok(w.to_vec()
            .iter()
            .zip(image.to_vec())
            .map(|(a, b)| 0.5 * (a + b))
            .collect())
    };
    let kernel_residual = theta_along(h)?
        .iter()
        .zip(&theta_along(-h)?)
        .map(|(a, b)| ((a - b) / (2.0 * h)).abs())
        .fold(0.0, f64::max);
    let fwd = flow(pot, pt, h, integ)?.end.to_vec();
    let bwd = flow(pot, pt, -h, integ)?.end.to_vec();

    let z = pt.to_vec();
    let off: Vec<f64> = z.iter().zip(&fwd).map(|(a, b)| 0.5 * (a + b)).collect();
    let off_back: Vec<f64> = z.iter().zip(&bwd).map(|(a, b)| 0.5 * (a + b)).collect();
    let off_kernel_residual = off
        .iter()
        .zip(&off_back)
        .map(|(a, b)| ((a - b) / (2.0 * h)).abs())
        .fold(0.0, f64::max);

    // Columns: dTheta/dt = Xi_H / 2 and dTheta/dz = I applied to a basis of
    // the tangent space of the shell (orthogonal complement of grad H).
    let mut grad = vec![0.0; d];
    pot.gradient(&pt.q, &mut grad);
    let normal = DVector::from_iterator(2 * d, grad.iter().chain(&pt.p).copied());
    let mut field = DVector::zeros(2 * d);
    for k in 0..d {
        field[k] = 0.5 * pt.p[k];
        field[d + k] = -0.5 * grad[k];
    }
    let unit = normal.normalize();
    let projector = DMatrix::identity(2 * d, 2 * d) - &unit * unit.transpose();
    let svd = projector.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..2 * d).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let mut jac = DMatrix::zeros(2 * d, 2 * d);
    jac.set_column(0, &field);
    for (col, idx) in order.iter().take(2 * d - 1).enumerate() {
        jac.set_column(col + 1, &u.column(*idx));
    }
    Ok(FoldDiagnostics {
        kernel_residual,
        off_kernel_residual,
        jacobian_det_theta: jac.determinant(),
    })
}

/// Unit-oscillator quantities at energy fraction `s = H/E` in `(0, 1]`.
///
/// `alpha` is the exponent of the `s^{(1 - alpha)/2}` factor in `alpha0`.
pub fn oscillator_closed_forms(s: f64, energy: f64, dimension: usize, alpha: f64) -> Result<OscillatorClosedForms> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::Domain(format!("energy fraction {s} outside (0, 1]")));
    }
    if !(energy > 0.0) || dimension == 0 {
        return Err(Error::Input("energy and dimension must be positive".into()));
    }
    // arcsin of sqrt(1 - s) stays accurate as s -> 1, unlike arccos of sqrt(s).
    let half_angle = (1.0 - s).sqrt().asin();
    let t_plus = 2.0 * half_angle;
    let beta = 0.5 * (half_angle - (s * (1.0 - s)).sqrt());
    let b_squared = -(1.5 * beta).powf(2.0 / 3.0);
    let (alpha0, dt_de) = if s == 1.0 {
        (2f64.powf(1.0 / 3.0), f64::INFINITY)
    } else {
        let b_abs = (-b_squared).sqrt();
        (
            s.powf((1.0 - alpha) / 2.0) * (2.0 * b_abs).sqrt() / ((1.0 - s).powf(0.25) * s.powf(0.75)),
            s.sqrt() / (energy * (1.0 - s).sqrt()),
        )
    };
    Ok(OscillatorClosedForms {
        beta,
        b_squared,
        alpha0,
        t_plus,
        det_one_plus_m: (2.0 * (1.0 + t_plus.cos())).powi(dimension as i32),
        dt_de,
        area: energy * (t_plus - t_plus.sin()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> IntegratorSpec {
        IntegratorSpec::default()
    }

    fn point(x: f64, xi: f64) -> PhasePoint {
        PhasePoint::new(vec![x], vec![xi]).unwrap()
    }

    #[test]
    fn oscillator_inverse_composes_to_identity() {
        let pot = Potential::harmonic(1);
        for t in [0.3, 1.0, 2.5, -1.7] {
            let w = point(0.4, -0.65);
            let z = oscillator_inverse_midpoint(&w, t);
            let end = flow(&pot, &z, t, &spec()).unwrap().end;
            assert!((0.5 * (z.q[0] + end.q[0]) - w.q[0]).abs() < 1e-12, "t = {t}");
            assert!((0.5 * (z.p[0] + end.p[0]) - w.p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillator_critical_time_matches_closed_form() {
        let pot = Potential::harmonic(1);
        let energy: f64 = 1.0;
        for s in [0.55f64, 0.8, 0.95, 0.999] {
            let r = (2.0 * s * energy).sqrt();
            let w = point(r * 0.3f64.cos(), r * 0.3f64.sin());
            let sol = solve_midpoint(&w, energy, &pot, &spec()).unwrap();
            let expected = 2.0 * (1.0 - s).sqrt().asin();
            assert!(
                (sol.t_plus - expected).abs() < 1e-10,
                "s = {s}: {} vs {expected}",
                sol.t_plus
            );
            assert!((sol.base.energy(&pot) - energy).abs() < 1e-12);
        }
    }

    #[test]
    fn query_on_shell_has_zero_time() {
        let pot = Potential::harmonic(1);
        let w = point(1.0, 1.0);
        let sol = solve_midpoint(&w, 1.0, &pot, &spec()).unwrap();
        assert_eq!(sol.t_plus, 0.0);
        assert_eq!(sol.base, w);
    }

    #[test]
    fn outside_and_far_queries_are_rejected() {
        let pot = Potential::harmonic(1);
        assert!(matches!(
            solve_midpoint(&point(1.0, 1.1), 1.0, &pot, &spec()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_midpoint(&point(0.1, 0.1), 1.0, &pot, &spec()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dt_de_routes_agree_with_closed_form() {
        let pot = Potential::harmonic(1);
        let s: f64 = 0.9;
        let w = point((2.0 * s).sqrt(), 0.0);
        let sol = solve_midpoint(&w, 1.0, &pot, &spec()).unwrap();
        let exact = s.sqrt() / (1.0 - s).sqrt();
        let fd = dt_de(&sol, &pot, &spec()).unwrap();
        let jac = dt_de_jacobi(&sol, &pot).unwrap();
        assert!((fd / exact - 1.0).abs() < 1e-7, "{fd} vs {exact}");
        assert!((jac / exact - 1.0).abs() < 1e-9, "{jac} vs {exact}");
    }

    #[test]
    fn cosine_dt_de_routes_agree() {
        let pot = Potential::cosine_perturbed(1, 0.3).unwrap();
        let w = point(0.9, 0.8);
        let energy = w.energy(&pot) / 0.85;
        let sol = solve_midpoint(&w, energy, &pot, &spec()).unwrap();
        let fd = dt_de(&sol, &pot, &spec()).unwrap();
        let jac = dt_de_jacobi(&sol, &pot).unwrap();
        assert!((fd / jac - 1.0).abs() < 1e-7, "{fd} vs {jac}");
    }

    #[test]
    fn chord_area_matches_oscillator_segment() {
        let pot = Potential::harmonic(1);
        let energy: f64 = 1.3;
        let s: f64 = 0.7;
        let r = (2.0 * s * energy).sqrt();
        let w = point(r * 1.1f64.cos(), r * 1.1f64.sin());
        let sol = solve_midpoint(&w, energy, &pot, &spec()).unwrap();
        let t = sol.t_plus;
        let area = chord_area(&sol, &pot, &spec()).unwrap();
        assert!((area / (energy * (t - t.sin())) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn closed_forms_near_shell() {
        let cf = oscillator_closed_forms(1.0 - 1e-6, 1.0, 1, 1.0).unwrap();
        assert!((cf.alpha0 / 2f64.powf(1.0 / 3.0) - 1.0).abs() < 1e-5);
        // B^2(1 + t) ~ 2^{-2/3} t for small t.
        assert!((cf.b_squared / (-1e-6 * 2f64.powf(-2.0 / 3.0)) - 1.0).abs() < 1e-5);
        assert!((cf.det_one_plus_m - 4.0 * (1.0 - 1e-6)).abs() < 1e-12);
        let at = oscillator_closed_forms(1.0, 1.0, 1, 1.0).unwrap();
        assert_eq!(at.t_plus, 0.0);
        assert!(oscillator_closed_forms(1.2, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn fold_kernel_vector() {
        let pot = Potential::cosine_perturbed(1, 0.2).unwrap();
        let pt = point(0.6, -0.9);
        let fd = fold_diagnostics(&pt, &pot, &spec()).unwrap();
        assert!(fd.kernel_residual < 1e-8, "{}", fd.kernel_residual);
        let mut grad = [0.0];
        pot.gradient(&pt.q, &mut grad);
        let half_field = 0.5 * pt.p[0].abs().max(grad[0].abs());
        assert!((fd.off_kernel_residual - half_field).abs() < 1e-7);
        assert!(fd.jacobian_det_theta.abs() < 1e-12);
    }
}
