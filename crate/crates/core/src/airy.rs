//! Airy-layer prediction of smoothed Wigner functions near an energy shell.
//!
//! Near the fold the two critical times `+-t` of the phase `Psi_E(t)`
//! coalesce. Their critical values give the normal-form coordinate `rho`
//! through `rho^{3/2} = (3/4)(phi_upper - phi_lower)`, and the smoothed
//! Wigner function is approximated by
//! `C hbar^{-d+1/3} Ai(-hbar^{-2/3} rho) u00`. Outside the shell the critical
//! times are imaginary and `rho` turns negative; the same formulas are
//! evaluated by analytic continuation in complex time.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{flow, flow_samples, FlowResult, PhasePoint, TrajectoryState};
use crate::error::{Error, Result};
use crate::integrator::IntegratorSpec;
use crate::midpoint::{
    critical_tau, dt_de, dtau_de, harmonic_seed, invert_generic, invert_midpoint_map, level_point, level_slope,
    MidpointSolution, SolverSpec, TUBE_SLACK,
};
use crate::potential::Potential;
use crate::scalar::Scalar;
use crate::specfun::{airy_ai, SmoothWindow};

/// Constant in `rho^{3/2} = RHO_CONSTANT (phi_upper - phi_lower)`.
pub const RHO_CONSTANT: f64 = 0.75;
/// Constant of the alternative area normalization, reported for comparison.
pub const RHO_CONSTANT_AREA_FORM: f64 = 4.0 / 3.0;
/// Default refusal threshold on `hbar^{-2/3} rho` for the non-degenerate formula.
pub const DEFAULT_NONDEGENERATE_THRESHOLD: f64 = 25.0;

/// Where the constant of a convention came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorSource {
    /// `sqrt(2/pi) / pi^d`, from the stationary-phase reduction.
    Derived,
    /// Least-squares fit against exact oscillator data.
    Calibrated,
    /// Unit Airy constant and the two-arc constant without the spectral
    /// integral's normalization.
    Bare,
}

/// Summary of a calibration fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub samples: usize,
    pub relative_residual: f64,
    pub hbars: Vec<f64>,
}

/// Frozen set of normalization constants used by every prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionLedger {
    pub id: String,
    pub dimension: usize,
    pub source: PrefactorSource,
    /// Must equal [`RHO_CONSTANT`].
    pub rho_constant: f64,
    /// `C` in `C hbar^{-d+1/3} Ai(.) u00`.
    pub airy_prefactor: f64,
    /// `K` in `K hbar^{p} sum_j fhat(t_j) g_j cos(S_j/hbar + m_j)`.
    pub nondegenerate_prefactor: f64,
    /// `p` above.
    pub nondegenerate_hbar_power: f64,
    pub calibration: Option<CalibrationRecord>,
}

/// `sqrt(2/pi) / pi^d`.
pub fn derived_airy_prefactor(dimension: usize) -> f64 {
    (2.0 / PI).sqrt() / PI.powi(dimension as i32)
}

fn make_id(source: &PrefactorSource, d: usize, c: f64) -> String {
    let tag = match source {
        PrefactorSource::Derived => "derived",
        PrefactorSource::Calibrated => "calibrated",
        PrefactorSource::Bare => "bare",
    };
    format!("{tag}-d{d}-c{c:.12e}")
}

impl ConventionLedger {
    pub fn derived(dimension: usize) -> Self {
        let c = derived_airy_prefactor(dimension);
        Self::with_constant(dimension, PrefactorSource::Derived, c, None)
    }

    /// The calibrated constant also fixes the non-degenerate prefactor,
    /// which the large-argument Airy asymptotics ties to `C / 2`.
    pub fn calibrated(dimension: usize, constant: f64, record: CalibrationRecord) -> Self {
        Self::with_constant(dimension, PrefactorSource::Calibrated, constant, Some(record))
    }

    /// Unit Airy constant and `2^{d+1} / sqrt(2 pi hbar)` for the two-arc formula.
    pub fn bare(dimension: usize) -> Self {
        Self {
            id: make_id(&PrefactorSource::Bare, dimension, 1.0),
            dimension,
            source: PrefactorSource::Bare,
            rho_constant: RHO_CONSTANT,
            airy_prefactor: 1.0,
            nondegenerate_prefactor: 2f64.powi(dimension as i32 + 1) / (2.0 * PI).sqrt(),
            nondegenerate_hbar_power: -0.5,
            calibration: None,
        }
    }

    fn with_constant(
        dimension: usize,
        source: PrefactorSource,
        c: f64,
        calibration: Option<CalibrationRecord>,
    ) -> Self {
        Self {
            id: make_id(&source, dimension, c),
            dimension,
            source,
            rho_constant: RHO_CONSTANT,
            airy_prefactor: c,
            nondegenerate_prefactor: c / 2.0,
            nondegenerate_hbar_power: -(dimension as f64) + 0.5,
            calibration,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.rho_constant != RHO_CONSTANT {
            return Err(Error::Convention(format!(
                "rho constant {} differs from the supported {RHO_CONSTANT}",
                self.rho_constant
            )));
        }
        if self.dimension != dimension {
            return Err(Error::Convention(format!(
                "ledger is for dimension {}, prediction needs {dimension}",
                self.dimension
            )));
        }
        if !(self.airy_prefactor.is_finite() && self.airy_prefactor > 0.0 && self.nondegenerate_prefactor.is_finite()) {
            return Err(Error::Convention("prefactors must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Least-squares constant `C` minimising `sum (C p_i - e_i)^2` for unit-constant
/// predictions `p_i` and exact values `e_i`; also returns the relative residual.
pub fn fit_prefactor(unit_predictions: &[f64], exact: &[f64]) -> Result<(f64, f64)> {
    if unit_predictions.len() != exact.len() || exact.is_empty() {
        return Err(Error::Input("calibration needs matching, non-empty samples".into()));
    }
    let pp: f64 = unit_predictions.iter().map(|p| p * p).sum();
    if pp == 0.0 {
        return Err(Error::Degenerate("all calibration predictions vanish".into()));
    }
    let pe: f64 = unit_predictions.iter().zip(exact).map(|(p, e)| p * e).sum();
    let c = pe / pp;
    let resid: f64 = unit_predictions
        .iter()
        .zip(exact)
        .map(|(p, e)| (c * p - e).powi(2))
        .sum();
    let norm: f64 = exact.iter().map(|e| e * e).sum();
    Ok((c, (resid / norm).sqrt()))
}

/// Numerical settings of the predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSpec {
    pub integrator: IntegratorSpec,
    pub solver: SolverSpec,
    /// Largest admissible `hbar^{-2/3} |rho|` for the Airy route.
    pub max_scaled_rho: f64,
    /// Smallest admissible `hbar^{-2/3} rho` for the non-degenerate route.
    pub nondegenerate_threshold: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        Self {
            integrator: IntegratorSpec::default(),
            solver: SolverSpec::default(),
            max_scaled_rho: 25.0,
            nondegenerate_threshold: DEFAULT_NONDEGENERATE_THRESHOLD,
        }
    }
}

/// Leading Airy-layer term at one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AiryLayerPrediction {
    pub rho: f64,
    pub mu: f64,
    pub u00: f64,
    pub hbar: f64,
    pub value: f64,
    pub convention_id: String,
}

/// Normal-form data extracted from the two critical values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfuNormalForm {
    pub rho: f64,
    pub mu: f64,
    /// Lower critical value and its (signed) time.
    pub phi_plus: f64,
    pub t_plus: f64,
    /// Upper critical value and its time.
    pub phi_minus: f64,
    pub t_minus: f64,
    /// `rho` under the alternative `4/3` area normalization.
    pub rho_area_form: f64,
}

/// One stationary point of the non-degenerate expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegContribution {
    pub t_j: f64,
    /// Critical value `Psi_E(t_j)`.
    pub action: f64,
    /// Phase offset `(pi/4) sgn Psi'' - (pi/2) eta`.
    pub m_j: f64,
    /// `|dt/dE|^{1/2} |det(1 + M)|^{-1/2}`.
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegeneratePrediction {
    pub value: f64,
    pub scaled_rho: f64,
    pub contributions: Vec<NondegContribution>,
    pub convention_id: String,
}

/// `Psi_E(t)` restricted to the arcs through a fixed query.
#[derive(Clone, Debug)]
pub struct PhaseProfile {
    pub pot: Potential,
    pub query: PhasePoint,
    pub energy: f64,
    pub integrator: IntegratorSpec,
}

/// Phase of an arc: `S - xi . (q_t - q) + t E`.
fn arc_phase<T: Scalar>(query_xi: &[f64], base: &[T], st: &TrajectoryState<T>, t: T, energy: f64) -> T {
    let d = query_xi.len();
    let mut shift = T::zero();
    for k in 0..d {
        shift += T::lift(query_xi[k]) * (st.q[k] - base[k]);
    }
    st.action - shift + t * T::lift(energy)
}

impl PhaseProfile {
    pub fn new(pot: &Potential, query: &PhasePoint, energy: f64, integrator: &IntegratorSpec) -> Result<Self> {
        pot.validate()?;
        if query.dim() != pot.dimension() {
            return Err(Error::DimensionMismatch {
                expected: pot.dimension(),
                got: query.dim(),
            });
        }
        Ok(Self {
            pot: pot.clone(),
            query: query.clone(),
            energy,
            integrator: integrator.clone(),
        })
    }

    /// Base point and flow of the arc of duration `t`.
    pub fn arc(&self, t: f64, seed: Option<&PhasePoint>) -> Result<(PhasePoint, FlowResult)> {
        let base = invert_midpoint_map(&self.pot, &self.query, t, seed, &self.integrator)?;
        let fr = flow(&self.pot, &base, t, &self.integrator)?;
        Ok((base, fr))
    }

    fn phase_of(&self, base: &PhasePoint, fr: &FlowResult) -> f64 {
        let st = TrajectoryState {
            q: fr.end.q.clone(),
            p: fr.end.p.clone(),
            monodromy: DMatrix::zeros(0, 0),
            action: fr.action,
        };
        arc_phase(&self.query.p, &base.q, &st, fr.time, self.energy)
    }

    /// `Psi_E(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        let (base, fr) = self.arc(t, None)?;
        Ok(self.phase_of(&base, &fr))
    }

    /// `d Psi_E / dt = E - H(base)`.
    pub fn slope(&self, t: f64) -> Result<f64> {
        let (base, _) = self.arc(t, None)?;
        Ok(self.energy - base.energy(&self.pot))
    }

    /// `d^2 Psi_E / dt^2 = -h'(t)` in the time orientation.
    pub fn curvature(&self, t: f64) -> Result<f64> {
        let (base, fr) = self.arc(t, None)?;
        Ok(-level_slope(&self.pot, &base, &fr)?)
    }

    /// `d^3 Psi_E / dt^3` by fourth-order differences of the curvature.
    pub fn third_derivative(&self, t: f64) -> Result<f64> {
        let h = 1e-3;
        let c = |dt: f64| self.curvature(t + dt);
        Ok((8.0 * (c(h)? - c(-h)?) - (c(2.0 * h)? - c(-2.0 * h)?)) / (12.0 * h))
    }
}

/// `Psi_E(t)` for the arc through `query`.
pub fn psi_e(t: f64, query: &PhasePoint, energy: f64, pot: &Potential, integrator: &IntegratorSpec) -> Result<f64> {
    PhaseProfile::new(pot, query, energy, integrator)?.value(t)
}

fn normal_form_from_values(t_pos: f64, phi_pos: f64, phi_neg: f64) -> Result<CfuNormalForm> {
    let (phi_plus, t_plus, phi_minus, t_minus) = if phi_pos <= phi_neg {
        (phi_pos, t_pos, phi_neg, -t_pos)
    } else {
        (phi_neg, -t_pos, phi_pos, t_pos)
    };
    let gap = phi_minus - phi_plus;
    if !(gap >= 0.0) {
        return Err(Error::Convention(format!("negative critical-value gap {gap}")));
    }
    Ok(CfuNormalForm {
        rho: (RHO_CONSTANT * gap).powf(2.0 / 3.0),
        mu: 0.5 * (phi_minus + phi_plus),
        phi_plus,
        t_plus,
        phi_minus,
        t_minus,
        rho_area_form: (RHO_CONSTANT_AREA_FORM * gap / 2.0).powf(2.0 / 3.0),
    })
}

/// Normal form from the two real critical times `+-t_plus` of a solution.
pub fn cfu_extract(profile: &PhaseProfile, sol: &MidpointSolution) -> Result<CfuNormalForm> {
    if sol.t_plus == 0.0 {
        return normal_form_from_values(0.0, 0.0, 0.0);
    }
    let phi_pos = profile.phase_of(&sol.base, &sol.flow);
    // The reversed chord starts where the forward one ends.
    let (base_neg, fr_neg) = profile.arc(-sol.t_plus, Some(&sol.flow.end))?;
    let phi_neg = profile.phase_of(&base_neg, &fr_neg);
    normal_form_from_values(sol.t_plus, phi_pos, phi_neg)
}

fn amplitude(dt_de_abs: f64, det: f64) -> f64 {
    (dt_de_abs / det.abs()).sqrt()
}

/// `sqrt(pi) rho^{1/4} |dt/dE|^{1/2} |det(1 + M)|^{-1/2}` at a solution inside the shell.
pub fn u00_coefficient(sol: &MidpointSolution, pot: &Potential, integrator: &IntegratorSpec) -> Result<f64> {
    if sol.t_plus <= 0.0 {
        return Err(Error::Degenerate("u00 needs a strictly positive critical time".into()));
    }
    let profile = PhaseProfile::new(pot, &sol.query, sol.energy, integrator)?;
    let nf = cfu_extract(&profile, sol)?;
    let slope = dt_de(sol, pot, integrator)?;
    let n = sol.flow.monodromy.nrows();
    let det = (DMatrix::identity(n, n) + &sol.flow.monodromy).determinant();
    Ok(PI.sqrt() * nf.rho.powf(0.25) * amplitude(slope.abs(), det))
}

/// `rho`, `mu` and `u00` at a query on either side of the shell.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGeometry {
    pub rho: f64,
    pub mu: f64,
    pub u00: f64,
    /// Squared critical time (negative outside the shell).
    pub tau: f64,
}

const SHELL_BAND: f64 = 1e-12;
const SHELL_OFFSET: f64 = 1e-5;

/// Computes the normal-form data, continuing to imaginary times when the
/// query lies outside the shell.
pub fn layer_geometry(query: &PhasePoint, energy: f64, pot: &Potential, spec: &PredictorSpec) -> Result<LayerGeometry> {
    pot.validate()?;
    if query.dim() != pot.dimension() {
        return Err(Error::DimensionMismatch {
            expected: pot.dimension(),
            got: query.dim(),
        });
    }
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::Input(format!("energy {energy} must be positive")));
    }
    let s = query.energy(pot) / energy;
    if (1.0 - s).abs() > spec.solver.tube_width + TUBE_SLACK {
        return Err(Error::Domain(format!(
            "|1 - H/E| = {} exceeds the tube",
            (1.0 - s).abs()
        )));
    }
    if (1.0 - s).abs() <= SHELL_BAND {
        // rho vanishes on the shell and u00 is analytic across it.
        let up = layer_geometry(query, energy * (1.0 + SHELL_OFFSET), pot, spec)?;
        let down = layer_geometry(query, energy * (1.0 - SHELL_OFFSET), pot, spec)?;
        return Ok(LayerGeometry {
            rho: 0.0,
            mu: 0.0,
            u00: 0.5 * (up.u00 + down.u00),
            tau: 0.0,
        });
    }
    let integ = &spec.integrator;
    let solver = &spec.solver;
    let tau = critical_tau(pot, query, energy, integ, solver)?;
    let lp = level_point(pot, query, tau, integ, solver)?;
    let xi = &query.p;
    let phi_pos = arc_phase(xi, &lp.base[..query.dim()], &lp.state, lp.time, energy);
    // Reversed chord at -t, seeded with the forward end point.
    let d = query.dim();
    let w: Vec<Complex64> = query.to_vec().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    let seed: Vec<Complex64> = lp.state.q.iter().chain(&lp.state.p).copied().collect();
    let (base_neg, st_neg) = invert_complex(pot, &w, -lp.time, seed, integ, solver)?;
    let phi_neg = arc_phase(xi, &base_neg[..d], &st_neg, -lp.time, energy);

    let (rho, mu) = if tau > 0.0 {
        let nf = normal_form_from_values(lp.time.re, phi_pos.re, phi_neg.re)?;
        (nf.rho, nf.mu)
    } else {
        let gap = (phi_pos - phi_neg).norm();
        (-(RHO_CONSTANT * gap).powf(2.0 / 3.0), 0.5 * (phi_pos + phi_neg).re)
    };
    let slope = dtau_de(pot, query, energy, integ, solver)?;
    let dt_de_abs = slope.abs() / (2.0 * tau.abs().sqrt());
    let n = 2 * d;
    let det = (DMatrix::identity(n, n) + &lp.state.monodromy).determinant().norm();
    Ok(LayerGeometry {
        rho,
        mu,
        u00: PI.sqrt() * rho.abs().powf(0.25) * amplitude(dt_de_abs, det),
        tau,
    })
}

fn invert_complex(
    pot: &Potential,
    w: &[Complex64],
    t: Complex64,
    seed: Vec<Complex64>,
    integ: &IntegratorSpec,
    solver: &SolverSpec,
) -> Result<(Vec<Complex64>, TrajectoryState<Complex64>)> {
    invert_generic(pot, w, t, seed, integ, solver).map(|(z, st, _)| (z, st))
}

/// Leading term `C hbar^{-d+1/3} Ai(-hbar^{-2/3} rho) u00`.
pub fn predict_airy_layer(
    query: &PhasePoint,
    energy: f64,
    hbar: f64,
    pot: &Potential,
    ledger: &ConventionLedger,
    spec: &PredictorSpec,
) -> Result<AiryLayerPrediction> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Input(format!("hbar {hbar} must be positive")));
    }
    ledger.validate(pot.dimension())?;
    let geo = layer_geometry(query, energy, pot, spec)?;
    let scaled = geo.rho / hbar.powf(2.0 / 3.0);
    if scaled.abs() > spec.max_scaled_rho {
        return Err(Error::Domain(format!(
            "hbar^(-2/3) rho = {scaled} is outside the Airy layer (limit {})",
            spec.max_scaled_rho
        )));
    }
    let d = pot.dimension() as f64;
    Ok(AiryLayerPrediction {
        rho: geo.rho,
        mu: geo.mu,
        u00: geo.u00,
        hbar,
        value: ledger.airy_prefactor * hbar.powf(-d + 1.0 / 3.0) * airy_ai(-scaled) * geo.u00,
        convention_id: ledger.id.clone(),
    })
}

/// Sign changes of `det(1 + M_s)` for `s` between 0 and `t`.
fn branch_index(pot: &Potential, base: &PhasePoint, t: f64, integ: &IntegratorSpec) -> Result<i32> {
    let samples = 32;
    let times: Vec<f64> = (1..=samples).map(|k| t * k as f64 / samples as f64).collect();
    let n = 2 * base.dim();
    let mut prev = 4f64.powi(base.dim() as i32);
    let mut count = 0;
    for fr in flow_samples(pot, base, &times, integ)? {
        let det = (DMatrix::identity(n, n) + &fr.monodromy).determinant();
        if det * prev < 0.0 {
            count += 1;
        }
        prev = det;
    }
    Ok(count)
}

/// Sum over the two isolated critical times `+-t_plus`, valid away from the
/// fold (`hbar^{-2/3} rho` above the configured threshold).
pub fn predict_nondegenerate(
    query: &PhasePoint,
    energy: f64,
    hbar: f64,
    window: &SmoothWindow,
    pot: &Potential,
    ledger: &ConventionLedger,
    spec: &PredictorSpec,
) -> Result<NondegeneratePrediction> {
    ledger.validate(pot.dimension())?;
    let integ = &spec.integrator;
    let sol = crate::midpoint::solve_midpoint_with(query, energy, pot, integ, &spec.solver)?;
    let profile = PhaseProfile::new(pot, query, energy, integ)?;
    let nf = cfu_extract(&profile, &sol)?;
    let scaled = nf.rho / hbar.powf(2.0 / 3.0);
    if scaled < spec.nondegenerate_threshold {
        return Err(Error::Caustic(format!(
            "hbar^(-2/3) rho = {scaled:.3} is below {}; use the Airy route",
            spec.nondegenerate_threshold
        )));
    }
    let slope = dt_de(&sol, pot, integ)?.abs();
    let (base_neg, fr_neg) = profile.arc(-sol.t_plus, Some(&sol.flow.end))?;
    let mut contributions = Vec::with_capacity(2);
    let mut total = 0.0;
    for (t, base, fr) in [(sol.t_plus, &sol.base, &sol.flow), (-sol.t_plus, &base_neg, &fr_neg)] {
        let n = fr.monodromy.nrows();
        let det = (DMatrix::identity(n, n) + &fr.monodromy).determinant();
        let curvature = -level_slope(pot, base, fr)?;
        let eta = branch_index(pot, base, t, integ)?;
        let m_j = FRAC_PI_4 * curvature.signum() - FRAC_PI_2 * eta as f64;
        let action = profile.phase_of(base, fr);
        let amp = amplitude(slope, det);
        total += window.fhat(t) * amp * (action / hbar + m_j).cos();
        contributions.push(NondegContribution {
            t_j: t,
            action,
            m_j,
            amplitude: amp,
        });
    }
    Ok(NondegeneratePrediction {
        value: ledger.nondegenerate_prefactor * hbar.powf(ledger.nondegenerate_hbar_power) * total,
        scaled_rho: scaled,
        contributions,
        convention_id: ledger.id.clone(),
    })
}

/// `Psi_E(t)` at a complex time, by complex-time continuation of the arcs.
pub fn continued_phase(
    query: &PhasePoint,
    energy: f64,
    t: Complex64,
    pot: &Potential,
    spec: &PredictorSpec,
) -> Result<Complex64> {
    let w: Vec<Complex64> = query.to_vec().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    let seed = harmonic_seed(pot, &w, t);
    let (base, st) = invert_complex(pot, &w, t, seed, &spec.integrator, &spec.solver)?;
    Ok(arc_phase(&query.p, &base[..query.dim()], &st, t, energy))
}

/// Energy of the tube coordinate `u`: `E + u (hbar / 2E)^{2/3}`.
pub fn tube_energy(energy: f64, u: f64, hbar: f64) -> f64 {
    energy + u * (hbar / (2.0 * energy)).powf(2.0 / 3.0)
}

/// Inverse of [`tube_energy`].
pub fn tube_coordinate(energy: f64, h: f64, hbar: f64) -> f64 {
    (h - energy) / (hbar / (2.0 * energy)).powf(2.0 / 3.0)
}

/// Point on the ray from the origin through `direction` (in phase space)
/// where `H` equals `level`.
pub fn shell_point(pot: &Potential, direction: &[f64], level: f64) -> Result<PhasePoint> {
    let d = pot.dimension();
    if direction.len() != 2 * d {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            got: direction.len(),
        });
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Input("zero ray direction".into()));
    }
    let at = |r: f64| PhasePoint::from_slice(&direction.iter().map(|v| v * r / norm).collect::<Vec<_>>());
    let excess = |r: f64| at(r).energy(pot) - level;
    if excess(0.0) >= 0.0 {
        return Err(Error::Domain(format!(
            "level {level} lies below the value at the origin"
        )));
    }
    let mut hi = 1.0;
    while excess(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Domain("ray does not reach the requested level".into()));
        }
    }
    let mut conv = 1e-14;
    let r = roots::find_root_brent(0.0, hi, excess, &mut conv).map_err(|e| Error::Solver {
        message: format!("shell point: {e}"),
        residuals: vec![],
    })?;
    Ok(at(r))
}

/// Point on the gradient line of `H` through `base` with `H = level`.
pub fn tube_point(pot: &Potential, base: &PhasePoint, level: f64) -> Result<PhasePoint> {
    let d = base.dim();
    let mut grad = vec![0.0; d];
    pot.gradient(&base.q, &mut grad);
    let normal: Vec<f64> = grad.iter().chain(&base.p).copied().collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("critical point of H".into()));
    }
    let z0 = base.to_vec();
    let at = |s: f64| {
        PhasePoint::from_slice(
            &z0.iter()
                .zip(&normal)
                .map(|(z, n)| z + s * n / norm)
                .collect::<Vec<_>>(),
        )
    };
    let excess = |s: f64| at(s).energy(pot) - level;
    let mut step = 0.1 * (level - base.energy(pot)).abs().max(1e-12) / norm;
    let (lo, hi) = if excess(0.0) < 0.0 {
        while excess(step) < 0.0 {
            step *= 2.0;
        }
        (0.0, step)
    } else {
        while excess(-step) > 0.0 {
            step *= 2.0;
            if step > 1e3 {
                return Err(Error::Domain(format!(
                    "level {level} not reached along the gradient line"
                )));
            }
        }
        (-step, 0.0)
    };
    if excess(0.0) == 0.0 {
        return Ok(base.clone());
    }
    let mut conv = 1e-15;
    let s = roots::find_root_brent(lo, hi, excess, &mut conv).map_err(|e| Error::Solver {
        message: format!("tube point: {e}"),
        residuals: vec![],
    })?;
    Ok(at(s))
}
