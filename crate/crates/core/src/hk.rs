//! Herman-Kluk parametrix and the Wigner transform of the propagator.
//!
//! The propagator kernel is
//! `K(x, y) = (2 pi hbar)^{-3d/2} int e^{i Phi/hbar} a0 dq dp` with the complex
//! phase `Phi = S + p_t.(x - q_t) - p.(y - q) + (i/2)(|x - q_t|^2 + |y - q|^2)`
//! and `a0 = det^{1/2}(A + D - i(B - C))`. Its Wigner transform
//! `U(t, x, xi) = int K(x + v/2, x - v/2) e^{-i v.xi/hbar} dv` is Gaussian in
//! `v`, so the `v` integral is done in closed form and only the `(q, p)`
//! integral is evaluated numerically.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{flow, flow_samples, FlowResult, PhasePoint};
use crate::error::{Error, Result};
use crate::integrator::IntegratorSpec;
use crate::midpoint::invert_midpoint_map;
use crate::potential::Potential;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Settings of the `(q, p)` quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HkQuadrature {
    /// Half-width of the box around each critical point, in units of
    /// `sqrt(hbar)` measured in midpoint coordinates.
    pub truncation_radius: f64,
    /// Node spacing in units of `sqrt(hbar)` (at most 0.5).
    pub spacing: f64,
    /// Relative quadrature-error estimate above which results are flagged.
    pub error_threshold: f64,
    pub integrator: IntegratorSpec,
}

impl Default for HkQuadrature {
    fn default() -> Self {
        Self {
            truncation_radius: 6.0,
            spacing: 0.25,
            error_threshold: 1e-6,
            integrator: IntegratorSpec::default(),
        }
    }
}

impl HkQuadrature {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation_radius >= 3.0 && self.spacing > 0.0 && self.spacing <= 0.5 && self.error_threshold > 0.0) {
            return Err(Error::Input(format!("invalid quadrature settings {self:?}")));
        }
        self.integrator.validate()
    }
}

/// Value of the Wigner propagator with quadrature diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HkEvaluation {
    pub value: Complex64,
    pub t: f64,
    pub query: PhasePoint,
    pub node_count: usize,
    /// Difference to the result on the grid with doubled spacing.
    pub estimated_error: f64,
    pub flagged: bool,
}

/// A dominant critical point `Theta^t(q, p) = (x, xi)`, `v = q_t - q`.
#[derive(Clone, Debug)]
pub struct CriticalPoint {
    pub start: PhasePoint,
    pub flow: FlowResult,
    pub v: Vec<f64>,
}

/// Stationary-phase value and the critical points behind it.
#[derive(Clone, Debug)]
pub struct StationaryPhase {
    pub value: Complex64,
    pub points: Vec<CriticalPoint>,
    /// Critical value `Psi_c = S - xi.(q_t - q)` per point.
    pub phases: Vec<f64>,
    pub no_solution: bool,
}

/// Hessian factorization diagnostics at a dominant critical point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianCheck {
    pub assembled_det: Complex64,
    /// `|det(1 + M)| |det(A + D - i(B - C))|`.
    pub factored_modulus: f64,
    /// `assembled_det / (det(1 + M) det(A + D - i(B - C)))`.
    pub ratio: Complex64,
    /// Same with the `+i(B - C)` sign, for comparison.
    pub ratio_plus_sign: Complex64,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn sq_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum()
}

/// Complex HK phase for the kernel entry `K(x, y)`.
pub fn hk_phase(fr: &FlowResult, x: &[f64], y: &[f64]) -> Complex64 {
    let (q, p, qt, pt) = (&fr.start.q, &fr.start.p, &fr.end.q, &fr.end.p);
    let d = q.len();
    let mut real = fr.action;
    for k in 0..d {
        real += pt[k] * (x[k] - qt[k]) - p[k] * (y[k] - q[k]);
    }
    let imag = 0.5 * (sq_norm((0..d).map(|k| x[k] - qt[k])) + sq_norm((0..d).map(|k| y[k] - q[k])));
    Complex64::new(real, imag)
}

/// Phase of the Wigner-transformed kernel before the `v` integral.
pub fn wigner_phase(fr: &FlowResult, x: &[f64], xi: &[f64], v: &[f64]) -> Complex64 {
    let d = x.len();
    let plus: Vec<f64> = (0..d).map(|k| x[k] + v[k] / 2.0).collect();
    let minus: Vec<f64> = (0..d).map(|k| x[k] - v[k] / 2.0).collect();
    let shift: f64 = (0..d).map(|k| v[k] * xi[k]).sum();
    hk_phase(fr, &plus, &minus) - shift
}

/// Phase after the exact `v` integral: `Psi_0 + i c.c` where `Psi_0` is
/// the `v = 0` phase and `c` the coefficient of the linear term.
pub fn reduced_phase(fr: &FlowResult, x: &[f64], xi: &[f64]) -> Complex64 {
    let d = x.len();
    let psi0 = wigner_phase(fr, x, xi, &vec![0.0; d]);
    let mut cc = Complex64::new(0.0, 0.0);
    for k in 0..d {
        let alpha = x[k] - fr.end.q[k];
        let beta = x[k] - fr.start.q[k];
        let c = Complex64::new(0.5 * (fr.end.p[k] + fr.start.p[k]) - xi[k], 0.5 * (alpha - beta));
        cc += c * c;
    }
    psi0 + I * cc
}

/// `int e^{i Psi / hbar} dv = (4 pi hbar)^{d/2} e^{i Psi_red / hbar}`.
pub fn reduce_v(fr: &FlowResult, x: &[f64], xi: &[f64], hbar: f64) -> Complex64 {
    let d = x.len() as f64;
    (4.0 * PI * hbar).powf(d / 2.0) * (I * reduced_phase(fr, x, xi) / hbar).exp()
}

fn hk_matrix(fr_m: &DMatrix<f64>, sign: f64) -> DMatrix<Complex64> {
    let d = fr_m.nrows() / 2;
    let a = fr_m.view((0, 0), (d, d));
    let b = fr_m.view((0, d), (d, d));
    let c = fr_m.view((d, 0), (d, d));
    let dd = fr_m.view((d, d), (d, d));
    let re = a + dd;
    let im = (b - c) * sign;
    DMatrix::from_fn(d, d, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// `det(A + D - i(B - C))` of a monodromy matrix.
pub fn hk_determinant(monodromy: &DMatrix<f64>) -> Complex64 {
    hk_matrix(monodromy, -1.0).determinant()
}

/// Square root of `det(A_s + D_s - i(B_s - C_s))` continued from `2^{d/2}` at
/// `s = 0` along `s` in `[0, t]`, refining until consecutive samples differ
/// in argument by less than `pi/4`.
pub fn hk_amplitude(pot: &Potential, start: &PhasePoint, t: f64, integ: &IntegratorSpec) -> Result<Complex64> {
    let mut samples = 16usize;
    loop {
        let times: Vec<f64> = (1..=samples).map(|k| t * k as f64 / samples as f64).collect();
        let flows = flow_samples(pot, start, &times, integ)?;
        let d = start.dim();
        let mut arg = 0.0;
        let mut prev = Complex64::new(2f64.powi(d as i32), 0.0);
        let mut fine = true;
        for fr in &flows {
            let det = hk_determinant(&fr.monodromy);
            if det.norm() == 0.0 {
                return Err(Error::Degenerate("HK determinant vanishes".into()));
            }
            let step = (det / prev).arg();
            if step.abs() >= FRAC_PI_4 {
                fine = false;
                break;
            }
            arg += step;
            prev = det;
        }
        if fine {
            return Ok(Complex64::from_polar(prev.norm().sqrt(), arg / 2.0));
        }
        samples *= 2;
        if samples > 1 << 14 {
            return Err(Error::Solver {
                message: "HK branch tracking failed to resolve the determinant phase".into(),
                residuals: vec![],
            });
        }
    }
}

/// Number of sign changes of `det(1 + M_s)` for `s` in `(0, t]`.
fn one_plus_m_crossings(pot: &Potential, start: &PhasePoint, t: f64, integ: &IntegratorSpec) -> Result<usize> {
    let samples = 64;
    let times: Vec<f64> = (1..=samples).map(|k| t * k as f64 / samples as f64).collect();
    let n = 2 * start.dim();
    let mut prev = 1.0;
    let mut count = 0;
    for fr in flow_samples(pot, start, &times, integ)? {
        let det = (DMatrix::identity(n, n) + &fr.monodromy).determinant();
        if det * prev < 0.0 {
            count += 1;
        }
        if det != 0.0 {
            prev = det;
        }
    }
    Ok(count)
}

/// Newton search for the dominant critical points at time `t`, seeded by the
/// harmonic inverse and a small grid of perturbations around it.
pub fn critical_points(
    t: f64,
    query: &PhasePoint,
    pot: &Potential,
    integ: &IntegratorSpec,
) -> Result<Vec<CriticalPoint>> {
    let d = query.dim();
    let base_seed = crate::midpoint::oscillator_inverse_midpoint(query, t);
    let offsets = [-0.5, 0.0, 0.5];
    let mut seeds = vec![base_seed.clone()];
    for combo in 0..3usize.pow(2 * d as u32) {
        let mut z = base_seed.to_vec();
        let mut c = combo;
        for zk in z.iter_mut() {
            *zk += offsets[c % 3];
            c /= 3;
        }
        seeds.push(PhasePoint::from_slice(&z));
    }
    let mut found: Vec<CriticalPoint> = Vec::new();
    for seed in &seeds {
        let Ok(start) = invert_midpoint_map(pot, query, t, Some(seed), integ) else {
            continue;
        };
        let zs = start.to_vec();
        let duplicate = found
            .iter()
            .any(|cp| cp.start.to_vec().iter().zip(&zs).all(|(a, b)| (a - b).abs() < 1e-6));
        if duplicate {
            continue;
        }
        let fr = flow(pot, &start, t, integ)?;
        let v = (0..d).map(|k| fr.end.q[k] - start.q[k]).collect();
        found.push(CriticalPoint { start, flow: fr, v });
    }
    found.sort_by(|a, b| {
        a.start
            .to_vec()
            .partial_cmp(&b.start.to_vec())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

/// Leading stationary-phase value `2^d sum_j e^{i(Psi_c/hbar + eta_j)} / det^{1/2}(1 + M_j)`.
pub fn stationary_phase_prediction(
    t: f64,
    query: &PhasePoint,
    hbar: f64,
    pot: &Potential,
    integ: &IntegratorSpec,
) -> Result<StationaryPhase> {
    pot.validate()?;
    let d = query.dim();
    let points = critical_points(t, query, pot, integ)?;
    let mut value = Complex64::new(0.0, 0.0);
    let mut phases = Vec::with_capacity(points.len());
    for cp in &points {
        let n = 2 * d;
        let det = (DMatrix::identity(n, n) + &cp.flow.monodromy).determinant();
        if det.abs() < 1e-12 {
            return Err(Error::Caustic(format!("det(1 + M) = {det:e} at t = {t}")));
        }
        let eta = -FRAC_PI_2 * one_plus_m_crossings(pot, &cp.start, t, integ)? as f64;
        let psi_c = cp.flow.action - (0..d).map(|k| query.p[k] * cp.v[k]).sum::<f64>();
        phases.push(psi_c);
        value += Complex64::from_polar(2f64.powi(d as i32) / det.abs().sqrt(), psi_c / hbar + eta);
    }
    Ok(StationaryPhase {
        value,
        no_solution: points.is_empty(),
        points,
        phases,
    })
}

/// Pairwise summation in a fixed tree, for run-to-run determinism.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Tensor grid of `(q, p)` nodes; returns per-axis coordinates and spacings.
struct Grid {
    axes: Vec<Vec<f64>>,
    spacing: Vec<f64>,
}

impl Grid {
    fn new(lo: &[f64], hi: &[f64], spacing: f64) -> Self {
        let mut axes = Vec::new();
        let mut steps = Vec::new();
        for (a, b) in lo.iter().zip(hi) {
            // Even node count so that every other node is a coarse grid.
            let mut n = ((b - a) / spacing).ceil() as usize + 1;
            n = n.max(17);
            if n.is_multiple_of(2) {
                n += 1;
            }
            let h = (b - a) / (n - 1) as f64;
            axes.push((0..n).map(|i| a + i as f64 * h).collect());
            steps.push(h);
        }
        Self { axes, spacing: steps }
    }

    fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Node coordinates and whether the node lies on the coarse sub-grid.
    fn node(&self, mut idx: usize) -> (Vec<f64>, bool) {
        let mut z = Vec::with_capacity(self.axes.len());
        let mut coarse = true;
        for axis in &self.axes {
            let i = idx % axis.len();
            idx /= axis.len();
            z.push(axis[i]);
            coarse &= i.is_multiple_of(2);
        }
        (z, coarse)
    }

    fn cell(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Smallest singular value of `(1 + M)/2`.
fn midpoint_contraction(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let j = (DMatrix::identity(n, n) + m) * 0.5;
    j.singular_values().min()
}

/// Numerical Wigner propagator `U(t, x, xi)` from the HK parametrix.
pub fn wigner_propagator(
    t: f64,
    query: &PhasePoint,
    pot: &Potential,
    hbar: f64,
    quad: &HkQuadrature,
) -> Result<HkEvaluation> {
    quad.validate()?;
    pot.validate()?;
    if !(hbar > 0.0) {
        return Err(Error::Input("hbar must be positive".into()));
    }
    let d = query.dim();
    let integ = &quad.integrator;
    let points = critical_points(t, query, pot, integ)?;
    if points.is_empty() {
        return Err(Error::Solver {
            message: "no dominant critical point found".into(),
            residuals: vec![],
        });
    }
    // Bounding box of the Gaussian neighbourhoods of all critical points.
    let mut lo = vec![f64::INFINITY; 2 * d];
    let mut hi = vec![f64::NEG_INFINITY; 2 * d];
    for cp in &points {
        let radius = quad.truncation_radius * hbar.sqrt() / midpoint_contraction(&cp.flow.monodromy);
        for (k, z) in cp.start.to_vec().into_iter().enumerate() {
            lo[k] = lo[k].min(z - radius);
            hi[k] = hi[k].max(z + radius);
        }
    }
    let grid = Grid::new(&lo, &hi, quad.spacing * hbar.sqrt());
    let contributions: Vec<Result<(Complex64, bool)>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (z, coarse) = grid.node(idx);
            let start = PhasePoint::from_slice(&z);
            let fr = flow(pot, &start, t, integ)?;
            let phase = reduced_phase(&fr, &query.q, &query.p);
            // Nodes with negligible Gaussian weight skip the amplitude flow.
            if phase.im / hbar > 700.0 {
                return Ok((Complex64::new(0.0, 0.0), coarse));
            }
            let amp = hk_amplitude(pot, &start, t, integ)?;
            Ok(((I * phase / hbar).exp() * amp, coarse))
        })
        .collect();
    let mut fine = Vec::with_capacity(contributions.len());
    let mut coarse = Vec::new();
    for c in contributions {
        let (v, on_coarse) = c?;
        fine.push(v);
        if on_coarse {
            coarse.push(v);
        }
    }
    let norm = 2f64.powf(d as f64 / 2.0) * (2.0 * PI * hbar).powi(-(d as i32));
    let value = pairwise_sum(&fine) * grid.cell() * norm;
    let coarse_value = pairwise_sum(&coarse) * grid.cell() * 2f64.powi(2 * d as i32) * norm;
    let estimated_error = (value - coarse_value).norm();
    Ok(HkEvaluation {
        value,
        t,
        query: query.clone(),
        node_count: grid.len(),
        estimated_error,
        flagged: estimated_error > quad.error_threshold * value.norm().max(1.0),
    })
}

/// Hessian of the Wigner phase in `(v, q, p)` at a dominant critical point,
/// assembled from the monodromy blocks.
pub fn assemble_hessian(monodromy: &DMatrix<f64>) -> DMatrix<Complex64> {
    let d = monodromy.nrows() / 2;
    let m = to_complex(monodromy);
    let a = m.view((0, 0), (d, d)).into_owned();
    let b = m.view((0, d), (d, d)).into_owned();
    let c = m.view((d, 0), (d, d)).into_owned();
    let dm = m.view((d, d), (d, d)).into_owned();
    let id = DMatrix::<Complex64>::identity(d, d);
    let half = Complex64::new(0.5, 0.0);
    let vv = &id * (I * 0.5);
    let qv = (c.transpose() + (&id - a.transpose()) * I) * half;
    let pv = (&id + dm.transpose() - b.transpose() * I) * half;
    let qq = -(c.transpose() * &a) + (a.transpose() * &a + &id) * I;
    let pq = -(dm.transpose() * &a) + &id + (b.transpose() * &a) * I;
    let pp = -(dm.transpose() * &b) + (b.transpose() * &b) * I;
    let mut h = DMatrix::zeros(3 * d, 3 * d);
    let mut put = |r: usize, col: usize, blk: &DMatrix<Complex64>| {
        h.view_mut((r * d, col * d), (d, d)).copy_from(blk);
        if r != col {
            h.view_mut((col * d, r * d), (d, d)).copy_from(&blk.transpose());
        }
    };
    put(0, 0, &vv);
    put(1, 0, &qv);
    put(2, 0, &pv);
    put(1, 1, &qq);
    put(2, 1, &pq);
    put(2, 2, &pp);
    h
}

/// Compares the assembled Hessian determinant with the factored form.
pub fn hessian_check(fr: &FlowResult) -> HessianCheck {
    let n = fr.monodromy.nrows();
    let assembled_det = assemble_hessian(&fr.monodromy).determinant();
    let one_plus = (DMatrix::identity(n, n) + &fr.monodromy).determinant();
    let hk = hk_determinant(&fr.monodromy);
    let hk_plus = hk_matrix(&fr.monodromy, 1.0).determinant();
    HessianCheck {
        assembled_det,
        factored_modulus: one_plus.abs() * hk.norm(),
        ratio: assembled_det / (hk * one_plus),
        ratio_plus_sign: assembled_det / (hk_plus * one_plus),
    }
}

/// Normalized coherent state centred at `(q, p)` in one dimension.
pub fn coherent_state(x: f64, q: f64, p: f64, hbar: f64) -> Complex64 {
    let norm = (PI * hbar).powf(-0.25);
    Complex64::from_polar(norm * (-(x - q).powi(2) / (2.0 * hbar)).exp(), p * (x - q) / hbar)
}

/// A one-dimensional wave function sampled on a uniform grid.
#[derive(Clone, Debug)]
pub struct GridState {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<Complex64>,
}

impl GridState {
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.x0 + i as f64 * self.dx)
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn inner(&self, other: &GridState) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.dx
    }
}

/// Phase-space box for state propagation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

/// HK propagation of a one-dimensional grid state:
/// `psi_t(x) = (2 pi hbar)^{-1} int g_{q_t p_t}(x) R e^{iS/hbar} <g_{qp}|psi> dq dp`
/// with `R = a0 / sqrt(2)`, overlaps computed by quadrature on the state grid.
pub fn hk_propagate_state(
    state: &GridState,
    t: f64,
    pot: &Potential,
    hbar: f64,
    region: &PhaseBox,
    quad: &HkQuadrature,
) -> Result<GridState> {
    if pot.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: pot.dimension(),
        });
    }
    quad.validate()?;
    let grid = Grid::new(&region.lo, &region.hi, quad.spacing * hbar.sqrt());
    let xs: Vec<f64> = state.grid().collect();
    let integ = &quad.integrator;
    let partial: Vec<Result<Vec<Complex64>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (z, _) = grid.node(idx);
            let overlap: Complex64 = xs
                .iter()
                .zip(&state.values)
                .map(|(x, v)| coherent_state(*x, z[0], z[1], hbar).conj() * v)
                .sum::<Complex64>()
                * state.dx;
            let mut out = vec![Complex64::new(0.0, 0.0); xs.len()];
            if overlap.norm() < 1e-14 {
                return Ok(out);
            }
            let start = PhasePoint::from_slice(&z);
            let fr = flow(pot, &start, t, integ)?;
            let r = hk_amplitude(pot, &start, t, integ)? / 2f64.sqrt();
            let weight = r * (I * fr.action / hbar).exp() * overlap;
            for (o, x) in out.iter_mut().zip(&xs) {
                *o = coherent_state(*x, fr.end.q[0], fr.end.p[0], hbar) * weight;
            }
            Ok(out)
        })
        .collect();
    let mut columns = Vec::with_capacity(partial.len());
    for p in partial {
        columns.push(p?);
    }
    let scale = grid.cell() / (2.0 * PI * hbar);
    let values = (0..xs.len())
        .map(|i| {
            let col: Vec<Complex64> = columns.iter().map(|c| c[i]).collect();
            pairwise_sum(&col) * scale
        })
        .collect();
    Ok(GridState {
        x0: state.x0,
        dx: state.dx,
        values,
    })
}
