//! Exact quantum reference data: eigenpairs of `-(hbar^2/2) d^2/dx^2 + V`,
//! Wigner functions of eigenstates and windowed or sharp spectral sums.
//!
//! One-dimensional problems are discretized with Fourier spectral
//! differentiation on a periodic box `[-L, L)`. Separable two-dimensional
//! problems are assembled from per-axis spectra. Harmonic axes use closed
//! forms and never touch the eigensolver.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classical::{flow, PhasePoint};
use crate::error::{Error, Result};
use crate::integrator::IntegratorSpec;
use crate::potential::Potential;
use crate::specfun::{hermite_function, oscillator_wigner_exact, SmoothWindow};

use std::f64::consts::PI;

pub const MAX_GRID_NODES: usize = 8192;
const TAIL_TOLERANCE: f64 = 1e-8;
/// States are resolved to at least this many multiples of `hbar` in energy
/// so that low-lying states still decay well inside the box.
const MIN_ENERGY_IN_HBAR: f64 = 20.0;

/// Box and resolution of the 1D discretization. Unset fields are chosen
/// from the largest energy that has to be resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub half_width: Option<f64>,
    pub nodes: Option<usize>,
    /// Retained states satisfy `E_j <= min V(+-L) / wall_factor`.
    pub wall_factor: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            half_width: None,
            nodes: None,
            wall_factor: 3.0,
        }
    }
}

/// Uniform periodic grid `x_j = -L + j dx`, `dx = 2L / N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub half_width: f64,
    pub nodes: usize,
}

impl UniformGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.nodes as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.point(j)).collect()
    }
}

fn wall_height(pot: &Potential, half_width: f64) -> f64 {
    pot.value(&[half_width]).min(pot.value(&[-half_width]))
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wall_factor > 1.0) {
            return Err(Error::Input("wall_factor must exceed 1".into()));
        }
        if let Some(l) = self.half_width {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Input(format!("half_width {l} must be positive")));
            }
        }
        if let Some(n) = self.nodes {
            if !(8..=MAX_GRID_NODES).contains(&n) || n % 2 != 0 {
                return Err(Error::Input(format!(
                    "nodes {n} must be even and in [8, {MAX_GRID_NODES}]"
                )));
            }
        }
        Ok(())
    }

    /// Chooses the box so that `V(+-L) >= wall_factor * E` and the
    /// resolution so that the phase-space rectangle `[-L, L] x [-P, P]`
    /// with `P^2 / 2 = wall_factor * E` fits on the grid.
    pub fn resolve(&self, pot: &Potential, hbar: f64, max_energy: f64) -> Result<UniformGrid> {
        self.validate()?;
        if pot.dimension() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: pot.dimension(),
            });
        }
        let energy = max_energy
            .max(MIN_ENERGY_IN_HBAR * hbar)
            .max(pot.value(&[0.0]) + MIN_ENERGY_IN_HBAR * hbar);
        let target = self.wall_factor * energy;
        let half_width = match self.half_width {
            Some(l) => l,
            None => {
                let mut hi = 1.0;
                while wall_height(pot, hi) < target {
                    hi *= 2.0;
                    if hi > 1e6 {
                        return Err(Error::UnsupportedPotential("potential does not confine".into()));
                    }
                }
                let f = |l: f64| wall_height(pot, l) - target;
                let mut conv = 1e-12;
                roots::find_root_brent(0.0, hi, f, &mut conv).map_or(hi, |l| l * (1.0 + 1e-9))
            }
        };
        let nodes = match self.nodes {
            Some(n) => n,
            None => {
                let momentum = (2.0 * target).sqrt();
                let n = (2.0 * half_width * momentum / (PI * hbar)).ceil() as usize + 16;
                let n = n + n % 2;
                if n > MAX_GRID_NODES {
                    return Err(Error::Domain(format!(
                        "resolving E = {max_energy} at hbar = {hbar} needs {n} > {MAX_GRID_NODES} nodes"
                    )));
                }
                n
            }
        };
        Ok(UniformGrid { half_width, nodes })
    }
}

/// Eigenpairs of a 1D Hamiltonian on a periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub hbar: f64,
    pub potential: Potential,
    pub grid: UniformGrid,
    /// Ascending eigenvalues of the retained states.
    pub eigenvalues: Vec<f64>,
    /// `L^2`-normalized samples, one vector per retained state.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    /// Spectral weight in the outer eighth of the Fourier modes plus the
    /// squared amplitude at the box edge.
    pub convergence: Vec<f64>,
    /// Energies up to this value are trusted.
    pub reliability_cutoff: f64,
}

/// Fourier second-derivative matrix on `N` (even) periodic nodes of spacing `dx`.
fn fourier_second_derivative(n: usize, dx: f64) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let scale = (h / dx).powi(2);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (-PI * PI / (3.0 * h * h) - 1.0 / 6.0) * scale
        } else {
            let k = i.abs_diff(j);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            -0.5 * sign / (k as f64 * h / 2.0).sin().powi(2) * scale
        }
    })
}

fn spectral_tail(values: &[f64]) -> f64 {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let total: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
    let band = n / 8;
    let high: f64 = (n / 2 - band..n / 2 + band).map(|k| buf[k].norm_sqr()).sum();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = values[0].abs().max(values[n - 1].abs()) / peak;
    high / total + edge * edge
}

/// Dense symmetric eigensolve of the discretized Hamiltonian.
pub fn eigensolve_1d(pot: &Potential, hbar: f64, max_energy: f64, params: &GridParams) -> Result<EigenBasis> {
    pot.validate()?;
    if !(hbar > 0.0) {
        return Err(Error::Input("hbar must be positive".into()));
    }
    let grid = params.resolve(pot, hbar, max_energy)?;
    let n = grid.nodes;
    let dx = grid.spacing();
    let mut h = fourier_second_derivative(n, dx) * (-0.5 * hbar * hbar);
    for j in 0..n {
        h[(j, j)] += pot.value(&[grid.point(j)]);
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let reliability_cutoff = wall_height(pot, grid.half_width) / params.wall_factor;
    let norm = 1.0 / dx.sqrt();
    let mut eigenvalues = Vec::new();
    let mut eigenvectors = Vec::new();
    let mut convergence = Vec::new();
    for idx in order {
        let e = eig.eigenvalues[idx];
        if e > reliability_cutoff {
            break;
        }
        let col = eig.eigenvectors.column(idx);
        // Fix the sign so that the first significant sample is positive.
        let lead = col.iter().copied().find(|v| v.abs() > 1e-3).unwrap_or(1.0);
        let sign = lead.signum() * norm;
        let v: Vec<f64> = col.iter().map(|x| x * sign).collect();
        let tail = spectral_tail(&v);
        if e <= max_energy && tail.sqrt() > TAIL_TOLERANCE {
            return Err(Error::Domain(format!(
                "state at E = {e} is not resolved (tail {:.1e}); enlarge the box or the node count",
                tail.sqrt()
            )));
        }
        eigenvalues.push(e);
        eigenvectors.push(v);
        convergence.push(tail);
    }
    if eigenvalues.last().is_none_or(|e| *e < max_energy) && max_energy > reliability_cutoff {
        return Err(Error::Reliability(format!(
            "box supports energies up to {reliability_cutoff}, {max_energy} requested"
        )));
    }
    Ok(EigenBasis {
        hbar,
        potential: pot.clone(),
        grid,
        eigenvalues,
        eigenvectors,
        convergence,
        reliability_cutoff,
    })
}

/// Samples of the `n`-th unit-oscillator eigenfunction on a grid.
pub fn hermite_state(n: usize, hbar: f64, grid: &UniformGrid) -> Vec<f64> {
    grid.points()
        .into_iter()
        .map(|x| hermite_function(n, x, hbar))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisHeader {
    format: String,
    #[serde(flatten)]
    basis: EigenBasis,
    vectors: String,
}

const BASIS_FORMAT: &str = "wigner-airy-basis-1";

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `||H psi_j - E_j psi_j||` in the grid `L^2` norm.
    pub fn residual(&self, j: usize) -> f64 {
        let n = self.grid.nodes;
        let dx = self.grid.spacing();
        let d2 = fourier_second_derivative(n, dx);
        let v = nalgebra::DVector::from_column_slice(&self.eigenvectors[j]);
        let mut hv = &d2 * &v * (-0.5 * self.hbar * self.hbar);
        for i in 0..n {
            hv[i] += self.potential.value(&[self.grid.point(i)]) * v[i];
        }
        ((hv - v * self.eigenvalues[j]).norm_squared() * dx).sqrt()
    }

    /// Writes `<stem>.json` (header) and `<stem>.csv` (one row per grid node,
    /// one column per state). Floats use shortest round-trip formatting.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv_name = format!("{stem}.csv");
        let mut body = String::new();
        for i in 0..self.grid.nodes {
            let row: Vec<String> = self.eigenvectors.iter().map(|v| format!("{:e}", v[i])).collect();
            body.push_str(&row.join(","));
            body.push('\n');
        }
        fs::write(dir.join(&csv_name), body)?;
        let header = BasisHeader {
            format: BASIS_FORMAT.into(),
            basis: self.clone(),
            vectors: csv_name,
        };
        let path = dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(&header)?)?;
        Ok(path)
    }

    pub fn import(header_path: &Path) -> Result<Self> {
        let header: BasisHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
        if header.format != BASIS_FORMAT {
            return Err(Error::Format(format!("unknown basis format {}", header.format)));
        }
        let dir = header_path.parent().unwrap_or(Path::new("."));
        let text = fs::read_to_string(dir.join(&header.vectors))?;
        let mut basis = header.basis;
        let count = basis.eigenvalues.len();
        let mut vectors = vec![Vec::with_capacity(basis.grid.nodes); count];
        for (line_no, line) in text.lines().enumerate() {
            let fields: Vec<&str> = if line.is_empty() {
                vec![]
            } else {
                line.split(',').collect()
            };
            if fields.len() != count {
                return Err(Error::Format(format!(
                    "row {line_no} has {} columns, expected {count}",
                    fields.len()
                )));
            }
            for (v, f) in vectors.iter_mut().zip(fields) {
                v.push(
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("row {line_no}: {e}")))?,
                );
            }
        }
        if vectors.iter().any(|v| v.len() != basis.grid.nodes) {
            return Err(Error::Format("eigenvector length does not match the grid".into()));
        }
        basis.eigenvectors = vectors;
        Ok(basis)
    }
}

/// Wigner transforms of grid states by band-limited resampling.
///
/// For a query abscissa `x` every state is resampled on the grid
/// `x + m dx/2` via zero-padded FFT, then
/// `W(x, xi) = (pi hbar)^{-1} (dx/2) sum_m psi(x + m dx/2) conj(psi(x - m dx/2)) e^{-2 i m (dx/2) xi / hbar}`
/// with only the terms where both arguments stay inside the box.
pub struct WignerTransformer {
    grid: UniformGrid,
    spectra: Vec<Vec<Complex64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl WignerTransformer {
    pub fn new(grid: UniformGrid, states: &[Vec<Complex64>]) -> Result<Self> {
        let n = grid.nodes;
        if !n.is_multiple_of(2) {
            return Err(Error::Input("grid node count must be even".into()));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let mut spectra = Vec::with_capacity(states.len());
        for s in states {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: s.len(),
                });
            }
            let mut buf = s.clone();
            forward.process(&mut buf);
            spectra.push(buf);
        }
        Ok(Self {
            grid,
            spectra,
            inverse: planner.plan_fft_inverse(2 * n),
        })
    }

    pub fn from_real(grid: UniformGrid, states: &[Vec<f64>]) -> Result<Self> {
        let complex: Vec<Vec<Complex64>> = states
            .iter()
            .map(|s| s.iter().map(|v| Complex64::new(*v, 0.0)).collect())
            .collect();
        Self::new(grid, &complex)
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    /// State `index` sampled at `x + m dx/2`, `m = 0..2N` (periodically).
    fn resample(&self, index: usize, x: f64) -> Vec<Complex64> {
        let n = self.grid.nodes;
        let period = 2.0 * self.grid.half_width;
        let shift = x + self.grid.half_width;
        let c = &self.spectra[index];
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        let phase = |kappa: i64| Complex64::from_polar(1.0, 2.0 * PI * kappa as f64 * shift / period);
        let half = (n / 2) as i64;
        for kappa in (1 - half)..half {
            let src = kappa.rem_euclid(n as i64) as usize;
            let dst = kappa.rem_euclid(2 * n as i64) as usize;
            buf[dst] = c[src] * phase(kappa);
        }
        let nyquist = c[n / 2] * 0.5;
        buf[n / 2] = nyquist * phase(half);
        buf[3 * n / 2] = nyquist * phase(-half);
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    /// Complex Wigner value of state `index`; the imaginary part is a
    /// quadrature residue.
    pub fn wigner(&self, index: usize, x: f64, xi: f64, hbar: f64) -> Result<Complex64> {
        let l = self.grid.half_width;
        if !(x.abs() < l) {
            return Err(Error::Domain(format!("query x = {x} outside the box [-{l}, {l})")));
        }
        let samples = self.resample(index, x);
        let m2 = samples.len();
        let delta = self.grid.spacing() / 2.0;
        let reach = ((l - x.abs()) / delta).floor() as usize;
        let mut acc = samples[0] * samples[0].conj();
        for m in 1..=reach.min(m2 / 2 - 1) {
            let plus = samples[m];
            let minus = samples[m2 - m];
            let kernel = Complex64::from_polar(1.0, -2.0 * m as f64 * delta * xi / hbar);
            acc += plus * minus.conj() * kernel + minus * plus.conj() * kernel.conj();
        }
        Ok(acc * delta / (PI * hbar))
    }
}

/// Provenance of a Wigner field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WignerKind {
    SingleState,
    SmoothedSum,
    SharpInterval,
}

/// Real Wigner values at query points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerField {
    pub queries: Vec<PhasePoint>,
    pub values: Vec<f64>,
    pub hbar: f64,
    pub kind: WignerKind,
}

fn checked_real(z: Complex64) -> Result<f64> {
    if z.im.abs() > 1e-10 * z.norm().max(1.0) {
        return Err(Error::Reliability(format!(
            "Wigner value {z} has a significant imaginary part"
        )));
    }
    Ok(z.re)
}

/// Wigner function of a single grid state at the queries.
pub fn wigner_of_state(
    state: &[Complex64],
    grid: UniformGrid,
    hbar: f64,
    queries: &[PhasePoint],
) -> Result<WignerField> {
    let transformer = WignerTransformer::new(grid, &[state.to_vec()])?;
    let values = queries
        .par_iter()
        .map(|q| {
            if q.dim() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: q.dim(),
                });
            }
            checked_real(transformer.wigner(0, q.q[0], q.p[0], hbar)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WignerField {
        queries: queries.to_vec(),
        values,
        hbar,
        kind: WignerKind::SingleState,
    })
}

/// Spectrum of one axis of a separable Hamiltonian.
pub enum AxisSpectrum {
    /// `p^2/2 + omega^2 x^2/2`, handled in closed form.
    Harmonic { omega: f64 },
    Numerical {
        basis: EigenBasis,
        transformer: WignerTransformer,
    },
}

impl AxisSpectrum {
    fn numerical(basis: EigenBasis) -> Result<Self> {
        let transformer = WignerTransformer::from_real(basis.grid, &basis.eigenvectors)?;
        Ok(Self::Numerical { basis, transformer })
    }

    fn energy(&self, n: usize, hbar: f64) -> Option<f64> {
        match self {
            Self::Harmonic { omega } => Some(hbar * omega * (n as f64 + 0.5)),
            Self::Numerical { basis, .. } => basis.eigenvalues.get(n).copied(),
        }
    }

    fn reliable_up_to(&self) -> f64 {
        match self {
            Self::Harmonic { .. } => f64::INFINITY,
            Self::Numerical { basis, .. } => basis.reliability_cutoff,
        }
    }

    fn wigner(&self, n: usize, x: f64, xi: f64, hbar: f64) -> Result<f64> {
        match self {
            Self::Harmonic { omega } => {
                let h = 0.5 * (xi * xi + omega * omega * x * x);
                Ok(oscillator_wigner_exact(n, h / omega, hbar))
            }
            Self::Numerical { transformer, .. } => checked_real(transformer.wigner(n, x, xi, hbar)?),
        }
    }

    pub fn basis(&self) -> Option<&EigenBasis> {
        match self {
            Self::Harmonic { .. } => None,
            Self::Numerical { basis, .. } => Some(basis),
        }
    }
}

/// Spectral data of a separable Hamiltonian at fixed `hbar`.
pub struct SpectralModel {
    pub hbar: f64,
    pub potential: Potential,
    pub axes: Vec<AxisSpectrum>,
}

/// One eigenstate of the separable problem, indexed per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub indices: Vec<usize>,
}

impl SpectralModel {
    /// Builds per-axis spectra resolving total energies up to `max_energy`;
    /// harmonic axes use the closed form.
    pub fn build(pot: &Potential, hbar: f64, max_energy: f64, grid: &GridParams) -> Result<Self> {
        Self::assemble(pot, hbar, max_energy, grid, true)
    }

    /// As [`SpectralModel::build`] but always runs the eigensolver.
    pub fn numerical(pot: &Potential, hbar: f64, max_energy: f64, grid: &GridParams) -> Result<Self> {
        Self::assemble(pot, hbar, max_energy, grid, false)
    }

    fn assemble(pot: &Potential, hbar: f64, max_energy: f64, grid: &GridParams, closed_form: bool) -> Result<Self> {
        pot.validate()?;
        let d = pot.dimension();
        if d > 2 {
            return Err(Error::UnsupportedPotential(format!("dimension {d} > 2")));
        }
        let axis_pots: Vec<Potential> = (0..d).map(|k| pot.axis(k)).collect::<Result<_>>()?;
        let ground: Vec<f64> = axis_pots.iter().map(|p| p.value(&[0.0])).collect();
        let mut axes = Vec::with_capacity(d);
        for (k, ap) in axis_pots.iter().enumerate() {
            let others: f64 = ground.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, g)| g).sum();
            let axis_max = (max_energy - others).max(0.0);
            let harmonic = match ap {
                Potential::Isotropic { omega, .. } if closed_form => Some(*omega),
                _ => None,
            };
            axes.push(match harmonic {
                Some(omega) => AxisSpectrum::Harmonic { omega },
                None => AxisSpectrum::numerical(eigensolve_1d(ap, hbar, axis_max, grid)?)?,
            });
        }
        Ok(Self {
            hbar,
            potential: pot.clone(),
            axes,
        })
    }

    /// Wraps previously computed bases (for example imported ones).
    pub fn from_bases(pot: &Potential, bases: Vec<EigenBasis>) -> Result<Self> {
        if bases.len() != pot.dimension() || bases.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: pot.dimension(),
                got: bases.len(),
            });
        }
        let hbar = bases[0].hbar;
        if bases.iter().any(|b| b.hbar != hbar) {
            return Err(Error::Input("bases disagree on hbar".into()));
        }
        let axes = bases.into_iter().map(AxisSpectrum::numerical).collect::<Result<_>>()?;
        Ok(Self {
            hbar,
            potential: pot.clone(),
            axes,
        })
    }

    /// Largest total energy whose levels are all trusted.
    pub fn reliable_up_to(&self) -> f64 {
        let ground: Vec<f64> = self
            .axes
            .iter()
            .map(|a| a.energy(0, self.hbar).unwrap_or(0.0))
            .collect();
        self.axes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                a.reliable_up_to()
                    + ground
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, g)| g)
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// All levels with total energy in `[lo, hi]`, in ascending index order.
    pub fn levels(&self, lo: f64, hi: f64) -> Result<Vec<Level>> {
        if hi > self.reliable_up_to() {
            return Err(Error::Reliability(format!(
                "levels up to {hi} requested, basis trusted up to {}",
                self.reliable_up_to()
            )));
        }
        let mut out = Vec::new();
        let mut indices = Vec::with_capacity(self.axes.len());
        self.collect_levels(0, 0.0, lo, hi, &mut indices, &mut out);
        Ok(out)
    }

    fn collect_levels(&self, axis: usize, base: f64, lo: f64, hi: f64, indices: &mut Vec<usize>, out: &mut Vec<Level>) {
        if axis == self.axes.len() {
            if base >= lo {
                out.push(Level {
                    energy: base,
                    indices: indices.clone(),
                });
            }
            return;
        }
        // Remaining axes add at least their ground energies.
        let floor: f64 = self.axes[axis + 1..]
            .iter()
            .map(|a| a.energy(0, self.hbar).unwrap_or(0.0))
            .sum();
        let mut n = 0;
        while let Some(e) = self.axes[axis].energy(n, self.hbar) {
            if base + e + floor > hi {
                break;
            }
            indices.push(n);
            self.collect_levels(axis + 1, base + e, lo, hi, indices, out);
            indices.pop();
            n += 1;
        }
    }

    fn weighted_sum(&self, levels: &[Level], weights: &[f64], query: &PhasePoint) -> Result<f64> {
        let d = self.axes.len();
        if query.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: query.dim(),
            });
        }
        // Per-axis Wigner values, computed once per index.
        let mut tables: Vec<Vec<Option<f64>>> = vec![Vec::new(); d];
        let mut terms = Vec::with_capacity(levels.len());
        for (level, w) in levels.iter().zip(weights) {
            let mut prod = *w;
            for (k, &n) in level.indices.iter().enumerate() {
                if tables[k].len() <= n {
                    tables[k].resize(n + 1, None);
                }
                let value = match tables[k][n] {
                    Some(v) => v,
                    None => {
                        let v = self.axes[k].wigner(n, query.q[k], query.p[k], self.hbar)?;
                        tables[k][n] = Some(v);
                        v
                    }
                };
                prod *= value;
            }
            terms.push(prod);
        }
        Ok(pairwise(&terms))
    }

    fn field(
        &self,
        levels: &[Level],
        weights: &[f64],
        queries: &[PhasePoint],
        kind: WignerKind,
    ) -> Result<WignerField> {
        let values = queries
            .par_iter()
            .map(|q| self.weighted_sum(levels, weights, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(WignerField {
            queries: queries.to_vec(),
            values,
            hbar: self.hbar,
            kind,
        })
    }

    /// `sum_j f((E - E_j)/hbar) W_j`, truncated at the window cutoff.
    pub fn smoothed_spectral_wigner(
        &self,
        energy: f64,
        window: &SmoothWindow,
        queries: &[PhasePoint],
    ) -> Result<WignerField> {
        let reach = window.lambda_cut * self.hbar;
        let levels = self.levels(energy - reach, energy + reach)?;
        let weights: Vec<f64> = levels
            .iter()
            .map(|l| window.f((energy - l.energy) / self.hbar))
            .collect();
        self.field(&levels, &weights, queries, WignerKind::SmoothedSum)
    }

    /// Unweighted sum of `W_j` over levels in the closed interval `[lo, hi]`.
    pub fn sharp_spectral_wigner(&self, lo: f64, hi: f64, queries: &[PhasePoint]) -> Result<WignerField> {
        let levels = if hi < lo { Vec::new() } else { self.levels(lo, hi)? };
        let weights = vec![1.0; levels.len()];
        self.field(&levels, &weights, queries, WignerKind::SharpInterval)
    }
}

fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}

/// Period of the axis-0 orbit through `q = 0` at energy `energy`: the
/// shortest period that a window radius must stay below.
pub fn minimal_period(pot: &Potential, energy: f64, integ: &IntegratorSpec) -> Result<f64> {
    let axis = pot.axis(0)?;
    let kinetic = energy - axis.value(&[0.0]);
    if !(kinetic > 0.0) {
        return Err(Error::Domain(format!("energy {energy} below the potential minimum")));
    }
    let start = PhasePoint::new(vec![0.0], vec![(2.0 * kinetic).sqrt()])?;
    let position = |t: f64| flow(&axis, &start, t, integ).map(|f| f.end.q[0]);
    // The orbit recrosses q = 0 upwards after one period; the first
    // downward crossing is at half a period.
    let step = 0.05;
    let mut t = step;
    let mut prev = position(t)?;
    let mut crossings = 0;
    loop {
        let next = position(t + step)?;
        if prev.signum() != next.signum() {
            crossings += 1;
            if crossings == 2 {
                let mut conv = 1e-13;
                let f = |s: f64| position(s).unwrap_or(f64::NAN);
                return roots::find_root_brent(t, t + step, f, &mut conv).map_err(|e| Error::Solver {
                    message: format!("period search: {e}"),
                    residuals: vec![],
                });
            }
        }
        t += step;
        prev = next;
        if t > integ.max_horizon {
            return Err(Error::Domain(
                "no return to q = 0 within the integration horizon".into(),
            ));
        }
    }
}

/// Checks `a < T_min` for a window radius.
pub fn check_window_radius(a: f64, pot: &Potential, energy: f64, integ: &IntegratorSpec) -> Result<()> {
    let period = minimal_period(pot, energy, integ)?;
    if a >= period {
        return Err(Error::Domain(format!(
            "window radius {a} reaches the minimal period {period}"
        )));
    }
    Ok(())
}
