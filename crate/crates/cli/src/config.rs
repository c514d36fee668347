//! Run configuration: a single JSON document.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wigner_airy::airy::{
    shell_point, tube_coordinate, tube_energy, tube_point, ConventionLedger, PredictorSpec, PrefactorSource,
};
use wigner_airy::hk::HkQuadrature;
use wigner_airy::quantum::GridParams;
use wigner_airy::{PhasePoint, Potential};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: Potential,
    /// Optional cross-check of the potential's dimension.
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Target energy `E`.
    pub energy: f64,
    /// Positive, strictly descending.
    #[serde(default)]
    pub hbars: Vec<f64>,
    #[serde(default)]
    pub queries: QuerySpec,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub predictor: PredictorSpec,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub convention: ConventionConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub hk: HkConfig,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub seed: u64,
}

/// How query points are generated.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuerySpec {
    /// Points on the gradient line of `H` through the shell point on the
    /// ray `direction`, at tube coordinates `u`.
    Tube { direction: Vec<f64>, u: Vec<f64> },
    /// As `Tube` with `count` equally spaced values in `[u_min, u_max]`.
    TubeRange {
        direction: Vec<f64>,
        u_min: f64,
        u_max: f64,
        count: usize,
    },
    /// Points on the ray `direction` with `H = s E`.
    Ray { direction: Vec<f64>, s: Vec<f64> },
    /// Random rays with `s` uniform in `[s_min, s_max]`, seeded by `seed`.
    Random { count: usize, s_min: f64, s_max: f64 },
    /// Phase-space points `[q..., p...]`.
    Explicit { points: Vec<Vec<f64>> },
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec::TubeRange {
            direction: vec![1.0, 0.4],
            u_min: -4.0,
            u_max: 2.0,
            count: 61,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Support radius of the window's Fourier transform.
    pub a: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            a: wigner_airy::specfun::DEFAULT_WINDOW_RADIUS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorChoice {
    Derived,
    Bare,
    /// Frozen constant read from `ledger`.
    Calibrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Airy,
    Nondegenerate,
    /// Non-degenerate formula when `hbar^{-2/3} rho` exceeds the threshold.
    Auto,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConventionConfig {
    pub prefactor: PrefactorChoice,
    pub ledger: Option<PathBuf>,
    pub route: Route,
}

impl Default for ConventionConfig {
    fn default() -> Self {
        Self {
            prefactor: PrefactorChoice::Derived,
            ledger: None,
            route: Route::Airy,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub times: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0, FRAC_PI_2],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HkConfig {
    pub times: Vec<f64>,
    pub quadrature: HkQuadrature,
}

impl Default for HkConfig {
    fn default() -> Self {
        Self {
            times: vec![0.4, 0.8],
            quadrature: HkQuadrature::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactConfig {
    /// Also evaluate the sharp sum over `[E - a hbar, E + b hbar]`.
    pub sharp_interval: Option<[f64; 2]>,
    /// Cache directory for eigenbases: existing files are imported, missing
    /// ones are solved and exported.
    pub basis_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Join these files instead of computing both sides.
    pub predict_csv: Option<PathBuf>,
    pub exact_csv: Option<PathBuf>,
    /// Rows with `u` at most this value count as oscillatory.
    pub oscillatory_u_max: f64,
    /// Where `--calibrate` writes the frozen ledger (default `<out>/ledger.json`).
    pub calibration_output: Option<PathBuf>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            predict_csv: None,
            exact_csv: None,
            oscillatory_u_max: 0.0,
            calibration_output: None,
        }
    }
}

/// A resolved query point.
#[derive(Clone, Debug)]
pub struct Query {
    pub index: usize,
    pub point: PhasePoint,
    /// `H / E`.
    pub s: f64,
    /// Tube coordinate at the `hbar` it was resolved for.
    pub u: f64,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.potential.validate().map_err(|e| config_err(e.to_string()))?;
        let d = self.dimension();
        if let Some(dim) = self.dimension {
            if dim != d {
                return Err(config_err(format!(
                    "dimension {dim} does not match the potential ({d})"
                )));
            }
        }
        if !(self.energy > 0.0 && self.energy.is_finite()) {
            return Err(config_err("energy must be positive"));
        }
        if self.hbars.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(config_err("hbar values must be positive"));
        }
        if self.hbars.windows(2).any(|w| w[1] >= w[0]) {
            return Err(config_err("hbar values must be strictly descending"));
        }
        if !(self.window.a > 0.0 && self.window.a.is_finite()) {
            return Err(config_err("window radius must be positive"));
        }
        self.predictor
            .integrator
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.grid.validate().map_err(|e| config_err(e.to_string()))?;
        self.hk.quadrature.validate().map_err(|e| config_err(e.to_string()))?;
        let check_dir = |dir: &[f64]| {
            if dir.len() != 2 * d {
                Err(config_err(format!("query direction needs {} components", 2 * d)))
            } else {
                Ok(())
            }
        };
        match &self.queries {
            QuerySpec::Tube { direction, u } => {
                check_dir(direction)?;
                if u.is_empty() {
                    return Err(config_err("empty u list"));
                }
            }
            QuerySpec::TubeRange {
                direction,
                u_min,
                u_max,
                count,
            } => {
                check_dir(direction)?;
                if *count < 1 || u_max < u_min || (*count == 1 && u_max != u_min) {
                    return Err(config_err("invalid u range"));
                }
            }
            QuerySpec::Ray { direction, s } => {
                check_dir(direction)?;
                if s.iter().any(|v| !(*v > 0.0)) {
                    return Err(config_err("s values must be positive"));
                }
            }
            QuerySpec::Random { count, s_min, s_max } => {
                if *count == 0 || !(*s_min > 0.0 && s_max >= s_min) {
                    return Err(config_err("invalid random query range"));
                }
            }
            QuerySpec::Explicit { points } => {
                if points.is_empty() || points.iter().any(|p| p.len() != 2 * d) {
                    return Err(config_err(format!("explicit points need {} coordinates", 2 * d)));
                }
            }
        }
        if self.convention.prefactor == PrefactorChoice::Calibrated && self.convention.ledger.is_none() {
            return Err(config_err("a calibrated convention needs a ledger file"));
        }
        Ok(())
    }

    pub fn needs_hbar(&self) -> bool {
        matches!(self.queries, QuerySpec::Tube { .. } | QuerySpec::TubeRange { .. })
    }

    /// First configured `hbar`, required by commands without an `hbar` loop
    /// when the query set depends on it.
    pub fn reference_hbar(&self) -> Result<f64, CliError> {
        match self.hbars.first() {
            Some(h) => Ok(*h),
            None if self.needs_hbar() => Err(config_err("tube queries need at least one hbar")),
            None => Ok(f64::NAN),
        }
    }

    pub fn require_hbars(&self) -> Result<&[f64], CliError> {
        if self.hbars.is_empty() {
            return Err(config_err("this command needs at least one hbar"));
        }
        Ok(&self.hbars)
    }

    /// Resolves the query set for a given `hbar` (ignored by `hbar`-free
    /// generators).
    pub fn queries(&self, hbar: f64) -> Result<Vec<Query>, CliError> {
        let pot = &self.potential;
        let e = self.energy;
        let geo = |err: wigner_airy::Error| CliError::Runtime(format!("query generation: {err}"));
        let points: Vec<PhasePoint> = match &self.queries {
            QuerySpec::Tube { direction, u } => {
                let base = shell_point(pot, direction, e).map_err(geo)?;
                u.iter()
                    .map(|u| tube_point(pot, &base, tube_energy(e, *u, hbar)).map_err(geo))
                    .collect::<Result<_, _>>()?
            }
            QuerySpec::TubeRange {
                direction,
                u_min,
                u_max,
                count,
            } => {
                let base = shell_point(pot, direction, e).map_err(geo)?;
                (0..*count)
                    .map(|k| {
                        let u = if *count == 1 {
                            *u_min
                        } else {
                            u_min + (u_max - u_min) * k as f64 / (*count - 1) as f64
                        };
                        tube_point(pot, &base, tube_energy(e, u, hbar)).map_err(geo)
                    })
                    .collect::<Result<_, _>>()?
            }
            QuerySpec::Ray { direction, s } => s
                .iter()
                .map(|s| shell_point(pot, direction, s * e).map_err(geo))
                .collect::<Result<_, _>>()?,
            QuerySpec::Random { count, s_min, s_max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let d = self.dimension();
                (0..*count)
                    .map(|_| {
                        let direction: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let s = rng.random_range(*s_min..=*s_max);
                        shell_point(pot, &direction, s * e).map_err(geo)
                    })
                    .collect::<Result<_, _>>()?
            }
            QuerySpec::Explicit { points } => points.iter().map(|p| PhasePoint::from_slice(p)).collect(),
        };
        Ok(points
            .into_iter()
            .enumerate()
            .map(|(index, point)| {
                let h = point.energy(pot);
                Query {
                    index,
                    s: h / e,
                    u: if hbar.is_nan() {
                        f64::NAN
                    } else {
                        tube_coordinate(e, h, hbar)
                    },
                    point,
                }
            })
            .collect())
    }

    /// Convention ledger selected by the configuration.
    pub fn ledger(&self) -> Result<ConventionLedger, CliError> {
        let d = self.dimension();
        let ledger = match self.convention.prefactor {
            PrefactorChoice::Derived => ConventionLedger::derived(d),
            PrefactorChoice::Bare => ConventionLedger::bare(d),
            PrefactorChoice::Calibrated => {
                let path = self
                    .convention
                    .ledger
                    .as_ref()
                    .ok_or_else(|| config_err("missing ledger path"))?;
                let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                let ledger: ConventionLedger =
                    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
                if ledger.source != PrefactorSource::Calibrated {
                    return Err(config_err("ledger file does not hold a calibrated convention"));
                }
                ledger
            }
        };
        ledger.validate(d).map_err(|e| config_err(e.to_string()))?;
        Ok(ledger)
    }
}
