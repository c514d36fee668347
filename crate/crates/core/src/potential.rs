//! Builtin potentials for Hamiltonians of the form `H = |p|^2 / 2 + V(q)`.
//!
//! Every builtin is separable, so the Hessian of `V` is diagonal. Polynomial
//! potentials are limited to degree two on each axis: anything of higher
//! degree has an unbounded Hessian and is rejected by [`Potential::validate`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest admissible coupling of the cosine perturbation.
pub const COSINE_LAMBDA_MAX: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    /// `V = (omega^2 / 2) |q|^2`.
    Isotropic { dimension: usize, omega: f64 },
    /// `V = sum_k omega_k^2 q_k^2 / 2`.
    Anisotropic { omegas: Vec<f64> },
    /// `V = sum_k [q_k^2 / 2 + lambda (1 - cos q_k)]`.
    CosinePerturbed { dimension: usize, lambda: f64 },
    /// `V = sum_k sum_n c_{k,n} q_k^n` with ascending coefficients per axis.
    UserPolynomialBounded { coefficients: Vec<Vec<f64>> },
}

impl Potential {
    pub fn harmonic(dimension: usize) -> Self {
        Potential::Isotropic { dimension, omega: 1.0 }
    }

    pub fn isotropic(dimension: usize, omega: f64) -> Result<Self> {
        let p = Potential::Isotropic { dimension, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn anisotropic(omegas: Vec<f64>) -> Result<Self> {
        let p = Potential::Anisotropic { omegas };
        p.validate()?;
        Ok(p)
    }

    pub fn cosine_perturbed(dimension: usize, lambda: f64) -> Result<Self> {
        let p = Potential::CosinePerturbed { dimension, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn polynomial(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let p = Potential::UserPolynomialBounded { coefficients };
        p.validate()?;
        Ok(p)
    }

    /// Checks parameter ranges and the bounded-Hessian requirement.
    pub fn validate(&self) -> Result<()> {
        if self.dimension() == 0 {
            return Err(Error::Input("potential dimension must be positive".into()));
        }
        match self {
            Potential::Isotropic { omega, .. } => check_frequency(*omega),
            Potential::Anisotropic { omegas } => omegas.iter().try_for_each(|w| check_frequency(*w)),
            Potential::CosinePerturbed { lambda, .. } => {
                if !(0.0..=COSINE_LAMBDA_MAX).contains(lambda) {
                    return Err(Error::Input(format!(
                        "cosine coupling {lambda} outside [0, {COSINE_LAMBDA_MAX}]"
                    )));
                }
                Ok(())
            }
            Potential::UserPolynomialBounded { coefficients } => {
                for (axis, c) in coefficients.iter().enumerate() {
                    if c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Input(format!("non-finite coefficient on axis {axis}")));
                    }
                    if c.iter().skip(3).any(|v| *v != 0.0) {
                        return Err(Error::UnsupportedPotential(format!(
                            "axis {axis} has degree above two, so its Hessian is unbounded"
                        )));
                    }
                    let quadratic = c.get(2).copied().unwrap_or(0.0);
                    if quadratic <= 0.0 {
                        return Err(Error::UnsupportedPotential(format!(
                            "axis {axis} is not confining (quadratic coefficient {quadratic})"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Potential::Isotropic { dimension, .. } | Potential::CosinePerturbed { dimension, .. } => *dimension,
            Potential::Anisotropic { omegas } => omegas.len(),
            Potential::UserPolynomialBounded { coefficients } => coefficients.len(),
        }
    }

    /// True for `V = |q|^2 / 2`, the case with closed-form oracles.
    pub fn is_unit_oscillator(&self) -> bool {
        match self {
            Potential::Isotropic { omega, .. } => *omega == 1.0,
            Potential::Anisotropic { omegas } => omegas.iter().all(|w| *w == 1.0),
            Potential::CosinePerturbed { lambda, .. } => *lambda == 0.0,
            Potential::UserPolynomialBounded { .. } => false,
        }
    }

    /// Frequencies of the quadratic part on each axis, used to seed solvers.
    pub fn harmonic_frequencies(&self) -> Vec<f64> {
        let d = self.dimension();
        match self {
            Potential::Isotropic { omega, .. } => vec![*omega; d],
            Potential::Anisotropic { omegas } => omegas.clone(),
            Potential::CosinePerturbed { lambda, .. } => vec![(1.0 + lambda).sqrt(); d],
            Potential::UserPolynomialBounded { coefficients } => coefficients
                .iter()
                .map(|c| (2.0 * c.get(2).copied().unwrap_or(0.0)).sqrt())
                .collect(),
        }
    }

    /// One-dimensional potential acting on a single axis.
    pub fn axis(&self, k: usize) -> Result<Potential> {
        if k >= self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: k + 1,
            });
        }
        Ok(match self {
            Potential::Isotropic { omega, .. } => Potential::Isotropic {
                dimension: 1,
                omega: *omega,
            },
            Potential::Anisotropic { omegas } => Potential::Isotropic {
                dimension: 1,
                omega: omegas[k],
            },
            Potential::CosinePerturbed { lambda, .. } => Potential::CosinePerturbed {
                dimension: 1,
                lambda: *lambda,
            },
            Potential::UserPolynomialBounded { coefficients } => Potential::UserPolynomialBounded {
                coefficients: vec![coefficients[k].clone()],
            },
        })
    }

    /// Value, first and second derivative of the axis-`k` term at `x`.
    #[inline]
    fn axis_terms<T: Scalar>(&self, k: usize, x: T) -> (T, T, T) {
        let half = T::lift(0.5);
        match self {
            Potential::Isotropic { omega, .. } => {
                let w2 = T::lift(omega * omega);
                (half * w2 * x * x, w2 * x, w2)
            }
            Potential::Anisotropic { omegas } => {
                let w2 = T::lift(omegas[k] * omegas[k]);
                (half * w2 * x * x, w2 * x, w2)
            }
            Potential::CosinePerturbed { lambda, .. } => {
                let l = T::lift(*lambda);
                let one = T::lift(1.0);
                (half * x * x + l * (one - x.cos()), x + l * x.sin(), one + l * x.cos())
            }
            Potential::UserPolynomialBounded { coefficients } => {
                let c = &coefficients[k];
                let c0 = T::lift(c.first().copied().unwrap_or(0.0));
                let c1 = T::lift(c.get(1).copied().unwrap_or(0.0));
                let c2 = T::lift(c.get(2).copied().unwrap_or(0.0));
                let two = T::lift(2.0);
                (c0 + c1 * x + c2 * x * x, c1 + two * c2 * x, two * c2)
            }
        }
    }

    pub fn value<T: Scalar>(&self, q: &[T]) -> T {
        q.iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, x)| acc + self.axis_terms(k, *x).0)
    }

    pub fn gradient<T: Scalar>(&self, q: &[T], out: &mut [T]) {
        for (k, (x, g)) in q.iter().zip(out.iter_mut()).enumerate() {
            *g = self.axis_terms(k, *x).1;
        }
    }

    /// Diagonal of the Hessian (all builtins are separable).
    pub fn hessian_diagonal<T: Scalar>(&self, q: &[T], out: &mut [T]) {
        for (k, (x, h)) in q.iter().zip(out.iter_mut()).enumerate() {
            *h = self.axis_terms(k, *x).2;
        }
    }

    pub fn hamiltonian<T: Scalar>(&self, q: &[T], p: &[T]) -> T {
        let kinetic = p.iter().fold(T::zero(), |acc, v| acc + *v * *v);
        T::lift(0.5) * kinetic + self.value(q)
    }
}

fn check_frequency(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("oscillator frequency {w} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_is_rejected() {
        let err = Potential::polynomial(vec![vec![0.0, 0.0, 0.5, 0.0, 0.1]]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedPotential(_)));
    }

    #[test]
    fn trailing_zero_high_degree_is_accepted() {
        assert!(Potential::polynomial(vec![vec![0.0, 0.1, 0.5, 0.0]]).is_ok());
    }

    #[test]
    fn cosine_coupling_range() {
        assert!(Potential::cosine_perturbed(1, 0.5).is_ok());
        assert!(Potential::cosine_perturbed(1, 0.6).is_err());
        assert!(Potential::cosine_perturbed(1, -0.1).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            Potential::cosine_perturbed(2, 0.3).unwrap(),
            Potential::anisotropic(vec![1.0, 1.7]).unwrap(),
            Potential::polynomial(vec![vec![0.2, -0.3, 0.7], vec![0.0, 0.0, 0.5]]).unwrap(),
        ];
        let q = [0.37, -0.81];
        let h = 1e-5;
        for pot in &pots {
            let mut g = [0.0; 2];
            let mut hd = [0.0; 2];
            pot.gradient(&q, &mut g);
            pot.hessian_diagonal(&q, &mut hd);
            for k in 0..2 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let fd = (pot.value(&qp) - pot.value(&qm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-9, "{pot:?} axis {k}");
                let mut gp = [0.0; 2];
                let mut gm = [0.0; 2];
                pot.gradient(&qp, &mut gp);
                pot.gradient(&qm, &mut gm);
                assert!(((gp[k] - gm[k]) / (2.0 * h) - hd[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let p = Potential::cosine_perturbed(1, 0.1).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"kind":"cosine_perturbed","dimension":1,"lambda":0.1}"#);
        let back: Potential = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
