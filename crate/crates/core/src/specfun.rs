//! Special functions: Airy functions and zeros, scaled Laguerre polynomials,
//! Hermite functions, Gauss-Legendre rules and the smooth spectral window.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const AI0: f64 = 0.355_028_053_887_817_2;
const AIP0: f64 = -0.258_819_403_792_806_8;

/// `Ai(x)` and `Ai'(x)`.
pub fn airy(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x > 6.0 {
        airy_asymptotic_positive(x)
    } else if x >= -5.0 {
        airy_maclaurin(x)
    } else if x >= -8.0 {
        let (ai, aip) = airy_maclaurin(-5.0);
        airy_taylor_march(-5.0, ai, aip, x)
    } else {
        airy_asymptotic_negative(-x)
    }
}

pub fn airy_ai(x: f64) -> f64 {
    airy(x).0
}

fn airy_maclaurin(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    // f, g are the even/odd solutions with Ai = AI0 f + AIP0 g; fp, gp their
    // derivatives, accumulated from separate term recurrences.
    let (mut f, mut g, mut fp, mut gp) = (1.0, x, 0.0, 1.0);
    let (mut tf, mut tg, mut tfp, mut tgp) = (1.0, x, 0.0, 1.0);
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * 3.0 * kf);
        tg *= x3 / (3.0 * kf * (3.0 * kf + 1.0));
        tfp = if k == 1 {
            x * x / 2.0
        } else {
            tfp * x3 / ((3.0 * kf - 1.0) * 3.0 * (kf - 1.0))
        };
        tgp *= x3 / (3.0 * kf * (3.0 * kf - 2.0));
        f += tf;
        g += tg;
        fp += tfp;
        gp += tgp;
        let small = |t: f64, s: f64| t.abs() <= 1e-18 * s.abs().max(1e-300);
        if k > 3 && small(tf, f) && small(tg, g) && small(tfp, fp) && small(tgp, gp) {
            break;
        }
    }
    (AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp)
}

/// Integrates `y'' = x y` from `x0` to `x1` by re-expanded Taylor series.
fn airy_taylor_march(x0: f64, ai: f64, aip: f64, x1: f64) -> (f64, f64) {
    let steps = ((x1 - x0).abs() / 0.25).ceil().max(1.0) as usize;
    let h = (x1 - x0) / steps as f64;
    let (mut c, mut y, mut yp) = (x0, ai, aip);
    for _ in 0..steps {
        // Around c, y(c + s) = sum a_n s^n with a_{n+2} = (c a_n + a_{n-1}) / ((n+2)(n+1)).
        let mut coeffs = [0.0f64; 48];
        coeffs[0] = y;
        coeffs[1] = yp;
        coeffs[2] = c * y / 2.0;
        for n in 1..46 {
            coeffs[n + 2] = (c * coeffs[n] + coeffs[n - 1]) / ((n + 2) as f64 * (n + 1) as f64);
        }
        let (mut val, mut der) = (0.0, 0.0);
        for n in (0..48).rev() {
            val = val * h + coeffs[n];
            if n > 0 {
                der = der * h + n as f64 * coeffs[n];
            }
        }
        y = val;
        yp = der;
        c += h;
    }
    (y, yp)
}

/// Coefficients `u_k`, `v_k` of the Airy asymptotic expansions.
fn airy_series_coefficients(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for k in 1..n {
        let kf = k as f64;
        let next = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(next);
        v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * next);
    }
    (u, v)
}

/// Sums `sum_k sign^k c_{offset + step k} z^{-(offset + step k)}` up to its
/// smallest term.
fn truncated_series(c: &[f64], zeta: f64, offset: usize, alternate: bool) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = offset;
    let mut sign = 1.0;
    while k < c.len() {
        let term = c[k] / zeta.powi(k as i32);
        if term.abs() > prev {
            break;
        }
        sum += sign * term;
        prev = term.abs();
        if alternate {
            sign = -sign;
        }
        k += 2;
    }
    sum
}

fn airy_asymptotic_positive(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (u, v) = airy_series_coefficients(40);
    let mut su = 0.0;
    let mut sv = 0.0;
    let mut prev = f64::INFINITY;
    for k in 0..u.len() {
        let z = zeta.powi(k as i32);
        let (tu, tv) = (u[k] / z, v[k] / z);
        if tu.abs() > prev {
            break;
        }
        prev = tu.abs();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        su += sign * tu;
        sv += sign * tv;
    }
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    (e / q * su, -e * q * sv)
}

fn airy_asymptotic_negative(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z.powf(1.5);
    let (u, v) = airy_series_coefficients(40);
    let phase = zeta - FRAC_PI_4;
    let (s, c) = phase.sin_cos();
    let q = z.powf(0.25);
    let ai = (c * truncated_series(&u, zeta, 0, true) + s * truncated_series(&u, zeta, 1, true)) / (PI.sqrt() * q);
    let aip = q / PI.sqrt() * (s * truncated_series(&v, zeta, 0, true) - c * truncated_series(&v, zeta, 1, true));
    (ai, aip)
}

/// The `k`-th (1-based) zero of `Ai`, a negative number.
pub fn airy_ai_zero(k: usize) -> f64 {
    assert!(k >= 1, "zeros are numbered from 1");
    let t = 3.0 * PI / 8.0 * (4.0 * k as f64 - 1.0);
    let mut x = -t.powf(2.0 / 3.0) * (1.0 + 5.0 / 48.0 / (t * t));
    for _ in 0..50 {
        let (ai, aip) = airy(x);
        let dx = ai / aip;
        x -= dx;
        if dx.abs() < 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// The `k`-th (1-based) zero of `Ai'`, i.e. the `k`-th extremum of `Ai`.
pub fn airy_ai_prime_zero(k: usize) -> f64 {
    assert!(k >= 1, "zeros are numbered from 1");
    let t = 3.0 * PI / 8.0 * (4.0 * k as f64 - 3.0);
    let mut x = -t.powf(2.0 / 3.0) * (1.0 - 7.0 / 48.0 / (t * t));
    for _ in 0..50 {
        let (ai, aip) = airy(x);
        // Ai'' = x Ai.
        let dx = aip / (x * ai);
        x -= dx;
        if dx.abs() < 1e-15 * x.abs() {
            break;
        }
    }
    x
}

/// A number stored as `mantissa * exp(log_scale)` to avoid overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn value(&self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa * self.log_scale.exp()
        }
    }
}

const RESCALE: f64 = 1e100;

/// `L_n(z) e^{-z/2}` in scaled form, by forward three-term recurrence.
pub fn laguerre_scaled(n: usize, z: f64) -> Scaled {
    let mut prev = 1.0;
    let mut cur = 1.0 - z;
    let mut log_scale = -z / 2.0;
    if n == 0 {
        return Scaled {
            mantissa: prev,
            log_scale,
        };
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - z) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    Scaled {
        mantissa: cur,
        log_scale,
    }
}

/// Wigner function of the `n`-th eigenstate of `H = (p^2 + q^2) / 2` at a
/// point of energy `h`.
pub fn oscillator_wigner_exact(n: usize, h: f64, hbar: f64) -> f64 {
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    // L_n(z) e^{-z/2} with z = 4h/hbar equals L_n(4h/hbar) e^{-2h/hbar}.
    sign / (PI * hbar) * laguerre_scaled(n, 4.0 * h / hbar).value()
}

/// The `n`-th normalized eigenfunction of `-(hbar^2/2) d^2/dx^2 + x^2/2`.
pub fn hermite_function(n: usize, x: f64, hbar: f64) -> f64 {
    let y = x / hbar.sqrt();
    let mut log_scale = -y * y / 2.0 - 0.25 * (PI * hbar).ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * y * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    Scaled {
        mantissa: cur,
        log_scale,
    }
    .value()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Spectral window: `fhat` is an even, smooth cutoff in time and `f` its
/// Fourier transform in energy, `f(lambda) = (1/pi) int_0^a fhat(tau) cos(tau lambda) dtau`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothWindow {
    /// Support radius of `fhat`; `fhat = 1` on `[0, a/2]`.
    pub a: f64,
    /// Beyond this `|f(lambda)| < 1e-10 f(0)`.
    pub lambda_cut: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
    #[serde(skip)]
    profile: Vec<f64>,
    #[serde(skip)]
    slope: Vec<f64>,
}

impl PartialEq for SmoothWindow {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a
    }
}

pub const DEFAULT_WINDOW_RADIUS: f64 = 1.0;
const WINDOW_PANELS: usize = 64;
const WINDOW_ORDER: usize = 16;
const WINDOW_CUTOFF: f64 = 1e-10;

/// Builds the window of support radius `a`.
pub fn build_window(a: f64) -> Result<SmoothWindow> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Input(format!("window radius {a} must be positive")));
    }
    let (gl_x, gl_w) = gauss_legendre(WINDOW_ORDER);
    let half = a / 2.0;
    let panel = half / WINDOW_PANELS as f64;
    let mut nodes = Vec::with_capacity(WINDOW_PANELS * WINDOW_ORDER);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for k in 0..WINDOW_PANELS {
        let lo = half + k as f64 * panel;
        for (x, w) in gl_x.iter().zip(&gl_w) {
            let tau = lo + (x + 1.0) * panel / 2.0;
            nodes.push(tau);
            weights.push(w * panel / 2.0);
        }
    }
    let profile = nodes.iter().map(|t| window_profile(*t, a)).collect();
    let slope = nodes.iter().map(|t| window_slope(*t, a)).collect();
    let mut window = SmoothWindow {
        a,
        lambda_cut: 0.0,
        nodes,
        weights,
        profile,
        slope,
    };
    window.lambda_cut = window.find_cutoff();
    Ok(window)
}

fn window_profile(tau: f64, a: f64) -> f64 {
    let half = a / 2.0;
    let t = tau.abs();
    if t <= half {
        1.0
    } else if t >= a {
        0.0
    } else {
        let y = (t - half) / half;
        1.0 / (1.0 + transition_log_ratio(y).exp())
    }
}

/// `ln(g(y) / g(1 - y))` with `g(z) = exp(-1/z)`.
fn transition_log_ratio(y: f64) -> f64 {
    1.0 / (1.0 - y) - 1.0 / y
}

/// `d fhat / d tau` for `tau` in the transition zone `(a/2, a)`.
fn window_slope(tau: f64, a: f64) -> f64 {
    let half = a / 2.0;
    let y = (tau - half) / half;
    if y <= 0.0 || y >= 1.0 {
        return 0.0;
    }
    let r = transition_log_ratio(y);
    if r.abs() > 700.0 {
        return 0.0;
    }
    let e = r.exp();
    -(1.0 / (1.0 - y).powi(2) + 1.0 / (y * y)) / (e + 2.0 + 1.0 / e) / half
}

impl SmoothWindow {
    /// `fhat(tau)`.
    pub fn fhat(&self, tau: f64) -> f64 {
        window_profile(tau, self.a)
    }

    /// `f(lambda)`.
    pub fn f(&self, lambda: f64) -> f64 {
        let half = self.a / 2.0;
        if lambda.abs() * self.a < 4.0 {
            let flat = if lambda == 0.0 {
                half
            } else {
                (lambda * half).sin() / lambda
            };
            let tail: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .zip(&self.profile)
                .map(|((tau, w), g)| w * g * (tau * lambda).cos())
                .sum();
            (flat + tail) / PI
        } else {
            // After one integration by parts only the transition zone
            // contributes, which avoids cancelling two O(1/lambda) terms.
            let body: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .zip(&self.slope)
                .map(|((tau, w), s)| w * s * (tau * lambda).sin())
                .sum();
            -body / (PI * lambda)
        }
    }

    fn find_cutoff(&self) -> f64 {
        let f0 = self.f(0.0).abs();
        let step = 0.05 * 2.0 * PI / self.a;
        let limit = 800.0 / self.a;
        let mut last_large = 0.0;
        let mut lambda = 0.0;
        while lambda < limit {
            if self.f(lambda).abs() >= WINDOW_CUTOFF * f0 {
                last_large = lambda;
            }
            lambda += step;
        }
        last_large + step
    }
}
