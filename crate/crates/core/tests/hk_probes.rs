use num_complex::Complex64;
use wigner_airy::classical::{flow, PhasePoint};
use wigner_airy::hk::{coherent_state, hk_propagate_state, GridState, HkQuadrature, PhaseBox};
use wigner_airy::{IntegratorSpec, Potential};

const HBAR: f64 = 0.05;

fn initial_state() -> GridState {
    let (x0, x1, n) = (-4.0, 4.0, 321);
    let dx = (x1 - x0) / (n - 1) as f64;
    let values = (0..n)
        .map(|i| coherent_state(x0 + i as f64 * dx, 0.6, 0.4, HBAR))
        .collect();
    GridState { x0, dx, values }
}

/// Box covering the classical orbit of the packet centre up to time `t`, with margin.
fn orbit_box(pot: &Potential, t: f64) -> PhaseBox {
    let start = PhasePoint::new(vec![0.6], vec![0.4]).unwrap();
    let margin = 7.0 * HBAR.sqrt();
    let mut lo = [0.6f64 - margin, 0.4 - margin];
    let mut hi = [0.6f64 + margin, 0.4 + margin];
    for k in 1..=20 {
        let fr = flow(pot, &start, t * k as f64 / 20.0, &IntegratorSpec::default()).unwrap();
        for (j, z) in [fr.end.q[0], fr.end.p[0]].into_iter().enumerate() {
            lo[j] = lo[j].min(z - margin);
            hi[j] = hi[j].max(z + margin);
        }
    }
    PhaseBox { lo, hi }
}

fn distance(a: &GridState, b: &GridState) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(u, v)| (u - v).norm_sqr())
        .sum::<f64>()
        .sqrt()
        * a.dx.sqrt()
}

#[test]
fn propagated_packet_keeps_unit_norm() {
    let psi = initial_state();
    assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
    for pot in [Potential::harmonic(1), Potential::cosine_perturbed(1, 0.4).unwrap()] {
        let out = hk_propagate_state(&psi, 1.0, &pot, HBAR, &orbit_box(&pot, 1.0), &HkQuadrature::default()).unwrap();
        let norm = out.norm_squared();
        assert!((norm - 1.0).abs() < 0.01, "{pot:?}: norm {norm}");
    }
}

#[test]
fn oscillator_packet_follows_the_exact_evolution() {
    // A coherent state of the unit oscillator stays coherent up to the phase e^{-it/2}
    // and the action accumulated by its centre.
    let pot = Potential::harmonic(1);
    let psi = initial_state();
    let t = 1.0;
    let out = hk_propagate_state(&psi, t, &pot, HBAR, &orbit_box(&pot, t), &HkQuadrature::default()).unwrap();
    let (q, p) = (0.6 * t.cos() + 0.4 * t.sin(), 0.4 * t.cos() - 0.6 * t.sin());
    let exact: Vec<Complex64> = out.grid().map(|x| coherent_state(x, q, p, HBAR)).collect();
    let overlap = out
        .values
        .iter()
        .zip(&exact)
        .map(|(a, b)| b.conj() * a)
        .sum::<Complex64>()
        * out.dx;
    assert!((overlap.norm() - 1.0).abs() < 1e-6, "{overlap}");
}

#[test]
fn half_steps_compose_to_the_full_step() {
    let psi = initial_state();
    let quad = HkQuadrature::default();
    for (pot, tol) in [
        (Potential::harmonic(1), 1e-6),
        (Potential::cosine_perturbed(1, 0.4).unwrap(), 1e-3),
    ] {
        let full = hk_propagate_state(&psi, 1.0, &pot, HBAR, &orbit_box(&pot, 1.0), &quad).unwrap();
        let half = hk_propagate_state(&psi, 0.5, &pot, HBAR, &orbit_box(&pot, 0.5), &quad).unwrap();
        // The second half-step starts from the state at t = 0.5, whose support
        // lies inside the orbit box of the full step.
        let composed = hk_propagate_state(&half, 0.5, &pot, HBAR, &orbit_box(&pot, 1.0), &quad).unwrap();
        let gap = distance(&full, &composed);
        assert!(gap < tol, "{pot:?}: {gap:e}");
    }
}
