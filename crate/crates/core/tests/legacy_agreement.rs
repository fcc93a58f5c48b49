// Both formulations discretize the same equation, so they must agree on
// equilibria and, for smooth data, on trajectories.

use ndarray::Array1;
use renewal_spectral::discretize::{equilibrium_lift, history_to_state, DiscretizedSystem};
use renewal_spectral::dynamics::{dopri5, integrate, IntegratorOptions};
use renewal_spectral::legacy::LegacySystem;
use renewal_spectral::linalg::Lu;
use renewal_spectral::model::cannibalism_model;

#[test]
fn equilibrium_values_agree() {
    for &lg in &[2.0f64, 2.5, 3.5] {
        let model = cannibalism_model(lg.exp(), 3.0).unwrap();
        let b = lg; // log(γ(τ-1)/2) with τ = 3
        let leg = LegacySystem::with_defaults(model.clone(), 20).unwrap();

        // constant nodal values at b̄ are a legacy equilibrium
        let y = Array1::from_elem(20, b);
        let out = leg.rhs_detailed(&y).unwrap();
        assert!((out.y0 - b).abs() < 1e-9);
        assert!(out.value.iter().all(|v| v.abs() < 1e-9));

        // Newton on the legacy system from a perturbed state lands on b̄
        let mut y = Array1::from_iter((0..20).map(|j| b * (1.0 + 0.01 * (j as f64).sin())));
        for _ in 0..20 {
            let r = leg.rhs(&y).unwrap();
            if r.iter().all(|v| v.abs() < 1e-12) {
                break;
            }
            let step = Lu::new(leg.jacobian_fd(&y).unwrap()).unwrap().solve(&r);
            y = &y - &step;
        }
        let (y0, _, _) = leg.solve_current_value(&y).unwrap();
        assert!((y0 - b).abs() < 1e-8, "legacy {y0} vs {b}");
        assert!(y.iter().all(|v| (v - b).abs() < 1e-8));

        let cur = DiscretizedSystem::with_defaults(model, 20).unwrap();
        assert!(cur.residual(&equilibrium_lift(b, &cur.mesh)).unwrap() < 1e-10);
    }
}

#[test]
fn trajectories_agree_over_five_delays() {
    let m = 20;
    let tau = 3.0;
    let model = cannibalism_model(3.0f64.exp(), tau).unwrap();
    let cur = DiscretizedSystem::with_defaults(model.clone(), m).unwrap();
    let leg = LegacySystem::with_defaults(model, m).unwrap();

    // a smooth history: a stretch of an actual oscillating solution
    let warm = integrate(&cur, &equilibrium_lift(3.0 * 1.1, &cur.mesh), 10.0 * tau, 1e-11, 1e-13).unwrap();
    let t0 = 10.0 * tau;
    let phi = |theta: f64| warm.b_at(t0 + theta);

    let x0 = history_to_state(phi, &cur.mesh, 256).unwrap();
    let y0 = cur.mesh.interior_nodes().mapv(phi);

    let horizon = 5.0 * tau;
    let traj = integrate(&cur, &x0, horizon, 1e-11, 1e-13).unwrap();
    let sol = dopri5(|_, y: &Array1<f64>| leg.rhs(y), &y0, 0.0, horizon, &IntegratorOptions::new(1e-11, 1e-13), true)
        .unwrap();

    let mut worst: f64 = 0.0;
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let (b_leg, _, _) = leg.solve_current_value(y).unwrap();
        worst = worst.max((b_leg - traj.b_at(*t)).abs());
    }
    assert!(worst < 1e-4, "max |b_legacy - b_current| = {worst:e}");
}
