use num_complex::Complex;
use renewal_spectral::continuation::{continue_equilibria, detect_bifurcations, BifurcationKind, ContinuationOptions};
use renewal_spectral::discretize::{equilibrium_lift, DiscretizedSystem};
use renewal_spectral::model::{blowflies_equilibrium, blowflies_model, cannibalism_model, ModelConfig, ModelFamily, RenewalModel};
use renewal_spectral::spectral::{char_constant, eigenvalues_at, find_char_roots, DiscreteChar};

fn blowflies_hopf(mu: f64, m: usize) -> Option<f64> {
    let base = blowflies_model(mu * mu.exp() * 2.0f64.exp(), mu, 100.0, 10.0).unwrap();
    let fam = ModelFamily::new(base, "log_ratio", (0.5, 4.0)).unwrap();
    let opts = ContinuationOptions::default();
    let start = blowflies_equilibrium(mu * mu.exp() * 0.5f64.exp(), mu, 100.0, 10.0).unwrap();
    let branch = continue_equilibria(&fam, m, start, 36, &opts).unwrap();
    detect_bifurcations(&fam, m, &branch, &opts)
        .unwrap()
        .into_iter()
        .find(|b| b.kind == BifurcationKind::Hopf)
        .map(|b| b.param)
}

#[test]
fn blowflies_hopf_converges_for_smaller_mu() {
    for mu in [1.0, 2.0] {
        let h20 = blowflies_hopf(mu, 20).expect("Hopf at M = 20");
        let h40 = blowflies_hopf(mu, 40).expect("Hopf at M = 40");
        assert!((h20 - h40).abs() < 1e-3, "mu = {mu}: {h20} vs {h40}");
    }
}

#[test]
fn config_round_trip_builds_the_same_model() {
    let cfg = ModelConfig::from_json(r#"{"model": "blowflies", "params": {"mu": 2.0, "log_ratio": 3.0}}"#).unwrap();
    let model: RenewalModel<f64> = cfg.build().unwrap();
    assert!((model.param("log_ratio").unwrap() - 3.0).abs() < 1e-12);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ModelConfig::from_json(&text).unwrap(), cfg);
    assert!(ModelConfig::named("nope").build::<f64>().is_err());
    let bad = ModelConfig::from_json(r#"{"model": "sirs", "params": {"bogus": 1.0}}"#).unwrap();
    assert!(bad.build::<f64>().is_err());
}

#[test]
fn single_precision_tracks_double() {
    let m = 12;
    let s64 = DiscretizedSystem::with_defaults(cannibalism_model(2.3f64.exp(), 3.0).unwrap(), m).unwrap();
    let s32 = DiscretizedSystem::with_defaults(cannibalism_model(2.3f32.exp(), 3.0).unwrap(), m).unwrap();
    // rounding bound for D_M x - F_M(x) 1 in single precision
    let x = equilibrium_lift(2.3f32, &s32.mesh);
    let d_norm = s32.mesh.diff_sub.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f32>()).fold(0.0, f32::max);
    let bound = 10.0 * f32::EPSILON * (1.0 + d_norm * x.iter().fold(0.0f32, |a, v| a.max(v.abs())));
    assert!(s32.residual(&x).unwrap() < bound);
    let e64 = eigenvalues_at(&s64, 2.3).unwrap().rightmost;
    let e32 = eigenvalues_at(&s32, 2.3f32).unwrap().rightmost;
    assert!((e64.re - e32.re as f64).abs() < 1e-3);
    assert!((e64.im.abs() - e32.im.abs() as f64).abs() < 1e-3);
}

#[test]
fn discrete_roots_approach_true_roots() {
    // rightmost root of 1 = γ(1 - e^{-λ})/λ, located independently from the closed form
    let gamma = 1.5;
    let exact = char_constant(gamma, 1.0);
    let truth = find_char_roots(&exact, &[Complex::new(0.5, 0.1), Complex::new(-2.0, 7.0)], 1e-14).roots;
    let rightmost = truth.iter().copied().fold(truth[0], |a, z| if z.re > a.re { z } else { a });
    let mut prev = f64::INFINITY;
    for m in [4, 8, 12, 16] {
        let sys = DiscretizedSystem::with_defaults(RenewalModel::linear_constant(gamma, 1.0).unwrap(), m).unwrap();
        let chi = DiscreteChar::new(&sys, &ndarray::Array1::zeros(m)).unwrap().into_char_fn();
        let found = find_char_roots(&chi, &[rightmost], 1e-14).roots;
        let err = found.iter().map(|z| (z - rightmost).norm()).fold(f64::INFINITY, f64::min);
        assert!(err < prev || err < 1e-12, "M = {m}: {err:e} after {prev:e}");
        prev = err;
    }
    assert!(prev < 1e-10);
}
