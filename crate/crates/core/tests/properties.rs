use ndarray::Array1;
use num_complex::Complex;
use proptest::prelude::*;
use renewal_spectral::cheb::ChebyshevMesh;
use renewal_spectral::discretize::{equilibrium_lift, equilibrium_project, DiscretizedSystem};
use renewal_spectral::model::{cannibalism_model, RenewalModel};
use renewal_spectral::spectral::{char_constant, char_true, eigenvalues_at};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differentiating_the_nodes_gives_ones(m in 1usize..40, tau in 0.2f64..8.0) {
        let mesh = ChebyshevMesh::<f64>::new(m, tau).unwrap();
        let ones = mesh.diff_sub.dot(&mesh.interior_nodes());
        for v in ones.iter() {
            prop_assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_weights_sum_to_tau(m in 1usize..60, tau in 0.2f64..8.0) {
        let mesh = ChebyshevMesh::<f64>::new(m, tau).unwrap();
        prop_assert!((mesh.quad_weights.sum() - tau).abs() < 1e-12 * tau);
    }

    #[test]
    fn lift_and_project_are_inverse(m in 1usize..30, b in prop_oneof![-50.0f64..-1e-3, 1e-3f64..50.0]) {
        let mesh = ChebyshevMesh::<f64>::new(m, 3.0).unwrap();
        let back = equilibrium_project(&equilibrium_lift(b, &mesh), &mesh).unwrap();
        prop_assert!((back - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn rhs_is_linear_for_linear_models(
        gamma in 0.1f64..3.0,
        xs in proptest::collection::vec(-5.0f64..5.0, 12),
        ys in proptest::collection::vec(-5.0f64..5.0, 12),
        a in -3.0f64..3.0,
    ) {
        let sys = DiscretizedSystem::with_defaults(RenewalModel::linear_constant(gamma, 1.0).unwrap(), 12).unwrap();
        let x = Array1::from(xs);
        let y = Array1::from(ys);
        let lhs = sys.rhs(&(x.mapv(|v| a * v) + &y)).unwrap();
        let rhs = sys.rhs(&x).unwrap().mapv(|v| a * v) + sys.rhs(&y).unwrap();
        let scale = lhs.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn spectrum_is_closed_under_conjugation(gamma in 0.1f64..4.0, m in 2usize..25) {
        let sys = DiscretizedSystem::with_defaults(RenewalModel::linear_constant(gamma, 1.0).unwrap(), m).unwrap();
        let spec = eigenvalues_at(&sys, 0.0).unwrap();
        for z in &spec.eigenvalues {
            let d = spec.eigenvalues.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-9 * (1.0 + z.norm()));
        }
        for w in spec.eigenvalues.windows(2) {
            prop_assert!(w[0].re >= w[1].re);
        }
    }

    #[test]
    fn closed_form_matches_quadrature(gamma in 0.1f64..3.0, tau in 0.5f64..4.0, re in -2.0f64..2.0, im in -6.0f64..6.0) {
        let model = RenewalModel::linear_constant(gamma, tau).unwrap();
        let quad = char_true(&model.linearize(0.0), 256).unwrap();
        let exact = char_constant(gamma, tau);
        let z = Complex::new(re, im);
        let (a, b) = (quad.eval(z).unwrap(), exact.eval(z).unwrap());
        prop_assert!((a - b).norm() <= 1e-10 * (1.0 + b.norm()));
        let (da, db) = (quad.deriv(z).unwrap(), exact.deriv(z).unwrap());
        prop_assert!((da - db).norm() <= 1e-9 * (1.0 + db.norm()));
    }

    #[test]
    fn cannibalism_fixed_point_lifts_to_equilibrium(lg in 0.8f64..4.5, m in 3usize..25) {
        // b̄ = log(γ(τ-1)/2) = log γ for τ = 3
        let sys = DiscretizedSystem::with_defaults(cannibalism_model(lg.exp(), 3.0).unwrap(), m).unwrap();
        let res = sys.residual(&equilibrium_lift(lg, &sys.mesh)).unwrap();
        prop_assert!(res < 1e-10);
    }
}
