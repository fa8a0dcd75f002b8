use proptest::prelude::*;

use attnspec::ensembles::sample_gaussian_matrix;
use attnspec::freeprob::{k_derivative, solve_edge, PoissonLaw};
use attnspec::models::{softmax_attention, taylor_polynomial, theta_coefficients};
use attnspec::spectra::{check_interlacing, squared_singular_values, EmpiricalDistribution};
use attnspec::MasterSeed;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_rows_are_stochastic(seed in any::<u64>(), n in 1usize..24, beta in 0.0f64..8.0) {
        let s = sample_gaussian_matrix(n, n, MasterSeed(seed)).unwrap();
        let a = softmax_attention(&s, beta).unwrap().a;
        for row in a.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn spectrum_trace_matches_frobenius(seed in any::<u64>(), r in 1usize..20, c in 1usize..20) {
        let m = sample_gaussian_matrix(r, c, MasterSeed(seed)).unwrap();
        let s = squared_singular_values(&m).unwrap();
        prop_assert_eq!(s.len(), r);
        prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        let trace: f64 = s.values.iter().sum();
        prop_assert!((trace - m.norm_squared()).abs() <= 1e-9 * m.norm_squared().max(1.0));
    }

    #[test]
    fn rank_one_update_interlaces(seed in any::<u64>(), n in 2usize..16, scale in -3.0f64..3.0) {
        let m = sample_gaussian_matrix(n, n, MasterSeed(seed)).unwrap();
        let shifted = m.map(|v| v + scale);
        let a = squared_singular_values(&shifted).unwrap();
        let b = squared_singular_values(&m).unwrap();
        prop_assert!(check_interlacing(&a, &b).unwrap().passed);
    }

    #[test]
    fn edge_is_critical_point_of_k(a in 0.05f64..4.0, b in 0.05f64..4.0) {
        let e = solve_edge(a, b).unwrap();
        prop_assert!(k_derivative(e.w_star, a, b).unwrap().abs() < 1e-8 * (1.0 + 1.0 / (e.w_star * e.w_star)));
        prop_assert!(e.edge > 2.0 * (a * a + b * b).sqrt());
    }

    #[test]
    fn theta_coefficients_are_ordered(beta in 0.01f64..3.0) {
        let c = theta_coefficients(beta);
        prop_assert!(c.theta1 > c.theta2 && c.theta2 > 0.0);
        prop_assert!((c.a() * c.a() + c.b() * c.b() - c.theta1).abs() < 1e-9 * c.theta1);
    }

    #[test]
    fn taylor_polynomial_approaches_exp(y in -2.0f64..2.0) {
        prop_assert!((taylor_polynomial(y, 30) - y.exp()).abs() < 1e-12 * y.exp().max(1.0));
    }

    #[test]
    fn quantile_inverts_cdf(points in prop::collection::vec(-100.0f64..100.0, 1..50), p in 0.001f64..1.0) {
        let dist = EmpiricalDistribution::new(points).unwrap();
        let q = dist.quantile(p);
        prop_assert!(dist.cdf(q) >= p - 1e-12);
    }

    #[test]
    fn poisson_quantile_is_smallest(lambda in 0.1f64..20.0, p in 0.01f64..0.999) {
        let law = PoissonLaw::new(lambda).unwrap();
        let k = law.quantile(p);
        let cdf = |k: u64| (0..=k).map(|j| law.pmf(j)).sum::<f64>();
        prop_assert!(cdf(k) >= p - 1e-12);
        if k > 0 {
            prop_assert!(cdf(k - 1) < p);
        }
    }
}
