use attnspec::freeprob::{bulk_density, limit_moments, BulkLaw, GridSpec};
use attnspec::models::theta_coefficients;

#[test]
fn density_normalized_and_edge_consistent() {
    for beta in [0.5, 1.0, 1.5] {
        let c = theta_coefficients(beta);
        let law = BulkLaw::from_coefficients(&c).unwrap();
        let mass = law.mass().unwrap();
        let squared = law.squared_mass().unwrap();
        let edge = law.support_edge().unwrap();
        let e2 = law.edge().edge_squared;
        println!("beta={beta} mass={mass:.12} squared={squared:.12} edge2={:.6} cubic={e2:.6}", edge * edge);
        assert!((mass - 1.0).abs() < 1e-6);
        assert!((squared - mass).abs() < 1e-8);
        assert!((edge * edge - e2).abs() < 1e-3);
    }
}

#[test]
fn fuss_catalan_moments_by_quadrature() {
    let expected = [1.0, 3.0, 12.0];
    for (q, e) in (1..=3).zip(expected) {
        let m = BulkLaw::new(0.0, 1.0).unwrap().moment_by_quadrature(q).unwrap();
        println!("q={q} m={m:.9}");
        assert!((m - e).abs() < 1e-3, "q={q}: {m}");
    }
}

#[test]
fn quadrature_moments_match_closed_forms() {
    let c = theta_coefficients(1.0);
    let law = BulkLaw::from_coefficients(&c).unwrap();
    for q in 1..=2 {
        let quad = law.moment_by_quadrature(q).unwrap();
        let closed = limit_moments(c.a(), c.b(), q).unwrap();
        println!("q={q} quad={quad:.10} closed={closed:.10}");
        assert!((quad - closed).abs() < 1e-6 * closed);
    }
}

#[test]
fn tabulated_curve() {
    let c = theta_coefficients(1.0);
    let curve = bulk_density(c.a(), c.b(), &GridSpec { points: 200, t_max: None }).unwrap();
    assert_eq!(curve.t.len(), 200);
    assert!(curve.density.iter().all(|p| *p >= 0.0));
    let e2 = curve.support.1;
    for (t, p) in curve.t.iter().zip(&curve.density) {
        if *t > e2 + 1e-3 {
            assert!(*p < 1e-6);
        }
    }
}
