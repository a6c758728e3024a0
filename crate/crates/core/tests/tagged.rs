use approx::assert_relative_eq;
use cyclequeue::mc::{chi_square_pmf, histogram, stream, z_test};
use cyclequeue::specials::poisson_pmf;
use cyclequeue::tagged::*;
use proptest::prelude::*;

#[test]
fn rejects_bad_input() {
    assert!(TaggedParams::new(1.0, vec![]).is_err());
    assert!(TaggedParams::new(1.0, vec![1.0, -2.0]).is_err());
    let p = TaggedParams::permutation(1.0, 4).unwrap();
    assert!(covariance(&p, 2, 2).is_err());
    assert!(covariance(&p, 1, 5).is_err());
    assert!(lagrange_correlation(&[1.0, 2.0, 1.0], 1, 3).is_err());
    let mut rng = stream(1, 0);
    assert!(simulate_tagged(&p, 10, 1.0, &mut rng).is_err());
}

#[test]
fn general_rates_have_no_closed_form() {
    let p = TaggedParams::new(1.0, vec![1.0, 3.0, 2.0]).unwrap();
    for r in [
        covariance(&p, 1, 2),
        covariance_quadrature(&p, 1, 3),
        phi_psi(&p, 1, 2, 1.0).map(|x| x.0),
    ] {
        assert!(matches!(r, Err(cyclequeue::error::Error::Unsupported(_))));
    }
    assert!(joint_pgf(&p, 1, 2, 0.5, 0.5).is_err());
}

#[test]
fn known_correlations() {
    // j=1, k=2: √2 · C(1,1) C(1,0) 1! 1! / 3! = √2/6.
    assert_relative_eq!(correlation(1, 2).unwrap(), 2f64.sqrt() / 6.0, max_relative = 1e-14);
    let p = TaggedParams::permutation(2.0, 3).unwrap();
    assert_relative_eq!(covariance(&p, 1, 2).unwrap(), 2.0 / 6.0, max_relative = 1e-14);
}

#[test]
fn pgf_marginals_and_mixed_moment() {
    let p = TaggedParams::permutation(1.3, 4).unwrap();
    let (j, k) = (2, 4);
    for x in [0.0, 0.4, 0.9] {
        assert_relative_eq!(
            joint_pgf(&p, j, k, x, 1.0).unwrap(),
            (p.load(j) * (x - 1.0)).exp(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            joint_pgf(&p, j, k, 1.0, x).unwrap(),
            (p.load(k) * (x - 1.0)).exp(),
            max_relative = 1e-9
        );
    }
    // E[L_j L_k] from a mixed difference at (1, 1).
    let h = 1e-4;
    let g = |x, y| joint_pgf(&p, j, k, x, y).unwrap();
    let mixed = (g(1.0, 1.0) - g(1.0 - h, 1.0) - g(1.0, 1.0 - h) + g(1.0 - h, 1.0 - h)) / (h * h);
    let cov = mixed - p.load(j) * p.load(k);
    assert_relative_eq!(cov, covariance(&p, j, k).unwrap(), max_relative = 1e-3);
}

#[test]
fn phi_and_psi_limits() {
    let p = TaggedParams::permutation(1.0, 5).unwrap();
    let (phi0, psi0) = phi_psi(&p, 2, 5, 0.0).unwrap();
    assert_eq!((phi0, psi0), (0.0, 0.0));
    let (phi, psi) = phi_psi(&p, 2, 5, 60.0).unwrap();
    assert!(phi < 1e-20 && (psi - 1.0).abs() < 1e-12);
    let (phi, psi) = phi_psi(&p, 2, 5, 0.7).unwrap();
    assert!(phi <= psi && (0.0..=1.0).contains(&phi));
}

#[test]
fn simulated_marginals_are_poisson() {
    let p = TaggedParams::permutation(1.5, 3).unwrap();
    let mut rng = stream(21, 0);
    let obs = simulate_tagged(&p, 60_000, 20.0, &mut rng).unwrap();
    for j in 1..=3 {
        let hist = histogram(obs.iter().map(|o| o.occupancies[j - 1]));
        assert!(
            chi_square_pmf(&hist, |c| poisson_pmf(p.load(j), c).unwrap())
                .unwrap()
                .pass,
            "station {j}"
        );
    }
    let mut buf = Vec::new();
    write_observations_csv(&obs[..3], 3, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("tag_id,L1,L2,L3\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn general_rates_by_simulation() {
    let rates = vec![1.0, 3.0, 2.0];
    let p = TaggedParams::new(1.0, rates.clone()).unwrap();
    let est = tagged_moments_mc(&p, &[(1, 3), (1, 2)], 400_000, 20.0, 5, 40).unwrap();
    for (&(j, k), (_, corr)) in [(1, 3), (1, 2)].iter().zip(&est) {
        let target = lagrange_correlation(&rates, j, k).unwrap();
        assert!(z_test(corr, target, 4.0).pass, "({j},{k}): {corr:?} vs {target}");
    }
}

#[test]
fn permutation_rates_by_simulation() {
    let p = TaggedParams::permutation(1.0, 4).unwrap();
    let est = tagged_moments_mc(&p, &[(1, 4), (2, 3)], 400_000, 20.0, 6, 40).unwrap();
    for (&(j, k), (cov, corr)) in [(1, 4), (2, 3)].iter().zip(&est) {
        assert!(z_test(cov, covariance(&p, j, k).unwrap(), 4.0).pass);
        assert!(z_test(corr, correlation(j, k).unwrap(), 4.0).pass);
    }
}

proptest! {
    #[test]
    fn correlation_normalises_covariance(theta in 0.05f64..20.0, s in 0.1f64..5.0, k in 2usize..25, jr in 0.0f64..1.0) {
        let j = 1 + ((k - 1) as f64 * jr) as usize % (k - 1);
        let p = TaggedParams::new(theta, (1..=k).map(|i| s * i as f64).collect()).unwrap();
        let lhs = correlation(j, k).unwrap();
        let rhs = covariance(&p, j, k).unwrap() / (p.load(j) * p.load(k)).sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        prop_assert!(lhs > 0.0 && lhs < 1.0);
    }

    #[test]
    fn interpolation_matches_closed_form(k in 2usize..9, jr in 0.0f64..1.0) {
        let j = 1 + ((k - 1) as f64 * jr) as usize % (k - 1);
        let rates: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let a = lagrange_correlation(&rates, j, k).unwrap();
        prop_assert!((a - correlation(j, k).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn quadrature_matches_closed_form(theta in 0.1f64..5.0, k in 2usize..7, jr in 0.0f64..1.0) {
        let j = 1 + ((k - 1) as f64 * jr) as usize % (k - 1);
        let p = TaggedParams::permutation(theta, k).unwrap();
        let a = covariance_quadrature(&p, j, k).unwrap();
        let b = covariance(&p, j, k).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn interpolation_is_scale_free(rates in proptest::collection::vec(0.1f64..10.0, 2..7), c in 0.01f64..100.0) {
        let k = rates.len();
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-3));
        let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
        let a = lagrange_correlation(&rates, 1, k).unwrap();
        let b = lagrange_correlation(&scaled, 1, k).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
    }
}
