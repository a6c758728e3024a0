use approx::assert_relative_eq;
use cyclequeue::specials::*;
use proptest::prelude::*;

#[test]
fn poisson_mass_is_one() {
    for rho in [0.1, 1.0, 7.5, 40.0] {
        let total: f64 = (0..400).map(|c| poisson_pmf(rho, c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10, "rho={rho}: {total}");
    }
    assert!(poisson_pmf(0.0, 1).is_err());
}

#[test]
fn reference_values() {
    // Values from an independent arbitrary-precision evaluation.
    assert_relative_eq!(
        kummer_m(0.5, 1.5, 2.0).unwrap(),
        2.364_453_892_805_209,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        kummer_m(1.0, 2.0, -3.0).unwrap(),
        (1.0 - (-3.0f64).exp()) / 3.0,
        max_relative = 1e-13
    );
    assert_relative_eq!(
        exp_integral_e1(1.0).unwrap(),
        0.219_383_934_395_520_3,
        max_relative = 1e-13
    );
    assert_relative_eq!(
        exp_integral_e1(0.01).unwrap(),
        4.037_929_576_538_114,
        max_relative = 1e-13
    );
    assert_relative_eq!(harmonic(4).unwrap(), 25.0 / 12.0, max_relative = 1e-15);
    assert_relative_eq!(ln_factorial(30), 74.658_236_348_830_16, max_relative = 1e-14);
}

#[test]
fn kummer_equal_parameters() {
    for a in [0.5, 1.0, 3.0] {
        for i in 0..=20 {
            let z = -5.0 + 0.5 * i as f64;
            assert_relative_eq!(kummer_m(a, a, z).unwrap(), z.exp(), max_relative = 1e-9);
        }
    }
}

#[test]
fn polynomials_integrate_exactly() {
    let spec = QuadratureSpec::default();
    let v = integrate(
        |x| 1.0 - 2.0 * x + 3.0 * x * x - 4.0 * x.powi(3),
        -1.0,
        Upper::Finite(2.0),
        &spec,
    )
    .unwrap();
    // ∫ = [x − x² + x³ − x⁴] from −1 to 2 = (2 − 4 + 8 − 16) − (−1 − 1 − 1 − 1)
    assert!((v - (-10.0 + 4.0)).abs() < spec.abs_tol);
}

#[test]
fn infinite_range_with_tail_bound() {
    let tail = TailBound {
        constant: 1.0,
        rate: 2.0,
    };
    let v = integrate(
        |x| (-2.0 * x).exp(),
        0.0,
        Upper::Infinite(tail),
        &QuadratureSpec::new(1e-14, 1e-12, 60).unwrap(),
    )
    .unwrap();
    assert_relative_eq!(v, 0.5, max_relative = 1e-12);
}

#[test]
fn brent_on_lipschitz_functions() {
    let r = find_root(|x| x.cos() - x, &RootSpec::bracket(0.0, 1.0).unwrap()).unwrap();
    assert!((r.cos() - r).abs() < 1e-8);
    let r = find_root(
        |x| (x - 0.3).abs().sqrt() * (x - 0.3).signum(),
        &RootSpec::bracket(0.0, 1.0).unwrap(),
    )
    .unwrap();
    assert!((r - 0.3).abs() < 1e-8);
    assert!(find_root(|x| x * x + 1.0, &RootSpec::bracket(-1.0, 1.0).unwrap()).is_err());
}

proptest! {
    // b M(a,b,z) − b M(a−1,b,z) − z M(a,b+1,z) = 0
    #[test]
    fn kummer_contiguous_relation(a in 0.2f64..6.0, b in 0.5f64..8.0, z in -10.0f64..10.0) {
        let lhs = b * kummer_m(a, b, z).unwrap() - b * kummer_m(a - 1.0, b, z).unwrap();
        let rhs = z * kummer_m(a, b + 1.0, z).unwrap();
        let scale = (b * kummer_m(a, b, z).unwrap()).abs().max(rhs.abs()).max(1e-300);
        prop_assert!((lhs - rhs).abs() <= 1e-7 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gamma_ratio_telescopes(x in 1.0f64..1e7, a in -3.0f64..3.0) {
        // ln Γ(x+a+1) − ln Γ(x+a) = ln(x+a)
        let d = ln_gamma_ratio(x, a + 1.0, a);
        prop_assert!((d - (x + a).ln()).abs() < 1e-9 * (x + a).ln().abs().max(1.0));
    }

    #[test]
    fn rising_factorial_recursion(x in 0.1f64..50.0, n in 1u64..80) {
        let lhs = ln_rising(x, n);
        let rhs = ln_rising(x, n - 1) + (x + (n - 1) as f64).ln();
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn e1_derivative(x in 0.05f64..30.0) {
        let h = 1e-5 * x;
        let d = (exp_integral_e1(x + h).unwrap() - exp_integral_e1(x - h).unwrap()) / (2.0 * h);
        prop_assert!((d + (-x).exp() / x).abs() < 1e-6 * (-x).exp() / x);
    }
}
