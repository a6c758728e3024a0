use approx::assert_relative_eq;
use cyclequeue::mc::{estimate, replicate, stream, z_test, McEstimate};
use cyclequeue::walk::*;
use proptest::prelude::*;

fn wp(rho: f64) -> WalkParams {
    WalkParams::new(rho).unwrap()
}

#[test]
fn rejects_bad_load() {
    assert!(WalkParams::new(0.0).is_err());
    assert!(WalkParams::new(f64::NAN).is_err());
    assert!(ruin_probability(&wp(1.0), 3, 3, 5).is_err());
}

#[test]
fn stationary_law_sums_to_one() {
    for rho in [0.2, 1.0, 9.0] {
        let total: f64 = (0..300).map(|c| stationary_pmf(&wp(rho), c)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn height_moments_at_unit_load() {
    let (mean, var) = height_moments(&wp(1.0));
    assert_relative_eq!(mean, 1.887_242_872_14, max_relative = 1e-10);
    assert_relative_eq!(var, 1.242_279_204_33, max_relative = 1e-10);
}

#[test]
fn height_tail_is_a_ruin_probability() {
    for rho in [0.5, 2.0, 6.0] {
        for c in [0u64, 1, 4, 10] {
            for h in [0u64, 1, 5, 15] {
                let direct = ruin_probability(&wp(rho), c, c + 1, c + h + 1).unwrap();
                assert_relative_eq!(height_tail(&wp(rho), c, h), direct, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn simulated_excursions_match() {
    let p = wp(1.5);
    let ex = replicate(200_000, 4, |_, rng| simulate_excursion(&p, 0, rng)).unwrap();
    let lengths: Vec<f64> = ex.iter().map(|e| e.length as f64).collect();
    let heights: Vec<f64> = ex.iter().map(|e| e.height as f64).collect();
    let l = McEstimate::from_samples(&lengths, "length").unwrap();
    assert!(z_test(&l, mean_excursion_length(&p, 0), 4.0).pass, "{l:?}");
    let lv = McEstimate::variance_of(&lengths, "length var").unwrap();
    assert!(z_test(&lv, var_excursion_length(&p), 4.0).pass, "{lv:?}");
    let (hm, hv) = height_moments(&p);
    let h = McEstimate::from_samples(&heights, "height").unwrap();
    assert!(z_test(&h, hm, 4.0).pass);
    let hvar = McEstimate::variance_of(&heights, "height var").unwrap();
    assert!(z_test(&hvar, hv, 4.0).pass);
}

#[test]
fn simulated_ruin_matches() {
    let p = wp(3.0);
    let e = estimate(200_000, 9, |rng| Ok(simulate_ruin(&p, 1, 3, 8, rng)? as u8 as f64)).unwrap();
    assert!(z_test(&e, ruin_probability(&p, 1, 3, 8).unwrap(), 4.0).pass);
}

#[test]
fn park_index_is_monotone() {
    let p = wp(1.0);
    assert!(park_index(1, &p).is_err());
    assert!(park_index(10, &p).is_err());
    let idx: Vec<i64> = [100u64, 10_000, 1_000_000, 100_000_000]
        .iter()
        .map(|&m| park_index(m, &p).unwrap())
        .collect();
    assert!(idx.windows(2).all(|w| w[0] <= w[1]), "{idx:?}");
    assert_eq!(max_height_cdf(&p, 10, 0), 0.0);
    assert!(max_height_cdf(&p, 10, 3) < max_height_cdf(&p, 10, 4));
}

#[test]
fn step_cap_is_enforced() {
    let mut rng = stream(1, 0);
    let err = simulate_excursion_capped(&wp(50.0), 0, 3, &mut rng);
    assert!(err.is_err() || err.unwrap().length <= 3);
}

proptest! {
    #[test]
    fn detailed_balance(rho in 0.05f64..30.0, c in 0u64..50) {
        let p = wp(rho);
        let (up, _) = step_probs(&p, c);
        let (_, down) = step_probs(&p, c + 1);
        let lhs = stationary_pmf(&p, c) * up;
        let rhs = stationary_pmf(&p, c + 1) * down;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs));
    }

    #[test]
    fn renewal_identity(rho in 0.05f64..30.0, c in 0u64..40) {
        let p = wp(rho);
        let (up, _) = step_probs(&p, c);
        let tail: f64 = (c + 1..c + 400).map(|j| stationary_pmf(&p, j)).sum();
        // Steps spent above c per up-crossing from c.
        let lhs = stationary_pmf(&p, c) * up * mean_excursion_length(&p, c);
        prop_assert!((lhs - tail).abs() <= 1e-9 * tail.max(1e-300) || tail < 1e-250);
    }

    #[test]
    fn length_is_odd_in_upmoves(seed in any::<u64>(), rho in 0.1f64..5.0, c in 0u64..5) {
        let mut rng = stream(seed, 0);
        let e = simulate_excursion(&wp(rho), c, &mut rng).unwrap();
        prop_assert_eq!(e.length, 2 * e.upmoves + 1);
        prop_assert!(e.height >= 1 && e.height <= e.upmoves + 1);
    }

    #[test]
    fn height_tail_decreases(rho in 0.1f64..20.0, c in 0u64..30, h in 0u64..40) {
        let p = wp(rho);
        prop_assert!(height_tail(&p, c, h + 1) <= height_tail(&p, c, h));
        prop_assert!(height_tail(&p, c, 0) == 1.0);
    }
}
