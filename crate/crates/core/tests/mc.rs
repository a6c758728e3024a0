use cyclequeue::mc::*;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use std::collections::HashSet;

#[test]
fn constant_sampler() {
    let e = estimate(100, 1, |_| Ok(2.5)).unwrap();
    assert_eq!(e.mean, 2.5);
    assert_eq!(e.stderr, 0.0);
    assert!(z_test(&e, 2.5, 4.0).pass);
    assert!(!z_test(&e, 2.6, 4.0).pass);
}

#[test]
fn exponential_mean() {
    let e = estimate(1_000_000, 7, |rng| Ok(Exp::new(1.0).unwrap().sample(rng))).unwrap();
    assert!(z_test(&e, 1.0, 4.0).pass, "{e:?}");
}

#[test]
fn estimates_are_reproducible() {
    let f = |rng: &mut Stream| Ok(rng.random::<f64>());
    let a = estimate(10_000, 11, f).unwrap();
    let b = estimate(10_000, 11, f).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

#[test]
fn estimate_is_affine() {
    let base = estimate(5_000, 3, |rng| Ok(rng.random::<f64>())).unwrap();
    let moved = estimate(5_000, 3, |rng| Ok(3.0 * rng.random::<f64>() - 1.0)).unwrap();
    assert!((moved.mean - (3.0 * base.mean - 1.0)).abs() < 1e-12);
    assert!((moved.stderr - 3.0 * base.stderr).abs() < 1e-12);
}

#[test]
fn failing_replicate_is_named() {
    let err = replicate(50, 1, |i, _| {
        if i == 17 {
            Err(cyclequeue::error::Error::Runtime("boom".into()))
        } else {
            Ok(i)
        }
    })
    .unwrap_err();
    assert!(err.to_string().starts_with("replicate 17"));
}

#[test]
fn streams_do_not_collide() {
    let mut seen = HashSet::new();
    for idx in 0..8 {
        let mut s = stream(99, idx);
        for _ in 0..10_000 {
            assert!(seen.insert(s.random::<u64>()));
        }
    }
    // Equidistribution smoke test on one stream.
    let mut s = stream(99, 3);
    let mut bins = [0u64; 10];
    for _ in 0..100_000 {
        bins[(s.random::<f64>() * 10.0) as usize] += 1;
    }
    assert!(chi_square_gof(&bins, &[0.1; 10]).unwrap().pass);
}

#[test]
fn chi_square_power() {
    let mut rng = stream(5, 0);
    let pois = Poisson::new(1.0).unwrap();
    let hist = histogram((0..100_000).map(|_| pois.sample(&mut rng) as u64));
    let p2 = |c: u64| cyclequeue::specials::poisson_pmf(2.0, c).unwrap();
    let p1 = |c: u64| cyclequeue::specials::poisson_pmf(1.0, c).unwrap();
    assert!(!chi_square_pmf(&hist, p2).unwrap().pass);
    assert!(chi_square_pmf(&hist, p1).unwrap().pass);
}

#[test]
fn ks_calibration_and_power() {
    let mut rng = stream(6, 0);
    let xs: Vec<f64> = (0..5_000).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect();
    assert!(ks_gof(&xs, |x| 1.0 - (-x).exp()).unwrap().pass);
    assert!(!ks_gof(&xs, |x| 1.0 - (-1.2 * x).exp()).unwrap().pass);
    assert!(ks_gof(&xs[..10], |x| x).is_err());
}

#[test]
fn batch_means_scaling() {
    // i.i.d. unit-length pieces: stderr halves when the path is four times longer.
    let se = |len: usize| {
        let mut rng = stream(8, len as u64);
        let path: Vec<(f64, f64)> = (0..len).map(|i| (i as f64, rng.random::<f64>())).collect();
        batch_means(&path, len as f64, 20).unwrap().stderr
    };
    let ratio = se(20_000) / se(80_000);
    assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    let flat = batch_means(&[(0.0, 3.0)], 10.0, 10).unwrap();
    assert_eq!((flat.mean, flat.stderr), (3.0, 0.0));
    assert!(batch_means(&[(0.0, 1.0)], 10.0, 5).is_err());
}

#[test]
fn covariance_estimate() {
    let mut rng = stream(12, 0);
    let xs: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + rng.random::<f64>()).collect();
    let c = McEstimate::covariance_of(&xs, &ys, "test").unwrap();
    assert!(z_test(&c, 2.0 / 12.0, 4.0).pass, "{c:?}");
}
