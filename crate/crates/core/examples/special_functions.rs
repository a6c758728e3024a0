//! The numerical building blocks: Kummer's function, E1, quadrature and
//! root finding.

use cyclequeue::specials::*;

fn main() -> cyclequeue::error::Result<()> {
    for z in [-10.0, -1.0, 0.5, 5.0] {
        println!("M(0.5, 1.5, {z}) = {:.12}", kummer_m(0.5, 1.5, z)?);
    }
    for x in [1e-3, 1.0, 30.0] {
        println!("E1({x}) = {:.12e}", exp_integral_e1(x)?);
    }
    // t e^{-t} <= (2/e) e^{-t/2}
    let tail = TailBound {
        constant: 2.0 / std::f64::consts::E,
        rate: 0.5,
    };
    let (v, err) = integrate_with_error(
        |t| t * (-t).exp(),
        0.0,
        Upper::Infinite(tail),
        &QuadratureSpec::default(),
    )?;
    println!("∫ t e^-t dt = {v:.12} (error estimate {err:.1e})");
    let root = find_root(|x| x.exp() - 3.0, &RootSpec::bracket(0.0, 2.0)?)?;
    println!("ln 3 = {root:.12}");
    println!("H_10 = {:.12}, ln 20! = {:.12}", harmonic(10)?, ln_factorial(20));
    Ok(())
}
