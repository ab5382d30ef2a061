mod common;

use common::*;
use singlab_core::flow::*;
use singlab_core::solenoid::{FiberPoint, SolenoidPoint};

#[test]
fn section_and_flow_agree() {
    let rep = return_consistency(&flow(), &section(true, 0.05, placement()), &ReturnCheckSettings::default()).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn landing_and_dwell_scale_with_the_spectrum() {
    let m = flow();
    let near = near_singularity_scaling(&m, &ReturnCheckSettings::default()).unwrap();
    let kappa = m.spectrum.kappa();
    assert!((near.landing_slope - kappa).abs() <= 0.15 * kappa, "{}", near.landing_slope);
    let dwell = 1.0 / m.spectrum.alpha1;
    assert!((near.dwell_slope - dwell).abs() <= 0.1 * dwell, "{}", near.dwell_slope);
}

#[test]
fn spectrum_recovered_at_sigma() {
    let rep = spectrum_check(&flow()).unwrap();
    assert!(rep.pass);
    assert!(rep.values["eigenvalue_error"] < 1e-8);
    assert_eq!(rep.values["index"], 3.0);
    assert_eq!(rep.values["volume_expansion_at_sigma"], 3.0);
}

#[test]
fn saddle_orbit_rates_are_its_multipliers() {
    let m = flow();
    let z = SolenoidPoint::new(SADDLE, FiberPoint::new(0.0, 0.0));
    let fib = m.skew.eval_f(&z).unwrap().fiber;
    // the periodic fiber point solves y = λ y + h(p)
    let y = fib.vec() / (1.0 - m.skew.lambda_f);
    let z = SolenoidPoint::new(SADDLE, FiberPoint::new(y.x, y.y));
    let s = periodic_splitting(&m, z, 1, 50.0).unwrap();
    assert!((s.det_exponent - 3f64.ln()).abs() < 1e-6, "{}", s.det_exponent);
    assert!((s.min_sectional_exponent - 0.5f64.ln()).abs() < 1e-6, "{}", s.min_sectional_exponent);
    assert!(s.domination_ratio < (-1.0f64).exp());
}
