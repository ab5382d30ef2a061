mod common;

use common::*;
use proptest::prelude::*;
use singlab_core::endomorphism::FixedPointKind;
use singlab_core::lp::{certify_h6, survival};
use singlab_core::map::BaseMap;
use singlab_core::punctured::lambda1_and_r0;
use singlab_core::torus::{TorusPoint, V2};

#[test]
fn h6_default_has_one_repeller_out_and_one_saddle_in() {
    let f = endo(true);
    let h6 = certify_h6(&f, 32);
    assert!(h6.certificate.pass, "{:?}", h6.certificate);
    let r = f.regions();
    let rep: Vec<_> = h6.fixed_points.iter().filter(|p| p.kind == FixedPointKind::Repelling && !r.u1.contains(&p.location)).collect();
    let sad: Vec<_> = h6.fixed_points.iter().filter(|p| p.kind == FixedPointKind::Saddle && r.u0.contains(&p.location)).collect();
    assert_eq!((rep.len(), sad.len()), (1, 1));
    let moduli = |p: &singlab_core::endomorphism::FixedPointRecord| {
        let mut m: Vec<f64> = p.multipliers.iter().map(|m| m.modulus()).collect();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    };
    let (a, b) = (moduli(rep[0]), moduli(sad[0]));
    assert!((a[0] - 3.0).abs() < 1e-8 && (a[1] - 2.0).abs() < 1e-8, "{a:?}");
    assert!((b[0] - 6.0).abs() < 1e-8 && (b[1] - 0.5).abs() < 1e-8, "{b:?}");
}

#[test]
fn h6_fails_without_deformation() {
    let h6 = certify_h6(&endo(false), 32);
    assert!(!h6.certificate.pass);
    assert!(h6.certificate.reason.unwrap().contains("no saddle"));
}

#[test]
fn vertical_arc_through_the_saddle_enters_u1_at_once() {
    // x1 = 1/2 is invariant and x2 doubles outside U0
    let f = endo(true);
    for i in 0..=100 {
        let x = V2::new(0.5, 0.42 + 0.16 * i as f64 / 100.0);
        assert_eq!(survival(&f, x, 25).0, 0, "{x:?}");
    }
}

#[test]
fn blow_up_slope_is_set_by_the_exponent() {
    let f = punctured(true);
    let slope = f.determinant_slope(1.1, 1e-11, 1e-8, 25).unwrap();
    assert!((slope - (f.blowup.kappa - 2.0)).abs() < 0.02, "{slope}");
}

#[test]
fn expanding_core_stays_outside_u1() {
    let f = punctured(true);
    let core = lambda1_and_r0(&f, 25, 256).unwrap();
    assert!(core.r0 > 0.06);
    let u1 = f.regions().u1;
    assert!(core.points.iter().all(|p| !u1.contains(p)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preimages_map_back(x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
        let f = punctured(true);
        let y = TorusPoint::new(x1, x2);
        prop_assume!(y.dist(&HOLE) > 0.03);
        for x in f.preimages(y, 1e-9).unwrap() {
            prop_assert!(f.apply(x).unwrap().dist(&y) < 1e-9);
        }
    }

    #[test]
    fn fiber_disk_is_invariant(x1 in 0.0f64..1.0, x2 in 0.0f64..1.0, r in 0.0f64..1.0, th in 0.0f64..6.28) {
        let sec = section(true, 0.05, placement());
        let b = TorusPoint::new(x1, x2);
        prop_assume!(b.dist(&HOLE) > 1e-6);
        let z = singlab_core::solenoid::SolenoidPoint::new(b, singlab_core::solenoid::FiberPoint::new(r * th.cos(), r * th.sin()));
        prop_assert!(sec.eval_f(&z).unwrap().fiber.norm() <= 1.0);
    }
}
