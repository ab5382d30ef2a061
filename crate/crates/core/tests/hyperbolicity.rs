mod common;

use common::*;
use singlab_core::hyperbolicity::*;
use singlab_core::lp::{certify_lp_suite, LpSettings};
use singlab_core::lyapunov::lyapunov_spectrum;
use singlab_core::perturbation::PerturbationSpec;
use singlab_core::punctured::lambda1_and_r0;
use singlab_core::solenoid::{FiberPlacement, SolenoidPoint};
use singlab_core::LabError;

fn quick_lp() -> LpSettings {
    LpSettings { resolution: 256, probe_resolution: 256, arcs: 100, polar_rings: 40, polar_angles: 72, ..LpSettings::default() }
}

fn quick_robust() -> RobustnessSettings {
    RobustnessSettings {
        lp: quick_lp(),
        h6_grid: 16,
        core_resolution: 256,
        irg_disks: 3,
        density_probe: 256,
        density_tol: 0.05,
        ..RobustnessSettings::default()
    }
}

fn quick_sh() -> SingularHyperbolicitySettings {
    SingularHyperbolicitySettings { cone_samples: 2000, flow_samples: 12, horizon: 20.0, ..SingularHyperbolicitySettings::default() }
}

#[test]
fn zero_perturbation_reproduces_unperturbed_margins() {
    let sec = section(true, 0.05, placement());
    let s = quick_robust();
    let spec = PerturbationSpec::generate(5, 2, 0.0, HOLE).unwrap();
    let rec = perturb_and_recheck(&sec, &spec, &s).unwrap();
    assert_eq!(rec.lp, certify_lp_suite(&sec.base, &s.lp).unwrap());
    let core = lambda1_and_r0(&sec.base, s.core_horizon, s.core_resolution).unwrap();
    assert_eq!(rec.core_continuation.values["r0"].to_bits(), core.r0.to_bits());
    assert_eq!(rec.h6_continuation.values["max_displacement"], 0.0);
}

#[test]
fn oversized_perturbation_rejected_before_running() {
    let sec = section(true, 0.05, placement());
    let mut spec = PerturbationSpec::generate(5, 2, 1e-3, HOLE).unwrap();
    spec.c1_size = 1.0;
    assert!(matches!(perturb_and_recheck(&sec, &spec, &quick_robust()), Err(LabError::Precondition(_))));
    assert!(PerturbationSpec::generate(5, 2, 1.0, HOLE).is_err());
}

#[test]
fn default_model_is_singular_hyperbolic() {
    let rep = singular_hyperbolicity_certificate(&section(true, 0.05, placement()), &flow(), &quick_sh()).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn weak_fiber_contraction_loses_domination() {
    // keeps |c1| + |c2| + λ_f ≤ 1 so the fiber disk stays invariant
    let p = FiberPlacement { c1: 0.25, c2: 0.15 };
    let rep = singular_hyperbolicity_certificate(&section(true, 0.6, p), &flow_with(0.6, p, spectrum()), &quick_sh()).unwrap();
    assert!(!rep.pass, "{rep:#?}");
    assert!(rep.reason.as_ref().unwrap().contains("SH_domination"), "{rep:#?}");
}

#[test]
fn weak_unstable_rates_fail_the_spectrum() {
    let mut sp = spectrum();
    sp.alpha1 = 0.3;
    sp.alpha2 = 0.3;
    let rep = singular_hyperbolicity_certificate(&section(true, 0.05, placement()), &flow_with(0.05, placement(), sp), &quick_sh()).unwrap();
    assert!(!rep.pass);
    assert!(rep.reason.unwrap().contains("singularity_spectrum"));
}

#[test]
fn witness_pairs_the_two_fixed_orbits() {
    let w = non_sectional_witness(&section(true, 0.05, placement()), &flow(), &WitnessSettings::default()).unwrap();
    assert!(w.report.pass, "{:?}", w.report);
    assert_eq!(w.index2.orbit[0].dist(&singlab_core::torus::TorusPoint::new(0.0, 0.0)), 0.0);
    assert!(w.index3.orbit[0].dist(&SADDLE) < 1e-12);
    assert!(w.sectional_per_period <= 0.5f64.ln() + 0.05);
}

#[test]
fn undeformed_map_has_no_witness() {
    let r = non_sectional_witness(&section(false, 0.05, placement()), &flow(), &WitnessSettings::default());
    assert!(matches!(r, Err(LabError::WitnessNotFound { max_period: 3 })), "{r:?}");
}

#[test]
fn default_section_exponents() {
    let sec = section(true, 0.05, placement());
    let z0 = sec.attractor_sample(30, 1, 3).unwrap()[0];
    let e = lyapunov_spectrum(&sec, z0, 20_000).unwrap();
    assert!((e[2] - 0.05f64.ln()).abs() < 0.02 && (e[3] - 0.05f64.ln()).abs() < 0.02, "{e:?}");
    assert!(e[0] + e[1] >= 3f64.ln() - 0.1, "{e:?}");
}

#[test]
fn lyapunov_horizon_precondition() {
    let sec = section(true, 0.05, placement());
    let z0 = SolenoidPoint::new(singlab_core::torus::TorusPoint::new(0.2, 0.3), singlab_core::solenoid::FiberPoint::new(0.0, 0.0));
    assert!(matches!(lyapunov_spectrum(&sec, z0, 999), Err(LabError::Precondition(_))));
}

#[test]
fn transitivity_on_default_map() {
    let f = punctured(true);
    let r0 = lambda1_and_r0(&f, 25, 512).unwrap().r0;
    let s = TransitivitySettings { trials: 50, ..TransitivitySettings::default() };
    let ev = transitivity_evidence(&f, r0, &s).unwrap();
    assert!(ev.report.pass);
    assert_eq!(ev.pairs.len(), 50);
}
