#![allow(dead_code)]

use singlab_core::endomorphism::{BlendProfile, EndomorphismModel, LinearPart, RegionGeometry, SaddleDeformation};
use singlab_core::flow::{FlowIntegrator, PlugGeometry, SingularFlowModel, SingularitySpectrum};
use singlab_core::punctured::{BlowUpModel, PuncturedMapModel};
use singlab_core::solenoid::{FiberPlacement, SkewProductModel};
use singlab_core::torus::{Ball, TorusPoint};

pub const SADDLE: TorusPoint = TorusPoint { x1: 0.5, x2: 0.0 };
pub const HOLE: TorusPoint = TorusPoint { x1: 0.5, x2: 0.05 };

pub fn regions() -> RegionGeometry {
    RegionGeometry { u0: Ball::new(SADDLE, 0.12), u1: Ball::new(SADDLE, 0.18), delta0: 0.2, expansion: 1.5 }
}

pub fn endo(deformed: bool) -> EndomorphismModel {
    let d = SaddleDeformation {
        center: SADDLE,
        r_out: 0.12,
        mu_u: 6.0,
        mu_s: 0.5,
        profile: BlendProfile::LogSmoothstep { inner_ratio: 3e-3, outer_ratio: 0.1 },
    };
    EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), deformed.then_some(d), regions()).unwrap()
}

pub fn punctured(deformed: bool) -> PuncturedMapModel {
    let b = BlowUpModel { q: HOLE, rho: 0.02, core_radius: 0.002, amp: 0.075, kappa: 0.5 };
    PuncturedMapModel::new(endo(deformed), b).unwrap()
}

pub fn placement() -> FiberPlacement {
    FiberPlacement { c1: 0.3, c2: 0.15 }
}

pub fn section(deformed: bool, lambda_f: f64, placement: FiberPlacement) -> SkewProductModel<PuncturedMapModel> {
    SkewProductModel::new(punctured(deformed), lambda_f, placement).unwrap()
}

pub fn spectrum() -> SingularitySpectrum {
    SingularitySpectrum { alpha1: 2.0, alpha2: 2.0, beta1: 10.0, beta2: 10.0, beta3: 1.0 }
}

pub fn flow_with(lambda_f: f64, placement: FiberPlacement, spectrum: SingularitySpectrum) -> SingularFlowModel<EndomorphismModel> {
    let skew = SkewProductModel::new(endo(true), lambda_f, placement).unwrap();
    let plug = PlugGeometry { base_inner: 0.02, base_outer: 0.04, t_low: 0.2, t_high: 0.8, t_ramp: 0.1 };
    SingularFlowModel::new(skew, HOLE, plug, spectrum, FlowIntegrator { dt: 1e-3, dt_plug: 1e-4 }).unwrap()
}

pub fn flow() -> SingularFlowModel<EndomorphismModel> {
    flow_with(0.05, placement(), spectrum())
}
