//! One function per `verify` stage. Each returns its certificate reports in
//! a fixed order plus the raw data behind them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use singlab_core::certificate::CertificateReport;
use singlab_core::endomorphism::FixedPointKind;
use singlab_core::flow::{return_consistency, spectrum_check, zero_set};
use singlab_core::hyperbolicity::{non_sectional_witness, robustness_ensemble, singular_hyperbolicity_certificate, transitivity_evidence, RobustnessSummary};
use singlab_core::irg::irg_check;
use singlab_core::lp::{certify_h6, certify_lp1, certify_lp_suite};
use singlab_core::lyapunov::{lyapunov_run, LyapunovRun};
use singlab_core::punctured::{blowup_determinant_report, lambda1_and_r0, periodic_indices};
use singlab_core::torus::{Ball, TorusPoint};
use singlab_core::{LabError, Result};

use crate::config::Lab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Lp,
    H6,
    Solenoid,
    Blowup,
    Flow,
    Indices,
    Irg,
    Robust,
}

impl StageName {
    pub const ALL: [StageName; 8] = [Self::Lp, Self::H6, Self::Solenoid, Self::Blowup, Self::Flow, Self::Indices, Self::Irg, Self::Robust];

    pub fn id(self) -> &'static str {
        match self {
            Self::Lp => "lp",
            Self::H6 => "h6",
            Self::Solenoid => "solenoid",
            Self::Blowup => "blowup",
            Self::Flow => "flow",
            Self::Indices => "indices",
            Self::Irg => "irg",
            Self::Robust => "robust",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stage {
    pub stage: StageName,
    pub reports: Vec<CertificateReport>,
    pub data: Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub robustness: Option<RobustnessSummary>,
}

impl Stage {
    fn new(stage: StageName, reports: Vec<CertificateReport>, data: Value) -> Self {
        Self { stage, reports, data, robustness: None }
    }

    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

pub fn run_stage(lab: &Lab, stage: StageName) -> Result<Stage> {
    match stage {
        StageName::Lp => lp(lab),
        StageName::H6 => h6(lab),
        StageName::Solenoid => solenoid(lab),
        StageName::Blowup => blowup(lab),
        StageName::Flow => flow(lab),
        StageName::Indices => indices(lab),
        StageName::Irg => irg(lab),
        StageName::Robust => robust(lab),
    }
}

fn failed(property: &str, e: &LabError) -> CertificateReport {
    CertificateReport::new(property).decide(-1.0, 0.0, Some(e.to_string()))
}

pub fn lp(lab: &Lab) -> Result<Stage> {
    Ok(Stage::new(StageName::Lp, certify_lp_suite(&lab.endo, &lab.certification().lp)?, Value::Null))
}

fn sorted_moduli(r: &singlab_core::endomorphism::FixedPointRecord) -> Vec<f64> {
    let mut m: Vec<f64> = r.multipliers.iter().map(|m| m.modulus()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

pub fn h6(lab: &Lab) -> Result<Stage> {
    let c = &lab.certification().h6;
    let h6 = certify_h6(&lab.endo, c.grid);
    let regions = &lab.cfg.endomorphism.regions;
    let mut linear: Vec<f64> = lab.endo.linear.matrix().complex_eigenvalues().iter().map(|z| z.norm()).collect();
    linear.sort_by(|a, b| b.total_cmp(a));
    let mut problems = Vec::new();
    let mut err = 0.0f64;
    let mut check = |kind: FixedPointKind, inside: bool, expected: Vec<f64>, what: &str| {
        let found: Vec<_> = h6
            .fixed_points
            .iter()
            .filter(|r| r.kind == kind && if inside { regions.u0.contains(&r.location) } else { !regions.u1.contains(&r.location) })
            .collect();
        if found.len() != 1 {
            problems.push(format!("{} {what}, expected exactly one", found.len()));
            return;
        }
        for (a, b) in sorted_moduli(found[0]).iter().zip(&expected) {
            err = err.max((a - b).abs());
        }
    };
    check(FixedPointKind::Repelling, false, linear, "repelling fixed points outside U_1");
    match &lab.cfg.endomorphism.deformation {
        Some(d) => check(FixedPointKind::Saddle, true, vec![d.mu_u, d.mu_s], "saddle fixed points in U_0"),
        None => problems.push("no deformation configured, so no saddle in U_0".into()),
    }
    let multipliers = CertificateReport::new("H6_multipliers")
        .resolution(c.grid)
        .value("max_multiplier_error", err)
        .source(format!("multiplier_tol={} (certification settings)", c.multiplier_tol))
        .decide(c.multiplier_tol - err, 0.0, (!problems.is_empty()).then(|| problems.join("; ")));
    let data = json!({ "fixed_points": h6.fixed_points });
    Ok(Stage::new(StageName::H6, vec![h6.certificate, multipliers], data))
}

pub fn solenoid(lab: &Lab) -> Result<Stage> {
    let c = &lab.certification().solenoid;
    let cone = lab.certification().singular_hyperbolicity.cone;
    let m = &lab.solenoid;

    let inj = m.injectivity_margin(c.injectivity_samples, lab.cfg.seed("injectivity"))?;
    let injectivity = CertificateReport::new("injectivity")
        .resolution(c.injectivity_samples)
        .value("margin", inj)
        .source(format!("injectivity_min={} (certification settings)", c.injectivity_min))
        .decide(inj - c.injectivity_min, 0.0, None);

    let pts = m.attractor_sample(c.burn_in, c.cone_samples, lab.cfg.seed("cone"))?;
    let apertures: Vec<f64> = pts.par_iter().map(|z| m.cone_aperture(z.base, &cone)).collect::<Result<_>>()?;
    let max_ap = apertures.iter().copied().fold(0.0, f64::max);
    let violations = apertures.iter().filter(|a| **a > cone.kappa_image).count();
    let cone_rep = CertificateReport::new("cone_invariance")
        .resolution(c.cone_samples)
        .value("max_image_aperture", max_ap)
        .value("violations", violations as f64)
        .source(format!("kappa={} kappa_image={} fiber_weight={}", cone.kappa, cone.kappa_image, cone.fiber_weight))
        .decide(cone.kappa_image - max_ap, 0.0, (violations > 0).then(|| format!("{violations} cone violations")));

    let orbits = m.attractor_orbits(c.burn_in, c.splitting_length, c.splitting_orbits, lab.cfg.seed("splitting"))?;
    let estimates: Vec<Result<_>> = orbits.par_iter().map(|o| m.splitting_estimate(o, &cone)).collect();
    let floor = c.volume_reference.ln() - c.volume_drop;
    let mut min_vol = f64::INFINITY;
    let mut max_dom = 0.0f64;
    let mut hard = None;
    for e in estimates {
        match e {
            Ok(s) => {
                min_vol = min_vol.min(s.volume_exponent);
                max_dom = max_dom.max(s.domination_ratio);
            }
            Err(e @ LabError::ConeViolation { .. }) => {
                hard.get_or_insert(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let splitting = CertificateReport::new("splitting_volume")
        .resolution(c.splitting_orbits)
        .horizon(c.splitting_length)
        .value("min_volume_exponent", min_vol)
        .value("max_domination_ratio", max_dom)
        .value("required", floor)
        .source(format!("ln({}) - {} (certification settings)", c.volume_reference, c.volume_drop))
        .decide(min_vol - floor, 0.0, hard);

    let (lyap, runs) = lyapunov(lab)?;
    let data = json!({ "injectivity_margin": inj, "lyapunov": runs });
    Ok(Stage::new(StageName::Solenoid, vec![injectivity, cone_rep, splitting, lyap], data))
}

/// Exponents of the section map from several seeds; an orbit that runs
/// into the puncture is restarted from the next seed of its stream.
fn lyapunov(lab: &Lab) -> Result<(CertificateReport, Vec<LyapunovRun>)> {
    let c = &lab.certification().lyapunov;
    let runs: Vec<LyapunovRun> = (0..c.seeds)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..100 {
                let seed = lab.cfg.seed(&format!("lyapunov-{i}-{attempt}"));
                let z0 = lab.section.attractor_sample(c.burn_in, 1, seed)?[0];
                match lyapunov_run(&lab.section, z0, c.steps, c.trace_every) {
                    Err(LabError::OrbitHitPuncture { .. }) => continue,
                    r => return r,
                }
            }
            Err(LabError::OrbitHitPuncture { step: 0 })
        })
        .collect::<Result<_>>()?;
    let fiber = lab.cfg.solenoid.lambda_f.ln();
    let floor = c.base_reference.ln() - c.base_drop;
    let fiber_err = runs.iter().flat_map(|r| [r.exponents[2], r.exponents[3]]).map(|e| (e - fiber).abs()).fold(0.0, f64::max);
    let base_sum = runs.iter().map(|r| r.exponents[0] + r.exponents[1]).fold(f64::INFINITY, f64::min);
    let rep = CertificateReport::new("lyapunov")
        .horizon(c.steps)
        .value("seeds", c.seeds as f64)
        .value("max_fiber_error", fiber_err)
        .value("min_base_sum", base_sum)
        .value("required_base_sum", floor)
        .source(format!("ln(lambda_f)={fiber} (solenoid)"))
        .decide((c.fiber_tol - fiber_err).min(base_sum - floor), 0.0, None);
    Ok((rep, runs))
}

pub fn blowup(lab: &Lab) -> Result<Stage> {
    let c = &lab.certification().blowup;
    let f = &lab.fstar;
    let slope = f.determinant_slope(c.slope_angle, c.slope_r_min, c.slope_r_max, c.slope_points)?;
    let expected = 2.0 * f.blowup.kappa - 2.0;
    let rel = (slope - expected).abs() / expected.abs();
    let slope_rep = CertificateReport::new("determinant_slope")
        .resolution(c.slope_points)
        .value("slope", slope)
        .value("expected", expected)
        .value("relative_error", rel)
        .value("asymptotic_slope", f.asymptotic_slope())
        .value("r_min", c.slope_r_min)
        .value("r_max", c.slope_r_max)
        .source(format!("expected 2*kappa-2 with kappa={} (blow-up)", f.blowup.kappa))
        .decide(c.slope_tol - rel, 0.0, None);
    let ball = blowup_determinant_report(f, c.ball_angles)?;
    let mut reports = vec![slope_rep, ball];
    for mut r in certify_lp_suite(f, &lab.certification().lp)? {
        r.property = format!("{}_punctured", r.property);
        reports.push(r);
    }
    Ok(Stage::new(StageName::Blowup, reports, Value::Null))
}

pub fn flow(lab: &Lab) -> Result<Stage> {
    let c = lab.certification();
    let spectrum = match spectrum_check(&lab.flow) {
        Ok(r) => r,
        Err(e @ LabError::SpectrumMismatch { .. }) => failed("singularity_spectrum", &e),
        Err(e) => return Err(e),
    };
    let consistency = match return_consistency(&lab.flow, &lab.section, &c.return_check) {
        Ok(r) => r,
        Err(e @ (LabError::Disagreement(_) | LabError::NearSingularityStall { .. })) => failed("return_consistency", &e),
        Err(e) => return Err(e),
    };
    let sh = singular_hyperbolicity_certificate(&lab.section, &lab.flow, &c.singular_hyperbolicity)?;
    let zeros: Vec<Value> = zero_set(&lab.flow, c.h6.grid)
        .into_iter()
        .map(|(p, index)| json!({ "x1": p.base.base.x1, "x2": p.base.base.x2, "y1": p.base.fiber.y1, "y2": p.base.fiber.y2, "t": p.t, "index": index }))
        .collect();
    Ok(Stage::new(StageName::Flow, vec![spectrum, consistency, sh], json!({ "zeros": zeros })))
}

pub fn indices(lab: &Lab) -> Result<Stage> {
    let s = &lab.certification().witness;
    match non_sectional_witness(&lab.section, &lab.flow, s) {
        Ok(w) => Ok(Stage::new(StageName::Indices, vec![w.report], json!({ "orbits": w.orbits }))),
        Err(e @ LabError::WitnessNotFound { .. }) => {
            let orbits = periodic_indices(&lab.section, s.max_period, s.grid)?;
            Ok(Stage::new(StageName::Indices, vec![failed("non_sectional_witness", &e)], json!({ "orbits": orbits })))
        }
        Err(e) => Err(e),
    }
}

pub fn irg(lab: &Lab) -> Result<Stage> {
    let c = lab.certification();
    let core = match lambda1_and_r0(&lab.fstar, c.core.horizon, c.core.resolution) {
        Ok(core) => core,
        Err(e @ LabError::EmptyCore { .. }) => {
            let reports = ["expanding_core", "IRG", "transitivity"].iter().map(|p| failed(p, &e)).collect();
            return Ok(Stage::new(StageName::Irg, reports, Value::Null));
        }
        Err(e) => return Err(e),
    };
    let r0 = core.r0;
    let core_rep = CertificateReport::new("expanding_core")
        .resolution(c.core.resolution)
        .horizon(c.core.horizon)
        .value("r0", r0)
        .value("points", core.points.len() as f64)
        .source(format!("r0_min={} (certification settings)", c.core.r0_min))
        .decide(r0 - c.core.r0_min, 0.0, None);

    let disks = random_disks(lab.cfg.seed("irg_disks"), c.irg_disks.count, c.irg_disks.radius);
    let outcomes = irg_check(&lab.fstar, &disks, r0, &c.irg);
    let mut worst = 0usize;
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            Ok(o) if o.verification.as_ref().is_some_and(|v| v.all_covered()) => {
                worst = worst.max(o.iterates);
                traces.push(json!({ "disk": i, "iterates": o.iterates, "trace": o.trace }));
            }
            Ok(_) => failures.push(format!("disk {i}: witness not re-verified")),
            Err(e) => failures.push(format!("disk {i}: {e}")),
        }
    }
    let irg_rep = CertificateReport::new("IRG")
        .horizon(c.irg.cap)
        .value("disks", disks.len() as f64)
        .value("max_iterates", worst as f64)
        .value("target_radius", r0)
        .value("failures", failures.len() as f64)
        .decide((c.irg.cap - worst.min(c.irg.cap)) as f64, 0.0, failures.first().cloned());

    let (trans_rep, pairs) = match transitivity_evidence(&lab.fstar, r0, &c.transitivity) {
        Ok(ev) => (ev.report, serde_json::to_value(ev.pairs).expect("pairs serialise")),
        Err(e @ LabError::PairUnconnected { .. }) => (failed("transitivity", &e), Value::Null),
        Err(e) => return Err(e),
    };
    let data = json!({ "r0": r0, "u0": lab.cfg.endomorphism.regions.u0, "core": core.points, "irg": traces, "pairs": pairs });
    Ok(Stage::new(StageName::Irg, vec![core_rep, irg_rep, trans_rep], data))
}

fn random_disks(seed: u64, count: usize, radius: f64) -> Vec<Ball> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Ball::new(TorusPoint::new(rng.gen(), rng.gen()), radius)).collect()
}

pub fn ensemble_seeds(lab: &Lab) -> Vec<u64> {
    (0..lab.certification().ensemble.members).map(|i| lab.cfg.seed(&format!("ensemble-{i}"))).collect()
}

pub fn robust(lab: &Lab) -> Result<Stage> {
    let c = lab.certification();
    let e = &c.ensemble;
    let summary = robustness_ensemble(&lab.section, &ensemble_seeds(lab), e.degree, e.c1_size, &c.robustness)?;
    let reference = certify_lp1(&lab.fstar, &c.robustness.lp).margin;
    let worst_lp1 = summary.worst_margins.get("LP1").copied().unwrap_or(f64::NEG_INFINITY);
    let worst = summary.worst_margins.values().copied().fold(f64::INFINITY, f64::min);
    let failing: Vec<String> = summary
        .members
        .iter()
        .filter(|m| !m.pass)
        .map(|m| {
            let checks: Vec<&str> = m.reports().filter(|r| !r.pass).map(|r| r.property.as_str()).collect();
            format!("member seed {} failed {}", m.seed, checks.join(", "))
        })
        .collect();
    let rep = CertificateReport::new("robustness")
        .value("members", summary.ensemble as f64)
        .value("c1_size", e.c1_size)
        .value("worst_margin", worst)
        .value("unperturbed_LP1_margin", reference)
        .value("worst_LP1_margin", worst_lp1)
        .value("LP1_drop", reference - worst_lp1)
        .source(summary.note.clone())
        .decide(worst, 0.0, (!failing.is_empty()).then(|| failing.join("; ")));
    let mut stage = Stage::new(StageName::Robust, vec![rep], Value::Null);
    stage.robustness = Some(summary);
    Ok(stage)
}
