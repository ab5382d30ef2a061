//! Cross-cutting certificates: singular hyperbolicity of the flow, the
//! non-sectional witness, the perturbation ensemble and transitivity
//! evidence.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::cloud::PointIndex;
use crate::endomorphism::FixedPointKind;
use crate::error::{LabError, Result};
use crate::flow::{flow_splitting_at, periodic_splitting, spectrum_check, FlowSplittingSample, SingularFlowModel, SuspensionPoint};
use crate::irg::{connect, irg_check, irg_seed, verify_witness, IrgSettings};
use crate::lp::{certify_h6, certify_lp_suite, preimage_tree, LpSettings};
use crate::map::BaseMap;
use crate::perturbation::{PerturbationSpec, PerturbedMap, MAX_C1_SIZE};
use crate::punctured::{lambda1_and_r0, periodic_indices, PeriodicOrbitRecord, PuncturedMapModel};
use crate::solenoid::{ConeParams, SkewProductModel, SolenoidPoint};
use crate::torus::{Ball, TorusPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularHyperbolicitySettings {
    pub cone: ConeParams,
    pub cone_samples: usize,
    pub flow_samples: usize,
    pub horizon: f64,
    pub burn_in: usize,
    /// Upper bound on `log` of the domination ratio.
    pub log_domination_bound: f64,
    /// Allowed shortfall of the central volume exponent below `log Δ`.
    pub det_tolerance: f64,
    /// Periodic orbits up to this period are added to the flow samples.
    pub orbit_period: usize,
    pub orbit_grid: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SingularHyperbolicitySettings {
    fn default() -> Self {
        Self {
            cone: ConeParams { kappa: 1.0, kappa_image: 0.5, fiber_weight: 0.05 },
            cone_samples: 100_000,
            flow_samples: 1000,
            horizon: 50.0,
            burn_in: 30,
            log_domination_bound: -1.0,
            det_tolerance: 0.2,
            orbit_period: 1,
            orbit_grid: 32,
            seed: 11,
        }
    }
}

/// Aggregate of domination, cone invariance, central volume expansion and
/// the singularity spectrum. Fails on the first failing component.
pub fn singular_hyperbolicity_certificate<R: BaseMap, B: BaseMap>(
    section: &SkewProductModel<R>,
    flow: &SingularFlowModel<B>,
    s: &SingularHyperbolicitySettings,
) -> Result<CertificateReport> {
    s.cone.validate()?;
    let zs = flow.skew.attractor_sample(s.burn_in, s.flow_samples, s.seed)?;
    let mut starts: Vec<(String, SuspensionPoint, Option<usize>)> =
        zs.iter().map(|z| ("attractor".to_string(), SuspensionPoint::on_section(*z), None)).collect();
    for r in periodic_indices(&flow.skew, s.orbit_period, s.orbit_grid)? {
        let z = SolenoidPoint::new(r.orbit[0], r.fiber);
        starts.push((format!("period-{} orbit", r.period), SuspensionPoint::on_section(z), Some(r.period)));
    }
    let results: Vec<Result<FlowSplittingSample>> = starts
        .par_iter()
        .map(|(_, p, period)| match period {
            Some(k) => periodic_splitting(flow, p.base, *k, s.horizon),
            None => flow_splitting_at(flow, *p, s.horizon),
        })
        .collect();

    let mut worst_dom = (f64::NEG_INFINITY, String::new());
    let mut worst_det = (f64::INFINITY, String::new());
    let mut nonpositive = None;
    for ((label, p, _), r) in starts.iter().zip(results) {
        let at = format!("{label} at ({:.6}, {:.6})", p.base.base.x1, p.base.base.x2);
        match r {
            Ok(x) => {
                let ld = x.domination_ratio.ln();
                if ld > worst_dom.0 {
                    worst_dom = (ld, at.clone());
                }
                if x.det_exponent < worst_det.0 {
                    worst_det = (x.det_exponent, at);
                }
            }
            Err(LabError::NonpositiveDetExponent { exponent, at }) => {
                if nonpositive.is_none() {
                    nonpositive = Some(format!("central volume exponent {exponent} at {at}"));
                }
                worst_det.0 = worst_det.0.min(exponent);
            }
            Err(e) => return Err(e),
        }
    }
    let domination = CertificateReport::new("SH_domination")
        .value("max_log_domination_ratio", worst_dom.0)
        .value("samples", starts.len() as f64)
        .value("horizon", s.horizon)
        .source(format!("log domination bound={} (certification settings)", s.log_domination_bound))
        .source(format!("worst sample: {}", worst_dom.1))
        .decide(s.log_domination_bound - worst_dom.0, 0.0, None);

    let cone_pts = section.attractor_sample(s.burn_in, s.cone_samples, s.seed.wrapping_add(1))?;
    let apertures: Vec<Result<f64>> = cone_pts.par_iter().map(|z| section.cone_aperture(z.base, &s.cone)).collect();
    let mut max_ap = 0.0f64;
    let mut violations = 0usize;
    for a in apertures {
        let a = a?;
        max_ap = max_ap.max(a);
        if a > s.cone.kappa_image {
            violations += 1;
        }
    }
    let cone = CertificateReport::new("SH_cone_invariance")
        .value("max_image_aperture", max_ap)
        .value("violations", violations as f64)
        .value("samples", s.cone_samples as f64)
        .source(format!("kappa={} kappa_image={} fiber_weight={}", s.cone.kappa, s.cone.kappa_image, s.cone.fiber_weight))
        .decide(s.cone.kappa_image - max_ap, 0.0, (violations > 0).then(|| format!("{violations} cone violations")));

    let floor = section.base.regions().expansion.ln() - s.det_tolerance;
    let volume = CertificateReport::new("SH_volume_expansion")
        .value("min_det_exponent", worst_det.0)
        .value("required", floor)
        .source(format!("expansion={} (endomorphism regions)", section.base.regions().expansion))
        .source(format!("worst sample: {}", worst_det.1))
        .decide(worst_det.0 - floor, 0.0, nonpositive);

    let spectrum = spectrum_check(flow)?;
    let mut rep = CertificateReport::aggregate("singular_hyperbolicity", &[domination, cone, volume, spectrum]);
    rep.horizon = Some(s.horizon as usize);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSettings {
    pub max_period: usize,
    pub grid: usize,
    /// Required `|log|μ||` of every multiplier of both witnesses.
    pub min_gap: f64,
    pub horizon: f64,
}

impl Default for WitnessSettings {
    fn default() -> Self {
        Self { max_period: 3, grid: 32, min_gap: 0.3, horizon: 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonSectionalWitness {
    pub report: CertificateReport,
    pub index2: PeriodicOrbitRecord,
    pub index3: PeriodicOrbitRecord,
    pub sectional_per_period: f64,
    pub det_per_period: f64,
    /// All orbits found, for the index table.
    pub orbits: Vec<PeriodicOrbitRecord>,
}

/// A hyperbolic pair of periodic orbits of indices 2 and 3 and, at the
/// index-3 orbit, a contracted plane in the centre bundle.
pub fn non_sectional_witness<R: BaseMap, B: BaseMap>(
    section: &SkewProductModel<R>,
    flow: &SingularFlowModel<B>,
    s: &WitnessSettings,
) -> Result<NonSectionalWitness> {
    if s.max_period < 1 {
        return Err(LabError::Precondition("witness search needs max_period >= 1".into()));
    }
    let orbits = periodic_indices(section, s.max_period, s.grid)?;
    // shortest period first, then the widest gap
    let index2 = orbits
        .iter()
        .filter(|o| o.index == 2)
        .min_by(|a, b| {
            let ok = |o: &PeriodicOrbitRecord| o.hyperbolicity_gap < s.min_gap;
            ok(a).cmp(&ok(b)).then(a.period.cmp(&b.period)).then(b.hyperbolicity_gap.total_cmp(&a.hyperbolicity_gap))
        })
        .cloned();
    let (Some(index2), true) = (index2, orbits.iter().any(|o| o.index == 3)) else {
        return Err(LabError::WitnessNotFound { max_period: s.max_period });
    };
    // among index-3 orbits that are also orbits of the flow's section, the
    // one with the most contracted central plane
    let mut index3: Option<(PeriodicOrbitRecord, f64, f64)> = None;
    for o in orbits.iter().filter(|o| o.index == 3) {
        let z = SolenoidPoint::new(o.orbit[0], o.fiber);
        let (run, _) = flow.return_with_tangent(z, o.period)?;
        if run.end.base.base.dist(&z.base) > 1e-8 {
            continue;
        }
        let per_period = run.elapsed;
        let sample = periodic_splitting(flow, z, o.period, s.horizon)?;
        let sect = sample.min_sectional_exponent * per_period;
        let det = sample.det_exponent * per_period;
        if index3.as_ref().is_none_or(|(_, best, _)| sect < *best) {
            index3 = Some((o.clone(), sect, det));
        }
    }
    let Some((index3, sect, det)) = index3 else {
        return Err(LabError::WitnessNotFound { max_period: s.max_period });
    };
    let gap2 = index2.hyperbolicity_gap - s.min_gap;
    let gap3 = index3.hyperbolicity_gap - s.min_gap;
    let margin = gap2.min(gap3).min(-sect);
    let report = CertificateReport::new("non_sectional_witness")
        .horizon(s.horizon as usize)
        .value("index2_period", index2.period as f64)
        .value("index2_x1", index2.orbit[0].x1)
        .value("index2_x2", index2.orbit[0].x2)
        .value("index2_gap", index2.hyperbolicity_gap)
        .value("index3_period", index3.period as f64)
        .value("index3_x1", index3.orbit[0].x1)
        .value("index3_x2", index3.orbit[0].x2)
        .value("index3_gap", index3.hyperbolicity_gap)
        .value("min_sectional_per_period", sect)
        .value("det_per_period", det)
        .value("orbits_found", orbits.len() as f64)
        .source(format!("min_gap={} (certification settings)", s.min_gap))
        .decide(margin, 0.0, None);
    Ok(NonSectionalWitness { report, index2, index3, sectional_per_period: sect, det_per_period: det, orbits })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSettings {
    pub lp: LpSettings,
    pub h6_grid: usize,
    /// Largest distance between a fixed point and its continuation.
    pub continuation_radius: f64,
    pub core_horizon: usize,
    pub core_resolution: usize,
    pub r0_min: f64,
    pub irg: IrgSettings,
    pub irg_disks: usize,
    pub disk_radius: f64,
    pub density_depth: usize,
    pub density_tol: f64,
    pub density_probe: usize,
    pub index_period: usize,
    pub index_grid: usize,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        Self {
            lp: LpSettings::default(),
            h6_grid: 32,
            continuation_radius: 0.05,
            core_horizon: 25,
            core_resolution: 1024,
            r0_min: 0.05,
            irg: IrgSettings::default(),
            irg_disks: 20,
            disk_radius: 1e-3,
            density_depth: 6,
            density_tol: 0.01,
            density_probe: 1024,
            index_period: 1,
            index_grid: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub seed: u64,
    pub c1_bound: f64,
    pub lp: Vec<CertificateReport>,
    pub h6_continuation: CertificateReport,
    pub core_continuation: CertificateReport,
    pub irg: CertificateReport,
    pub preorbit_density: CertificateReport,
    pub index_pair: CertificateReport,
    pub pass: bool,
}

impl MemberRecord {
    pub fn reports(&self) -> impl Iterator<Item = &CertificateReport> {
        self.lp.iter().chain([&self.h6_continuation, &self.core_continuation, &self.irg, &self.preorbit_density, &self.index_pair])
    }
}

/// Re-runs the checks for `g = f* + P` on the section map.
pub fn perturb_and_recheck(
    section: &SkewProductModel<PuncturedMapModel>,
    spec: &PerturbationSpec,
    s: &RobustnessSettings,
) -> Result<MemberRecord> {
    if !(0.0..=MAX_C1_SIZE).contains(&spec.c1_size) {
        return Err(LabError::Precondition(format!("c1_size must lie in [0, {MAX_C1_SIZE}], got {}", spec.c1_size)));
    }
    let q = section.base.blowup.q;
    if spec.anchor.dist(&q) > 0.0 {
        return Err(LabError::Precondition("perturbation must be anchored at the puncture".into()));
    }
    let g = PerturbedMap::new(section.base.clone(), spec.clone());
    let gs = SkewProductModel::new(g.clone(), section.lambda_f, section.placement)?;

    let lp = certify_lp_suite(&g, &s.lp)?;
    let h6_continuation = fixed_point_continuation(&section.base, &g, s);
    let core_continuation = match lambda1_and_r0(&g, s.core_horizon, s.core_resolution) {
        Ok(c) => CertificateReport::new("core_continuation")
            .resolution(s.core_resolution)
            .horizon(s.core_horizon)
            .value("r0", c.r0)
            .value("points", c.points.len() as f64)
            .source(format!("r0_min={} (certification settings)", s.r0_min))
            .decide(c.r0 - s.r0_min, 0.0, None),
        Err(e @ LabError::EmptyCore { .. }) => CertificateReport::new("core_continuation").decide(-1.0, 0.0, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let r0 = core_continuation.values.get("r0").copied().unwrap_or(0.0);
    let irg = if core_continuation.pass { irg_report(&g, r0, spec.seed, s) } else {
        CertificateReport::new("IRG").decide(-1.0, 0.0, Some("no core continuation to aim at".into()))
    };
    let preorbit_density = {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7072_656f);
        let root = TorusPoint::new(rng.gen(), rng.gen());
        let tree = preimage_tree(&g, root, s.density_depth)?;
        let n = tree.len();
        let (radius, _) = PointIndex::new(tree).covering_radius(s.density_probe);
        CertificateReport::new("preorbit_density")
            .resolution(s.density_probe)
            .horizon(s.density_depth)
            .value("covering_radius", radius)
            .value("tree_points", n as f64)
            .decide(s.density_tol - radius, 0.5 * std::f64::consts::SQRT_2 / s.density_probe as f64, None)
    };
    let index_pair = index_pair_continuation(section, &gs, s)?;
    let mut rec = MemberRecord {
        seed: spec.seed,
        c1_bound: spec.c1_bound(),
        lp,
        h6_continuation,
        core_continuation,
        irg,
        preorbit_density,
        index_pair,
        pass: false,
    };
    let pass = rec.reports().all(|r| r.pass);
    rec.pass = pass;
    Ok(rec)
}

fn fixed_point_continuation<A: BaseMap, G: BaseMap>(base: &A, g: &G, s: &RobustnessSettings) -> CertificateReport {
    let before = certify_h6(base, s.h6_grid).fixed_points;
    let after = certify_h6(g, s.h6_grid).fixed_points;
    let mut moved = 0.0f64;
    let mut margin = f64::INFINITY;
    let mut problems = Vec::new();
    for b in &before {
        let near = after.iter().min_by(|x, y| x.location.dist(&b.location).total_cmp(&y.location.dist(&b.location)));
        match near {
            Some(a) if a.location.dist(&b.location) <= s.continuation_radius && a.kind == b.kind => {
                moved = moved.max(a.location.dist(&b.location));
                for m in &a.multipliers {
                    margin = margin.min(m.modulus().ln().abs());
                }
            }
            Some(a) if a.location.dist(&b.location) <= s.continuation_radius => {
                problems.push(format!("fixed point near ({:.4}, {:.4}) changed type to {:?}", b.location.x1, b.location.x2, a.kind));
            }
            _ => problems.push(format!("fixed point near ({:.4}, {:.4}) has no continuation", b.location.x1, b.location.x2)),
        }
    }
    if after.len() != before.len() {
        problems.push(format!("{} fixed points before, {} after", before.len(), after.len()));
    }
    if after.iter().any(|a| a.kind == FixedPointKind::Nonhyperbolic) {
        problems.push("nonhyperbolic continuation".into());
    }
    CertificateReport::new("H6_continuation")
        .resolution(s.h6_grid)
        .value("fixed_points", after.len() as f64)
        .value("max_displacement", moved)
        .decide(margin, 0.0, (!problems.is_empty()).then(|| problems.join("; ")))
}

fn irg_report<G: BaseMap>(g: &G, r0: f64, seed: u64, s: &RobustnessSettings) -> CertificateReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6972_67);
    let disks: Vec<Ball> =
        (0..s.irg_disks).map(|_| Ball::new(TorusPoint::new(rng.gen(), rng.gen()), s.disk_radius)).collect();
    let mut worst = 0usize;
    let mut failures = Vec::new();
    for (i, r) in irg_check(g, &disks, r0, &s.irg).into_iter().enumerate() {
        match r {
            Ok(o) if o.verification.as_ref().is_some_and(|v| v.all_covered()) => worst = worst.max(o.iterates),
            Ok(_) => failures.push(format!("disk {i}: witness not re-verified")),
            Err(e) => failures.push(format!("disk {i}: {e}")),
        }
    }
    CertificateReport::new("IRG")
        .horizon(s.irg.cap)
        .value("disks", s.irg_disks as f64)
        .value("max_iterates", worst as f64)
        .value("target_radius", r0)
        .value("failures", failures.len() as f64)
        .decide((s.irg.cap - worst.min(s.irg.cap)) as f64, 0.0, failures.first().cloned())
}

fn index_pair_continuation<G: BaseMap>(
    section: &SkewProductModel<PuncturedMapModel>,
    gs: &SkewProductModel<G>,
    s: &RobustnessSettings,
) -> Result<CertificateReport> {
    let base = periodic_indices(section, s.index_period, s.index_grid)?;
    let pert = match periodic_indices(gs, s.index_period, s.index_grid) {
        Ok(p) => p,
        Err(e @ LabError::NonhyperbolicOrbit { .. }) => {
            return Ok(CertificateReport::new("index_pair").decide(-1.0, 0.0, Some(e.to_string())));
        }
        Err(e) => return Err(e),
    };
    let mut problems = Vec::new();
    for b in &base {
        let kept = pert.iter().any(|p| p.period == b.period && p.index == b.index && p.orbit[0].dist(&b.orbit[0]) <= s.continuation_radius);
        if !kept {
            problems.push(format!("period-{} orbit at ({:.4}, {:.4}) lost index {}", b.period, b.orbit[0].x1, b.orbit[0].x2, b.index));
        }
    }
    let gap = |idx: usize| pert.iter().filter(|o| o.index == idx).map(|o| o.hyperbolicity_gap).fold(f64::NEG_INFINITY, f64::max);
    let (g2, g3) = (gap(2), gap(3));
    if !g2.is_finite() || !g3.is_finite() {
        problems.push("index-2/index-3 pair missing".into());
    }
    Ok(CertificateReport::new("index_pair")
        .value("index2_gap", g2)
        .value("index3_gap", g3)
        .value("orbits", pert.len() as f64)
        .decide(g2.min(g3), 0.0, (!problems.is_empty()).then(|| problems.join("; "))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub ensemble: usize,
    pub c1_size: f64,
    pub degree: usize,
    pub members: Vec<MemberRecord>,
    /// Smallest margin of each check over the ensemble.
    pub worst_margins: BTreeMap<String, f64>,
    pub pass: bool,
    pub note: String,
}

/// Runs [`perturb_and_recheck`] for each seed, in seed order.
pub fn robustness_ensemble(
    section: &SkewProductModel<PuncturedMapModel>,
    seeds: &[u64],
    degree: usize,
    c1_size: f64,
    s: &RobustnessSettings,
) -> Result<RobustnessSummary> {
    let q = section.base.blowup.q;
    let mut members = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let spec = PerturbationSpec::generate(seed, degree, c1_size, q)?;
        members.push(perturb_and_recheck(section, &spec, s)?);
    }
    let mut worst_margins = BTreeMap::new();
    for m in &members {
        for r in m.reports() {
            let e = worst_margins.entry(r.property.clone()).or_insert(f64::INFINITY);
            *e = f64::min(*e, r.margin);
        }
    }
    Ok(RobustnessSummary {
        ensemble: members.len(),
        c1_size,
        degree,
        pass: !members.is_empty() && members.iter().all(|m| m.pass),
        members,
        worst_margins,
        note: "finite ensemble of random perturbations: evidence of robustness, not a statement about every nearby system".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitivitySettings {
    pub trials: usize,
    pub radius: f64,
    pub irg: IrgSettings,
    /// Extra backward depth allowed when reaching the target.
    pub max_depth: usize,
    /// Centre the first target on the puncture.
    pub puncture_target: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TransitivitySettings {
    fn default() -> Self {
        Self { trials: 100, radius: 1e-3, irg: IrgSettings::default(), max_depth: 6, puncture_target: true, seed: 17 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub u: Ball,
    pub v: Ball,
    pub growth_iterates: usize,
    pub connection_time: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitivityEvidence {
    pub report: CertificateReport,
    pub pairs: Vec<PairRecord>,
}

/// Finite-resolution evidence of transitivity: for each random pair `(U, V)`
/// the disk `U` is grown to a verified ball of radius `r0`, from which an
/// orbit starting in `U` is steered into `V`.
pub fn transitivity_evidence<B: BaseMap>(map: &B, r0: f64, s: &TransitivitySettings) -> Result<TransitivityEvidence> {
    if s.trials < 50 || s.radius < 1e-3 {
        return Err(LabError::Precondition(format!(
            "transitivity needs >= 50 trials of radius >= 1e-3, got {} of {}",
            s.trials, s.radius
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut pairs = Vec::with_capacity(s.trials);
    for i in 0..s.trials {
        let u = Ball::new(TorusPoint::new(rng.gen(), rng.gen()), s.radius);
        let vc = TorusPoint::new(rng.gen(), rng.gen());
        let vc = match map.puncture() {
            Some(q) if i == 0 && s.puncture_target => q,
            _ => vc,
        };
        pairs.push((u, Ball::new(vc, s.radius)));
    }
    let cap = s.irg.cap + s.max_depth;
    let results: Vec<Result<Option<PairRecord>>> = pairs
        .par_iter()
        .map(|&(u, v)| {
            let mut out = irg_seed(map, u, r0, &s.irg)?;
            let check = verify_witness(map, &out, r0, s.irg.probes)?;
            if !check.all_covered() {
                return Ok(None);
            }
            out.verification = Some(check);
            Ok(connect(map, &out, r0, v, s.max_depth)?.map(|c| PairRecord {
                u,
                v,
                growth_iterates: out.iterates,
                connection_time: c.time,
            }))
        })
        .collect();
    let mut records = Vec::with_capacity(s.trials);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(Some(p)) => records.push(p),
            Ok(None) | Err(LabError::NotReached { .. }) => return Err(LabError::PairUnconnected { pair: i, cap }),
            Err(e) => return Err(e),
        }
    }
    let max_time = records.iter().map(|p| p.connection_time).max().unwrap_or(0);
    let report = CertificateReport::new("transitivity")
        .horizon(cap)
        .value("pairs", records.len() as f64)
        .value("max_connection_time", max_time as f64)
        .value("mean_connection_time", records.iter().map(|p| p.connection_time as f64).sum::<f64>() / records.len() as f64)
        .value("target_radius", r0)
        .source("finite-resolution evidence from sampled pairs, not a proof of transitivity")
        .decide((cap - max_time.min(cap)) as f64, 0.0, None);
    Ok(TransitivityEvidence { report, pairs: records })
}
