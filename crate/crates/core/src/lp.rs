//! Finite-resolution certificates for the expansion properties LP1–LP5 and
//! the fixed-point condition H6, generic over any [`BaseMap`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::cloud::PointIndex;
use crate::endomorphism::{FixedPointKind, FixedPointRecord};
use crate::error::{LabError, Result};
use crate::map::BaseMap;
use crate::periodic::periodic_points;
use crate::torus::{sigma_min, TorusPoint, M2, V2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LpProperty {
    Lp1,
    Lp2,
    Lp3,
    Lp4,
    Lp5,
}

impl LpProperty {
    pub const ALL: [LpProperty; 5] = [Self::Lp1, Self::Lp2, Self::Lp3, Self::Lp4, Self::Lp5];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Lp1 => "LP1",
            Self::Lp2 => "LP2",
            Self::Lp3 => "LP3",
            Self::Lp4 => "LP4",
            Self::Lp5 => "LP5",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpSettings {
    /// Uniform grid is `resolution × resolution`.
    pub resolution: usize,
    /// Forward horizon of the LP4 proxy.
    pub horizon: usize,
    /// Preimage-tree depth for LP2.
    pub tree_depth: usize,
    /// Covering-radius tolerance for LP2.
    pub density_tol: f64,
    /// Roots of the LP2 preimage trees.
    pub tree_roots: usize,
    /// Probe grid for the LP2 covering radius.
    pub probe_resolution: usize,
    /// Number of random arcs tested in LP4.
    pub arcs: usize,
    pub arc_search: ArcSearch,
    /// Log-polar grid around each refinement spot: `rings × angles`, radii
    /// from `spot_radius · inner_scale` to `spot_radius`.
    pub polar_rings: usize,
    pub polar_angles: usize,
    pub inner_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LpSettings {
    fn default() -> Self {
        Self {
            resolution: 1024,
            horizon: 25,
            tree_depth: 6,
            density_tol: 0.01,
            tree_roots: 2,
            probe_resolution: 1024,
            arcs: 2000,
            arc_search: ArcSearch::default(),
            polar_rings: 400,
            polar_angles: 720,
            inner_scale: 1e-10,
            seed: 7,
        }
    }
}

impl LpSettings {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 256 {
            return Err(LabError::Precondition(format!("resolution must be >= 256, got {}", self.resolution)));
        }
        if self.horizon < 1 || self.tree_depth < 1 {
            return Err(LabError::Precondition("LP2/LP4 horizons must be >= 1".into()));
        }
        Ok(())
    }
}

/// A sample location together with the local spacing of the grid it came
/// from, so the slack at a minimiser can be estimated from its neighbours.
#[derive(Clone, Copy)]
struct Sample {
    x: V2,
    h: f64,
}

fn uniform_rows(n: usize) -> impl IndexedParallelIterator<Item = Vec<Sample>> {
    (0..n).into_par_iter().map(move |i| {
        (0..n)
            .map(|j| Sample { x: V2::new(i as f64 / n as f64, j as f64 / n as f64), h: 1.0 / n as f64 })
            .collect()
    })
}

fn polar_rows<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> Vec<Vec<Sample>> {
    let mut rows = Vec::new();
    for (c, r) in map.refinement_spots() {
        let lr = s.inner_scale.ln();
        let dl = -lr / (s.polar_rings - 1) as f64;
        for k in 0..s.polar_rings {
            let rr = r * (lr + dl * k as f64).exp();
            let dth = std::f64::consts::TAU / s.polar_angles as f64;
            let h = rr * dl.max(dth);
            rows.push(
                (0..s.polar_angles)
                    .map(|j| {
                        let th = dth * (j as f64 + 0.5);
                        Sample { x: c.vec() + V2::new(rr * th.cos(), rr * th.sin()), h }
                    })
                    .collect(),
            );
        }
    }
    rows
}

/// Finest spacing among the sampled grids that cover `x`.
fn local_spacing<B: BaseMap + ?Sized>(map: &B, s: &LpSettings, x: V2) -> f64 {
    let mut h = 1.0 / s.resolution as f64;
    let dl = -s.inner_scale.ln() / (s.polar_rings - 1) as f64;
    let dth = std::f64::consts::TAU / s.polar_angles as f64;
    for (c, r) in map.refinement_spots() {
        let d = TorusPoint::from_lift(x).dist(&c);
        if d <= r && d >= r * s.inner_scale {
            h = h.min(d * dl.max(dth));
        }
    }
    h
}

/// Minimum of `score` over samples, with the argmin. Points where the map is
/// undefined are skipped; `keep` filters the domain.
fn sweep_min<B, S, K>(map: &B, rows: Vec<Vec<Sample>>, score: &S, keep: &K) -> (f64, Option<Sample>, usize)
where
    B: BaseMap + ?Sized,
    S: Fn(&M2) -> f64 + Sync,
    K: Fn(V2) -> bool + Sync,
{
    let per_row: Vec<(f64, Option<Sample>, usize)> = rows
        .into_par_iter()
        .map(|row| {
            let mut best = (f64::INFINITY, None, 0usize);
            for smp in row {
                if !keep(smp.x) {
                    continue;
                }
                if let Ok((_, j)) = map.eval_lift(smp.x) {
                    best.2 += 1;
                    let v = score(&j);
                    if v < best.0 {
                        best.0 = v;
                        best.1 = Some(smp);
                    }
                }
            }
            best
        })
        .collect();
    per_row.into_iter().fold((f64::INFINITY, None, 0), |a, b| {
        let count = a.2 + b.2;
        if b.0 < a.0 {
            (b.0, b.1, count)
        } else {
            (a.0, a.1, count)
        }
    })
}

/// Discretisation slack at a grid minimiser: per axis, the smaller of the two
/// one-sided changes of `score` (the true minimum lies towards the gentler
/// side), maximised over the axes. A missing neighbour counts as no bound.
fn neighbour_slack<B, S>(map: &B, at: Sample, value: f64, score: &S) -> f64
where
    B: BaseMap + ?Sized,
    S: Fn(&M2) -> f64,
{
    let change = |d: V2| map.eval_lift(at.x + d).map(|(_, j)| (score(&j) - value).abs()).unwrap_or(0.0);
    let mut slack: f64 = 0.0;
    for e in [V2::new(at.h, 0.0), V2::new(0.0, at.h)] {
        slack = slack.max(change(e).min(change(-e)));
    }
    slack
}

fn expansion_cert<B, S>(map: &B, s: &LpSettings, which: LpProperty, score: S) -> CertificateReport
where
    B: BaseMap + ?Sized,
    S: Fn(&M2) -> f64 + Sync,
{
    let regions = map.regions();
    let delta = regions.expansion;
    let u0 = regions.u0;
    let outside_u0 = move |x: V2| !u0.contains_lift(x);
    let all = |_: V2| true;
    let mut rows: Vec<Vec<Sample>> = uniform_rows(s.resolution).collect();
    let (min_v, at, count) = if which == LpProperty::Lp3 {
        sweep_min(map, rows, &score, &outside_u0)
    } else {
        rows.extend(polar_rows(map, s));
        sweep_min(map, rows, &score, &all)
    };
    let label = if which == LpProperty::Lp1 { "min_abs_det" } else { "min_sigma_min" };
    let mut rep = CertificateReport::new(which.id())
        .resolution(s.resolution)
        .value(label, min_v)
        .value("samples", count as f64)
        .source(format!("Delta={delta} (region geometry)"));
    let Some(at) = at else {
        return rep.decide(f64::NAN, 0.0, Some("no sample in the domain".into()));
    };
    rep.set("argmin_x1", TorusPoint::from_lift(at.x).x1);
    rep.set("argmin_x2", TorusPoint::from_lift(at.x).x2);
    let at = if which == LpProperty::Lp3 { at } else { Sample { h: local_spacing(map, s, at.x), ..at } };
    let slack = neighbour_slack(map, at, min_v, &score);
    rep.decide(min_v - delta, slack, None)
}

/// LP1: `|det Df| − Δ` minimised over the uniform grid and the log-polar
/// refinement grids.
pub fn certify_lp1<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> CertificateReport {
    expansion_cert(map, s, LpProperty::Lp1, |j: &M2| j.determinant().abs())
}

/// LP3: `σ_min(Df) − Δ` minimised over the uniform grid outside U₀.
pub fn certify_lp3<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> CertificateReport {
    expansion_cert(map, s, LpProperty::Lp3, sigma_min)
}

/// Full preimage tree of `root` down to `depth`, root included.
pub fn preimage_tree<B: BaseMap + ?Sized>(map: &B, root: TorusPoint, depth: usize) -> Result<Vec<TorusPoint>> {
    let mut all = vec![root];
    let mut level = vec![root];
    for _ in 0..depth {
        let next: Vec<Result<Vec<TorusPoint>>> = level.par_iter().map(|y| map.preimages(*y, 1e-9)).collect();
        level = Vec::new();
        for r in next {
            level.extend(r?);
        }
        all.extend_from_slice(&level);
    }
    Ok(all)
}

/// LP2 proxy: covering radius of depth-limited preimage trees.
pub fn certify_lp2<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> Result<CertificateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x4c50_32);
    let mut worst = (0.0f64, TorusPoint::new(0.0, 0.0));
    let mut total = 0usize;
    for _ in 0..s.tree_roots.max(1) {
        let root = TorusPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
        let tree = preimage_tree(map, root, s.tree_depth)?;
        total += tree.len();
        let (r, at) = PointIndex::new(tree).covering_radius(s.probe_resolution);
        if r > worst.0 {
            worst = (r, at);
        }
    }
    let slack = 0.5 * std::f64::consts::SQRT_2 / s.probe_resolution as f64;
    Ok(CertificateReport::new("LP2")
        .resolution(s.probe_resolution)
        .horizon(s.tree_depth)
        .value("covering_radius", worst.0)
        .value("worst_probe_x1", worst.1.x1)
        .value("worst_probe_x2", worst.1.x2)
        .value("tree_points", total as f64)
        .source(format!("density_tol={} (certification settings)", s.density_tol))
        .decide(s.density_tol - worst.0, slack, None))
}

/// Outcome of the LP4 search on one arc.
#[derive(Clone, Copy, Debug)]
pub struct ArcOutcome {
    /// Smallest clearance from U₁ along the witness orbit, if one was found.
    pub clearance: Option<f64>,
    /// Arc parameter of the witness, or of the longest survivor.
    pub parameter: f64,
    /// Longest run of iterates outside U₁ met during the search.
    pub best_survival: usize,
    pub evaluations: usize,
}

/// Number of leading iterates `f(x), …, f^k(x)` outside U₁ (at most `k`)
/// and the smallest clearance among them. The point itself is not tested.
pub fn survival<B: BaseMap + ?Sized>(map: &B, x: V2, k: usize) -> (usize, f64) {
    let u1 = map.regions().u1;
    let mut y = x;
    let mut clr = f64::INFINITY;
    for n in 0..k {
        match map.eval_lift(y) {
            Ok((z, _)) => y = TorusPoint::from_lift(z).vec(),
            Err(_) => return (n, clr),
        }
        let c = u1.center.dist_lift(y) - u1.radius;
        if c <= 0.0 {
            return (n, clr);
        }
        clr = clr.min(c);
    }
    (k, clr)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSearch {
    /// Samples on the first pass over the whole arc.
    pub initial: usize,
    /// Samples per zoom window.
    pub window: usize,
    /// Number of candidates zoomed on per round.
    pub beam: usize,
    pub rounds: usize,
}

impl Default for ArcSearch {
    fn default() -> Self {
        Self { initial: 512, window: 64, beam: 8, rounds: 12 }
    }
}

/// Looks for a point of the segment `a -> b` whose iterates `1..=k` all
/// stay outside U₁. Points are ranked by how long they survive; each round
/// zooms into windows around the best-ranked points, since survivors of
/// `k` steps cluster around long-lived points at the scale set by the
/// expansion. The witness is a single orbit checked directly.
pub fn search_arc<B: BaseMap + ?Sized>(map: &B, a: V2, b: V2, k: usize, cfg: &ArcSearch) -> ArcOutcome {
    let eval = |s: f64| survival(map, a + (b - a) * s, k);
    let mut evaluations = 0usize;
    // (survival, clearance, parameter)
    let mut pool: Vec<(usize, f64, f64)> = Vec::new();
    let mut spacing = 1.0 / cfg.initial as f64;
    let mut windows: Vec<f64> = vec![];
    for i in 0..=cfg.initial {
        let s = i as f64 * spacing;
        let (t, c) = eval(s);
        evaluations += 1;
        pool.push((t, c, s));
    }
    for round in 0..=cfg.rounds {
        pool.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.total_cmp(&x.1)).then(x.2.total_cmp(&y.2)));
        if let Some(&(t, c, s)) = pool.first() {
            if t >= k {
                return ArcOutcome { clearance: Some(c), parameter: s, best_survival: t, evaluations };
            }
        }
        if round == cfg.rounds {
            break;
        }
        windows.clear();
        for &(_, _, s) in &pool {
            if windows.iter().all(|w| (w - s).abs() > 0.5 * spacing) {
                windows.push(s);
            }
            if windows.len() == cfg.beam {
                break;
            }
        }
        let half = spacing;
        spacing = 2.0 * half / cfg.window as f64;
        let mut fresh = Vec::with_capacity(windows.len() * cfg.window);
        for &c in &windows {
            for i in 0..=cfg.window {
                let s = (c - half + i as f64 * spacing).clamp(0.0, 1.0);
                let (t, cl) = eval(s);
                evaluations += 1;
                fresh.push((t, cl, s));
            }
        }
        // keep earlier survivors in play so a dead window cannot trap the beam
        pool.truncate(cfg.beam);
        pool.extend(fresh);
    }
    let best = pool.first().copied().unwrap_or((0, 0.0, 0.0));
    ArcOutcome { clearance: None, parameter: best.2, best_survival: best.0, evaluations }
}

/// Random segments of length `1.05 δ₀` lying in the complement of U₀.
pub fn lp4_arcs<B: BaseMap + ?Sized>(map: &B, count: usize, seed: u64) -> Vec<(V2, V2)> {
    let regions = map.regions();
    let len = 1.05 * regions.delta0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4c50_34);
    let mut arcs = Vec::with_capacity(count);
    while arcs.len() < count {
        let c = V2::new(rng.gen::<f64>(), rng.gen::<f64>());
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        let d = V2::new(th.cos(), th.sin()) * (0.5 * len);
        let (a, b) = (c - d, c + d);
        if regions.u0.segment_center_distance(a, b) > regions.u0.radius {
            arcs.push((a, b));
        }
    }
    arcs
}

/// LP4 proxy: every sampled arc in U₀ᶜ of diameter > δ₀ contains a point
/// whose first K iterates avoid U₁. Margin is the smallest witness
/// clearance; an arc without a witness contributes `−radius(U₁)`.
pub fn certify_lp4<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> CertificateReport {
    let arcs = lp4_arcs(map, s.arcs, s.seed);
    let outcomes: Vec<ArcOutcome> = arcs
        .par_iter()
        .map(|&(a, b)| search_arc(map, a, b, s.horizon, &s.arc_search))
        .collect();
    let r1 = map.regions().u1.radius;
    let mut margin = f64::INFINITY;
    let mut failed = 0usize;
    let mut evaluations = 0usize;
    let mut shortest = usize::MAX;
    for o in &outcomes {
        evaluations += o.evaluations;
        match o.clearance {
            Some(c) => margin = margin.min(c),
            None => {
                failed += 1;
                shortest = shortest.min(o.best_survival);
                margin = margin.min(-r1);
            }
        }
    }
    let hard = (failed > 0).then(|| {
        format!(
            "{failed} of {} arcs without a witness (worst arc: longest survival {} of {} iterates)",
            arcs.len(),
            shortest,
            s.horizon
        )
    });
    CertificateReport::new("LP4")
        .horizon(s.horizon)
        .resolution(s.arcs)
        .value("arcs", arcs.len() as f64)
        .value("arcs_without_witness", failed as f64)
        .value("orbit_evaluations", evaluations as f64)
        .source(format!("delta0={} (region geometry)", map.regions().delta0))
        .decide(margin, 0.0, hard)
}

/// LP5: every grid point of U₁ᶜ has a preimage in U₁ᶜ. Margin is the
/// smallest clearance of the best preimage.
pub fn certify_lp5<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> Result<CertificateReport> {
    let u1 = map.regions().u1;
    let n = s.resolution;
    let rows: Vec<Result<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut worst = (f64::INFINITY, 0usize);
            for j in 0..n {
                let y = TorusPoint::new(i as f64 / n as f64, j as f64 / n as f64);
                if u1.contains(&y) {
                    continue;
                }
                worst.1 += 1;
                let best = map
                    .preimages(y, 1e-9)?
                    .iter()
                    .map(|x| u1.clearance(x))
                    .fold(f64::NEG_INFINITY, f64::max);
                worst.0 = worst.0.min(best);
            }
            Ok(worst)
        })
        .collect();
    let mut margin = f64::INFINITY;
    let mut count = 0;
    for r in rows {
        let (m, c) = r?;
        margin = margin.min(m);
        count += c;
    }
    // preimage clearance moves by at most h/Δ between neighbours
    let slack = std::f64::consts::FRAC_1_SQRT_2 / n as f64 / map.regions().expansion;
    Ok(CertificateReport::new("LP5")
        .resolution(n)
        .value("grid_points", count as f64)
        .decide(margin, slack, None))
}

pub fn certify_lp<B: BaseMap + ?Sized>(map: &B, which: LpProperty, s: &LpSettings) -> Result<CertificateReport> {
    s.validate()?;
    Ok(match which {
        LpProperty::Lp1 => certify_lp1(map, s),
        LpProperty::Lp2 => certify_lp2(map, s)?,
        LpProperty::Lp3 => certify_lp3(map, s),
        LpProperty::Lp4 => certify_lp4(map, s),
        LpProperty::Lp5 => certify_lp5(map, s)?,
    })
}

pub fn certify_lp_suite<B: BaseMap + ?Sized>(map: &B, s: &LpSettings) -> Result<Vec<CertificateReport>> {
    LpProperty::ALL.iter().map(|w| certify_lp(map, *w, s)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H6Report {
    pub fixed_points: Vec<FixedPointRecord>,
    pub certificate: CertificateReport,
}

/// H6: fixed points by seeded refinement, classified by multipliers; pass
/// iff there is a repeller outside U₁, a saddle in U₀, and no
/// nonhyperbolic fixed point.
pub fn certify_h6<B: BaseMap + ?Sized>(map: &B, grid: usize) -> H6Report {
    let regions = map.regions();
    let fixed: Vec<FixedPointRecord> = periodic_points(map, 1, grid)
        .into_iter()
        .map(|p| FixedPointRecord::from_jacobian(p.point, &p.jacobian))
        .collect();
    let repellers_out = fixed
        .iter()
        .filter(|r| r.kind == FixedPointKind::Repelling && !regions.u1.contains(&r.location))
        .count();
    let saddles_in = fixed
        .iter()
        .filter(|r| r.kind == FixedPointKind::Saddle && regions.u0.contains(&r.location))
        .count();
    let nonhyp = fixed.iter().filter(|r| r.kind == FixedPointKind::Nonhyperbolic).count();
    let margin = fixed
        .iter()
        .flat_map(|r| r.multipliers.iter().map(|m| m.modulus().ln().abs()))
        .fold(f64::INFINITY, f64::min);
    let mut missing = Vec::new();
    if repellers_out == 0 {
        missing.push("no repelling fixed point in the complement of U_1".to_string());
    }
    if saddles_in == 0 {
        missing.push("no saddle fixed point in U_0".to_string());
    }
    if nonhyp > 0 {
        missing.push(format!("{nonhyp} nonhyperbolic fixed point(s)"));
    }
    let hard = (!missing.is_empty()).then(|| missing.join("; "));
    let certificate = CertificateReport::new("H6")
        .resolution(grid)
        .value("fixed_points", fixed.len() as f64)
        .value("repelling_outside_U1", repellers_out as f64)
        .value("saddles_in_U0", saddles_in as f64)
        .value("nonhyperbolic", nonhyp as f64)
        .decide(margin, 0.0, hard);
    H6Report { fixed_points: fixed, certificate }
}
