//! Internal radius growth. A seed disk is followed forward on the lift,
//! where the lifted map is injective: its image is the inside of one
//! boundary curve minus the holes opened each time the region swallows a
//! lifted puncture. Curves are polygons refined by re-evaluating midpoint
//! parameters from scratch; a cloud of interior points supplies witness
//! candidates whose clearance to all curves is the inscribed radius.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::{iterate_lift, lift_orbit, pull_back, BaseMap};
use crate::torus::{Ball, TorusPoint, V2};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrgSettings {
    /// Iterate cap.
    pub cap: usize,
    /// Polygon edge-length cap as a fraction of the target radius.
    pub edge_ratio: f64,
    pub boundary_points: usize,
    pub hole_points: usize,
    pub cloud_rings: usize,
    pub cloud_angles: usize,
    /// Probes used to re-verify a witness ball by pulling back.
    pub probes: usize,
    pub max_vertices: usize,
}

impl Default for IrgSettings {
    fn default() -> Self {
        Self {
            cap: 60,
            edge_ratio: 1.0 / 16.0,
            boundary_points: 64,
            hole_points: 64,
            cloud_rings: 16,
            cloud_angles: 48,
            probes: 10_000,
            max_vertices: 4_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrgTraceRow {
    pub iterate: usize,
    pub inscribed_radius: f64,
    pub witness_x1: f64,
    pub witness_x2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub probes: usize,
    pub covered: usize,
    /// Largest `|x − c| / r` over pulled-back probes (`< 1` when covered).
    pub worst_depth: f64,
}

impl ProbeCheck {
    pub fn all_covered(&self) -> bool {
        self.covered == self.probes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrgOutcome {
    pub seed: Ball,
    /// First iterate whose image contains a ball of the target radius.
    pub iterates: usize,
    /// Point of the seed disk whose image centres that ball.
    pub witness: TorusPoint,
    pub center: TorusPoint,
    pub trace: Vec<IrgTraceRow>,
    pub vertices: usize,
    pub holes: usize,
    /// Edges left longer than the cap because their parameter interval
    /// could not be split further.
    pub stuck_edges: usize,
    pub verification: Option<ProbeCheck>,
    #[serde(skip)]
    witness_lift: V2,
    #[serde(skip)]
    seed_lift: V2,
}

#[derive(Clone, Copy, Debug)]
enum Origin {
    Seed { center: V2, radius: f64 },
    Hole { q: V2, born: usize },
}

struct Curve {
    origin: Origin,
    params: Vec<f64>,
    pts: Vec<V2>,
}

impl Curve {
    fn point<B: BaseMap + ?Sized>(map: &B, origin: Origin, theta: f64, step: usize) -> Result<V2> {
        let u = V2::new(theta.cos(), theta.sin());
        let (start, n) = match origin {
            Origin::Seed { center, radius } => (center + u * radius, step),
            Origin::Hole { q, born } => (
                map.puncture_limit(q, theta).ok_or_else(|| LabError::Precondition("map has no puncture".into()))?,
                step - born,
            ),
        };
        Ok(iterate_lift(map, start, n)?.0)
    }

    fn new<B: BaseMap + ?Sized>(map: &B, origin: Origin, n: usize, step: usize) -> Result<Self> {
        let params: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
        let pts = params.iter().map(|&t| Self::point(map, origin, t, step)).collect::<Result<_>>()?;
        Ok(Self { origin, params, pts })
    }

    fn advance<B: BaseMap + ?Sized>(&mut self, map: &B) -> Result<()> {
        for p in &mut self.pts {
            *p = map.eval_lift(*p)?.0;
        }
        Ok(())
    }

    /// Splits every edge longer than `cap`; returns the number of edges
    /// that stayed long because the parameter gap underflowed.
    fn refine<B: BaseMap + ?Sized>(&mut self, map: &B, step: usize, cap: f64) -> Result<usize> {
        let n = self.pts.len();
        let mut params = Vec::with_capacity(n);
        let mut pts = Vec::with_capacity(n);
        let mut stuck = 0;
        for i in 0..n {
            let (ta, a) = (self.params[i], self.pts[i]);
            let (mut tb, b) = (self.params[(i + 1) % n], self.pts[(i + 1) % n]);
            if i + 1 == n {
                tb += TAU;
            }
            params.push(ta);
            pts.push(a);
            stuck += self.split(map, step, cap, (ta, a), (tb, b), &mut params, &mut pts)?;
        }
        self.params = params;
        self.pts = pts;
        Ok(stuck)
    }

    #[allow(clippy::too_many_arguments)]
    fn split<B: BaseMap + ?Sized>(
        &self,
        map: &B,
        step: usize,
        cap: f64,
        a: (f64, V2),
        b: (f64, V2),
        params: &mut Vec<f64>,
        pts: &mut Vec<V2>,
    ) -> Result<usize> {
        if (b.1 - a.1).norm() <= cap {
            return Ok(0);
        }
        let tm = 0.5 * (a.0 + b.0);
        if tm <= a.0 || tm >= b.0 || b.0 - a.0 < 1e-14 {
            return Ok(1);
        }
        let m = (tm, Self::point(map, self.origin, tm, step)?);
        let left = self.split(map, step, cap, a, m, params, pts)?;
        params.push(m.0);
        pts.push(m.1);
        Ok(left + self.split(map, step, cap, m, b, params, pts)?)
    }
}

/// Spatial hash of polygon edges for clearance queries up to `cell`.
struct EdgeHash {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<(V2, V2)>>,
}

impl EdgeHash {
    fn new(curves: &[&Curve], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<(V2, V2)>> = HashMap::new();
        for c in curves {
            let n = c.pts.len();
            for i in 0..n {
                let (a, b) = (c.pts[i], c.pts[(i + 1) % n]);
                let (i0, i1) = ((a.x.min(b.x) / cell).floor() as i64, (a.x.max(b.x) / cell).floor() as i64);
                let (j0, j1) = ((a.y.min(b.y) / cell).floor() as i64, (a.y.max(b.y) / cell).floor() as i64);
                for ci in i0..=i1 {
                    for cj in j0..=j1 {
                        buckets.entry((ci, cj)).or_default().push((a, b));
                    }
                }
            }
        }
        Self { cell, buckets }
    }

    /// Distance from `w` to the nearest edge, capped at `cell`.
    fn clearance(&self, w: V2) -> f64 {
        let (ci, cj) = ((w.x / self.cell).floor() as i64, (w.y / self.cell).floor() as i64);
        let mut best = self.cell;
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(edges) = self.buckets.get(&(ci + di, cj + dj)) {
                    for &(a, b) in edges {
                        best = best.min(point_segment_distance(w, a, b));
                    }
                }
            }
        }
        best
    }
}

pub fn point_segment_distance(w: V2, a: V2, b: V2) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((w - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (w - (a + d * t)).norm()
}

/// Unique lifted preimage of `z` under `k` iterates, or `None` if some step
/// lands in a hole.
pub fn lift_preimage<B: BaseMap + ?Sized>(map: &B, z: V2, k: usize) -> Result<Option<V2>> {
    let inv = map
        .linear()
        .matrix()
        .try_inverse()
        .ok_or_else(|| LabError::InvalidModel("singular linear part".into()))?;
    let mut y = z;
    for _ in 0..k {
        match map.lift_inverse(y, inv * y)? {
            Some(x) => y = x,
            None => return Ok(None),
        }
    }
    Ok(Some(y))
}

fn cloud(center: V2, radius: f64, rings: usize, angles: usize) -> Vec<V2> {
    let mut pts = vec![center];
    for i in 1..=rings {
        let r = radius * i as f64 / (rings as f64 + 0.5);
        for j in 0..angles {
            let th = TAU * (j as f64 + 0.5 * (i % 2) as f64) / angles as f64;
            pts.push(center + V2::new(r * th.cos(), r * th.sin()));
        }
    }
    pts
}

/// Follows one seed disk until its image contains a ball of radius `r0`.
pub fn irg_seed<B: BaseMap + ?Sized>(map: &B, seed: Ball, r0: f64, s: &IrgSettings) -> Result<IrgOutcome> {
    if !(seed.radius > 0.0 && r0 > 0.0) {
        return Err(LabError::Precondition("seed radius and target radius must be positive".into()));
    }
    let c = seed.center.vec();
    let edge_cap = r0 * s.edge_ratio;
    // clearance must beat r0 plus the chord error allowance
    let need = r0 + edge_cap;
    let mut outer = Curve::new(map, Origin::Seed { center: c, radius: seed.radius }, s.boundary_points, 0)?;
    let mut stuck = outer.refine(map, 0, edge_cap)?;
    let mut holes: Vec<Curve> = Vec::new();
    let mut pts: Vec<(V2, V2)> = cloud(c, seed.radius, s.cloud_rings, s.cloud_angles).into_iter().map(|x| (x, x)).collect();
    let mut trace = Vec::new();
    for k in 0..=s.cap {
        if k > 0 {
            // punctures swallowed by the region at step k−1 open holes now
            let born = swallowed_punctures(map, &outer, c, seed.radius, k - 1)?;
            outer.advance(map)?;
            stuck = outer.refine(map, k, edge_cap)?;
            for h in &mut holes {
                h.advance(map)?;
                stuck += h.refine(map, k, edge_cap)?;
            }
            for q in born {
                let mut h = Curve::new(map, Origin::Hole { q, born: k }, s.hole_points, k)?;
                stuck += h.refine(map, k, edge_cap)?;
                holes.push(h);
            }
            pts = pts.into_iter().filter_map(|(x0, x)| map.eval_lift(x).ok().map(|(y, _)| (x0, y))).collect();
        }
        let vertices = outer.pts.len() + holes.iter().map(|h| h.pts.len()).sum::<usize>();
        if vertices > s.max_vertices {
            return Err(LabError::NotReached { cap: k });
        }
        let mut curves: Vec<&Curve> = vec![&outer];
        curves.extend(holes.iter());
        let hash = EdgeHash::new(&curves, need);
        let mut best = (-1.0, 0usize);
        for (i, (_, w)) in pts.iter().enumerate() {
            let d = hash.clearance(*w);
            if d > best.0 {
                best = (d, i);
            }
        }
        let (x0, w) = pts[best.1];
        let wt = TorusPoint::from_lift(w);
        trace.push(IrgTraceRow { iterate: k, inscribed_radius: best.0, witness_x1: wt.x1, witness_x2: wt.x2 });
        if best.0 >= need {
            return Ok(IrgOutcome {
                seed,
                iterates: k,
                witness: TorusPoint::from_lift(x0),
                center: wt,
                trace,
                vertices,
                holes: holes.len(),
                stuck_edges: stuck,
                verification: None,
                witness_lift: x0,
                seed_lift: c,
            });
        }
    }
    Err(LabError::NotReached { cap: s.cap })
}

/// Lifted punctures inside the image of the seed disk after `k` steps.
fn swallowed_punctures<B: BaseMap + ?Sized>(map: &B, outer: &Curve, c: V2, r: f64, k: usize) -> Result<Vec<V2>> {
    let Some(q) = map.puncture() else { return Ok(Vec::new()) };
    let q = q.vec();
    let (mut lo, mut hi) = (V2::repeat(f64::INFINITY), V2::repeat(f64::NEG_INFINITY));
    for p in &outer.pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let mut out = Vec::new();
    for i in (lo.x - q.x).ceil() as i64..=(hi.x - q.x).floor() as i64 {
        for j in (lo.y - q.y).ceil() as i64..=(hi.y - q.y).floor() as i64 {
            let qq = q + V2::new(i as f64, j as f64);
            if let Some(x) = lift_preimage(map, qq, k)? {
                if (x - c).norm() < r {
                    out.push(qq);
                }
            }
        }
    }
    Ok(out)
}

/// Re-verifies a witness: every probe of the ball of radius `r0` around the
/// image centre must pull back into the seed disk along the witness orbit.
pub fn verify_witness<B: BaseMap + ?Sized>(map: &B, out: &IrgOutcome, r0: f64, probes: usize) -> Result<ProbeCheck> {
    let guide = lift_orbit(map, out.witness_lift, out.iterates)?;
    let w = guide[out.iterates];
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let depths: Vec<Option<f64>> = (0..probes)
        .into_par_iter()
        .map(|i| {
            let r = r0 * ((i as f64 + 0.5) / probes as f64).sqrt();
            let th = golden * i as f64;
            let z = w + V2::new(r * th.cos(), r * th.sin());
            match pull_back(map, z, &guide) {
                Ok(Some(x)) => Some((x - out.seed_lift).norm() / out.seed.radius),
                _ => None,
            }
        })
        .collect();
    let mut check = ProbeCheck { probes, covered: 0, worst_depth: 0.0 };
    for d in depths {
        match d {
            Some(d) if d < 1.0 => {
                check.covered += 1;
                check.worst_depth = check.worst_depth.max(d);
            }
            Some(d) => check.worst_depth = check.worst_depth.max(d),
            None => check.worst_depth = f64::INFINITY,
        }
    }
    Ok(check)
}

/// Runs every seed independently and re-verifies each witness.
pub fn irg_check<B: BaseMap + ?Sized>(map: &B, seeds: &[Ball], r0: f64, s: &IrgSettings) -> Vec<Result<IrgOutcome>> {
    seeds
        .par_iter()
        .map(|&b| {
            let mut out = irg_seed(map, b, r0, s)?;
            out.verification = Some(verify_witness(map, &out, r0, s.probes)?);
            Ok(out)
        })
        .collect()
}

/// A certified visit from a seed disk to a target disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub time: usize,
    /// Point of the seed disk whose orbit enters the target.
    pub start: TorusPoint,
    pub arrival_distance: f64,
}

/// Uses a verified IRG ball to reach `target`: a preimage of the target's
/// centre inside the ball is pulled back into the seed disk, and the
/// resulting orbit is checked forward.
pub fn connect<B: BaseMap + ?Sized>(map: &B, out: &IrgOutcome, r0: f64, target: Ball, max_depth: usize) -> Result<Option<Connection>> {
    let guide = lift_orbit(map, out.witness_lift, out.iterates)?;
    let w = guide[out.iterates];
    let wt = TorusPoint::from_lift(w);
    let mut level = vec![target.center];
    for m in 0..=max_depth {
        let mut hits: Vec<(f64, TorusPoint)> =
            level.iter().map(|z| (wt.dist(z), *z)).filter(|(d, _)| *d < 0.9 * r0).collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, z) in hits {
            let zl = w + wt.displacement_to(&z);
            let Some(x) = pull_back(map, zl, &guide)? else { continue };
            if (x - out.seed_lift).norm() >= out.seed.radius {
                continue;
            }
            let start = TorusPoint::from_lift(x);
            let mut y = start;
            let mut ok = true;
            for _ in 0..out.iterates + m {
                match map.apply(y) {
                    Ok(v) => y = v,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            let d = y.dist(&target.center);
            if ok && d < target.radius {
                return Ok(Some(Connection { time: out.iterates + m, start, arrival_distance: d }));
            }
        }
        if m < max_depth {
            let mut next = Vec::with_capacity(level.len() * map.linear().degree());
            for z in &level {
                next.extend(map.preimages(*z, 1e-9)?);
            }
            level = next;
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{EndomorphismModel, LinearPart, RegionGeometry};

    fn pure_a() -> EndomorphismModel {
        let p = TorusPoint::new(0.5, 0.0);
        let regions = RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.2, expansion: 1.5 };
        EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), None, regions).unwrap()
    }

    #[test]
    fn segment_distance() {
        let (a, b) = (V2::new(0.0, 0.0), V2::new(1.0, 0.0));
        assert_eq!(point_segment_distance(V2::new(0.5, 2.0), a, b), 2.0);
        assert_eq!(point_segment_distance(V2::new(-3.0, 4.0), a, b), 5.0);
    }

    #[test]
    fn linear_growth_bound() {
        let f = pure_a();
        let r0 = 0.06;
        let out = irg_seed(&f, Ball::new(TorusPoint::new(0.2, 0.7), 1e-3), r0, &IrgSettings::default()).unwrap();
        let bound = ((r0 / 1e-3).ln() / 2f64.ln()).ceil() as usize;
        assert!(out.iterates <= bound, "{} > {bound}", out.iterates);
        // the image of the disk is an ellipse with semi-axes 3^k r, 2^k r
        let k = out.iterates as i32;
        assert!(out.trace.last().unwrap().inscribed_radius <= 2f64.powi(k) * 1e-3 + 1e-12);
    }

    #[test]
    fn witness_probes_pull_back_into_seed() {
        let f = pure_a();
        let out = irg_seed(&f, Ball::new(TorusPoint::new(0.2, 0.7), 1e-3), 0.06, &IrgSettings::default()).unwrap();
        let chk = verify_witness(&f, &out, 0.06, 2000).unwrap();
        assert!(chk.all_covered(), "{chk:?}");
    }

    #[test]
    fn oversized_probe_ball_is_not_covered() {
        let f = pure_a();
        let out = irg_seed(&f, Ball::new(TorusPoint::new(0.2, 0.7), 1e-3), 0.06, &IrgSettings::default()).unwrap();
        let k = out.iterates as i32;
        // the minor semi-axis of the image ellipse is 2^k r
        let chk = verify_witness(&f, &out, 1.5 * 2f64.powi(k) * 1e-3, 2000).unwrap();
        assert!(!chk.all_covered());
    }
}
