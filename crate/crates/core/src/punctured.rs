//! The punctured base map `f* = f ∘ Φ`, where `Φ` blows the puncture `q` up
//! onto a small circle, and the certificates attached to it.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::endomorphism::{EndomorphismModel, LinearPart, RegionGeometry, HYPERBOLICITY_TOL};
use crate::error::{LabError, Result};
use crate::map::{check_tol, iterate_lift, sort_dedup, BaseMap};
use crate::periodic::periodic_points;
use crate::solenoid::{SkewProductModel, SolenoidPoint, FiberPoint};
use crate::torus::{sigma_min, Ball, Multiplier, TorusPoint, M2, V2};

/// Distance to the puncture below which `f*` is undefined.
pub const PUNCTURE_TOL: f64 = 1e-12;

/// Radial blow-up `Φ(q + r u) = q + R(r) u` of the punctured disk
/// `B(q, ρ)` onto the annulus `core < |z − q| < ρ`.
///
/// `R(r) = core + amp·r^κ` for `r ≤ ρ/2`; on `[ρ/2, ρ]` it is blended into
/// the identity with a cubic smoothstep, so `Φ` is C¹ and equals the
/// identity outside `B(q, ρ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowUpModel {
    pub q: TorusPoint,
    pub rho: f64,
    pub core_radius: f64,
    pub amp: f64,
    pub kappa: f64,
}

impl BlowUpModel {
    /// `(R(r), R'(r))`.
    pub fn radial(&self, r: f64) -> (f64, f64) {
        if r >= self.rho {
            return (r, 1.0);
        }
        let inner = self.core_radius + self.amp * r.powf(self.kappa);
        let dinner = self.amp * self.kappa * r.powf(self.kappa - 1.0);
        let half = 0.5 * self.rho;
        if r <= half {
            return (inner, dinner);
        }
        let t = (r - half) / half;
        let b = t * t * (3.0 - 2.0 * t);
        let db = 6.0 * t * (1.0 - t) / half;
        ((1.0 - b) * inner + b * r, (1.0 - b) * dinner + b + db * (r - inner))
    }

    /// Inverse of the radial profile on `(core, ρ)`.
    pub fn radial_inverse(&self, s: f64) -> Option<f64> {
        if s >= self.rho {
            return Some(s);
        }
        if s <= self.core_radius {
            return None;
        }
        let (mut lo, mut hi) = (0.0, self.rho);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.radial(mid).0 < s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-17_f64.max(hi * 1e-16) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    fn validate(&self, regions: &RegionGeometry, saddle: Option<TorusPoint>) -> Result<()> {
        let bad = |m: String| Err(LabError::InvalidModel(m));
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return bad(format!("blow-up exponent must lie in (0,1), got {}", self.kappa));
        }
        if !(self.rho > 0.0 && self.core_radius > 0.0 && self.amp > 0.0) {
            return bad("blow-up radii and amplitude must be positive".into());
        }
        if self.q.dist(&regions.u0.center) + self.rho >= regions.u0.radius {
            return bad("invariant B(q,rho) ⊂ U_0 violated".into());
        }
        if let Some(p) = saddle {
            if p.dist(&self.q) <= self.rho {
                return bad("the saddle must lie outside B(q,rho)".into());
            }
        }
        // R increasing with R(r) < r on (0, ρ): Φ is a diffeomorphism onto the annulus
        let n = 4000;
        let mut prev = self.core_radius;
        for k in 1..n {
            let r = self.rho * k as f64 / n as f64;
            let (rr, dr) = self.radial(r);
            if !(dr > 0.0 && rr > prev && (r < 0.5 * self.rho || rr < r)) {
                return bad(format!("blow-up profile is not a radial diffeomorphism at r = {r:.3e}"));
            }
            prev = rr;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PuncturedMapModel {
    pub endo: EndomorphismModel,
    pub blowup: BlowUpModel,
}

/// The section return map `F*` over the punctured base.
pub type ReturnMapModel = SkewProductModel<PuncturedMapModel>;

impl PuncturedMapModel {
    pub fn new(endo: EndomorphismModel, blowup: BlowUpModel) -> Result<Self> {
        blowup.validate(&endo.regions, endo.deformation.as_ref().map(|d| d.center))?;
        Ok(Self { endo, blowup })
    }

    fn nearest_q(&self, x: V2) -> V2 {
        let q = self.blowup.q.vec();
        q + (x - q).map(f64::round)
    }

    /// `Φ` on the lift, with its Jacobian.
    pub fn blow_up_lift(&self, x: V2) -> Result<(V2, M2)> {
        let qq = self.nearest_q(x);
        let v = x - qq;
        let r = v.norm();
        if r < PUNCTURE_TOL {
            return Err(LabError::AtPuncture { distance: r });
        }
        if r >= self.blowup.rho {
            return Ok((x, M2::identity()));
        }
        let u = v / r;
        let (rr, dr) = self.blowup.radial(r);
        let uu = u * u.transpose();
        Ok((qq + u * rr, uu * dr + (M2::identity() - uu) * (rr / r)))
    }

    /// `Φ⁻¹` on the lift; `None` inside the core disk (no preimage).
    pub fn blow_down_lift(&self, z: V2) -> Option<V2> {
        let qq = self.nearest_q(z);
        let v = z - qq;
        let s = v.norm();
        if s >= self.blowup.rho {
            return Some(z);
        }
        let r = self.blowup.radial_inverse(s)?;
        Some(qq + v * (r / s))
    }

    /// `f*`, equal to `f` outside `B(q, ρ)`.
    pub fn eval_fstar(&self, x: TorusPoint) -> Result<(TorusPoint, M2)> {
        self.eval(x)
    }

    /// Points of `S_σ`, the curve the puncture is blown up onto.
    pub fn s_sigma(&self, n: usize) -> Vec<TorusPoint> {
        let q = self.blowup.q.vec();
        (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                TorusPoint::from_lift(self.puncture_limit(q, th).expect("punctured map"))
            })
            .collect()
    }

    /// Least-squares slope of `log|det Df*|` against `log r` along the ray
    /// at angle `theta`, over `count` log-spaced radii in `[r_min, r_max]`.
    pub fn determinant_slope(&self, theta: f64, r_min: f64, r_max: f64, count: usize) -> Result<f64> {
        let u = V2::new(theta.cos(), theta.sin());
        let q = self.blowup.q.vec();
        let mut pts = Vec::with_capacity(count);
        for k in 0..count {
            let lr = r_min.ln() + (r_max.ln() - r_min.ln()) * k as f64 / (count - 1) as f64;
            let (_, j) = self.eval_lift(q + u * lr.exp())?;
            pts.push((lr, j.determinant().abs().ln()));
        }
        Ok(linear_fit_slope(&pts))
    }

    /// The determinant exponent the blow-up actually has as `r → 0`:
    /// `R' R / r ∝ r^{κ−1} · r^{-1}`.
    pub fn asymptotic_slope(&self) -> f64 {
        self.blowup.kappa - 2.0
    }
}

pub fn linear_fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

impl BaseMap for PuncturedMapModel {
    fn eval_lift(&self, x: V2) -> Result<(V2, M2)> {
        let (z, dphi) = self.blow_up_lift(x)?;
        let (y, j) = self.endo.eval_lift_inner(z);
        Ok((y, j * dphi))
    }

    fn linear(&self) -> &LinearPart {
        &self.endo.linear
    }

    fn regions(&self) -> &RegionGeometry {
        &self.endo.regions
    }

    fn lift_inverse(&self, target: V2, seed: V2) -> Result<Option<V2>> {
        let s = self.blow_up_lift(seed).map(|p| p.0).unwrap_or(seed);
        match self.endo.lift_inverse(target, s)? {
            Some(z) => Ok(self.blow_down_lift(z)),
            None => Ok(None),
        }
    }

    fn preimages(&self, y: TorusPoint, tol: f64) -> Result<Vec<TorusPoint>> {
        check_tol(tol)?;
        let mut out = Vec::new();
        for z in self.endo.preimages(y, tol)? {
            if let Some(x) = self.blow_down_lift(z.vec()) {
                let px = TorusPoint::from_lift(x);
                if self.apply(px)?.dist(&y) >= tol {
                    return Err(LabError::seed_failure(z));
                }
                out.push(px);
            }
        }
        Ok(sort_dedup(out, 1e-12))
    }

    fn refinement_spots(&self) -> Vec<(TorusPoint, f64)> {
        let mut s = self.endo.refinement_spots();
        s.push((self.blowup.q, self.blowup.rho));
        s
    }

    fn puncture(&self) -> Option<TorusPoint> {
        Some(self.blowup.q)
    }

    fn puncture_limit(&self, q_lift: V2, theta: f64) -> Option<V2> {
        let u = V2::new(theta.cos(), theta.sin());
        Some(self.endo.eval_lift_inner(q_lift + u * self.blowup.core_radius).0)
    }
}

/// Per-ball outcome of the local-diffeomorphism cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverElement {
    pub ball: Ball,
    /// Smallest ratio `dist(f x, f x') / dist(x, x')` over sample pairs.
    pub separation_ratio: f64,
    /// Smallest singular value of the Jacobian over samples.
    pub min_sigma: f64,
}

/// Covers T by `grid × grid` balls of the given radius and certifies that
/// `f*` is injective with nonsingular Jacobian on each (minus `q`).
pub fn local_diffeo_cover<B: BaseMap>(map: &B, grid: usize, radius: f64, samples: usize, seed: u64) -> Result<Vec<CoverElement>> {
    if radius * std::f64::consts::SQRT_2 < 1.0 / grid as f64 {
        return Err(LabError::Precondition("balls do not cover the torus".into()));
    }
    let elems: Vec<Result<CoverElement>> = (0..grid * grid)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid, idx % grid);
            let c = TorusPoint::new((i as f64 + 0.5) / grid as f64, (j as f64 + 0.5) / grid as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut xs = Vec::with_capacity(samples);
            let mut ys = Vec::with_capacity(samples);
            let mut min_sigma = f64::INFINITY;
            while xs.len() < samples {
                let r = radius * rng.gen::<f64>().sqrt();
                let th = rng.gen::<f64>() * std::f64::consts::TAU;
                let x = c.vec() + V2::new(r * th.cos(), r * th.sin());
                let Ok((y, j)) = map.eval_lift(x) else { continue };
                min_sigma = min_sigma.min(sigma_min(&j));
                xs.push(x);
                ys.push(TorusPoint::from_lift(y));
            }
            let mut ratio = f64::INFINITY;
            for a in 0..samples {
                for b in a + 1..samples {
                    let dx = (xs[a] - xs[b]).norm();
                    ratio = ratio.min(ys[a].dist(&ys[b]) / dx);
                }
            }
            if !(ratio > 0.0 && min_sigma > 0.0) {
                return Err(LabError::CoverFailure {
                    index: idx,
                    reason: format!("separation ratio {ratio:.3e}, min singular value {min_sigma:.3e}"),
                });
            }
            Ok(CoverElement { ball: Ball::new(c, radius), separation_ratio: ratio, min_sigma })
        })
        .collect();
    elems.into_iter().collect()
}

/// Finite-horizon approximation of the expanding core Λ₁.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandingCore {
    pub points: Vec<TorusPoint>,
    pub horizon: usize,
    /// Distance from the cloud to U₀.
    pub r0: f64,
}

/// Step of the R2 additive recurrence. Any lattice sample is carried onto a
/// few orbits by the integer linear part, so the core is sampled along this
/// low-discrepancy sequence instead.
const R2_STEP: (f64, f64) = (0.754_877_666_246_692_7, 0.569_840_290_998_053_3);

/// Points of a low-discrepancy sample of `resolution²` points in U₁ᶜ whose
/// first `horizon` iterates stay in U₁ᶜ.
pub fn lambda1_and_r0<B: BaseMap>(map: &B, horizon: usize, resolution: usize) -> Result<ExpandingCore> {
    if horizon < 20 {
        return Err(LabError::Precondition(format!("core horizon must be >= 20, got {horizon}")));
    }
    let regions = map.regions();
    let (u0, u1) = (regions.u0, regions.u1);
    let rows: Vec<Vec<TorusPoint>> = (0..resolution)
        .into_par_iter()
        .map(|i| {
            let mut keep = Vec::new();
            'pt: for j in 0..resolution {
                let n = (i * resolution + j) as f64;
                let x = TorusPoint::new(0.5 + n * R2_STEP.0, 0.5 + n * R2_STEP.1);
                if u1.contains(&x) {
                    continue;
                }
                let mut y = x.vec();
                for _ in 0..horizon {
                    match map.eval_lift(y) {
                        // reduce every step: the lift grows like the expansion rate
                        Ok((z, _)) if !u1.contains_lift(z) => y = TorusPoint::from_lift(z).vec(),
                        _ => continue 'pt,
                    }
                }
                keep.push(x);
            }
            keep
        })
        .collect();
    let points: Vec<TorusPoint> = rows.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(LabError::EmptyCore { horizon });
    }
    let r0 = points.iter().map(|p| u0.clearance(p)).fold(f64::INFINITY, f64::min);
    Ok(ExpandingCore { points, horizon, r0 })
}

/// A periodic orbit of `F*` lifted from a periodic orbit of `f*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    pub period: usize,
    /// Base orbit, starting at its lexicographically smallest point.
    pub orbit: Vec<TorusPoint>,
    /// Fiber coordinate of the periodic point over `orbit[0]`.
    pub fiber: FiberPoint,
    /// Floquet multipliers of `DF*^period`, sorted by decreasing modulus.
    pub multipliers: Vec<Multiplier>,
    /// Number of multipliers of modulus < 1.
    pub index: usize,
    /// Smallest `|log|μ||` over the multipliers.
    pub hyperbolicity_gap: f64,
}

/// Periodic orbits of the return map of minimal period `1..=max_period`.
pub fn periodic_indices<B: BaseMap>(m: &SkewProductModel<B>, max_period: usize, grid: usize) -> Result<Vec<PeriodicOrbitRecord>> {
    if max_period < 1 {
        return Err(LabError::Precondition("max period must be >= 1".into()));
    }
    let mut out = Vec::new();
    for period in 1..=max_period {
        let mut seen: Vec<TorusPoint> = Vec::new();
        for pp in periodic_points(&m.base, period, grid) {
            if pp.minimal_period != period || seen.iter().any(|s| s.dist(&pp.point) < 1e-8) {
                continue;
            }
            let mut orbit = vec![pp.point];
            let mut x = pp.point;
            for _ in 1..period {
                x = m.base.apply(x)?;
                orbit.push(x);
            }
            seen.extend_from_slice(&orbit);
            let start = (0..period).min_by(|&a, &b| orbit[a].lex_cmp(&orbit[b])).unwrap_or(0);
            orbit.rotate_left(start);
            out.push(orbit_record(m, orbit)?);
        }
    }
    Ok(out)
}

fn orbit_record<B: BaseMap>(m: &SkewProductModel<B>, orbit: Vec<TorusPoint>) -> Result<PeriodicOrbitRecord> {
    let period = orbit.len();
    let lam = m.lambda_f;
    // fixed point of the affine fiber composition y ↦ λᵖ y + Σ λ^{p−1−k} h(x_k)
    let mut acc = V2::zeros();
    for x in &orbit {
        acc = acc * lam + m.placement.eval(*x);
    }
    let y = acc / (1.0 - lam.powi(period as i32));
    let mut z = SolenoidPoint::new(orbit[0], FiberPoint::new(y.x, y.y));
    let mut mono = Matrix4::<f64>::identity();
    for _ in 0..period {
        let (next, d) = m.eval_with_derivative(&z)?;
        mono = d * mono;
        z = next;
    }
    let mut multipliers: Vec<Multiplier> = mono
        .complex_eigenvalues()
        .iter()
        .map(|c| Multiplier { re: c.re, im: c.im })
        .collect();
    multipliers.sort_by(|a, b| b.modulus().total_cmp(&a.modulus()).then(b.im.total_cmp(&a.im)));
    for mu in &multipliers {
        if (mu.modulus() - 1.0).abs() < HYPERBOLICITY_TOL {
            return Err(LabError::NonhyperbolicOrbit { period, x1: orbit[0].x1, x2: orbit[0].x2, modulus: mu.modulus() });
        }
    }
    let index = multipliers.iter().filter(|mu| mu.modulus() < 1.0).count();
    let gap = multipliers.iter().map(|mu| mu.modulus().ln().abs()).fold(f64::INFINITY, f64::min);
    Ok(PeriodicOrbitRecord { period, orbit, fiber: FiberPoint::new(y.x, y.y), multipliers, index, hyperbolicity_gap: gap })
}

/// LP1 restricted to the punctured ball, with the determinant law on the
/// innermost radii reported alongside.
pub fn blowup_determinant_report(m: &PuncturedMapModel, angles: usize) -> Result<CertificateReport> {
    let q = m.blowup.q.vec();
    let delta = m.endo.regions.expansion;
    let mut min_det = f64::INFINITY;
    let mut at_r = 0.0;
    let radii = 2000;
    for i in 0..radii {
        let r = m.blowup.rho * 10f64.powf(-8.0 + 8.0 * i as f64 / (radii - 1) as f64);
        for k in 0..angles {
            let th = std::f64::consts::TAU * (k as f64 + 0.5) / angles as f64;
            let (_, j) = m.eval_lift(q + V2::new(r * th.cos(), r * th.sin()))?;
            let d = j.determinant().abs();
            if d < min_det {
                min_det = d;
                at_r = r;
            }
        }
    }
    let (_, jq) = iterate_lift(&m.endo, q, 1)?;
    Ok(CertificateReport::new("LP1_punctured_ball")
        .resolution(radii * angles)
        .value("min_abs_det", min_det)
        .value("argmin_radius", at_r)
        .value("det_Df_at_q", jq.determinant())
        .source(format!("Delta={delta} (region geometry)"))
        .decide(min_det - delta, 0.0, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{BlendProfile, SaddleDeformation};

    pub(crate) fn model() -> PuncturedMapModel {
        let p = TorusPoint::new(0.5, 0.0);
        let regions = RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.2, expansion: 1.5 };
        let d = SaddleDeformation { center: p, r_out: 0.12, mu_u: 6.0, mu_s: 0.5, profile: BlendProfile::LogSmoothstep { inner_ratio: 3e-3, outer_ratio: 0.1 } };
        let endo = EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), Some(d), regions).unwrap();
        let b = BlowUpModel { q: TorusPoint::new(0.5, 0.05), rho: 0.02, core_radius: 0.002, amp: 0.075, kappa: 0.5 };
        PuncturedMapModel::new(endo, b).unwrap()
    }

    #[test]
    fn radial_profile_is_c1_at_the_seams() {
        let b = model().blowup;
        for r in [0.5 * b.rho, b.rho] {
            let (lo, dlo) = b.radial(r - 1e-9);
            let (hi, dhi) = b.radial(r + 1e-9);
            assert!((lo - hi).abs() < 1e-8);
            assert!((dlo - dhi).abs() < 1e-5, "{dlo} vs {dhi}");
        }
    }

    #[test]
    fn radial_inverse_round_trips() {
        let b = model().blowup;
        for r in [1e-9, 1e-5, 3e-3, 0.012, 0.0199] {
            let s = b.radial(r).0;
            assert!((b.radial_inverse(s).unwrap() - r).abs() < 1e-12);
        }
        assert!(b.radial_inverse(0.5 * b.core_radius).is_none());
    }

    #[test]
    fn agrees_with_f_off_the_ball() {
        let m = model();
        let x = TorusPoint::new(0.3, 0.7);
        assert_eq!(m.eval_fstar(x).unwrap(), m.endo.eval_and_jacobian(x));
    }

    #[test]
    fn undefined_at_puncture() {
        let m = model();
        assert!(matches!(m.eval_fstar(m.blowup.q), Err(LabError::AtPuncture { .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences_in_ball() {
        let m = model();
        let h = 1e-8;
        for &(a, b) in &[(0.503, 0.051), (0.49, 0.061), (0.5001, 0.0499), (0.515, 0.04)] {
            let x = V2::new(a, b);
            let (_, j) = m.eval_lift(x).unwrap();
            for k in 0..2 {
                let mut e = V2::zeros();
                e[k] = h;
                let fd = (m.eval_lift(x + e).unwrap().0 - m.eval_lift(x - e).unwrap().0) / (2.0 * h);
                assert!((fd - j.column(k)).norm() < 1e-5 * j.norm());
            }
        }
    }

    #[test]
    fn determinant_slope_is_kappa_minus_two_near_q() {
        let m = model();
        let s = m.determinant_slope(0.3, 1e-12, 1e-9, 20).unwrap();
        assert!((s - m.asymptotic_slope()).abs() < 0.01, "{s}");
    }

    #[test]
    fn preimages_of_hole_points_drop_a_sheet() {
        let m = model();
        let inside = TorusPoint::from_lift(m.endo.eval_lift_inner(m.blowup.q.vec()).0);
        assert_eq!(m.preimages(inside, 1e-9).unwrap().len(), 5);
        assert_eq!(m.preimages(TorusPoint::new(0.2, 0.3), 1e-9).unwrap().len(), 6);
    }
}
