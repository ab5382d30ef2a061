//! The volume-expanding torus endomorphism: an integer linear part with a
//! local deformation that turns one of its fixed points into a saddle.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::{check_tol, newton_solve, sort_dedup, BaseMap};
use crate::torus::{eigenvalues2, wrap_centered, Ball, Multiplier, TorusPoint, M2, V2};

/// Integer matrix acting on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[i64; 2]; 2]", into = "[[i64; 2]; 2]")]
pub struct LinearPart {
    a: [[i64; 2]; 2],
    mat: M2,
    inv: M2,
}

impl TryFrom<[[i64; 2]; 2]> for LinearPart {
    type Error = LabError;

    fn try_from(a: [[i64; 2]; 2]) -> Result<Self> {
        Self::new(a[0][0], a[0][1], a[1][0], a[1][1])
    }
}

impl From<LinearPart> for [[i64; 2]; 2] {
    fn from(l: LinearPart) -> Self {
        l.a
    }
}

impl LinearPart {
    pub fn new(a11: i64, a12: i64, a21: i64, a22: i64) -> Result<Self> {
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 2 {
            return Err(LabError::InvalidModel(format!(
                "linear part must have |det A| >= 2, got det = {det}"
            )));
        }
        let mat = M2::new(a11 as f64, a12 as f64, a21 as f64, a22 as f64);
        let ev = eigenvalues2(&mat);
        if ev[1].modulus() <= 1.0 {
            return Err(LabError::InvalidModel(format!(
                "linear part must be expanding, smallest eigenvalue modulus is {}",
                ev[1].modulus()
            )));
        }
        let inv = mat.try_inverse().expect("det != 0");
        Ok(Self { a: [[a11, a12], [a21, a22]], mat, inv })
    }

    pub fn diagonal(a11: i64, a22: i64) -> Result<Self> {
        Self::new(a11, 0, 0, a22)
    }

    pub fn entries(&self) -> [[i64; 2]; 2] {
        self.a
    }

    pub fn matrix(&self) -> M2 {
        self.mat
    }

    pub fn det(&self) -> i64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn degree(&self) -> usize {
        self.det().unsigned_abs() as usize
    }

    pub fn is_positive_diagonal(&self) -> bool {
        self.a[0][1] == 0 && self.a[1][0] == 0 && self.a[0][0] > 0 && self.a[1][1] > 0
    }

    pub fn apply(&self, x: V2) -> V2 {
        self.mat * x
    }

    /// Lifted preimages `A⁻¹(y + k)` of `y` over a set of coset
    /// representatives `k` of Z²/AZ², one per sheet.
    pub fn lattice_preimages(&self, y: V2) -> Vec<V2> {
        let d = self.degree() as i64;
        let mut out: Vec<V2> = Vec::with_capacity(d as usize);
        for i in 0..d {
            for j in 0..d {
                let x = self.inv * (y + V2::new(i as f64, j as f64));
                let fresh = out.iter().all(|z| wrap_centered(z - x).norm() > 1e-9);
                if fresh {
                    out.push(x);
                }
                if out.len() == d as usize {
                    return out;
                }
            }
        }
        out
    }

    /// Exact periodic points of period dividing `n` of the linear map,
    /// solutions of `(Aⁿ − I) x ∈ Z²`, reduced to [0,1)².
    pub fn periodic_seeds(&self, n: usize) -> Vec<V2> {
        let mut an = M2::identity();
        for _ in 0..n {
            an = self.mat * an;
        }
        let b = an - M2::identity();
        let Some(binv) = b.try_inverse() else {
            return Vec::new();
        };
        let d = b.determinant().abs().round() as i64;
        let mut out: Vec<V2> = Vec::new();
        let bound = d.max(1);
        for i in 0..bound {
            for j in 0..bound {
                let x = binv * V2::new(i as f64, j as f64);
                let x = V2::new(x.x - x.x.floor(), x.y - x.y.floor());
                if out.iter().all(|z| wrap_centered(z - x).norm() > 1e-9) {
                    out.push(x);
                }
                if out.len() as i64 == d {
                    return out;
                }
            }
        }
        out
    }
}

/// Radial profile `η` used to blend the saddle germ into the linear part.
/// Both profiles satisfy η(0)=0, η(1)=1 and η'(0)=η'(1)=0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlendProfile {
    /// Cubic smoothstep in the radius.
    Smoothstep,
    /// Cubic smoothstep in log-radius over [inner_ratio, outer_ratio]; zero
    /// below, one above. `ρ η'(ρ)` peaks at `1.5 / ln(outer/inner)`, which is
    /// what controls the determinant of the blended map.
    LogSmoothstep {
        inner_ratio: f64,
        #[serde(default = "unit")]
        outer_ratio: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn smoothstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u))
    }
}

impl BlendProfile {
    /// `(η(ρ), η'(ρ))` for ρ in [0, 1].
    pub fn eval(&self, rho: f64) -> (f64, f64) {
        match *self {
            BlendProfile::Smoothstep => smoothstep(rho),
            BlendProfile::LogSmoothstep { inner_ratio, outer_ratio } => {
                if rho <= inner_ratio {
                    return (0.0, 0.0);
                }
                if rho >= outer_ratio {
                    return (1.0, 0.0);
                }
                let span = (outer_ratio / inner_ratio).ln();
                let u = (rho.ln() - inner_ratio.ln()) / span;
                let (s, ds) = smoothstep(u);
                (s, ds / (rho * span))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BlendProfile::Smoothstep => Ok(()),
            BlendProfile::LogSmoothstep { inner_ratio, outer_ratio } if 0.0 < inner_ratio && inner_ratio < outer_ratio && outer_ratio <= 1.0 => Ok(()),
            BlendProfile::LogSmoothstep { inner_ratio, outer_ratio } => Err(LabError::InvalidModel(format!(
                "log blend ratios must satisfy 0 < inner < outer <= 1, got {inner_ratio} and {outer_ratio}"
            ))),
        }
    }
}

/// Local deformation around a fixed point `p` of the linear part:
/// `f(x) = p + M(η(|x−p|/r_out)) (x−p)`, with `M` moving from
/// `diag(mu_u, mu_s)` at the center to `A` on the boundary along a
/// geometric path of diagonal matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleDeformation {
    pub center: TorusPoint,
    pub r_out: f64,
    pub mu_u: f64,
    pub mu_s: f64,
    pub profile: BlendProfile,
}

/// U₀, U₁ and the two constants of the expansion properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGeometry {
    pub u0: Ball,
    pub u1: Ball,
    pub delta0: f64,
    /// Expansion constant Δ, shared by the determinant and the
    /// singular-value conditions.
    pub expansion: f64,
}

impl RegionGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.u0.diameter() < 1.0) {
            return Err(LabError::InvalidModel(format!(
                "invariant diam(U_0)<1 violated: diam(U_0) = {}",
                self.u0.diameter()
            )));
        }
        if !(self.u0.radius > 0.0) {
            return Err(LabError::InvalidModel("U_0 radius must be positive".into()));
        }
        let gap = self.u1.radius - self.u0.radius - self.u0.center.dist(&self.u1.center);
        if !(gap > 0.0) {
            return Err(LabError::InvalidModel(
                "invariant closure(U_0) ⊂ U_1 violated".into(),
            ));
        }
        if !(self.u1.diameter() < 1.0) {
            return Err(LabError::InvalidModel("U_1 must have diameter < 1".into()));
        }
        if !(self.delta0 > 0.0) {
            return Err(LabError::InvalidModel("delta0 must be positive".into()));
        }
        if !(self.expansion > 1.0) {
            return Err(LabError::InvalidModel(format!(
                "expansion constant must exceed 1, got {}",
                self.expansion
            )));
        }
        Ok(())
    }

    /// Distance between U₁ᶜ and U₀.
    pub fn collar_width(&self) -> f64 {
        self.u1.radius - self.u0.radius - self.u0.center.dist(&self.u1.center)
    }
}

/// Fixed-point type by multiplier moduli.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    Repelling,
    Saddle,
    Attracting,
    Nonhyperbolic,
}

/// Moduli within this distance of 1 count as nonhyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-6;

impl FixedPointKind {
    pub fn classify(multipliers: &[Multiplier]) -> Self {
        let mods: Vec<f64> = multipliers.iter().map(Multiplier::modulus).collect();
        if mods.iter().any(|m| (m - 1.0).abs() < HYPERBOLICITY_TOL) {
            return FixedPointKind::Nonhyperbolic;
        }
        let unstable = mods.iter().filter(|&&m| m > 1.0).count();
        if unstable == mods.len() {
            FixedPointKind::Repelling
        } else if unstable == 0 {
            FixedPointKind::Attracting
        } else {
            FixedPointKind::Saddle
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub location: TorusPoint,
    pub multipliers: [Multiplier; 2],
    pub kind: FixedPointKind,
}

impl FixedPointRecord {
    pub fn from_jacobian(location: TorusPoint, jac: &M2) -> Self {
        let multipliers = eigenvalues2(jac);
        let kind = FixedPointKind::classify(&multipliers);
        Self { location, multipliers, kind }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndomorphismModel {
    pub linear: LinearPart,
    pub deformation: Option<SaddleDeformation>,
    pub regions: RegionGeometry,
}

impl EndomorphismModel {
    pub fn new(linear: LinearPart, deformation: Option<SaddleDeformation>, regions: RegionGeometry) -> Result<Self> {
        regions.validate()?;
        if let Some(d) = &deformation {
            if !linear.is_positive_diagonal() {
                return Err(LabError::InvalidModel(
                    "the saddle deformation needs a positive diagonal linear part".into(),
                ));
            }
            d.profile.validate()?;
            if !(d.mu_u > 1.0 && d.mu_s > 0.0 && d.mu_s < 1.0) {
                return Err(LabError::InvalidModel(format!(
                    "saddle multipliers must satisfy mu_u > 1 > mu_s > 0, got ({}, {})",
                    d.mu_u, d.mu_s
                )));
            }
            if !(d.mu_u * d.mu_s > regions.expansion) {
                return Err(LabError::InvalidModel(format!(
                    "invariant mu_u*mu_s > Delta violated: {} <= {}",
                    d.mu_u * d.mu_s,
                    regions.expansion
                )));
            }
            let pv = d.center.vec();
            let drift = wrap_centered(linear.apply(pv) - pv).norm();
            if drift > 1e-12 {
                return Err(LabError::InvalidModel(
                    "deformation center must be a fixed point of the linear part".into(),
                ));
            }
            if !(d.r_out > 0.0)
                || d.center.dist(&regions.u0.center) + d.r_out > regions.u0.radius + 1e-12
            {
                return Err(LabError::InvalidModel(
                    "deformation support must lie inside U_0".into(),
                ));
            }
        }
        Ok(Self { linear, deformation, regions })
    }

    /// Lifted value and Jacobian; the lift satisfies `F(x + k) = F(x) + A k`.
    pub fn eval_lift_inner(&self, x: V2) -> (V2, M2) {
        let a = self.linear.matrix();
        let Some(d) = &self.deformation else {
            return (a * x, a);
        };
        let p = d.center.vec();
        let shift = (x - p).map(f64::round);
        let v = x - p - shift;
        let r = v.norm();
        if r >= d.r_out {
            return (a * x, a);
        }
        let (a11, a22) = (a[(0, 0)], a[(1, 1)]);
        let (eta, deta) = d.profile.eval(r / d.r_out);
        let (l1, l2) = ((a11 / d.mu_u).ln(), (a22 / d.mu_s).ln());
        let m1 = d.mu_u * (eta * l1).exp();
        let m2 = d.mu_s * (eta * l2).exp();
        let y = a * (p + shift) + V2::new(m1 * v.x, m2 * v.y);
        let mut jac = M2::new(m1, 0.0, 0.0, m2);
        if r > 0.0 && deta != 0.0 {
            let g = deta / (d.r_out * r);
            let mv = V2::new(m1 * l1 * v.x, m2 * l2 * v.y);
            jac += mv * v.transpose() * g;
        }
        (y, jac)
    }

    pub fn eval_and_jacobian(&self, x: TorusPoint) -> (TorusPoint, M2) {
        let (y, j) = self.eval_lift_inner(x.vec());
        (TorusPoint::from_lift(y), j)
    }

    /// Lifted orbit of length `n + 1` starting at a plane point.
    pub fn lift_orbit(&self, x0: V2, n: usize) -> Vec<V2> {
        let mut out = Vec::with_capacity(n + 1);
        let mut x = x0;
        out.push(x);
        for _ in 0..n {
            x = self.eval_lift_inner(x).0;
            out.push(x);
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.linear.degree()
    }
}

/// Picks the point of a polar grid around `center` whose lifted image is
/// closest to `target`; used when Newton fails from a lattice seed.
pub(crate) fn polar_fallback<F>(g: &F, target: V2, center: V2, radius: f64) -> V2
where
    F: Fn(V2) -> Result<(V2, M2)>,
{
    let mut best = (f64::INFINITY, center);
    let nr = 48;
    let nt = 96;
    for i in 1..=nr {
        let r = radius * (i as f64 / nr as f64);
        for j in 0..nt {
            let th = std::f64::consts::TAU * j as f64 / nt as f64;
            let x = center + V2::new(r * th.cos(), r * th.sin());
            if let Ok((y, _)) = g(x) {
                let res = (y - target).norm();
                if res < best.0 {
                    best = (res, x);
                }
            }
        }
    }
    best.1
}

impl BaseMap for EndomorphismModel {
    fn eval_lift(&self, x: V2) -> Result<(V2, M2)> {
        Ok(self.eval_lift_inner(x))
    }

    fn linear(&self) -> &LinearPart {
        &self.linear
    }

    fn regions(&self) -> &RegionGeometry {
        &self.regions
    }

    fn lift_inverse(&self, target: V2, seed: V2) -> Result<Option<V2>> {
        let g = |x: V2| Ok(self.eval_lift_inner(x));
        if let Some(x) = newton_solve(g, target, seed, 60) {
            return Ok(Some(x));
        }
        if let Some(d) = &self.deformation {
            let p = d.center.vec();
            let c = p + (seed - p).map(f64::round);
            let s = polar_fallback(&g, target, c, d.r_out);
            if let Some(x) = newton_solve(g, target, s, 60) {
                return Ok(Some(x));
            }
        }
        Err(LabError::seed_failure(TorusPoint::from_lift(seed)))
    }

    fn preimages(&self, y: TorusPoint, tol: f64) -> Result<Vec<TorusPoint>> {
        check_tol(tol)?;
        let mut out = Vec::with_capacity(self.degree());
        for seed in self.linear.lattice_preimages(y.vec()) {
            let target = self.linear.apply(seed);
            let x = self
                .lift_inverse(target, seed)?
                .ok_or_else(|| LabError::seed_failure(TorusPoint::from_lift(seed)))?;
            let px = TorusPoint::from_lift(x);
            if self.apply(px)?.dist(&y) >= tol {
                return Err(LabError::seed_failure(TorusPoint::from_lift(seed)));
            }
            out.push(px);
        }
        let n = out.len();
        let out = sort_dedup(out, 1e-9);
        if out.len() != n {
            return Err(LabError::seed_failure(y));
        }
        Ok(out)
    }

    fn refinement_spots(&self) -> Vec<(TorusPoint, f64)> {
        match &self.deformation {
            Some(d) => vec![(d.center, d.r_out)],
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions() -> RegionGeometry {
        let p = TorusPoint::new(0.5, 0.0);
        RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.05, expansion: 1.5 }
    }

    fn deformed() -> EndomorphismModel {
        let d = SaddleDeformation {
            center: TorusPoint::new(0.5, 0.0),
            r_out: 0.12,
            mu_u: 6.0,
            mu_s: 0.5,
            profile: BlendProfile::LogSmoothstep { inner_ratio: 1e-3, outer_ratio: 1.0 },
        };
        EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), Some(d), regions()).unwrap()
    }

    #[test]
    fn det_one_rejected() {
        assert!(LinearPart::new(2, 1, 1, 1).is_err());
    }

    #[test]
    fn lattice_preimages_of_origin() {
        let a = LinearPart::diagonal(3, 2).unwrap();
        let mut pts: Vec<TorusPoint> =
            a.lattice_preimages(V2::zeros()).into_iter().map(TorusPoint::from_lift).collect();
        pts.sort_by(|a, b| a.lex_cmp(b));
        assert_eq!(pts.len(), 6);
        assert!((pts[2].x1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((pts[1].x2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn periodic_seed_count_matches_lefschetz() {
        let a = LinearPart::diagonal(3, 2).unwrap();
        assert_eq!(a.periodic_seeds(1).len(), 2);
        assert_eq!(a.periodic_seeds(2).len(), 8 * 3);
    }

    #[test]
    fn saddle_germ_at_center() {
        let f = deformed();
        let (y, j) = f.eval_and_jacobian(TorusPoint::new(0.5, 0.0));
        assert!(y.dist(&TorusPoint::new(0.5, 0.0)) < 1e-15);
        assert!((j[(0, 0)] - 6.0).abs() < 1e-14 && (j[(1, 1)] - 0.5).abs() < 1e-14);
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences_inside() {
        let f = deformed();
        let h = 1e-7;
        for &(a, b) in &[(0.53, 0.02), (0.45, -0.07), (0.5, 0.1), (0.5003, 0.0001)] {
            let x = V2::new(a, b);
            let (_, j) = f.eval_lift_inner(x);
            for k in 0..2 {
                let mut e = V2::zeros();
                e[k] = h;
                let fd = (f.eval_lift_inner(x + e).0 - f.eval_lift_inner(x - e).0) / (2.0 * h);
                for i in 0..2 {
                    assert!((fd[i] - j[(i, k)]).abs() < 1e-5 * j.norm(), "{x:?}");
                }
            }
        }
    }

    #[test]
    fn preimages_of_deformed_map_count_six() {
        let f = deformed();
        for &(a, b) in &[(0.5, 0.0), (0.51, 0.03), (0.2, 0.9), (0.0, 0.0)] {
            let y = TorusPoint::new(a, b);
            let pre = f.preimages(y, 1e-9).unwrap();
            assert_eq!(pre.len(), 6);
            for x in pre {
                assert!(f.apply(x).unwrap().dist(&y) < 1e-9);
            }
        }
    }

    #[test]
    fn diam_violation_names_invariant() {
        let mut r = regions();
        r.u0.radius = 0.6;
        r.u1.radius = 0.7;
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("diam(U_0)<1"));
    }
}
