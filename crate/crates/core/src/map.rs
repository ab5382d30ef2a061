//! The common interface of every base map of the torus used in the lab
//! (the endomorphism `f`, the punctured return map `f*`, and perturbations of
//! `f*`), plus the damped Newton solver shared by all of them.

use crate::endomorphism::{LinearPart, RegionGeometry};
use crate::error::{LabError, Result};
use crate::torus::{TorusPoint, M2, V2};

/// A C¹ map of the torus (possibly undefined at one puncture) presented by a
/// lift to the plane.
///
/// Lifts satisfy `lift(x + k) = lift(x) + A k` for integer `k`, where `A` is
/// the linear part, so iterating lifts tracks winding exactly.
pub trait BaseMap: Sync {
    /// Lifted value and Jacobian at a plane point.
    fn eval_lift(&self, x: V2) -> Result<(V2, M2)>;

    fn linear(&self) -> &LinearPart;

    fn regions(&self) -> &RegionGeometry;

    /// Solves `lift(x) = target` starting from the nearby lifted seed.
    /// Returns `Ok(None)` when the target has no lifted preimage (it lies in a
    /// hole left by a blown-up puncture).
    fn lift_inverse(&self, target: V2, seed: V2) -> Result<Option<V2>>;

    /// All preimages of `y`, each satisfying `dist(f(x), y) < tol`, sorted
    /// lexicographically.
    fn preimages(&self, y: TorusPoint, tol: f64) -> Result<Vec<TorusPoint>>;

    /// Points around which sampling is refined geometrically, with the radius
    /// of the refined disk.
    fn refinement_spots(&self) -> Vec<(TorusPoint, f64)>;

    /// The deleted point, if the map is punctured.
    fn puncture(&self) -> Option<TorusPoint> {
        None
    }

    /// Lifted limit `lim_{r→0} lift(q̃ + r u(θ))` of the map at the lifted
    /// puncture `q_lift`; the curve it traces is the circle the puncture is
    /// blown up onto.
    fn puncture_limit(&self, _q_lift: V2, _theta: f64) -> Option<V2> {
        None
    }

    fn eval(&self, x: TorusPoint) -> Result<(TorusPoint, M2)> {
        let (y, j) = self.eval_lift(x.vec())?;
        Ok((TorusPoint::from_lift(y), j))
    }

    fn apply(&self, x: TorusPoint) -> Result<TorusPoint> {
        Ok(self.eval(x)?.0)
    }
}

/// Residual below which a root is accepted without further steps.
pub const NEWTON_ACCEPT: f64 = 1e-12;

/// Damped Newton iteration for `g(x) = target` in the plane.
///
/// The seed itself is returned untouched when it already satisfies the
/// acceptance residual, so exact seeds are reproduced bit-for-bit.
pub fn newton_solve<G>(g: G, target: V2, seed: V2, max_iter: usize) -> Option<V2>
where
    G: Fn(V2) -> Result<(V2, M2)>,
{
    let mut x = seed;
    let (mut fx, mut jx) = g(x).ok()?;
    let mut res = (fx - target).norm();
    for _ in 0..max_iter {
        if res <= NEWTON_ACCEPT {
            return Some(x);
        }
        let step = jx.try_inverse()? * (fx - target);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = x - step * t;
            if let Ok((fc, jc)) = g(cand) {
                let rc = (fc - target).norm();
                if rc < res {
                    x = cand;
                    fx = fc;
                    jx = jc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return if res <= 1e-10 { Some(x) } else { None };
        }
    }
    (res <= 1e-10).then_some(x)
}

/// Iterates a lift `n` times, returning the whole orbit (length `n + 1`).
pub fn lift_orbit<B: BaseMap + ?Sized>(map: &B, x0: V2, n: usize) -> Result<Vec<V2>> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x = map.eval_lift(x)?.0;
        orbit.push(x);
    }
    Ok(orbit)
}

/// Composite lifted iterate `lift^n(x)` with the chain-rule Jacobian.
pub fn iterate_lift<B: BaseMap + ?Sized>(map: &B, x0: V2, n: usize) -> Result<(V2, M2)> {
    let mut x = x0;
    let mut jac = M2::identity();
    for _ in 0..n {
        let (y, j) = map.eval_lift(x)?;
        jac = j * jac;
        x = y;
    }
    Ok((x, jac))
}

/// Pulls `target` back `n` steps along a guiding forward orbit
/// (`guide[k] = lift^k(guide[0])`). Returns the lifted preimage, or `None`
/// if some step falls into a hole or fails to converge.
pub fn pull_back<B: BaseMap + ?Sized>(map: &B, target: V2, guide: &[V2]) -> Result<Option<V2>> {
    let n = guide.len() - 1;
    let mut y = target;
    for k in (0..n).rev() {
        let (gk1, jk) = map.eval_lift(guide[k])?;
        let seed = match jk.try_inverse() {
            Some(inv) => guide[k] + inv * (y - gk1),
            None => guide[k],
        };
        match map.lift_inverse(y, seed)? {
            Some(x) => y = x,
            None => return Ok(None),
        }
    }
    Ok(Some(y))
}

pub(crate) fn sort_dedup(mut pts: Vec<TorusPoint>, tol: f64) -> Vec<TorusPoint> {
    pts.sort_by(|a, b| a.lex_cmp(b));
    let mut out: Vec<TorusPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.iter().all(|q| q.dist(&p) > tol) {
            out.push(p);
        }
    }
    out
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(LabError::Precondition(format!("tolerance must be positive, got {tol}")))
    }
}
