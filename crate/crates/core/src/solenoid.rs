//! The solenoid skew product `F(x, y) = (f(x), λ y + h(x))` over a base map
//! of the torus, with its injectivity, cone and splitting estimates.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::BaseMap;
use crate::torus::{singular_values, TorusPoint, M2, V2};

pub type M4 = Matrix4<f64>;
pub type V4 = Vector4<f64>;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub y1: f64,
    pub y2: f64,
}

impl FiberPoint {
    pub fn new(y1: f64, y2: f64) -> Self {
        Self { y1, y2 }
    }

    pub fn vec(&self) -> V2 {
        V2::new(self.y1, self.y2)
    }

    pub fn norm(&self) -> f64 {
        self.y1.hypot(self.y2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolenoidPoint {
    pub base: TorusPoint,
    pub fiber: FiberPoint,
}

impl SolenoidPoint {
    pub fn new(base: TorusPoint, fiber: FiberPoint) -> Self {
        Self { base, fiber }
    }
}

/// `h(x) = c1 (cos 2πx1, sin 2πx1) + c2 (cos 2πx2, sin 2πx2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberPlacement {
    pub c1: f64,
    pub c2: f64,
}

impl FiberPlacement {
    pub fn eval(&self, x: TorusPoint) -> V2 {
        let (s1, k1) = (TAU * x.x1).sin_cos();
        let (s2, k2) = (TAU * x.x2).sin_cos();
        V2::new(self.c1 * k1 + self.c2 * k2, self.c1 * s1 + self.c2 * s2)
    }

    /// Jacobian of `h`; columns are the partials in x1 and x2.
    pub fn jacobian(&self, x: TorusPoint) -> M2 {
        let (s1, k1) = (TAU * x.x1).sin_cos();
        let (s2, k2) = (TAU * x.x2).sin_cos();
        M2::new(-TAU * self.c1 * s1, -TAU * self.c2 * s2, TAU * self.c1 * k1, TAU * self.c2 * k2)
    }
}

/// Center cones `{(u, w) : s‖w‖ ≤ κ‖u‖}` measured in the adapted metric in
/// which fiber vectors are scaled by `fiber_weight = s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeParams {
    pub kappa: f64,
    /// Required aperture of the image cone.
    pub kappa_image: f64,
    pub fiber_weight: f64,
}

impl ConeParams {
    pub fn validate(&self) -> Result<()> {
        if self.kappa > 0.0 && self.kappa_image > 0.0 && self.fiber_weight > 0.0 {
            Ok(())
        } else {
            Err(LabError::InvalidModel("cone apertures and fiber weight must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub at: SolenoidPoint,
    /// Orthonormal basis (Euclidean) of the estimated center plane.
    pub ec_frame: [[f64; 4]; 2],
    /// `λⁿ / m(DFⁿ|E^c)`.
    pub domination_ratio: f64,
    /// Per-step log of area growth of the pushed plane.
    pub volume_exponent: f64,
    /// Largest image-cone aperture met along the orbit.
    pub max_cone_aperture: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewProductModel<B> {
    pub base: B,
    pub lambda_f: f64,
    pub placement: FiberPlacement,
}

impl<B: BaseMap> SkewProductModel<B> {
    pub fn new(base: B, lambda_f: f64, placement: FiberPlacement) -> Result<Self> {
        if !(lambda_f > 0.0 && lambda_f < 1.0) {
            return Err(LabError::InvalidModel(format!("lambda_f must lie in (0,1), got {lambda_f}")));
        }
        let reach = placement.c1.abs() + placement.c2.abs() + lambda_f;
        if reach > 1.0 {
            return Err(LabError::InvalidModel(format!(
                "invariant |c1|+|c2|+lambda_f <= 1 violated: {reach}"
            )));
        }
        Ok(Self { base, lambda_f, placement })
    }

    pub fn eval_f(&self, z: &SolenoidPoint) -> Result<SolenoidPoint> {
        let (x1, _) = self.base.eval(z.base)?;
        let y = z.fiber.vec() * self.lambda_f + self.placement.eval(z.base);
        let norm = y.norm();
        if norm > 1.0 + 1e-12 {
            return Err(LabError::FiberEscape { x1: z.base.x1, x2: z.base.x2, norm });
        }
        Ok(SolenoidPoint::new(x1, FiberPoint::new(y.x, y.y)))
    }

    /// Value and 4×4 derivative `[[Df, 0], [Dh, λ I]]`.
    pub fn eval_with_derivative(&self, z: &SolenoidPoint) -> Result<(SolenoidPoint, M4)> {
        let (x1, df) = self.base.eval(z.base)?;
        let dh = self.placement.jacobian(z.base);
        let y = z.fiber.vec() * self.lambda_f + self.placement.eval(z.base);
        let mut d = M4::zeros();
        d.fixed_view_mut::<2, 2>(0, 0).copy_from(&df);
        d.fixed_view_mut::<2, 2>(2, 0).copy_from(&dh);
        d[(2, 2)] = self.lambda_f;
        d[(3, 3)] = self.lambda_f;
        Ok((SolenoidPoint::new(x1, FiberPoint::new(y.x, y.y)), d))
    }

    pub fn orbit(&self, z0: SolenoidPoint, n: usize) -> Result<Vec<SolenoidPoint>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(z0);
        let mut z = z0;
        for _ in 0..n {
            z = self.eval_f(&z)?;
            out.push(z);
        }
        Ok(out)
    }

    /// `min ‖h(x) − h(x')‖ − 2λ` over distinct preimages of sampled points.
    pub fn injectivity_margin(&self, samples: usize, seed: u64) -> Result<f64> {
        if samples < 1000 {
            return Err(LabError::Precondition(format!("need at least 1000 samples, got {samples}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<TorusPoint> = (0..samples).map(|_| TorusPoint::new(rng.gen(), rng.gen())).collect();
        let mins: Vec<Result<f64>> = ys
            .par_iter()
            .map(|y| {
                let pre = self.base.preimages(*y, 1e-9)?;
                let hs: Vec<V2> = pre.iter().map(|x| self.placement.eval(*x)).collect();
                let mut m = f64::INFINITY;
                for i in 0..hs.len() {
                    for j in i + 1..hs.len() {
                        m = m.min((hs[i] - hs[j]).norm());
                    }
                }
                Ok(m)
            })
            .collect();
        let mut m = f64::INFINITY;
        for r in mins {
            m = m.min(r?);
        }
        Ok(m - 2.0 * self.lambda_f)
    }

    /// Random seeds in T×D pushed forward `burn_in` times. Orbits that hit
    /// an undefined point are reseeded from the same stream.
    pub fn attractor_sample(&self, burn_in: usize, count: usize, seed: u64) -> Result<Vec<SolenoidPoint>> {
        Ok(self.attractor_orbits(burn_in, 0, count, seed)?.into_iter().map(|o| o[o.len() - 1]).collect())
    }

    /// Orbit segments `z_0 … z_len` whose first point has already been
    /// iterated `burn_in` times from a random seed.
    pub fn attractor_orbits(&self, burn_in: usize, len: usize, count: usize, seed: u64) -> Result<Vec<Vec<SolenoidPoint>>> {
        if burn_in < 20 {
            return Err(LabError::Precondition(format!("burn-in must be >= 20, got {burn_in}")));
        }
        let out: Vec<Vec<SolenoidPoint>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                loop {
                    let r = rng.gen::<f64>().sqrt();
                    let th = rng.gen::<f64>() * TAU;
                    let z0 = SolenoidPoint::new(
                        TorusPoint::new(rng.gen(), rng.gen()),
                        FiberPoint::new(r * th.cos(), r * th.sin()),
                    );
                    let Ok(head) = self.orbit(z0, burn_in) else { continue };
                    if let Ok(o) = self.orbit(head[burn_in], len) {
                        return o;
                    }
                }
            })
            .collect();
        Ok(out)
    }

    /// Image-cone aperture of `DF` at `x` for the cone `κ`:
    /// `max_u (s‖Dh u‖ + λκ) / ‖Df u‖` over horizontal unit `u`. Uses the
    /// crude bound `(s‖Dh‖ + λκ) / m(Df)` when that already suffices.
    pub fn cone_aperture(&self, x: TorusPoint, cone: &ConeParams) -> Result<f64> {
        let (_, df) = self.base.eval(x)?;
        let dh = self.placement.jacobian(x);
        let s = cone.fiber_weight;
        let (_, mdf) = singular_values(&df);
        let (ndh, _) = singular_values(&dh);
        let crude = (s * ndh + self.lambda_f * cone.kappa) / mdf;
        if crude <= cone.kappa_image {
            return Ok(crude);
        }
        let ratio = |a: f64| {
            let u = V2::new(a.cos(), a.sin());
            (s * (dh * u).norm() + self.lambda_f * cone.kappa) / (df * u).norm()
        };
        let n = 256;
        let mut best = (0.0, 0.0);
        for k in 0..n {
            let a = std::f64::consts::PI * k as f64 / n as f64;
            let v = ratio(a);
            if v > best.0 {
                best = (v, a);
            }
        }
        // golden-section polish around the best angle
        let (mut lo, mut hi) = (best.1 - std::f64::consts::PI / n as f64, best.1 + std::f64::consts::PI / n as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if ratio(m1) > ratio(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        Ok(best.0.max(ratio(0.5 * (lo + hi))))
    }

    /// Pushes the horizontal plane at `orbit[0]` along the orbit, with QR
    /// re-orthonormalisation, checking cone invariance at every visited
    /// point. Returns the estimate at the last orbit point.
    pub fn splitting_estimate(&self, orbit: &[SolenoidPoint], cone: &ConeParams) -> Result<SplittingEstimate> {
        let n = orbit.len().saturating_sub(1);
        if n < 10 {
            return Err(LabError::Precondition(format!("splitting estimate needs n >= 10 steps, got {n}")));
        }
        let mut frame = Matrix4x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let mut r_acc = M2::identity();
        let mut log_vol = 0.0;
        let mut max_ap: f64 = 0.0;
        for z in &orbit[..n] {
            let ap = self.cone_aperture(z.base, cone)?;
            if ap > cone.kappa_image {
                return Err(LabError::ConeViolation { x1: z.base.x1, x2: z.base.x2, aperture: ap, bound: cone.kappa_image });
            }
            max_ap = max_ap.max(ap);
            let (_, d) = self.eval_with_derivative(z)?;
            let (q, r) = qr_4x2(&(d * frame));
            frame = q;
            r_acc = r * r_acc;
            log_vol += (r[(0, 0)] * r[(1, 1)]).abs().ln();
        }
        let (_, m) = singular_values(&r_acc);
        let domination_ratio = self.lambda_f.powi(n as i32) / m;
        let t: Matrix2x4<f64> = frame.transpose();
        Ok(SplittingEstimate {
            at: orbit[n],
            ec_frame: [
                [t[(0, 0)], t[(0, 1)], t[(0, 2)], t[(0, 3)]],
                [t[(1, 0)], t[(1, 1)], t[(1, 2)], t[(1, 3)]],
            ],
            domination_ratio,
            volume_exponent: log_vol / n as f64,
            max_cone_aperture: max_ap,
        })
    }
}

/// Thin QR of a 4×2 matrix by modified Gram–Schmidt with one
/// reorthogonalisation pass; `R` has a positive diagonal.
pub fn qr_4x2(a: &Matrix4x2<f64>) -> (Matrix4x2<f64>, M2) {
    let mut q = *a;
    let mut r = M2::zeros();
    let c0 = a.column(0).into_owned();
    let n0 = c0.norm();
    let q0 = c0 / n0;
    r[(0, 0)] = n0;
    let mut c1 = a.column(1).into_owned();
    let p = q0.dot(&c1);
    c1 -= q0 * p;
    let p2 = q0.dot(&c1);
    c1 -= q0 * p2;
    r[(0, 1)] = p + p2;
    let n1 = c1.norm();
    r[(1, 1)] = n1;
    q.set_column(0, &q0);
    q.set_column(1, &(c1 / n1));
    (q, r)
}

/// Projector distance between two planes given by orthonormal frames.
pub fn plane_distance(a: &[[f64; 4]; 2], b: &[[f64; 4]; 2]) -> f64 {
    let proj = |f: &[[f64; 4]; 2]| {
        let u = V4::from_row_slice(&f[0]);
        let v = V4::from_row_slice(&f[1]);
        u * u.transpose() + v * v.transpose()
    };
    (proj(a) - proj(b)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{EndomorphismModel, LinearPart, RegionGeometry};
    use crate::torus::Ball;

    fn pure_a() -> EndomorphismModel {
        let p = TorusPoint::new(0.5, 0.0);
        let regions = RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.2, expansion: 1.5 };
        EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), None, regions).unwrap()
    }

    #[test]
    fn decoupled_contraction() {
        let m = SkewProductModel::new(pure_a(), 0.05, FiberPlacement { c1: 0.0, c2: 0.0 }).unwrap();
        let z = m.eval_f(&SolenoidPoint::new(TorusPoint::new(0.0, 0.0), FiberPoint::new(0.4, 0.0))).unwrap();
        assert_eq!(z.base, TorusPoint::new(0.0, 0.0));
        assert!((z.fiber.y1 - 0.02).abs() < 1e-16 && z.fiber.y2 == 0.0);
    }

    #[test]
    fn placement_formula() {
        let h = FiberPlacement { c1: 0.3, c2: 0.15 }.eval(TorusPoint::new(0.25, 0.0));
        assert!((h.x - 0.15).abs() < 1e-15 && (h.y - 0.3).abs() < 1e-15);
    }

    #[test]
    fn placement_jacobian_matches_finite_differences() {
        let pl = FiberPlacement { c1: 0.3, c2: 0.15 };
        let x = TorusPoint::new(0.123, 0.77);
        let j = pl.jacobian(x);
        let h = 1e-6;
        for k in 0..2 {
            let (mut a, mut b) = (x.vec(), x.vec());
            a[k] += h;
            b[k] -= h;
            let fd = (pl.eval(TorusPoint::from_lift(a)) - pl.eval(TorusPoint::from_lift(b))) / (2.0 * h);
            assert!((fd - j.column(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn reach_invariant_rejected() {
        assert!(SkewProductModel::new(pure_a(), 0.6, FiberPlacement { c1: 0.3, c2: 0.15 }).is_err());
    }

    #[test]
    fn single_harmonic_cannot_separate_sheets() {
        let m = SkewProductModel::new(pure_a(), 0.05, FiberPlacement { c1: 0.3, c2: 0.0 }).unwrap();
        assert!(m.injectivity_margin(1000, 1).unwrap() < 0.0);
    }

    #[test]
    fn decoupled_splitting_is_horizontal() {
        let m = SkewProductModel::new(pure_a(), 0.05, FiberPlacement { c1: 0.0, c2: 0.0 }).unwrap();
        let cone = ConeParams { kappa: 1.0, kappa_image: 0.5, fiber_weight: 1.0 };
        let orbit = m.orbit(SolenoidPoint::new(TorusPoint::new(0.1234, 0.4321), FiberPoint::new(0.0, 0.0)), 20).unwrap();
        let est = m.splitting_estimate(&orbit, &cone).unwrap();
        assert!((est.volume_exponent - 6f64.ln()).abs() < 1e-12);
        let expected = (0.05f64 / 2.0).powi(20);
        assert!((est.domination_ratio / expected - 1.0).abs() < 1e-9);
        assert!(est.ec_frame[0][2].abs() < 1e-15 && est.ec_frame[1][3].abs() < 1e-15);
    }

    #[test]
    fn qr_reconstructs() {
        let a = Matrix4x2::new(1.0, 2.0, 0.5, -1.0, 3.0, 0.25, -2.0, 4.0);
        let (q, r) = qr_4x2(&a);
        assert!((q * r - a).norm() < 1e-13);
        assert!((q.transpose() * q - M2::identity()).norm() < 1e-14);
    }
}
