//! Trigonometric C¹-small perturbations `g = f* + P` of a base map, with
//! `P` vanishing to second order at the puncture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::endomorphism::{LinearPart, RegionGeometry};
use crate::error::{LabError, Result};
use crate::map::{check_tol, newton_solve, sort_dedup, BaseMap};
use crate::torus::{wrap_centered, TorusPoint, M2, V2};

const TAU: f64 = std::f64::consts::TAU;

/// Largest admissible C¹ size.
pub const MAX_C1_SIZE: f64 = 1e-2;

/// One term `a (1 − cos 2π k·(x − anchor))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: [i64; 2],
    pub a: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub seed: u64,
    pub degree: usize,
    pub c1_size: f64,
    pub anchor: TorusPoint,
    pub coefficients: Vec<FourierTerm>,
}

impl PerturbationSpec {
    /// Draws amplitudes for every frequency `k` with `max |k_i| ≤ degree` in
    /// a half-plane, then rescales them so that [`Self::c1_bound`] equals
    /// `c1_size`. A zero size gives the empty perturbation.
    pub fn generate(seed: u64, degree: usize, c1_size: f64, anchor: TorusPoint) -> Result<Self> {
        if !(0.0..=MAX_C1_SIZE).contains(&c1_size) {
            return Err(LabError::Precondition(format!("c1_size must lie in [0, {MAX_C1_SIZE}], got {c1_size}")));
        }
        if degree == 0 {
            return Err(LabError::Precondition("perturbation degree must be >= 1".into()));
        }
        let mut spec = Self { seed, degree, c1_size, anchor, coefficients: Vec::new() };
        if c1_size == 0.0 {
            return Ok(spec);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = degree as i64;
        for k1 in 0..=d {
            for k2 in -d..=d {
                if k1 == 0 && k2 <= 0 {
                    continue;
                }
                let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                spec.coefficients.push(FourierTerm { k: [k1, k2], a });
            }
        }
        let scale = c1_size / spec.c1_bound();
        for t in &mut spec.coefficients {
            t.a = [t.a[0] * scale, t.a[1] * scale];
        }
        Ok(spec)
    }

    /// Analytic bound `max(sup|P|, sup‖DP‖)`, each term contributing
    /// `2|a|` and `2π|k||a|`.
    pub fn c1_bound(&self) -> f64 {
        let mut c0 = 0.0;
        let mut c1 = 0.0;
        for t in &self.coefficients {
            let a = t.a[0].hypot(t.a[1]);
            c0 += 2.0 * a;
            c1 += TAU * (t.k[0] as f64).hypot(t.k[1] as f64) * a;
        }
        f64::max(c0, c1)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `P(x)` and `DP(x)`; periodic, so it adds to any lift.
    pub fn eval(&self, x: V2) -> (V2, M2) {
        let v = x - self.anchor.vec();
        let mut p = V2::zeros();
        let mut dp = M2::zeros();
        for t in &self.coefficients {
            let k = V2::new(t.k[0] as f64, t.k[1] as f64);
            let (s, c) = (TAU * k.dot(&v)).sin_cos();
            let a = V2::new(t.a[0], t.a[1]);
            p += a * (1.0 - c);
            dp += a * (k * (TAU * s)).transpose();
        }
        (p, dp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedMap<B> {
    pub base: B,
    pub perturbation: PerturbationSpec,
}

impl<B: BaseMap> PerturbedMap<B> {
    pub fn new(base: B, perturbation: PerturbationSpec) -> Self {
        Self { base, perturbation }
    }

    fn polish(&self, target: V2, seed: V2) -> Option<V2> {
        newton_solve(|x| self.eval_lift(x), target, seed, 40)
    }
}

impl<B: BaseMap> BaseMap for PerturbedMap<B> {
    fn eval_lift(&self, x: V2) -> Result<(V2, M2)> {
        let (y, j) = self.base.eval_lift(x)?;
        if self.perturbation.is_zero() {
            return Ok((y, j));
        }
        let (p, dp) = self.perturbation.eval(x);
        Ok((y + p, j + dp))
    }

    fn linear(&self) -> &LinearPart {
        self.base.linear()
    }

    fn regions(&self) -> &RegionGeometry {
        self.base.regions()
    }

    fn lift_inverse(&self, target: V2, seed: V2) -> Result<Option<V2>> {
        if self.perturbation.is_zero() {
            return self.base.lift_inverse(target, seed);
        }
        let Some(x0) = self.base.lift_inverse(target, seed)? else { return Ok(None) };
        match self.polish(target, x0) {
            Some(x) => Ok(Some(x)),
            // the hole edge moves by O(|P|); a base preimage right at it may
            // have none for g
            None if self.base.puncture().is_some_and(|q| q.dist_lift(x0) < 2.0 * self.regions().u0.radius) => Ok(None),
            None => Err(LabError::seed_failure(TorusPoint::from_lift(x0))),
        }
    }

    fn preimages(&self, y: TorusPoint, tol: f64) -> Result<Vec<TorusPoint>> {
        if self.perturbation.is_zero() {
            return self.base.preimages(y, tol);
        }
        check_tol(tol)?;
        let mut out = Vec::new();
        for x0 in self.base.preimages(y, tol)? {
            let (gx, _) = self.eval_lift(x0.vec())?;
            let target = gx + wrap_centered(y.vec() - gx);
            if let Some(x) = self.polish(target, x0.vec()) {
                let px = TorusPoint::from_lift(x);
                if self.apply(px)?.dist(&y) >= tol {
                    return Err(LabError::seed_failure(x0));
                }
                out.push(px);
            }
        }
        Ok(sort_dedup(out, 1e-12))
    }

    fn refinement_spots(&self) -> Vec<(TorusPoint, f64)> {
        self.base.refinement_spots()
    }

    fn puncture(&self) -> Option<TorusPoint> {
        self.base.puncture()
    }

    fn puncture_limit(&self, q_lift: V2, theta: f64) -> Option<V2> {
        // P and DP vanish at the anchor
        self.base.puncture_limit(q_lift, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_size_is_empty() {
        let s = PerturbationSpec::generate(3, 2, 0.0, TorusPoint::new(0.5, 0.05)).unwrap();
        assert!(s.is_zero());
        assert_eq!(s.eval(V2::new(0.1, 0.2)).0, V2::zeros());
    }

    #[test]
    fn oversized_rejected() {
        assert!(PerturbationSpec::generate(3, 2, 1.0, TorusPoint::new(0.5, 0.05)).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let s = PerturbationSpec::generate(9, 3, 1e-3, TorusPoint::new(0.5, 0.05)).unwrap();
        let x = V2::new(0.31, 0.77);
        let (_, dp) = s.eval(x);
        let h = 1e-6;
        for k in 0..2 {
            let mut e = V2::zeros();
            e[k] = h;
            let fd = (s.eval(x + e).0 - s.eval(x - e).0) / (2.0 * h);
            assert!((fd - dp.column(k)).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn bound_is_exact_and_dominates(seed in 0u64..1000, degree in 1usize..4, size in 1e-6f64..1e-2, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
            let s = PerturbationSpec::generate(seed, degree, size, TorusPoint::new(0.5, 0.05)).unwrap();
            prop_assert!((s.c1_bound() - size).abs() <= 1e-12);
            let (p, dp) = s.eval(V2::new(x1, x2));
            prop_assert!(p.norm() <= size * (1.0 + 1e-12));
            prop_assert!(dp.norm() <= size * (1.0 + 1e-12));
        }

        #[test]
        fn vanishes_to_second_order_at_anchor(seed in 0u64..1000, r in 1e-6f64..1e-3, th in 0.0f64..6.28) {
            let q = TorusPoint::new(0.5, 0.05);
            let s = PerturbationSpec::generate(seed, 2, 1e-3, q).unwrap();
            let (p, dp) = s.eval(q.vec() + V2::new(r * th.cos(), r * th.sin()));
            // |P| ≤ ½ sup|D²P| r² and |DP| ≤ sup|D²P| r, with sup|D²P| ≤ 2π·degree·size·√2
            let d2 = TAU * 2.0 * 1e-3 * 2f64.sqrt();
            prop_assert!(p.norm() <= 0.5 * d2 * r * r * (1.0 + 1e-9));
            prop_assert!(dp.norm() <= d2 * r * (1.0 + 1e-9));
        }
    }
}
