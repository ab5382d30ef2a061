//! Points, balls and small linear-algebra helpers on the flat 2-torus R²/Z².

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub type V2 = Vector2<f64>;
pub type M2 = Matrix2<f64>;

/// Reduces a real number to [0, 1).
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `v` mod Z² with components in [-1/2, 1/2].
#[inline]
pub fn wrap_centered(v: V2) -> V2 {
    V2::new(v.x - v.x.round(), v.y - v.y.round())
}

/// A point of T = R²/Z², always stored reduced mod 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusPoint {
    pub x1: f64,
    pub x2: f64,
}

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1: wrap_unit(x1), x2: wrap_unit(x2) }
    }

    pub fn from_lift(v: V2) -> Self {
        Self::new(v.x, v.y)
    }

    #[inline]
    pub fn vec(&self) -> V2 {
        V2::new(self.x1, self.x2)
    }

    /// Shortest displacement `other - self` on the torus.
    #[inline]
    pub fn displacement_to(&self, other: &TorusPoint) -> V2 {
        wrap_centered(other.vec() - self.vec())
    }

    /// Wrap-around (flat) distance.
    #[inline]
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        self.displacement_to(other).norm()
    }

    /// Distance from a lifted plane point to this torus point.
    #[inline]
    pub fn dist_lift(&self, x: V2) -> f64 {
        wrap_centered(x - self.vec()).norm()
    }

    /// Lexicographic order used to sort preimage lists.
    pub fn lex_cmp(&self, other: &TorusPoint) -> std::cmp::Ordering {
        self.x1.total_cmp(&other.x1).then(self.x2.total_cmp(&other.x2))
    }
}

/// Open metric ball on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: TorusPoint,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: TorusPoint, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    #[inline]
    pub fn contains(&self, p: &TorusPoint) -> bool {
        self.center.dist(p) < self.radius
    }

    #[inline]
    pub fn contains_lift(&self, x: V2) -> bool {
        self.center.dist_lift(x) < self.radius
    }

    /// Signed clearance of `p` outside the ball (negative inside).
    #[inline]
    pub fn clearance(&self, p: &TorusPoint) -> f64 {
        self.center.dist(p) - self.radius
    }

    /// Distance from the segment `a -> b` (lifted, shorter than 1/2) to the
    /// ball's center, minimised over lattice copies of the center.
    pub fn segment_center_distance(&self, a: V2, b: V2) -> f64 {
        let c0 = self.center.vec();
        let base = c0 + (a - c0).map(f64::round);
        let ab = b - a;
        let len2 = ab.norm_squared().max(1e-300);
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let c = base + V2::new(dx as f64, dy as f64);
                let t = ((c - a).dot(&ab) / len2).clamp(0.0, 1.0);
                best = best.min((a + ab * t - c).norm());
            }
        }
        best
    }
}

/// Smallest singular value (mininorm) of a 2×2 matrix.
pub fn sigma_min(m: &M2) -> f64 {
    singular_values(m).1
}

/// Largest singular value (operator norm) of a 2×2 matrix.
pub fn sigma_max(m: &M2) -> f64 {
    singular_values(m).0
}

/// Closed-form singular values `(s_max, s_min)` of a 2×2 matrix.
pub fn singular_values(m: &M2) -> (f64, f64) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((s1 + disc) / 2.0).sqrt();
    let smin = if smax > 0.0 { det / smax } else { 0.0 };
    (smax, smin)
}

/// A complex multiplier, serialised as `{re, im}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
}

impl Multiplier {
    pub fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Eigenvalues of a real 2×2 matrix, sorted by decreasing modulus.
pub fn eigenvalues2(m: &M2) -> [Multiplier; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    let mut ev = if disc >= 0.0 {
        let s = disc.sqrt();
        // stable root pairing
        let big = tr / 2.0 + s.copysign(tr);
        let small = if big != 0.0 { det / big } else { tr / 2.0 - s };
        [Multiplier::real(big), Multiplier::real(small)]
    } else {
        let s = (-disc).sqrt();
        [Multiplier { re: tr / 2.0, im: s }, Multiplier { re: tr / 2.0, im: -s }]
    };
    if ev[0].modulus() < ev[1].modulus() {
        ev.swap(0, 1);
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_handles_negative_and_boundary() {
        assert_eq!(wrap_unit(-0.25), 0.75);
        assert_eq!(wrap_unit(3.0), 0.0);
        assert!(wrap_unit(-1e-18) < 1.0);
    }

    #[test]
    fn wrap_around_distance() {
        let a = TorusPoint::new(0.95, 0.02);
        let b = TorusPoint::new(0.05, 0.98);
        assert!((a.dist(&b) - (0.1f64.hypot(0.04))).abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = M2::new(3.0, 0.0, 0.0, 2.0);
        let (a, b) = singular_values(&m);
        assert!((a - 3.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_rotation_are_complex() {
        let m = M2::new(0.0, -2.0, 2.0, 0.0);
        let ev = eigenvalues2(&m);
        assert!((ev[0].modulus() - 2.0).abs() < 1e-14);
        assert!(ev[0].im.abs() > 1.0);
    }

    #[test]
    fn segment_distance_wraps() {
        let ball = Ball::new(TorusPoint::new(0.0, 0.0), 0.1);
        let d = ball.segment_center_distance(V2::new(0.9, 0.5), V2::new(1.1, 0.5));
        assert!((d - 0.5).abs() < 1e-12);
    }
}
