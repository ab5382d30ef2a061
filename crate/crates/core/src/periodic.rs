//! Periodic points of base maps by seeded root refinement on the lift.

use rayon::prelude::*;

use crate::map::{iterate_lift, newton_solve, BaseMap};
use crate::torus::{wrap_centered, TorusPoint, M2, V2};

#[derive(Clone, Debug)]
pub struct PeriodicPoint {
    pub point: TorusPoint,
    /// Jacobian of the `period`-th iterate at `point`.
    pub jacobian: M2,
    pub minimal_period: usize,
}

/// Seeds: exact periodic points of the linear part, a uniform `grid × grid`
/// lattice, and log-polar rings around the map's refinement spots.
fn seeds<B: BaseMap + ?Sized>(map: &B, period: usize, grid: usize) -> Vec<V2> {
    let mut s = map.linear().periodic_seeds(period);
    for i in 0..grid {
        for j in 0..grid {
            s.push(V2::new((i as f64 + 0.5) / grid as f64, (j as f64 + 0.5) / grid as f64));
        }
    }
    for (c, r) in map.refinement_spots() {
        for k in 0..24 {
            let rr = r * 10f64.powf(-4.0 + 4.0 * k as f64 / 23.0);
            for j in 0..32 {
                let th = std::f64::consts::TAU * (j as f64 + 0.25) / 32.0;
                s.push(c.vec() + V2::new(rr * th.cos(), rr * th.sin()));
            }
        }
    }
    s
}

/// All points with `f^period(x) = x` reachable from the seeds, deduplicated
/// and sorted lexicographically. Residuals are checked on the torus to 1e-10.
pub fn periodic_points<B: BaseMap + ?Sized>(map: &B, period: usize, grid: usize) -> Vec<PeriodicPoint> {
    let g = |x: V2| {
        let (y, j) = iterate_lift(map, x, period)?;
        Ok((y - x, j - M2::identity()))
    };
    let found: Vec<Option<V2>> = seeds(map, period, grid)
        .into_par_iter()
        .map(|s| {
            let (y, _) = iterate_lift(map, s, period).ok()?;
            let k = (y - s).map(f64::round);
            newton_solve(g, k, s, 60)
        })
        .collect();
    let mut pts: Vec<TorusPoint> = found.into_iter().flatten().map(TorusPoint::from_lift).collect();
    pts.sort_by(|a, b| a.lex_cmp(b));
    let mut uniq: Vec<TorusPoint> = Vec::new();
    for p in pts {
        if uniq.iter().all(|q| q.dist(&p) > 1e-8) {
            uniq.push(p);
        }
    }
    uniq.into_iter()
        .filter_map(|p| {
            let (y, jac) = iterate_lift(map, p.vec(), period).ok()?;
            if wrap_centered(y - p.vec()).norm() > 1e-10 {
                return None;
            }
            let minimal_period = (1..=period)
                .filter(|d| period % d == 0)
                .find(|&d| {
                    iterate_lift(map, p.vec(), d)
                        .map(|(z, _)| wrap_centered(z - p.vec()).norm() < 1e-9)
                        .unwrap_or(false)
                })
                .unwrap_or(period);
            Some(PeriodicPoint { point: p, jacobian: jac, minimal_period })
        })
        .collect()
}
