//! Bucketed nearest-neighbour queries for point clouds on the torus, used for
//! covering radii and membership probes.

use rayon::prelude::*;

use crate::torus::TorusPoint;

pub struct PointIndex {
    cells: usize,
    buckets: Vec<Vec<u32>>,
    pts: Vec<TorusPoint>,
}

impl PointIndex {
    pub fn new(pts: Vec<TorusPoint>) -> Self {
        let cells = ((pts.len() as f64).sqrt() / 2.0).ceil().clamp(1.0, 2048.0) as usize;
        let mut buckets = vec![Vec::new(); cells * cells];
        for (i, p) in pts.iter().enumerate() {
            buckets[Self::cell_of(cells, p)].push(i as u32);
        }
        Self { cells, buckets, pts }
    }

    fn cell_of(cells: usize, p: &TorusPoint) -> usize {
        let i = ((p.x1 * cells as f64) as usize).min(cells - 1);
        let j = ((p.x2 * cells as f64) as usize).min(cells - 1);
        i * cells + j
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.pts
    }

    /// Distance to and index of the nearest point, `None` for an empty cloud.
    pub fn nearest(&self, p: &TorusPoint) -> Option<(f64, usize)> {
        if self.pts.is_empty() {
            return None;
        }
        let n = self.cells as i64;
        let c = 1.0 / self.cells as f64;
        let ci = ((p.x1 * n as f64) as i64).min(n - 1);
        let cj = ((p.x2 * n as f64) as i64).min(n - 1);
        let mut best = (f64::INFINITY, 0usize);
        let max_ring = n / 2 + 1;
        for ring in 0..=max_ring {
            for di in -ring..=ring {
                for dj in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let i = (ci + di).rem_euclid(n) as usize;
                    let j = (cj + dj).rem_euclid(n) as usize;
                    for &k in &self.buckets[i * self.cells + j] {
                        let d = p.dist(&self.pts[k as usize]);
                        if d < best.0 || (d == best.0 && (k as usize) < best.1) {
                            best = (d, k as usize);
                        }
                    }
                }
            }
            // every unvisited cell is at least `ring * c` away
            if best.0 <= ring as f64 * c {
                break;
            }
        }
        Some(best)
    }

    /// Largest distance from a probe of the `m × m` grid to the cloud,
    /// with the maximising probe. The true covering radius exceeds this by
    /// at most half a probe-cell diagonal.
    pub fn covering_radius(&self, m: usize) -> (f64, TorusPoint) {
        let rows: Vec<(f64, TorusPoint)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut worst = (0.0, TorusPoint::new(0.0, 0.0));
                for j in 0..m {
                    let p = TorusPoint::new((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                    let d = self.nearest(&p).map_or(f64::INFINITY, |x| x.0);
                    if d > worst.0 {
                        worst = (d, p);
                    }
                }
                worst
            })
            .collect();
        rows.into_iter().fold((0.0, TorusPoint::new(0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_agrees_with_brute_force() {
        let pts: Vec<TorusPoint> = (0..500)
            .map(|k| {
                let t = k as f64;
                TorusPoint::new((t * 0.618_033_988_7).fract(), (t * 0.414_213_562_3).fract())
            })
            .collect();
        let idx = PointIndex::new(pts.clone());
        for k in 0..200 {
            let t = k as f64 + 0.37;
            let p = TorusPoint::new((t * 0.732_050_807_5).fract(), (t * 0.236_067_977_5).fract());
            let brute = pts.iter().map(|q| q.dist(&p)).fold(f64::INFINITY, f64::min);
            assert!((idx.nearest(&p).unwrap().0 - brute).abs() < 1e-15);
        }
    }

    #[test]
    fn covering_radius_of_lattice() {
        let n = 20;
        let pts: Vec<TorusPoint> = (0..n * n)
            .map(|k| TorusPoint::new((k / n) as f64 / n as f64, (k % n) as f64 / n as f64))
            .collect();
        let (r, _) = PointIndex::new(pts).covering_radius(40);
        assert!((r - (0.5f64).sqrt() / n as f64 * 0.5).abs() < 1e-12);
    }
}
