//! Finite-time Lyapunov exponents of the section map by repeated QR.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::map::BaseMap;
use crate::solenoid::{SkewProductModel, SolenoidPoint};

/// Orbits closer than this to the undefined point are abandoned.
pub const PUNCTURE_EXCLUSION: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRun {
    /// Exponents sorted in decreasing order.
    pub exponents: [f64; 4],
    /// `(step, running exponents)` every `every` steps.
    pub trace: Vec<(usize, [f64; 4])>,
}

pub fn lyapunov_spectrum<B: BaseMap>(m: &SkewProductModel<B>, z0: SolenoidPoint, n: usize) -> Result<[f64; 4]> {
    Ok(lyapunov_run(m, z0, n, n)?.exponents)
}

pub fn lyapunov_run<B: BaseMap>(m: &SkewProductModel<B>, z0: SolenoidPoint, n: usize, every: usize) -> Result<LyapunovRun> {
    if n < 1000 {
        return Err(LabError::Precondition(format!("lyapunov horizon must be >= 1000, got {n}")));
    }
    let every = every.max(1);
    let gamma = m.base.puncture();
    let mut q = Matrix4::<f64>::identity();
    let mut sums = [0.0; 4];
    let mut trace = Vec::new();
    let mut z = z0;
    for step in 0..n {
        if gamma.is_some_and(|g| g.dist(&z.base) < PUNCTURE_EXCLUSION) {
            return Err(LabError::OrbitHitPuncture { step });
        }
        let (next, d) = m.eval_with_derivative(&z)?;
        let qr = (d * q).qr();
        let r = qr.r();
        q = qr.q();
        for (i, s) in sums.iter_mut().enumerate() {
            *s += r[(i, i)].abs().ln();
        }
        z = next;
        if (step + 1) % every == 0 {
            trace.push((step + 1, sorted(sums.map(|s| s / (step + 1) as f64))));
        }
    }
    Ok(LyapunovRun { exponents: sorted(sums.map(|s| s / n as f64)), trace })
}

fn sorted(mut v: [f64; 4]) -> [f64; 4] {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{EndomorphismModel, LinearPart, RegionGeometry};
    use crate::solenoid::{FiberPlacement, FiberPoint};
    use crate::torus::{Ball, TorusPoint};

    #[test]
    fn decoupled_linear_model_is_exact() {
        let p = TorusPoint::new(0.5, 0.0);
        let regions = RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.2, expansion: 1.5 };
        let f = EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), None, regions).unwrap();
        let m = SkewProductModel::new(f, 0.05, FiberPlacement { c1: 0.0, c2: 0.0 }).unwrap();
        let e = lyapunov_spectrum(&m, SolenoidPoint::new(TorusPoint::new(0.1234, 0.5678), FiberPoint::new(0.0, 0.0)), 1000).unwrap();
        let want = [3f64.ln(), 2f64.ln(), 0.05f64.ln(), 0.05f64.ln()];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }
}
