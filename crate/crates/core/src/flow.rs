//! The suspension of the skew product with a hyperbolic singularity
//! inserted by a plug field, its integrator, and the checks tying it back to
//! the section model.
//!
//! State coordinates are `(x1, x2, y1, y2, t)`. Outside the plug the field
//! is `∂/∂t` and trajectories are advanced in closed form; inside it is
//! `b·L + (1 − b)·∂/∂t` with `L` linear about `σ = (q, 0, ½)` and `b` a
//! C^∞ cutoff, integrated by fixed-step RK4.

use nalgebra::{DMatrix, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::error::{LabError, Result};
use crate::map::BaseMap;
use crate::punctured::linear_fit_slope;
use crate::solenoid::{FiberPoint, SkewProductModel, SolenoidPoint};
use crate::torus::{wrap_centered, TorusPoint, V2};

pub type V5 = SVector<f64, 5>;
pub type M5 = SMatrix<f64, 5, 5>;

/// Distance to `σ` at which integration gives up.
pub const STALL_RADIUS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuspensionPoint {
    pub base: SolenoidPoint,
    pub t: f64,
}

impl SuspensionPoint {
    pub fn new(base: SolenoidPoint, t: f64) -> Self {
        Self { base, t }
    }

    pub fn on_section(base: SolenoidPoint) -> Self {
        Self { base, t: 0.0 }
    }

    pub fn state(&self) -> V5 {
        let b = &self.base;
        V5::new(b.base.x1, b.base.x2, b.fiber.y1, b.fiber.y2, self.t)
    }

    fn from_state(s: &V5) -> Self {
        Self {
            base: SolenoidPoint::new(TorusPoint::new(s[0], s[1]), FiberPoint::new(s[2], s[3])),
            t: s[4],
        }
    }
}

/// Eigenvalues `α₁, α₂, −β₁, −β₂, −β₃` of the field at `σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularitySpectrum {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl SingularitySpectrum {
    pub fn eigenvalues(&self) -> [f64; 5] {
        [self.alpha1, self.alpha2, -self.beta1, -self.beta2, -self.beta3]
    }

    /// Names of the violated spectral conditions, empty when all hold.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.eigenvalues().iter().all(|e| *e != 0.0 && e.is_finite()) {
            v.push("HyperbolicSingularity");
        }
        if !(self.beta1 >= self.beta2 && self.beta2 > self.beta3) {
            v.push("StrongStableGap");
        }
        if self.alpha1 + self.alpha2 <= self.beta3 {
            v.push("VolumeExpansionAtSigma");
        }
        v
    }

    /// Exponent of the blow-up this singularity induces on the section.
    pub fn kappa(&self) -> f64 {
        self.beta3 / self.alpha1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlugGeometry {
    /// Base radius inside which the cutoff is 1.
    pub base_inner: f64,
    /// Base radius outside which the field is `∂/∂t`.
    pub base_outer: f64,
    pub t_low: f64,
    pub t_high: f64,
    /// Width of the cutoff ramps below `t_low` and above `t_high`.
    pub t_ramp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowIntegrator {
    pub dt: f64,
    /// Step used inside the plug.
    pub dt_plug: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularFlowModel<B> {
    pub skew: SkewProductModel<B>,
    /// Base point of the singularity.
    pub center: TorusPoint,
    pub plug: PlugGeometry,
    pub spectrum: SingularitySpectrum,
    pub integrator: FlowIntegrator,
}

/// C^∞ transition from 0 at `s ≤ 0` to 1 at `s ≥ 1`, with its derivative.
pub fn smooth_transition(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let psi = |x: f64| (-1.0 / x).exp();
    let (a, b) = (psi(s), psi(1.0 - s));
    let (da, db) = (a / (s * s), -b / ((1.0 - s) * (1.0 - s)));
    let den = a + b;
    (a / den, (da * den - a * (da + db)) / (den * den))
}

/// Outcome of an integration run.
#[derive(Clone, Copy, Debug)]
pub struct Run {
    pub end: SuspensionPoint,
    pub elapsed: f64,
    /// Time spent where the cutoff is positive.
    pub dwell: f64,
    pub roofs: usize,
    /// Base distance from the singularity at the last roof crossing.
    pub roof_offset: f64,
}

#[derive(Clone, Copy, Debug)]
enum Stop {
    Time(f64),
    Roofs(usize),
}

impl<B: BaseMap> SingularFlowModel<B> {
    pub fn new(
        skew: SkewProductModel<B>,
        center: TorusPoint,
        plug: PlugGeometry,
        spectrum: SingularitySpectrum,
        integrator: FlowIntegrator,
    ) -> Result<Self> {
        let bad = |m: &str| Err(LabError::InvalidModel(m.into()));
        let g = &plug;
        if !(0.0 < g.base_inner && g.base_inner < g.base_outer) {
            return bad("plug radii must satisfy 0 < inner < outer");
        }
        if !(g.t_ramp > 0.0 && g.t_low - g.t_ramp > 0.0 && g.t_high + g.t_ramp < 1.0 && g.t_low < 0.5 && 0.5 < g.t_high) {
            return bad("plug must sit strictly inside (0,1) in t and contain t = 1/2");
        }
        let regions = skew.base.regions();
        if center.dist(&regions.u0.center) + g.base_outer >= regions.u0.radius {
            return bad("plug base disk must lie inside U_0");
        }
        if skew.base.refinement_spots().iter().any(|(c, _)| c.dist(&center) <= g.base_outer && c.dist(&center) > 0.0) {
            return bad("plug base disk must not contain the saddle");
        }
        let s = &spectrum;
        if ![s.alpha1, s.alpha2, s.beta1, s.beta2, s.beta3].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return bad("spectrum rates must be positive");
        }
        if !(integrator.dt > 0.0 && integrator.dt_plug > 0.0 && integrator.dt_plug <= integrator.dt) {
            return bad("integrator steps must satisfy 0 < dt_plug <= dt");
        }
        Ok(Self { skew, center, plug, spectrum, integrator })
    }

    pub fn sigma(&self) -> SuspensionPoint {
        SuspensionPoint::new(SolenoidPoint::new(self.center, FiberPoint::new(0.0, 0.0)), 0.5)
    }

    /// Absolute `(x, y, t)` to coordinates `(u, y, t)` with `x = q + u`,
    /// which keep full precision near the singularity.
    fn to_local(&self, s: &V5) -> V5 {
        let u = wrap_centered(V2::new(s[0], s[1]) - self.center.vec());
        V5::new(u.x, u.y, s[2], s[3], s[4])
    }

    fn local_point(&self, w: &V5) -> SuspensionPoint {
        let x = TorusPoint::from_lift(self.center.vec() + V2::new(w[0], w[1]));
        SuspensionPoint::new(SolenoidPoint::new(x, FiberPoint::new(w[2], w[3])), w[4])
    }

    /// Cutoff `b = b_r(|u|)·b_t(t)` with its gradient in `u` and `t`.
    fn cutoff(&self, u: V2, t: f64) -> (f64, V2, f64) {
        let g = &self.plug;
        let r = u.norm();
        let (br, dbr) = if r <= g.base_inner {
            (1.0, 0.0)
        } else {
            let w = g.base_outer - g.base_inner;
            let (v, d) = smooth_transition((g.base_outer - r) / w);
            (v, -d / w)
        };
        let (bt, dbt) = if t < g.t_low {
            let (v, d) = smooth_transition((t - (g.t_low - g.t_ramp)) / g.t_ramp);
            (v, d / g.t_ramp)
        } else if t > g.t_high {
            let (v, d) = smooth_transition((g.t_high + g.t_ramp - t) / g.t_ramp);
            (v, -d / g.t_ramp)
        } else {
            (1.0, 0.0)
        };
        let gu = if r > 0.0 { u * (dbr * bt / r) } else { V2::zeros() };
        (br * bt, gu, br * dbt)
    }

    fn linear_field(&self, w: &V5) -> V5 {
        let sp = &self.spectrum;
        V5::new(sp.alpha1 * w[0], sp.alpha2 * w[1], -sp.beta1 * w[2], -sp.beta2 * w[3], -sp.beta3 * (w[4] - 0.5))
    }

    fn field_local(&self, w: &V5) -> V5 {
        let (b, _, _) = self.cutoff(V2::new(w[0], w[1]), w[4]);
        let mut x = self.linear_field(w) * b;
        x[4] += 1.0 - b;
        x
    }

    /// `b·DL + (L − e_t) ∇bᵀ`.
    fn jacobian_local(&self, w: &V5) -> M5 {
        let (b, gu, gt) = self.cutoff(V2::new(w[0], w[1]), w[4]);
        let sp = &self.spectrum;
        let dl = M5::from_diagonal(&V5::new(sp.alpha1, sp.alpha2, -sp.beta1, -sp.beta2, -sp.beta3));
        let mut l = self.linear_field(w);
        l[4] -= 1.0;
        let grad = V5::new(gu.x, gu.y, 0.0, 0.0, gt);
        dl * b + l * grad.transpose()
    }

    /// The model vector field at an absolute state.
    pub fn field(&self, s: &V5) -> V5 {
        self.field_local(&self.to_local(s))
    }

    /// Analytic Jacobian of [`Self::field`].
    pub fn field_jacobian(&self, s: &V5) -> M5 {
        self.jacobian_local(&self.to_local(s))
    }

    fn in_support(&self, w: &V5) -> bool {
        let g = &self.plug;
        w[0].hypot(w[1]) < g.base_outer && w[4] >= g.t_low - g.t_ramp && w[4] < g.t_high + g.t_ramp
    }

    fn sigma_distance(w: &V5) -> f64 {
        (w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3] + (w[4] - 0.5).powi(2)).sqrt()
    }

    fn rk4(&self, s: &V5, h: f64, tangent: Option<&mut M5>) -> V5 {
        let k1 = self.field_local(s);
        let s2 = s + k1 * (h / 2.0);
        let k2 = self.field_local(&s2);
        let s3 = s + k2 * (h / 2.0);
        let k3 = self.field_local(&s3);
        let s4 = s + k3 * h;
        let k4 = self.field_local(&s4);
        if let Some(t) = tangent {
            let m1 = self.jacobian_local(s) * *t;
            let m2 = self.jacobian_local(&s2) * (*t + m1 * (h / 2.0));
            let m3 = self.jacobian_local(&s3) * (*t + m2 * (h / 2.0));
            let m4 = self.jacobian_local(&s4) * (*t + m3 * h);
            *t += (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
        }
        s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn run(&self, p: SuspensionPoint, stop: Stop, tangent: Option<&mut M5>) -> Result<Run> {
        if !(0.0..1.0).contains(&p.t) {
            return Err(LabError::Precondition(format!("roof coordinate must lie in [0,1), got {}", p.t)));
        }
        self.run_local(self.to_local(&p.state()), stop, tangent)
    }

    fn run_local(&self, mut w: V5, stop: Stop, mut tangent: Option<&mut M5>) -> Result<Run> {
        let (mut elapsed, mut dwell, mut roofs) = (0.0, 0.0, 0usize);
        let mut roof_offset = f64::NAN;
        let g = self.plug;
        loop {
            let remaining = match stop {
                Stop::Time(total) => total - elapsed,
                Stop::Roofs(_) => f64::INFINITY,
            };
            if remaining <= 0.0 {
                break;
            }
            if self.in_support(&w) {
                let h = self.integrator.dt_plug.min(remaining);
                w = self.rk4(&w, h, tangent.as_deref_mut());
                dwell += h;
                match stop {
                    // land exactly on the requested time, rounding can stall otherwise
                    Stop::Time(total) if h == remaining => elapsed = total,
                    _ => elapsed += h,
                }
                let d = Self::sigma_distance(&w);
                if d < STALL_RADIUS {
                    return Err(LabError::NearSingularityStall { distance: d });
                }
                continue;
            }
            let entry = g.t_low - g.t_ramp;
            let next = if w[0].hypot(w[1]) < g.base_outer && w[4] < entry { entry } else { 1.0 };
            let h = next - w[4];
            if h >= remaining && next < 1.0 || h > remaining {
                w[4] += remaining;
                elapsed += remaining;
                break;
            }
            elapsed += h;
            if next < 1.0 {
                w[4] = next;
                continue;
            }
            roof_offset = w[0].hypot(w[1]);
            let z = self.local_point(&w).base;
            let (fz, d4) = self.skew.eval_with_derivative(&z)?;
            w = self.to_local(&SuspensionPoint::on_section(fz).state());
            if let Some(t) = tangent.as_deref_mut() {
                let mut d = M5::identity();
                d.fixed_view_mut::<4, 4>(0, 0).copy_from(&d4);
                *t = d * *t;
            }
            roofs += 1;
            if let Stop::Roofs(n) = stop {
                if roofs >= n {
                    break;
                }
            }
        }
        Ok(Run { end: self.local_point(&w), elapsed, dwell, roofs, roof_offset })
    }

    /// First return of the orbit starting on the section at base offset `u`
    /// from the singularity and fiber point `y`.
    pub fn return_from_offset(&self, u: V2, y: FiberPoint) -> Result<Run> {
        self.run_local(V5::new(u.x, u.y, y.y1, y.y2, 0.0), Stop::Roofs(1), None)
    }

    /// Advances by time `dt`, applying the roof identification on the way.
    pub fn flow_step(&self, p: SuspensionPoint, dt: f64) -> Result<SuspensionPoint> {
        if !(dt > 0.0) {
            return Err(LabError::Precondition(format!("flow step must be positive, got {dt}")));
        }
        Ok(self.run(p, Stop::Time(dt), None)?.end)
    }

    /// Flow from `(z, 0)` until the next return to the section.
    pub fn flow_return(&self, z: SolenoidPoint) -> Result<Run> {
        self.run(SuspensionPoint::on_section(z), Stop::Roofs(1), None)
    }

    /// Flow for time `time` together with the derivative of the time-`time` map.
    pub fn flow_with_tangent(&self, p: SuspensionPoint, time: f64) -> Result<(Run, M5)> {
        let mut t = M5::identity();
        let run = self.run(p, Stop::Time(time), Some(&mut t))?;
        Ok((run, t))
    }

    /// Derivative of the flow from the section point `z` until its `roofs`-th
    /// return to the section.
    pub fn return_with_tangent(&self, z: SolenoidPoint, roofs: usize) -> Result<(Run, M5)> {
        let mut t = M5::identity();
        let run = self.run(SuspensionPoint::on_section(z), Stop::Roofs(roofs), Some(&mut t))?;
        Ok((run, t))
    }

    /// Trajectory sampled every `every` time units, for plotting.
    pub fn trajectory(&self, p: SuspensionPoint, time: f64, every: f64) -> Result<Vec<(f64, SuspensionPoint)>> {
        let mut out = vec![(0.0, p)];
        let mut q = p;
        let n = (time / every).round() as usize;
        for k in 1..=n {
            q = self.flow_step(q, every)?;
            out.push((k as f64 * every, q));
        }
        Ok(out)
    }
}

/// Zeros of the field found by Newton iteration from a grid covering the
/// plug, deduplicated, with their number of contracting directions.
pub fn zero_set<B: BaseMap>(m: &SingularFlowModel<B>, grid: usize) -> Vec<(SuspensionPoint, usize)> {
    let g = m.plug;
    let mut seeds = Vec::new();
    let n = grid.max(2);
    for i in 0..n {
        for j in 0..n {
            let u = V2::new(-1.0 + 2.0 * i as f64 / (n - 1) as f64, -1.0 + 2.0 * j as f64 / (n - 1) as f64) * g.base_outer;
            if u.norm() >= g.base_outer {
                continue;
            }
            for a in 0..5 {
                let y = V2::new(-0.8 + 0.4 * a as f64, 0.3 - 0.15 * a as f64);
                for k in 0..4 * n {
                    let t = g.t_low - g.t_ramp + (g.t_high - g.t_low + 2.0 * g.t_ramp) * (k as f64 + 0.5) / (4 * n) as f64;
                    let x = m.center.vec() + u;
                    seeds.push(V5::new(x.x, x.y, y.x, y.y, t));
                }
            }
        }
    }
    let found: Vec<Option<V5>> = seeds
        .into_par_iter()
        .map(|mut s| {
            for _ in 0..60 {
                let f = m.field(&s);
                if f.norm() < 1e-13 {
                    return Some(s);
                }
                let step = m.field_jacobian(&s).try_inverse()? * f;
                s -= step;
                if !m.in_support(&m.to_local(&s)) {
                    return None;
                }
            }
            (m.field(&s).norm() < 1e-12).then_some(s)
        })
        .collect();
    let mut zeros: Vec<V5> = Vec::new();
    for z in found.into_iter().flatten() {
        if zeros.iter().all(|w| (w - z).norm() > 1e-7) {
            zeros.push(z);
        }
    }
    zeros.sort_by(|a, b| a[4].total_cmp(&b[4]));
    zeros
        .into_iter()
        .map(|z| {
            let ev = m.field_jacobian(&z).complex_eigenvalues();
            let index = ev.iter().filter(|c| c.re < 0.0).count();
            (SuspensionPoint::from_state(&z), index)
        })
        .collect()
}

/// Eigenvalues of the field at `σ` from the analytic Jacobian and from
/// central differences, checked against the declared spectrum.
pub fn spectrum_check<B: BaseMap>(m: &SingularFlowModel<B>) -> Result<CertificateReport> {
    let s = m.sigma().state();
    let analytic = m.field_jacobian(&s);
    let h = 1e-6;
    let mut fd = M5::zeros();
    for k in 0..5 {
        let mut e = V5::zeros();
        e[k] = h;
        fd.set_column(k, &((m.field(&(s + e)) - m.field(&(s - e))) / (2.0 * h)));
    }
    let sorted = |j: &M5| {
        let mut v: Vec<f64> = j.complex_eigenvalues().iter().map(|c| c.re).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let mut expected: Vec<f64> = m.spectrum.eigenvalues().to_vec();
    expected.sort_by(f64::total_cmp);
    let (ea, ef) = (sorted(&analytic), sorted(&fd));
    let err = expected.iter().zip(ea.iter().zip(&ef)).map(|(x, (a, f))| (x - a).abs().max((x - f).abs())).fold(0.0, f64::max);
    if err > 1e-8 {
        return Err(LabError::SpectrumMismatch { expected, found: ef });
    }
    let sp = m.spectrum;
    let index = ea.iter().filter(|v| **v < 0.0).count();
    let violations = sp.violations();
    let volume = sp.alpha1 + sp.alpha2 - sp.beta3;
    let gap = sp.beta2 - sp.beta3;
    let mut reason = None;
    if !violations.is_empty() {
        reason = Some(format!("{} violated", violations.join(", ")));
    } else if index != 3 {
        reason = Some(format!("index(sigma) = {index}, expected 3"));
    }
    Ok(CertificateReport::new("singularity_spectrum")
        .value("alpha1", sp.alpha1)
        .value("alpha2", sp.alpha2)
        .value("beta1", sp.beta1)
        .value("beta2", sp.beta2)
        .value("beta3", sp.beta3)
        .value("volume_expansion_at_sigma", volume)
        .value("strong_stable_gap", gap)
        .value("index", index as f64)
        .value("eigenvalue_error", err)
        .value("kappa", sp.kappa())
        .source("spectrum (flow configuration)")
        .decide(volume.min(gap), 0.0, reason))
}

/// Settings for the section-versus-flow comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnCheckSettings {
    pub far_samples: usize,
    /// Far samples keep at least this base distance from the puncture.
    pub far_distance: f64,
    pub tol: f64,
    pub near_samples: usize,
    pub near_min: f64,
    pub near_max: f64,
    /// Relative tolerances on the landing exponent and the dwell slope.
    pub landing_tol: f64,
    pub dwell_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ReturnCheckSettings {
    fn default() -> Self {
        Self { far_samples: 200, far_distance: 0.2, tol: 1e-6, near_samples: 20, near_min: 1e-6, near_max: 1e-2, landing_tol: 0.15, dwell_tol: 0.10, seed: 5 }
    }
}

/// Compares the flow's first return with the section map `rm`: exactly away
/// from the singularity, and by the scaling of landing and dwell near it.
pub fn return_consistency<B: BaseMap, R: BaseMap>(
    m: &SingularFlowModel<B>,
    rm: &SkewProductModel<R>,
    s: &ReturnCheckSettings,
) -> Result<CertificateReport> {
    if s.near_samples < 3 || !(s.near_min > 0.0 && s.near_min < s.near_max) {
        return Err(LabError::Precondition("need >= 3 near samples over a positive distance range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut far = Vec::with_capacity(s.far_samples);
    while far.len() < s.far_samples {
        let x = TorusPoint::new(rng.gen(), rng.gen());
        if x.dist(&m.center) <= s.far_distance {
            continue;
        }
        let r = 0.9 * rng.gen::<f64>().sqrt();
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        far.push(SolenoidPoint::new(x, FiberPoint::new(r * th.cos(), r * th.sin())));
    }
    let errs: Vec<Result<(f64, SolenoidPoint)>> = far
        .par_iter()
        .map(|z| {
            let a = m.flow_return(*z)?.end.base;
            let b = rm.eval_f(z)?;
            Ok((a.base.dist(&b.base).max((a.fiber.vec() - b.fiber.vec()).norm()), *z))
        })
        .collect();
    let mut worst = (0.0, far[0]);
    for e in errs {
        let e = e?;
        if e.0 > worst.0 {
            worst = e;
        }
    }
    if worst.0 > s.tol {
        return Err(LabError::Disagreement(format!(
            "flow return differs from the section map by {:.3e} at ({:.6}, {:.6}, {:.6}, {:.6})",
            worst.0, worst.1.base.x1, worst.1.base.x2, worst.1.fiber.y1, worst.1.fiber.y2
        )));
    }
    let near = near_singularity_scaling(m, s)?;
    let kappa = m.spectrum.kappa();
    let slope_err = (near.landing_slope - kappa).abs() / kappa;
    let dwell_target = 1.0 / m.spectrum.alpha1;
    let dwell_err = (near.dwell_slope - dwell_target).abs() / dwell_target;
    Ok(CertificateReport::new("return_consistency")
        .value("far_max_error", worst.0)
        .value("landing_slope", near.landing_slope)
        .value("landing_constant", near.landing_constant)
        .value("kappa", kappa)
        .value("dwell_slope", near.dwell_slope)
        .value("limit_radius", near.limit_radius)
        .source("kappa = beta3/alpha1 (flow spectrum)")
        .decide((s.landing_tol - slope_err).min(s.dwell_tol - dwell_err), 0.0, None))
}

/// Regressions over orbits started at base distance `r` from the puncture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearScaling {
    pub distances: Vec<f64>,
    pub landing: Vec<f64>,
    pub dwell: Vec<f64>,
    /// Slope of log landing distance against log start distance.
    pub landing_slope: f64,
    /// Largest `landing / r^κ`.
    pub landing_constant: f64,
    /// Slope of dwell time against `log(1/r)`.
    pub dwell_slope: f64,
    /// Base distance from the puncture of the limiting exit point.
    pub limit_radius: f64,
}

pub fn near_singularity_scaling<B: BaseMap>(m: &SingularFlowModel<B>, s: &ReturnCheckSettings) -> Result<NearScaling> {
    let theta: f64 = 0.7;
    let dir = V2::new(theta.cos(), theta.sin());
    let fiber = FiberPoint::new(0.1, -0.05);
    let ret = |r: f64| m.return_from_offset(dir * r, fiber);
    // landing point of the limit r → 0, approximated far below the sampled range
    let limit = ret(s.near_min * 1e-8)?;
    let n = s.near_samples;
    let mut distances = Vec::with_capacity(n);
    let mut runs = Vec::with_capacity(n);
    for k in 0..n {
        let lr = s.near_max.ln() + (s.near_min.ln() - s.near_max.ln()) * k as f64 / (n - 1) as f64;
        let r = lr.exp();
        distances.push(r);
        runs.push(ret(r)?);
    }
    let landing: Vec<f64> = runs.iter().map(|run| run.end.base.base.dist(&limit.end.base.base)).collect();
    let dwell: Vec<f64> = runs.iter().map(|run| run.dwell).collect();
    let kappa = m.spectrum.kappa();
    let lp: Vec<(f64, f64)> = distances.iter().zip(&landing).map(|(r, d)| (r.ln(), d.ln())).collect();
    let dp: Vec<(f64, f64)> = distances.iter().zip(&dwell).map(|(r, d)| (-r.ln(), *d)).collect();
    let landing_constant = distances.iter().zip(&landing).map(|(r, d)| d / r.powf(kappa)).fold(0.0, f64::max);
    Ok(NearScaling {
        landing_slope: linear_fit_slope(&lp),
        dwell_slope: linear_fit_slope(&dp),
        landing_constant,
        limit_radius: limit.roof_offset,
        distances,
        landing,
        dwell,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSplittingSample {
    pub at: SuspensionPoint,
    pub es_frame: [[f64; 5]; 2],
    pub ec_frame: [[f64; 5]; 3],
    /// `‖DΦ_T|E^s‖ / m(DΦ_T|E^c)`.
    pub domination_ratio: f64,
    /// Per-time log of 3-volume growth in the centre bundle.
    pub det_exponent: f64,
    /// Per-time log area growth of the most contracted centre 2-plane.
    pub min_sectional_exponent: f64,
    /// Distance of the unit flow direction from the centre plane.
    pub flow_misalignment: f64,
}

/// Transports the stable (fiber) and centre (base plus flow) frames over
/// time `horizon` from each sample.
pub fn flow_splitting_check<B: BaseMap>(m: &SingularFlowModel<B>, samples: &[SuspensionPoint], horizon: f64) -> Result<Vec<FlowSplittingSample>> {
    if !(20.0..=150.0).contains(&horizon) {
        return Err(LabError::Precondition(format!("splitting horizon must lie in [20, 150], got {horizon}")));
    }
    let out: Vec<Result<FlowSplittingSample>> = samples.par_iter().map(|p| flow_splitting_at(m, *p, horizon)).collect();
    out.into_iter().collect()
}

/// Orthonormal frame transported by tangent maps.
struct Frame {
    basis: DMatrix<f64>,
}

impl Frame {
    fn new(columns: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(5, columns.len());
        for (c, &r) in columns.iter().enumerate() {
            basis[(r, c)] = 1.0;
        }
        Self { basis }
    }

    fn push(&mut self, t: &M5) {
        let moved = DMatrix::from_iterator(5, 5, t.iter().copied()) * &self.basis;
        self.basis = moved.qr().q();
    }
}

/// Base and time rows and columns of a tangent map.
const CENTRE: [usize; 3] = [0, 1, 4];

const SPLITTING_CHUNK: f64 = 0.5;

pub fn flow_splitting_at<B: BaseMap>(m: &SingularFlowModel<B>, p: SuspensionPoint, horizon: f64) -> Result<FlowSplittingSample> {
    accumulate_splitting(m, p, horizon, |at, remaining| m.flow_with_tangent(at, SPLITTING_CHUNK.min(remaining)))
}

/// Splitting sample along a periodic orbit of the section map: the one-period
/// tangent is integrated once and iterated, so the orbit cannot drift off.
pub fn periodic_splitting<B: BaseMap>(m: &SingularFlowModel<B>, z: SolenoidPoint, period: usize, horizon: f64) -> Result<FlowSplittingSample> {
    if !(20.0..=150.0).contains(&horizon) {
        return Err(LabError::Precondition(format!("splitting horizon must lie in [20, 150], got {horizon}")));
    }
    let (run, t) = m.return_with_tangent(z, period)?;
    let start = SuspensionPoint::on_section(z);
    accumulate_splitting(m, start, horizon, |_, _| Ok((Run { end: start, ..run }, t)))
}

fn accumulate_splitting<B: BaseMap>(
    m: &SingularFlowModel<B>,
    p: SuspensionPoint,
    horizon: f64,
    mut chunk: impl FnMut(SuspensionPoint, f64) -> Result<(Run, M5)>,
) -> Result<FlowSplittingSample> {
    // The fiber plane is invariant and the base ignores the fiber, so the
    // centre bundle acts like the base-and-time block of the tangent. Reading
    // rates off that block stays correct when domination fails, where a
    // transported 3-plane would drift onto the fiber.
    let mut center = Frame::new(&CENTRE);
    let mut es = SMatrix::<f64, 5, 2>::zeros();
    es[(2, 0)] = 1.0;
    es[(3, 1)] = 1.0;
    let mut log_es = 0.0;
    let mut inv = DMatrix::<f64>::identity(3, 3);
    let mut fwd = DMatrix::<f64>::identity(3, 3);
    let (mut log_fwd, mut log_inv, mut log_volume) = (0.0, 0.0, 0.0);
    let mut at = p;
    let mut elapsed = 0.0;
    while elapsed < horizon {
        let (run, t) = chunk(at, horizon - elapsed)?;
        at = run.end;
        elapsed += run.elapsed;
        center.push(&t);
        let block = t.select_rows(&CENTRE).select_columns(&CENTRE);
        let block = DMatrix::from_iterator(3, 3, block.iter().copied());
        log_volume += block.determinant().abs().ln();
        fwd = &block * fwd;
        let n = fwd.norm();
        fwd /= n;
        log_fwd += n.ln();
        es = t * es;
        let n = es.norm();
        es /= n;
        log_es += n.ln();
        let block_inv = block.try_inverse().ok_or_else(|| LabError::NonpositiveDetExponent {
            exponent: f64::NEG_INFINITY,
            at: format!("({:.6}, {:.6}, t={:.4})", at.base.base.x1, at.base.base.x2, at.t),
        })?;
        inv = inv * block_inv;
        let n = inv.norm();
        inv /= n;
        log_inv += n.ln();
    }
    let horizon = elapsed;
    let det_exponent = log_volume / horizon;
    if !(det_exponent > 0.0) {
        return Err(LabError::NonpositiveDetExponent {
            exponent: det_exponent,
            at: format!("({:.6}, {:.6}, t={:.4})", p.base.base.x1, p.base.base.x2, p.t),
        });
    }
    // the most contracted 2-plane loses the top singular value
    let log_ec_max = log_fwd + fwd.singular_values().max().ln();
    let min_sectional = (log_volume - log_ec_max) / horizon;
    let log_es_norm = log_es + es.singular_values().max().ln();
    let log_ec_min = -(log_inv + inv.singular_values().max().ln());
    let q = &center.basis;
    let xdir = m.field(&at.state()).normalize();
    let misalign = (xdir - q * (q.transpose() * xdir)).norm();
    let mut es_frame = [[0.0; 5]; 2];
    es_frame[0][2] = 1.0;
    es_frame[1][3] = 1.0;
    let mut ec_frame = [[0.0; 5]; 3];
    for (c, row) in ec_frame.iter_mut().enumerate() {
        for (r, v) in row.iter_mut().enumerate() {
            *v = q[(r, c)];
        }
    }
    Ok(FlowSplittingSample {
        at,
        es_frame,
        ec_frame,
        domination_ratio: (log_es_norm - log_ec_min).exp(),
        det_exponent,
        min_sectional_exponent: min_sectional,
        flow_misalignment: misalign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{BlendProfile, EndomorphismModel, LinearPart, RegionGeometry, SaddleDeformation};
    use crate::solenoid::FiberPlacement;
    use crate::torus::Ball;

    pub(crate) fn flow() -> SingularFlowModel<EndomorphismModel> {
        let p = TorusPoint::new(0.5, 0.0);
        let regions = RegionGeometry { u0: Ball::new(p, 0.12), u1: Ball::new(p, 0.18), delta0: 0.2, expansion: 1.5 };
        let d = SaddleDeformation { center: p, r_out: 0.12, mu_u: 6.0, mu_s: 0.5, profile: BlendProfile::LogSmoothstep { inner_ratio: 3e-3, outer_ratio: 0.1 } };
        let endo = EndomorphismModel::new(LinearPart::diagonal(3, 2).unwrap(), Some(d), regions).unwrap();
        let skew = SkewProductModel::new(endo, 0.05, FiberPlacement { c1: 0.3, c2: 0.15 }).unwrap();
        SingularFlowModel::new(
            skew,
            TorusPoint::new(0.5, 0.05),
            PlugGeometry { base_inner: 0.02, base_outer: 0.04, t_low: 0.2, t_high: 0.8, t_ramp: 0.1 },
            SingularitySpectrum { alpha1: 2.0, alpha2: 2.0, beta1: 10.0, beta2: 10.0, beta3: 1.0 },
            FlowIntegrator { dt: 1e-3, dt_plug: 1e-4 },
        )
        .unwrap()
    }

    fn z(x1: f64, x2: f64) -> SolenoidPoint {
        SolenoidPoint::new(TorusPoint::new(x1, x2), FiberPoint::new(0.2, -0.1))
    }

    #[test]
    fn transition_is_smooth_and_monotone() {
        let h = 1e-7;
        for k in 1..100 {
            let s = k as f64 / 100.0;
            let (v, d) = smooth_transition(s);
            let fd = (smooth_transition(s + h).0 - smooth_transition(s - h).0) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 && d >= 0.0 && (0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn unit_field_outside_plug() {
        let m = flow();
        let p = SuspensionPoint::new(z(0.1, 0.3), 0.5);
        let q = m.flow_step(p, 0.25).unwrap();
        assert!(q.base.base.dist(&p.base.base) < 1e-15 && q.base.fiber == p.base.fiber);
        assert_eq!(q.t, 0.75);
    }

    #[test]
    fn roof_traversal_is_the_skew_product() {
        let m = flow();
        let a = m.flow_return(z(0.3, 0.6)).unwrap().end.base;
        let b = m.skew.eval_f(&z(0.3, 0.6)).unwrap();
        assert!(a.base.dist(&b.base) < 1e-9 && (a.fiber.vec() - b.fiber.vec()).norm() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences_on_the_ramps() {
        let m = flow();
        let h = 1e-7;
        for s in [V5::new(0.527, 0.061, 0.3, -0.2, 0.15), V5::new(0.49, 0.02, -0.1, 0.4, 0.86), V5::new(0.51, 0.055, 0.0, 0.1, 0.5)] {
            let j = m.field_jacobian(&s);
            for k in 0..5 {
                let mut e = V5::zeros();
                e[k] = h;
                let fd = (m.field(&(s + e)) - m.field(&(s - e))) / (2.0 * h);
                assert!((fd - j.column(k)).norm() < 1e-6, "{k}: {fd} vs {}", j.column(k));
            }
        }
    }

    #[test]
    fn point_on_gamma_stalls() {
        let m = flow();
        let r = m.flow_return(SolenoidPoint::new(m.center, FiberPoint::new(0.3, 0.1)));
        assert!(matches!(r, Err(LabError::NearSingularityStall { .. })));
    }

    #[test]
    fn spectrum_defaults_pass_and_probe_fails() {
        let m = flow();
        let rep = spectrum_check(&m).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.values["index"], 3.0);
        let mut bad = m.clone();
        bad.spectrum = SingularitySpectrum { alpha1: 0.3, alpha2: 0.3, beta1: 10.0, beta2: 10.0, beta3: 1.0 };
        let rep = spectrum_check(&bad).unwrap();
        assert!(!rep.pass && rep.reason.unwrap().contains("VolumeExpansionAtSigma"));
    }
}
