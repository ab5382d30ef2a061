//! CSV plot data. Every file starts with one header line naming each column
//! and its unit as `name[unit]`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use singlab_core::flow::SuspensionPoint;
use singlab_core::irg::IrgTraceRow;
use singlab_core::lp::preimage_tree;
use singlab_core::lyapunov::LyapunovRun;
use singlab_core::map::BaseMap;
use singlab_core::solenoid::SolenoidPoint;
use singlab_core::torus::{Ball, TorusPoint};
use singlab_core::LabError;

use crate::config::Lab;
use crate::pipeline::Stage;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("malformed artifact {path}: {source}")]
    Artifact { path: String, source: serde_json::Error },
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<PathBuf, PlotError>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(path.to_path_buf())
}

fn read_stage(out: &Path, name: &str) -> Result<Stage, PlotError> {
    let path = out.join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|_| LabError::MissingArtifact(format!("{} (run `verify {name}` first)", path.display())))?;
    serde_json::from_str(&text).map_err(|source| PlotError::Artifact { path: path.display().to_string(), source })
}

fn field<T: for<'de> Deserialize<'de>>(stage: &Stage, key: &str, path: &str) -> Result<T, PlotError> {
    let v = stage.data.get(key).cloned().ok_or_else(|| LabError::MissingArtifact(format!("{path}: field {key}")))?;
    serde_json::from_value(v).map_err(|source| PlotError::Artifact { path: path.into(), source })
}

#[derive(Deserialize)]
struct DiskTrace {
    disk: usize,
    trace: Vec<IrgTraceRow>,
}

/// Writes every plot file into `out`. Λ₁, IRG and Lyapunov data come from
/// the `irg` and `solenoid` stage artifacts already in `out`.
pub fn emit_plots(lab: &Lab, out: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let irg = read_stage(out, "irg")?;
    let solenoid = read_stage(out, "solenoid")?;
    let p = &lab.certification().plots;
    let mut files = Vec::new();

    let cloud = lab.section.attractor_sample(lab.certification().solenoid.burn_in, p.attractor_points, lab.cfg.seed("plot-attractor"))?;
    files.push(write_csv(
        &out.join("attractor.csv"),
        &["x1[torus]", "x2[torus]", "y1[fiber]", "y2[fiber]"],
        cloud.iter().map(|z| vec![z.base.x1, z.base.x2, z.fiber.y1, z.fiber.y2]),
    )?);

    let n = p.heatmap_resolution;
    let mut heat = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = TorusPoint::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            if let Ok((_, jac)) = lab.fstar.eval_lift(x.vec()) {
                heat.push(vec![x.x1, x.x2, jac.determinant().abs()]);
            }
        }
    }
    files.push(write_csv(&out.join("det_heatmap.csv"), &["x1[torus]", "x2[torus]", "abs_det[1]"], heat)?);

    let mut rng = ChaCha8Rng::seed_from_u64(lab.cfg.seed("plot-preimages"));
    let root = TorusPoint::new(rng.gen(), rng.gen());
    let tree = preimage_tree(&lab.fstar, root, p.preimage_depth)?;
    files.push(write_csv(&out.join("preimage_cloud.csv"), &["x1[torus]", "x2[torus]"], tree.iter().map(|x| vec![x.x1, x.x2]))?);

    let core: Vec<TorusPoint> = field(&irg, "core", "irg.json")?;
    let r0: f64 = field(&irg, "r0", "irg.json")?;
    let u0: Ball = field(&irg, "u0", "irg.json")?;
    files.push(write_csv(
        &out.join("core_cloud.csv"),
        &["x1[torus]", "x2[torus]", "clearance[torus]"],
        core.iter().map(|x| vec![x.x1, x.x2, u0.clearance(x)]),
    )?);
    files.push(write_csv(
        &out.join("r0_annulus.csv"),
        &["center_x1[torus]", "center_x2[torus]", "inner_radius[torus]", "outer_radius[torus]"],
        [vec![u0.center.x1, u0.center.x2, u0.radius, u0.radius + r0]],
    )?);

    let traces: Vec<DiskTrace> = field(&irg, "irg", "irg.json")?;
    files.push(write_csv(
        &out.join("irg_traces.csv"),
        &["disk[index]", "iterate[iterate]", "inscribed_radius[torus]"],
        traces.iter().flat_map(|d| d.trace.iter().map(move |r| vec![d.disk as f64, r.iterate as f64, r.inscribed_radius])),
    )?);

    let runs: Vec<LyapunovRun> = field(&solenoid, "lyapunov", "solenoid.json")?;
    files.push(write_csv(
        &out.join("lyapunov_traces.csv"),
        &["run[index]", "step[iterate]", "exponent1[1/iterate]", "exponent2[1/iterate]", "exponent3[1/iterate]", "exponent4[1/iterate]"],
        runs.iter().enumerate().flat_map(|(k, r)| {
            r.trace.iter().map(move |(step, e)| vec![k as f64, *step as f64, e[0], e[1], e[2], e[3]])
        }),
    )?);
    Ok(files)
}

/// Section orbit of `start`, one row per iterate.
pub fn write_orbit(lab: &Lab, start: SolenoidPoint, steps: usize, out: &Path) -> Result<PathBuf, PlotError> {
    let orbit = lab.section.orbit(start, steps)?;
    write_csv(
        &out.join("orbit.csv"),
        &["step[iterate]", "x1[torus]", "x2[torus]", "y1[fiber]", "y2[fiber]"],
        orbit.iter().enumerate().map(|(k, z)| vec![k as f64, z.base.x1, z.base.x2, z.fiber.y1, z.fiber.y2]),
    )
}

/// Flow trajectory of `start`, sampled every `every` time units.
pub fn write_trajectory(lab: &Lab, start: SolenoidPoint, time: f64, every: f64, out: &Path) -> Result<PathBuf, PlotError> {
    let traj = lab.flow.trajectory(SuspensionPoint::on_section(start), time, every)?;
    write_csv(
        &out.join("trajectory.csv"),
        &["time[time]", "x1[torus]", "x2[torus]", "y1[fiber]", "y2[fiber]", "t[roof]"],
        traj.iter().map(|(s, p)| vec![*s, p.base.base.x1, p.base.base.x2, p.base.fiber.y1, p.base.fiber.y2, p.t]),
    )
}
