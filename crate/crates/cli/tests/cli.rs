use std::path::Path;
use std::process::Command;

use serde_json::Value;
use singlab_cli::config::{Lab, LabConfig, DEFAULT_CONFIG};
use singlab_cli::pipeline::{h6, indices, robust};
use singlab_cli::report::{to_json, MasterReport};

fn singlab(args: &[&str], out: &Path) -> (Option<i32>, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_singlab")).args(args).arg("--out").arg(out).output().unwrap();
    (o.status.code(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/master_report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

/// A robustness run shrunk far enough to finish in seconds; its margins are
/// meaningless, only the shape of the report matters.
fn tiny_robustness(cfg: &mut LabConfig) {
    let c = &mut cfg.certification;
    c.ensemble.members = 2;
    let r = &mut c.robustness;
    r.lp.resolution = 256;
    r.lp.probe_resolution = 256;
    r.lp.arcs = 20;
    r.lp.polar_rings = 20;
    r.lp.polar_angles = 36;
    r.core_resolution = 64;
    r.irg_disks = 2;
    r.density_probe = 64;
}

#[test]
fn master_report_matches_published_schema() {
    let mut cfg = LabConfig::default_config();
    tiny_robustness(&mut cfg);
    let lab = Lab::build(&cfg).unwrap();
    let stages = vec![h6(&lab).unwrap(), indices(&lab).unwrap(), robust(&lab).unwrap()];
    let report: Value = serde_json::from_str(&to_json(&MasterReport::assemble(&cfg, &stages))).unwrap();
    let v = schema();
    let errors: Vec<String> = v.iter_errors(&report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
    assert_eq!(report["robustness"]["members"].as_array().unwrap().len(), 2);

    let mut broken = report.clone();
    broken["verdict"]["singular_hyperbolic"] = "maybe".into();
    assert!(!v.is_valid(&broken));
    broken = report;
    broken["certificates"][0].as_object_mut().unwrap().remove("margin");
    assert!(!v.is_valid(&broken));
}

#[test]
fn stage_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(singlab(&["verify", "indices"], &a).0, Some(0));
    assert_eq!(singlab(&["verify", "indices"], &b).0, Some(0));
    assert_eq!(std::fs::read(a.join("indices.json")).unwrap(), std::fs::read(b.join("indices.json")).unwrap());
}

#[test]
fn violated_invariant_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = LabConfig::default_config();
    cfg.endomorphism.regions.u0.radius = 0.6;
    let path = dir.path().join("wide.toml");
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    let (code, err) = singlab(&["verify", "h6", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(code, Some(2));
    assert!(err.contains("diam(U_0)<1"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\n[extra]\nanswer = 42\n", DEFAULT_CONFIG);
    let path = dir.path().join("extra.toml");
    std::fs::write(&path, text).unwrap();
    let (code, err) = singlab(&["verify", "h6", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(code, Some(2));
    assert!(err.contains("extra"), "{err}");
}

#[test]
fn plots_need_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = singlab(&["emit-plots"], dir.path());
    assert_eq!(code, Some(1));
    assert!(err.contains("verify irg"), "{err}");
}
