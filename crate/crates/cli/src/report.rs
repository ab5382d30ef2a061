//! The master report written by `verify all`.

use serde::{Deserialize, Serialize};
use singlab_core::certificate::CertificateReport;
use singlab_core::hyperbolicity::RobustnessSummary;

use crate::config::LabConfig;
use crate::pipeline::Stage;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refutation {
    Refuted,
    NotRefuted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub singular_hyperbolic: Outcome,
    pub sectional_hyperbolic: Refutation,
    pub robust_transitivity_evidence: Outcome,
    pub all_certificates_pass: bool,
}

/// Certificates whose joint pass makes up the transitivity evidence.
const TRANSITIVITY_PARTS: [&str; 9] = ["LP1", "LP2", "LP3", "LP4", "LP5", "expanding_core", "IRG", "transitivity", "robustness"];

impl Verdict {
    /// Derived from the certificate entries alone; a missing entry counts as
    /// a failure.
    pub fn derive(certificates: &[CertificateReport]) -> Self {
        let passed = |p: &str| certificates.iter().any(|r| r.property == p && r.pass);
        let outcome = |b: bool| if b { Outcome::Pass } else { Outcome::Fail };
        Self {
            singular_hyperbolic: outcome(passed("singular_hyperbolicity")),
            sectional_hyperbolic: if passed("non_sectional_witness") { Refutation::Refuted } else { Refutation::NotRefuted },
            robust_transitivity_evidence: outcome(TRANSITIVITY_PARTS.iter().all(|p| passed(p))),
            all_certificates_pass: !certificates.is_empty() && certificates.iter().all(|r| r.pass),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterReport {
    pub schema_version: String,
    /// SHA-256 of the canonical JSON form of the configuration.
    pub config_digest: String,
    pub master_seed: u64,
    pub certificates: Vec<CertificateReport>,
    pub robustness: Option<RobustnessSummary>,
    pub verdict: Verdict,
}

impl MasterReport {
    pub fn assemble(cfg: &LabConfig, stages: &[Stage]) -> Self {
        let certificates: Vec<CertificateReport> = stages.iter().flat_map(|s| s.reports.iter().cloned()).collect();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config_digest: cfg.digest(),
            master_seed: cfg.certification.master_seed,
            verdict: Verdict::derive(&certificates),
            robustness: stages.iter().find_map(|s| s.robustness.clone()),
            certificates,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialise");
    s.push('\n');
    s
}
