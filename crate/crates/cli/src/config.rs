//! Laboratory configuration: one TOML file holding every constant, loaded
//! strictly and validated by building the models it describes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use singlab_core::endomorphism::{EndomorphismModel, LinearPart, RegionGeometry, SaddleDeformation};
use singlab_core::flow::{FlowIntegrator, PlugGeometry, ReturnCheckSettings, SingularFlowModel, SingularitySpectrum};
use singlab_core::hyperbolicity::{RobustnessSettings, SingularHyperbolicitySettings, TransitivitySettings, WitnessSettings};
use singlab_core::irg::IrgSettings;
use singlab_core::lp::LpSettings;
use singlab_core::perturbation::MAX_C1_SIZE;
use singlab_core::punctured::{BlowUpModel, PuncturedMapModel};
use singlab_core::solenoid::{FiberPlacement, SkewProductModel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<singlab_core::LabError> for ConfigError {
    fn from(e: singlab_core::LabError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub endomorphism: EndomorphismConfig,
    pub solenoid: SolenoidConfig,
    pub blowup: BlowUpModel,
    pub flow: FlowConfig,
    pub certification: CertificationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndomorphismConfig {
    pub linear: LinearPart,
    pub regions: RegionGeometry,
    /// Omit to run the undeformed linear map.
    #[serde(default)]
    pub deformation: Option<SaddleDeformation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolenoidConfig {
    pub lambda_f: f64,
    pub placement: FiberPlacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub plug: PlugGeometry,
    pub spectrum: SingularitySpectrum,
    pub integrator: FlowIntegrator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificationConfig {
    /// Every random stream of a run is derived from this seed.
    pub master_seed: u64,
    pub lp: LpSettings,
    pub h6: H6Checks,
    pub solenoid: SolenoidChecks,
    pub lyapunov: LyapunovChecks,
    pub blowup: BlowupChecks,
    pub return_check: ReturnCheckSettings,
    pub singular_hyperbolicity: SingularHyperbolicitySettings,
    pub witness: WitnessSettings,
    pub core: CoreChecks,
    pub irg: IrgSettings,
    pub irg_disks: DiskChecks,
    pub transitivity: TransitivitySettings,
    pub robustness: RobustnessSettings,
    pub ensemble: EnsembleChecks,
    pub plots: PlotSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H6Checks {
    pub grid: usize,
    /// Allowed error of the fixed-point multipliers.
    pub multiplier_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolenoidChecks {
    pub injectivity_samples: usize,
    pub injectivity_min: f64,
    pub cone_samples: usize,
    pub burn_in: usize,
    pub splitting_orbits: usize,
    pub splitting_length: usize,
    /// Volume exponents must reach `ln(volume_reference) − volume_drop`.
    pub volume_reference: f64,
    pub volume_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovChecks {
    pub seeds: usize,
    pub steps: usize,
    pub trace_every: usize,
    pub burn_in: usize,
    pub fiber_tol: f64,
    pub base_reference: f64,
    pub base_drop: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupChecks {
    pub slope_angle: f64,
    pub slope_r_min: f64,
    pub slope_r_max: f64,
    pub slope_points: usize,
    /// Relative tolerance on the determinant slope `2κ − 2`.
    pub slope_tol: f64,
    pub ball_angles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreChecks {
    pub horizon: usize,
    pub resolution: usize,
    pub r0_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskChecks {
    pub count: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleChecks {
    pub members: usize,
    pub c1_size: f64,
    pub degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSettings {
    pub attractor_points: usize,
    pub heatmap_resolution: usize,
    pub preimage_depth: usize,
    pub orbit_steps: usize,
}

/// The committed default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: LabConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_config() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("committed default configuration is valid")
    }

    /// Checks every model invariant by building the models, plus the
    /// settings preconditions that would otherwise only fail mid-run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        Lab::build(self)?;
        let c = &self.certification;
        c.lp.validate()?;
        c.singular_hyperbolicity.cone.validate()?;
        if !(0.0..=MAX_C1_SIZE).contains(&c.ensemble.c1_size) {
            return Err(ConfigError::Invalid(format!("ensemble c1_size must lie in [0, {MAX_C1_SIZE}]")));
        }
        if c.ensemble.degree == 0 || c.ensemble.members == 0 {
            return Err(ConfigError::Invalid("ensemble needs degree >= 1 and at least one member".into()));
        }
        if c.lyapunov.steps < 1000 {
            return Err(ConfigError::Invalid("lyapunov steps must be >= 1000".into()));
        }
        if c.core.horizon < 20 {
            return Err(ConfigError::Invalid("core horizon must be >= 20".into()));
        }
        if c.transitivity.trials < 50 || c.transitivity.radius < 1e-3 {
            return Err(ConfigError::Invalid("transitivity needs >= 50 trials of radius >= 1e-3".into()));
        }
        if c.blowup.slope_points < 3 || !(0.0 < c.blowup.slope_r_min && c.blowup.slope_r_min < c.blowup.slope_r_max) {
            return Err(ConfigError::Invalid("determinant slope needs >= 3 radii in an increasing positive range".into()));
        }
        Ok(())
    }

    /// Replaces the master seed and re-derives the module seeds from it.
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.certification.master_seed = seed;
        self
    }

    /// Lowercase hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self, label: &str) -> u64 {
        derive_seed(self.certification.master_seed, label)
    }
}

/// Independent stream seed for `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// The models described by a configuration, with seeded settings.
#[derive(Clone, Debug)]
pub struct Lab {
    pub endo: EndomorphismModel,
    pub fstar: PuncturedMapModel,
    /// Skew product over the smooth base map.
    pub solenoid: SkewProductModel<EndomorphismModel>,
    /// Skew product over the punctured map: the section of the flow.
    pub section: SkewProductModel<PuncturedMapModel>,
    pub flow: SingularFlowModel<EndomorphismModel>,
    pub cfg: LabConfig,
}

impl Lab {
    pub fn build(cfg: &LabConfig) -> Result<Self, ConfigError> {
        let e = &cfg.endomorphism;
        let endo = EndomorphismModel::new(e.linear.clone(), e.deformation.clone(), e.regions.clone())?;
        let fstar = PuncturedMapModel::new(endo.clone(), cfg.blowup.clone())?;
        let s = &cfg.solenoid;
        let solenoid = SkewProductModel::new(endo.clone(), s.lambda_f, s.placement)?;
        let section = SkewProductModel::new(fstar.clone(), s.lambda_f, s.placement)?;
        let f = &cfg.flow;
        let flow = SingularFlowModel::new(solenoid.clone(), cfg.blowup.q, f.plug, f.spectrum, f.integrator)?;
        let mut cfg = cfg.clone();
        let c = &mut cfg.certification;
        let m = c.master_seed;
        c.lp.seed = derive_seed(m, "lp");
        c.return_check.seed = derive_seed(m, "return_check");
        c.singular_hyperbolicity.seed = derive_seed(m, "singular_hyperbolicity");
        c.transitivity.seed = derive_seed(m, "transitivity");
        c.robustness.lp.seed = c.lp.seed;
        Ok(Self { endo, fstar, solenoid, section, flow, cfg })
    }

    pub fn certification(&self) -> &CertificationConfig {
        &self.cfg.certification
    }
}
