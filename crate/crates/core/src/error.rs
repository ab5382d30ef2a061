use thiserror::Error;

use crate::torus::TorusPoint;

/// Every failure mode of the laboratory.
///
/// Certificate failures are *not* errors: a certificate that does not pass is
/// reported through [`crate::certificate::CertificateReport`]. Errors are
/// reserved for invalid models, violated preconditions and numerical
/// procedures that could not run to completion.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("root refinement did not converge from seed ({x1:.6}, {x2:.6})")]
    SeedFailure { x1: f64, x2: f64 },

    #[error("point lies on the puncture (distance {distance:e})")]
    AtPuncture { distance: f64 },

    #[error("fiber image left the disk at ({x1:.6}, {x2:.6}): |y| = {norm}")]
    FiberEscape { x1: f64, x2: f64, norm: f64 },

    #[error("cone invariance violated at ({x1:.6}, {x2:.6}): image aperture {aperture} > {bound}")]
    ConeViolation { x1: f64, x2: f64, aperture: f64, bound: f64 },

    #[error("nonhyperbolic fixed point at ({x1:.6}, {x2:.6}), multiplier modulus {modulus}")]
    NonhyperbolicFixedPoint { x1: f64, x2: f64, modulus: f64 },

    #[error("trajectory stalled near the singularity (distance {distance:e})")]
    NearSingularityStall { distance: f64 },

    #[error("orbit entered the puncture neighbourhood at step {step}")]
    OrbitHitPuncture { step: usize },

    #[error("no grid point survived {horizon} iterates in the expanding region")]
    EmptyCore { horizon: usize },

    #[error("local diffeomorphism cover failed on element {index}: {reason}")]
    CoverFailure { index: usize, reason: String },

    #[error("seed disk did not reach the target inscribed radius within {cap} iterates")]
    NotReached { cap: usize },

    #[error("nonhyperbolic periodic orbit of period {period} at ({x1:.6}, {x2:.6}), multiplier modulus {modulus}")]
    NonhyperbolicOrbit { period: usize, x1: f64, x2: f64, modulus: f64 },

    #[error("singularity spectrum mismatch: expected {expected:?}, found {found:?}")]
    SpectrumMismatch { expected: Vec<f64>, found: Vec<f64> },

    #[error("flow return disagrees with the section map: {0}")]
    Disagreement(String),

    #[error("central volume exponent {exponent} is not positive at {at}")]
    NonpositiveDetExponent { exponent: f64, at: String },

    #[error("no periodic orbits of two different indices up to period {max_period}")]
    WitnessNotFound { max_period: usize },

    #[error("pair {pair} did not connect within {cap} iterates")]
    PairUnconnected { pair: usize, cap: usize },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}

impl LabError {
    pub(crate) fn seed_failure(p: TorusPoint) -> Self {
        LabError::SeedFailure { x1: p.x1, x2: p.x2 }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
