//! Numerical laboratory for a singular-hyperbolic attractor built from a
//! volume-expanding torus endomorphism, a solenoid over it, its suspension
//! and an inserted Lorenz-like singularity.

pub mod endomorphism;
pub mod flow;
pub mod error;
pub mod map;
pub mod torus;

pub use error::{LabError, Result};
pub mod certificate;
pub mod cloud;
pub mod hyperbolicity;
pub mod irg;
pub mod lp;
pub mod lyapunov;
pub mod periodic;
pub mod perturbation;
pub mod punctured;
pub mod solenoid;
