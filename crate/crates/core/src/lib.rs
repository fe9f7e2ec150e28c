//! Descriptor-guided evolutionary lens design.
//!
//! This crate optimizes multi-element spherical lens systems. The evaluation
//! stack is a sequential geometric ray tracer ([`optics`]) feeding a penalized
//! merit function ([`merit`]). On top of it sit three optimizers:
//!
//! * [`ldgea`] — the two-stage loop that learns a distribution over behavior
//!   descriptors (curvature sign patterns plus glass choices, [`descriptor`])
//!   and, for each sampled descriptor, searches its continuous subspace with a
//!   hill-valley niching evolution strategy ([`hvea`] driving
//!   [`evostrat::cmsa_es_run`]).
//! * [`evostrat::cma_es_baseline_run`] — a mixed-integer CMA-ES with BIPOP
//!   restarts over the full parameter vector, used as the comparison baseline.
//! * [`refine`] — projected BFGS polish of individual candidates using exact
//!   forward-mode derivatives of the trace.
//!
//! The trace and merit kernels are generic over the scalar type via
//! [`scalar::Scalar`], so the same code path evaluates plain `f64` values and
//! dual numbers carrying derivatives. Concrete aliases live at the crate root.

pub mod descriptor;
pub mod error;
pub mod evostrat;
pub mod glass;
pub mod hvea;
pub mod ldgea;
pub mod refine;
pub mod merit;
pub mod optics;
pub mod preset;
pub mod scalar;

pub use error::{Error, Result};

/// Concrete scalar used everywhere a plain number is meant.
pub type Real = f64;

/// Forward-mode dual over [`Real`]: value plus one directional derivative.
pub type Dual64 = scalar::Dual;
