//! Implicit upwind finite-volume discretization of a two-species kinetic
//! reaction model on the one-dimensional torus, together with the entropy,
//! dissipation and hypocoercivity diagnostics used to monitor its long-time
//! behaviour.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cyclic;
pub mod driver;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod mesh;
pub mod profiles;
pub mod scheme;
pub mod selfcheck;
pub mod state;
pub mod sum;

pub use error::{Error, Result};
pub use mesh::PhaseMesh;
pub use profiles::{DiscreteProfiles, ProfileFamily};
pub use scheme::{implicit_step, SchemeParams, StepReport};
pub use state::{DistributionPair, EquilibriumState, MacroPair};
