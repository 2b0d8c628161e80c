//! Existence, stability and exponential decay rate of periodic solutions of
//! damped, periodically forced oscillators
//!
//! ```text
//! x'' + c x' + g(t, x) = h(t),   g and h T-periodic in t.
//! ```
//!
//! The crate computes Poincaré-map fixed points by Newton shooting, their
//! Floquet multipliers from the variational equation, Hill discriminants for
//! linear periodic equations, and the observed decay rate of nearby
//! solutions, and checks the coefficient bounds under which the decay rate
//! equals `c / 2`.

pub mod analysis;
pub mod error;
pub mod floquet;
pub mod integrate;
pub mod model;
pub mod periodic;

pub use error::{Error, Result};
pub use floquet::{Classification, FloquetData, Monodromy, Reference};
pub use integrate::{IntegratorSettings, PhasePoint, Trajectory, VariationalState};
pub use model::{ForcingSeries, ModelSpec, RestoringForce};
pub use periodic::{DecayEstimate, PeriodicOrbit};
