//! Dependency pinning analysis: semver constraints, time-travel registry
//! resolution, security and maintenance metrics, a two-way fixed-effects
//! panel estimator, and attack/defense simulation on package networks.

pub mod metrics;
pub mod netsim;
pub mod panel;
pub mod registry;
pub mod resolver;
pub mod semver;

pub use registry::{RegistrySnapshot, TimeView, Timestamp};
pub use resolver::{resolve, ResolvedGraph};
pub use semver::{ConstraintClass, Version, VersionConstraint};
pub mod synth;
