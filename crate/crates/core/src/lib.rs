//! Decentralized electrical-flow estimation on weighted graphs.
//!
//! Two local processes estimate the node potentials of a unit electrical
//! flow between a source and a sink: deterministic Jacobi potential
//! exchange ([`jacobi`]) and randomized token diffusion ([`tokens`]). An
//! exact solver ([`oracle`]) serves as ground truth and [`spectral`]
//! computes the quantities that bound how fast each process converges.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below fix it to `f64`, which is what the CLI and file formats use.

pub mod experiment;
pub mod format;
pub mod generators;
pub mod graph;
pub mod jacobi;
pub mod oracle;
pub mod scalar;
pub mod spectral;
pub mod suite;
pub mod tokens;

pub use scalar::Scalar;

pub type Graph = graph::WeightedGraph<f64>;
pub type Operators = graph::OperatorBundle<f64>;
pub type Demand = graph::DemandVector<f64>;
pub type Potentials = oracle::PotentialVector<f64>;
pub type Flows = oracle::FlowAssignment<f64>;
pub type JacobiState = jacobi::JacobiState<f64>;
pub type JacobiConfig = jacobi::JacobiConfig<f64>;
pub type ErrorDecomposition = jacobi::ErrorDecomposition<f64>;
pub type Estimate = tokens::Estimate<f64>;
pub type ExpectedIterate = tokens::ExpectedPotentialIterate<f64>;
