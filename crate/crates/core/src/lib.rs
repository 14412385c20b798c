//! Synthesis, certification and simulation of distributed robust consensus
//! controllers for homogeneous linear multi-agent systems whose exchanged
//! relative states pass through sector-bounded constraint or uncertainty
//! channels.
//!
//! The pipeline: [`graph`] builds the incidence/Laplacian algebra and the
//! orthogonal edge-space transform; [`edge`] maps the network consensus
//! problem onto a reduced stabilization problem over relative states;
//! [`sector`] models the per-channel nonlinearities and their sector
//! certificates; [`lmi`] synthesizes the consensus gain from a semidefinite
//! program over the extreme Laplacian eigenvalues and certifies given
//! gains; [`sim`] integrates the closed loop and audits consensus,
//! channel-constraint and Lyapunov-decay claims.

pub mod edge;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod lmi;
pub mod sdp;
pub mod sector;
pub mod sim;

pub use error::{Error, Result};

// Force the link against the system BLAS/LAPACK used by the conic solver.
extern crate openblas_src;
