//! Power-allocation games on parallel multiple access channels.
//!
//! `K` transmitters split fixed power budgets across `A` orthogonal receiver
//! nodes; payoffs are Shannon spectral efficiencies under single-user
//! decoding. The game admits an exact potential, so Nash equilibria are the
//! minimizers of a smooth convex function over a product of scaled simplices.
//! This crate provides:
//!
//! - [`game`]: game construction, payoffs, the potential and its gradient
//!   field, and a sampling check of the exact-potential identity;
//! - [`equilibrium`]: water-filling best responses, projected-gradient and
//!   sequential water-filling solvers, KKT residuals, and the graph
//!   representation of power profiles (forests, face dimensions);
//! - [`structure`]: degeneracy index of the potential and audits of the
//!   classical sufficient uniqueness conditions (Cmax, C1, C2), which fail
//!   on this channel model even though the equilibrium is unique for almost
//!   every draw of the channel gains;
//! - [`dynamics`]: replicator-dynamics integration with potential and
//!   Kullback-Leibler Lyapunov monitors, and games reduced to restricted
//!   node supports;
//! - [`io`]: plain-text documents for games and reports, trajectory CSV.

pub mod dynamics;
mod error;
pub mod equilibrium;
pub mod game;
pub mod io;
pub mod structure;

pub use error::{Error, Result};
pub use game::{Game, GainDistribution, PotentialCheck, PowerProfile};
pub use equilibrium::{EquilibriumReport, ProfileGraph, SolveOptions, SolverKind};
pub use structure::{ConditionReport, DegeneracyReport};
pub use dynamics::{Divergence, IntegrateOptions, ReducedGame, StopReason, Trajectory};
