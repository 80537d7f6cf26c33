//! Altruistic heterogeneous multi-team robot allocation.
//!
//! Robots are transferable resources between teams connected by an
//! interaction graph. A transfer `i → j` of robot `r` is admissible under
//! Hamilton's rule when `(w_j / w_i) · B_{r,j} > C_{r,i}`. The crate provides
//!
//! - [`model`]: teams, robots, assignments, the admissibility mask;
//! - [`fire`]: the fire-fighting mission (coverage, suppression, decay);
//! - [`solver`]: the exact one-step optimizer, the homogeneous bidding
//!   process and the Partition construction;
//! - [`datagen`]: labeled dataset generation;
//! - [`nn`]: the graph neural network policy and its training loop;
//! - [`sim`]: policy-driven episodes and the runtime benchmark.

pub mod datagen;
pub mod error;
pub mod fire;
pub mod instance;
pub mod model;
pub mod nn;
pub mod seeding;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use instance::Instance;
