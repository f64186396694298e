//! Center manifolds, Chapman-Enskog reduction and small-amplitude shock
//! profiles for finite-dimensional kinetic relaxation systems A w' = Q(w).

pub mod bvp;
pub mod chapman;
pub mod cli;
pub mod error;
pub mod grid;
pub mod linear;
pub mod manifold;
pub mod model;
pub mod numerics;
pub mod oracles;
pub mod output;
pub mod poly;
pub mod profiles;
pub mod registry;
pub mod weighted;

pub use error::{KmError, Result};
pub use grid::GridFunction;
pub use linear::{build_decomposition, Decomposition};
pub use model::{load_model, verify_hypotheses, KineticModel};
