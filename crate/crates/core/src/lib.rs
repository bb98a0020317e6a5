//! Symbolic dynamics of collinear three-body orbits near triple collision.
//!
//! The pipeline runs bottom-up: the regularized field ([`dynamics`]), its
//! Poincaré maps on the binary-collision section ([`flow`]), the invariant
//! manifolds of the collision equilibria ([`manifolds`]), iterated pullbacks
//! and the induced partition ([`pullback`]), and finally the sofic-shift
//! bounds ([`symbolic`]) with a sampling harness ([`harness`]).

pub mod dynamics;
pub mod error;
pub mod flow;
pub mod harness;
pub mod integrator;
pub mod manifolds;
pub mod pullback;
pub mod symbolic;

pub use dynamics::{Collinear, MassTriple, McGeheeState};
pub use error::{Error, Result};
pub use flow::{Flow, FlowConfig, SectionPoint, Side};
