//! Finite element library for the Ericksen liquid-crystal model with
//! variable degree of orientation.
//!
//! Equilibrium states of the pair (s, n) -- scalar degree of
//! orientation and unit director -- are computed by a discrete
//! quasi-gradient flow on weakly acute P1 meshes: a tangent-space
//! director minimization, nodal projection back to the sphere, and an
//! implicit convex-split update of s.  Total energy decreases
//! monotonically at every iteration.  Colloidal inclusions enter
//! through an immersed-boundary phase field with weak-anchoring or
//! penalized-Dirichlet surface energies; a constant external electric
//! field adds a lumped dielectric term.

pub mod colloid;
pub mod config;
pub mod energy;
pub mod error;
pub mod fem;
pub mod flow;
pub mod geom;
pub mod mesh;
pub mod quadrature;
pub mod scenario;
pub mod sparse;
pub mod vtk;

pub use error::{Error, Result};
pub use geom::Vec3;
