//! Integer-valued Gaussian free field laboratory.
//!
//! Exact Green's-function computations on square lattices, heat-bath sampling of
//! the integer-valued field with monotone coupling, moment-generating-function
//! bound checks, Fejér-kernel approximations and the combinatorics of the
//! Coulomb-gas cosine expansion.

pub mod error;
pub mod harmonic;
pub mod renorm;
pub mod lattice;
pub mod sampler;
pub mod scalar;
pub mod solver;
pub mod trig;

pub use error::{Error, Result};
pub use lattice::{IntField, RealField, SquareDomain, SubDomain, Topology, Vertex};
pub use scalar::Scalar;

pub type RealField64 = RealField<f64>;
pub type RealField32 = RealField<f32>;
pub type GreensTable64 = harmonic::GreensTable<f64>;
pub type GreensTable32 = harmonic::GreensTable<f32>;
pub type ProbeDensity64 = harmonic::ProbeDensity<f64>;
