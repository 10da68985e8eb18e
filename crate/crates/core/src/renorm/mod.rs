//! Charge densities, the convex cosine expansion and spin waves.

mod density;
mod expansion;
mod spinwave;

pub use density::*;
pub use expansion::*;
pub use spinwave::*;
