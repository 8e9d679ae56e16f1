//! Numerical laboratory for partially hyperbolic torus diffeomorphisms built
//! by local surgery on products of hyperbolic toral automorphisms and
//! Morse–Smale circle maps.

pub mod analysis;
pub mod bump;
pub mod circle;
pub mod fd;
pub mod gate;
pub mod maps;
pub mod torus;
