//! The map families and the machinery they are assembled from.

pub mod deform;
pub mod families;
pub mod linear;
pub mod perturb;
pub mod spec;
pub mod system;

pub use families::{Layout, Model, ModelError};
pub use spec::{Family, Mode, PerturbationSpec, SpecError, SystemSpec};
