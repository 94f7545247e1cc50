//! Domain types shared by every engine: convex moduli, generators, forward
//! coefficients, time grids, and sampled checks of the standing assumptions.

mod coefficients;
mod generator;
mod grid;
mod modulus;
pub mod presets;
mod validate;

pub use coefficients::{CoeffFn, SdeCoefficients};
pub use generator::{AlphaKind, AlphaProcess, DriverFn, GeneratorSpec, PathFunctionalFn};
pub use grid::TimeGrid;
pub use modulus::{eval_modulus, ConvexModulus};
pub use validate::{
    validate_assumption_a, validate_coefficients, ClauseReport, CoefficientSamplePlan,
    GeneratorSamplePlan, Tolerance, ValidationReport,
};
