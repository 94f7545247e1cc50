//! Inf-convolution approximants of functions with convex growth and the
//! localization bound for generators built from them.

pub mod infconv;
mod lattice;
pub mod localization;

pub use infconv::{
    approx_sequence_check, inf_convolution, InfConvSpec, SequenceReport, SequenceRow,
};
pub use localization::{
    generator_localization, localization_constant, probe_lattice, LocalizationContext,
    LocalizationProbe, LocalizationReport, LocalizationSettings, ProbeRow,
};
