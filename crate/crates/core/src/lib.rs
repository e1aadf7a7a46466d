//! Compiler and solver for continuous-time optimal control problems.
//!
//! A problem written in the `.ocp` language ([`dsl`]) is discretised on a
//! uniform grid ([`transcription`]) into a structured sparse NLP whose
//! constraints and objective are small kernels mapped over grid indices
//! ([`kernel`]). Kernel evaluation runs serially or data parallel
//! ([`backend`]); the NLP is solved by a filter line-search interior-point
//! method ([`ipm`]) on top of a sparse LDLᵀ factorization ([`sparse`]).

pub mod backend;
pub mod bench;
pub mod diagnostics;
pub mod dsl;
pub mod ipm;
pub mod kernel;
pub mod problems;
pub mod sparse;
pub mod transcription;
