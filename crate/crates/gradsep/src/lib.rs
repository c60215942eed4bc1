//! Decision procedures for graded modal logics.
//!
//! The crate implements a toolkit around graded modal logic and its
//! extensions with inverse modalities, nominals, and the universal
//! modality:
//!
//! - parsing, printing, and indexing of formulas ([`formula`]),
//! - finite Kripke structures and model checking ([`structure`]),
//! - bisimulation computation and certificate checking ([`bisim`]),
//! - Hintikka type sets and type-elimination satisfiability ([`hintikka`],
//!   [`sat`]),
//! - flattening, definability, and uniform separators ([`definability`]),
//! - Craig separation by mosaic elimination for the non-inverse fragments
//!   ([`mosaic`]) and by star-type elimination for the inverse fragments
//!   ([`startype`]),
//! - the two-register machine formula encodings used as a stress-test
//!   generator ([`machine`]).

pub mod bisim;
pub mod bits;
pub mod definability;
pub mod formula;
pub mod hintikka;
pub mod mosaic;
pub mod sat;
pub mod structure;

pub use bits::Bits;
