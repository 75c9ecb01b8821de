//! Staged simulation of dialectical, q-dialectical, and p-dialectical
//! systems: trial-and-error theory builders over enumeration operators and
//! a decidable propositional deduction operator.
//!
//! The crate provides:
//!
//! - [`codec`]: a total Gödel numbering of propositional sentences and the
//!   injective connective functions;
//! - [`logic`]: truth-table entailment, staged entailment operators, the
//!   connective laws, completion checking, and the theories `T_A`;
//! - [`operators`]: enumeration operators as staged axiom tables, closure
//!   completion, and good approximations;
//! - [`systems`]: system specifications and budget-bounded validation;
//! - [`engine`]: the staged procedures, traces, limit reports, and
//!   membership-characterization checks;
//! - [`constructs`]: the transformations between system classes and the
//!   diagonalization that builds a completion escaping a given computable
//!   class of limit-computable sets;
//! - [`render`]: TSV export and ASCII stack diagrams;
//! - [`gen`]: deterministic generators of small random systems for
//!   property-style checks.

pub mod codec;
pub mod constructs;
pub mod engine;
pub mod gen;
pub mod logic;
pub mod operators;
pub mod render;
pub mod systems;
