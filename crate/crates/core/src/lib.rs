//! Boot acceleration toolkit: parse service unit files, analyze and isolate
//! the booting-critical dependency structure, simulate parallel in-order
//! boots deterministically, and report on the results.
//!
//! The crate is organized by pipeline stage:
//! - [`unit`]: domain types (names, dependency kinds, unit records, sets)
//! - [`parse`]: the INI-like unit-file format and whole-tree parsing
//! - [`cache`]: binary pre-parsed cache with content-hash invalidation
//! - [`graph`]: typed dependency graph, diagnostics, group isolation
//! - [`sim`]: deterministic discrete-event boot simulation
//! - [`report`]: bootcharts, metrics, A/B comparisons

pub mod cache;
pub mod gen;
pub mod graph;
pub mod parse;
pub mod report;
pub mod sim;
pub mod unit;
