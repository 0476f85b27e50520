// SPDX-License-Identifier: Apache-2.0

//! Timing analysis agent over multi-corner multi-mode static timing reports.
//!
//! - [`model`]: report domain types and the per-corner/mode report database.
//! - [`parser`]: line-oriented report grammar, serializer and corpus loading.
//! - [`gen`]: seeded corpus generator with recorded anomaly ground truth.
//! - [`query`]: sandboxed retrieval query language and its reference oracle.
//! - [`tdrg`]: timing debug relation graph and retrieval route planning.
//! - [`agents`]: MCMM planner, graph traversal and expert report agents.
//! - [`bench`]: single- and multi-report benchmark suites and grading.

pub mod model;
pub mod parser;
pub mod gen;
pub mod query;
pub mod tdrg;
pub mod agents;
pub mod bench;
