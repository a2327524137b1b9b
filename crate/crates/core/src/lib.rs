//! Event-study engine for clinical-trial result announcements.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boost;
pub mod corpus;
pub mod evalkit;
pub mod forecast;
pub mod graph;
pub mod impact;
pub mod market;
pub mod pipeline;
pub mod report;
pub mod sentiment;
