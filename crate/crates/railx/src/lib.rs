//! Toolkit for rail-ring optical circuit switched fabrics.
//!
//! Nodes are `m x m` meshes of chips whose edge ports are wired, rail by
//! rail, into optical circuit switches organised along the rows and columns
//! of a node grid. The crate builds logical topologies on top of that wiring,
//! routes and simulates packets over them, and evaluates the closed-form
//! collective, cost and availability models.

// `!(x >= 0.0)` deliberately rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avail;
pub mod config;
pub mod cost;
pub mod par;
pub mod perf;
pub mod route;
pub mod sim;
pub mod topo;
pub mod traffic;
