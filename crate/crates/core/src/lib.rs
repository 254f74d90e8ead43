// SPDX-License-Identifier: Apache-2.0

//! Modular flow generator for physical-design-style pipelines.
//!
//! A flow is assembled from self-contained *node packages* (a directory with a
//! `configure.yml` plus scripts). Nodes are wired into a [`FlowGraph`] whose
//! edges carry files from output ports to input ports. Before anything runs,
//! the Tcl sources of every node are evaluated statically by a sandboxed Tcl
//! subset ([`tcl`]) so that cross-node inconsistencies (bad standard cells,
//! mismatched tile heights, violated design-intent properties) surface in
//! seconds ([`check`]). The graph is then lowered to an incremental,
//! content-hashed, parallel build ([`backend`]) whose steps are wrapped in
//! pre/postcondition checks ([`assertions`]). Built steps can be shared via a
//! filesystem [`stash`] and pulled back in as pre-built vendor packages.
//!
//! The guide in `book/` walks through each layer with runnable listings.

pub mod assertions;
pub mod backend;
pub mod check;
pub mod cli;
pub mod flowspec;
pub mod graph;
pub mod hash;
pub mod node;
pub mod stash;
pub mod tcl;

pub use graph::{FlowGraph, PortRef};
pub use node::{NodeConfig, NodeKind, ParamValue, Scalar};
