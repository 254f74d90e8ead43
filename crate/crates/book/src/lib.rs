// SPDX-License-Identifier: Apache-2.0

//! The chapters of `book/`, one module each, so `cargo test` runs every
//! listing as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/nodes.md")]
pub mod nodes {}
#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("../../../book/src/static-checks.md")]
pub mod static_checks {}
#[doc = include_str!("../../../book/src/assertions.md")]
pub mod assertions {}
#[doc = include_str!("../../../book/src/building.md")]
pub mod building {}
#[doc = include_str!("../../../book/src/stash.md")]
pub mod stash {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
