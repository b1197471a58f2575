//! File system, network and command line layer over [`m2v_core`].
//!
//! - [`manifest`] loads icon manifests into an [`m2v_core::icons::IconLibrary`].
//! - [`dataset`] reads and rewrites JSONL datasets.
//! - [`provider`] holds the HTTP and replay text-generation providers.
//! - [`cli`] is the `m2v` binary.

#![forbid(unsafe_code)]

pub mod cli;
pub mod dataset;
pub mod manifest;
pub mod provider;

pub use m2v_core;
