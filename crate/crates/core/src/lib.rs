//! Core engine for turning math word problem "visual language" (VL) trees
//! into pedagogical SVG visuals, and for scoring predicted VLs against gold
//! annotations.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! file system, the network or the command line lives in the `m2v` crate.
//!
//! Pipeline:
//!
//! 1. [`parser::parse`] turns VL text into a [`model::Node`] tree.
//! 2. [`layout::plan`] computes a [`layout::LayoutPlan`] for the formal or
//!    intuitive style.
//! 3. [`render::render`] materialises the plan as a self-contained SVG.
//!
//! [`metrics`] implements tree edit distance and logic matching, and
//! [`bridge`] builds generation prompts and extracts VL from model output.

#![no_std]
#![forbid(unsafe_code)]

#[cfg(any(test, feature = "std"))]
extern crate std;

extern crate alloc;

pub mod bridge;
pub mod decimal;
pub mod icons;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod path;
pub mod render;

pub use crate::layout::{LayoutPlan, StyleConfig, VisualStyle};
pub use crate::model::{ContainerSpec, Node, Operation, OperationKind};
pub use crate::parser::{parse, serialize, ParseError};
pub use crate::path::{NodePath, Step};
