//! Addresses of nodes inside a VL tree and of the derived parts of a layout.

use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Arg1,
    Arg2,
    Result,
    /// One copy of a repeated multiplicand.
    Replica(u32),
    /// One post-division group.
    Group(u32),
    Remainder,
    LeftPan,
    RightPan,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Arg1 => f.write_str("arg1"),
            Step::Arg2 => f.write_str("arg2"),
            Step::Result => f.write_str("result"),
            Step::Replica(i) => write!(f, "replica{i}"),
            Step::Group(i) => write!(f, "group{i}"),
            Step::Remainder => f.write_str("remainder"),
            Step::LeftPan => f.write_str("left_pan"),
            Step::RightPan => f.write_str("right_pan"),
        }
    }
}

/// Sequence of steps from the root. The empty path is the root itself and
/// displays as `root`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodePath(Vec<Step>);

impl NodePath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, step: Step) -> Self {
        let mut steps = self.0.clone();
        steps.push(step);
        Self(steps)
    }

    pub fn steps(&self) -> &[Step] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn starts_with(&self, prefix: &NodePath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// Inserts `step` right after the first `at` steps.
    pub(crate) fn insert(&mut self, at: usize, step: Step) {
        self.0.insert(at, step);
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for (i, step) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

impl From<Vec<Step>> for NodePath {
    fn from(steps: Vec<Step>) -> Self {
        Self(steps)
    }
}
