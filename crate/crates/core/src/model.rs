//! VL domain types, structural validation and numeric evaluation.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::Serialize;

use crate::path::{NodePath, Step};

/// One leaf of the VL: an entity with its quantity, held by a container.
///
/// Empty strings mean "absent". `attr_name` without `attr_type` is purely
/// textual and never resolved to an icon.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ContainerSpec {
    pub entity_name: String,
    pub entity_type: String,
    pub entity_quantity: f64,
    pub container_name: String,
    pub container_type: String,
    pub attr_name: String,
    pub attr_type: String,
}

impl ContainerSpec {
    pub fn new(entity_name: &str, entity_type: &str, entity_quantity: f64) -> Self {
        Self {
            entity_name: entity_name.to_string(),
            entity_type: entity_type.to_string(),
            entity_quantity,
            ..Self::default()
        }
    }

    pub fn with_container(mut self, name: &str, kind: &str) -> Self {
        self.container_name = name.to_string();
        self.container_type = kind.to_string();
        self
    }

    pub fn with_attr(mut self, name: &str, kind: &str) -> Self {
        self.attr_name = name.to_string();
        self.attr_type = kind.to_string();
        self
    }

    /// True when every field is absent; used for formal-style result placeholders.
    pub fn is_placeholder(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Addition,
    Subtraction,
    Multiplication,
    Division,
    Surplus,
    Area,
    Comparison,
    Unittrans,
}

impl OperationKind {
    pub const ALL: [OperationKind; 8] = [
        OperationKind::Addition,
        OperationKind::Subtraction,
        OperationKind::Multiplication,
        OperationKind::Division,
        OperationKind::Surplus,
        OperationKind::Area,
        OperationKind::Comparison,
        OperationKind::Unittrans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Addition => "addition",
            OperationKind::Subtraction => "subtraction",
            OperationKind::Multiplication => "multiplication",
            OperationKind::Division => "division",
            OperationKind::Surplus => "surplus",
            OperationKind::Area => "area",
            OperationKind::Comparison => "comparison",
            OperationKind::Unittrans => "unittrans",
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown operation `{0}`")]
pub struct UnknownOperation(pub String);

impl FromStr for OperationKind {
    type Err = UnknownOperation;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownOperation(s.to_string()))
    }
}

/// `kind(arg1, arg2, result)`; the arguments may themselves be operations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Operation {
    pub kind: OperationKind,
    pub arg1: Node,
    pub arg2: Node,
    pub result: ContainerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(ContainerSpec),
    Op(Box<Operation>),
}

impl Node {
    pub fn op(kind: OperationKind, arg1: Node, arg2: Node, result: ContainerSpec) -> Self {
        Node::Op(Box::new(Operation {
            kind,
            arg1,
            arg2,
            result,
        }))
    }

    pub fn leaf(spec: ContainerSpec) -> Self {
        Node::Leaf(spec)
    }

    pub fn as_leaf(&self) -> Option<&ContainerSpec> {
        match self {
            Node::Leaf(spec) => Some(spec),
            Node::Op(_) => None,
        }
    }

    pub fn as_op(&self) -> Option<&Operation> {
        match self {
            Node::Op(op) => Some(op),
            Node::Leaf(_) => None,
        }
    }

    /// Number of operation levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::Op(op) => 1 + op.arg1.depth().max(op.arg2.depth()),
        }
    }

    /// Argument-position leaves in left-to-right order (results excluded).
    pub fn arg_leaves(&self) -> Vec<&ContainerSpec> {
        let mut out = Vec::new();
        self.collect_arg_leaves(&mut out);
        out
    }

    fn collect_arg_leaves<'a>(&'a self, out: &mut Vec<&'a ContainerSpec>) {
        match self {
            Node::Leaf(spec) => out.push(spec),
            Node::Op(op) => {
                op.arg1.collect_arg_leaves(out);
                op.arg2.collect_arg_leaves(out);
            }
        }
    }

    /// Operation kinds in preorder.
    pub fn op_kinds(&self) -> Vec<OperationKind> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self];
        while let Some(node) = stack.pop() {
            if let Node::Op(op) = node {
                out.push(op.kind);
                stack.push(&op.arg2);
                stack.push(&op.arg1);
            }
        }
        out
    }

    /// Every container in the tree, arguments and results, with its path.
    pub fn containers(&self) -> Vec<(NodePath, &ContainerSpec)> {
        let mut out = Vec::new();
        self.collect_containers(NodePath::root(), &mut out);
        out
    }

    fn collect_containers<'a>(&'a self, path: NodePath, out: &mut Vec<(NodePath, &'a ContainerSpec)>) {
        match self {
            Node::Leaf(spec) => out.push((path, spec)),
            Node::Op(op) => {
                op.arg1.collect_containers(path.child(Step::Arg1), out);
                op.arg2.collect_containers(path.child(Step::Arg2), out);
                out.push((path.child(Step::Result), &op.result));
            }
        }
    }

    /// The node at `path`, following only `arg1`/`arg2` steps.
    pub fn get(&self, path: &NodePath) -> Option<&Node> {
        let mut node = self;
        for step in path.steps() {
            let op = node.as_op()?;
            node = match step {
                Step::Arg1 => &op.arg1,
                Step::Arg2 => &op.arg2,
                _ => return None,
            };
        }
        Some(node)
    }

    /// Applies `f` to every container, arguments and results alike.
    pub fn map_containers(&self, f: &mut impl FnMut(&ContainerSpec) -> ContainerSpec) -> Node {
        match self {
            Node::Leaf(spec) => Node::Leaf(f(spec)),
            Node::Op(op) => {
                let arg1 = op.arg1.map_containers(f);
                let arg2 = op.arg2.map_containers(f);
                Node::op(op.kind, arg1, arg2, f(&op.result))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warn,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warn => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub path: NodePath,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.severity, self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    /// No error-severity issues.
    pub fn ok(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warn)
    }

    fn push(&mut self, severity: Severity, path: &NodePath, message: &str) {
        self.issues.push(Issue {
            severity,
            path: path.clone(),
            message: message.to_string(),
        });
    }
}

/// Reports every structural violation in the tree. Never fails.
pub fn validate(root: &Node) -> ValidationReport {
    let mut report = ValidationReport::default();
    if root.as_leaf().is_some() {
        report.push(Severity::Error, &NodePath::root(), "root must be an operation");
    }
    for (path, spec) in root.containers() {
        check_container(&path, spec, &mut report);
    }
    report
}

fn check_container(path: &NodePath, spec: &ContainerSpec, report: &mut ValidationReport) {
    let q = spec.entity_quantity;
    if !q.is_finite() {
        report.push(Severity::Error, path, "quantity is not a finite number");
    } else if q < 0.0 {
        report.push(Severity::Error, path, "negative quantity");
    }
    if spec.entity_type.trim().is_empty() {
        if q > 0.0 {
            report.push(Severity::Error, path, "entity_type is empty but the quantity is positive");
        } else if !spec.is_placeholder() {
            report.push(Severity::Warn, path, "entity_type is empty");
        }
    }
    if spec.entity_name.trim().is_empty() && !spec.is_placeholder() {
        report.push(Severity::Warn, path, "entity_name is empty");
    }
    if !spec.attr_type.trim().is_empty() && spec.attr_name.trim().is_empty() {
        report.push(Severity::Warn, path, "attr_type without attr_name");
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("zero divisor at {0}")]
    ZeroDivisor(NodePath),
    #[error("surplus requires integral operands at {0}")]
    NonIntegralSurplus(NodePath),
}

/// Numeric value of the tree. Comparison yields the signed difference
/// `arg1 - arg2`; unittrans yields `count * rate`.
pub fn evaluate_numeric(root: &Node) -> Result<f64, EvalError> {
    eval_at(root, &NodePath::root())
}

fn eval_at(node: &Node, path: &NodePath) -> Result<f64, EvalError> {
    let op = match node {
        Node::Leaf(spec) => return Ok(spec.entity_quantity),
        Node::Op(op) => op,
    };
    let a = eval_at(&op.arg1, &path.child(Step::Arg1))?;
    let b = eval_at(&op.arg2, &path.child(Step::Arg2))?;
    Ok(match op.kind {
        OperationKind::Addition => a + b,
        OperationKind::Subtraction | OperationKind::Comparison => a - b,
        OperationKind::Multiplication | OperationKind::Area | OperationKind::Unittrans => a * b,
        OperationKind::Division => {
            if b == 0.0 {
                return Err(EvalError::ZeroDivisor(path.clone()));
            }
            a / b
        }
        OperationKind::Surplus => {
            let (Some(x), Some(y)) = (crate::decimal::as_integer(a), crate::decimal::as_integer(b)) else {
                return Err(EvalError::NonIntegralSurplus(path.clone()));
            };
            if y == 0 {
                return Err(EvalError::ZeroDivisor(path.clone()));
            }
            x.rem_euclid(y) as f64
        }
    })
}

pub const EXPRESSION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionCheck {
    pub matches: bool,
    pub value: f64,
    pub warning: Option<String>,
}

/// Compares the tree's value with a dataset answer. Comparison-rooted trees
/// have a categorical answer, so they always match and carry a warning.
pub fn check_against_expression(root: &Node, expected: f64) -> Result<ExpressionCheck, EvalError> {
    let value = evaluate_numeric(root)?;
    if let Node::Op(op) = root {
        if op.kind == OperationKind::Comparison {
            return Ok(ExpressionCheck {
                matches: true,
                value,
                warning: Some(alloc::format!(
                    "comparison answer is categorical; signed difference is {}",
                    crate::decimal::format_decimal(value)
                )),
            });
        }
    }
    Ok(ExpressionCheck {
        matches: libm::fabs(value - expected) <= EXPRESSION_TOLERANCE,
        value,
        warning: None,
    })
}
