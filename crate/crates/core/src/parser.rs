//! Recursive-descent parser and canonical serializer for VL text.
//!
//! ```text
//! vl        := op
//! op        := OPNAME '(' arg ',' arg ',' container ')'
//! arg       := op | container
//! container := IDENT '[' attr (',' attr)* ']'
//! attr      := KEY ':' value
//! ```
//!
//! Whitespace is insignificant between tokens. Operation names match
//! case-insensitively; attribute keys match exactly. A value runs up to the
//! next `,` or `]` and is trimmed. Container labels (`container1`, ...) are
//! not stored.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt::{self, Write as _};

use crate::decimal::{format_decimal, parse_decimal};
use crate::model::{ContainerSpec, Node, OperationKind};

const MAX_NESTING: usize = 64;

pub const ATTRIBUTE_KEYS: [&str; 7] = [
    "entity_name",
    "entity_type",
    "entity_quantity",
    "container_name",
    "container_type",
    "attr_name",
    "attr_type",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub byte_start: usize,
    pub byte_end: usize,
    /// 1-based.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected {expected}, found {found} at line {}", span.line)]
pub struct ParseError {
    pub span: SourceSpan,
    pub expected: String,
    pub found: String,
}

pub fn parse(text: &str) -> Result<Node, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    let start = p.pos;
    let name = p.ident("operation name")?;
    p.skip_ws();
    if p.peek() == Some(b'[') {
        return Err(p.error_at(start, p.pos, "operation at the root", &format!("container `{name}`")));
    }
    let root = p.op_after_name(name, start, 0)?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error_here("end of input"));
    }
    Ok(root)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn line_of(&self, pos: usize) -> usize {
        1 + self.src.as_bytes()[..pos].iter().filter(|&&b| b == b'\n').count()
    }

    fn error_at(&self, start: usize, end: usize, expected: &str, found: &str) -> ParseError {
        ParseError {
            span: SourceSpan {
                byte_start: start,
                byte_end: end,
                line: self.line_of(start),
            },
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    fn error_here(&self, expected: &str) -> ParseError {
        match self.src[self.pos..].chars().next() {
            Some(c) => self.error_at(self.pos, self.pos + c.len_utf8(), expected, &format!("'{}'", c.escape_default())),
            None => self.error_at(self.pos, self.pos, expected, "end of input"),
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(&format!("'{}'", byte as char)))
        }
    }

    fn ident(&mut self, what: &str) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error_here(what));
        }
        Ok(&self.src[start..self.pos])
    }

    fn op_after_name(&mut self, name: &str, start: usize, depth: usize) -> Result<Node, ParseError> {
        let kind: OperationKind = name.parse().map_err(|_| {
            self.error_at(
                start,
                start + name.len(),
                "operation name (addition, subtraction, multiplication, division, surplus, area, comparison, unittrans)",
                &format!("`{name}`"),
            )
        })?;
        if depth >= MAX_NESTING {
            return Err(self.error_at(start, start + name.len(), "at most 64 nested operations", "deeper nesting"));
        }
        self.expect(b'(')?;
        let arg1 = self.arg(depth + 1)?;
        self.expect(b',')?;
        let arg2 = self.arg(depth + 1)?;
        self.expect(b',')?;
        self.ident("result container label")?;
        self.expect(b'[')?;
        let result = self.attributes()?;
        self.expect(b')')?;
        Ok(Node::op(kind, arg1, arg2, result))
    }

    fn arg(&mut self, depth: usize) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let name = self.ident("operation or container")?;
        self.skip_ws();
        match self.peek() {
            Some(b'(') => self.op_after_name(name, start, depth),
            Some(b'[') => {
                self.pos += 1;
                Ok(Node::Leaf(self.attributes()?))
            }
            _ => Err(self.error_here("'(' or '['")),
        }
    }

    /// Attribute list after the opening `[`, through the closing `]`.
    fn attributes(&mut self) -> Result<ContainerSpec, ParseError> {
        let mut spec = ContainerSpec::default();
        let mut seen = [false; ATTRIBUTE_KEYS.len()];
        loop {
            self.skip_ws();
            let key_start = self.pos;
            let key = self.ident("attribute key")?;
            let Some(index) = ATTRIBUTE_KEYS.iter().position(|k| *k == key) else {
                return Err(self.error_at(key_start, self.pos, "attribute key", &format!("`{key}`")));
            };
            if seen[index] {
                return Err(self.error_at(key_start, self.pos, "distinct attribute key", &format!("duplicate `{key}`")));
            }
            seen[index] = true;
            self.expect(b':')?;
            let value_start = self.pos;
            let rest = &self.src[self.pos..];
            let Some(len) = rest.find([',', ']']) else {
                self.pos = self.src.len();
                return Err(self.error_here("']'"));
            };
            self.pos += len;
            let value = self.src[value_start..self.pos].trim();
            match key {
                "entity_quantity" => {
                    spec.entity_quantity = parse_decimal(value).ok_or_else(|| {
                        self.error_at(value_start, self.pos, "decimal quantity", &format!("`{value}`"))
                    })?;
                }
                "entity_name" => spec.entity_name = value.to_owned(),
                "entity_type" => spec.entity_type = value.to_owned(),
                "container_name" => spec.container_name = value.to_owned(),
                "container_type" => spec.container_type = value.to_owned(),
                "attr_name" => spec.attr_name = value.to_owned(),
                _ => spec.attr_type = value.to_owned(),
            }
            let delimiter = self.peek();
            self.pos += 1;
            if delimiter == Some(b']') {
                return Ok(spec);
            }
        }
    }
}

/// Canonical VL text: lowercase operation names, regenerated labels, all
/// seven keys in fixed order, `", "` and `": "` separators.
pub fn serialize(root: &Node) -> String {
    let mut out = String::new();
    write_node(&mut out, root, "container1").expect("writing to a String cannot fail");
    out
}

fn write_node(out: &mut String, node: &Node, label: &str) -> fmt::Result {
    match node {
        Node::Leaf(spec) => write_container(out, label, spec),
        Node::Op(op) => {
            write!(out, "{}(", op.kind)?;
            write_node(out, &op.arg1, "container1")?;
            out.push_str(", ");
            write_node(out, &op.arg2, "container2")?;
            out.push_str(", ");
            write_container(out, "result_container", &op.result)?;
            out.push(')');
            Ok(())
        }
    }
}

fn write_container(out: &mut String, label: &str, spec: &ContainerSpec) -> fmt::Result {
    write!(
        out,
        "{label}[entity_name: {}, entity_type: {}, entity_quantity: {}, container_name: {}, container_type: {}, attr_name: {}, attr_type: {}]",
        spec.entity_name,
        spec.entity_type,
        format_decimal(spec.entity_quantity),
        spec.container_name,
        spec.container_type,
        spec.attr_name,
        spec.attr_type,
    )
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}
