//! Evaluation of predicted VLs against gold: tree edit distance and logic match.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::Serialize;

use crate::decimal::{canonical_bits, format_decimal};
use crate::model::{ContainerSpec, Node};
use crate::parser::{parse, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: String,
    /// Indices of the children in `LabeledTree::nodes`, left to right.
    pub children: Vec<usize>,
}

/// Ordered labelled tree stored in left-to-right postorder; the root is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    nodes: Vec<TreeNode>,
}

impl LabeledTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self::node(label, Vec::new())
    }

    pub fn node(label: impl Into<String>, children: Vec<LabeledTree>) -> Self {
        let mut nodes = Vec::new();
        let mut roots = Vec::new();
        for child in children {
            let offset = nodes.len();
            nodes.extend(child.nodes.into_iter().map(|mut n| {
                n.children.iter_mut().for_each(|c| *c += offset);
                n
            }));
            roots.push(nodes.len() - 1);
        }
        nodes.push(TreeNode {
            label: label.into(),
            children: roots,
        });
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &TreeNode {
        self.nodes.last().expect("a labeled tree has at least one node")
    }

    /// Postorder index of each node's leftmost leaf descendant.
    fn leftmost_leaves(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let l = match node.children.first() {
                Some(&first) => out[first],
                None => i,
            };
            out.push(l);
        }
        out
    }
}

/// Canonical container label: the seven attribute values, trimmed and
/// lowercased, joined by `|`.
pub fn container_label(spec: &ContainerSpec) -> String {
    let norm = |s: &str| s.trim().to_lowercase();
    format!(
        "{}|{}|{}|{}|{}|{}|{}",
        norm(&spec.entity_name),
        norm(&spec.entity_type),
        format_decimal(spec.entity_quantity),
        norm(&spec.container_name),
        norm(&spec.container_type),
        norm(&spec.attr_name),
        norm(&spec.attr_type)
    )
}

/// Operations become parents labelled with their name; children are
/// `(arg1, arg2, result)`, with the result as a leaf.
pub fn to_labeled_tree(root: &Node) -> LabeledTree {
    match root {
        Node::Leaf(spec) => LabeledTree::leaf(container_label(spec)),
        Node::Op(op) => LabeledTree::node(
            op.kind.name(),
            alloc::vec![
                to_labeled_tree(&op.arg1),
                to_labeled_tree(&op.arg2),
                LabeledTree::leaf(container_label(&op.result)),
            ],
        ),
    }
}

/// Zhang–Shasha tree edit distance with unit insert, delete and relabel costs.
pub fn tree_edit_distance(a: &LabeledTree, b: &LabeledTree) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return n + m;
    }
    let la = a.leftmost_leaves();
    let lb = b.leftmost_leaves();
    let mut tree_dist = alloc::vec![alloc::vec![0usize; m]; n];
    for &i in &keyroots(&la) {
        for &j in &keyroots(&lb) {
            forest_dist(a, b, &la, &lb, i, j, &mut tree_dist);
        }
    }
    tree_dist[n - 1][m - 1]
}

/// Nodes with no ancestor sharing their leftmost leaf, ascending.
fn keyroots(leftmost: &[usize]) -> Vec<usize> {
    let mut highest: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &l) in leftmost.iter().enumerate() {
        highest.insert(l, i);
    }
    let mut roots: Vec<usize> = highest.into_values().collect();
    roots.sort_unstable();
    roots
}

fn forest_dist(
    a: &LabeledTree,
    b: &LabeledTree,
    la: &[usize],
    lb: &[usize],
    i: usize,
    j: usize,
    tree_dist: &mut [Vec<usize>],
) {
    let (ai, bj) = (la[i], lb[j]);
    let rows = i - ai + 2;
    let cols = j - bj + 2;
    // fd[x][y]: distance between forests a[ai..ai+x) and b[bj..bj+y)
    let mut fd = alloc::vec![alloc::vec![0usize; cols]; rows];
    for x in 1..rows {
        fd[x][0] = fd[x - 1][0] + 1;
    }
    for y in 1..cols {
        fd[0][y] = fd[0][y - 1] + 1;
    }
    for x in 1..rows {
        let i1 = ai + x - 1;
        for y in 1..cols {
            let j1 = bj + y - 1;
            let delete = fd[x - 1][y] + 1;
            let insert = fd[x][y - 1] + 1;
            if la[i1] == ai && lb[j1] == bj {
                let relabel = usize::from(a.nodes[i1].label != b.nodes[j1].label);
                let best = delete.min(insert).min(fd[x - 1][y - 1] + relabel);
                fd[x][y] = best;
                tree_dist[i1][j1] = best;
            } else {
                let px = la[i1] - ai;
                let py = lb[j1] - bj;
                fd[x][y] = delete.min(insert).min(fd[px][py] + tree_dist[i1][j1]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LogicMatchOptions {
    /// Also compare result-container quantities.
    pub include_result: bool,
}

/// Same operation skeleton and the same multiset of argument quantities.
/// Names and types are ignored.
pub fn logic_match(pred: &Node, gold: &Node) -> bool {
    logic_match_with(pred, gold, LogicMatchOptions::default())
}

pub fn logic_match_with(pred: &Node, gold: &Node, opts: LogicMatchOptions) -> bool {
    same_skeleton(pred, gold) && quantity_multiset(pred, opts) == quantity_multiset(gold, opts)
}

fn same_skeleton(a: &Node, b: &Node) -> bool {
    match (a, b) {
        (Node::Leaf(_), Node::Leaf(_)) => true,
        (Node::Op(x), Node::Op(y)) => x.kind == y.kind && same_skeleton(&x.arg1, &y.arg1) && same_skeleton(&x.arg2, &y.arg2),
        _ => false,
    }
}

fn quantity_multiset(node: &Node, opts: LogicMatchOptions) -> Vec<u64> {
    let mut out: Vec<u64> = node.arg_leaves().iter().map(|s| canonical_bits(s.entity_quantity)).collect();
    if opts.include_result {
        out.extend(
            node.containers()
                .into_iter()
                .filter(|(path, _)| matches!(path.steps().last(), Some(crate::path::Step::Result)))
                .map(|(_, s)| canonical_bits(s.entity_quantity)),
        );
    }
    out.sort_unstable();
    out
}

/// One row of an evaluation dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub id: String,
    /// `None` when generation produced nothing.
    pub pred_vl: Option<String>,
    pub gold_vl: String,
    pub grade: String,
    pub question_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemResult {
    pub id: String,
    pub grade: String,
    pub question_type: String,
    pub parse_ok: bool,
    /// Absent when the prediction did not parse.
    pub edit_distance: Option<usize>,
    pub logic_match: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("gold VL for item `{id}` does not parse: {error}")]
    MalformedGold { id: String, error: ParseError },
}

pub fn evaluate_item(item: &DatasetItem, opts: LogicMatchOptions) -> Result<ItemResult, MetricsError> {
    let gold = parse(&item.gold_vl).map_err(|error| MetricsError::MalformedGold {
        id: item.id.clone(),
        error,
    })?;
    let pred = match item.pred_vl.as_deref() {
        Some(text) => parse(text).map_err(|e| e.to_string()),
        None => Err("no prediction".to_string()),
    };
    let mut result = ItemResult {
        id: item.id.clone(),
        grade: item.grade.clone(),
        question_type: item.question_type.clone(),
        parse_ok: false,
        edit_distance: None,
        logic_match: false,
        parse_error: None,
    };
    match pred {
        Ok(pred) => {
            result.parse_ok = true;
            result.edit_distance = Some(tree_edit_distance(&to_labeled_tree(&pred), &to_labeled_tree(&gold)));
            result.logic_match = logic_match_with(&pred, &gold, opts);
        }
        Err(e) => result.parse_error = Some(e),
    }
    Ok(result)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub items: usize,
    pub parsed: usize,
    pub parse_failures: usize,
    pub logic_matches: usize,
    pub total_edit_distance: usize,
    /// Over parsed items only; `None` when nothing parsed.
    pub mean_edit_distance: Option<f64>,
    /// Percent over all items, parse failures included.
    pub logic_match_ratio: f64,
}

impl Aggregate {
    fn of<'a>(items: impl IntoIterator<Item = &'a ItemResult>) -> Self {
        let mut agg = Aggregate::default();
        for item in items {
            agg.items += 1;
            if item.parse_ok {
                agg.parsed += 1;
            } else {
                agg.parse_failures += 1;
            }
            agg.logic_matches += usize::from(item.logic_match);
            agg.total_edit_distance += item.edit_distance.unwrap_or(0);
        }
        agg.mean_edit_distance = (agg.parsed > 0).then(|| agg.total_edit_distance as f64 / agg.parsed as f64);
        agg.logic_match_ratio = if agg.items == 0 {
            0.0
        } else {
            100.0 * agg.logic_matches as f64 / agg.items as f64
        };
        agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stratum {
    pub grade: String,
    pub question_type: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_item: Vec<ItemResult>,
    pub aggregate: Aggregate,
    /// Grouped by `(grade, question_type)`, sorted by that key.
    pub strata: Vec<Stratum>,
}

impl EvalReport {
    pub fn from_items(per_item: Vec<ItemResult>) -> Self {
        let aggregate = Aggregate::of(&per_item);
        let mut groups: BTreeMap<(&str, &str), Vec<&ItemResult>> = BTreeMap::new();
        for item in &per_item {
            groups.entry((&item.grade, &item.question_type)).or_default().push(item);
        }
        let strata = groups
            .into_iter()
            .map(|((grade, question_type), items)| Stratum {
                grade: grade.to_string(),
                question_type: question_type.to_string(),
                aggregate: Aggregate::of(items),
            })
            .collect();
        Self {
            per_item,
            aggregate,
            strata,
        }
    }

    /// Aligned text table with `Edit Dist` and `LM Ratio` columns.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, &Aggregate)> = alloc::vec![("all".to_string(), &self.aggregate)];
        for s in &self.strata {
            let grade = if s.grade.is_empty() { "-" } else { &s.grade };
            let kind = if s.question_type.is_empty() { "-" } else { &s.question_type };
            rows.push((format!("{grade} / {kind}"), &s.aggregate));
        }
        let width = rows.iter().map(|(name, _)| name.chars().count()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>8}  {:>9}  {:>8}",
            "Subset", "Items", "Parsed", "Failures", "Edit Dist", "LM Ratio"
        );
        for (name, agg) in rows {
            let mean = agg.mean_edit_distance.map_or_else(|| "-".to_string(), |m| format!("{m:.2}"));
            let _ = writeln!(
                out,
                "{name:<width$}  {:>6}  {:>6}  {:>8}  {mean:>9}  {:>8.2}",
                agg.items, agg.parsed, agg.parse_failures, agg.logic_match_ratio
            );
        }
        out
    }
}

/// Scores every item. A gold VL that fails to parse aborts the run.
pub fn evaluate_dataset(items: &[DatasetItem], opts: LogicMatchOptions) -> Result<EvalReport, MetricsError> {
    let per_item = items.iter().map(|item| evaluate_item(item, opts)).collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_items(per_item))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OperationKind;

    fn t(label: &str, children: Vec<LabeledTree>) -> LabeledTree {
        LabeledTree::node(label, children)
    }

    fn l(label: &str) -> LabeledTree {
        LabeledTree::leaf(label)
    }

    #[test]
    fn postorder_layout() {
        let tree = t("a", alloc::vec![t("b", alloc::vec![l("c")]), l("d")]);
        let labels: Vec<&str> = tree.nodes().iter().map(|n| n.label.as_str()).collect();
        assert_eq!(labels, ["c", "b", "d", "a"]);
        assert_eq!(tree.root().children, [1, 2]);
        assert_eq!(tree.leftmost_leaves(), [0, 0, 2, 0]);
        assert_eq!(keyroots(&tree.leftmost_leaves()), [2, 3]);
    }

    #[test]
    fn classic_example() {
        // Zhang & Shasha's f(d(a c(b)) e) vs f(c(d(a b)) e): distance 2.
        let a = t("f", alloc::vec![t("d", alloc::vec![l("a"), t("c", alloc::vec![l("b")])]), l("e")]);
        let b = t("f", alloc::vec![t("c", alloc::vec![t("d", alloc::vec![l("a"), l("b")])]), l("e")]);
        assert_eq!(tree_edit_distance(&a, &b), 2);
        assert_eq!(tree_edit_distance(&b, &a), 2);
    }

    #[test]
    fn simple_distances() {
        assert_eq!(tree_edit_distance(&l("a"), &l("a")), 0);
        assert_eq!(tree_edit_distance(&l("a"), &l("b")), 1);
        assert_eq!(tree_edit_distance(&l("a"), &t("a", alloc::vec![l("b"), l("c")])), 2);
        assert_eq!(tree_edit_distance(&t("a", alloc::vec![l("b"), l("c")]), &t("a", alloc::vec![l("c"), l("b")])), 2);
    }

    fn leaf(q: f64) -> Node {
        Node::leaf(ContainerSpec::new("orange", "orange", q).with_container("Janet", "girl"))
    }

    #[test]
    fn vl_tree_shape() {
        let tree = Node::op(OperationKind::Addition, leaf(9.0), leaf(7.0), ContainerSpec::new("orange", "orange", 16.0));
        let labeled = to_labeled_tree(&tree);
        assert_eq!(labeled.len(), 4);
        assert_eq!(labeled.root().label, "addition");
        assert_eq!(labeled.root().children.len(), 3);
        assert_eq!(labeled.nodes()[0].label, "orange|orange|9|janet|girl||");
    }

    #[test]
    fn quantity_change_costs_one() {
        let a = Node::op(OperationKind::Addition, leaf(9.0), leaf(7.0), ContainerSpec::default());
        let b = Node::op(OperationKind::Addition, leaf(8.0), leaf(7.0), ContainerSpec::default());
        assert_eq!(tree_edit_distance(&to_labeled_tree(&a), &to_labeled_tree(&b)), 1);
        assert!(!logic_match(&a, &b));
        assert!(logic_match(&a, &a));
    }

    #[test]
    fn result_quantities_only_with_flag() {
        let a = Node::op(OperationKind::Addition, leaf(9.0), leaf(7.0), ContainerSpec::new("o", "o", 16.0));
        let b = Node::op(OperationKind::Addition, leaf(9.0), leaf(7.0), ContainerSpec::new("o", "o", 15.0));
        assert!(logic_match(&a, &b));
        assert!(!logic_match_with(&a, &b, LogicMatchOptions { include_result: true }));
    }

    #[test]
    fn argument_order_is_a_multiset() {
        let a = Node::op(OperationKind::Addition, leaf(9.0), leaf(7.0), ContainerSpec::default());
        let b = Node::op(OperationKind::Addition, leaf(7.0), leaf(9.0), ContainerSpec::default());
        assert!(logic_match(&a, &b));
        let c = Node::op(OperationKind::Subtraction, leaf(9.0), leaf(7.0), ContainerSpec::default());
        assert!(!logic_match(&a, &c));
    }

    #[test]
    fn table_has_edit_dist_and_lm_columns() {
        let items = alloc::vec![ItemResult {
            id: "1".into(),
            grade: "1".into(),
            question_type: "addition".into(),
            parse_ok: true,
            edit_distance: Some(1),
            logic_match: false,
            parse_error: None,
        }];
        let table = EvalReport::from_items(items).to_table();
        assert!(table.contains("Edit Dist"));
        assert!(table.contains("LM Ratio"));
        assert!(table.contains("1 / addition"));
    }
}
