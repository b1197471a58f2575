#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use m2v_core::icons::{IconLibrary, IconTemplate};
use m2v_core::metrics::LabeledTree;
use m2v_core::{ContainerSpec, Node, OperationKind};
use proptest::prelude::*;
use proptest::sample::Index;

pub const CORPUS: &str = include_str!("../fixtures/corpus.vl");

/// `(id, vl_text)` pairs from the fixture corpus, in file order.
pub fn corpus() -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut lines = CORPUS.lines().filter(|l| !l.trim().is_empty());
    while let Some(head) = lines.next() {
        let id = head.trim().trim_start_matches('[').trim_end_matches(']').to_string();
        let text = lines.next().expect("fixture id without a VL line").to_string();
        out.push((id, text));
    }
    out
}

pub fn fixture(id: &str) -> Node {
    let (_, text) = corpus().into_iter().find(|(k, _)| k == id).unwrap_or_else(|| panic!("no fixture {id}"));
    m2v_core::parse(&text).unwrap()
}

const ORANGE: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64">
  <defs><radialGradient id="peel" cx="0.4" cy="0.35" r="0.7"><stop offset="0" stop-color="#FFC04D"/><stop offset="1" stop-color="#F08A00"/></radialGradient>
  <clipPath id="round"><circle cx="32" cy="36" r="26"/></clipPath></defs>
  <rect x="0" y="0" width="64" height="64" fill="url(#peel)" clip-path="url(#round)"/>
  <path d="M32 10 C36 2 44 2 46 6 C40 8 36 9 32 10 Z" fill="#3C8D2F"/>
</svg>"##;

const GIRL: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64"><circle cx="32" cy="20" r="12" fill="#F2C6A0"/><path d="M14 62 L22 36 L42 36 L50 62 Z" fill="#E55381"/></svg>"##;

const FLOWER: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64"><defs><linearGradient id="petal"><stop offset="0" stop-color="#FF7AB6"/><stop offset="1" stop-color="#C2185B"/></linearGradient></defs><g fill="url(#petal)"><circle cx="32" cy="16" r="10"/><circle cx="16" cy="30" r="10"/><circle cx="48" cy="30" r="10"/><circle cx="32" cy="42" r="10"/></g><circle cx="32" cy="29" r="7" fill="#FFD54F"/></svg>"##;

/// A small library whose orange and flower icons define internal ids.
pub fn demo_icons() -> IconLibrary {
    let mut lib = IconLibrary::new();
    lib.insert("orange", IconTemplate::parse(ORANGE).unwrap());
    lib.insert("girl", IconTemplate::parse(GIRL).unwrap());
    lib.insert("flower", IconTemplate::parse(FLOWER).unwrap());
    lib
}

/// Elements whose `class` attribute equals `class`.
pub fn count_class(svg: &str, class: &str) -> usize {
    let doc = roxmltree::Document::parse(svg).expect("well-formed svg");
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
}

pub fn texts_with_class(svg: &str, class: &str) -> Vec<String> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed svg");
    doc.descendants()
        .filter(|n| n.attribute("class") == Some(class))
        .map(|n| n.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect::<String>())
        .collect()
}

/// Strict XML parse, unique ids, and every `url(#..)` / `href="#.."` resolves.
pub fn check_svg(svg: &str) -> Result<(), String> {
    let doc = roxmltree::Document::parse(svg).map_err(|e| e.to_string())?;
    let mut ids = BTreeSet::new();
    for node in doc.descendants().filter(|n| n.is_element()) {
        if let Some(id) = node.attribute("id") {
            if !ids.insert(id.to_string()) {
                return Err(format!("duplicate id {id}"));
            }
        }
    }
    for node in doc.descendants().filter(|n| n.is_element()) {
        for attr in node.attributes() {
            let value = attr.value();
            if attr.name() == "href" && value.starts_with('#') && !ids.contains(&value[1..]) {
                return Err(format!("unresolved href {value}"));
            }
            let mut rest = value;
            while let Some(i) = rest.find("url(#") {
                let after = &rest[i + 5..];
                let end = after.find(')').ok_or("unterminated url(")?;
                if !ids.contains(&after[..end]) {
                    return Err(format!("unresolved url(#{})", &after[..end]));
                }
                rest = &after[end..];
            }
            if (value.contains("http://") || value.contains("https://")) && attr.name() != "xmlns" {
                return Err(format!("external reference {value}"));
            }
        }
    }
    Ok(())
}

// ---- tree edit distance oracle ----

struct Info {
    labels: Vec<String>,
    /// `ancestors[i]` holds every proper ancestor of node `i`.
    ancestors: Vec<BTreeSet<usize>>,
}

fn info(tree: &LabeledTree) -> Info {
    let nodes = tree.nodes();
    let mut parent = vec![None; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for &c in &n.children {
            parent[c] = Some(i);
        }
    }
    let ancestors = (0..nodes.len())
        .map(|i| {
            let mut set = BTreeSet::new();
            let mut cur = parent[i];
            while let Some(p) = cur {
                set.insert(p);
                cur = parent[p];
            }
            set
        })
        .collect();
    Info {
        labels: nodes.iter().map(|n| n.label.clone()).collect(),
        ancestors,
    }
}

fn is_ancestor(t: &Info, a: usize, b: usize) -> bool {
    t.ancestors[b].contains(&a)
}

/// Left of in postorder: earlier and not an ancestor-descendant pair.
fn is_left_of(t: &Info, a: usize, b: usize) -> bool {
    a < b && !is_ancestor(t, b, a)
}

fn compatible(a: &Info, b: &Info, (i1, j1): (usize, usize), (i2, j2): (usize, usize)) -> bool {
    is_ancestor(a, i1, i2) == is_ancestor(b, j1, j2)
        && is_ancestor(a, i2, i1) == is_ancestor(b, j2, j1)
        && is_left_of(a, i1, i2) == is_left_of(b, j1, j2)
        && is_left_of(a, i2, i1) == is_left_of(b, j2, j1)
}

/// Minimum edit-script cost, found by enumerating every valid ordered
/// mapping between the two trees. A mapping M costs relabels on M plus one
/// deletion per unmapped node of `a` and one insertion per unmapped node of
/// `b`; the cheapest valid mapping is the cheapest edit script.
pub fn brute_force_ted(a: &LabeledTree, b: &LabeledTree) -> usize {
    let (ia, ib) = (info(a), info(b));
    let mut best = a.len() + b.len();
    let mut pairs = Vec::new();
    let mut used = vec![false; b.len()];
    search(&ia, &ib, 0, &mut pairs, &mut used, &mut best);
    best
}

fn search(a: &Info, b: &Info, i: usize, pairs: &mut Vec<(usize, usize)>, used: &mut [bool], best: &mut usize) {
    if i == a.labels.len() {
        let relabel = pairs.iter().filter(|&&(x, y)| a.labels[x] != b.labels[y]).count();
        let cost = relabel + (a.labels.len() - pairs.len()) + (b.labels.len() - pairs.len());
        *best = (*best).min(cost);
        return;
    }
    search(a, b, i + 1, pairs, used, best);
    for j in 0..b.labels.len() {
        if used[j] || !pairs.iter().all(|&p| compatible(a, b, p, (i, j))) {
            continue;
        }
        used[j] = true;
        pairs.push((i, j));
        search(a, b, i + 1, pairs, used, best);
        pairs.pop();
        used[j] = false;
    }
}

// ---- generators ----

/// Ordered trees of 1..=max_nodes nodes over a three-letter alphabet.
pub fn arb_labeled_tree(max_nodes: usize) -> impl Strategy<Value = LabeledTree> {
    (1..=max_nodes).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), n),
            prop::collection::vec(any::<Index>(), n.saturating_sub(1)),
        )
            .prop_map(|(labels, parents)| {
                let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (k, idx) in parents.iter().enumerate() {
                    children.entry(idx.index(k + 1)).or_default().push(k + 1);
                }
                build(0, &labels, &children)
            })
    })
}

fn build(i: usize, labels: &[&str], children: &BTreeMap<usize, Vec<usize>>) -> LabeledTree {
    let kids = children.get(&i).map(|c| c.iter().map(|&k| build(k, labels, children)).collect()).unwrap_or_default();
    LabeledTree::node(labels[i], kids)
}

const NAMES: [&str; 6] = ["orange", "apple", "colorful flower", "penny", "box", "paper clip"];
const TYPES: [&str; 5] = ["orange", "apple", "flower", "penny", "box"];
const HOLDERS: [&str; 5] = ["", "Janet", "Sharon", "jar", "Mrs. Hilt"];
const HOLDER_TYPES: [&str; 4] = ["", "girl", "boy", "jar"];

pub fn arb_quantity() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => (0u32..=12).prop_map(f64::from),
        1 => (13u32..=120).prop_map(f64::from),
        1 => prop::sample::select(vec![0.01, 0.05, 0.25, 0.5, 1.5, 2.5]),
    ]
}

pub fn arb_spec() -> impl Strategy<Value = ContainerSpec> {
    (
        prop::sample::select(NAMES.to_vec()),
        prop::sample::select(TYPES.to_vec()),
        arb_quantity(),
        prop::sample::select(HOLDERS.to_vec()),
        prop::sample::select(HOLDER_TYPES.to_vec()),
        prop::sample::select(vec![("", ""), ("morning", "morning"), ("left", ""), ("red", "color")]),
    )
        .prop_map(|(name, kind, q, holder, holder_type, (an, at))| {
            ContainerSpec::new(name, kind, q).with_container(holder, holder_type).with_attr(an, at)
        })
}

pub fn arb_kind() -> impl Strategy<Value = OperationKind> {
    prop::sample::select(OperationKind::ALL.to_vec())
}

/// Valid VL trees: an operation at the root, nesting up to `depth` levels.
pub fn arb_vl(depth: u32) -> impl Strategy<Value = Node> {
    let leaf = arb_spec().prop_map(Node::leaf);
    let node = leaf.prop_recursive(depth.saturating_sub(1), 16, 2, |inner| {
        (arb_kind(), inner.clone(), inner, arb_spec()).prop_map(|(k, a, b, r)| Node::op(k, a, b, r))
    });
    (arb_kind(), node.clone(), node, arb_spec()).prop_map(|(k, a, b, r)| Node::op(k, a, b, r))
}

/// Trees restricted to the given kinds with small integral quantities, so
/// every operation has a drawable intuitive layout.
pub fn arb_drawable(kinds: Vec<OperationKind>) -> impl Strategy<Value = Node> {
    let spec = (arb_spec(), 1u32..=10).prop_map(|(s, q)| ContainerSpec {
        entity_quantity: f64::from(q),
        ..s
    })
    .boxed();
    let leaf = spec.clone().prop_map(Node::leaf);
    let k = prop::sample::select(kinds);
    let node = leaf.prop_recursive(1, 8, 2, {
        let k = k.clone();
        let spec = spec.clone();
        move |inner| (k.clone(), inner.clone(), inner, spec.clone()).prop_map(|(k, a, b, r)| Node::op(k, a, b, r))
    });
    (k, node.clone(), node, spec).prop_map(|(k, a, b, r)| Node::op(k, a, b, r))
}

/// Renames every container's names and types without touching quantities.
pub fn rename(tree: &Node, suffix: &str) -> Node {
    tree.map_containers(&mut |s: &ContainerSpec| ContainerSpec {
        entity_name: format!("{}{suffix}", s.entity_name),
        container_type: format!("{}{suffix}", s.container_type),
        ..s.clone()
    })
}
