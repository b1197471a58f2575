//! Icon lookup by type key and id-hygienic inlining of SVG fragments.
//!
//! An icon file is scanned once into an [`IconTemplate`]: the markup inside
//! the root `<svg>` element split at every id definition and every local id
//! reference (`url(#x)`, `href="#x"`). Instantiating a template with a prefix
//! rewrites exactly those spots, so two instances never share an id.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::render::escape_xml;

/// Lowercase, trimmed, inner whitespace collapsed to single spaces.
pub fn normalize_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    for word in key.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IconError {
    #[error("no type key")]
    EmptyKey,
    #[error("icon has no root <svg> element")]
    NoSvgRoot,
    #[error("unterminated {0} in icon markup")]
    Unterminated(&'static str),
    #[error("invalid viewBox `{0}`")]
    BadViewBox(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    /// An id definition or a reference to one; gets the instance prefix
    /// when the id is defined inside the fragment.
    Id(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IconTemplate {
    pieces: Vec<Piece>,
    defined_ids: BTreeSet<String>,
    pub viewbox: [f64; 4],
}

impl IconTemplate {
    pub fn parse(svg: &str) -> Result<Self, IconError> {
        let (attrs, body) = split_root(svg)?;
        let viewbox = root_viewbox(attrs)?;
        let pieces = scan_body(body)?;
        let defined_ids = pieces
            .iter()
            .zip(pieces.iter().skip(1))
            .filter_map(|(before, piece)| match (before, piece) {
                (Piece::Text(t), Piece::Id(id)) if ends_with_id_attr(t) => Some(id.clone()),
                _ => None,
            })
            .collect();
        Ok(Self {
            pieces,
            defined_ids,
            viewbox,
        })
    }

    pub fn defined_ids(&self) -> impl Iterator<Item = &str> {
        self.defined_ids.iter().map(String::as_str)
    }

    pub fn instantiate(&self, prefix: &str) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Id(id) if self.defined_ids.contains(id) => {
                    out.push_str(prefix);
                    out.push_str(id);
                }
                Piece::Id(id) => out.push_str(id),
            }
        }
        out
    }
}

fn ends_with_id_attr(text: &str) -> bool {
    let t = text.trim_end_matches(['"', '\'']);
    let t = t.trim_end();
    let Some(t) = t.strip_suffix('=') else { return false };
    let t = t.trim_end();
    t.strip_suffix("id").is_some_and(|rest| rest.ends_with(|c: char| c.is_whitespace()))
}

/// Returns the root element's attribute text and its inner markup.
fn split_root(svg: &str) -> Result<(&str, &str), IconError> {
    let mut pos = 0;
    loop {
        let rest = &svg[pos..];
        let lt = rest.find('<').ok_or(IconError::NoSvgRoot)?;
        let tag = &rest[lt..];
        if tag.starts_with("<?") {
            pos += lt + tag.find("?>").ok_or(IconError::Unterminated("processing instruction"))? + 2;
        } else if tag.starts_with("<!--") {
            pos += lt + tag.find("-->").ok_or(IconError::Unterminated("comment"))? + 3;
        } else if tag.starts_with("<!") {
            pos += lt + tag.find('>').ok_or(IconError::Unterminated("declaration"))? + 1;
        } else if tag.starts_with("<svg") && tag[4..].starts_with(|c: char| c.is_whitespace() || c == '>' || c == '/') {
            let start = pos + lt + 4;
            let end = start + tag_end(&svg[start..]).ok_or(IconError::Unterminated("root tag"))?;
            let attrs = &svg[start..end];
            if let Some(attrs) = attrs.strip_suffix('/') {
                return Ok((attrs, ""));
            }
            let body_start = end + 1;
            let body_end = svg.rfind("</svg").filter(|&e| e >= body_start).ok_or(IconError::Unterminated("root element"))?;
            return Ok((attrs, &svg[body_start..body_end]));
        } else {
            return Err(IconError::NoSvgRoot);
        }
    }
}

/// Index of the `>` closing a start tag, skipping quoted attribute values.
fn tag_end(text: &str) -> Option<usize> {
    let mut quote = None;
    for (i, c) in text.char_indices() {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '>') => return Some(i),
            _ => {}
        }
    }
    None
}

fn attribute<'a>(attrs: &'a str, name: &str) -> Option<&'a str> {
    let mut rest = attrs;
    while let Some(i) = rest.find(name) {
        let before_ok = i == 0 || rest[..i].ends_with(|c: char| c.is_whitespace());
        let after = rest[i + name.len()..].trim_start();
        if before_ok {
            if let Some(after) = after.strip_prefix('=') {
                let after = after.trim_start();
                let q = after.chars().next()?;
                if q == '"' || q == '\'' {
                    let body = &after[1..];
                    return body.find(q).map(|end| &body[..end]);
                }
            }
        }
        rest = &rest[i + name.len()..];
    }
    None
}

fn root_viewbox(attrs: &str) -> Result<[f64; 4], IconError> {
    if let Some(vb) = attribute(attrs, "viewBox") {
        let nums: Vec<f64> = vb
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| IconError::BadViewBox(vb.to_owned()))?;
        return match nums[..] {
            [x, y, w, h] if w > 0.0 && h > 0.0 => Ok([x, y, w, h]),
            _ => Err(IconError::BadViewBox(vb.to_owned())),
        };
    }
    let dim = |name| {
        attribute(attrs, name)
            .map(|v| v.trim_end_matches("px").trim())
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v > 0.0)
    };
    Ok([0.0, 0.0, dim("width").unwrap_or(100.0), dim("height").unwrap_or(100.0)])
}

/// Splits the inner markup into literal text and id pieces.
fn scan_body(body: &str) -> Result<Vec<Piece>, IconError> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(lt) = rest.find('<') {
        split_urls(&rest[..lt], &mut text, &mut pieces);
        rest = &rest[lt..];
        if rest.starts_with("<!--") {
            let end = rest.find("-->").ok_or(IconError::Unterminated("comment"))? + 3;
            rest = &rest[end..];
            continue;
        }
        if rest.starts_with("<![CDATA[") {
            let end = rest.find("]]>").ok_or(IconError::Unterminated("CDATA section"))? + 3;
            split_urls(&rest[..end], &mut text, &mut pieces);
            rest = &rest[end..];
            continue;
        }
        if rest.starts_with("</") || rest.starts_with("<?") || rest.starts_with("<!") {
            let end = rest.find('>').ok_or(IconError::Unterminated("tag"))? + 1;
            text.push_str(&rest[..end]);
            rest = &rest[end..];
            continue;
        }
        let end = tag_end(rest).ok_or(IconError::Unterminated("tag"))? + 1;
        scan_tag(&rest[..end], &mut text, &mut pieces);
        rest = &rest[end..];
    }
    split_urls(rest, &mut text, &mut pieces);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

fn flush(text: &mut String, pieces: &mut Vec<Piece>, id: &str) {
    pieces.push(Piece::Text(core::mem::take(text)));
    pieces.push(Piece::Id(id.to_owned()));
}

fn split_urls(chunk: &str, text: &mut String, pieces: &mut Vec<Piece>) {
    let mut rest = chunk;
    while let Some(i) = rest.find("url(#") {
        let after = &rest[i + 5..];
        let Some(close) = after.find(')') else { break };
        text.push_str(&rest[..i + 5]);
        flush(text, pieces, &after[..close]);
        rest = &after[close..];
    }
    text.push_str(rest);
}

/// Start tag: rewrites `id` values, `*href="#..."` values and `url(#...)`
/// inside any attribute value.
fn scan_tag(tag: &str, text: &mut String, pieces: &mut Vec<Piece>) {
    let mut rest = tag;
    while let Some(q_start) = rest.find(['"', '\'']) {
        let quote = rest.as_bytes()[q_start] as char;
        let Some(len) = rest[q_start + 1..].find(quote) else { break };
        let head = &rest[..=q_start];
        let value = &rest[q_start + 1..q_start + 1 + len];
        let name = head[..q_start].trim_end().trim_end_matches('=').trim_end();
        let name = name.rsplit(|c: char| c.is_whitespace()).next().unwrap_or("");
        text.push_str(head);
        if name == "id" {
            flush(text, pieces, value);
        } else if (name == "href" || name.ends_with(":href")) && value.starts_with('#') {
            text.push('#');
            flush(text, pieces, &value[1..]);
        } else {
            split_urls(value, text, pieces);
        }
        text.push(quote);
        rest = &rest[q_start + 2 + len..];
    }
    text.push_str(rest);
}

/// A resolved icon ready to be inlined.
#[derive(Debug, Clone, PartialEq)]
pub struct IconFragment {
    pub markup: String,
    pub viewbox: [f64; 4],
    pub source_key: String,
    /// True when the key was missing and the placeholder was used.
    pub placeholder: bool,
}

/// Type-key to icon lookup, filled by the manifest loader.
#[derive(Debug, Clone, Default)]
pub struct IconLibrary {
    icons: BTreeMap<String, IconTemplate>,
    aliases: BTreeMap<String, String>,
}

impl IconLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an icon under its normalized key, replacing any earlier one.
    pub fn insert(&mut self, key: &str, template: IconTemplate) {
        self.icons.insert(normalize_key(key), template);
    }

    pub fn insert_alias(&mut self, alias: &str, key: &str) {
        self.aliases.insert(normalize_key(alias), normalize_key(key));
    }

    pub fn len(&self) -> usize {
        self.icons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.icons.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.lookup(&normalize_key(key)).is_some()
    }

    fn lookup(&self, normalized: &str) -> Option<&IconTemplate> {
        self.icons
            .get(normalized)
            .or_else(|| self.aliases.get(normalized).and_then(|k| self.icons.get(k)))
    }

    /// Exact normalized lookup (aliases included). Misses fall back to the
    /// built-in placeholder with `placeholder = true`.
    pub fn resolve(&self, key: &str, id_prefix: &str) -> Result<IconFragment, IconError> {
        let normalized = normalize_key(key);
        if normalized.is_empty() {
            return Err(IconError::EmptyKey);
        }
        Ok(match self.lookup(&normalized) {
            Some(template) => IconFragment {
                markup: template.instantiate(id_prefix),
                viewbox: template.viewbox,
                source_key: normalized,
                placeholder: false,
            },
            None => placeholder(&normalized),
        })
    }
}

/// Rounded rectangle labelled with the type key.
pub fn placeholder(key: &str) -> IconFragment {
    let chars = key.chars().count().max(1) as f64;
    let size = (150.0 / chars).clamp(8.0, 28.0);
    let markup = format!(
        "<rect x=\"4\" y=\"4\" width=\"92\" height=\"92\" rx=\"14\" fill=\"#F2F2F2\" stroke=\"#888888\" stroke-width=\"3\"/>\
<text x=\"50\" y=\"50\" font-size=\"{}\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#444444\">{}</text>",
        crate::decimal::format_decimal(libm::round(size)),
        escape_xml(key)
    );
    IconFragment {
        markup,
        viewbox: [0.0, 0.0, 100.0, 100.0],
        source_key: key.to_string(),
        placeholder: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORANGE: &str = r##"<?xml version="1.0"?>
<!-- demo -->
<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 64 64">
  <defs><radialGradient id="peel"><stop offset="0" stop-color="#fa0"/></radialGradient>
  <clipPath id='cut'><circle cx="32" cy="32" r="30"/></clipPath></defs>
  <circle cx="32" cy="34" r="26" fill="url(#peel)" clip-path="url(#cut)"/>
  <use href="#cut" xlink:href="#cut"/>
  <path id="leaf" d="M30 8 L40 2"/><rect fill="url(#external)"/>
</svg>"##;

    #[test]
    fn normalizes_keys() {
        assert_eq!(normalize_key("Apple "), "apple");
        assert_eq!(normalize_key("  Colorful   Flower\t"), "colorful flower");
    }

    #[test]
    fn rewrites_only_defined_ids() {
        let template = IconTemplate::parse(ORANGE).unwrap();
        assert_eq!(template.viewbox, [0.0, 0.0, 64.0, 64.0]);
        let ids: Vec<&str> = template.defined_ids().collect();
        assert_eq!(ids, ["cut", "leaf", "peel"]);
        let out = template.instantiate("p1-");
        assert!(out.contains("id=\"p1-peel\""));
        assert!(out.contains("id='p1-cut'"));
        assert!(out.contains("url(#p1-peel)"));
        assert!(out.contains("clip-path=\"url(#p1-cut)\""));
        assert!(out.contains("href=\"#p1-cut\" xlink:href=\"#p1-cut\""));
        assert!(out.contains("url(#external)"));
        assert!(!out.contains("<svg"));
    }

    #[test]
    fn viewbox_from_dimensions() {
        let t = IconTemplate::parse("<svg width=\"24px\" height=\"12\"><g/></svg>").unwrap();
        assert_eq!(t.viewbox, [0.0, 0.0, 24.0, 12.0]);
        let t = IconTemplate::parse("<svg/>").unwrap();
        assert_eq!(t.instantiate("x"), "");
    }

    #[test]
    fn rejects_non_svg() {
        assert_eq!(IconTemplate::parse("<html></html>"), Err(IconError::NoSvgRoot));
        assert!(matches!(IconTemplate::parse("<svg viewBox=\"0 0 a b\"></svg>"), Err(IconError::BadViewBox(_))));
    }

    #[test]
    fn resolve_and_fallback() {
        let mut lib = IconLibrary::new();
        lib.insert("Flower", IconTemplate::parse(ORANGE).unwrap());
        lib.insert_alias("flowers", "flower");
        let hit = lib.resolve("flower ", "a-").unwrap();
        assert!(!hit.placeholder);
        assert_eq!(hit.source_key, "flower");
        assert!(!lib.resolve("Flowers", "a-").unwrap().placeholder);
        let miss = lib.resolve("gerbil", "a-").unwrap();
        assert!(miss.placeholder);
        assert!(miss.markup.contains(">gerbil</text>"));
        assert_eq!(lib.resolve("  ", "a-"), Err(IconError::EmptyKey));
    }

    #[test]
    fn placeholder_escapes_text() {
        assert!(placeholder("a<b").markup.contains("a&lt;b"));
    }
}
