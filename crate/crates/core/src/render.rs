//! SVG materialisation of a [`LayoutPlan`].
//!
//! Output is byte-deterministic: items are written in plan order (boxes,
//! glyphs, marks) and icon id prefixes come from the glyph index. Every
//! drawn group carries a stable `m2v-*` class so callers can count items
//! without parsing geometry.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::decimal::format_decimal;
use crate::icons::{placeholder, IconError, IconFragment, IconLibrary};
use crate::layout::{
    self, BoxKind, Glyph, GlyphContent, GlyphRole, LayoutError, LayoutPlan, Mark, MarkKind, PlanBox, PlanViolation,
    Rect, StyleConfig, VisualStyle,
};
use crate::model::Node;
use crate::path::Step;

pub const FONT_FAMILY: &str = "Helvetica, Arial, sans-serif";

#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    pub text: String,
    pub width: f64,
    pub height: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("invalid layout plan: {0}")]
    InvalidPlan(#[from] PlanViolation),
}

/// Escapes text for use in XML character data and attribute values.
pub fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn num(v: f64) -> String {
    format_decimal(libm::round(v * 100.0) / 100.0)
}

pub fn render(plan: &LayoutPlan, icons: &IconLibrary, cfg: &StyleConfig) -> Result<SvgDocument, RenderError> {
    plan.check()?;
    let mut svg = Svg {
        out: String::new(),
        warnings: Vec::new(),
        cfg,
        icons,
    };
    let (w, h) = (num(plan.canvas.width), num(plan.canvas.height));
    svg.line(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"{FONT_FAMILY}\">"
    ));
    svg.line(format!(
        "<rect class=\"m2v-background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#FFFFFF\"/>"
    ));
    for b in &plan.boxes {
        svg.plan_box(b);
    }
    for (index, g) in plan.glyphs.iter().enumerate() {
        svg.glyph(index, g);
    }
    for m in &plan.marks {
        svg.mark(m);
    }
    svg.line(String::from("</svg>"));
    Ok(SvgDocument {
        text: svg.out,
        width: plan.canvas.width,
        height: plan.canvas.height,
        warnings: svg.warnings,
    })
}

struct Svg<'a> {
    out: String,
    warnings: Vec<String>,
    cfg: &'a StyleConfig,
    icons: &'a IconLibrary,
}

impl Svg<'_> {
    fn line(&mut self, text: String) {
        self.out.push_str(&text);
        self.out.push('\n');
    }

    fn warn(&mut self, message: String) {
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }

    fn plan_box(&mut self, b: &PlanBox) {
        let stroke = &self.cfg.palette.stroke;
        let r = b.rect;
        let (class, style) = match b.kind {
            BoxKind::Container => ("m2v-container", format!("rx=\"8\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\"")),
            BoxKind::Enclosure => ("m2v-enclosure", format!("rx=\"12\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"4\"")),
            BoxKind::Group if b.path.is_root() => ("m2v-group", String::from("fill=\"none\" stroke=\"none\"")),
            BoxKind::Group if matches!(b.path.steps().last(), Some(Step::Group(_))) => {
                ("m2v-group", format!("rx=\"8\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\""))
            }
            BoxKind::Group => (
                "m2v-group",
                String::from("rx=\"10\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\""),
            ),
            BoxKind::ScalePan => (
                "m2v-scale-pan",
                format!("rx=\"6\" fill=\"#F6F2FB\" stroke=\"{stroke}\" stroke-width=\"2\""),
            ),
        };
        self.line(format!(
            "<rect class=\"{class}\" data-path=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {style}/>",
            b.path,
            num(r.x),
            num(r.y),
            num(r.w),
            num(r.h)
        ));
    }

    fn resolve(&mut self, key: &str, prefix: &str) -> IconFragment {
        match self.icons.resolve(key, prefix) {
            Ok(fragment) => {
                if fragment.placeholder {
                    self.warn(format!("no icon for type `{}`; drew a placeholder", fragment.source_key));
                }
                fragment
            }
            Err(IconError::EmptyKey) | Err(_) => {
                self.warn(String::from("glyph without a type key; drew a placeholder"));
                placeholder("?")
            }
        }
    }

    fn icon(&mut self, class: &str, index: usize, g: &Glyph, key: &str) {
        let prefix = format!("m2v{index}-");
        let fragment = self.resolve(key, &prefix);
        let r = if g.stretch { g.rect } else { g.rect.inset(g.rect.w.min(g.rect.h) * 0.06) };
        let [vx, vy, vw, vh] = fragment.viewbox;
        let aspect = if g.stretch { "none" } else { "xMidYMid meet" };
        self.line(format!(
            "<g class=\"{class}\" data-path=\"{}\" data-type=\"{}\"><svg x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" viewBox=\"{} {} {} {}\" preserveAspectRatio=\"{aspect}\">{}</svg></g>",
            g.path,
            escape_xml(&fragment.source_key),
            num(r.x),
            num(r.y),
            num(r.w),
            num(r.h),
            num(vx),
            num(vy),
            num(vw),
            num(vh),
            fragment.markup
        ));
    }

    fn glyph(&mut self, index: usize, g: &Glyph) {
        let r = g.rect;
        let (cx, cy) = (r.x + r.w / 2.0, r.y + r.h / 2.0);
        match (&g.content, g.role) {
            (GlyphContent::Icon(key), GlyphRole::Entity) => self.icon("m2v-entity", index, g, key),
            (GlyphContent::Icon(key), _) => self.icon("m2v-header-icon", index, g, key),
            (GlyphContent::Text(text), GlyphRole::Overlay) => {
                let size = (r.h * 0.45).min(r.w * 1.6 / text.chars().count().max(1) as f64);
                self.line(format!(
                    "<text class=\"m2v-overlay\" data-path=\"{}\" x=\"{}\" y=\"{}\" font-size=\"{}\" font-weight=\"bold\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#000000\" stroke=\"#FFFFFF\" stroke-width=\"4\" paint-order=\"stroke\">{}</text>",
                    g.path,
                    num(cx),
                    num(cy),
                    num(size),
                    escape_xml(text)
                ));
            }
            (GlyphContent::Text(text), _) => {
                self.line(format!(
                    "<text class=\"m2v-label\" data-path=\"{}\" x=\"{}\" y=\"{}\" font-size=\"{}\" dominant-baseline=\"central\" fill=\"#000000\">{}</text>",
                    g.path,
                    num(r.x),
                    num(cy),
                    num(self.cfg.font_size),
                    escape_xml(text)
                ));
            }
        }
    }

    fn mark(&mut self, m: &Mark) {
        let r: Rect = m.rect;
        let (cx, cy) = (r.x + r.w / 2.0, r.y + r.h / 2.0);
        let class = format!("m2v-mark-{}", m.kind.name());
        let owner = &m.owner;
        let accent = self.cfg.palette.question.clone();
        let body = match m.kind {
            MarkKind::Plus | MarkKind::Minus | MarkKind::Times | MarkKind::Divide | MarkKind::Equals => format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"{}\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#000000\">{}</text>",
                num(cx),
                num(cy),
                num(self.cfg.font_size * 2.0),
                m.kind.symbol().unwrap_or_default()
            ),
            MarkKind::QuestionCircle => format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{accent}\"/><text x=\"{}\" y=\"{}\" font-size=\"{}\" font-weight=\"bold\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#FFFFFF\">?</text>",
                num(cx),
                num(cy),
                num(r.w.min(r.h) / 2.0),
                num(cx),
                num(cy),
                num(r.h * 0.6)
            ),
            MarkKind::CrossOut => {
                let red = &self.cfg.palette.cross_out;
                let i = r.inset(r.w.min(r.h) * 0.08);
                format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{red}\" stroke-width=\"4\" stroke-linecap=\"round\"/><line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{red}\" stroke-width=\"4\" stroke-linecap=\"round\"/>",
                    num(i.x),
                    num(i.y),
                    num(i.right()),
                    num(i.bottom()),
                    num(i.right()),
                    num(i.y),
                    num(i.x),
                    num(i.bottom())
                )
            }
            MarkKind::ScaleBeam => {
                let stroke = &self.cfg.palette.stroke;
                let beam_y = r.y + 3.0;
                let half = r.h * 0.4;
                format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"6\" stroke-linecap=\"round\"/><polygon points=\"{},{} {},{} {},{}\" fill=\"#8E8E8E\" stroke=\"{stroke}\" stroke-width=\"2\"/><line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"4\"/><line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"4\"/>",
                    num(r.x),
                    num(beam_y),
                    num(r.right()),
                    num(beam_y),
                    num(cx),
                    num(beam_y),
                    num(cx - half),
                    num(r.bottom()),
                    num(cx + half),
                    num(r.bottom()),
                    num(r.x),
                    num(r.y),
                    num(r.x),
                    num(beam_y + 8.0),
                    num(r.right()),
                    num(r.y),
                    num(r.right()),
                    num(beam_y + 8.0)
                )
            }
            MarkKind::UnitBubble => {
                let size = (r.h * 0.6).min(r.w * 1.7 / m.payload.chars().count().max(1) as f64);
                format!(
                    "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" fill=\"{accent}\"/><text x=\"{}\" y=\"{}\" font-size=\"{}\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"#FFFFFF\">{}</text>",
                    num(cx),
                    num(cy),
                    num(r.w / 2.0),
                    num(r.h / 2.0),
                    num(cx),
                    num(cy),
                    num(size),
                    escape_xml(&m.payload)
                )
            }
        };
        let mut line = String::new();
        let _ = write!(line, "<g class=\"{class}\" data-owner=\"{owner}\">{body}</g>");
        self.line(line);
    }
}

/// Why one style of a pair could not be produced.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StyleError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Both visuals for one tree. Each style succeeds or fails on its own.
#[derive(Debug, Clone)]
pub struct RenderPair {
    pub formal: Result<SvgDocument, StyleError>,
    pub intuitive: Result<SvgDocument, StyleError>,
}

impl RenderPair {
    pub fn get(&self, style: VisualStyle) -> &Result<SvgDocument, StyleError> {
        match style {
            VisualStyle::Formal => &self.formal,
            VisualStyle::Intuitive => &self.intuitive,
        }
    }

    /// Warnings from both documents, de-duplicated in first-seen order.
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for doc in [&self.formal, &self.intuitive].into_iter().flatten() {
            for w in &doc.warnings {
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
        }
        out
    }
}

/// Plans and renders one style.
pub fn render_style(root: &Node, style: VisualStyle, icons: &IconLibrary, cfg: &StyleConfig) -> Result<SvgDocument, StyleError> {
    let plan = layout::plan(root, style, cfg)?;
    Ok(render(&plan, icons, cfg)?)
}

pub fn render_pair(root: &Node, icons: &IconLibrary, cfg: &StyleConfig) -> RenderPair {
    RenderPair {
        formal: render_style(root, VisualStyle::Formal, icons, cfg),
        intuitive: render_style(root, VisualStyle::Intuitive, icons, cfg),
    }
}
