//! Layout planning: VL tree to absolute geometry.
//!
//! Each node is laid out bottom-up into a [`Frag`] whose coordinates are
//! relative to its own top-left corner; operation nodes then position their
//! children according to the operation's rule for the chosen style. The root
//! fragment, offset by the canvas margin, is the global [`LayoutPlan`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use serde::Serialize;

use crate::decimal::{as_integer, format_decimal};
use crate::icons::normalize_key;
use crate::model::{evaluate_numeric, ContainerSpec, EvalError, Node, Operation, OperationKind};
use crate::path::{NodePath, Step};

/// Quantities above this are drawn as one enlarged glyph with the number overlaid.
pub const MAX_INLINE: u32 = 10;
/// Entity cells per grid row.
pub const ROW_CELLS: u32 = 5;
/// Replicas or groups per row inside an enclosure.
pub const ROW_GROUPS: usize = 5;
pub const MIN_BOX_WIDTH: f64 = 120.0;
pub const MIN_BOX_HEIGHT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VisualStyle {
    Formal,
    Intuitive,
}

impl VisualStyle {
    pub fn name(self) -> &'static str {
        match self {
            VisualStyle::Formal => "formal",
            VisualStyle::Intuitive => "intuitive",
        }
    }
}

impl fmt::Display for VisualStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which quantity a division problem asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisionForm {
    /// "How many in each group?": the question sits on the last group.
    PerGroupUnknown,
    /// "How many groups?": the question sits on the enclosure's top-right.
    GroupCountUnknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Palette {
    pub question: String,
    pub cross_out: String,
    pub stroke: String,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            question: "#7A4FBF".to_string(),
            cross_out: "#C0392B".to_string(),
            stroke: "#000000".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StyleConfig {
    pub entity_cell: f64,
    pub container_padding: f64,
    pub gap: f64,
    pub header_height: f64,
    pub canvas_margin: f64,
    pub font_size: f64,
    /// Overrides [`infer_division_form`] for every division node.
    pub division_form: Option<DivisionForm>,
    pub palette: Palette,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            entity_cell: 48.0,
            container_padding: 12.0,
            gap: 24.0,
            header_height: 40.0,
            canvas_margin: 16.0,
            font_size: 14.0,
            division_form: None,
            palette: Palette::default(),
        }
    }
}

impl StyleConfig {
    pub fn max_inline(&self) -> u32 {
        MAX_INLINE
    }

    pub fn check(&self) -> Result<(), LayoutError> {
        let lengths = [
            ("entity_cell", self.entity_cell),
            ("container_padding", self.container_padding),
            ("gap", self.gap),
            ("header_height", self.header_height),
            ("canvas_margin", self.canvas_margin),
            ("font_size", self.font_size),
        ];
        for (name, value) in lengths {
            if !(value.is_finite() && value > 0.0) {
                return Err(LayoutError::InvalidConfig(name));
            }
        }
        Ok(())
    }

    fn question_size(&self) -> f64 {
        self.entity_cell * 0.75
    }

    fn bubble_band(&self) -> f64 {
        self.entity_cell / 2.0
    }

    fn symbol_size(&self) -> f64 {
        self.font_size * 2.0
    }

    fn text_width(&self, text: &str) -> f64 {
        libm::ceil(text.chars().count() as f64 * self.font_size * 0.6)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LayoutError {
    #[error("division needs integral counts for intuitive layout at {path} (groups {groups}, per group {per_group})")]
    DivisionCounts {
        path: NodePath,
        groups: String,
        per_group: String,
    },
    #[error("surplus needs integral counts for intuitive layout at {0}")]
    SurplusCounts(NodePath),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("style setting `{0}` must be a positive length")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Size {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    fn shifted(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Square of side `d` centred on a point.
    fn centered(cx: f64, cy: f64, d: f64) -> Self {
        Self::new(cx - d / 2.0, cy - d / 2.0, d, d)
    }

    pub fn contains(&self, other: &Rect) -> bool {
        const EPS: f64 = 1e-9;
        other.x >= self.x - EPS
            && other.y >= self.y - EPS
            && other.right() <= self.right() + EPS
            && other.bottom() <= self.bottom() + EPS
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn inset(&self, by: f64) -> Rect {
        Rect::new(self.x + by, self.y + by, self.w - 2.0 * by, self.h - 2.0 * by)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxKind {
    Container,
    Enclosure,
    Group,
    ScalePan,
}

impl BoxKind {
    pub fn name(self) -> &'static str {
        match self {
            BoxKind::Container => "container",
            BoxKind::Enclosure => "enclosure",
            BoxKind::Group => "group",
            BoxKind::ScalePan => "scale-pan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkKind {
    Plus,
    Minus,
    Times,
    Divide,
    Equals,
    QuestionCircle,
    CrossOut,
    ScaleBeam,
    UnitBubble,
}

impl MarkKind {
    pub fn name(self) -> &'static str {
        match self {
            MarkKind::Plus => "plus",
            MarkKind::Minus => "minus",
            MarkKind::Times => "times",
            MarkKind::Divide => "divide",
            MarkKind::Equals => "equals",
            MarkKind::QuestionCircle => "question-circle",
            MarkKind::CrossOut => "cross-out",
            MarkKind::ScaleBeam => "scale-beam",
            MarkKind::UnitBubble => "unit-bubble",
        }
    }

    /// Text glyph for operator marks.
    pub fn symbol(self) -> Option<&'static str> {
        Some(match self {
            MarkKind::Plus => "+",
            MarkKind::Minus => "\u{2212}",
            MarkKind::Times => "\u{00D7}",
            MarkKind::Divide => "\u{00F7}",
            MarkKind::Equals => "=",
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlyphRole {
    /// One drawn entity (or the single enlarged entity of an overlay).
    Entity,
    /// Quantity number drawn over an enlarged entity.
    Overlay,
    ContainerIcon,
    AttrIcon,
    Label,
}

impl GlyphRole {
    pub fn name(self) -> &'static str {
        match self {
            GlyphRole::Entity => "entity",
            GlyphRole::Overlay => "overlay",
            GlyphRole::ContainerIcon => "container-icon",
            GlyphRole::AttrIcon => "attr-icon",
            GlyphRole::Label => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphContent {
    Icon(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanBox {
    pub path: NodePath,
    pub kind: BoxKind,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Glyph {
    pub path: NodePath,
    pub role: GlyphRole,
    pub content: GlyphContent,
    pub rect: Rect,
    /// Fill the rectangle exactly instead of preserving the icon's aspect.
    pub stretch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mark {
    pub kind: MarkKind,
    pub rect: Rect,
    pub payload: String,
    /// Path of the box (or operation) the mark belongs to.
    pub owner: NodePath,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LayoutPlan {
    pub canvas: Size,
    pub boxes: Vec<PlanBox>,
    pub glyphs: Vec<Glyph>,
    pub marks: Vec<Mark>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanViolation {
    #[error("{0} lies outside the canvas")]
    OutsideCanvas(String),
    #[error("question circle owned by {owner} has {boxes} owning boxes")]
    QuestionOwner { owner: NodePath, boxes: usize },
}

impl LayoutPlan {
    /// A canvas holding only the margins.
    pub fn empty(cfg: &StyleConfig) -> Self {
        Self {
            canvas: Size {
                width: 2.0 * cfg.canvas_margin,
                height: 2.0 * cfg.canvas_margin,
            },
            ..Self::default()
        }
    }

    pub fn canvas_rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.canvas.width, self.canvas.height)
    }

    pub fn count_boxes(&self, kind: BoxKind) -> usize {
        self.boxes.iter().filter(|b| b.kind == kind).count()
    }

    pub fn count_marks(&self, kind: MarkKind) -> usize {
        self.marks.iter().filter(|m| m.kind == kind).count()
    }

    pub fn count_glyphs(&self, role: GlyphRole) -> usize {
        self.glyphs.iter().filter(|g| g.role == role).count()
    }

    pub fn marks_of(&self, kind: MarkKind) -> impl Iterator<Item = &Mark> {
        self.marks.iter().filter(move |m| m.kind == kind)
    }

    /// Canvas containment for every rectangle, and exactly one box per
    /// question-circle owner.
    pub fn check(&self) -> Result<(), PlanViolation> {
        let canvas = self.canvas_rect();
        for b in &self.boxes {
            if !canvas.contains(&b.rect) {
                return Err(PlanViolation::OutsideCanvas(format!("{} box at {}", b.kind.name(), b.path)));
            }
        }
        for g in &self.glyphs {
            if !canvas.contains(&g.rect) {
                return Err(PlanViolation::OutsideCanvas(format!("{} glyph at {}", g.role.name(), g.path)));
            }
        }
        for m in &self.marks {
            if !canvas.contains(&m.rect) {
                return Err(PlanViolation::OutsideCanvas(format!("{} mark at {}", m.kind.name(), m.owner)));
            }
        }
        for m in self.marks_of(MarkKind::QuestionCircle) {
            let boxes = self.boxes.iter().filter(|b| b.path == m.owner).count();
            if boxes != 1 {
                return Err(PlanViolation::QuestionOwner {
                    owner: m.owner.clone(),
                    boxes,
                });
            }
        }
        Ok(())
    }

    /// One line per item: `kind path x y w h [payload]`, preceded by the
    /// canvas size. Stable; golden tests diff against it.
    pub fn to_diagnostic(&self) -> String {
        let mut out = String::new();
        let n = |v: f64| format_decimal(libm::round(v * 1000.0) / 1000.0);
        let rect = |r: &Rect| format!("{} {} {} {}", n(r.x), n(r.y), n(r.w), n(r.h));
        let _ = writeln!(out, "canvas {} {}", n(self.canvas.width), n(self.canvas.height));
        for b in &self.boxes {
            let _ = writeln!(out, "box {} {} {}", b.kind.name(), b.path, rect(&b.rect));
        }
        for g in &self.glyphs {
            let content = match &g.content {
                GlyphContent::Icon(key) => format!("icon:{}", key.escape_debug()),
                GlyphContent::Text(text) => format!("text:{}", text.escape_debug()),
            };
            let stretch = if g.stretch { " stretch" } else { "" };
            let _ = writeln!(out, "glyph {} {} {} {}{}", g.role.name(), g.path, rect(&g.rect), content, stretch);
        }
        for m in &self.marks {
            let _ = write!(out, "mark {} {} {}", m.kind.name(), m.owner, rect(&m.rect));
            if !m.payload.is_empty() {
                let _ = write!(out, " {}", m.payload.escape_debug());
            }
            out.push('\n');
        }
        out
    }
}

/// Formal visuals ignore result containers; they are replaced by empty
/// placeholders. Intuitive visuals keep the tree unchanged.
pub fn build_render_tree(root: &Node, style: VisualStyle) -> Node {
    match style {
        VisualStyle::Intuitive => root.clone(),
        VisualStyle::Formal => strip_results(root),
    }
}

fn strip_results(node: &Node) -> Node {
    match node {
        Node::Leaf(spec) => Node::Leaf(spec.clone()),
        Node::Op(op) => Node::op(op.kind, strip_results(&op.arg1), strip_results(&op.arg2), ContainerSpec::default()),
    }
}

/// Per-group unknown when the result counts the dividend's entity type,
/// group-count unknown otherwise.
pub fn infer_division_form(op: &Operation) -> DivisionForm {
    if normalize_key(&op.result.entity_type) == normalize_key(entity_type_of(&op.arg1)) {
        DivisionForm::PerGroupUnknown
    } else {
        DivisionForm::GroupCountUnknown
    }
}

fn entity_type_of(node: &Node) -> &str {
    match node {
        Node::Leaf(spec) => &spec.entity_type,
        Node::Op(op) if !op.result.entity_type.is_empty() => &op.result.entity_type,
        Node::Op(op) => entity_type_of(&op.arg1),
    }
}

fn entity_name_of(node: &Node) -> &str {
    match node {
        Node::Leaf(spec) => &spec.entity_name,
        Node::Op(op) if !op.result.entity_name.is_empty() => &op.result.entity_name,
        Node::Op(op) => entity_name_of(&op.arg1),
    }
}

/// Size of a node's layout, margins excluded.
pub fn measure(node: &Node, style: VisualStyle, cfg: &StyleConfig) -> Result<Size, LayoutError> {
    cfg.check()?;
    let frag = match style {
        VisualStyle::Formal => Planner { cfg }.formal(node, &NodePath::root(), true)?,
        VisualStyle::Intuitive => Planner { cfg }.intuitive(node, &NodePath::root(), true)?,
    };
    Ok(Size {
        width: frag.w,
        height: frag.h,
    })
}

/// Builds the render tree for `style` and plans it.
pub fn plan(root: &Node, style: VisualStyle, cfg: &StyleConfig) -> Result<LayoutPlan, LayoutError> {
    let tree = build_render_tree(root, style);
    match style {
        VisualStyle::Formal => plan_formal(&tree, cfg),
        VisualStyle::Intuitive => plan_intuitive(&tree, cfg),
    }
}

/// Operator symbols between operands, then `= ?`.
pub fn plan_formal(root: &Node, cfg: &StyleConfig) -> Result<LayoutPlan, LayoutError> {
    cfg.check()?;
    let frag = Planner { cfg }.formal(root, &NodePath::root(), true)?;
    Ok(frag.into_plan(cfg))
}

/// Per-operation spatial arrangements.
pub fn plan_intuitive(root: &Node, cfg: &StyleConfig) -> Result<LayoutPlan, LayoutError> {
    cfg.check()?;
    let frag = Planner { cfg }.intuitive(root, &NodePath::root(), true)?;
    Ok(frag.into_plan(cfg))
}

/// Relative layout of one subtree; every item lies within `[0,w] x [0,h]`.
#[derive(Debug, Clone, Default)]
struct Frag {
    w: f64,
    h: f64,
    boxes: Vec<PlanBox>,
    glyphs: Vec<Glyph>,
    marks: Vec<Mark>,
}

impl Frag {
    fn sized(w: f64, h: f64) -> Self {
        Self {
            w,
            h,
            ..Self::default()
        }
    }

    fn place(&mut self, other: Frag, dx: f64, dy: f64) {
        self.boxes.extend(other.boxes.into_iter().map(|mut b| {
            b.rect = b.rect.shifted(dx, dy);
            b
        }));
        self.glyphs.extend(other.glyphs.into_iter().map(|mut g| {
            g.rect = g.rect.shifted(dx, dy);
            g
        }));
        self.marks.extend(other.marks.into_iter().map(|mut m| {
            m.rect = m.rect.shifted(dx, dy);
            m
        }));
        self.w = self.w.max(dx + other.w);
        self.h = self.h.max(dy + other.h);
    }

    fn mark(&mut self, kind: MarkKind, rect: Rect, payload: String, owner: &NodePath) {
        self.marks.push(Mark {
            kind,
            rect,
            payload,
            owner: owner.clone(),
        });
    }

    fn glyph(&mut self, path: &NodePath, role: GlyphRole, content: GlyphContent, rect: Rect) {
        self.glyphs.push(Glyph {
            path: path.clone(),
            role,
            content,
            rect,
            stretch: false,
        });
    }

    fn find_box(&self, path: &NodePath, kind: BoxKind) -> Option<Rect> {
        self.boxes.iter().find(|b| &b.path == path && b.kind == kind).map(|b| b.rect)
    }

    /// Grows the extents to cover every item, shifting right/down when
    /// something pokes out above or left of the origin.
    fn fit(&mut self) {
        let rects = self
            .boxes
            .iter()
            .map(|b| b.rect)
            .chain(self.glyphs.iter().map(|g| g.rect))
            .chain(self.marks.iter().map(|m| m.rect));
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (0.0f64, 0.0f64, self.w, self.h);
        for r in rects {
            min_x = min_x.min(r.x);
            min_y = min_y.min(r.y);
            max_x = max_x.max(r.right());
            max_y = max_y.max(r.bottom());
        }
        let moved = core::mem::take(self);
        *self = Frag::sized(max_x - min_x, max_y - min_y);
        self.place(moved, -min_x, -min_y);
        self.w = max_x - min_x;
        self.h = max_y - min_y;
    }

    /// Inserts `step` after `prefix` in every path under `prefix`.
    fn retag(&mut self, prefix: &NodePath, step: Step) {
        let at = prefix.steps().len();
        let fix = |p: &mut NodePath| {
            if p.starts_with(prefix) {
                p.insert(at, step);
            }
        };
        self.boxes.iter_mut().for_each(|b| fix(&mut b.path));
        self.glyphs.iter_mut().for_each(|g| fix(&mut g.path));
        self.marks.iter_mut().for_each(|m| fix(&mut m.owner));
    }

    fn into_plan(self, cfg: &StyleConfig) -> LayoutPlan {
        let m = cfg.canvas_margin;
        let mut canvas = Frag::sized(0.0, 0.0);
        let (w, h) = (self.w, self.h);
        canvas.place(self, m, m);
        LayoutPlan {
            canvas: Size {
                width: w + 2.0 * m,
                height: h + 2.0 * m,
            },
            boxes: canvas.boxes,
            glyphs: canvas.glyphs,
            marks: canvas.marks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fill {
    Empty,
    Each(u32),
    Overlay,
}

fn fill_for(quantity: f64) -> Fill {
    if quantity.is_nan() || quantity <= 0.0 {
        return Fill::Empty;
    }
    match as_integer(quantity) {
        Some(n) if n <= MAX_INLINE as i64 => Fill::Each(n as u32),
        _ => Fill::Overlay,
    }
}

/// Extra drawing inside a container leaf.
#[derive(Debug, Clone, Default)]
struct Decor {
    /// Payload of a unit bubble above every entity glyph.
    bubble: Option<String>,
    /// Number of trailing glyphs to cross out.
    cross_out: u32,
}

struct Planner<'a> {
    cfg: &'a StyleConfig,
}

impl Planner<'_> {
    /// Header strip plus a padded grid of entity cells.
    fn leaf(&self, spec: &ContainerSpec, path: &NodePath, kind: BoxKind, decor: &Decor) -> Frag {
        let cfg = self.cfg;
        let cell = cfg.entity_cell;
        let pad = cfg.container_padding;
        let hh = cfg.header_height;
        let band = if decor.bubble.is_some() { cfg.bubble_band() } else { 0.0 };

        let fill = fill_for(spec.entity_quantity);
        let (cols, rows, glyph_side) = match fill {
            Fill::Empty => (0, 0, 0.0),
            Fill::Each(n) => (n.min(ROW_CELLS), n.div_ceil(ROW_CELLS), cell),
            Fill::Overlay => (1, 1, 2.0 * cell),
        };
        let inner_w = cols as f64 * glyph_side;
        let inner_h = rows as f64 * (glyph_side + band);

        let mut frag = Frag::default();
        let header_w = self.header(&mut frag, spec, path);
        let box_w = (inner_w + 2.0 * pad).max(MIN_BOX_WIDTH).max(header_w);
        let box_h = (inner_h + 2.0 * pad).max(MIN_BOX_HEIGHT);
        frag.w = box_w;
        frag.h = hh + box_h;
        frag.boxes.push(PlanBox {
            path: path.clone(),
            kind,
            rect: Rect::new(0.0, hh, box_w, box_h),
        });

        let x0 = (box_w - inner_w) / 2.0;
        let y0 = hh + (box_h - inner_h) / 2.0;
        let mut cells = Vec::new();
        match fill {
            Fill::Empty => {}
            Fill::Each(n) => {
                for i in 0..n {
                    let (row, col) = (i / ROW_CELLS, i % ROW_CELLS);
                    let x = x0 + col as f64 * cell;
                    let y = y0 + row as f64 * (cell + band) + band;
                    cells.push(Rect::new(x, y, cell, cell));
                }
            }
            Fill::Overlay => cells.push(Rect::new(x0, y0 + band, glyph_side, glyph_side)),
        }
        for &rect in &cells {
            frag.glyph(path, GlyphRole::Entity, GlyphContent::Icon(spec.entity_type.clone()), rect);
        }
        if fill == Fill::Overlay {
            frag.glyph(path, GlyphRole::Overlay, GlyphContent::Text(format_decimal(spec.entity_quantity)), cells[0]);
        }
        if let Some(payload) = &decor.bubble {
            for rect in &cells {
                let bubble = Rect::new(rect.x + cell * 0.1, rect.y - band + 2.0, cell * 0.8, band - 4.0);
                frag.mark(MarkKind::UnitBubble, bubble, payload.clone(), path);
            }
        }
        let crossed = (decor.cross_out as usize).min(cells.len());
        for rect in &cells[cells.len() - crossed..] {
            frag.mark(MarkKind::CrossOut, *rect, String::new(), path);
        }
        frag
    }

    /// Container icon, attribute icon and name above a box. Returns the width used.
    fn header(&self, frag: &mut Frag, spec: &ContainerSpec, path: &NodePath) -> f64 {
        let hh = self.cfg.header_height;
        let icon = (hh - 8.0).max(1.0);
        let mut x = 0.0;
        if !spec.container_type.trim().is_empty() {
            let rect = Rect::new(x, (hh - icon) / 2.0, icon, icon);
            frag.glyph(path, GlyphRole::ContainerIcon, GlyphContent::Icon(spec.container_type.clone()), rect);
            x += icon + 4.0;
        }
        if !spec.attr_type.trim().is_empty() {
            let rect = Rect::new(x, (hh - icon) / 2.0, icon, icon);
            frag.glyph(path, GlyphRole::AttrIcon, GlyphContent::Icon(spec.attr_type.clone()), rect);
            x += icon + 4.0;
        }
        let label = match (spec.container_name.trim(), spec.attr_name.trim()) {
            ("", "") => String::new(),
            (name, "") => name.to_string(),
            ("", attr) => attr.to_string(),
            (name, attr) => format!("{name} ({attr})"),
        };
        if !label.is_empty() {
            let w = self.cfg.text_width(&label);
            frag.glyph(path, GlyphRole::Label, GlyphContent::Text(label), Rect::new(x, 0.0, w, hh));
            x += w;
        }
        x
    }

    fn symbol(&self, kind: MarkKind, owner: &NodePath) -> Frag {
        let s = self.cfg.symbol_size();
        let mut frag = Frag::sized(s, s);
        frag.mark(kind, Rect::new(0.0, 0.0, s, s), String::new(), owner);
        frag
    }

    fn question(&self, owner: &NodePath) -> Frag {
        let d = self.cfg.question_size();
        let mut frag = Frag::sized(d, d);
        frag.mark(MarkKind::QuestionCircle, Rect::new(0.0, 0.0, d, d), String::new(), owner);
        frag
    }

    fn text(&self, text: &str, path: &NodePath) -> Frag {
        let w = self.cfg.text_width(text);
        let h = self.cfg.font_size * 2.0;
        let mut frag = Frag::sized(w, h);
        frag.glyph(path, GlyphRole::Label, GlyphContent::Text(text.to_string()), Rect::new(0.0, 0.0, w, h));
        frag
    }

    /// Left to right, vertically centred.
    fn row(&self, items: Vec<Frag>, gap: f64) -> Frag {
        let height = items.iter().map(|f| f.h).fold(0.0, f64::max);
        let mut out = Frag::sized(0.0, height);
        let mut x = 0.0;
        for (i, item) in items.into_iter().enumerate() {
            if i > 0 {
                x += gap;
            }
            let w = item.w;
            let dy = (height - item.h) / 2.0;
            out.place(item, x, dy);
            x += w;
        }
        out
    }

    /// Rows of at most `ROW_GROUPS` items, top-aligned.
    fn grid(&self, items: Vec<Frag>) -> Frag {
        let gap = self.cfg.gap;
        let mut out = Frag::default();
        let mut y = 0.0;
        let mut items = items.into_iter().peekable();
        while items.peek().is_some() {
            let chunk: Vec<Frag> = items.by_ref().take(ROW_GROUPS).collect();
            let h = chunk.iter().map(|f| f.h).fold(0.0, f64::max);
            let mut x = 0.0;
            for item in chunk {
                let w = item.w;
                out.place(item, x, y);
                x += w + gap;
            }
            y += h + gap;
        }
        out
    }

    fn wrap(&self, content: Frag, path: &NodePath, kind: BoxKind) -> Frag {
        let pad = self.cfg.container_padding;
        let (w, h) = (content.w + 2.0 * pad, content.h + 2.0 * pad);
        let mut frag = Frag::sized(w, h);
        frag.boxes.push(PlanBox {
            path: path.clone(),
            kind,
            rect: Rect::new(0.0, 0.0, w, h),
        });
        frag.place(content, pad, pad);
        frag
    }

    /// Question circle centred on a corner of the box at `owner`.
    fn question_at(&self, frag: &mut Frag, owner: &NodePath, kind: BoxKind, top: bool) {
        let rect = frag.find_box(owner, kind).expect("owning box was just laid out");
        let cy = if top { rect.y } else { rect.bottom() };
        frag.mark(
            MarkKind::QuestionCircle,
            Rect::centered(rect.right(), cy, self.cfg.question_size()),
            String::new(),
            owner,
        );
        frag.fit();
    }

    fn value(&self, node: &Node) -> Result<f64, LayoutError> {
        Ok(evaluate_numeric(node)?)
    }

    // ---- formal ----

    fn formal(&self, node: &Node, path: &NodePath, is_root: bool) -> Result<Frag, LayoutError> {
        let op = match node {
            Node::Leaf(spec) => return Ok(self.leaf(spec, path, BoxKind::Container, &Decor::default())),
            Node::Op(op) => op,
        };
        let body = match op.kind {
            OperationKind::Comparison => {
                let left = self.formal_side(&op.arg1, &path.child(Step::Arg1))?;
                let right = self.formal_side(&op.arg2, &path.child(Step::Arg2))?;
                return Ok(self.scale(left, right, path));
            }
            OperationKind::Unittrans => self.unittrans(op, path, VisualStyle::Formal)?,
            OperationKind::Area if area_sides(op).is_some() => self.area(op, path),
            kind => {
                let symbol = match kind {
                    OperationKind::Addition => MarkKind::Plus,
                    OperationKind::Subtraction => MarkKind::Minus,
                    OperationKind::Division | OperationKind::Surplus => MarkKind::Divide,
                    _ => MarkKind::Times,
                };
                let a = self.formal_operand(&op.arg1, &path.child(Step::Arg1))?;
                let b = self.formal_operand(&op.arg2, &path.child(Step::Arg2))?;
                self.row(alloc::vec![a, self.symbol(symbol, path), b], self.cfg.gap)
            }
        };
        if is_root {
            Ok(self.with_answer(body, op.kind, path))
        } else {
            Ok(body)
        }
    }

    /// Nested arithmetic subtrees get a group box so their extent reads as
    /// one operand.
    fn formal_operand(&self, node: &Node, path: &NodePath) -> Result<Frag, LayoutError> {
        let inner = self.formal(node, path, false)?;
        match node.as_op().map(|op| op.kind) {
            Some(
                OperationKind::Addition
                | OperationKind::Subtraction
                | OperationKind::Multiplication
                | OperationKind::Division
                | OperationKind::Surplus,
            ) => Ok(self.wrap(inner, path, BoxKind::Group)),
            _ => Ok(inner),
        }
    }

    /// One pan of a formal balance: a leaf box, or an expression with its answer.
    fn formal_side(&self, node: &Node, path: &NodePath) -> Result<Frag, LayoutError> {
        match node {
            Node::Leaf(_) => self.formal(node, path, false),
            Node::Op(_) => self.formal(node, path, true),
        }
    }

    /// Appends `= ?` (and `remainder ?` for surplus). The question circles
    /// belong to a group box around the whole expression, unless the body
    /// already has a box for this operation (area).
    fn with_answer(&self, body: Frag, kind: OperationKind, path: &NodePath) -> Frag {
        let owned = body.boxes.iter().any(|b| &b.path == path);
        let mut items = alloc::vec![body, self.symbol(MarkKind::Equals, path), self.question(path)];
        if kind == OperationKind::Surplus {
            items.push(self.text("remainder", path));
            items.push(self.question(path));
        }
        let row = self.row(items, self.cfg.gap);
        if owned {
            row
        } else {
            self.wrap(row, path, BoxKind::Group)
        }
    }

    // ---- intuitive ----

    fn intuitive(&self, node: &Node, path: &NodePath, is_root: bool) -> Result<Frag, LayoutError> {
        let op = match node {
            Node::Leaf(spec) => return Ok(self.leaf(spec, path, BoxKind::Container, &Decor::default())),
            Node::Op(op) => op,
        };
        let gap = self.cfg.gap;
        let a_path = path.child(Step::Arg1);
        let b_path = path.child(Step::Arg2);
        match op.kind {
            OperationKind::Addition => {
                let a = self.intuitive(&op.arg1, &a_path, false)?;
                let b = self.intuitive(&op.arg2, &b_path, false)?;
                let mut frag = self.wrap(self.row(alloc::vec![a, b], gap), path, BoxKind::Enclosure);
                self.question_at(&mut frag, path, BoxKind::Enclosure, false);
                Ok(frag)
            }
            OperationKind::Subtraction => self.subtraction(op, path),
            OperationKind::Multiplication => self.multiplication(op, path),
            OperationKind::Area => {
                if area_sides(op).is_none() {
                    return self.multiplication(op, path);
                }
                let mut frag = self.area(op, path);
                self.question_at(&mut frag, path, BoxKind::Container, false);
                Ok(frag)
            }
            OperationKind::Division => self.division(op, path),
            OperationKind::Surplus => self.surplus(op, path),
            OperationKind::Comparison => {
                let left = self.intuitive(&op.arg1, &a_path, false)?;
                let right = self.intuitive(&op.arg2, &b_path, false)?;
                Ok(self.scale(left, right, path))
            }
            OperationKind::Unittrans => {
                let mut frag = self.unittrans(op, path, VisualStyle::Intuitive)?;
                if is_root {
                    if frag.find_box(&a_path, BoxKind::Container).is_some() {
                        self.question_at(&mut frag, &a_path, BoxKind::Container, false);
                    } else {
                        frag = self.wrap(frag, path, BoxKind::Group);
                        self.question_at(&mut frag, path, BoxKind::Group, false);
                    }
                }
                Ok(frag)
            }
        }
    }

    fn subtraction(&self, op: &Operation, path: &NodePath) -> Result<Frag, LayoutError> {
        let a_path = path.child(Step::Arg1);
        let b_path = path.child(Step::Arg2);
        if let (Node::Leaf(minuend), Node::Leaf(subtrahend)) = (&op.arg1, &op.arg2) {
            let have = match fill_for(minuend.entity_quantity) {
                Fill::Each(n) => Some(n),
                Fill::Empty => Some(0),
                Fill::Overlay => None,
            };
            if let (Some(have), Some(take)) = (have, as_integer(subtrahend.entity_quantity)) {
                if (0..=have as i64).contains(&take) {
                    let decor = Decor {
                        cross_out: take as u32,
                        ..Decor::default()
                    };
                    let mut frag = self.leaf(minuend, &a_path, BoxKind::Container, &decor);
                    self.question_at(&mut frag, &a_path, BoxKind::Container, false);
                    return Ok(frag);
                }
            }
        }
        // Not drawable item by item: minuend, then the subtrahend struck through as a whole.
        let a = self.intuitive(&op.arg1, &a_path, false)?;
        let mut b = self.intuitive(&op.arg2, &b_path, false)?;
        let taken = format_decimal(self.value(&op.arg2)?);
        let cover = Rect::new(0.0, 0.0, b.w, b.h);
        b.mark(MarkKind::CrossOut, cover, taken, &b_path);
        let mut frag = self.wrap(self.row(alloc::vec![a, b], self.cfg.gap), path, BoxKind::Group);
        self.question_at(&mut frag, path, BoxKind::Group, false);
        Ok(frag)
    }

    fn multiplication(&self, op: &Operation, path: &NodePath) -> Result<Frag, LayoutError> {
        let a_path = path.child(Step::Arg1);
        let b_path = path.child(Step::Arg2);
        let count = self.value(&op.arg1)?;
        let unit = self.intuitive(&op.arg2, &b_path, false)?;
        let mut replicas = Vec::new();
        match as_integer(count) {
            Some(n) if (1..=MAX_INLINE as i64).contains(&n) => {
                for i in 0..n as u32 {
                    let mut copy = unit.clone();
                    copy.retag(&b_path, Step::Replica(i));
                    replicas.push(copy);
                }
            }
            _ => {
                let mut copy = unit;
                copy.retag(&b_path, Step::Replica(0));
                let label = self.text(&format!("\u{00D7} {}", format_decimal(count)), path);
                replicas.push(self.row(alloc::vec![copy, label], self.cfg.gap));
            }
        }
        let mut frag = self.wrap(self.grid(replicas), path, BoxKind::Enclosure);
        self.question_at(&mut frag, path, BoxKind::Enclosure, false);
        if op.arg1.as_op().is_some() {
            let count_plan = self.intuitive(&op.arg1, &a_path, false)?;
            frag = self.row(alloc::vec![count_plan, frag], self.cfg.gap);
        }
        Ok(frag)
    }

    fn division(&self, op: &Operation, path: &NodePath) -> Result<Frag, LayoutError> {
        let form = self.cfg.division_form.unwrap_or_else(|| infer_division_form(op));
        let divisor = self.value(&op.arg2)?;
        let (groups, per_group) = match form {
            DivisionForm::PerGroupUnknown => (divisor, op.result.entity_quantity),
            DivisionForm::GroupCountUnknown => (op.result.entity_quantity, divisor),
        };
        let bad = || LayoutError::DivisionCounts {
            path: path.clone(),
            groups: format_decimal(groups),
            per_group: format_decimal(per_group),
        };
        let k = as_integer(groups).filter(|&k| k > 0).ok_or_else(bad)?;
        let m = as_integer(per_group).filter(|&m| m > 0).ok_or_else(bad)?;

        let template = group_spec(&op.arg1, &op.arg2, &op.result, form == DivisionForm::PerGroupUnknown, m as f64);
        let drawn = if k <= MAX_INLINE as i64 { k as u32 } else { 1 };
        let mut items = Vec::new();
        for i in 0..drawn {
            items.push(self.leaf(&template, &path.child(Step::Group(i)), BoxKind::Group, &Decor::default()));
        }
        if drawn as i64 != k {
            items.push(self.text(&format!("\u{00D7} {k}"), path));
        }
        let mut frag = self.wrap(self.grid(items), path, BoxKind::Enclosure);
        match form {
            DivisionForm::PerGroupUnknown => {
                self.question_at(&mut frag, &path.child(Step::Group(drawn - 1)), BoxKind::Group, false)
            }
            DivisionForm::GroupCountUnknown => self.question_at(&mut frag, path, BoxKind::Enclosure, true),
        }
        if op.arg1.as_op().is_some() {
            let dividend = self.intuitive(&op.arg1, &path.child(Step::Arg1), false)?;
            frag = self.row(alloc::vec![dividend, frag], self.cfg.gap);
        }
        Ok(frag)
    }

    fn surplus(&self, op: &Operation, path: &NodePath) -> Result<Frag, LayoutError> {
        let bad = || LayoutError::SurplusCounts(path.clone());
        let total = as_integer(self.value(&op.arg1)?).filter(|&v| v >= 0).ok_or_else(bad)?;
        let size = as_integer(self.value(&op.arg2)?).filter(|&v| v > 0).ok_or_else(bad)?;
        let (k, rest) = (total / size, total % size);

        let template = group_spec(&op.arg1, &op.arg2, &op.result, false, size as f64);
        let drawn = if k > MAX_INLINE as i64 { 1 } else { k as u32 };
        let mut items = Vec::new();
        for i in 0..drawn {
            items.push(self.leaf(&template, &path.child(Step::Group(i)), BoxKind::Group, &Decor::default()));
        }
        if drawn as i64 != k {
            items.push(self.text(&format!("\u{00D7} {k}"), path));
        }
        let mut remainder = ContainerSpec::new(entity_name_of(&op.arg1), entity_type_of(&op.arg1), rest as f64);
        if op.result.container_name.is_empty() && op.result.container_type.is_empty() {
            remainder.container_name = "remainder".to_string();
        } else {
            remainder.container_name = op.result.container_name.clone();
            remainder.container_type = op.result.container_type.clone();
        }
        let rem_path = path.child(Step::Remainder);
        items.push(self.leaf(&remainder, &rem_path, BoxKind::Container, &Decor::default()));
        let mut frag = self.wrap(self.grid(items), path, BoxKind::Enclosure);
        self.question_at(&mut frag, &rem_path, BoxKind::Container, false);
        if op.arg1.as_op().is_some() {
            let dividend = self.intuitive(&op.arg1, &path.child(Step::Arg1), false)?;
            frag = self.row(alloc::vec![dividend, frag], self.cfg.gap);
        }
        Ok(frag)
    }

    // ---- shared by both styles ----

    /// Counted items with a unit bubble above each one. The rate container
    /// itself is not drawn.
    fn unittrans(&self, op: &Operation, path: &NodePath, style: VisualStyle) -> Result<Frag, LayoutError> {
        let a_path = path.child(Step::Arg1);
        let rate = self.value(&op.arg2).map_or_else(|_| String::from("?"), format_decimal);
        if let Node::Leaf(items) = &op.arg1 {
            let decor = Decor {
                bubble: Some(rate),
                ..Decor::default()
            };
            return Ok(self.leaf(items, &a_path, BoxKind::Container, &decor));
        }
        let inner = match style {
            VisualStyle::Formal => self.formal_operand(&op.arg1, &a_path)?,
            VisualStyle::Intuitive => self.intuitive(&op.arg1, &a_path, false)?,
        };
        let band = self.cfg.bubble_band();
        let mut frag = Frag::sized(inner.w, inner.h + band);
        let cell = self.cfg.entity_cell;
        frag.mark(
            MarkKind::UnitBubble,
            Rect::new((inner.w - cell * 0.8) / 2.0, 2.0, cell * 0.8, band - 4.0),
            rate,
            &a_path,
        );
        frag.place(inner, 0.0, band);
        Ok(frag)
    }

    /// One item stretched to the width:length proportions, with labelled sides.
    fn area(&self, op: &Operation, path: &NodePath) -> Frag {
        let (width, length) = area_sides(op).expect("checked by caller");
        let cfg = self.cfg;
        let (a, b) = (op.arg1.as_leaf().unwrap(), op.arg2.as_leaf().unwrap());
        let long = 4.0 * cfg.entity_cell;
        let scale = long / width.max(length);
        let rw = (width * scale).max(cfg.entity_cell / 2.0);
        let rh = (length * scale).max(cfg.entity_cell / 2.0);

        let side = |spec: &ContainerSpec| {
            let q = format_decimal(spec.entity_quantity);
            if spec.entity_name.is_empty() {
                q
            } else {
                format!("{q} {}", spec.entity_name)
            }
        };
        let top_label = side(a);
        let left_label = side(b);
        let label_h = cfg.font_size * 1.5;
        let left_w = cfg.text_width(&left_label);

        let mut header_spec = a.clone();
        if header_spec.container_name.is_empty() && header_spec.container_type.is_empty() {
            header_spec.container_name = b.container_name.clone();
            header_spec.container_type = b.container_type.clone();
        }
        let mut frag = Frag::default();
        let header_w = self.header(&mut frag, &header_spec, path);
        let pad = cfg.container_padding;
        let hh = cfg.header_height;
        let inner_w = left_w + 4.0 + rw.max(cfg.text_width(&top_label));
        let inner_h = label_h + rh;
        let box_w = (inner_w + 2.0 * pad).max(MIN_BOX_WIDTH).max(header_w);
        let box_h = (inner_h + 2.0 * pad).max(MIN_BOX_HEIGHT);
        frag.boxes.push(PlanBox {
            path: path.clone(),
            kind: BoxKind::Container,
            rect: Rect::new(0.0, hh, box_w, box_h),
        });
        let x0 = (box_w - inner_w) / 2.0;
        let y0 = hh + (box_h - inner_h) / 2.0;
        let item = Rect::new(x0 + left_w + 4.0, y0 + label_h, rw, rh);
        let icon = if a.container_type.is_empty() { &a.entity_type } else { &a.container_type };
        frag.glyphs.push(Glyph {
            path: path.clone(),
            role: GlyphRole::Entity,
            content: GlyphContent::Icon(icon.clone()),
            rect: item,
            stretch: true,
        });
        let top_w = cfg.text_width(&top_label);
        frag.glyph(
            path,
            GlyphRole::Label,
            GlyphContent::Text(top_label),
            Rect::new(item.x + (rw - top_w) / 2.0, y0, top_w, label_h),
        );
        frag.glyph(
            path,
            GlyphRole::Label,
            GlyphContent::Text(left_label),
            Rect::new(x0, item.y + (rh - label_h) / 2.0, left_w, label_h),
        );
        frag.w = box_w;
        frag.h = hh + box_h;
        frag.fit();
        frag
    }

    /// Balance scale: two pans, bottom-aligned on a beam over a fulcrum.
    fn scale(&self, left: Frag, right: Frag, path: &NodePath) -> Frag {
        let left = self.wrap(left, &path.child(Step::LeftPan), BoxKind::ScalePan);
        let right = self.wrap(right, &path.child(Step::RightPan), BoxKind::ScalePan);
        let base = left.h.max(right.h);
        let (lw, rw) = (left.w, right.w);
        let right_x = lw + 2.0 * self.cfg.gap;
        let mut frag = Frag::default();
        let dy = base - left.h;
        frag.place(left, 0.0, dy);
        let dy = base - right.h;
        frag.place(right, right_x, dy);
        let beam = Rect::new(lw / 2.0, base + 4.0, right_x + rw / 2.0 - lw / 2.0, self.cfg.entity_cell);
        frag.mark(MarkKind::ScaleBeam, beam, String::new(), path);
        frag.h = beam.bottom();
        frag
    }
}

fn area_sides(op: &Operation) -> Option<(f64, f64)> {
    let (a, b) = (op.arg1.as_leaf()?, op.arg2.as_leaf()?);
    let ok = |v: f64| v.is_finite() && v > 0.0;
    (ok(a.entity_quantity) && ok(b.entity_quantity)).then_some((a.entity_quantity, b.entity_quantity))
}

/// Contents of one post-division group: `per_group` of the dividend's
/// entities, headed by what forms a group. When the divisor counts groups its
/// entity names them; otherwise its container does.
fn group_spec(dividend: &Node, divisor: &Node, result: &ContainerSpec, divisor_counts_groups: bool, per_group: f64) -> ContainerSpec {
    let mut spec = ContainerSpec::new(entity_name_of(dividend), entity_type_of(dividend), per_group);
    let (name, kind) = match divisor {
        Node::Leaf(d) if divisor_counts_groups => (&d.entity_name, &d.entity_type),
        Node::Leaf(d) if !(d.container_name.is_empty() && d.container_type.is_empty()) => (&d.container_name, &d.container_type),
        _ if divisor_counts_groups => (&result.container_name, &result.container_type),
        _ => (&result.entity_name, &result.entity_type),
    };
    spec.container_name = name.clone();
    spec.container_type = kind.clone();
    spec
}
