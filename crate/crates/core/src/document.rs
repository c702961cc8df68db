//! HTML normalization into a heading tree with inlined list markers.
//!
//! A page becomes a [`WebDocument`]: the main title (the tail entity of every
//! candidate on the page) plus an ordered tree of [`Section`]s. List items are
//! wrapped in site-specific markers so that list structure survives as plain
//! text, e.g. `||streptomycin|| ||doxycycline||` or `|1|outer |2|inner|2||1|`.

use std::collections::HashSet;

use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};

use crate::error::DocumentError;

/// Deepest section level produced; `h4` and below all land here.
pub const MAX_SECTION_LEVEL: u8 = 4;

/// Deepest numbered list marker (`|3|`).
const MAX_LIST_DEPTH: usize = 3;

const DEFAULT_BOILERPLATE: &[&str] = &[
    "script", "style", "noscript", "template", "iframe", "svg", "nav", "header", "footer",
    "aside", "form", "button",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListMarkerStyle {
    /// `|1|`, `|2|`, `|3|` by nesting depth.
    #[serde(alias = "NUMBERED")]
    Numbered,
    /// `||` at every depth.
    #[serde(alias = "PLAIN")]
    Plain,
}

impl ListMarkerStyle {
    fn marker(self, depth: usize) -> String {
        match self {
            ListMarkerStyle::Numbered => format!("|{}|", depth.clamp(1, MAX_LIST_DEPTH)),
            ListMarkerStyle::Plain => "||".to_string(),
        }
    }
}

/// Per-site preprocessing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteProfile {
    pub site_id: String,
    pub list_marker_style: ListMarkerStyle,
    #[serde(default)]
    pub subpage_kinds: Vec<String>,
    /// CSS selectors for chrome that is dropped before text extraction.
    #[serde(default = "default_boilerplate")]
    pub boilerplate_selectors: Vec<String>,
    /// Selector for the main-title element; `h1` when unset.
    #[serde(default)]
    pub title_selector: Option<String>,
}

fn default_boilerplate() -> Vec<String> {
    DEFAULT_BOILERPLATE.iter().map(|s| s.to_string()).collect()
}

impl SiteProfile {
    pub fn new(site_id: impl Into<String>, list_marker_style: ListMarkerStyle) -> Self {
        SiteProfile {
            site_id: site_id.into(),
            list_marker_style,
            subpage_kinds: Vec::new(),
            boilerplate_selectors: default_boilerplate(),
            title_selector: None,
        }
    }

    /// Whether a page of the given sub-page kind is retained. Profiles with no
    /// configured kinds keep everything.
    pub fn keeps_subpage(&self, kind: Option<&str>) -> bool {
        match kind {
            Some(kind) if !self.subpage_kinds.is_empty() => self
                .subpage_kinds
                .iter()
                .any(|k| k.eq_ignore_ascii_case(kind.trim())),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub level: u8,
    pub text: String,
    pub children: Vec<Section>,
}

impl Section {
    fn new(heading: String, level: u8) -> Self {
        Section { heading, level, text: String::new(), children: Vec::new() }
    }

    fn push_block(&mut self, block: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        self.text.push_str(block);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebDocument {
    pub site_id: String,
    pub page_url: String,
    pub main_title: String,
    pub sections: Vec<Section>,
}

/// A section together with its position in the tree.
#[derive(Debug, Clone, Copy)]
pub struct SectionRef<'a> {
    /// Child indices from the document root down to this section.
    pub index: &'a [usize],
    pub section: &'a Section,
}

impl WebDocument {
    /// Pre-order walk of every section, with its index path.
    pub fn walk_sections(&self) -> Vec<(Vec<usize>, &Section)> {
        fn visit<'a>(
            sections: &'a [Section],
            prefix: &mut Vec<usize>,
            out: &mut Vec<(Vec<usize>, &'a Section)>,
        ) {
            for (i, s) in sections.iter().enumerate() {
                prefix.push(i);
                out.push((prefix.clone(), s));
                visit(&s.children, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        visit(&self.sections, &mut Vec::new(), &mut out);
        out
    }

    pub fn section_at(&self, index: &[usize]) -> Option<&Section> {
        let (first, rest) = index.split_first()?;
        let mut cur = self.sections.get(*first)?;
        for &i in rest {
            cur = cur.children.get(i)?;
        }
        Some(cur)
    }

    /// Breadcrumb for the section at an index path.
    pub fn path_for_index(&self, index: &[usize]) -> Result<String, DocumentError> {
        let mut headings = vec![self.main_title.as_str()];
        let mut level = &self.sections;
        for &i in index {
            let s = level.get(i).ok_or(DocumentError::SectionNotInDocument)?;
            if !s.heading.is_empty() {
                headings.push(&s.heading);
            }
            level = &s.children;
        }
        if index.is_empty() {
            return Err(DocumentError::SectionNotInDocument);
        }
        Ok(headings.join(" > "))
    }
}

/// `"main_title > h2 > h3 …"` for a section borrowed from `doc`.
///
/// Membership is by identity: the section must be a reference into this
/// document's tree, not an equal copy.
pub fn section_path(doc: &WebDocument, section: &Section) -> Result<String, DocumentError> {
    fn find(sections: &[Section], target: &Section, path: &mut Vec<usize>) -> bool {
        for (i, s) in sections.iter().enumerate() {
            path.push(i);
            if std::ptr::eq(s, target) || find(&s.children, target, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = Vec::new();
    if !find(&doc.sections, section, &mut path) {
        return Err(DocumentError::SectionNotInDocument);
    }
    doc.path_for_index(&path)
}

/// Section text followed by each descendant's heading and text, in document
/// order, one per line.
pub fn flatten_section_text(section: &Section) -> String {
    fn collect<'a>(section: &'a Section, parts: &mut Vec<&'a str>) {
        if !section.text.is_empty() {
            parts.push(&section.text);
        }
        for child in &section.children {
            if !child.heading.is_empty() {
                parts.push(&child.heading);
            }
            collect(child, parts);
        }
    }
    let mut parts = Vec::new();
    collect(section, &mut parts);
    parts.join("\n")
}

/// Collapse every whitespace run to a single space and trim.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Decode raw bytes (lossy UTF-8) and preprocess.
pub fn preprocess_html_bytes(
    bytes: &[u8],
    profile: &SiteProfile,
    url: &str,
) -> Result<WebDocument, DocumentError> {
    preprocess_html(&String::from_utf8_lossy(bytes), profile, url)
}

pub fn preprocess_html(
    html: &str,
    profile: &SiteProfile,
    url: &str,
) -> Result<WebDocument, DocumentError> {
    if !looks_like_html(html) {
        return Err(DocumentError::ParseFailure("no HTML markup found".into()));
    }
    let dom = Html::parse_document(html);

    let mut skip = HashSet::new();
    for raw in &profile.boilerplate_selectors {
        let sel = parse_selector(raw)?;
        for el in dom.select(&sel) {
            skip.insert(el.id());
        }
    }

    let title_sel = parse_selector(profile.title_selector.as_deref().unwrap_or("h1"))?;
    let title_el = dom
        .select(&title_sel)
        .find(|el| !is_skipped(el, &skip))
        .filter(|el| !inline_text(*el, &skip, false).is_empty())
        .or_else(|| {
            let t = Selector::parse("title").expect("static selector");
            dom.select(&t).next()
        });
    let title_el = title_el.ok_or(DocumentError::EmptyDocument)?;
    let main_title = inline_text(title_el, &skip, false);
    if main_title.is_empty() {
        return Err(DocumentError::EmptyDocument);
    }

    let body = Selector::parse("body").expect("static selector");
    let root = dom.select(&body).next().unwrap_or_else(|| dom.root_element());

    let mut walker = Walker {
        style: profile.list_marker_style,
        skip: &skip,
        title: title_el.id(),
        inline: String::new(),
        tree: TreeBuilder::default(),
    };
    walker.walk(root);
    walker.flush();

    Ok(WebDocument {
        site_id: profile.site_id.clone(),
        page_url: url.to_string(),
        main_title,
        sections: walker.tree.finish(),
    })
}

fn looks_like_html(s: &str) -> bool {
    let b = s.as_bytes();
    b.windows(2)
        .any(|w| w[0] == b'<' && (w[1].is_ascii_alphabetic() || w[1] == b'/' || w[1] == b'!'))
}

fn parse_selector(raw: &str) -> Result<Selector, DocumentError> {
    Selector::parse(raw).map_err(|e| DocumentError::InvalidSelector(format!("{raw}: {e}")))
}

fn is_skipped(el: &ElementRef<'_>, skip: &HashSet<ego_tree::NodeId>) -> bool {
    el.ancestors().any(|a| skip.contains(&a.id())) || skip.contains(&el.id())
}

fn heading_level(name: &str) -> Option<u8> {
    match name {
        "h1" | "h2" => Some(2),
        "h3" => Some(3),
        "h4" | "h5" | "h6" => Some(MAX_SECTION_LEVEL),
        _ => None,
    }
}

fn is_block(name: &str) -> bool {
    matches!(
        name,
        "p" | "div" | "section" | "article" | "main" | "body" | "blockquote" | "pre" | "dl"
            | "dt" | "dd" | "figure" | "figcaption" | "li" | "address" | "center" | "hr"
            | "html" | "details" | "summary"
    )
}

fn is_dropped(name: &str) -> bool {
    matches!(name, "script" | "style" | "head" | "noscript" | "template")
}

/// Pipes in page text would be indistinguishable from list markers.
fn sanitize_text_node(s: &str) -> String {
    s.replace('|', "\u{a6}")
}

/// Break up anything that reads like a tag after entity decoding.
fn defuse_tags(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '<' {
            if let Some(&n) = chars.peek() {
                if n.is_ascii_alphabetic() || n == '/' || n == '!' {
                    out.push(' ');
                }
            }
        }
    }
    out
}

fn clean(s: &str) -> String {
    defuse_tags(&collapse_whitespace(s))
}

/// Text beneath `el`, whitespace-collapsed. Nested lists are left out when
/// `skip_lists` is set so list items can render them separately.
fn inline_text(el: ElementRef<'_>, skip: &HashSet<ego_tree::NodeId>, skip_lists: bool) -> String {
    fn go(
        node: ego_tree::NodeRef<'_, Node>,
        skip: &HashSet<ego_tree::NodeId>,
        skip_lists: bool,
        out: &mut String,
    ) {
        match node.value() {
            Node::Text(t) => out.push_str(&sanitize_text_node(t)),
            Node::Element(e) => {
                let name = e.name();
                if skip.contains(&node.id()) || is_dropped(name) {
                    return;
                }
                if skip_lists && matches!(name, "ul" | "ol") {
                    return;
                }
                let spaced = is_block(name) || name == "br" || heading_level(name).is_some();
                if spaced {
                    out.push(' ');
                }
                for child in node.children() {
                    go(child, skip, skip_lists, out);
                }
                if spaced || matches!(name, "td" | "th") {
                    out.push(' ');
                }
            }
            _ => {}
        }
    }
    let mut out = String::new();
    for child in el.children() {
        go(child, skip, skip_lists, &mut out);
    }
    clean(&out)
}

enum Event {
    Heading(u8, String),
    Block(String),
}

struct Walker<'a> {
    style: ListMarkerStyle,
    skip: &'a HashSet<ego_tree::NodeId>,
    title: ego_tree::NodeId,
    inline: String,
    tree: TreeBuilder,
}

impl Walker<'_> {
    fn flush(&mut self) {
        let block = clean(&self.inline);
        self.inline.clear();
        if !block.is_empty() {
            self.tree.push(Event::Block(block));
        }
    }

    fn walk(&mut self, el: ElementRef<'_>) {
        for child in el.children() {
            match child.value() {
                Node::Text(t) => self.inline.push_str(&sanitize_text_node(t)),
                Node::Element(_) => {
                    let child = ElementRef::wrap(child).expect("element node");
                    self.element(child);
                }
                _ => {}
            }
        }
    }

    fn element(&mut self, el: ElementRef<'_>) {
        let name = el.value().name();
        if self.skip.contains(&el.id()) || is_dropped(name) || el.id() == self.title {
            return;
        }
        if let Some(level) = heading_level(name) {
            self.flush();
            let text = inline_text(el, self.skip, false);
            if !text.is_empty() {
                self.tree.push(Event::Heading(level, text));
            }
            return;
        }
        match name {
            "ul" | "ol" => {
                self.flush();
                let rendered = render_list(el, 1, self.style, self.skip);
                if !rendered.is_empty() {
                    self.tree.push(Event::Block(rendered));
                }
            }
            "table" => {
                self.flush();
                for row in table_rows(el, self.skip) {
                    self.tree.push(Event::Block(row));
                }
            }
            "br" => self.flush(),
            _ if is_block(name) => {
                self.flush();
                self.walk(el);
                self.flush();
            }
            _ => self.walk(el),
        }
    }
}

fn render_list(
    list: ElementRef<'_>,
    depth: usize,
    style: ListMarkerStyle,
    skip: &HashSet<ego_tree::NodeId>,
) -> String {
    let marker = style.marker(depth);
    let mut items = Vec::new();
    for child in list.children().filter_map(ElementRef::wrap) {
        if skip.contains(&child.id()) || child.value().name() != "li" {
            continue;
        }
        let mut parts = Vec::new();
        let own = inline_text(child, skip, true);
        if !own.is_empty() {
            parts.push(own);
        }
        for nested in child.descendants().filter_map(ElementRef::wrap) {
            let n = nested.value().name();
            if !matches!(n, "ul" | "ol") || skip.contains(&nested.id()) {
                continue;
            }
            // Only lists whose nearest list ancestor is this item's list.
            let parent_list = nested
                .ancestors()
                .filter_map(ElementRef::wrap)
                .find(|a| matches!(a.value().name(), "ul" | "ol"));
            if parent_list.map(|p| p.id()) != Some(list.id()) {
                continue;
            }
            let rendered = render_list(nested, depth + 1, style, skip);
            if !rendered.is_empty() {
                parts.push(rendered);
            }
        }
        if !parts.is_empty() {
            items.push(format!("{marker}{}{marker}", parts.join(" ")));
        }
    }
    items.join(" ")
}

fn table_rows(table: ElementRef<'_>, skip: &HashSet<ego_tree::NodeId>) -> Vec<String> {
    let mut rows = Vec::new();
    for tr in table.descendants().filter_map(ElementRef::wrap) {
        if tr.value().name() != "tr" || skip.contains(&tr.id()) {
            continue;
        }
        let cells: Vec<String> = tr
            .children()
            .filter_map(ElementRef::wrap)
            .filter(|c| matches!(c.value().name(), "td" | "th"))
            .map(|c| inline_text(c, skip, false))
            .collect();
        if cells.iter().any(|c| !c.is_empty()) {
            rows.push(collapse_whitespace(&cells.join(" | ")));
        }
    }
    rows
}

/// Assembles heading/text events into a level-consistent tree.
#[derive(Default)]
struct TreeBuilder {
    roots: Vec<Section>,
    stack: Vec<Section>,
    /// True while the only open section holds text preceding any heading.
    preamble_open: bool,
}

impl TreeBuilder {
    fn push(&mut self, event: Event) {
        match event {
            Event::Block(text) => {
                if self.stack.is_empty() {
                    self.stack.push(Section::new(String::new(), 2));
                    self.preamble_open = true;
                }
                self.stack.last_mut().expect("open section").push_block(&text);
            }
            Event::Heading(raw_level, heading) => {
                if self.preamble_open {
                    self.close_to(0);
                    self.preamble_open = false;
                }
                let parent_level = self.stack.last().map_or(1, |s| s.level);
                let level = raw_level.min(parent_level + 1).max(2);
                while self.stack.last().is_some_and(|s| s.level >= level) {
                    self.pop();
                }
                self.stack.push(Section::new(heading, level));
            }
        }
    }

    fn pop(&mut self) {
        let done = self.stack.pop().expect("non-empty stack");
        match self.stack.last_mut() {
            Some(parent) => parent.children.push(done),
            None => self.roots.push(done),
        }
    }

    fn close_to(&mut self, depth: usize) {
        while self.stack.len() > depth {
            self.pop();
        }
    }

    fn finish(mut self) -> Vec<Section> {
        self.close_to(0);
        self.roots
    }
}
