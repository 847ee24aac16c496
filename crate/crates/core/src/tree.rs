//! Span trees and their categories.
//!
//! A span tree assigns a [`Category`] to utterance spans. Token positions are
//! 1-based and spans are inclusive on both ends, so `(1, n)` covers an
//! utterance of `n` tokens. Every span that is not a node of the tree is
//! implicitly labeled [`Category::NoSem`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TreeError;
use crate::types::{ConstId, DomainSchema, Program};

/// Label of a span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    /// Semantically empty span, or a span that is not a constituent.
    NoSem,
    /// Node whose program is the composition of its children's programs.
    Join,
    /// A domain constant from the active schema.
    Constant(ConstId),
}

impl Category {
    /// Dense index used by score tables: NoSem is 0, Join is 1 and constant
    /// `k` is `k + 2`.
    pub fn index(self) -> usize {
        match self {
            Category::NoSem => 0,
            Category::Join => 1,
            Category::Constant(c) => c.0 as usize + 2,
        }
    }

    pub fn from_index(index: usize) -> Category {
        match index {
            0 => Category::NoSem,
            1 => Category::Join,
            k => Category::Constant(ConstId((k - 2) as u32)),
        }
    }

    /// Whether the category may label a leaf (the terminal set Σ ∪ {NoSem}).
    pub fn is_terminal(self) -> bool {
        !matches!(self, Category::Join)
    }

    pub fn name(self, schema: &DomainSchema) -> String {
        match self {
            Category::NoSem => "NoSem".to_string(),
            Category::Join => "Join".to_string(),
            Category::Constant(c) => schema.constant(c).name.clone(),
        }
    }

    pub fn parse(name: &str, schema: &DomainSchema) -> Result<Category, TreeError> {
        match name {
            "NoSem" => Ok(Category::NoSem),
            "Join" | "S" => Ok(Category::Join),
            other => schema
                .lookup(other)
                .map(Category::Constant)
                .ok_or_else(|| TreeError::UnknownCategory(other.to_string())),
        }
    }
}

/// Inclusive, 1-based token span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        debug_assert!(start >= 1 && start <= end, "invalid span ({start}, {end})");
        Span { start, end }
    }

    pub fn len(self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn contains(self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn crosses(self, other: Span) -> bool {
        let disjoint = self.end < other.start || other.end < self.start;
        !disjoint && !self.contains(other) && !other.contains(self)
    }

    /// All spans of an utterance of length `n`, ordered by start then end.
    pub fn all(n: usize) -> impl Iterator<Item = Span> {
        (1..=n).flat_map(move |i| (i..=n).map(move |j| Span::new(i, j)))
    }

    /// Number of spans in an utterance of length `n`.
    pub fn count(n: usize) -> usize {
        n * (n + 1) / 2
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

/// A tokenized natural-language input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    /// Whitespace tokenization with terminal punctuation (`?`, `.`, `,`)
    /// split into separate tokens. Case is preserved.
    pub fn new(raw_text: &str) -> Utterance {
        let mut tokens = Vec::new();
        for word in raw_text.split_whitespace() {
            let mut trailing = Vec::new();
            let mut stem = word;
            while let Some(last) = stem.chars().last() {
                if matches!(last, '?' | '.' | ',') {
                    trailing.push(last.to_string());
                    stem = &stem[..stem.len() - last.len_utf8()];
                } else {
                    break;
                }
            }
            if !stem.is_empty() {
                tokens.push(stem.to_string());
            }
            tokens.extend(trailing.into_iter().rev());
        }
        Utterance {
            raw_text: raw_text.to_string(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of `span` (1-based, inclusive).
    pub fn span_tokens(&self, span: Span) -> &[String] {
        &self.tokens[span.start - 1..span.end]
    }
}

/// A node of a span tree.
///
/// The root sentinel `S` is represented as a node with `is_root` set; its
/// category is [`Category::Join`] unless the whole tree is a single leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanTree {
    pub span: Span,
    pub category: Category,
    pub children: Vec<SpanTree>,
    pub is_root: bool,
    /// Program of this node, filled in by [`crate::types::annotate`].
    pub program: Option<Program>,
}

impl SpanTree {
    pub fn leaf(span: Span, category: Category) -> SpanTree {
        SpanTree {
            span,
            category,
            children: Vec::new(),
            is_root: false,
            program: None,
        }
    }

    pub fn join(span: Span, children: Vec<SpanTree>) -> SpanTree {
        SpanTree {
            span,
            category: Category::Join,
            children,
            is_root: false,
            program: None,
        }
    }

    pub fn into_root(mut self) -> SpanTree {
        self.is_root = true;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&SpanTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// The tree as a total map from spans of `1..=n` to categories, where
    /// `n` is the root span's end. Non-constituent spans map to NoSem.
    pub fn span_map(&self) -> BTreeMap<Span, Category> {
        let n = self.span.end;
        let mut map: BTreeMap<Span, Category> =
            Span::all(n).map(|s| (s, Category::NoSem)).collect();
        for node in self.nodes() {
            map.insert(node.span, node.category);
        }
        map
    }

    /// Span labels as a dense `(span, category index)` list, in the order of
    /// [`Span::all`]. Used as classification targets.
    pub fn span_labels(&self) -> Vec<(Span, usize)> {
        let mut labels: BTreeMap<Span, usize> = BTreeMap::new();
        for node in self.nodes() {
            labels.insert(node.span, node.category.index());
        }
        Span::all(self.span.end)
            .map(|s| (s, labels.get(&s).copied().unwrap_or(0)))
            .collect()
    }

    /// Bracketed rendering with categories, e.g. `(Join (walk walk) (r right))`.
    pub fn render(&self, utt: &Utterance, schema: &DomainSchema) -> String {
        if self.is_leaf() {
            let words = utt.span_tokens(self.span).join(" ");
            format!("({} {})", self.category.name(schema), words)
        } else {
            let label = if self.is_root {
                "S".to_string()
            } else {
                self.category.name(schema)
            };
            let inner: Vec<String> = self.children.iter().map(|c| c.render(utt, schema)).collect();
            match &self.program {
                Some(p) => format!("({label}:{} {})", p.display(schema), inner.join(" ")),
                None => format!("({label} {})", inner.join(" ")),
            }
        }
    }

    /// Checks that the tree is derivable by the CKY grammar:
    /// `S := Join Join | NoSem Join`, `Join := Join Join | Join NoSem`, plus
    /// `Join := Join Join Join` when `ternary` is set. The root may also be
    /// any Join derivation or a single constant leaf.
    pub fn validate(&self, ternary: bool) -> Result<(), TreeError> {
        self.validate_node(true, ternary)
    }

    fn validate_node(&self, at_root: bool, ternary: bool) -> Result<(), TreeError> {
        if self.is_leaf() {
            if self.category == Category::Join {
                return Err(TreeError::Arity(self.span, "Join leaf".into()));
            }
            if at_root && self.category == Category::NoSem {
                return Err(TreeError::Arity(self.span, "NoSem root".into()));
            }
            return Ok(());
        }
        if self.category != Category::Join {
            return Err(TreeError::Arity(self.span, "internal node must be Join".into()));
        }
        let mut cursor = self.span.start;
        for child in &self.children {
            if child.span.start != cursor || !self.span.contains(child.span) {
                return Err(TreeError::Arity(self.span, "children do not tile the span".into()));
            }
            cursor = child.span.end + 1;
        }
        if cursor != self.span.end + 1 {
            return Err(TreeError::Arity(self.span, "children do not tile the span".into()));
        }
        let nosem: Vec<bool> = self
            .children
            .iter()
            .map(|c| c.category == Category::NoSem)
            .collect();
        match nosem.as_slice() {
            [false, false] | [false, true] => {}
            [true, false] if at_root => {}
            [false, false, false] if ternary => {}
            _ => {
                return Err(TreeError::Arity(
                    self.span,
                    format!("no grammar rule for {} children {:?}", self.children.len(), nosem),
                ))
            }
        }
        for child in &self.children {
            if child.category == Category::NoSem && !child.is_leaf() {
                return Err(TreeError::Arity(child.span, "NoSem node with children".into()));
            }
            child.validate_node(false, ternary)?;
        }
        Ok(())
    }

    pub fn to_json(&self, schema: &DomainSchema) -> TreeJson {
        TreeJson {
            span: [self.span.start, self.span.end],
            category: if self.is_root && !self.is_leaf() {
                "S".to_string()
            } else {
                self.category.name(schema)
            },
            children: self.children.iter().map(|c| c.to_json(schema)).collect(),
        }
    }

    pub fn from_json(json: &TreeJson, schema: &DomainSchema) -> Result<SpanTree, TreeError> {
        let mut tree = Self::from_json_inner(json, schema)?;
        tree.is_root = true;
        Ok(tree)
    }

    fn from_json_inner(json: &TreeJson, schema: &DomainSchema) -> Result<SpanTree, TreeError> {
        let [start, end] = json.span;
        if start < 1 || start > end {
            return Err(TreeError::BadSpan(start, end));
        }
        let children = json
            .children
            .iter()
            .map(|c| Self::from_json_inner(c, schema))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpanTree {
            span: Span::new(start, end),
            category: Category::parse(&json.category, schema)?,
            children,
            is_root: false,
            program: None,
        })
    }
}

/// JSON form of a span tree: `{"span":[i,j],"category":"...","children":[...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeJson {
    pub span: [usize; 2],
    pub category: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeJson>,
}

/// Rebuilds the tree whose constituents are the spans of `map` labeled other
/// than NoSem, adding NoSem leaves for the gaps that binarization requires.
///
/// `map` must label every span of `1..=n`; missing spans are read as NoSem.
pub fn tree_from_span_map(map: &BTreeMap<Span, Category>, n: usize) -> Result<SpanTree, TreeError> {
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let labeled: Vec<(Span, Category)> = map
        .iter()
        .filter(|(s, c)| **c != Category::NoSem && s.end <= n)
        .map(|(s, c)| (*s, *c))
        .collect();
    for (a, (sa, _)) in labeled.iter().enumerate() {
        for (sb, _) in &labeled[a + 1..] {
            if sa.crosses(*sb) {
                return Err(TreeError::Overlap(*sa, *sb));
            }
        }
    }
    let root = Span::new(1, n);
    let root_category = map.get(&root).copied().unwrap_or(Category::NoSem);
    if root_category == Category::NoSem {
        return Err(TreeError::Arity(root, "root span is labeled NoSem".into()));
    }
    let mut tree = build_node(root, root_category, &labeled)?;
    tree.is_root = true;
    Ok(tree)
}

fn build_node(span: Span, category: Category, labeled: &[(Span, Category)]) -> Result<SpanTree, TreeError> {
    // maximal labeled proper sub-spans are the immediate constituents
    let inner: Vec<(Span, Category)> = labeled
        .iter()
        .filter(|(s, _)| *s != span && span.contains(*s))
        .copied()
        .collect();
    let maximal: Vec<(Span, Category)> = inner
        .iter()
        .filter(|(s, _)| !inner.iter().any(|(o, _)| o != s && o.contains(*s)))
        .copied()
        .collect();
    if maximal.is_empty() {
        if category == Category::Join {
            return Err(TreeError::Arity(span, "Join node without constituents".into()));
        }
        return Ok(SpanTree::leaf(span, category));
    }
    if category != Category::Join {
        return Err(TreeError::Arity(
            span,
            "constant-labeled span contains labeled sub-spans".into(),
        ));
    }
    let mut sorted = maximal;
    sorted.sort();
    let mut children = Vec::new();
    let mut cursor = span.start;
    for (s, c) in sorted {
        if s.start > cursor {
            children.push(SpanTree::leaf(Span::new(cursor, s.start - 1), Category::NoSem));
        }
        children.push(build_node(s, c, labeled)?);
        cursor = s.end + 1;
    }
    if cursor <= span.end {
        children.push(SpanTree::leaf(Span::new(cursor, span.end), Category::NoSem));
    }
    let nosem = children.iter().filter(|c| c.category == Category::NoSem).count();
    let legal = match children.len() {
        2 => nosem <= 1,
        3 => nosem == 0,
        _ => false,
    };
    if !legal {
        return Err(TreeError::Arity(
            span,
            format!("{} children with {} NoSem cannot be binarized", children.len(), nosem),
        ));
    }
    Ok(SpanTree::join(span, children))
}

/// All `(span, category)` pairs of nodes whose category is not NoSem.
pub fn labeled_spans(tree: &SpanTree) -> BTreeSet<(Span, Category)> {
    tree.nodes()
        .into_iter()
        .filter(|n| n.category != Category::NoSem)
        .map(|n| (n.span, n.category))
        .collect()
}
