//! K-best CKY over span trees.
//!
//! The grammar has nonterminals `S` (root) and `Join`:
//!
//! ```text
//! S    -> Join Join | NoSem Join
//! Join -> Join Join | Join NoSem | c            (c a domain constant)
//! Join -> Join Join Join                        (optional ternary rule)
//! ```
//!
//! A derivation scores the sum of shifted scores of its labeled spans, so
//! NoSem leaves contribute zero. Every cell keeps its K best derivations,
//! produced by lazily merging the sorted child lists of each rule and split.
//! The root also accepts a single `Join` derivation over the whole
//! utterance, so one-word inputs and ternary roots are parseable.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::Serialize;
use serde_json::json;

use crate::error::ParseError;
use crate::scorer::{ScoreTable, NEG_INF};
use crate::tree::{Category, Span, SpanTree};
use crate::types::{annotate, constants_of, program_of_tree, ConstId, DomainSchema, Program};

/// Default beam width.
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Grammar {
    /// Enables `Join -> Join Join Join`.
    pub ternary: bool,
}

impl Grammar {
    pub fn binary() -> Grammar {
        Grammar { ternary: false }
    }

    pub fn with_ternary() -> Grammar {
        Grammar { ternary: true }
    }

    /// Rules as `(lhs, rhs)` strings.
    pub fn rules(&self) -> Vec<(&'static str, &'static [&'static str])> {
        let mut rules: Vec<(&str, &[&str])> = vec![
            ("S", &["Join", "Join"]),
            ("S", &["NoSem", "Join"]),
            ("Join", &["Join", "Join"]),
            ("Join", &["Join", "NoSem"]),
        ];
        if self.ternary {
            rules.push(("Join", &["Join", "Join", "Join"]));
        }
        rules
    }
}

/// A child derivation: bucket within the child cell, and rank in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChildRef {
    pub bucket: u32,
    pub rank: u32,
}

/// Backpointer of a derivation. Splits are the last token of the left part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Back {
    Leaf { constant: ConstId },
    Join { split: usize, left: ChildRef, right: ChildRef },
    JoinNoSem { split: usize, left: ChildRef },
    NoSemJoin { split: usize, right: ChildRef },
    Ternary { s1: usize, s2: usize, children: [ChildRef; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Derivation {
    pub score: f64,
    pub back: Back,
}

impl Derivation {
    pub fn category(&self) -> Category {
        match self.back {
            Back::Leaf { constant } => Category::Constant(constant),
            _ => Category::Join,
        }
    }
}

/// Derivations of one cell, grouped by bucket. Unconstrained parsing uses
/// the single bucket 0; constrained parsing has one bucket per sub-program.
type Cell = BTreeMap<u32, Vec<Derivation>>;

/// How a merge source turns child ranks into a backpointer.
#[derive(Clone, Copy, Debug)]
enum Shape {
    Leaf(ConstId),
    Join { split: usize, buckets: [u32; 2] },
    JoinNoSem { split: usize, bucket: u32 },
    NoSemJoin { split: usize, bucket: u32 },
    Ternary { s1: usize, s2: usize, buckets: [u32; 3] },
    /// Re-ranks an existing list unchanged.
    Copy,
}

struct Source<'a> {
    base: f64,
    lists: [&'a [Derivation]; 3],
    arity: usize,
    shape: Shape,
}

impl Source<'_> {
    fn score(&self, ranks: [u32; 3]) -> f64 {
        let mut s = self.base;
        for m in 0..self.arity {
            s += self.lists[m][ranks[m] as usize].score;
        }
        s
    }

    fn back(&self, ranks: [u32; 3]) -> Back {
        let child = |bucket, m: usize| ChildRef { bucket, rank: ranks[m] };
        match self.shape {
            Shape::Leaf(constant) => Back::Leaf { constant },
            Shape::Join { split, buckets } => Back::Join {
                split,
                left: child(buckets[0], 0),
                right: child(buckets[1], 1),
            },
            Shape::JoinNoSem { split, bucket } => Back::JoinNoSem { split, left: child(bucket, 0) },
            Shape::NoSemJoin { split, bucket } => Back::NoSemJoin { split, right: child(bucket, 0) },
            Shape::Ternary { s1, s2, buckets } => Back::Ternary {
                s1,
                s2,
                children: [child(buckets[0], 0), child(buckets[1], 1), child(buckets[2], 2)],
            },
            Shape::Copy => self.lists[0][ranks[0] as usize].back,
        }
    }
}

/// Heap entry. Higher score first; ties go to the earlier source, then to
/// lower child ranks.
struct Candidate {
    score: f64,
    source: u32,
    ranks: [u32; 3],
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.source.cmp(&self.source))
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

/// Top `k` combinations over all sources. Each source's child lists are
/// sorted, so its best combination uses rank 0 everywhere; popping a
/// candidate pushes its successors. Index `m` is only advanced while all
/// earlier ranks are 0, which reaches every rank tuple exactly once.
fn merge(sources: &[Source], k: usize) -> Vec<Derivation> {
    let mut heap = BinaryHeap::new();
    for (idx, src) in sources.iter().enumerate() {
        if src.lists[..src.arity].iter().all(|l| !l.is_empty()) {
            let ranks = [0; 3];
            heap.push(Candidate { score: src.score(ranks), source: idx as u32, ranks });
        }
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let Some(cand) = heap.pop() else { break };
        let src = &sources[cand.source as usize];
        out.push(Derivation { score: cand.score, back: src.back(cand.ranks) });
        for m in 0..src.arity {
            if cand.ranks[..m].iter().any(|&r| r != 0) {
                break;
            }
            let mut next = cand.ranks;
            next[m] += 1;
            if (next[m] as usize) < src.lists[m].len() {
                heap.push(Candidate { score: src.score(next), source: cand.source, ranks: next });
            }
        }
    }
    out
}

fn masked(score: f64) -> bool {
    score <= NEG_INF / 2.0
}

/// A filled K-best chart.
#[derive(Clone, Debug)]
pub struct Chart {
    n: usize,
    k: usize,
    grammar: Grammar,
    cells: Vec<Cell>,
    root: Vec<Derivation>,
    combinations: u64,
}

/// A tree with its score `S(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTree {
    pub tree: SpanTree,
    pub score: f64,
}

fn cell_index(n: usize, span: Span) -> usize {
    (span.start - 1) * n + (span.end - 1)
}

/// Spans in bottom-up order: by length, then by start.
fn spans_by_length(n: usize) -> impl Iterator<Item = Span> {
    (1..=n).flat_map(move |len| (1..=n + 1 - len).map(move |i| Span::new(i, i + len - 1)))
}

impl Chart {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of `(rule, split)` combinations examined while filling the
    /// chart. Grows as n^3, or n^4 with the ternary rule.
    pub fn combinations(&self) -> u64 {
        self.combinations
    }

    /// `Join` derivations of a span (bucket 0).
    pub fn join_list(&self, span: Span) -> &[Derivation] {
        self.cells[cell_index(self.n, span)]
            .get(&0)
            .map_or(&[], Vec::as_slice)
    }

    pub fn root_list(&self) -> &[Derivation] {
        &self.root
    }

    fn derivation(&self, span: Span, child: ChildRef) -> &Derivation {
        &self.cells[cell_index(self.n, span)][&child.bucket][child.rank as usize]
    }

    fn build(&self, span: Span, d: &Derivation) -> SpanTree {
        match d.back {
            Back::Leaf { constant } => SpanTree::leaf(span, Category::Constant(constant)),
            Back::Join { split, left, right } => {
                let l = Span::new(span.start, split);
                let r = Span::new(split + 1, span.end);
                SpanTree::join(
                    span,
                    vec![self.build(l, self.derivation(l, left)), self.build(r, self.derivation(r, right))],
                )
            }
            Back::JoinNoSem { split, left } => {
                let l = Span::new(span.start, split);
                SpanTree::join(
                    span,
                    vec![
                        self.build(l, self.derivation(l, left)),
                        SpanTree::leaf(Span::new(split + 1, span.end), Category::NoSem),
                    ],
                )
            }
            Back::NoSemJoin { split, right } => {
                let r = Span::new(split + 1, span.end);
                SpanTree::join(
                    span,
                    vec![
                        SpanTree::leaf(Span::new(span.start, split), Category::NoSem),
                        self.build(r, self.derivation(r, right)),
                    ],
                )
            }
            Back::Ternary { s1, s2, children } => {
                let parts = [
                    Span::new(span.start, s1),
                    Span::new(s1 + 1, s2),
                    Span::new(s2 + 1, span.end),
                ];
                let kids = parts
                    .iter()
                    .zip(children)
                    .map(|(&p, c)| self.build(p, self.derivation(p, c)))
                    .collect();
                SpanTree::join(span, kids)
            }
        }
    }

    fn root_tree(&self, d: &Derivation) -> ScoredTree {
        ScoredTree {
            tree: self.build(Span::new(1, self.n), d).into_root(),
            score: d.score,
        }
    }

    /// Root derivations as trees, best first.
    pub fn kbest(&self) -> Vec<ScoredTree> {
        self.root.iter().map(|d| self.root_tree(d)).collect()
    }

    /// Debug view of every cell.
    pub fn to_json(&self, schema: &DomainSchema) -> serde_json::Value {
        let entry = |d: &Derivation| {
            json!({
                "score": d.score,
                "category": d.category().name(schema),
                "back": d.back,
            })
        };
        let cells: Vec<_> = spans_by_length(self.n)
            .flat_map(|span| {
                self.cells[cell_index(self.n, span)]
                    .iter()
                    .map(move |(bucket, list)| (span, *bucket, list))
            })
            .map(|(span, bucket, list)| {
                json!({
                    "span": [span.start, span.end],
                    "bucket": bucket,
                    "derivations": list.iter().map(entry).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "n": self.n,
            "k": self.k,
            "ternary": self.grammar.ternary,
            "combinations": self.combinations,
            "cells": cells,
            "root": self.root.iter().map(entry).collect::<Vec<_>>(),
        })
    }
}

/// Fills the unconstrained chart.
pub fn build_chart(table: &ScoreTable, grammar: Grammar, k: usize) -> Result<Chart, ParseError> {
    let n = table.len();
    if n == 0 {
        return Err(ParseError::EmptyInput);
    }
    let k = k.max(1);
    let mut cells: Vec<Cell> = vec![Cell::new(); n * n];
    let mut combinations = 0u64;
    let join = Category::Join.index();
    for span in spans_by_length(n) {
        let list = {
            let get = |s: Span| cells[cell_index(n, s)].get(&0).map_or(&[][..], Vec::as_slice);
            let scores = table.shifted(span);
            let mut leaves: Vec<(f64, usize)> = (2..scores.len())
                .filter(|&c| !masked(scores[c]))
                .map(|c| (scores[c], c))
                .collect();
            leaves.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            leaves.truncate(k);
            let mut sources: Vec<Source> = leaves
                .iter()
                .map(|&(score, c)| Source {
                    base: score,
                    lists: [&[]; 3],
                    arity: 0,
                    shape: Shape::Leaf(ConstId((c - 2) as u32)),
                })
                .collect();
            let base = scores[join];
            for split in span.start..span.end {
                let left = get(Span::new(span.start, split));
                let right = get(Span::new(split + 1, span.end));
                sources.push(Source {
                    base,
                    lists: [left, right, &[]],
                    arity: 2,
                    shape: Shape::Join { split, buckets: [0, 0] },
                });
                sources.push(Source {
                    base,
                    lists: [left, &[], &[]],
                    arity: 1,
                    shape: Shape::JoinNoSem { split, bucket: 0 },
                });
                combinations += 2;
            }
            if grammar.ternary {
                for s1 in span.start..span.end.saturating_sub(1) {
                    for s2 in s1 + 1..span.end {
                        sources.push(Source {
                            base,
                            lists: [
                                get(Span::new(span.start, s1)),
                                get(Span::new(s1 + 1, s2)),
                                get(Span::new(s2 + 1, span.end)),
                            ],
                            arity: 3,
                            shape: Shape::Ternary { s1, s2, buckets: [0; 3] },
                        });
                        combinations += 1;
                    }
                }
            }
            merge(&sources, k)
        };
        if !list.is_empty() {
            cells[cell_index(n, span)].insert(0, list);
        }
    }
    let whole = Span::new(1, n);
    let root = {
        let get = |s: Span| cells[cell_index(n, s)].get(&0).map_or(&[][..], Vec::as_slice);
        let mut sources = vec![Source {
            base: 0.0,
            lists: [get(whole), &[], &[]],
            arity: 1,
            shape: Shape::Copy,
        }];
        let base = table.shifted(whole)[join];
        for split in 1..n {
            sources.push(Source {
                base,
                lists: [get(Span::new(split + 1, n)), &[], &[]],
                arity: 1,
                shape: Shape::NoSemJoin { split, bucket: 0 },
            });
            combinations += 1;
        }
        merge(&sources, k)
    };
    Ok(Chart { n, k, grammar, cells, root, combinations })
}

/// The K best trees for the whole utterance, best first.
pub fn parse_kbest(table: &ScoreTable, grammar: Grammar, k: usize) -> Result<Vec<ScoredTree>, ParseError> {
    Ok(build_chart(table, grammar, k)?.kbest())
}

/// `S(T)`: sum of shifted scores over the labeled spans of `tree`.
pub fn tree_score(table: &ScoreTable, tree: &SpanTree) -> f64 {
    tree.nodes()
        .iter()
        .filter(|node| node.category != Category::NoSem)
        .map(|node| table.shifted_score(node.span, node.category))
        .sum()
}

/// A semantically valid parse: the tree annotated with sub-programs.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidParse {
    pub tree: SpanTree,
    pub program: Program,
    pub score: f64,
    /// 0-based position among the candidates.
    pub rank: usize,
}

/// The first candidate whose tree composes to a program.
pub fn best_valid_tree(candidates: &[ScoredTree], schema: &DomainSchema) -> Result<ValidParse, ParseError> {
    for (rank, cand) in candidates.iter().enumerate() {
        if let Ok(tree) = annotate(&cand.tree, schema) {
            let program = tree.program.clone().expect("annotated root has a program");
            return Ok(ValidParse { tree, program, score: cand.score, rank });
        }
    }
    Err(ParseError::NoValidTree)
}

/// Sub-programs a constrained derivation may build: every subterm of the
/// gold program with any subset of its filled argument slots emptied, e.g.
/// `turn(·,op)` for `turn(l,op)`.
pub fn admissible_programs(gold: &Program) -> Vec<Program> {
    let mut out = std::collections::BTreeSet::new();
    for t in gold.subterms() {
        let filled: Vec<usize> = (0..t.args.len()).filter(|&i| t.args[i].is_some()).collect();
        for mask in 0u32..(1 << filled.len()) {
            let mut p = t.clone();
            for (bit, &slot) in filled.iter().enumerate() {
                if mask & (1 << bit) == 0 {
                    p.args[slot] = None;
                }
            }
            out.insert(p);
        }
    }
    out.into_iter().collect()
}

/// Admissible programs with memoized composition.
struct Composer<'a> {
    schema: &'a DomainSchema,
    programs: Vec<Program>,
    ids: HashMap<Program, u32>,
    pairs: Vec<Option<Option<u32>>>,
    triples: HashMap<[u32; 3], Option<u32>>,
}

impl<'a> Composer<'a> {
    fn new(gold: &Program, schema: &'a DomainSchema) -> Composer<'a> {
        let programs = admissible_programs(gold);
        let ids = programs.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        let a = programs.len();
        Composer { schema, programs, ids, pairs: vec![None; a * a], triples: HashMap::new() }
    }

    fn id(&self, p: &Program) -> Option<u32> {
        self.ids.get(p).copied()
    }

    fn pair(&mut self, a: u32, b: u32) -> Option<u32> {
        let slot = a as usize * self.programs.len() + b as usize;
        if let Some(known) = self.pairs[slot] {
            return known;
        }
        let result = self
            .schema
            .compose(&self.programs[a as usize], &self.programs[b as usize])
            .and_then(|p| self.id(&p));
        self.pairs[slot] = Some(result);
        result
    }

    /// Outer children compose first, then the middle one.
    fn triple(&mut self, a: u32, mid: u32, b: u32) -> Option<u32> {
        if let Some(&known) = self.triples.get(&[a, mid, b]) {
            return known;
        }
        let schema = self.schema;
        let result = schema
            .compose(&self.programs[a as usize], &self.programs[b as usize])
            .and_then(|outer| schema.compose(&outer, &self.programs[mid as usize]))
            .and_then(|p| self.id(&p));
        self.triples.insert([a, mid, b], result);
        result
    }
}

/// The best tree whose program is exactly `gold`.
///
/// Constants outside `gold` are masked, and every internal node must build
/// an admissible sub-program (see [`admissible_programs`]). Each cell keeps
/// the K best derivations per sub-program, so a high-scoring derivation of
/// one sub-program never pushes out the only derivation of another.
pub fn constrained_parse(
    table: &ScoreTable,
    grammar: Grammar,
    gold: &Program,
    schema: &DomainSchema,
    k: usize,
) -> Result<ScoredTree, ParseError> {
    let n = table.len();
    if n == 0 {
        return Err(ParseError::EmptyInput);
    }
    let k = k.max(1);
    let keep: std::collections::BTreeSet<ConstId> = constants_of(gold).into_keys().collect();
    let table = table.mask_constants(&keep);
    let mut composer = Composer::new(gold, schema);
    let leaf_ids: Vec<(ConstId, u32)> = keep
        .iter()
        .map(|&c| (c, composer.id(&Program::leaf(c, schema)).expect("bare constant is admissible")))
        .collect();
    let mut cells: Vec<Cell> = vec![Cell::new(); n * n];
    let mut combinations = 0u64;
    let join = Category::Join.index();
    for span in spans_by_length(n) {
        let cell = {
            let get = |s: Span| &cells[cell_index(n, s)];
            let scores = table.shifted(span);
            let base = scores[join];
            let mut by_bucket: BTreeMap<u32, Vec<Source>> = BTreeMap::new();
            for &(c, id) in &leaf_ids {
                let score = scores[Category::Constant(c).index()];
                if !masked(score) {
                    by_bucket.entry(id).or_default().push(Source {
                        base: score,
                        lists: [&[]; 3],
                        arity: 0,
                        shape: Shape::Leaf(c),
                    });
                }
            }
            for split in span.start..span.end {
                let left = get(Span::new(span.start, split));
                let right = get(Span::new(split + 1, span.end));
                for (&la, llist) in left {
                    for (&rb, rlist) in right {
                        if let Some(t) = composer.pair(la, rb) {
                            by_bucket.entry(t).or_default().push(Source {
                                base,
                                lists: [llist, rlist, &[]],
                                arity: 2,
                                shape: Shape::Join { split, buckets: [la, rb] },
                            });
                        }
                    }
                    by_bucket.entry(la).or_default().push(Source {
                        base,
                        lists: [llist, &[], &[]],
                        arity: 1,
                        shape: Shape::JoinNoSem { split, bucket: la },
                    });
                }
                combinations += 2;
            }
            if grammar.ternary {
                for s1 in span.start..span.end.saturating_sub(1) {
                    for s2 in s1 + 1..span.end {
                        let (a, m, b) = (
                            get(Span::new(span.start, s1)),
                            get(Span::new(s1 + 1, s2)),
                            get(Span::new(s2 + 1, span.end)),
                        );
                        for (&ia, la) in a {
                            for (&ib, lb) in b {
                                for (&im, lm) in m {
                                    if let Some(t) = composer.triple(ia, im, ib) {
                                        by_bucket.entry(t).or_default().push(Source {
                                            base,
                                            lists: [la, lm, lb],
                                            arity: 3,
                                            shape: Shape::Ternary { s1, s2, buckets: [ia, im, ib] },
                                        });
                                    }
                                }
                            }
                        }
                        combinations += 1;
                    }
                }
            }
            by_bucket
                .into_iter()
                .map(|(id, sources)| (id, merge(&sources, k)))
                .filter(|(_, list)| !list.is_empty())
                .collect::<Cell>()
        };
        cells[cell_index(n, span)] = cell;
    }
    let whole = Span::new(1, n);
    let closes = |id: u32| schema.finalize(&composer.programs[id as usize]).as_ref() == Some(gold);
    let root = {
        let mut sources = Vec::new();
        for (&id, list) in &cells[cell_index(n, whole)] {
            if closes(id) {
                sources.push(Source { base: 0.0, lists: [list, &[], &[]], arity: 1, shape: Shape::Copy });
            }
        }
        let base = table.shifted(whole)[join];
        for split in 1..n {
            for (&id, list) in &cells[cell_index(n, Span::new(split + 1, n))] {
                if closes(id) {
                    sources.push(Source {
                        base,
                        lists: [list, &[], &[]],
                        arity: 1,
                        shape: Shape::NoSemJoin { split, bucket: id },
                    });
                }
            }
        }
        merge(&sources, 1)
    };
    let chart = Chart { n, k, grammar, cells, root, combinations };
    let best = chart.root.first().ok_or(ParseError::NoTreeFound)?;
    let found = chart.root_tree(best);
    debug_assert_eq!(program_of_tree(&found.tree, schema).as_ref(), Ok(gold));
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ConstantSpec, ParamSpec, SchemaFile};

    fn toy_schema() -> DomainSchema {
        DomainSchema::from_file(SchemaFile {
            types: vec!["e".into()],
            subtypes: vec![],
            default_argument: None,
            constants: vec![
                ConstantSpec::entity("a", "e", "a"),
                ConstantSpec::predicate("f", vec![ParamSpec::required("e")], "e"),
            ],
        })
        .unwrap()
    }

    #[test]
    fn single_token() {
        let table = ScoreTable::from_raw(1, 3, |_, c| if c == 2 { 2.0 } else { 0.0 });
        let trees = parse_kbest(&table, Grammar::binary(), 5).unwrap();
        assert_eq!(trees[0].score, 2.0);
        assert_eq!(trees[0].tree.category, Category::Constant(ConstId(0)));
        assert!(trees[0].tree.is_leaf() && trees[0].tree.is_root);
        assert_eq!(trees.len(), 1);
    }

    #[test]
    fn empty_input() {
        let table = ScoreTable::zeros(0, 3);
        assert_eq!(parse_kbest(&table, Grammar::binary(), 5), Err(ParseError::EmptyInput));
    }

    #[test]
    fn kbest_is_sorted_and_trees_are_distinct_and_legal() {
        let n = 5;
        let table = ScoreTable::from_raw(n, 5, |s, c| ((s.start * 7 + s.end * 13 + c * 5) % 11) as f64 - 5.0);
        for grammar in [Grammar::binary(), Grammar::with_ternary()] {
            let trees = parse_kbest(&table, grammar, 20).unwrap();
            assert_eq!(trees.len(), 20);
            for w in trees.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
            let maps: std::collections::BTreeSet<_> = trees.iter().map(|t| format!("{:?}", t.tree.span_map())).collect();
            assert_eq!(maps.len(), trees.len());
            for t in &trees {
                t.tree.validate(grammar.ternary).unwrap();
                assert!((tree_score(&table, &t.tree) - t.score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_top_tree_is_skipped() {
        // "a a f": the best tree joins the two entities, which cannot compose
        let s = toy_schema();
        let a = Category::Constant(s.lookup("a").unwrap()).index();
        let f = Category::Constant(s.lookup("f").unwrap()).index();
        let table = ScoreTable::from_raw(3, 4, |span, c| match (span.start, span.end) {
            (1, 1) | (2, 2) if c == a => 3.0,
            (3, 3) if c == f => 3.0,
            (1, 2) if c == 1 => 2.0,
            (2, 3) if c == 1 => 1.0,
            (1, 3) if c == 1 => 0.0,
            _ if c == 0 => 0.0,
            _ => -5.0,
        });
        let trees = parse_kbest(&table, Grammar::binary(), 5).unwrap();
        assert!(program_of_tree(&trees[0].tree, &s).is_err());
        let valid = best_valid_tree(&trees, &s).unwrap();
        assert!(valid.rank > 0);
        assert_eq!(valid.program.display(&s).to_string(), "f(a)");
        assert_eq!(best_valid_tree(&trees[..valid.rank], &s), Err(ParseError::NoValidTree));
    }

    #[test]
    fn constrained_single_entity_and_too_short() {
        let s = toy_schema();
        let table = ScoreTable::from_raw(1, 4, |_, _| 0.0);
        let a = s.parse_program("a").unwrap();
        let t = constrained_parse(&table, Grammar::binary(), &a, &s, 5).unwrap();
        assert_eq!(t.tree.category, Category::Constant(s.lookup("a").unwrap()));
        let fa = s.parse_program("f(a)").unwrap();
        assert_eq!(
            constrained_parse(&table, Grammar::binary(), &fa, &s, 5),
            Err(ParseError::NoTreeFound)
        );
    }

    #[test]
    fn admissible_subprograms() {
        let s = DomainSchema::scan();
        let z = s.parse_program("twice(turn(l,op))").unwrap();
        let names: Vec<String> = admissible_programs(&z).iter().map(|p| p.display(&s).to_string()).collect();
        for want in ["twice", "twice(turn(l,op))", "turn", "turn(l)", "turn(·,op)", "turn(l,op)", "l", "op"] {
            assert!(names.contains(&want.to_string()), "{want} missing from {names:?}");
        }
        assert_eq!(names.len(), 8);
    }
}
