//! SCAN-SP: SCAN navigation commands paired with programs.
//!
//! Commands and programs are generated together by a synchronous
//! context-free grammar. Every derivation also yields the gold span tree
//! (terminals become constant leaves, rule bodies are bracketed
//! left-to-right), and the action sequence is computed from the command
//! words alone, independently of the program.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ExecError;
use crate::scorer::Lexicon;
use crate::tree::{Category, Span, SpanTree, Utterance};
use crate::types::{ConstantSpec, DomainSchema, ParamSpec, Program, SchemaFile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "WALK")]
    Walk,
    #[serde(rename = "JUMP")]
    Jump,
    #[serde(rename = "RUN")]
    Run,
    #[serde(rename = "LOOK")]
    Look,
    #[serde(rename = "LTURN")]
    LTurn,
    #[serde(rename = "RTURN")]
    RTurn,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Walk => "WALK",
            Action::Jump => "JUMP",
            Action::Run => "RUN",
            Action::Look => "LOOK",
            Action::LTurn => "LTURN",
            Action::RTurn => "RTURN",
        };
        f.write_str(s)
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Action, String> {
        Ok(match s {
            "WALK" => Action::Walk,
            "JUMP" => Action::Jump,
            "RUN" => Action::Run,
            "LOOK" => Action::Look,
            "LTURN" => Action::LTurn,
            "RTURN" => Action::RTurn,
            other => return Err(format!("unknown action `{other}`")),
        })
    }
}

pub fn format_actions(actions: &[Action]) -> String {
    actions.iter().map(Action::to_string).collect::<Vec<_>>().join(" ")
}

impl DomainSchema {
    /// The SCAN-SP program language: binary predicates `and`, `after`,
    /// `walk`, `jump`, `run`, `look`, `turn`; unary `twice`, `thrice`; and
    /// the constants `l`, `r` (directions) and `op`, `ar` (manners).
    pub fn scan() -> DomainSchema {
        DomainSchema::from_file(scan_schema_file()).expect("built-in SCAN schema is valid")
    }
}

pub fn scan_schema_file() -> SchemaFile {
    let action = || ParamSpec::required("action");
    let mut constants = vec![
        ConstantSpec::predicate("and", vec![action(), action()], "action"),
        ConstantSpec::predicate("after", vec![action(), action()], "action"),
    ];
    for verb in ["walk", "jump", "run", "look"] {
        constants.push(ConstantSpec::predicate(
            verb,
            vec![ParamSpec::optional("direction"), ParamSpec::optional("manner")],
            "action",
        ));
    }
    constants.push(ConstantSpec::predicate(
        "turn",
        vec![ParamSpec::required("direction"), ParamSpec::optional("manner")],
        "action",
    ));
    constants.push(ConstantSpec::predicate("twice", vec![action()], "action"));
    constants.push(ConstantSpec::predicate("thrice", vec![action()], "action"));
    for (name, ty) in [("l", "direction"), ("r", "direction"), ("op", "manner"), ("ar", "manner")] {
        constants.push(ConstantSpec::entity(name, ty, name));
    }
    SchemaFile {
        types: vec!["action".into(), "direction".into(), "manner".into()],
        subtypes: Vec::new(),
        default_argument: None,
        constants,
    }
}

/// Hand-written phrases for every SCAN-SP constant (at most two each).
pub fn scan_manual_lexicon(schema: &DomainSchema) -> Lexicon {
    let mut lex = Lexicon::default();
    let pairs = [
        ("and", "and"),
        ("after", "after"),
        ("walk", "walk"),
        ("jump", "jump"),
        ("run", "run"),
        ("look", "look"),
        ("turn", "turn"),
        ("twice", "twice"),
        ("thrice", "thrice"),
        ("left", "l"),
        ("right", "r"),
        ("opposite", "op"),
        ("around", "ar"),
    ];
    for (phrase, name) in pairs {
        lex.insert(phrase, schema.lookup(name).expect("SCAN constant"));
    }
    lex
}

/// Executes a SCAN-SP program to its action sequence.
///
/// `after(a, b)` runs `b` first; `opposite` turns twice before the action;
/// `around` repeats turn-then-action four times.
pub fn exec_scan(z: &Program, schema: &DomainSchema) -> Result<Vec<Action>, ExecError> {
    let head = schema.constant(z.head);
    let unsat = || ExecError::Unsaturated(z.display(schema).to_string());
    let arg = |k: usize| z.args.get(k).and_then(Option::as_ref);
    let name = head.name.as_str();
    match name {
        "and" | "after" => {
            let a = exec_scan(arg(0).ok_or_else(unsat)?, schema)?;
            let b = exec_scan(arg(1).ok_or_else(unsat)?, schema)?;
            Ok(if name == "and" { [a, b].concat() } else { [b, a].concat() })
        }
        "twice" | "thrice" => {
            let body = exec_scan(arg(0).ok_or_else(unsat)?, schema)?;
            Ok(body.repeat(if name == "twice" { 2 } else { 3 }))
        }
        "walk" | "jump" | "run" | "look" | "turn" => {
            let primitive = match name {
                "walk" => Some(Action::Walk),
                "jump" => Some(Action::Jump),
                "run" => Some(Action::Run),
                "look" => Some(Action::Look),
                _ => None,
            };
            let direction = match arg(0).map(|d| schema.constant(d.head).name.as_str()) {
                Some("l") => Some(Action::LTurn),
                Some("r") => Some(Action::RTurn),
                Some(other) => return Err(ExecError::Unsupported(other.to_string())),
                None => None,
            };
            let manner = arg(1).map(|m| schema.constant(m.head).name.clone());
            let Some(turn) = direction else {
                return match (primitive, manner) {
                    (Some(p), None) => Ok(vec![p]),
                    _ => Err(unsat()),
                };
            };
            let step: Vec<Action> = std::iter::once(turn).chain(primitive).collect();
            Ok(match manner.as_deref() {
                None => step,
                Some("op") => std::iter::once(turn).chain(step).collect(),
                Some("ar") => step.repeat(4),
                Some(other) => return Err(ExecError::Unsupported(other.to_string())),
            })
        }
        other => Err(ExecError::Unsupported(other.to_string())),
    }
}

/// Action sequence of a SCAN command, computed from its words.
pub fn interpret_command(tokens: &[String]) -> Option<Vec<Action>> {
    if let Some(k) = tokens.iter().position(|t| t == "and" || t == "after") {
        let left = interpret_clause(&tokens[..k])?;
        let right = interpret_clause(&tokens[k + 1..])?;
        return Some(if tokens[k] == "and" {
            [left, right].concat()
        } else {
            [right, left].concat()
        });
    }
    interpret_clause(tokens)
}

fn interpret_clause(tokens: &[String]) -> Option<Vec<Action>> {
    let (body, times) = match tokens.last().map(String::as_str) {
        Some("twice") => (&tokens[..tokens.len() - 1], 2),
        Some("thrice") => (&tokens[..tokens.len() - 1], 3),
        _ => (tokens, 1),
    };
    let words: Vec<&str> = body.iter().map(String::as_str).collect();
    let primitive = |w: &str| match w {
        "walk" => Some(Some(Action::Walk)),
        "jump" => Some(Some(Action::Jump)),
        "run" => Some(Some(Action::Run)),
        "look" => Some(Some(Action::Look)),
        "turn" => Some(None),
        _ => None,
    };
    let direction = |w: &str| match w {
        "left" => Some(Action::LTurn),
        "right" => Some(Action::RTurn),
        _ => None,
    };
    let once: Vec<Action> = match words.as_slice() {
        [verb] => vec![primitive(verb)??],
        [verb, dir] => {
            let mut v = vec![direction(dir)?];
            v.extend(primitive(verb)?);
            v
        }
        [verb, "opposite", dir] => {
            let d = direction(dir)?;
            let mut v = vec![d, d];
            v.extend(primitive(verb)?);
            v
        }
        [verb, "around", dir] => {
            let d = direction(dir)?;
            let mut step = vec![d];
            step.extend(primitive(verb)?);
            step.repeat(4)
        }
        _ => return None,
    };
    Some(once.repeat(times))
}

/// Right-hand-side symbol on the utterance side of an SCFG rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceSymbol {
    /// A word, optionally aligned with the constant it contributes.
    Word { word: String, constant: Option<String> },
    /// A nonterminal, linked to the target side by `link`.
    Nonterminal { name: String, link: usize },
}

/// Program side of an SCFG rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetTerm {
    Link(usize),
    Constant(String),
    Apply(Box<TargetTerm>, Vec<Option<TargetTerm>>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScfgRule {
    pub lhs: String,
    pub source: Vec<SourceSymbol>,
    pub target: TargetTerm,
}

impl ScfgRule {
    /// Linked nonterminal names on the source side, ordered by link.
    pub fn source_links(&self) -> Vec<(usize, String)> {
        let mut links: Vec<(usize, String)> = self
            .source
            .iter()
            .filter_map(|s| match s {
                SourceSymbol::Nonterminal { name, link } => Some((*link, name.clone())),
                SourceSymbol::Word { .. } => None,
            })
            .collect();
        links.sort();
        links
    }

    pub fn target_links(&self) -> Vec<usize> {
        fn walk(t: &TargetTerm, out: &mut Vec<usize>) {
            match t {
                TargetTerm::Link(k) => out.push(*k),
                TargetTerm::Constant(_) => {}
                TargetTerm::Apply(head, args) => {
                    walk(head, out);
                    args.iter().flatten().for_each(|a| walk(a, out));
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.target, &mut out);
        out.sort();
        out
    }
}

/// One derivation of an SCFG nonterminal.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub tokens: Vec<String>,
    pub program: Program,
    /// Gold tree with spans starting at 1.
    pub tree: SpanTree,
}

struct Part {
    tokens: Vec<String>,
    program: Option<Program>,
    tree: SpanTree,
}

#[derive(Clone, Debug)]
pub struct Scfg {
    pub start: String,
    pub rules: Vec<ScfgRule>,
}

impl Scfg {
    /// The SCAN command grammar paired with SCAN-SP programs.
    pub fn scan() -> Scfg {
        use SourceSymbol::*;
        use TargetTerm::*;
        let nt = |name: &str, link| Nonterminal { name: name.into(), link };
        let word = |w: &str, c: &str| Word { word: w.into(), constant: Some(c.into()) };
        let rule = |lhs: &str, source: Vec<SourceSymbol>, target| ScfgRule { lhs: lhs.into(), source, target };
        let app = |head: TargetTerm, args: Vec<Option<TargetTerm>>| Apply(Box::new(head), args);
        let mut rules = vec![
            rule("C", vec![nt("S", 1)], Link(1)),
            rule(
                "C",
                vec![nt("S", 1), word("and", "and"), nt("S", 2)],
                app(Constant("and".into()), vec![Some(Link(1)), Some(Link(2))]),
            ),
            rule(
                "C",
                vec![nt("S", 1), word("after", "after"), nt("S", 2)],
                app(Constant("after".into()), vec![Some(Link(1)), Some(Link(2))]),
            ),
            rule("S", vec![nt("V", 1)], Link(1)),
            rule(
                "S",
                vec![nt("V", 1), word("twice", "twice")],
                app(Constant("twice".into()), vec![Some(Link(1))]),
            ),
            rule(
                "S",
                vec![nt("V", 1), word("thrice", "thrice")],
                app(Constant("thrice".into()), vec![Some(Link(1))]),
            ),
            rule("V", vec![nt("U", 1)], Link(1)),
            rule("V", vec![nt("U", 1), nt("Dir", 2)], app(Link(1), vec![Some(Link(2)), None])),
            rule(
                "V",
                vec![nt("U", 1), nt("Man", 2), nt("Dir", 3)],
                app(Link(1), vec![Some(Link(3)), Some(Link(2))]),
            ),
            rule(
                "V",
                vec![word("turn", "turn"), nt("Dir", 1)],
                app(Constant("turn".into()), vec![Some(Link(1)), None]),
            ),
            rule(
                "V",
                vec![word("turn", "turn"), nt("Man", 1), nt("Dir", 2)],
                app(Constant("turn".into()), vec![Some(Link(2)), Some(Link(1))]),
            ),
        ];
        for verb in ["walk", "look", "run", "jump"] {
            rules.push(rule("U", vec![word(verb, verb)], Constant(verb.into())));
        }
        for (w, c) in [("left", "l"), ("right", "r")] {
            rules.push(rule("Dir", vec![word(w, c)], Constant(c.into())));
        }
        for (w, c) in [("opposite", "op"), ("around", "ar")] {
            rules.push(rule("Man", vec![word(w, c)], Constant(c.into())));
        }
        Scfg { start: "C".into(), rules }
    }

    /// Exhaustively enumerates the derivations of the start symbol, in rule
    /// order. The grammar must not be recursive.
    pub fn enumerate(&self, schema: &DomainSchema) -> Vec<Derivation> {
        let mut memo = HashMap::new();
        self.expand(&self.start, schema, &mut memo)
    }

    fn expand(
        &self,
        lhs: &str,
        schema: &DomainSchema,
        memo: &mut HashMap<String, Vec<Derivation>>,
    ) -> Vec<Derivation> {
        if let Some(done) = memo.get(lhs) {
            return done.clone();
        }
        let mut out = Vec::new();
        for rule in self.rules.iter().filter(|r| r.lhs == lhs) {
            // one option list per source symbol
            let options: Vec<Vec<Part>> = rule
                .source
                .iter()
                .map(|sym| match sym {
                    SourceSymbol::Word { word, constant } => {
                        let category = constant
                            .as_ref()
                            .map(|c| Category::Constant(schema.lookup(c).expect("constant in schema")))
                            .unwrap_or(Category::NoSem);
                        vec![Part {
                            tokens: vec![word.clone()],
                            program: None,
                            tree: SpanTree::leaf(Span::new(1, 1), category),
                        }]
                    }
                    SourceSymbol::Nonterminal { name, .. } => self
                        .expand(name, schema, memo)
                        .into_iter()
                        .map(|d| Part {
                            tokens: d.tokens,
                            program: Some(d.program),
                            tree: d.tree,
                        })
                        .collect(),
                })
                .collect();
            let mut choice = vec![0usize; options.len()];
            'product: loop {
                let parts: Vec<&Part> = choice.iter().zip(&options).map(|(&k, o)| &o[k]).collect();
                out.push(self.combine(rule, &parts, schema));
                for pos in (0..choice.len()).rev() {
                    choice[pos] += 1;
                    if choice[pos] < options[pos].len() {
                        continue 'product;
                    }
                    choice[pos] = 0;
                }
                break;
            }
        }
        memo.insert(lhs.to_string(), out.clone());
        out
    }

    fn combine(&self, rule: &ScfgRule, parts: &[&Part], schema: &DomainSchema) -> Derivation {
        let mut tokens = Vec::new();
        let mut subtrees = Vec::new();
        let mut bound = HashMap::new();
        for (sym, part) in rule.source.iter().zip(parts) {
            let offset = tokens.len();
            tokens.extend(part.tokens.iter().cloned());
            subtrees.push(shift_tree(&part.tree, offset));
            if let SourceSymbol::Nonterminal { link, .. } = sym {
                bound.insert(*link, part.program.clone().expect("nonterminal part has a program"));
            }
        }
        let mut iter = subtrees.into_iter();
        let mut tree = iter.next().expect("non-empty rule");
        for next in iter {
            let span = Span::new(tree.span.start, next.span.end);
            tree = SpanTree::join(span, vec![tree, next]);
        }
        Derivation {
            program: eval_target(&rule.target, &bound, schema),
            tokens,
            tree,
        }
    }
}

fn shift_tree(tree: &SpanTree, offset: usize) -> SpanTree {
    SpanTree {
        span: Span::new(tree.span.start + offset, tree.span.end + offset),
        category: tree.category,
        children: tree.children.iter().map(|c| shift_tree(c, offset)).collect(),
        is_root: false,
        program: None,
    }
}

fn eval_target(t: &TargetTerm, bound: &HashMap<usize, Program>, schema: &DomainSchema) -> Program {
    match t {
        TargetTerm::Link(k) => bound[k].clone(),
        TargetTerm::Constant(name) => Program::leaf(schema.lookup(name).expect("constant in schema"), schema),
        TargetTerm::Apply(head, args) => {
            let mut p = eval_target(head, bound, schema);
            for (slot, arg) in args.iter().enumerate() {
                if let Some(a) = arg {
                    p.args[slot] = Some(eval_target(a, bound, schema));
                }
            }
            p
        }
    }
}

/// A generated SCAN-SP item: utterance `x`, program `z`, gold tree and
/// action sequence `y`.
#[derive(Clone, Debug)]
pub struct ScanItem {
    pub utterance: Utterance,
    pub program: Program,
    pub tree: SpanTree,
    pub actions: Vec<Action>,
}

/// Generates every SCAN command with its program, gold tree and actions.
pub fn generate_scan_sp(schema: &DomainSchema) -> Vec<ScanItem> {
    Scfg::scan()
        .enumerate(schema)
        .into_iter()
        .map(|d| {
            let actions = interpret_command(&d.tokens).expect("generated command is interpretable");
            ScanItem {
                utterance: Utterance::new(&d.tokens.join(" ")),
                program: d.program,
                tree: d.tree.into_root(),
                actions,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::program_of_tree;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn walk_right_after_turn_opposite_left_twice() {
        let schema = DomainSchema::scan();
        let items = generate_scan_sp(&schema);
        let item = items
            .iter()
            .find(|i| i.utterance.raw_text == "walk right after turn opposite left twice")
            .unwrap();
        assert_eq!(item.program.display(&schema).to_string(), "after(walk(r),twice(turn(l,op)))");
        assert_eq!(format_actions(&item.actions), "LTURN LTURN LTURN LTURN RTURN WALK");
        assert_eq!(program_of_tree(&item.tree, &schema).unwrap(), item.program);
    }

    #[test]
    fn bare_primitive() {
        let schema = DomainSchema::scan();
        let jump = schema.parse_program("jump()").unwrap();
        assert_eq!(exec_scan(&jump, &schema).unwrap(), vec![Action::Jump]);
        assert_eq!(interpret_command(&toks("jump")).unwrap(), vec![Action::Jump]);
    }

    #[test]
    fn executor_examples() {
        let s = DomainSchema::scan();
        let run = |p: &str| format_actions(&exec_scan(&s.parse_program(p).unwrap(), &s).unwrap());
        assert_eq!(run("twice(turn(l,op))"), "LTURN LTURN LTURN LTURN");
        assert_eq!(run("walk(r)"), "RTURN WALK");
        assert_eq!(run("look(l,ar)"), "LTURN LOOK LTURN LOOK LTURN LOOK LTURN LOOK");
        assert_eq!(run("turn(r,ar)"), "RTURN RTURN RTURN RTURN");
        assert_eq!(run("and(jump(),thrice(turn(l)))"), "JUMP LTURN LTURN LTURN");
    }

    #[test]
    fn unsaturated_programs_do_not_execute() {
        let s = DomainSchema::scan();
        let partial = s.parse_program("after(walk(r),·)").unwrap();
        assert!(matches!(exec_scan(&partial, &s), Err(ExecError::Unsaturated(_))));
        let turn = s.parse_program("turn(·,op)").unwrap();
        assert!(matches!(exec_scan(&turn, &s), Err(ExecError::Unsaturated(_))));
    }

    #[test]
    fn corpus_size() {
        let schema = DomainSchema::scan();
        assert_eq!(Scfg::scan().enumerate(&schema).len(), 20_910);
    }

    #[test]
    fn rules_link_the_same_nonterminals_on_both_sides() {
        for rule in Scfg::scan().rules {
            let src: Vec<usize> = rule.source_links().into_iter().map(|(k, _)| k).collect();
            assert_eq!(src, rule.target_links(), "rule for {}", rule.lhs);
        }
    }
}
