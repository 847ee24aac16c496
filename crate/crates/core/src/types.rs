//! Domain schemas, programs and type-driven composition.
//!
//! A program is a constant applied to a fixed number of argument slots. Slots
//! may be empty: `turn(·,op)` is `turn` with its manner slot filled and its
//! direction slot still open. Composition is function application, where the
//! type system decides which side is the function and which open slot takes
//! the argument.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CompositionFailure, ProgramError, SchemaError};
use crate::tree::{Category, SpanTree};

/// Index of a constant in its [`DomainSchema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstId(pub u32);

/// Index of a type name in its [`DomainSchema`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantKind {
    Entity,
    Predicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Param {
    pub ty: TypeId,
    /// Optional slots may stay empty in a complete program (`walk(r)`).
    pub optional: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainConstant {
    pub name: String,
    pub kind: ConstantKind,
    pub params: Vec<Param>,
    pub result: TypeId,
    /// Surface phrase of an entity, used by the automatic entity lexicon.
    pub phrase: Option<String>,
}

impl DomainConstant {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Constants, types and the subtype order of one domain.
#[derive(Clone, Debug)]
pub struct DomainSchema {
    types: Vec<String>,
    /// Reflexive-transitive closure: `subtype[a][b]` iff `a <= b`.
    subtype: Vec<Vec<bool>>,
    constants: Vec<DomainConstant>,
    by_name: HashMap<String, ConstId>,
    /// Filler for open required slots of a predicate used as an argument
    /// (`state` becomes `state(all)`).
    default_argument: Option<ConstId>,
    file: SchemaFile,
}

/// On-disk form of a [`DomainSchema`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub types: Vec<String>,
    /// `[sub, super]` pairs.
    #[serde(default)]
    pub subtypes: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_argument: Option<String>,
    pub constants: Vec<ConstantSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ConstantKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<ParamSpec>,
    pub result: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
}

impl ParamSpec {
    pub fn required(ty: &str) -> ParamSpec {
        ParamSpec { ty: ty.to_string(), optional: false }
    }

    pub fn optional(ty: &str) -> ParamSpec {
        ParamSpec { ty: ty.to_string(), optional: true }
    }
}

impl ConstantSpec {
    pub fn entity(name: &str, result: &str, phrase: &str) -> ConstantSpec {
        ConstantSpec {
            name: name.to_string(),
            kind: Some(ConstantKind::Entity),
            args: Vec::new(),
            result: result.to_string(),
            phrase: Some(phrase.to_string()),
        }
    }

    pub fn predicate(name: &str, args: Vec<ParamSpec>, result: &str) -> ConstantSpec {
        ConstantSpec {
            name: name.to_string(),
            kind: Some(ConstantKind::Predicate),
            args,
            result: result.to_string(),
            phrase: None,
        }
    }
}

/// Phrase an entity is mentioned by when the schema gives none:
/// `stateid('new york')` gives `new york`, `salt_lake` gives `salt lake`.
pub fn entity_phrase(name: &str) -> String {
    if let (Some(open), true) = (name.find("('"), name.ends_with("')")) {
        return name[open + 2..name.len() - 2].to_string();
    }
    name.replace('_', " ")
}

impl DomainSchema {
    pub fn from_file(file: SchemaFile) -> Result<DomainSchema, SchemaError> {
        let type_index: HashMap<&str, u16> = file
            .types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i as u16))
            .collect();
        let ty = |name: &str| {
            type_index
                .get(name)
                .map(|&i| TypeId(i))
                .ok_or_else(|| SchemaError::UnknownType(name.to_string()))
        };
        let n = file.types.len();
        let mut direct = vec![Vec::new(); n];
        for [sub, sup] in &file.subtypes {
            direct[ty(sub)?.0 as usize].push(ty(sup)?.0 as usize);
        }
        check_acyclic(&direct, &file.types)?;
        let mut subtype = vec![vec![false; n]; n];
        for (start, row) in subtype.iter_mut().enumerate() {
            let mut stack = vec![start];
            while let Some(t) = stack.pop() {
                if !row[t] {
                    row[t] = true;
                    stack.extend(direct[t].iter().copied());
                }
            }
        }

        let mut constants = Vec::with_capacity(file.constants.len());
        let mut by_name = HashMap::new();
        for spec in &file.constants {
            let kind = spec.kind.unwrap_or(if spec.args.is_empty() {
                ConstantKind::Entity
            } else {
                ConstantKind::Predicate
            });
            if kind == ConstantKind::Predicate && spec.args.is_empty() {
                return Err(SchemaError::NullaryPredicate(spec.name.clone()));
            }
            let params = spec
                .args
                .iter()
                .map(|p| Ok(Param { ty: ty(&p.ty)?, optional: p.optional }))
                .collect::<Result<Vec<_>, SchemaError>>()?;
            let phrase = match kind {
                ConstantKind::Entity => Some(spec.phrase.clone().unwrap_or_else(|| entity_phrase(&spec.name))),
                ConstantKind::Predicate => spec.phrase.clone(),
            };
            let id = ConstId(constants.len() as u32);
            if by_name.insert(spec.name.clone(), id).is_some() {
                return Err(SchemaError::DuplicateConstant(spec.name.clone()));
            }
            constants.push(DomainConstant {
                name: spec.name.clone(),
                kind,
                params,
                result: ty(&spec.result)?,
                phrase,
            });
        }
        let default_argument = match &file.default_argument {
            Some(name) => Some(
                *by_name
                    .get(name)
                    .ok_or_else(|| SchemaError::UnknownDefault(name.clone()))?,
            ),
            None => None,
        };
        Ok(DomainSchema {
            types: file.types.clone(),
            subtype,
            constants,
            by_name,
            default_argument,
            file,
        })
    }

    pub fn to_file(&self) -> &SchemaFile {
        &self.file
    }

    pub fn constants(&self) -> &[DomainConstant] {
        &self.constants
    }

    pub fn constant(&self, id: ConstId) -> &DomainConstant {
        &self.constants[id.0 as usize]
    }

    pub fn num_constants(&self) -> usize {
        self.constants.len()
    }

    /// |C| = |Σ| + 2.
    pub fn num_categories(&self) -> usize {
        self.constants.len() + 2
    }

    pub fn constant_ids(&self) -> impl Iterator<Item = ConstId> {
        (0..self.constants.len() as u32).map(ConstId)
    }

    pub fn lookup(&self, name: &str) -> Option<ConstId> {
        self.by_name.get(name).copied()
    }

    pub fn type_name(&self, ty: TypeId) -> &str {
        &self.types[ty.0 as usize]
    }

    pub fn is_subtype(&self, sub: TypeId, sup: TypeId) -> bool {
        self.subtype[sub.0 as usize][sup.0 as usize]
    }

    pub fn default_argument(&self) -> Option<ConstId> {
        self.default_argument
    }

    /// Type of `p` when used as an argument, together with the argument form
    /// of `p`. Open optional slots are allowed; open required slots are
    /// filled with the default argument when one is declared and fits.
    pub fn as_argument(&self, p: &Program) -> Option<(Program, TypeId)> {
        let head = self.constant(p.head);
        let open_required = head
            .params
            .iter()
            .zip(&p.args)
            .any(|(param, arg)| arg.is_none() && !param.optional);
        if !open_required {
            return Some((p.clone(), head.result));
        }
        let filler = self.default_argument?;
        let filler_ty = self.constant(filler).result;
        let mut filled = p.clone();
        for (param, arg) in head.params.iter().zip(filled.args.iter_mut()) {
            if arg.is_none() && !param.optional {
                if !self.is_subtype(filler_ty, param.ty) {
                    return None;
                }
                *arg = Some(Program::leaf(filler, self));
            }
        }
        Some((filled, head.result))
    }

    /// Applies `function` to `argument`, filling the lowest-index open slot
    /// whose type accepts the argument.
    pub fn apply(&self, function: &Program, argument: &Program) -> Option<Program> {
        let head = self.constant(function.head);
        if !function.args.iter().any(Option::is_none) {
            return None;
        }
        let (arg, arg_ty) = self.as_argument(argument)?;
        let slot = head
            .params
            .iter()
            .zip(&function.args)
            .position(|(param, filled)| filled.is_none() && self.is_subtype(arg_ty, param.ty))?;
        let mut out = function.clone();
        out.args[slot] = Some(arg);
        Some(out)
    }

    /// Composes two adjacent sub-programs. The left program is tried as the
    /// function first; the right one only if that fails.
    pub fn compose(&self, left: &Program, right: &Program) -> Option<Program> {
        self.apply(left, right).or_else(|| self.apply(right, left))
    }

    /// Closes a root program: open required slots are filled with the
    /// default argument. `None` if the program stays unsaturated.
    pub fn finalize(&self, p: &Program) -> Option<Program> {
        self.as_argument(p).map(|(q, _)| q)
    }

    pub fn is_saturated(&self, p: &Program) -> bool {
        let head = self.constant(p.head);
        head.params
            .iter()
            .zip(&p.args)
            .all(|(param, arg)| arg.is_some() || param.optional)
            && p.args.iter().flatten().all(|a| self.is_saturated(a))
    }

    /// Parses the surface syntax, e.g. `capital(loc_2(stateid('new york')))`,
    /// `turn(·,op)` or `jump()`. Arguments are type-checked and put in
    /// argument form (see [`DomainSchema::as_argument`]).
    pub fn parse_program(&self, text: &str) -> Result<Program, ProgramError> {
        let mut parser = ProgramParser { src: text, pos: 0, schema: self };
        let p = parser.program()?;
        parser.skip_ws();
        if parser.pos != text.len() {
            return Err(ProgramError::Syntax(parser.pos, "trailing input".into()));
        }
        Ok(p)
    }
}

fn check_acyclic(direct: &[Vec<usize>], names: &[String]) -> Result<(), SchemaError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(t: usize, direct: &[Vec<usize>], state: &mut [u8]) -> Option<usize> {
        state[t] = 1;
        for &s in &direct[t] {
            match state[s] {
                1 => return Some(s),
                0 => {
                    if let Some(c) = visit(s, direct, state) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        state[t] = 2;
        None
    }
    let mut state = vec![0u8; direct.len()];
    for t in 0..direct.len() {
        if state[t] == 0 {
            if let Some(c) = visit(t, direct, &mut state) {
                return Err(SchemaError::CyclicSubtypes(names[c].clone()));
            }
        }
    }
    Ok(())
}

/// A (possibly partially applied) program: a head constant and one entry per
/// argument slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    pub head: ConstId,
    pub args: Vec<Option<Program>>,
}

impl Program {
    /// The constant with all its slots open.
    pub fn leaf(head: ConstId, schema: &DomainSchema) -> Program {
        Program {
            head,
            args: vec![None; schema.constant(head).arity()],
        }
    }

    pub fn display<'a>(&'a self, schema: &'a DomainSchema) -> ProgramDisplay<'a> {
        ProgramDisplay { program: self, schema }
    }

    /// Number of constants in the program.
    pub fn size(&self) -> usize {
        1 + self.args.iter().flatten().map(Program::size).sum::<usize>()
    }

    /// Every filled sub-program, including `self`, in pre-order.
    pub fn subterms(&self) -> Vec<&Program> {
        let mut out = vec![self];
        for arg in self.args.iter().flatten() {
            out.extend(arg.subterms());
        }
        out
    }
}

pub struct ProgramDisplay<'a> {
    program: &'a Program,
    schema: &'a DomainSchema,
}

impl fmt::Display for ProgramDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = self.schema.constant(self.program.head);
        write!(f, "{}", head.name)?;
        if head.kind == ConstantKind::Entity {
            return Ok(());
        }
        match self.program.args.iter().rposition(Option::is_some) {
            None => {
                if head.params.iter().all(|p| p.optional) {
                    write!(f, "()")?;
                }
            }
            Some(last) => {
                write!(f, "(")?;
                for (i, arg) in self.program.args[..=last].iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    match arg {
                        Some(a) => write!(f, "{}", a.display(self.schema))?,
                        None => write!(f, "·")?,
                    }
                }
                write!(f, ")")?;
            }
        }
        Ok(())
    }
}

struct ProgramParser<'a> {
    src: &'a str,
    pos: usize,
    schema: &'a DomainSchema,
}

impl ProgramParser<'_> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ProgramError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(ProgramError::Syntax(self.pos, format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<&str, ProgramError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ProgramError::Syntax(start, "expected identifier".into()));
        }
        Ok(&self.src[start..self.pos])
    }

    fn program(&mut self) -> Result<Program, ProgramError> {
        let name = self.ident()?.to_string();
        if self.peek() == Some('(') && self.src[self.pos + 1..].trim_start().starts_with('\'') {
            // entity: name('payload')
            self.expect('(')?;
            self.skip_ws();
            self.pos += 1;
            let close = self.src[self.pos..]
                .find('\'')
                .ok_or_else(|| ProgramError::Syntax(self.pos, "unterminated quote".into()))?;
            let payload = &self.src[self.pos..self.pos + close];
            self.pos += close + 1;
            self.expect(')')?;
            let full = format!("{name}('{payload}')");
            let id = self
                .schema
                .lookup(&full)
                .ok_or(ProgramError::UnknownConstant(full))?;
            return Ok(Program::leaf(id, self.schema));
        }
        let id = self
            .schema
            .lookup(&name)
            .ok_or_else(|| ProgramError::UnknownConstant(name.clone()))?;
        let mut program = Program::leaf(id, self.schema);
        if self.peek() != Some('(') {
            return Ok(program);
        }
        self.expect('(')?;
        let mut slot = 0;
        if self.peek() == Some(')') {
            self.pos += 1;
            return Ok(program);
        }
        loop {
            let c = self.peek();
            let arg = if c == Some('·') || c == Some('_') && !self.is_ident_continuation() {
                self.pos += c.unwrap().len_utf8();
                None
            } else {
                Some(self.program()?)
            };
            if slot >= program.args.len() {
                return Err(ProgramError::TooManyArgs(name, program.args.len(), slot + 1));
            }
            if let Some(a) = arg {
                let param = self.schema.constant(id).params[slot];
                let (a, ty) = self
                    .schema
                    .as_argument(&a)
                    .ok_or_else(|| ProgramError::IllTyped(name.clone(), slot))?;
                if !self.schema.is_subtype(ty, param.ty) {
                    return Err(ProgramError::IllTyped(name, slot));
                }
                program.args[slot] = Some(a);
            }
            slot += 1;
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(program);
                }
                _ => return Err(ProgramError::Syntax(self.pos, "expected `,` or `)`".into())),
            }
        }
    }

    fn is_ident_continuation(&self) -> bool {
        self.src[self.pos + 1..]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
    }
}

/// Multiset of constants: constant to occurrence count.
pub type ConstantBag = BTreeMap<ConstId, usize>;

/// All constants appearing in `z`, with multiplicity.
pub fn constants_of(z: &Program) -> ConstantBag {
    let mut bag = ConstantBag::new();
    for t in z.subterms() {
        *bag.entry(t.head).or_insert(0) += 1;
    }
    bag
}

/// Program of a tree node before root finalization. NoSem leaves have none.
fn node_program(node: &SpanTree, schema: &DomainSchema) -> Result<Option<Program>, CompositionFailure> {
    let fail = || CompositionFailure { span: node.span };
    if node.is_leaf() {
        return Ok(match node.category {
            Category::Constant(c) => Some(Program::leaf(c, schema)),
            Category::NoSem => None,
            Category::Join => return Err(fail()),
        });
    }
    let children = node
        .children
        .iter()
        .map(|c| node_program(c, schema))
        .collect::<Result<Vec<_>, _>>()?;
    match children.as_slice() {
        [Some(a), Some(b)] => schema.compose(a, b).map(Some).ok_or_else(fail),
        [Some(a), None] | [None, Some(a)] => Ok(Some(a.clone())),
        [Some(a), Some(mid), Some(b)] => {
            let outer = schema.compose(a, b).ok_or_else(fail)?;
            schema.compose(&outer, mid).map(Some).ok_or_else(fail)
        }
        _ => Err(fail()),
    }
}

/// `program(T)`: composes the tree bottom-up and closes the root program.
pub fn program_of_tree(tree: &SpanTree, schema: &DomainSchema) -> Result<Program, CompositionFailure> {
    let p = node_program(tree, schema)?.ok_or(CompositionFailure { span: tree.span })?;
    schema
        .finalize(&p)
        .ok_or(CompositionFailure { span: tree.span })
}

/// Copy of `tree` with every node's `program` filled in.
pub fn annotate(tree: &SpanTree, schema: &DomainSchema) -> Result<SpanTree, CompositionFailure> {
    fn go(node: &SpanTree, schema: &DomainSchema) -> Result<SpanTree, CompositionFailure> {
        let children = node
            .children
            .iter()
            .map(|c| go(c, schema))
            .collect::<Result<Vec<_>, _>>()?;
        let program = node_program(node, schema)?;
        Ok(SpanTree {
            span: node.span,
            category: node.category,
            children,
            is_root: node.is_root,
            program,
        })
    }
    let mut out = go(tree, schema)?;
    out.program = Some(program_of_tree(tree, schema)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::geo::GeoKb;
    use crate::tree::Span;

    fn geo() -> DomainSchema {
        DomainSchema::geo(&GeoKb::bundled())
    }

    #[test]
    fn compose_predicate_with_entity() {
        let s = geo();
        let next_to = Program::leaf(s.lookup("next_to_1").unwrap(), &s);
        let ny = s.parse_program("stateid('new york')").unwrap();
        let z = s.compose(&next_to, &ny).unwrap();
        assert_eq!(z.display(&s).to_string(), "next_to_1(stateid('new york'))");
        // orientation is decided by types, not position
        assert_eq!(s.compose(&ny, &next_to).unwrap(), z);
    }

    #[test]
    fn entities_do_not_compose() {
        let s = geo();
        let utah = s.parse_program("stateid('utah')").unwrap();
        let ny = s.parse_program("stateid('new york')").unwrap();
        assert_eq!(s.compose(&utah, &ny), None);
    }

    #[test]
    fn argument_goes_to_matching_open_slot() {
        let s = DomainSchema::scan();
        let turn_op = s.parse_program("turn(·,op)").unwrap();
        let l = s.parse_program("l").unwrap();
        let z = s.compose(&turn_op, &l).unwrap();
        assert_eq!(z.display(&s).to_string(), "turn(l,op)");
        let turn = Program::leaf(s.lookup("turn").unwrap(), &s);
        let op = s.parse_program("op").unwrap();
        assert_eq!(s.compose(&turn, &op).unwrap(), turn_op);
    }

    #[test]
    fn vacuous_program_fails_to_type() {
        let s = geo();
        let capital = Program::leaf(s.lookup("capital").unwrap(), &s);
        let peak = s.parse_program("placeid('mount mckinley')").unwrap();
        assert_eq!(s.compose(&capital, &peak), None);
    }

    #[test]
    fn default_argument_fills_unsaturated_collections() {
        let s = geo();
        let state = Program::leaf(s.lookup("state").unwrap(), &s);
        let pop = Program::leaf(s.lookup("pop_1").unwrap(), &s);
        let z = s.compose(&state, &pop).unwrap();
        assert_eq!(z.display(&s).to_string(), "pop_1(state(all))");
        assert_eq!(s.finalize(&state).unwrap().display(&s).to_string(), "state(all)");
    }

    #[test]
    fn display_and_parse_round_trip() {
        let s = DomainSchema::scan();
        for text in ["jump()", "walk(r)", "turn(l,op)", "turn(·,op)", "after(walk(r),twice(turn(l,op)))", "and"] {
            let p = s.parse_program(text).unwrap();
            assert_eq!(p.display(&s).to_string(), text);
        }
        assert!(matches!(s.parse_program("twice(l)"), Err(ProgramError::IllTyped(_, 0))));
        assert!(matches!(s.parse_program("fly()"), Err(ProgramError::UnknownConstant(_))));
        assert!(s.parse_program("walk(r").is_err());
    }

    #[test]
    fn constants_are_counted_with_multiplicity() {
        let s = DomainSchema::scan();
        let z = s.parse_program("and(walk(l),walk(l))").unwrap();
        let bag = constants_of(&z);
        assert_eq!(bag[&s.lookup("walk").unwrap()], 2);
        assert_eq!(bag[&s.lookup("l").unwrap()], 2);
        assert_eq!(bag.values().sum::<usize>(), 5);
    }

    #[test]
    fn nosem_child_copies_sibling_program() {
        let s = geo();
        let state = Category::Constant(s.lookup("state").unwrap());
        let tree = SpanTree::join(
            Span::new(1, 2),
            vec![
                SpanTree::leaf(Span::new(1, 1), state),
                SpanTree::leaf(Span::new(2, 2), Category::NoSem),
            ],
        )
        .into_root();
        let z = program_of_tree(&tree, &s).unwrap();
        assert_eq!(z.display(&s).to_string(), "state(all)");
    }

    #[test]
    fn cyclic_subtypes_are_rejected() {
        let file = SchemaFile {
            types: vec!["a".into(), "b".into()],
            subtypes: vec![["a".into(), "b".into()], ["b".into(), "a".into()]],
            default_argument: None,
            constants: vec![],
        };
        assert!(matches!(DomainSchema::from_file(file), Err(SchemaError::CyclicSubtypes(_))));
    }

    #[test]
    fn entity_phrases() {
        assert_eq!(entity_phrase("stateid('new york')"), "new york");
        assert_eq!(entity_phrase("all"), "all");
    }
}
