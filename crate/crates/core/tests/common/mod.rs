//! Helpers shared by the integration tests: a small schema, dyadic score
//! tables, and a brute-force enumerator of every tree the grammar allows.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spanparse::scorer::ScoreTable;
use spanparse::tree::{Category, Span, SpanTree};
use spanparse::types::{ConstantSpec, ConstId, DomainSchema, ParamSpec, SchemaFile};

/// Five constants: two entities, a unary and a binary predicate, a modifier.
pub fn toy_schema() -> DomainSchema {
    DomainSchema::from_file(SchemaFile {
        types: vec!["e".into(), "m".into()],
        subtypes: vec![],
        default_argument: None,
        constants: vec![
            ConstantSpec::entity("a", "e", "a"),
            ConstantSpec::entity("b", "e", "b"),
            ConstantSpec::predicate("f", vec![ParamSpec::required("e")], "e"),
            ConstantSpec::predicate("g", vec![ParamSpec::required("e"), ParamSpec::optional("m")], "e"),
            ConstantSpec::entity("m", "m", "m"),
        ],
    })
    .unwrap()
}

/// Raw scores that are multiples of 1/8 in [-4, 4], so every tree score is
/// an exact sum and ties compare exactly.
pub fn dyadic_table(n: usize, categories: usize, rng: &mut StdRng) -> ScoreTable {
    ScoreTable::from_raw(n, categories, |_, _| rng.gen_range(-32i32..=32) as f64 / 8.0)
}

/// Every non-root Join-slot subtree over `span`: a constant leaf (labels
/// from `leaves`), Join → Join Join, Join → Join NoSem, and with `ternary`
/// Join → Join Join Join.
pub fn join_trees(span: Span, ternary: bool, leaves: &dyn Fn(Span) -> Vec<Category>) -> Vec<SpanTree> {
    let mut out: Vec<SpanTree> = leaves(span).into_iter().map(|c| SpanTree::leaf(span, c)).collect();
    for s in span.start..span.end {
        let left = join_trees(Span::new(span.start, s), ternary, leaves);
        let right_span = Span::new(s + 1, span.end);
        let right = join_trees(right_span, ternary, leaves);
        for l in &left {
            for r in &right {
                out.push(SpanTree::join(span, vec![l.clone(), r.clone()]));
            }
            out.push(SpanTree::join(span, vec![l.clone(), SpanTree::leaf(right_span, Category::NoSem)]));
        }
    }
    if ternary {
        for s1 in span.start..span.end {
            for s2 in s1 + 1..span.end {
                let a = join_trees(Span::new(span.start, s1), ternary, leaves);
                let b = join_trees(Span::new(s1 + 1, s2), ternary, leaves);
                let c = join_trees(Span::new(s2 + 1, span.end), ternary, leaves);
                for x in &a {
                    for y in &b {
                        for z in &c {
                            out.push(SpanTree::join(span, vec![x.clone(), y.clone(), z.clone()]));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Every complete tree over `n` tokens: a Join-slot tree over the whole
/// input, or NoSem on the left of a Join-slot tree at the root.
pub fn all_trees(n: usize, ternary: bool, leaves: &dyn Fn(Span) -> Vec<Category>) -> Vec<SpanTree> {
    let whole = Span::new(1, n);
    let mut out = join_trees(whole, ternary, leaves);
    for s in 1..n {
        for r in join_trees(Span::new(s + 1, n), ternary, leaves) {
            out.push(SpanTree::join(whole, vec![SpanTree::leaf(Span::new(1, s), Category::NoSem), r]));
        }
    }
    out.into_iter().map(SpanTree::into_root).collect()
}

/// Every constant as a leaf label.
pub fn every_constant(schema: &DomainSchema) -> impl Fn(Span) -> Vec<Category> {
    let ids: Vec<ConstId> = schema.constant_ids().collect();
    move |_| ids.iter().map(|&c| Category::Constant(c)).collect()
}

/// The single best constant of each span under `table` (enough for top-1).
pub fn best_constant(table: &ScoreTable) -> impl Fn(Span) -> Vec<Category> + '_ {
    move |span| {
        let raw = table.raw(span);
        let best = (2..raw.len()).max_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(b.cmp(&a))).unwrap();
        vec![Category::from_index(best)]
    }
}

/// Sum over nodes of raw(node, category) - raw(node, NoSem); NoSem nodes add
/// nothing.
pub fn score_of(table: &ScoreTable, tree: &SpanTree) -> f64 {
    tree.nodes()
        .iter()
        .map(|node| {
            let raw = table.raw(node.span);
            raw[node.category.index()] - raw[0]
        })
        .sum()
}

/// Largest relative error between analytic gradients and central finite
/// differences of the summed tree loss, over `coords` random coordinates
/// with a non-vanishing gradient for each of `inputs` SCAN examples.
pub fn gradient_check(inputs: usize, coords: usize, seed: u64) -> f64 {
    use spanparse::data::scan::generate_scan_sp;
    use spanparse::scorer::{tree_loss, tree_loss_with_grad, EncoderDims, Grads, Lexicon, SpanModel, Vocab};

    let schema = DomainSchema::scan();
    let items = generate_scan_sp(&schema);
    let mut rng = StdRng::seed_from_u64(seed);
    let picked: Vec<_> = (0..inputs).map(|_| items[rng.gen_range(0..items.len())].clone()).collect();
    let vocab = Vocab::new(picked.iter().flat_map(|it| it.utterance.tokens.iter().map(String::as_str)));
    let mut lexicon = Lexicon::default();
    lexicon.insert("walk", schema.lookup("walk").unwrap());
    let model = SpanModel::init(vocab, EncoderDims::default(), schema.num_categories(), 5.0, seed);

    let loss_of = |m: &SpanModel, it: &spanparse::data::scan::ScanItem| {
        tree_loss(&m.score_spans(&it.utterance, &lexicon).unwrap(), &it.tree).total
    };
    let mut worst: f64 = 0.0;
    for it in &picked {
        let fwd = model.forward(&it.utterance, &lexicon).unwrap();
        let (_, d_raw) = tree_loss_with_grad(&fwd.table, &it.tree);
        let mut grads = Grads::zeros_like(&model);
        model.backward(&fwd, &d_raw, &mut grads);
        let n_enc = grads.encoder.len();
        let flat: Vec<f64> = grads.encoder.iter().chain(&grads.classifier).copied().collect();
        let live: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].abs() > 1e-6).collect();
        // half from the encoder, half from the classifier
        let (enc, cls): (Vec<usize>, Vec<usize>) = live.iter().partition(|&&i| i < n_enc);
        for j in 0..coords {
            let pool = if j % 2 == 0 && !enc.is_empty() { &enc } else { &cls };
            let idx = pool[rng.gen_range(0..pool.len())];
            let eps = 1e-5;
            let shifted = |delta: f64| {
                let mut m = model.clone();
                if idx < n_enc {
                    m.encoder.weights[idx] += delta;
                } else {
                    m.classifier.weights[idx - n_enc] += delta;
                }
                loss_of(&m, it)
            };
            let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let analytic = flat[idx];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

/// A random grammar-legal tree over `n` tokens with constants drawn from
/// `constants`.
pub fn random_tree(n: usize, ternary: bool, constants: &[ConstId], rng: &mut StdRng) -> SpanTree {
    let whole = Span::new(1, n);
    if n > 1 && rng.gen_bool(0.25) {
        let s = rng.gen_range(1..n);
        let right = random_join(Span::new(s + 1, n), ternary, constants, rng);
        return SpanTree::join(whole, vec![SpanTree::leaf(Span::new(1, s), Category::NoSem), right]).into_root();
    }
    random_join(whole, ternary, constants, rng).into_root()
}

fn random_join(span: Span, ternary: bool, constants: &[ConstId], rng: &mut StdRng) -> SpanTree {
    let leaf = |rng: &mut StdRng| SpanTree::leaf(span, Category::Constant(constants[rng.gen_range(0..constants.len())]));
    if span.len() == 1 || rng.gen_bool(0.2) {
        return leaf(rng);
    }
    if ternary && span.len() >= 3 && rng.gen_bool(0.3) {
        let s1 = rng.gen_range(span.start..span.end - 1);
        let s2 = rng.gen_range(s1 + 1..span.end);
        let kids = vec![
            random_join(Span::new(span.start, s1), ternary, constants, rng),
            random_join(Span::new(s1 + 1, s2), ternary, constants, rng),
            random_join(Span::new(s2 + 1, span.end), ternary, constants, rng),
        ];
        return SpanTree::join(span, kids);
    }
    let s = rng.gen_range(span.start..span.end);
    let left = random_join(Span::new(span.start, s), ternary, constants, rng);
    let right_span = Span::new(s + 1, span.end);
    let right = if rng.gen_bool(0.3) {
        SpanTree::leaf(right_span, Category::NoSem)
    } else {
        random_join(right_span, ternary, constants, rng)
    };
    SpanTree::join(span, vec![left, right])
}

/// SCAN semantics straight from the command words.
pub fn interpret_scan(command: &str) -> Option<Vec<&'static str>> {
    fn clause(words: &[&str]) -> Option<Vec<&'static str>> {
        let (body, times) = match words.last()? {
            &"twice" => (&words[..words.len() - 1], 2),
            &"thrice" => (&words[..words.len() - 1], 3),
            _ => (words, 1),
        };
        let verb = |w: &str| match w {
            "walk" => Some(Some("WALK")),
            "run" => Some(Some("RUN")),
            "jump" => Some(Some("JUMP")),
            "look" => Some(Some("LOOK")),
            "turn" => Some(None),
            _ => None,
        };
        let turn = |w: &str| match w {
            "left" => Some("LTURN"),
            "right" => Some("RTURN"),
            _ => None,
        };
        let one: Vec<&'static str> = match body {
            [v] => vec![verb(v)??],
            [v, d] => {
                let mut out = vec![turn(d)?];
                out.extend(verb(v)?);
                out
            }
            [v, "opposite", d] => {
                let mut out = vec![turn(d)?, turn(d)?];
                out.extend(verb(v)?);
                out
            }
            [v, "around", d] => {
                let step: Vec<&'static str> = std::iter::once(turn(d)?).chain(verb(v)?).collect();
                step.repeat(4)
            }
            _ => return None,
        };
        Some(one.repeat(times))
    }
    let words: Vec<&str> = command.split_whitespace().collect();
    if let Some(i) = words.iter().position(|w| *w == "and") {
        let mut out = clause(&words[..i])?;
        out.extend(clause(&words[i + 1..])?);
        return Some(out);
    }
    if let Some(i) = words.iter().position(|w| *w == "after") {
        let mut out = clause(&words[i + 1..])?;
        out.extend(clause(&words[..i])?);
        return Some(out);
    }
    clause(&words)
}

/// Generator, executor, independent interpreter and gold trees agree on
/// every SCAN-SP item. Returns the number of items checked.
pub fn check_scan_corpus() -> Result<usize, String> {
    use spanparse::data::scan::{exec_scan, format_actions, generate_scan_sp};
    use spanparse::types::program_of_tree;
    let schema = DomainSchema::scan();
    let items = generate_scan_sp(&schema);
    for it in &items {
        let text = it.utterance.tokens.join(" ");
        let expected = interpret_scan(&text).ok_or_else(|| format!("not a SCAN command: {text}"))?.join(" ");
        let generated = format_actions(&it.actions);
        let executed = exec_scan(&it.program, &schema).map(|a| format_actions(&a)).map_err(|e| e.to_string())?;
        if generated != expected || executed != expected {
            return Err(format!("{text}: expected {expected}, generator {generated}, executor {executed}"));
        }
        match program_of_tree(&it.tree, &schema) {
            Ok(p) if p == it.program => {}
            other => return Err(format!("{text}: gold tree gives {other:?}")),
        }
    }
    Ok(items.len())
}

fn is_partition<T: Clone + Ord>(all: &[T], parts: &[&[T]]) -> bool {
    let mut joined: Vec<T> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
    let mut all = all.to_vec();
    joined.sort();
    all.sort();
    joined == all
}

/// Partition and membership rules of every split strategy.
pub fn check_splits() -> Result<(), String> {
    use spanparse::data::geo::{generate_geo, GeoKb};
    use spanparse::data::scan::generate_scan_sp;
    use spanparse::data::split::{
        anonymize, program_length, split_iid, split_length, split_scan_primitive, split_template, SplitKind,
    };
    let scan: Vec<String> =
        generate_scan_sp(&DomainSchema::scan()).iter().map(|it| it.utterance.tokens.join(" ")).collect();
    let tokens = |s: &String| s.split(' ').map(str::to_string).collect::<Vec<_>>();
    let iid = split_iid(&scan, 0);
    if !is_partition(&scan, &[&iid.train, &iid.dev, &iid.test]) {
        return Err("iid split is not a partition".into());
    }
    let [tr, dv, te] = iid.sizes().map(|x| x as f64 / scan.len() as f64);
    if (tr - 0.64).abs() > 0.005 || (dv - 0.16).abs() > 0.005 || (te - 0.2).abs() > 0.005 {
        return Err(format!("iid ratios {tr:.3}/{dv:.3}/{te:.3}"));
    }
    for kind in [SplitKind::Right, SplitKind::AroundRight] {
        let split = split_scan_primitive(&scan, tokens, kind, 0);
        if !is_partition(&scan, &[&split.train, &split.dev, &split.test]) {
            return Err(format!("{kind} split is not a partition"));
        }
        let held_out = |s: &String| {
            let w: Vec<&str> = s.split(' ').collect();
            match kind {
                SplitKind::Right => {
                    s != "turn right"
                        && w.windows(2).any(|p| p[1] == "right" && ["walk", "run", "jump", "look", "turn"].contains(&p[0]))
                }
                _ => w.windows(2).any(|p| p == ["around", "right"]),
            }
        };
        if !split.test.iter().all(held_out) || split.train.iter().chain(&split.dev).any(held_out) {
            return Err(format!("{kind} membership rule violated"));
        }
        if kind == SplitKind::Right && !split.train.iter().any(|s| s == "turn right") {
            return Err("`turn right` missing from RIGHT train".into());
        }
        let share = split.dev.len() as f64 / (split.train.len() + split.dev.len()) as f64;
        if (share - 0.2).abs() > 0.005 {
            return Err(format!("{kind} dev share {share:.3}"));
        }
    }

    let kb = GeoKb::bundled();
    let schema = DomainSchema::geo(&kb);
    let geo: Vec<(String, String)> = generate_geo(&kb, 0).into_iter().map(|g| (g.utterance, g.program)).collect();
    let template_of = |g: &(String, String)| anonymize(&schema.parse_program(&g.1).unwrap(), &schema);
    let by_template = split_template(&geo, template_of, 0);
    if !is_partition(&geo, &[&by_template.train, &by_template.dev, &by_template.test]) {
        return Err("template split is not a partition".into());
    }
    let sets: Vec<BTreeSet<String>> =
        by_template.parts().iter().map(|(_, p)| p.iter().map(template_of).collect()).collect();
    for a in 0..3 {
        for b in a + 1..3 {
            if !sets[a].is_disjoint(&sets[b]) {
                return Err("a template appears in two template-split parts".into());
            }
        }
    }
    let by_length = split_length(&geo, |g| program_length(&g.1), 0);
    if !is_partition(&geo, &[&by_length.train, &by_length.dev, &by_length.test]) {
        return Err("length split is not a partition".into());
    }
    let longest = by_length.train.iter().chain(&by_length.dev).map(|g| program_length(&g.1)).max().unwrap_or(0);
    let shortest = by_length.test.iter().map(|g| program_length(&g.1)).min().unwrap_or(usize::MAX);
    if shortest < longest {
        return Err(format!("length split: test program of length {shortest} below train length {longest}"));
    }
    Ok(())
}
