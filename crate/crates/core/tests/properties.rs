mod common;

use common::{all_trees, dyadic_table, every_constant, random_tree, score_of, toy_schema};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spanparse::cky::{parse_kbest, Grammar};
use spanparse::scorer::{span_probability, ScoreTable};
use spanparse::tree::{tree_from_span_map, Category, Span, SpanTree};
use spanparse::types::{program_of_tree, ConstId, ConstantSpec, DomainSchema, ParamSpec, Program, SchemaFile};

fn rank_view(table: &ScoreTable, grammar: Grammar, k: usize) -> Vec<(f64, String)> {
    parse_kbest(table, grammar, k)
        .unwrap()
        .into_iter()
        .map(|t| (t.score, format!("{:?}", t.tree.span_map())))
        .collect()
}

fn random_schema(rng: &mut StdRng) -> DomainSchema {
    let types: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("t{i}")).collect();
    let pick = |rng: &mut StdRng| types[rng.gen_range(0..types.len())].clone();
    let mut constants = Vec::new();
    for i in 0..rng.gen_range(2..=6) {
        let ty = pick(rng);
        constants.push(ConstantSpec::entity(&format!("e{i}"), &ty, &format!("e{i}")));
    }
    for i in 0..rng.gen_range(1..=5) {
        let params = (0..rng.gen_range(1..=2))
            .map(|_| {
                let ty = pick(rng);
                if rng.gen_bool(0.3) { ParamSpec::optional(&ty) } else { ParamSpec::required(&ty) }
            })
            .collect();
        let result = pick(rng);
        constants.push(ConstantSpec::predicate(&format!("p{i}"), params, &result));
    }
    let subtypes = if types.len() > 1 && rng.gen_bool(0.5) { vec![[types[0].clone(), types[1].clone()]] } else { vec![] };
    DomainSchema::from_file(SchemaFile { types, subtypes, default_argument: None, constants }).unwrap()
}

/// Every filled argument's result type fits its slot.
fn well_typed(p: &Program, schema: &DomainSchema) -> bool {
    let head = schema.constant(p.head);
    p.args.len() == head.params.len()
        && head.params.iter().zip(&p.args).all(|(param, arg)| match arg {
            None => true,
            Some(a) => schema.is_subtype(schema.constant(a.head).result, param.ty) && well_typed(a, schema),
        })
}

fn random_partial(schema: &DomainSchema, rng: &mut StdRng, depth: usize) -> Program {
    let ids: Vec<ConstId> = schema.constant_ids().collect();
    let mut p = Program::leaf(ids[rng.gen_range(0..ids.len())], schema);
    for _ in 0..depth {
        let q = Program::leaf(ids[rng.gen_range(0..ids.len())], schema);
        if let Some(r) = schema.compose(&p, &q) {
            p = r;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn span_map_round_trip(seed in any::<u64>(), n in 1usize..9, ternary in any::<bool>()) {
        let schema = toy_schema();
        let ids: Vec<ConstId> = schema.constant_ids().collect();
        let tree = random_tree(n, ternary, &ids, &mut StdRng::seed_from_u64(seed));
        tree.validate(ternary).unwrap();
        let back = tree_from_span_map(&tree.span_map(), n).unwrap();
        prop_assert_eq!(&back, &tree);
        let json = tree.to_json(&schema);
        prop_assert_eq!(SpanTree::from_json(&json, &schema).unwrap(), tree);
    }

    #[test]
    fn compose_is_deterministic_and_well_typed(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let schema = random_schema(&mut rng);
        for _ in 0..20 {
            let a = random_partial(&schema, &mut rng, 2);
            let b = random_partial(&schema, &mut rng, 2);
            let first = schema.compose(&a, &b);
            prop_assert_eq!(&first, &schema.compose(&a, &b));
            if let Some(p) = first {
                prop_assert!(well_typed(&p, &schema), "{}", p.display(&schema));
                let text = p.display(&schema).to_string();
                prop_assert_eq!(schema.parse_program(&text).unwrap(), p);
            }
        }
    }

    #[test]
    fn program_of_tree_is_pure(seed in any::<u64>(), n in 1usize..8) {
        let schema = DomainSchema::scan();
        let ids: Vec<ConstId> = schema.constant_ids().collect();
        let tree = random_tree(n, false, &ids, &mut StdRng::seed_from_u64(seed));
        let first = program_of_tree(&tree, &schema);
        for _ in 0..3 {
            prop_assert_eq!(&program_of_tree(&tree, &schema), &first);
        }
    }

    #[test]
    fn span_shift_keeps_probabilities_and_ranking(seed in any::<u64>(), n in 1usize..7, ternary in any::<bool>()) {
        let schema = toy_schema();
        let cats = schema.num_categories();
        let mut rng = StdRng::seed_from_u64(seed);
        let table = dyadic_table(n, cats, &mut rng);
        let target = Span::all(n).nth(rng.gen_range(0..Span::count(n))).unwrap();
        let shift = rng.gen_range(-40i32..=40) as f64 / 8.0;
        let moved = ScoreTable::from_raw(n, cats, |s, c| table.raw(s)[c] + if s == target { shift } else { 0.0 });
        let grammar = Grammar { ternary };
        prop_assert_eq!(rank_view(&table, grammar, 8), rank_view(&moved, grammar, 8));
        for c in 0..cats {
            let cat = Category::from_index(c);
            prop_assert!((span_probability(&table, target, cat) - span_probability(&moved, target, cat)).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_nosem_is_zero(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = StdRng::seed_from_u64(seed);
        let table = ScoreTable::from_raw(n, 6, |_, _| rng.gen_range(-30.0..30.0));
        for span in Span::all(n) {
            let total: f64 = (0..6).map(|c| span_probability(&table, span, Category::from_index(c))).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert_eq!(table.shifted(span)[0], 0.0);
        }
    }

    #[test]
    fn beams_are_prefix_stable(seed in any::<u64>(), n in 1usize..8, k1 in 1usize..6, extra in 1usize..6, ternary in any::<bool>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let table = ScoreTable::from_raw(n, 7, |_, _| rng.gen_range(-3.0..3.0));
        let grammar = Grammar { ternary };
        let small = parse_kbest(&table, grammar, k1).unwrap();
        let large = parse_kbest(&table, grammar, k1 + extra).unwrap();
        prop_assert!(large.len() >= small.len());
        for (a, b) in small.iter().zip(&large) {
            prop_assert_eq!(a.score, b.score);
            prop_assert_eq!(a.tree.span_map(), b.tree.span_map());
        }
    }

    #[test]
    fn raising_nosem_only_moves_trees_that_use_the_span(seed in any::<u64>(), n in 1usize..5, ternary in any::<bool>()) {
        // NoSem contributes nothing: a tree's score drops by the raise exactly
        // when the span is one of its semantic nodes, so trees that leave the
        // span unlabeled keep their relative order.
        let schema = toy_schema();
        let cats = schema.num_categories();
        let mut rng = StdRng::seed_from_u64(seed);
        let table = dyadic_table(n, cats, &mut rng);
        let target = Span::all(n).nth(rng.gen_range(0..Span::count(n))).unwrap();
        let raise = rng.gen_range(1i32..=24) as f64 / 8.0;
        let raised = ScoreTable::from_raw(n, cats, |s, c| table.raw(s)[c] + if s == target && c == 0 { raise } else { 0.0 });
        let trees = all_trees(n, ternary, &every_constant(&schema));
        let mut best = f64::NEG_INFINITY;
        for t in &trees {
            let uses = t.nodes().iter().any(|node| node.span == target && node.category != Category::NoSem);
            let expected = score_of(&table, t) - if uses { raise } else { 0.0 };
            prop_assert_eq!(score_of(&raised, t), expected);
            best = best.max(expected);
        }
        prop_assert_eq!(parse_kbest(&raised, Grammar { ternary }, 1).unwrap()[0].score, best);
    }
}
