//! A discontinuous analysis: "state ... most people" where `largest_one`
//! sits between `state` and `pop_1`. Only the ternary rule can build it.
//!
//! cargo run --example non_projective

use spanparse::cky::{constrained_parse, parse_kbest, Grammar, DEFAULT_K};
use spanparse::data::geo::GeoKb;
use spanparse::data::Domain;
use spanparse::scorer::{ScoreTable, NEG_INF};
use spanparse::tree::{Category, Span, SpanTree, Utterance};
use spanparse::types::{annotate, DomainSchema};

fn main() {
    let kb = GeoKb::bundled();
    let schema = DomainSchema::geo(&kb);
    let utt = Utterance::new("State that has the most people ?");
    let gold = schema.parse_program("largest_one(pop_1(state(all)))").unwrap();
    let c = |name: &str| Category::Constant(schema.lookup(name).unwrap());

    // The intended analysis, used only to shape the score table.
    let leaf = |i, j, cat| SpanTree::leaf(Span::new(i, j), cat);
    let target = SpanTree::join(
        Span::new(1, 7),
        vec![
            SpanTree::join(Span::new(1, 4), vec![leaf(1, 1, c("state")), leaf(2, 4, Category::NoSem)]),
            leaf(5, 5, c("largest_one")),
            SpanTree::join(Span::new(6, 7), vec![leaf(6, 6, c("pop_1")), leaf(7, 7, Category::NoSem)]),
        ],
    )
    .into_root();
    let labels = target.span_labels();
    // Each constant may only label the word it belongs to.
    let table = ScoreTable::from_raw(utt.len(), schema.num_categories(), |span, cat| {
        let want = labels.iter().find(|(s, _)| *s == span).map_or(0, |&(_, l)| l);
        if cat == want {
            4.0
        } else if matches!(Category::from_index(cat), Category::Constant(_)) {
            NEG_INF
        } else {
            0.0
        }
    });

    for (name, grammar) in [("binary", Grammar::binary()), ("ternary", Grammar::with_ternary())] {
        println!("== {name} grammar");
        match constrained_parse(&table, grammar, &gold, &schema, DEFAULT_K) {
            Ok(found) => {
                let tree = annotate(&found.tree, &schema).unwrap();
                println!("constrained parse: {}", tree.render(&utt, &schema));
                let answer = Domain::Geo(kb.clone()).execute(tree.program.as_ref().unwrap(), &schema).unwrap();
                println!("answer: {}", serde_json::to_string(&answer).unwrap());
            }
            Err(e) => println!("constrained parse: {e}"),
        }
        let best = &parse_kbest(&table, grammar, 1).unwrap()[0];
        println!("unconstrained best score {:.1}", best.score);
    }
}
