//! Typed composition of sub-programs along a span tree, then execution.
//!
//! cargo run --example compose

use spanparse::data::scan::{exec_scan, format_actions};
use spanparse::tree::{Category, Span, SpanTree, Utterance};
use spanparse::types::{annotate, program_of_tree, DomainSchema, Program};

fn main() {
    let schema = DomainSchema::scan();
    let utt = Utterance::new("Walk right after turn opposite left twice");
    let c = |name: &str| Category::Constant(schema.lookup(name).unwrap());
    let leaf = |i: usize, name: &str| SpanTree::leaf(Span::new(i, i), c(name));
    let join = |i, j, kids| SpanTree::join(Span::new(i, j), kids);

    let tree = join(
        1,
        7,
        vec![
            join(1, 3, vec![join(1, 2, vec![leaf(1, "walk"), leaf(2, "r")]), leaf(3, "after")]),
            join(
                4,
                7,
                vec![
                    join(4, 6, vec![join(4, 5, vec![leaf(4, "turn"), leaf(5, "op")]), leaf(6, "l")]),
                    leaf(7, "twice"),
                ],
            ),
        ],
    )
    .into_root();
    tree.validate(false).unwrap();

    let annotated = annotate(&tree, &schema).unwrap();
    println!("{}", annotated.render(&utt, &schema));
    let z = program_of_tree(&tree, &schema).unwrap();
    println!("program: {}", z.display(&schema));
    println!("actions: {}", format_actions(&exec_scan(&z, &schema).unwrap()));

    // Composition step by step: the left side is tried as the function first.
    let leaf_of = |name: &str| Program::leaf(schema.lookup(name).unwrap(), &schema);
    let turn_op = schema.compose(&leaf_of("turn"), &leaf_of("op")).unwrap();
    let turn_l_op = schema.compose(&turn_op, &leaf_of("l")).unwrap();
    let twice = schema.compose(&turn_l_op, &leaf_of("twice")).unwrap();
    println!("{} | {} | {}", turn_op.display(&schema), turn_l_op.display(&schema), twice.display(&schema));
    println!("walk + jump composes: {}", schema.compose(&leaf_of("walk"), &leaf_of("jump")).is_some());
}
