//! K-best CKY over a random score table, with and without the ternary rule.
//!
//! cargo run --example kbest_cky -- [n] [k]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spanparse::cky::{build_chart, Grammar};
use spanparse::scorer::ScoreTable;
use spanparse::tree::Utterance;
use spanparse::types::{annotate, DomainSchema};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("number"));
    let n = args.next().unwrap_or(6);
    let k = args.next().unwrap_or(5);
    let schema = DomainSchema::scan();
    let words = "jump around left twice and walk opposite right thrice after look";
    let utt = Utterance::new(&words.split(' ').cycle().take(n).collect::<Vec<_>>().join(" "));

    let mut rng = StdRng::seed_from_u64(3);
    let table = ScoreTable::from_raw(n, schema.num_categories(), |_, _| rng.gen_range(-2.0..2.0));
    for grammar in [Grammar::binary(), Grammar::with_ternary()] {
        let chart = build_chart(&table, grammar, k).unwrap();
        println!("== ternary {}: {} rule applications", grammar.ternary, chart.combinations());
        for (rank, t) in chart.kbest().iter().enumerate() {
            let shown = match annotate(&t.tree, &schema) {
                Ok(a) => format!("valid   {}", a.render(&utt, &schema)),
                Err(_) => format!("invalid {}", t.tree.render(&utt, &schema)),
            };
            println!("{rank} {:7.3} {shown}", t.score);
        }
    }
}
