//! Train on a SCAN-SP split and report test accuracy and span F1.
//!
//! cargo run --release --example train_scan -- [iid|right|aroundRight] [--no-lexicon] [--gold-trees] [--max-train N] [--seed S] [--show-errors]

use std::time::Instant;

use spanparse::data::metrics::{denotation_match, labeled_span_f1};
use spanparse::data::scan::generate_scan_sp;
use spanparse::data::split::{split_iid, split_scan_primitive, SplitKind};
use spanparse::data::{Dataset, Domain};
use spanparse::trainer::{train_with, TrainConfig, TrainExample};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind: SplitKind = args.first().map_or("iid", String::as_str).parse().expect("split kind");
    let flag = |f: &str| args.iter().any(|a| a == f);
    let value = |f: &str| {
        args.iter().position(|a| a == f).map(|i| args[i + 1].parse::<u64>().expect("number"))
    };
    let max_train = value("--max-train").map(|m| m as usize);

    let dataset = Dataset::new("scan-sp", Domain::Scan);
    let items: Vec<TrainExample> = generate_scan_sp(&dataset.schema)
        .into_iter()
        .map(|it| TrainExample { utterance: it.utterance, program: it.program, tree: Some(it.tree) })
        .collect();
    let split = match kind {
        SplitKind::Iid => split_iid(&items, 0),
        _ => split_scan_primitive(&items, |ex| ex.utterance.tokens.clone(), kind, 0),
    };
    let mut train = split.train;
    if let Some(m) = max_train {
        train.truncate(m);
    }
    println!("{kind}: train {}, dev {}, test {}", train.len(), split.dev.len(), split.test.len());

    let config = TrainConfig {
        no_lexicon: flag("--no-lexicon"),
        gold_trees: flag("--gold-trees"),
        seed: value("--seed").unwrap_or(0),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train_with(&dataset, &train, &split.dev, &config, |m| {
        println!("{} ({:.0?})", serde_json::to_string(m).unwrap(), start.elapsed());
    })
    .expect("valid config");

    let parser = &outcome.parser;
    let show = flag("--show-errors");
    let (mut correct, mut shown, mut f1) = (0usize, 0usize, 0.0);
    for ex in &split.test {
        let parsed = parser.parse(&ex.utterance).ok();
        let ok = denotation_match(parsed.as_ref().map(|p| &p.program), &ex.program, &parser.domain, &parser.schema);
        correct += ok as usize;
        if show && !ok && shown < 15 {
            shown += 1;
            let got = parsed.as_ref().map_or("<none>".to_string(), |p| p.tree.render(&ex.utterance, &parser.schema));
            println!("{}\n  gold {}\n  got  {got}", ex.utterance.tokens.join(" "), ex.program.display(&parser.schema));
        }
        f1 += parsed.map_or(0.0, |p| labeled_span_f1(&p.tree, ex.tree.as_ref().unwrap()));
    }
    if show {
        for text in ["walk opposite right", "walk around right twice", "turn right", "walk left twice", "walk twice", "walk opposite left"] {
            let utt = spanparse::tree::Utterance::new(text);
            if let Ok(p) = parser.parse(&utt) {
                println!("{text}: {}", p.tree.render(&utt, &parser.schema));
            }
        }
    }
    let n = split.test.len() as f64;
    println!("test denotation accuracy {:.4}", correct as f64 / n);
    println!("test labeled-span F1     {:.4}", f1 / n);
    println!("total time {:.1?}", start.elapsed());
}
