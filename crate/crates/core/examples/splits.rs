//! Dataset generation and the five split strategies.
//!
//! cargo run --example splits

use std::collections::BTreeSet;

use spanparse::data::geo::{generate_geo, GeoKb};
use spanparse::data::scan::{format_actions, generate_scan_sp};
use spanparse::data::split::{
    anonymize, program_length, split_iid, split_length, split_scan_primitive, split_template, SplitKind,
};
use spanparse::types::DomainSchema;

fn main() {
    let schema = DomainSchema::scan();
    let scan = generate_scan_sp(&schema);
    println!("SCAN-SP: {} commands", scan.len());
    for item in scan.iter().step_by(4001).take(5) {
        println!(
            "  {} -> {} -> {}",
            item.utterance.tokens.join(" "),
            item.program.display(&schema),
            format_actions(&item.actions)
        );
    }
    let tokens = |it: &spanparse::data::scan::ScanItem| it.utterance.tokens.clone();
    println!("  iid          {:?}", split_iid(&scan, 0).sizes());
    for kind in [SplitKind::Right, SplitKind::AroundRight] {
        println!("  {:12} {:?}", kind.name(), split_scan_primitive(&scan, tokens, kind, 0).sizes());
    }

    let kb = GeoKb::bundled();
    let geo_schema = DomainSchema::geo(&kb);
    let geo = generate_geo(&kb, 0);
    println!("Geo: {} questions", geo.len());
    let template_of = |it: &spanparse::data::geo::GeoItem| {
        anonymize(&geo_schema.parse_program(&it.program).unwrap(), &geo_schema)
    };
    let by_template = split_template(&geo, template_of, 0);
    let seen: Vec<BTreeSet<String>> =
        by_template.parts().iter().map(|(_, part)| part.iter().map(template_of).collect()).collect();
    println!("  iid          {:?}", split_iid(&geo, 0).sizes());
    println!(
        "  template     {:?}, templates per part {:?}",
        by_template.sizes(),
        seen.iter().map(BTreeSet::len).collect::<Vec<_>>()
    );
    let by_length = split_length(&geo, |it| program_length(&it.program), 0);
    let longest_train = by_length.train.iter().map(|it| program_length(&it.program)).max().unwrap_or(0);
    let shortest_test = by_length.test.iter().map(|it| program_length(&it.program)).min().unwrap_or(0);
    println!(
        "  length       {:?}, longest train program {longest_train}, shortest test program {shortest_test}",
        by_length.sizes()
    );
}
