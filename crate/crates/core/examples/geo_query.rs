//! Geography questions over the bundled knowledge base: lexicon matches,
//! program execution, and a constrained parse from an untrained model that
//! leans on the lexicon features alone.
//!
//! cargo run --example geo_query

use spanparse::cky::{constrained_parse, Grammar, DEFAULT_K};
use spanparse::data::geo::{exec_funql, generate_geo, geo_manual_lexicon, GeoKb};
use spanparse::scorer::{EncoderDims, Lexicon, SpanModel, Vocab};
use spanparse::tree::{Span, Utterance};
use spanparse::types::{annotate, DomainSchema};

fn main() {
    let kb = GeoKb::bundled();
    let schema = DomainSchema::geo(&kb);
    let mut lexicon = Lexicon::auto_entities(&schema);
    lexicon.merge(&geo_manual_lexicon(&schema));
    println!("{} constants, {} lexicon entries", schema.num_constants(), lexicon.len());

    let utt = Utterance::new("What is the capital of states that New York borders?");
    let gold = schema.parse_program("capital(loc_2(state(next_to_1(stateid('new york')))))").unwrap();
    println!("tokens: {:?}", utt.tokens);
    for span in Span::all(utt.len()).filter(|s| s.len() <= lexicon.max_phrase_len()) {
        for c in lexicon.lookup(utt.span_tokens(span)) {
            println!("  lexicon {:?} -> {}", utt.span_tokens(span).join(" "), schema.constant(c).name);
        }
    }
    let answer = exec_funql(&gold, &schema, &kb).unwrap();
    println!("{} = {answer:?}", gold.display(&schema));

    let vocab = Vocab::new(utt.tokens.iter().map(String::as_str));
    let model = SpanModel::init(vocab, EncoderDims::default(), schema.num_categories(), 5.0, 0);
    let table = model.score_spans(&utt, &lexicon).unwrap();
    let found = constrained_parse(&table, Grammar::binary(), &gold, &schema, DEFAULT_K).unwrap();
    let tree = annotate(&found.tree, &schema).unwrap();
    println!("tree: {}", tree.render(&utt, &schema));

    println!("sample of the generated corpus:");
    for item in generate_geo(&kb, 7).iter().take(5) {
        println!("  {} -> {} -> {:?}", item.utterance, item.program, item.denotation);
    }
}
