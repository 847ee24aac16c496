//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 no valid tree, 3 bad
//! configuration. Every flag can also be set through an environment
//! variable named `SPANPARSE_<FLAG>` (e.g. `SPANPARSE_SEED`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser as ClapParser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::data::geo::{generate_geo, GeoKb};
use crate::data::metrics::{denotation_match, labeled_span_f1};
use crate::data::scan::generate_scan_sp;
use crate::data::split::{
    anonymize, program_length, split_iid, split_length, split_scan_primitive, split_template, Split, SplitKind,
};
use crate::data::{write_jsonl, Dataset, Denotation, Domain, Example};
use crate::error::{ConfigError, Error, ParseError};
use crate::trainer::{load_examples, train_with, Checkpoint, TrainConfig};
use crate::tree::Utterance;

#[derive(Debug, ClapParser)]
#[command(name = "spanparse", version, about = "Span-based semantic parser")]
pub struct Cli {
    /// JSON file with training settings; command-line flags take precedence.
    #[arg(long, global = true, env = "SPANPARSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPANPARSE_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a corpus and write its splits.
    GenData(GenDataArgs),
    /// Train a parser on a generated split.
    Train(TrainArgs),
    /// Parse one utterance with a trained checkpoint.
    Parse(ParseArgs),
    /// Evaluate a checkpoint on a JSONL file.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    /// `scan` or `geo`.
    #[arg(long, env = "SPANPARSE_DOMAIN", default_value = "scan")]
    pub domain: String,
    /// Comma-separated split kinds, or `all`.
    #[arg(long, env = "SPANPARSE_SPLIT", default_value = "iid")]
    pub split: String,
    #[arg(long, env = "SPANPARSE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "SPANPARSE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `gen-data`.
    #[arg(long, env = "SPANPARSE_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "SPANPARSE_SPLIT", default_value = "iid")]
    pub split: String,
    /// Output directory for the checkpoint and metrics.
    #[arg(long, env = "SPANPARSE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "SPANPARSE_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "SPANPARSE_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "SPANPARSE_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
    #[arg(long, env = "SPANPARSE_PATIENCE")]
    pub patience: Option<usize>,
    #[arg(long, env = "SPANPARSE_K")]
    pub k: Option<usize>,
    #[arg(long, env = "SPANPARSE_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "SPANPARSE_SEED")]
    pub seed: Option<u64>,
    /// Enable the ternary `Join -> Join Join Join` rule.
    #[arg(long, env = "SPANPARSE_TERNARY")]
    pub ternary: bool,
    /// Drop the manual lexicon.
    #[arg(long, env = "SPANPARSE_NO_LEXICON")]
    pub no_lexicon: bool,
    /// Train on the gold trees stored with the data.
    #[arg(long, env = "SPANPARSE_GOLD_TREES")]
    pub gold_trees: bool,
    /// Use at most this many training examples.
    #[arg(long, env = "SPANPARSE_MAX_TRAIN")]
    pub max_train: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    #[arg(long, env = "SPANPARSE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Enable the ternary rule regardless of the checkpoint's setting.
    #[arg(long, env = "SPANPARSE_TERNARY")]
    pub ternary: bool,
    /// Write the chart as JSON to this file.
    #[arg(long, env = "SPANPARSE_DUMP_CHART")]
    pub dump_chart: Option<PathBuf>,
    #[arg(required = true, num_args = 1..)]
    pub utterance: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, env = "SPANPARSE_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// JSONL file of examples.
    #[arg(long, env = "SPANPARSE_TEST")]
    pub test: PathBuf,
    /// Report path (default: `report.json` next to the checkpoint).
    #[arg(long, env = "SPANPARSE_REPORT")]
    pub report: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(ParseError::NoValidTree) => 2,
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| ConfigError(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::GenData(a) => cmd_gen_data(a, load_config(cli.config.as_deref())?.seed).map(|_| ()),
        Command::Train(a) => cmd_train(a, cli.config.as_deref()).map(|_| ()),
        Command::Parse(a) => cmd_parse(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
    })
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Error> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())).into())
        }
    }
}

fn write_resolved(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn parse_domain(name: &str) -> Result<Domain, ConfigError> {
    match name {
        "scan" | "scan-sp" => Ok(Domain::Scan),
        "geo" => Ok(Domain::Geo(GeoKb::bundled())),
        other => Err(ConfigError(format!("unknown domain `{other}` (expected scan or geo)"))),
    }
}

fn split_kinds(spec: &str, domain: &Domain) -> Result<Vec<SplitKind>, ConfigError> {
    let allowed: &[SplitKind] = match domain {
        Domain::Scan => &[SplitKind::Iid, SplitKind::Right, SplitKind::AroundRight],
        Domain::Geo(_) => &[SplitKind::Iid, SplitKind::Template, SplitKind::Length],
    };
    if spec == "all" {
        return Ok(allowed.to_vec());
    }
    spec.split(',')
        .map(|s| {
            let kind: SplitKind = s.trim().parse().map_err(ConfigError)?;
            if allowed.contains(&kind) {
                Ok(kind)
            } else {
                Err(ConfigError(format!("split `{kind}` is not available for {}", domain.name())))
            }
        })
        .collect()
}

/// Writes the dataset directory and returns split sizes by kind.
pub fn cmd_gen_data(args: &GenDataArgs, default_seed: u64) -> Result<Vec<(SplitKind, [usize; 3])>, Error> {
    let domain = parse_domain(&args.domain)?;
    let kinds = split_kinds(&args.split, &domain)?;
    let seed = args.seed.unwrap_or(default_seed);
    let dataset = Dataset::new(&args.out, domain);
    dataset.write_meta()?;
    let schema = &dataset.schema;
    let examples: Vec<Example> = match &dataset.domain {
        Domain::Scan => generate_scan_sp(schema)
            .into_iter()
            .map(|it| Example {
                utterance: it.utterance.raw_text.clone(),
                program: it.program.display(schema).to_string(),
                tree: Some(it.tree.to_json(schema)),
                denotation: Some(Denotation::Actions(it.actions)),
            })
            .collect(),
        Domain::Geo(kb) => generate_geo(kb, seed)
            .into_iter()
            .map(|it| Example {
                utterance: it.utterance,
                program: it.program,
                tree: None,
                denotation: Some(Denotation::Values(it.denotation)),
            })
            .collect(),
    };
    let mut sizes = Vec::new();
    for kind in kinds {
        let split: Split<Example> = match kind {
            SplitKind::Iid => split_iid(&examples, seed),
            SplitKind::Template => split_template(
                &examples,
                |ex| {
                    let z = schema.parse_program(&ex.program).expect("generated program parses");
                    anonymize(&z, schema)
                },
                seed,
            ),
            SplitKind::Length => split_length(&examples, |ex| program_length(&ex.program), seed),
            SplitKind::Right | SplitKind::AroundRight => {
                split_scan_primitive(&examples, |ex| Utterance::new(&ex.utterance).tokens, kind, seed)
            }
        };
        for (part, items) in split.parts() {
            write_jsonl(&dataset.split_file(kind.name(), part), items)?;
        }
        let [tr, dv, te] = split.sizes();
        println!("{} {}: train {tr}, dev {dv}, test {te}", dataset.domain.name(), kind);
        sizes.push((kind, split.sizes()));
    }
    write_resolved(
        &args.out.join("gen-data.config.json"),
        &json!({ "command": "gen-data", "args": args, "seed": seed, "total": examples.len() }),
    )?;
    Ok(sizes)
}

/// Resolves the training configuration: defaults, then the config file,
/// then command-line flags.
pub fn resolve_train_config(args: &TrainArgs, config: Option<&Path>) -> Result<TrainConfig, Error> {
    let mut c = load_config(config)?;
    if let Some(v) = args.lr {
        c.lr = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = args.patience {
        c.patience = v;
    }
    if let Some(v) = args.k {
        c.k = v;
    }
    if let Some(v) = args.lambda {
        c.lambda = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.ternary |= args.ternary;
    c.no_lexicon |= args.no_lexicon;
    c.gold_trees |= args.gold_trees;
    c.validate()?;
    Ok(c)
}

/// Trains and writes `model.json`, `metrics.jsonl` and `config.json` to
/// the output directory. Returns the best dev accuracy.
pub fn cmd_train(args: &TrainArgs, config: Option<&Path>) -> Result<f64, Error> {
    let cfg = resolve_train_config(args, config)?;
    let dataset = Dataset::load(&args.data)?;
    let mut train = load_examples(&dataset.split_file(&args.split, "train"), &dataset.schema)?;
    let dev = load_examples(&dataset.split_file(&args.split, "dev"), &dataset.schema)?;
    if let Some(m) = args.max_train {
        train.truncate(m);
    }
    if cfg.gold_trees && train.iter().any(|ex| ex.tree.is_none()) {
        return Err(ConfigError("--gold-trees needs trees in the training data".into()).into());
    }
    fs::create_dir_all(&args.out)?;
    write_resolved(
        &args.out.join("config.json"),
        &json!({ "command": "train", "args": args, "train_config": cfg }),
    )?;
    let mut log = String::new();
    let outcome = train_with(&dataset, &train, &dev, &cfg, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    fs::write(args.out.join("metrics.jsonl"), log)?;
    Checkpoint::new(&outcome.parser, &cfg).save(&args.out.join("model.json"))?;
    println!(
        "best epoch {} with dev denotation accuracy {:.4}",
        outcome.best_epoch, outcome.best_dev_acc
    );
    Ok(outcome.best_dev_acc)
}

/// Output of `parse`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseOutput {
    pub tree: String,
    pub program: String,
    pub denotation: String,
}

pub fn cmd_parse(args: &ParseArgs) -> Result<ParseOutput, Error> {
    let mut parser = Checkpoint::load(&args.checkpoint)?.into_parser()?;
    parser.grammar.ternary |= args.ternary;
    let utt = Utterance::new(&args.utterance.join(" "));
    if utt.is_empty() {
        return Err(ParseError::EmptyInput.into());
    }
    if let Some(path) = &args.dump_chart {
        let chart = parser.chart(&utt)?;
        write_resolved(path, &chart.to_json(&parser.schema))?;
        write_resolved(
            &path.with_extension("config.json"),
            &json!({ "command": "parse", "args": args }),
        )?;
    }
    let parsed = parser.parse(&utt)?;
    let denotation = match parser.domain.execute(&parsed.program, &parser.schema) {
        Ok(d) => serde_json::to_string(&d)?,
        Err(e) => format!("execution failed: {e}"),
    };
    let out = ParseOutput {
        tree: parsed.tree.render(&utt, &parser.schema),
        program: parsed.program.display(&parser.schema).to_string(),
        denotation,
    };
    println!("tree:       {}", out.tree);
    println!("program:    {}", out.program);
    println!("denotation: {}", out.denotation);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleReport {
    pub utterance: String,
    pub gold: String,
    pub predicted: Option<String>,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean labeled-span F1 over examples with gold trees.
    pub f1: Option<f64>,
    /// Examples without a valid tree.
    pub failures: usize,
    pub per_example: Vec<ExampleReport>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, Error> {
    let parser = Checkpoint::load(&args.checkpoint)?.into_parser()?;
    let examples = load_examples(&args.test, &parser.schema)?;
    if examples.is_empty() {
        return Err(Error::Data(format!("{} has no examples", args.test.display())));
    }
    let per_example: Vec<ExampleReport> = examples
        .par_iter()
        .map(|ex| {
            let parsed = parser.parse(&ex.utterance).ok();
            let predicted = parsed.as_ref().map(|p| &p.program);
            ExampleReport {
                utterance: ex.utterance.raw_text.clone(),
                gold: ex.program.display(&parser.schema).to_string(),
                predicted: predicted.map(|p| p.display(&parser.schema).to_string()),
                correct: denotation_match(predicted, &ex.program, &parser.domain, &parser.schema),
                f1: ex
                    .tree
                    .as_ref()
                    .map(|gold| parsed.as_ref().map_or(0.0, |p| labeled_span_f1(&p.tree, gold))),
            }
        })
        .collect();
    let n = per_example.len() as f64;
    let accuracy = per_example.iter().filter(|r| r.correct).count() as f64 / n;
    let failures = per_example.iter().filter(|r| r.predicted.is_none()).count();
    let f1s: Vec<f64> = per_example.iter().filter_map(|r| r.f1).collect();
    let f1 = (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64);
    let report = EvalReport { accuracy, f1, failures, per_example };
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| args.checkpoint.with_file_name("report.json"));
    write_resolved(&path, &serde_json::to_value(&report)?)?;
    write_resolved(&path.with_extension("config.json"), &json!({ "command": "eval", "args": args }))?;
    println!("denotation accuracy: {accuracy:.4}");
    println!("parse failures:      {failures} ({:.2}%)", 100.0 * failures as f64 / n);
    if let Some(f1) = f1 {
        println!("labeled-span F1:     {f1:.4}");
    }
    Ok(report)
}
