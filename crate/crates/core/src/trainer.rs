//! Hard-EM training from utterance/program pairs.
//!
//! Each step parses every example of the batch with [`constrained_parse`]
//! under the current model, treats the tree found as the label of every
//! span, and takes a gradient step on the span cross-entropy. Examples with
//! gold trees can bypass the search.

use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cky::{best_valid_tree, constrained_parse, parse_kbest, Chart, Grammar, ValidParse, DEFAULT_K};
use crate::data::metrics::denotation_match;
use crate::data::{Dataset, Domain, Example};
use crate::error::{ConfigError, Error, ParseError};
use crate::scorer::{tree_loss_with_grad, Adam, EncoderDims, Grads, LexEntry, Lexicon, SpanModel, ScoreTable, Vocab};
use crate::tree::{SpanTree, Utterance};
use crate::types::{DomainSchema, Program, SchemaFile};

/// An utterance with its gold program and, optionally, a gold tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub utterance: Utterance,
    pub program: Program,
    pub tree: Option<SpanTree>,
}

impl TrainExample {
    pub fn from_example(ex: &Example, schema: &DomainSchema) -> Result<TrainExample, Error> {
        let utterance = Utterance::new(&ex.utterance);
        let program = schema.parse_program(&ex.program)?;
        let tree = ex.tree.as_ref().map(|t| SpanTree::from_json(t, schema)).transpose()?;
        Ok(TrainExample { utterance, program, tree })
    }
}

pub fn load_examples(path: &Path, schema: &DomainSchema) -> Result<Vec<TrainExample>, Error> {
    crate::data::read_jsonl(path)?
        .iter()
        .map(|ex| TrainExample::from_example(ex, schema))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub k: usize,
    pub lambda: f64,
    pub seed: u64,
    pub ternary: bool,
    /// Drop the manual lexicon; the entity lexicon stays.
    pub no_lexicon: bool,
    /// Use gold trees instead of the constrained search when present.
    pub gold_trees: bool,
    pub dims: EncoderDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 5,
            max_epochs: 20,
            patience: 3,
            k: DEFAULT_K,
            lambda: 5.0,
            seed: 0,
            ternary: false,
            no_lexicon: false,
            gold_trees: false,
            dims: EncoderDims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError(msg.to_string()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be positive");
        }
        if self.k == 0 {
            return fail("k must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail("lambda must be non-negative");
        }
        if self.dims.dim == 0 {
            return fail("encoder dim must be positive");
        }
        Ok(())
    }

    pub fn grammar(&self) -> Grammar {
        Grammar { ternary: self.ternary }
    }
}

/// A trained (or fresh) model with everything needed to parse.
#[derive(Clone, Debug)]
pub struct Parser {
    pub model: SpanModel,
    pub domain: Domain,
    pub schema: DomainSchema,
    pub lexicon: Lexicon,
    pub grammar: Grammar,
    pub k: usize,
}

impl Parser {
    /// A freshly initialized parser. The vocabulary is taken from `train`.
    pub fn init(dataset: &Dataset, train: &[TrainExample], config: &TrainConfig) -> Parser {
        let vocab = Vocab::new(train.iter().flat_map(|ex| ex.utterance.tokens.iter().map(String::as_str)));
        let schema = dataset.schema.clone();
        let mut lexicon = Lexicon::auto_entities(&schema);
        if !config.no_lexicon {
            lexicon.merge(&dataset.lexicon);
        }
        let model = SpanModel::init(vocab, config.dims, schema.num_categories(), config.lambda, config.seed);
        Parser {
            model,
            domain: dataset.domain.clone(),
            schema,
            lexicon,
            grammar: config.grammar(),
            k: config.k,
        }
    }

    pub fn scores(&self, utt: &Utterance) -> ScoreTable {
        self.model.score_spans(utt, &self.lexicon).expect("model dimensions agree")
    }

    /// The best semantically valid tree.
    pub fn parse(&self, utt: &Utterance) -> Result<ValidParse, ParseError> {
        let trees = parse_kbest(&self.scores(utt), self.grammar, self.k)?;
        best_valid_tree(&trees, &self.schema)
    }

    pub fn chart(&self, utt: &Utterance) -> Result<Chart, ParseError> {
        crate::cky::build_chart(&self.scores(utt), self.grammar, self.k)
    }

    /// Predicted program per example, in input order. `None` when no
    /// candidate tree is valid.
    pub fn predict_all(&self, utterances: &[&Utterance]) -> Vec<Result<ValidParse, ParseError>> {
        utterances.par_iter().map(|u| self.parse(u)).collect()
    }

    /// Share of examples whose prediction executes like the gold program.
    pub fn denotation_accuracy(&self, examples: &[TrainExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let correct: usize = examples
            .par_iter()
            .map(|ex| {
                let pred = self.parse(&ex.utterance).ok().map(|p| p.program);
                denotation_match(pred.as_ref(), &ex.program, &self.domain, &self.schema) as usize
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        correct as f64 / examples.len() as f64
    }
}

/// Result of one hard-EM step before the parameter update.
#[derive(Clone, Debug)]
pub struct EmStep {
    /// Mean per-span cross-entropy over the examples used.
    pub loss: f64,
    pub used: usize,
    pub skipped: usize,
    /// Gradient of `loss`.
    pub grads: Grads,
}

/// Label tree for one example: the gold tree when allowed, else the best
/// tree under the current scores that yields the gold program.
pub fn e_step(parser: &Parser, ex: &TrainExample, table: &ScoreTable, use_gold_trees: bool) -> Option<SpanTree> {
    if use_gold_trees {
        if let Some(tree) = &ex.tree {
            return Some(tree.clone());
        }
    }
    constrained_parse(table, parser.grammar, &ex.program, &parser.schema, parser.k)
        .ok()
        .map(|t| t.tree)
}

/// E-step and gradient computation for one batch.
pub fn hard_em_step(parser: &Parser, batch: &[TrainExample], use_gold_trees: bool) -> EmStep {
    let per_example: Vec<Option<(f64, Grads)>> = batch
        .par_iter()
        .map(|ex| {
            let fwd = parser.model.forward(&ex.utterance, &parser.lexicon).ok()?;
            let tree = e_step(parser, ex, &fwd.table, use_gold_trees)?;
            let (loss, mut d_scores) = tree_loss_with_grad(&fwd.table, &tree);
            let scale = 1.0 / loss.spans as f64;
            d_scores.iter_mut().for_each(|g| *g *= scale);
            let mut grads = Grads::zeros_like(&parser.model);
            parser.model.backward(&fwd, &d_scores, &mut grads);
            Some((loss.per_span(), grads))
        })
        .collect();
    let mut grads = Grads::zeros_like(&parser.model);
    let mut loss = 0.0;
    let mut used = 0;
    for (l, g) in per_example.iter().flatten() {
        loss += l;
        grads.add(g);
        used += 1;
    }
    if used > 0 {
        grads.scale(1.0 / used as f64);
        loss /= used as f64;
    }
    EmStep { loss, used, skipped: batch.len() - used, grads }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss; `None` before the first epoch.
    pub train_loss: Option<f64>,
    pub skipped: usize,
    pub dev_denotation_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best dev accuracy.
    pub parser: Parser,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains with early stopping on dev denotation accuracy. `on_epoch` sees
/// each metrics line as soon as it is computed (epoch 0 is the untrained
/// model).
pub fn train_with(
    dataset: &Dataset,
    train: &[TrainExample],
    dev: &[TrainExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome, ConfigError> {
    config.validate()?;
    if config.gold_trees && train.iter().any(|ex| ex.tree.is_none()) {
        return Err(ConfigError("gold-tree training needs a tree on every training example".into()));
    }
    let mut parser = Parser::init(dataset, train, config);
    let mut adam = Adam::new(parser.model.num_params(), config.lr);
    let mut rng = StdRng::seed_from_u64(config.seed ^ 0x5eed);
    let initial = EpochMetrics {
        epoch: 0,
        train_loss: None,
        skipped: 0,
        dev_denotation_acc: parser.denotation_accuracy(dev),
    };
    on_epoch(&initial);
    let mut best = (parser.model.clone(), 0, initial.dev_denotation_acc);
    let mut metrics = vec![initial];
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        if best.2 >= 1.0 {
            break;
        }
        order.shuffle(&mut rng);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainExample> = chunk.iter().map(|&i| train[i].clone()).collect();
            let step = hard_em_step(&parser, &batch, config.gold_trees);
            skipped += step.skipped;
            if step.used > 0 {
                loss_sum += step.loss * step.used as f64;
                used += step.used;
                adam.step(&mut parser.model, &step.grads);
            }
        }
        let line = EpochMetrics {
            epoch,
            train_loss: Some(if used > 0 { loss_sum / used as f64 } else { 0.0 }),
            skipped,
            dev_denotation_acc: parser.denotation_accuracy(dev),
        };
        on_epoch(&line);
        if line.dev_denotation_acc > best.2 {
            best = (parser.model.clone(), epoch, line.dev_denotation_acc);
            stale = 0;
        } else {
            stale += 1;
        }
        metrics.push(line);
        if stale >= config.patience {
            break;
        }
    }
    parser.model = best.0;
    Ok(TrainOutcome { parser, best_epoch: best.1, best_dev_acc: best.2, metrics })
}

pub fn train(
    dataset: &Dataset,
    train: &[TrainExample],
    dev: &[TrainExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, ConfigError> {
    train_with(dataset, train, dev, config, |_| {})
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-contained model file: parameters, vocabulary, schema, lexicon and
/// the configuration it was trained with.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub domain: Domain,
    pub schema: SchemaFile,
    pub lexicon: Vec<LexEntry>,
    pub model: SpanModel,
}

impl Checkpoint {
    pub fn new(parser: &Parser, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            domain: parser.domain.clone(),
            schema: parser.schema.to_file().clone(),
            lexicon: parser.lexicon.entries(&parser.schema),
            model: parser.model.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, Error> {
        let mut ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        ckpt.model.encoder.vocab.rebuild_index();
        Ok(ckpt)
    }

    pub fn into_parser(self) -> Result<Parser, Error> {
        let schema = DomainSchema::from_file(self.schema)?;
        let lexicon = Lexicon::from_entries(&self.lexicon, &schema)?;
        if self.model.classifier.categories != schema.num_categories() {
            return Err(Error::Data("checkpoint classifier does not match its schema".into()));
        }
        Ok(Parser {
            model: self.model,
            domain: self.domain,
            schema,
            lexicon,
            grammar: self.config.grammar(),
            k: self.config.k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::scan::generate_scan_sp;
    use crate::scorer::tree_loss;

    fn scan_examples(n: usize) -> (Dataset, Vec<TrainExample>) {
        let ds = Dataset::new("unused", Domain::Scan);
        let items = generate_scan_sp(&ds.schema);
        let examples = items
            .iter()
            .take(n)
            .map(|it| TrainExample { utterance: it.utterance.clone(), program: it.program.clone(), tree: Some(it.tree.clone()) })
            .collect();
        (ds, examples)
    }

    fn small_config() -> TrainConfig {
        TrainConfig { dims: EncoderDims { dim: 16, layers: 1, window: 2 }, ..TrainConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { k: 0, ..TrainConfig::default() },
            TrainConfig { lambda: -1.0, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let parsed: Result<TrainConfig, _> = serde_json::from_str(r#"{"lr": 0.01, "bogus": 1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn gold_tree_step_equals_supervised_loss() {
        let (ds, examples) = scan_examples(5);
        let parser = Parser::init(&ds, &examples, &small_config());
        let step = hard_em_step(&parser, &examples, true);
        let want: f64 = examples
            .iter()
            .map(|ex| tree_loss(&parser.scores(&ex.utterance), ex.tree.as_ref().unwrap()).per_span())
            .sum::<f64>()
            / 5.0;
        assert_eq!(step.skipped, 0);
        assert!((step.loss - want).abs() < 1e-12);
    }

    #[test]
    fn e_step_trees_yield_gold_programs() {
        let (ds, examples) = scan_examples(200);
        let parser = Parser::init(&ds, &examples, &small_config());
        for ex in &examples {
            let tree = e_step(&parser, ex, &parser.scores(&ex.utterance), false).expect("lexicon makes every example parseable");
            assert_eq!(crate::types::program_of_tree(&tree, &ds.schema).unwrap(), ex.program);
        }
    }

    #[test]
    fn untileable_example_is_skipped() {
        let (ds, examples) = scan_examples(1);
        let parser = Parser::init(&ds, &examples, &small_config());
        let bad = TrainExample {
            utterance: Utterance::new("walk"),
            program: ds.schema.parse_program("walk(l)").unwrap(),
            tree: None,
        };
        let step = hard_em_step(&parser, &[bad], false);
        assert_eq!((step.used, step.skipped), (0, 1));
        assert!(step.grads.encoder.iter().chain(&step.grads.classifier).all(|&g| g == 0.0));
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (ds, examples) = scan_examples(20);
        let config = TrainConfig { max_epochs: 0, ..small_config() };
        let out = train(&ds, &examples, &examples, &config).unwrap();
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].epoch, 0);
        assert_eq!(out.best_epoch, 0);
        let fresh = Parser::init(&ds, &examples, &config);
        assert_eq!(out.parser.model, fresh.model);
    }

    #[test]
    fn gold_trees_required_for_supervised_mode() {
        let (ds, mut examples) = scan_examples(3);
        examples[1].tree = None;
        let config = TrainConfig { gold_trees: true, ..small_config() };
        assert!(train(&ds, &examples, &examples, &config).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (ds, examples) = scan_examples(10);
        let config = small_config();
        let parser = Parser::init(&ds, &examples, &config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint::new(&parser, &config).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().into_parser().unwrap();
        let utt = &examples[3].utterance;
        assert_eq!(back.scores(utt), parser.scores(utt));
        assert_eq!(back.lexicon, parser.lexicon);
    }
}
