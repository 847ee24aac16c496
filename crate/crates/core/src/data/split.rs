//! Train/dev/test splits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::types::{ConstantKind, DomainSchema, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SplitKind {
    Iid,
    Template,
    Length,
    Right,
    AroundRight,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Iid => "iid",
            SplitKind::Template => "template",
            SplitKind::Length => "length",
            SplitKind::Right => "right",
            SplitKind::AroundRight => "aroundRight",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "iid" => SplitKind::Iid,
            "template" => SplitKind::Template,
            "length" => SplitKind::Length,
            "right" => SplitKind::Right,
            "aroundright" | "around-right" | "around_right" => SplitKind::AroundRight,
            _ => return Err(format!("unknown split `{s}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.dev.len(), self.test.len()]
    }

    pub fn parts(&self) -> [(&'static str, &[T]); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

/// Fraction of the data held out for test.
pub const TEST_FRACTION: f64 = 0.2;
/// Fraction of the remaining training data held out for development.
pub const DEV_FRACTION: f64 = 0.2;

fn shuffled<T: Clone>(items: &[T], rng: &mut StdRng) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(rng);
    out
}

/// Moves a random `fraction` of `pool` into dev.
fn carve_dev<T: Clone>(pool: Vec<T>, fraction: f64, rng: &mut StdRng) -> (Vec<T>, Vec<T>) {
    let mut pool = shuffled(&pool, rng);
    let dev_len = (pool.len() as f64 * fraction).round() as usize;
    let dev = pool.split_off(pool.len() - dev_len);
    (pool, dev)
}

/// Random 64/16/20 split.
pub fn split_iid<T: Clone>(items: &[T], seed: u64) -> Split<T> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut all = shuffled(items, &mut rng);
    let test_len = (all.len() as f64 * TEST_FRACTION).round() as usize;
    let test = all.split_off(all.len() - test_len);
    let (train, dev) = carve_dev(all, DEV_FRACTION, &mut rng);
    Split { train, dev, test }
}

/// Program with every named entity replaced by its upper-cased type:
/// `capital(loc_2(stateid('utah')))` gives `capital(loc_2(STATE))`.
pub fn anonymize(z: &Program, schema: &DomainSchema) -> String {
    let head = schema.constant(z.head);
    if head.kind == ConstantKind::Entity && head.name.contains("('") {
        return schema.type_name(head.result).to_uppercase();
    }
    let args: Vec<String> = z
        .args
        .iter()
        .map(|a| a.as_ref().map_or_else(|| "·".to_string(), |a| anonymize(a, schema)))
        .collect();
    if args.is_empty() {
        head.name.clone()
    } else {
        format!("{}({})", head.name, args.join(","))
    }
}

/// Keeps all examples of one template together and fills train, dev and
/// test as close to 64/16/20 as whole templates allow. Templates are placed
/// largest first, each into the partition with the largest remaining
/// deficit.
pub fn split_template<T: Clone>(items: &[T], template_of: impl Fn(&T) -> String, seed: u64) -> Split<T> {
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for item in items {
        groups.entry(template_of(item)).or_default().push(item.clone());
    }
    let mut groups: Vec<Vec<T>> = groups.into_values().collect();
    let mut rng = StdRng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let n = items.len() as f64;
    let test_target = n * TEST_FRACTION;
    let dev_target = (n - test_target) * DEV_FRACTION;
    let targets = [n - test_target - dev_target, dev_target, test_target];
    let mut parts: [Vec<T>; 3] = Default::default();
    for group in groups {
        let deficit = |k: usize| targets[k] - parts[k].len() as f64;
        let best = (0..3)
            .max_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
            .unwrap();
        parts[best].extend(group);
    }
    let [train, dev, test] = parts;
    Split { train, dev, test }
}

/// Number of tokens in a program's surface form; a quoted payload counts as
/// one token.
pub fn program_length(text: &str) -> usize {
    let mut count = 0;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' | ')' | ',' => count += 1,
            '\'' => {
                for c in chars.by_ref() {
                    if c == '\'' {
                        break;
                    }
                }
                count += 1;
            }
            c if c.is_whitespace() => {}
            _ => {
                while chars.peek().is_some_and(|c| !"(),' ".contains(*c)) {
                    chars.next();
                }
                count += 1;
            }
        }
    }
    count
}

/// Puts the longest `test_len` programs in test and splits the rest 90/10
/// into train and dev. Ties in length are broken by input order.
pub fn split_length_n<T: Clone>(items: &[T], length_of: impl Fn(&T) -> usize, test_len: usize, seed: u64) -> Split<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(length_of(&items[i])), i));
    let test_len = test_len.min(items.len());
    let test = order[..test_len].iter().map(|&i| items[i].clone()).collect();
    let mut rest: Vec<usize> = order[test_len..].to_vec();
    rest.sort_unstable();
    let rest: Vec<T> = rest.into_iter().map(|i| items[i].clone()).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let (train, dev) = carve_dev(rest, 0.1, &mut rng);
    Split { train, dev, test }
}

/// [`split_length_n`] with the test share 280/880.
pub fn split_length<T: Clone>(items: &[T], length_of: impl Fn(&T) -> usize, seed: u64) -> Split<T> {
    let test_len = (items.len() as f64 * 280.0 / 880.0).round() as usize;
    split_length_n(items, length_of, test_len, seed)
}

const VERBS: [&str; 5] = ["walk", "look", "run", "jump", "turn"];

/// Whether a tokenized command belongs to the test side of a primitive
/// split. `Right` holds out every command where `right` directly follows a
/// verb, except the bare command `turn right`; `right` still appears in
/// training after `opposite` and `around`.

pub fn in_primitive_test(tokens: &[String], kind: SplitKind) -> bool {
    match kind {
        SplitKind::Right => {
            tokens.windows(2).any(|w| w[1] == "right" && VERBS.contains(&w[0].as_str())) && tokens != ["turn", "right"]
        }
        SplitKind::AroundRight => tokens.windows(2).any(|w| w[0] == "around" && w[1] == "right"),
        _ => false,
    }
}

/// RIGHT or AROUNDRIGHT split; 20% of the training side goes to dev. Under
/// `Right` the bare command `turn right` is always kept in train.
pub fn split_scan_primitive<T: Clone>(
    items: &[T],
    tokens_of: impl Fn(&T) -> Vec<String>,
    kind: SplitKind,
    seed: u64,
) -> Split<T> {
    assert!(matches!(kind, SplitKind::Right | SplitKind::AroundRight), "not a primitive split: {kind}");
    let (test, pool): (Vec<T>, Vec<T>) = items.iter().cloned().partition(|x| in_primitive_test(&tokens_of(x), kind));
    let (pinned, pool): (Vec<T>, Vec<T>) =
        pool.into_iter().partition(|x| kind == SplitKind::Right && tokens_of(x) == ["turn", "right"]);
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut train, dev) = carve_dev(pool, DEV_FRACTION, &mut rng);
    train.extend(pinned);
    Split { train, dev, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn iid_ratios() {
        let items: Vec<usize> = (0..1000).collect();
        let s = split_iid(&items, 3);
        assert_eq!(s.sizes(), [640, 160, 200]);
        let all: BTreeSet<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
        assert_eq!(all.len(), 1000);
        assert_eq!(s, split_iid(&items, 3));
    }

    #[test]
    fn one_template_goes_to_train() {
        let items = vec!["a"; 10];
        let s = split_template(&items, |_| "T".to_string(), 0);
        assert_eq!(s.sizes(), [10, 0, 0]);
    }

    #[test]
    fn anonymized_templates() {
        let schema = DomainSchema::geo(&crate::data::geo::GeoKb::bundled());
        let a = schema.parse_program("capital(loc_2(stateid('utah')))").unwrap();
        let b = schema.parse_program("capital(loc_2(stateid('new york')))").unwrap();
        assert_eq!(anonymize(&a, &schema), "capital(loc_2(STATE))");
        assert_eq!(anonymize(&a, &schema), anonymize(&b, &schema));
        let c = schema.parse_program("largest(state(all))").unwrap();
        assert_eq!(anonymize(&c, &schema), "largest(state(all))");
    }

    #[test]
    fn program_lengths() {
        assert_eq!(program_length("stateid('new york')"), 4);
        assert_eq!(program_length("jump()"), 3);
        assert_eq!(program_length("after(walk(r),jump())"), 11);
    }

    #[test]
    fn length_split_geo_size() {
        let items: Vec<usize> = (0..880).map(|i| i % 37).collect();
        let s = split_length(&items, |&x| x, 1);
        assert_eq!(s.test.len(), 280);
        let min_test = s.test.iter().min().unwrap();
        assert!(s.train.iter().chain(&s.dev).all(|x| x <= min_test));
        assert_eq!(s.train.len() + s.dev.len(), 600);
    }

    #[test]
    fn primitive_membership() {
        assert!(!in_primitive_test(&toks("turn right"), SplitKind::Right));
        assert!(in_primitive_test(&toks("turn right twice"), SplitKind::Right));
        assert!(in_primitive_test(&toks("walk left and jump right"), SplitKind::Right));
        assert!(!in_primitive_test(&toks("walk opposite right thrice"), SplitKind::Right));
        assert!(in_primitive_test(&toks("jump around right twice"), SplitKind::AroundRight));
        assert!(!in_primitive_test(&toks("jump around left and turn right"), SplitKind::AroundRight));
        assert_eq!("aroundRight".parse::<SplitKind>().unwrap(), SplitKind::AroundRight);
    }
}
