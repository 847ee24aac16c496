//! Corpora, executors, splits and metrics.
//!
//! A dataset directory looks like
//!
//! ```text
//! <dir>/schema.json   constants and types
//! <dir>/lexicon.tsv   manual lexicon, `phrase<TAB>constant`
//! <dir>/kb.json       domain tag plus, for Geo, the knowledge base
//! <dir>/<split>/{train,dev,test}.jsonl
//! ```

pub mod geo;
pub mod metrics;
pub mod scan;
pub mod split;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ExecError};
use crate::scorer::Lexicon;
use crate::tree::TreeJson;
use crate::types::{DomainSchema, Program};

use self::geo::{GeoKb, ValueSet};
use self::scan::Action;

/// One line of a `.jsonl` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub utterance: String,
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denotation: Option<Denotation>,
}

/// Result of executing a program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Denotation {
    Actions(Vec<Action>),
    Values(ValueSet),
}

/// Which executor programs run against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "lowercase")]
pub enum Domain {
    Scan,
    Geo(GeoKb),
}

impl Domain {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::Scan => "scan",
            Domain::Geo(_) => "geo",
        }
    }

    pub fn schema(&self) -> DomainSchema {
        match self {
            Domain::Scan => DomainSchema::scan(),
            Domain::Geo(kb) => DomainSchema::geo(kb),
        }
    }

    pub fn manual_lexicon(&self, schema: &DomainSchema) -> Lexicon {
        match self {
            Domain::Scan => scan::scan_manual_lexicon(schema),
            Domain::Geo(_) => geo::geo_manual_lexicon(schema),
        }
    }

    pub fn execute(&self, z: &Program, schema: &DomainSchema) -> Result<Denotation, ExecError> {
        match self {
            Domain::Scan => scan::exec_scan(z, schema).map(Denotation::Actions),
            Domain::Geo(kb) => geo::exec_funql(z, schema, kb).map(Denotation::Values),
        }
    }
}

/// Schema, manual lexicon and executor of a dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub domain: Domain,
    pub schema: DomainSchema,
    pub lexicon: Lexicon,
}

impl Dataset {
    pub fn new(root: impl Into<PathBuf>, domain: Domain) -> Dataset {
        let schema = domain.schema();
        let lexicon = domain.manual_lexicon(&schema);
        Dataset { root: root.into(), domain, schema, lexicon }
    }

    /// Reads `schema.json`, `lexicon.tsv` and `kb.json` from `root`.
    pub fn load(root: impl Into<PathBuf>) -> Result<Dataset, Error> {
        let root = root.into();
        let domain: Domain = serde_json::from_str(&fs::read_to_string(root.join("kb.json"))?)?;
        let file = serde_json::from_str(&fs::read_to_string(root.join("schema.json"))?)?;
        let schema = DomainSchema::from_file(file)?;
        let lexicon = match fs::read_to_string(root.join("lexicon.tsv")) {
            Ok(text) => Lexicon::from_tsv(&text, &schema)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Lexicon::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Dataset { root, domain, schema, lexicon })
    }

    pub fn write_meta(&self) -> Result<(), Error> {
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join("schema.json"), serde_json::to_string_pretty(self.schema.to_file())?)?;
        fs::write(self.root.join("lexicon.tsv"), self.lexicon.to_tsv(&self.schema))?;
        fs::write(self.root.join("kb.json"), serde_json::to_string_pretty(&self.domain)?)?;
        Ok(())
    }

    pub fn split_file(&self, split: &str, part: &str) -> PathBuf {
        self.root.join(split).join(format!("{part}.jsonl"))
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Example>, Error> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x/train.jsonl");
        let examples = vec![
            Example {
                utterance: "jump twice".into(),
                program: "twice(jump())".into(),
                tree: None,
                denotation: Some(Denotation::Actions(vec![Action::Jump, Action::Jump])),
            },
            Example {
                utterance: "where is utah ?".into(),
                program: "loc_1(stateid('utah'))".into(),
                tree: None,
                denotation: None,
            },
        ];
        write_jsonl(&path, &examples).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"utterance":"jump twice","program":"twice(jump())","denotation":["JUMP","JUMP"]}"#));
        assert_eq!(read_jsonl(&path).unwrap(), examples);
    }

    #[test]
    fn dataset_meta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for domain in [Domain::Scan, Domain::Geo(GeoKb::bundled())] {
            let ds = Dataset::new(dir.path().join(domain.name()), domain);
            ds.write_meta().unwrap();
            let back = Dataset::load(&ds.root).unwrap();
            assert_eq!(back.domain, ds.domain);
            assert_eq!(back.schema.to_file(), ds.schema.to_file());
            assert_eq!(back.lexicon, ds.lexicon);
        }
    }
}
