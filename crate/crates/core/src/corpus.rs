//! Parallel corpora: loading, validation, deterministic sampling and prompt
//! rendering.
//!
//! JSONL records carry the keys `id`, `src`, `ref`, `hyp` and `raw`; only
//! `src` is required. TSV files are header-driven with the same column names.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};
use crate::rng::SplitMix64;

/// Lowercase two-letter ISO-639-1 code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: &str) -> Result<Self> {
        if code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(LangCode(code.to_string()))
        } else {
            Err(Error::InvalidLanguage(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LangCode {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        LangCode::new(&value)
    }
}

impl From<LangCode> for String {
    fn from(value: LangCode) -> Self {
        value.0
    }
}

impl FromStr for LangCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LangCode::new(s)
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Directed language pair; `de-fr` and `fr-de` are distinct.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguagePair {
    pub src: LangCode,
    pub tgt: LangCode,
}

impl LanguagePair {
    pub fn new(src: LangCode, tgt: LangCode) -> Result<Self> {
        if src == tgt {
            return Err(Error::InvalidPair(format!("{src}-{tgt}: source equals target")));
        }
        Ok(LanguagePair { src, tgt })
    }

    pub fn reversed(&self) -> LanguagePair {
        LanguagePair {
            src: self.tgt.clone(),
            tgt: self.src.clone(),
        }
    }
}

impl FromStr for LanguagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['-', '_'])
            .ok_or_else(|| Error::InvalidPair(format!("`{s}` is not of the form src-tgt")))?;
        LanguagePair::new(a.parse()?, b.parse()?)
    }
}

impl TryFrom<String> for LanguagePair {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<LanguagePair> for String {
    fn from(value: LanguagePair) -> Self {
        value.to_string()
    }
}

impl fmt::Display for LanguagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

/// One parallel record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(rename = "src")]
    pub src_text: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub ref_text: Option<String>,
    #[serde(rename = "hyp", default, skip_serializing_if = "Option::is_none")]
    pub hyp_text: Option<String>,
    #[serde(rename = "raw", default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

impl Instance {
    pub fn new(id: impl Into<String>, src_text: impl Into<String>) -> Self {
        Instance {
            id: id.into(),
            src_text: src_text.into(),
            ref_text: None,
            hyp_text: None,
            raw_output: None,
        }
    }

    pub fn with_ref(mut self, ref_text: impl Into<String>) -> Self {
        self.ref_text = Some(ref_text.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// Instances of one directed language pair, in load order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub pair: LanguagePair,
    pub instances: Vec<Instance>,
    pub source_tag: String,
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<String>,
    src: Option<String>,
    #[serde(rename = "ref")]
    ref_text: Option<String>,
    hyp: Option<String>,
    raw: Option<String>,
}

impl Corpus {
    pub fn new(pair: LanguagePair, instances: Vec<Instance>, source_tag: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in &instances {
            if inst.src_text.is_empty() {
                return Err(Error::Invalid(format!("instance `{}` has empty src", inst.id)));
            }
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Duplicate(format!("instance id `{}`", inst.id)));
            }
        }
        Ok(Corpus {
            pair,
            instances,
            source_tag: source_tag.into(),
        })
    }

    /// Loads a corpus file. Every malformed record is collected with its line
    /// number; the load fails if there is at least one.
    pub fn load(path: impl AsRef<Path>, format: CorpusFormat, pair: LanguagePair) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows = match format {
            CorpusFormat::Jsonl => parse_jsonl(&text),
            CorpusFormat::Tsv => parse_tsv(path, &text)?,
        };
        let mut errors = Vec::new();
        let mut instances = Vec::with_capacity(rows.len());
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for row in rows {
            match row {
                Err(e) => errors.push(e),
                Ok((line, inst)) => {
                    if inst.src_text.is_empty() {
                        errors.push(RecordError {
                            line,
                            message: "empty src".into(),
                        });
                        continue;
                    }
                    if let Some(first) = seen.insert(inst.id.clone(), line) {
                        errors.push(RecordError {
                            line,
                            message: format!("duplicate id `{}` (first seen on line {first})", inst.id),
                        });
                        continue;
                    }
                    instances.push(inst);
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Records {
                path: path.to_path_buf(),
                errors,
            });
        }
        Ok(Corpus {
            pair,
            instances,
            source_tag: path.display().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// `n` instances drawn without replacement by a seeded Fisher-Yates
    /// shuffle, in shuffled order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Corpus> {
        let picked = shuffled_prefix(&self.instances, n, seed)?;
        Ok(Corpus {
            pair: self.pair.clone(),
            instances: picked,
            source_tag: format!("{}#sample(n={n},seed={seed})", self.source_tag),
        })
    }

    /// Few-shot demonstrations drawn from this corpus (the pool). The pool is
    /// expected to be disjoint from the test set; callers are responsible
    /// for that.
    pub fn sample_demonstrations(&self, k: usize, seed: u64) -> Result<Vec<Instance>> {
        shuffled_prefix(&self.instances, k, seed)
    }
}

pub const DEFAULT_DEMONSTRATIONS: usize = 5;

fn shuffled_prefix(items: &[Instance], n: usize, seed: u64) -> Result<Vec<Instance>> {
    if n > items.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    Ok(order[..n].iter().map(|&i| items[i].clone()).collect())
}

fn parse_jsonl(text: &str) -> Vec<Result<(usize, Instance), RecordError>> {
    let mut rows = Vec::new();
    let mut index = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        index += 1;
        let row = match serde_json::from_str::<JsonRecord>(line) {
            Err(e) => Err(RecordError {
                line: lineno,
                message: e.to_string(),
            }),
            Ok(rec) => match rec.src {
                None => Err(RecordError {
                    line: lineno,
                    message: "missing `src`".into(),
                }),
                Some(src) => Ok((
                    lineno,
                    Instance {
                        id: rec.id.unwrap_or_else(|| index.to_string()),
                        src_text: src,
                        ref_text: rec.ref_text,
                        hyp_text: rec.hyp,
                        raw_output: rec.raw,
                    },
                )),
            },
        };
        rows.push(row);
    }
    rows
}

type TsvRows = Vec<Result<(usize, Instance), RecordError>>;

fn parse_tsv(path: &Path, text: &str) -> Result<TsvRows> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: "src".into(),
        });
    };
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |names: &[&str]| columns.iter().position(|c| names.contains(c));
    let src_col = find(&["src", "src_text"]).ok_or_else(|| Error::MissingColumn {
        path: path.to_path_buf(),
        column: "src".into(),
    })?;
    let id_col = find(&["id"]);
    let ref_col = find(&["ref", "ref_text"]);
    let hyp_col = find(&["hyp", "hyp_text"]);
    let raw_col = find(&["raw", "raw_output"]);

    let mut rows = Vec::new();
    for (index, (i, line)) in lines.enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            rows.push(Err(RecordError {
                line: lineno,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            }));
            continue;
        }
        let get = |c: Option<usize>| c.map(|c| fields[c].to_string());
        rows.push(Ok((
            lineno,
            Instance {
                id: get(id_col).unwrap_or_else(|| (index + 1).to_string()),
                src_text: fields[src_col].to_string(),
                ref_text: get(ref_col),
                hyp_text: get(hyp_col),
                raw_output: get(raw_col),
            },
        )));
    }
    Ok(rows)
}

/// ISO code to English language name, used to fill prompt templates.
#[derive(Debug, Clone)]
pub struct LanguageTable {
    names: BTreeMap<String, String>,
}

const BUILTIN_LANGUAGES: &str = include_str!("../data/languages.csv");

impl LanguageTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LANGUAGES, Path::new("<builtin languages.csv>")).expect("builtin language table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        for col in ["code", "name"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: col.into(),
                });
            }
        }
        let mut names = BTreeMap::new();
        for rec in rdr.deserialize::<BTreeMap<String, String>>() {
            let rec = rec?;
            names.insert(rec["code"].clone(), rec["name"].clone());
        }
        Ok(LanguageTable { names })
    }

    pub fn name(&self, code: &LangCode) -> Result<&str> {
        self.names
            .get(code.as_str())
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptTemplate {
    P0,
    P1,
    P2,
}

impl FromStr for PromptTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p0" | "0" | "prompt0" => Ok(PromptTemplate::P0),
            "p1" | "1" | "prompt1" => Ok(PromptTemplate::P1),
            "p2" | "2" | "prompt2" => Ok(PromptTemplate::P2),
            other => Err(Error::Invalid(format!("unknown prompt template `{other}`"))),
        }
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptTemplate::P0 => "p0",
            PromptTemplate::P1 => "p1",
            PromptTemplate::P2 => "p2",
        })
    }
}

impl PromptTemplate {
    fn fill(self, src_lang: &str, tgt_lang: &str, src_text: &str) -> String {
        match self {
            PromptTemplate::P0 => format!("{src_lang}: {src_text}\n{tgt_lang}:"),
            PromptTemplate::P1 => {
                format!("Translate the following {src_lang} into {tgt_lang}: {src_text}")
            }
            PromptTemplate::P2 => format!(
                "Translate the following {src_lang} into {tgt_lang} and only output the target text: {src_text}"
            ),
        }
    }
}

/// Renders a translation prompt. Each demonstration is rendered as a filled
/// template followed by its reference translation, one per line, ahead of
/// the query.
pub fn render_prompt(
    template: PromptTemplate,
    pair: &LanguagePair,
    src_text: &str,
    demonstrations: &[Instance],
    languages: &LanguageTable,
) -> Result<String> {
    let src_lang = languages.name(&pair.src)?;
    let tgt_lang = languages.name(&pair.tgt)?;
    let mut out = String::new();
    for demo in demonstrations {
        let answer = demo
            .ref_text
            .as_deref()
            .ok_or_else(|| Error::Missing(format!("demonstration `{}` has no reference text", demo.id)))?;
        out.push_str(&template.fill(src_lang, tgt_lang, &demo.src_text));
        out.push(' ');
        out.push_str(answer);
        out.push('\n');
    }
    out.push_str(&template.fill(src_lang, tgt_lang, src_text));
    Ok(out)
}

/// Resolves `path` against `base` unless it is already absolute.
pub(crate) fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
