//! Token Activation Rate: the share of a model's vocabulary that a language
//! sample activates at least once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LangCode;
use crate::error::{Error, Result};
use crate::tokenize::{check_ids, unique_ids, IdSequence, VocabModel};

/// Exact activation rate `unique / vocab`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tar {
    pub unique: u64,
    pub vocab: u64,
}

impl Tar {
    pub fn new(unique: u64, vocab: u64) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::Tar("vocabulary size must be positive".into()));
        }
        if unique > vocab {
            return Err(Error::Tar(format!(
                "unique count {unique} exceeds vocabulary size {vocab}"
            )));
        }
        Ok(Tar { unique, vocab })
    }

    pub fn ratio(&self) -> f64 {
        self.unique as f64 / self.vocab as f64
    }

    /// Percentage rounded half-to-even on the decimal digits of the exact
    /// fraction, e.g. `1.63%`.
    pub fn percent(&self, decimals: u32) -> String {
        format!(
            "{}%",
            round_fraction(self.unique as u128 * 100, self.vocab as u128, decimals)
        )
    }
}

impl fmt::Display for Tar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.unique, self.vocab)
    }
}

/// `num / den` rendered with `decimals` digits using integer arithmetic so
/// that the result never depends on float rounding.
fn round_fraction(num: u128, den: u128, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = num * scale;
    let mut q = scaled / den;
    let rem = scaled % den;
    if rem * 2 > den || (rem * 2 == den && q % 2 == 1) {
        q += 1;
    }
    if decimals == 0 {
        return q.to_string();
    }
    format!("{}.{:0width$}", q / scale, q % scale, width = decimals as usize)
}

/// Convenience wrapper returning the float projection.
pub fn tar(unique_count: u64, vocab_size: u64) -> Result<f64> {
    Tar::new(unique_count, vocab_size).map(|t| t.ratio())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TarRecord {
    pub language: LangCode,
    pub model_name: String,
    pub unique_count: u64,
    pub vocab_size: u64,
}

impl TarRecord {
    pub fn new(language: LangCode, model_name: impl Into<String>, unique_count: u64, vocab_size: u64) -> Result<Self> {
        Tar::new(unique_count, vocab_size)?;
        if unique_count == 0 {
            return Err(Error::Tar(format!("no token of {language} was activated")));
        }
        Ok(TarRecord {
            language,
            model_name: model_name.into(),
            unique_count,
            vocab_size,
        })
    }

    pub fn rate(&self) -> Tar {
        Tar {
            unique: self.unique_count,
            vocab: self.vocab_size,
        }
    }

    pub fn tar(&self) -> f64 {
        self.rate().ratio()
    }
}

/// Activation record for a language sample encoded by the built-in engine.
pub fn tar_for_language<S: AsRef<str>>(model: &VocabModel, texts: &[S], language: LangCode) -> Result<TarRecord> {
    if texts.is_empty() {
        return Err(Error::Tar(format!("no texts for {language}")));
    }
    let seqs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| model.encode_instance(i.to_string(), t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let unique = model.unique_ids(&seqs).len() as u64;
    TarRecord::new(language, model.model_name.clone(), unique, model.vocab_size())
}

/// Activation record for externally tokenized ids.
pub fn tar_for_sequences(
    model_name: &str,
    sequences: &[IdSequence],
    vocab_size: u64,
    excluded: Option<&BTreeSet<u32>>,
    language: LangCode,
) -> Result<TarRecord> {
    if sequences.is_empty() {
        return Err(Error::Tar(format!("no sequences for {language}")));
    }
    check_ids(sequences, vocab_size)?;
    let unique = unique_ids(sequences, excluded).len() as u64;
    TarRecord::new(language, model_name, unique, vocab_size)
}

/// Language-pair activation: the source and target rates summed, unnormalized.
pub fn pair_tar(src: &TarRecord, tgt: &TarRecord) -> Result<f64> {
    if src.model_name != tgt.model_name {
        return Err(Error::ModelMismatch(src.model_name.clone(), tgt.model_name.clone()));
    }
    Ok(src.tar() + tgt.tar())
}

/// Languages x models grid. Absent cells stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TarMatrix {
    pub languages: Vec<LangCode>,
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<Tar>>>,
}

impl TarMatrix {
    /// Rows and columns follow first-appearance order in `records`.
    pub fn from_records(records: &[TarRecord]) -> Result<Self> {
        let mut languages = Vec::new();
        let mut models = Vec::new();
        for r in records {
            if !languages.contains(&r.language) {
                languages.push(r.language.clone());
            }
            if !models.contains(&r.model_name) {
                models.push(r.model_name.clone());
            }
        }
        Self::with_order(records, languages, models)
    }

    pub fn with_order(records: &[TarRecord], languages: Vec<LangCode>, models: Vec<String>) -> Result<Self> {
        let mut cells: BTreeMap<(usize, usize), Tar> = BTreeMap::new();
        for r in records {
            let li = languages
                .iter()
                .position(|l| *l == r.language)
                .ok_or_else(|| Error::Missing(format!("language {} not in matrix order", r.language)))?;
            let mi = models
                .iter()
                .position(|m| *m == r.model_name)
                .ok_or_else(|| Error::Missing(format!("model {} not in matrix order", r.model_name)))?;
            if cells.insert((li, mi), r.rate()).is_some() {
                return Err(Error::Duplicate(format!(
                    "TAR record ({}, {})",
                    r.language, r.model_name
                )));
            }
        }
        let values = (0..languages.len())
            .map(|li| (0..models.len()).map(|mi| cells.get(&(li, mi)).copied()).collect())
            .collect();
        Ok(TarMatrix {
            languages,
            models,
            values,
        })
    }

    pub fn get(&self, language: &LangCode, model: &str) -> Option<Tar> {
        let li = self.languages.iter().position(|l| l == language)?;
        let mi = self.models.iter().position(|m| m == model)?;
        self.values[li][mi]
    }

    /// Heatmap layout: one row per language, one column per model, ratios at
    /// four decimals, empty cells for absent values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("language");
        for m in &self.models {
            out.push(',');
            out.push_str(&crate::report::csv_field(m));
        }
        out.push('\n');
        for (lang, row) in self.languages.iter().zip(&self.values) {
            out.push_str(lang.as_str());
            for cell in row {
                out.push(',');
                if let Some(t) = cell {
                    out.push_str(&format!("{:.4}", t.ratio()));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-record export: `language,model,unique_count,vocab_size,tar`.
pub fn records_to_csv(records: &[TarRecord]) -> String {
    let mut out = String::from("language,model,unique_count,vocab_size,tar\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:.4}\n",
            r.language,
            crate::report::csv_field(&r.model_name),
            r.unique_count,
            r.vocab_size,
            r.tar()
        ));
    }
    out
}

#[derive(Deserialize)]
struct RecordRow {
    language: String,
    model: String,
    unique_count: u64,
    vocab_size: u64,
}

/// Reads the per-record export back. Comment lines starting with `#` are
/// ignored; the `tar` column is recomputed from the counts.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<TarRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Invalid(format!("{}: {other:?}", path.display())),
        })?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<RecordRow>() {
        let row = row?;
        out.push(TarRecord::new(
            row.language.parse()?,
            row.model,
            row.unique_count,
            row.vocab_size,
        )?);
    }
    Ok(out)
}
