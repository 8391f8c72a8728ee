//! Output-noise detection and clean translation rate.
//!
//! An output is noisy when it carries explanatory meta-text (any pattern of
//! a case-insensitive regex set matches) or when a language identifier is
//! more than `threshold` confident that it is in a language other than the
//! expected target. Clean rate is `(N - |E ∪ W|) / N`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.60;
pub const UNDETERMINED: &str = "und";

const BUILTIN_PATTERNS: &str = include_str!("../data/noise_patterns.txt");

#[derive(Debug, Clone)]
pub struct NoisePatternSet {
    patterns: Vec<String>,
    compiled: Vec<Regex>,
}

impl NoisePatternSet {
    pub fn new<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(Into::into).collect();
        if patterns.is_empty() {
            return Err(Error::Invalid("noise pattern set is empty".into()));
        }
        let compiled = patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Pattern {
                        pattern: p.clone(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NoisePatternSet { patterns, compiled })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PATTERNS).expect("builtin patterns compile")
    }

    /// One pattern per line; blank lines and lines starting with `#` are
    /// skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn with_pattern(&self, pattern: &str) -> Result<Self> {
        let mut p = self.patterns.clone();
        p.push(pattern.to_string());
        Self::new(p)
    }
}

pub fn detect_explanatory(text: &str, patterns: &NoisePatternSet) -> bool {
    patterns.compiled.iter().any(|re| re.is_match(text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangPrediction {
    pub language: String,
    pub confidence: f64,
}

impl LangPrediction {
    pub fn new(language: impl Into<String>, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(LangPrediction {
            language: language.into(),
            confidence,
        })
    }

    pub fn undetermined() -> Self {
        LangPrediction {
            language: UNDETERMINED.into(),
            confidence: 0.0,
        }
    }
}

/// `true` iff the prediction names another language with confidence
/// strictly above `threshold`.
pub fn wrong_language(pred: &LangPrediction, expected: &str, threshold: f64) -> bool {
    pred.language != expected && pred.confidence > threshold
}

pub trait LanguageIdentifier {
    fn identify(&self, instance_id: &str, text: &str) -> Result<LangPrediction>;
}

/// Coarse Unicode script classes used as a prior by the trigram identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Script {
    Latin,
    Greek,
    Cyrillic,
    Hebrew,
    Arabic,
    Devanagari,
    Gujarati,
    Tamil,
    Telugu,
    Malayalam,
    Thai,
    Khmer,
    Hangul,
    Kana,
    Han,
    Other,
}

pub fn script_of(c: char) -> Script {
    match c as u32 {
        0x0041..=0x024F | 0x1E00..=0x1EFF => Script::Latin,
        0x0370..=0x03FF | 0x1F00..=0x1FFF => Script::Greek,
        0x0400..=0x052F => Script::Cyrillic,
        0x0590..=0x05FF => Script::Hebrew,
        0x0600..=0x06FF | 0x0750..=0x077F | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF => Script::Arabic,
        0x0900..=0x097F => Script::Devanagari,
        0x0A80..=0x0AFF => Script::Gujarati,
        0x0B80..=0x0BFF => Script::Tamil,
        0x0C00..=0x0C7F => Script::Telugu,
        0x0D00..=0x0D7F => Script::Malayalam,
        0x0E00..=0x0E7F => Script::Thai,
        0x1780..=0x17FF | 0x19E0..=0x19FF => Script::Khmer,
        0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF => Script::Hangul,
        0x3040..=0x30FF => Script::Kana,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF => Script::Han,
        _ => Script::Other,
    }
}

fn is_letter(c: char) -> bool {
    // Non-alphabetic combining marks (viramas and the like) still belong to
    // the word in Indic and Khmer scripts.
    c.is_alphabetic() || (!matches!(script_of(c), Script::Other | Script::Latin) && !c.is_numeric())
}

/// Space-padded character trigrams of every letter run, lowercased.
pub fn trigrams(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let lowered = text.to_lowercase();
    let mut word: Vec<char> = Vec::new();
    let flush = |word: &mut Vec<char>, out: &mut Vec<String>| {
        if word.is_empty() {
            return;
        }
        let mut padded = Vec::with_capacity(word.len() + 2);
        padded.push(' ');
        padded.extend(word.iter().copied());
        padded.push(' ');
        for w in padded.windows(3) {
            out.push(w.iter().collect());
        }
        word.clear();
    };
    for c in lowered.chars() {
        if is_letter(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Log relative frequencies of character trigrams for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigramProfile {
    log_freq: HashMap<String, f64>,
    scripts: BTreeSet<Script>,
}

impl TrigramProfile {
    pub fn from_log_freqs(log_freq: HashMap<String, f64>) -> Result<Self> {
        if log_freq.is_empty() {
            return Err(Error::Invalid("empty trigram profile".into()));
        }
        if let Some((t, v)) = log_freq.iter().find(|(_, v)| !v.is_finite() || **v > 0.0) {
            return Err(Error::Invalid(format!("trigram {t:?} has invalid log frequency {v}")));
        }
        let scripts = log_freq
            .keys()
            .flat_map(|t| t.chars())
            .filter(|&c| c != ' ')
            .map(script_of)
            .collect();
        Ok(TrigramProfile { log_freq, scripts })
    }

    pub fn train<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for t in texts {
            for tri in trigrams(t.as_ref()) {
                *counts.entry(tri).or_default() += 1;
                total += 1;
            }
        }
        let log_freq = counts
            .into_iter()
            .map(|(k, c)| (k, (c as f64 / total as f64).ln()))
            .collect();
        Self::from_log_freqs(log_freq)
    }

    /// CSV with header `trigram,log_freq`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let mut map = HashMap::new();
        for rec in rdr.deserialize::<(String, f64)>() {
            let (tri, lf) = rec?;
            map.insert(tri, lf);
        }
        Self::from_log_freqs(map)
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<_> = self.log_freq.iter().collect();
        rows.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trigram", "log_freq"]).expect("in-memory write");
        for (t, lf) in rows {
            w.write_record([t.as_str(), &format!("{lf:.6}")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn len(&self) -> usize {
        self.log_freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_freq.is_empty()
    }
}

/// Built-in identifier: per-language trigram log-likelihood with additive
/// smoothing, normalized per trigram, plus a log script prior; confidence
/// is the softmax over languages.
#[derive(Debug, Clone)]
pub struct TrigramIdentifier {
    profiles: BTreeMap<String, TrigramProfile>,
    smoothing: f64,
    event_space: f64,
}

impl TrigramIdentifier {
    pub const DEFAULT_SMOOTHING: f64 = 1e-5;
    const SCRIPT_FLOOR: f64 = 1e-3;

    pub fn new(profiles: BTreeMap<String, TrigramProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Invalid("no language profiles".into()));
        }
        let space: BTreeSet<&String> = profiles.values().flat_map(|p| p.log_freq.keys()).collect();
        Ok(TrigramIdentifier {
            event_space: space.len() as f64 + 1.0,
            profiles,
            smoothing: Self::DEFAULT_SMOOTHING,
        })
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }

    /// Profiles from `lang -> csv path`.
    pub fn load(paths: &BTreeMap<String, std::path::PathBuf>) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        for (lang, path) in paths {
            profiles.insert(lang.clone(), TrigramProfile::load(path)?);
        }
        Self::new(profiles)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn predict(&self, text: &str) -> LangPrediction {
        let grams = trigrams(text);
        if grams.is_empty() {
            return LangPrediction::undetermined();
        }
        let letters: Vec<Script> = text.chars().filter(|&c| is_letter(c)).map(script_of).collect();
        let denom = (1.0 + self.smoothing * self.event_space).ln();
        let scores: Vec<(&String, f64)> = self
            .profiles
            .iter()
            .map(|(lang, profile)| {
                let ll: f64 = grams
                    .iter()
                    .map(|g| {
                        let f = profile.log_freq.get(g).map_or(0.0, |lf| lf.exp());
                        (f + self.smoothing).ln() - denom
                    })
                    .sum::<f64>()
                    / grams.len() as f64;
                let covered = letters.iter().filter(|s| profile.scripts.contains(s)).count();
                let prior = (covered as f64 / letters.len() as f64).max(Self::SCRIPT_FLOOR);
                (lang, ll + prior.ln())
            })
            .collect();
        let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s.1 - max).exp()).sum();
        let (best, score) = scores
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .expect("at least one profile");
        LangPrediction {
            language: (*best).clone(),
            confidence: ((score - max).exp() / z).clamp(0.0, 1.0),
        }
    }
}

impl LanguageIdentifier for TrigramIdentifier {
    fn identify(&self, _instance_id: &str, text: &str) -> Result<LangPrediction> {
        Ok(self.predict(text))
    }
}

#[derive(Deserialize)]
struct PredictionRow {
    instance_id: String,
    lang: String,
    confidence: f64,
}

/// Predictions made by an external classifier, keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct ExternalPredictions {
    by_id: HashMap<String, LangPrediction>,
}

impl ExternalPredictions {
    pub fn new(preds: impl IntoIterator<Item = (String, LangPrediction)>) -> Self {
        ExternalPredictions {
            by_id: preds.into_iter().collect(),
        }
    }

    /// JSONL lines `{"instance_id": .., "lang": .., "confidence": ..}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut by_id = HashMap::new();
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<PredictionRow>(line)
                .map_err(|e| e.to_string())
                .and_then(|r| {
                    LangPrediction::new(r.lang, r.confidence)
                        .map(|p| (r.instance_id, p))
                        .map_err(|e| e.to_string())
                });
            match parsed {
                Ok((id, p)) => {
                    if by_id.insert(id.clone(), p).is_some() {
                        errors.push(RecordError {
                            line: i + 1,
                            message: format!("duplicate instance_id `{id}`"),
                        });
                    }
                }
                Err(message) => errors.push(RecordError { line: i + 1, message }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Records {
                path: path.to_path_buf(),
                errors,
            });
        }
        Ok(ExternalPredictions { by_id })
    }
}

impl LanguageIdentifier for ExternalPredictions {
    fn identify(&self, instance_id: &str, _text: &str) -> Result<LangPrediction> {
        self.by_id
            .get(instance_id)
            .cloned()
            .ok_or_else(|| Error::Missing(format!("no language prediction for instance `{instance_id}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOptions {
    pub threshold: f64,
    /// Identify each non-empty line separately; the output counts as wrong
    /// language if any line does.
    pub per_line: bool,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions {
            threshold: DEFAULT_THRESHOLD,
            per_line: false,
        }
    }
}

/// Counts are primary; rates are derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseReport {
    pub total: usize,
    pub explanatory: usize,
    pub wrong_language: usize,
    pub union: usize,
}

impl NoiseReport {
    pub fn clean_rate(&self) -> f64 {
        (self.total - self.union) as f64 / self.total as f64
    }

    pub fn expl_rate(&self) -> f64 {
        self.explanatory as f64 / self.total as f64
    }

    pub fn wrongl_rate(&self) -> f64 {
        self.wrong_language as f64 / self.total as f64
    }

    pub fn merge(&self, other: &NoiseReport) -> NoiseReport {
        NoiseReport {
            total: self.total + other.total,
            explanatory: self.explanatory + other.explanatory,
            wrong_language: self.wrong_language + other.wrong_language,
            union: self.union + other.union,
        }
    }
}

/// Output to classify: instance id and text.
pub type Output<'a> = (&'a str, &'a str);

pub fn is_wrong_language(
    instance_id: &str,
    text: &str,
    expected: &str,
    identifier: &dyn LanguageIdentifier,
    options: NoiseOptions,
) -> Result<bool> {
    if options.per_line {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if wrong_language(&identifier.identify(instance_id, line)?, expected, options.threshold) {
                return Ok(true);
            }
        }
        Ok(false)
    } else {
        Ok(wrong_language(
            &identifier.identify(instance_id, text)?,
            expected,
            options.threshold,
        ))
    }
}

pub fn clean_rate(
    outputs: &[Output<'_>],
    expected: &str,
    patterns: &NoisePatternSet,
    identifier: &dyn LanguageIdentifier,
    options: NoiseOptions,
) -> Result<NoiseReport> {
    if outputs.is_empty() {
        return Err(Error::Invalid("no outputs to classify".into()));
    }
    if !(options.threshold > 0.0 && options.threshold <= 1.0) {
        return Err(Error::Invalid(format!(
            "threshold {} outside (0, 1]",
            options.threshold
        )));
    }
    let mut report = NoiseReport {
        total: outputs.len(),
        explanatory: 0,
        wrong_language: 0,
        union: 0,
    };
    for (id, text) in outputs {
        let e = detect_explanatory(text, patterns);
        let w = is_wrong_language(id, text, expected, identifier, options)?;
        report.explanatory += e as usize;
        report.wrong_language += w as usize;
        report.union += (e || w) as usize;
    }
    Ok(report)
}
