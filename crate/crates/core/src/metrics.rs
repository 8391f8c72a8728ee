//! Corpus-level BLEU and chrF++, externally computed score tables (COMET),
//! and reasoning-minus-instruct score deltas.
//!
//! BLEU tokenization follows the 13a convention, applied in this order to a
//! space-padded segment:
//!
//! 1. `<skipped>` markers and end-of-line hyphenation are removed, newlines
//!    become spaces, and the entities `&quot; &amp; &lt; &gt;` are unescaped;
//! 2. every character in `{|}~`, ``[\]^_` ``, space and `!"#$%&`, `()*+`,
//!    `:;<=>?@` and `/` is surrounded by spaces;
//! 3. `.` and `,` are split off unless preceded by a digit;
//! 4. `.` and `,` are split off unless followed by a digit;
//! 5. `-` is split off when preceded by a digit;
//! 6. the result is split on whitespace.
//!
//! Steps 2-5 are non-overlapping left-to-right substitutions, so a digit on
//! one side of a period keeps it attached on that side only.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::hash::Hash;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::LanguagePair;
use crate::error::{Error, RecordError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Comet,
    Bleu,
    Chrf,
}

impl Metric {
    pub fn decimals(self) -> usize {
        match self {
            Metric::Comet => 4,
            Metric::Bleu | Metric::Chrf => 2,
        }
    }

    pub fn nominal_range(self) -> (f64, f64) {
        match self {
            Metric::Comet => (0.0, 1.0),
            Metric::Bleu | Metric::Chrf => (0.0, 100.0),
        }
    }

    pub fn format(self, v: f64) -> String {
        format!("{v:.*}", self.decimals())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "comet" => Ok(Metric::Comet),
            "bleu" => Ok(Metric::Bleu),
            "chrf" | "chrf++" => Ok(Metric::Chrf),
            other => Err(Error::Metric(format!("unknown metric `{other}`"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Comet => "comet",
            Metric::Bleu => "bleu",
            Metric::Chrf => "chrf",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuTokenizer {
    #[default]
    #[serde(rename = "13a")]
    Thirteen,
    /// Plain whitespace split.
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    #[default]
    None,
    /// Each zero-match order gets precision `1 / (2^k * total)`, `k` counting
    /// zero-match orders so far.
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub tokenizer: BleuTokenizer,
    pub max_order: usize,
    pub smoothing: Smoothing,
    pub lowercase: bool,
    /// Average only over orders that have at least one hypothesis n-gram.
    pub effective_order: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            tokenizer: BleuTokenizer::Thirteen,
            max_order: 4,
            smoothing: Smoothing::None,
            lowercase: false,
            effective_order: false,
        }
    }
}

struct Rules13a {
    punct: Regex,
    period_after: Regex,
    period_before: Regex,
    dash: Regex,
}

fn rules_13a() -> &'static Rules13a {
    static RULES: OnceLock<Rules13a> = OnceLock::new();
    RULES.get_or_init(|| Rules13a {
        punct: Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").expect("valid"),
        period_after: Regex::new(r"([^0-9])([\.,])").expect("valid"),
        period_before: Regex::new(r"([\.,])([^0-9])").expect("valid"),
        dash: Regex::new(r"([0-9])(-)").expect("valid"),
    })
}

pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let r = rules_13a();
    let s = format!(" {s} ");
    let s = r.punct.replace_all(&s, " $1 ");
    let s = r.period_after.replace_all(&s, "$1 $2 ");
    let s = r.period_before.replace_all(&s, " $1 $2");
    let s = r.dash.replace_all(&s, "$1 $2 ");
    s.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts<T: Eq + Hash + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for w in items.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// `(matches, hypothesis total, reference total)` for order `n`, clipped.
fn overlap<T: Eq + Hash + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (
        matches,
        hyp.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

fn check_lengths(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Metric(format!("{hyps} hypotheses but {refs} references")));
    }
    if hyps == 0 {
        return Err(Error::Metric("empty corpus".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

pub fn bleu_stats<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], config: &BleuConfig) -> Result<BleuStats> {
    check_lengths(hyps.len(), refs.len())?;
    let tok = |s: &str| -> Vec<String> {
        let s = if config.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        };
        match config.tokenizer {
            BleuTokenizer::Thirteen => tokenize_13a(&s),
            BleuTokenizer::None => s.split_whitespace().map(str::to_string).collect(),
        }
    };
    let mut stats = BleuStats {
        matches: vec![0; config.max_order],
        totals: vec![0; config.max_order],
        hyp_len: 0,
        ref_len: 0,
    };
    for (h, r) in hyps.iter().zip(refs) {
        let h = tok(h.as_ref());
        let r = tok(r.as_ref());
        stats.hyp_len += h.len();
        stats.ref_len += r.len();
        for n in 1..=config.max_order {
            let (m, t, _) = overlap(&h, &r, n);
            stats.matches[n - 1] += m;
            stats.totals[n - 1] += t;
        }
    }
    Ok(stats)
}

impl BleuStats {
    pub fn score(&self, config: &BleuConfig) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let mut log_sum = 0.0;
        let mut order = config.max_order;
        let mut smooth = 1.0;
        for n in 0..config.max_order {
            if self.totals[n] == 0 {
                if config.effective_order {
                    order = n;
                    break;
                }
                return 0.0;
            }
            let p = if self.matches[n] == 0 {
                match config.smoothing {
                    Smoothing::None => return 0.0,
                    Smoothing::Exp => {
                        smooth *= 2.0;
                        1.0 / (smooth * self.totals[n] as f64)
                    }
                }
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            };
            log_sum += p.ln();
        }
        if order == 0 {
            return 0.0;
        }
        100.0 * bp * (log_sum / order as f64).exp()
    }
}

/// Corpus-level BLEU in `[0, 100]`.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], config: &BleuConfig) -> Result<f64> {
    Ok(bleu_stats(hyps, refs, config)?.score(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
        }
    }
}

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Whitespace words with one leading or trailing punctuation mark split off.
pub fn chrf_words(segment: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in segment.split_whitespace() {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() == 1 {
            out.push(w.to_string());
        } else if PUNCTUATION.contains(chars[chars.len() - 1]) {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if PUNCTUATION.contains(chars[0]) {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

/// Per-order `(matches, hyp total, ref total)`, character orders first.
pub fn chrf_stats<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    config: &ChrfConfig,
) -> Result<Vec<(usize, usize, usize)>> {
    check_lengths(hyps.len(), refs.len())?;
    let mut stats = vec![(0, 0, 0); config.char_order + config.word_order];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.as_ref().chars().filter(|c| !c.is_whitespace()).collect();
        for n in 1..=config.char_order {
            let (m, a, b) = overlap(&hc, &rc, n);
            let s = &mut stats[n - 1];
            *s = (s.0 + m, s.1 + a, s.2 + b);
        }
        let hw = chrf_words(h.as_ref());
        let rw = chrf_words(r.as_ref());
        for n in 1..=config.word_order {
            let (m, a, b) = overlap(&hw, &rw, n);
            let s = &mut stats[config.char_order + n - 1];
            *s = (s.0 + m, s.1 + a, s.2 + b);
        }
    }
    Ok(stats)
}

/// Arithmetic mean of the per-order F-beta scores, times 100. Orders with
/// no n-grams on either side are left out of the mean.
pub fn chrf_score(stats: &[(usize, usize, usize)], beta: f64) -> f64 {
    let b2 = beta * beta;
    let mut sum = 0.0;
    let mut orders = 0usize;
    for &(m, h, r) in stats {
        if h == 0 && r == 0 {
            continue;
        }
        orders += 1;
        let p = if h > 0 { m as f64 / h as f64 } else { 0.0 };
        let rc = if r > 0 { m as f64 / r as f64 } else { 0.0 };
        let denom = b2 * p + rc;
        if denom > 0.0 {
            sum += (1.0 + b2) * p * rc / denom;
        }
    }
    if orders == 0 {
        return 0.0;
    }
    100.0 * sum / orders as f64
}

/// Corpus-level chrF++ in `[0, 100]`.
pub fn chrf<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], config: &ChrfConfig) -> Result<f64> {
    Ok(chrf_score(&chrf_stats(hyps, refs, config)?, config.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    CorpusLevel,
    SegmentLevel,
}

/// Scores keyed by `(model, language pair)`. Segment-level inputs are
/// averaged per key.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub metric: Metric,
    pub entries: BTreeMap<(String, LanguagePair), f64>,
    pub granularity: Granularity,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct ScoreRow {
    model: String,
    lp: String,
    score: String,
}

#[derive(Deserialize)]
struct SegmentRow {
    model: String,
    lp: String,
    instance_id: String,
    score: f64,
}

impl ScoreTable {
    pub fn new(metric: Metric) -> Self {
        ScoreTable {
            metric,
            entries: BTreeMap::new(),
            granularity: Granularity::CorpusLevel,
            warnings: Vec::new(),
        }
    }

    pub fn insert(&mut self, model: &str, pair: LanguagePair, score: f64) -> Result<()> {
        let key = (model.to_string(), pair);
        if self.entries.contains_key(&key) {
            return Err(Error::Duplicate(format!("score for ({}, {})", key.0, key.1)));
        }
        self.check_range(&key.0, &key.1, score);
        self.entries.insert(key, score);
        Ok(())
    }

    fn check_range(&mut self, model: &str, pair: &LanguagePair, score: f64) {
        let (lo, hi) = self.metric.nominal_range();
        if !(lo..=hi).contains(&score) {
            let msg = format!(
                "{} score {score} for ({model}, {pair}) outside nominal range [{lo}, {hi}]",
                self.metric
            );
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
    }

    /// CSV `model,lp,score`, or segment-level JSONL
    /// `{model, lp, instance_id, score}` when the file ends in `.jsonl`.
    pub fn load(path: impl AsRef<Path>, metric: Metric) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "jsonl") {
            return Self::load_segments(path, metric);
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut table = ScoreTable::new(metric);
        let mut errors = Vec::new();
        let headers = rdr.headers()?.clone();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let row: ScoreRow = match rec.deserialize(Some(&headers)) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(RecordError {
                        line,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let parsed = row
                .score
                .parse::<f64>()
                .map_err(|_| format!("unparseable score {:?}", row.score))
                .and_then(|s| {
                    if s.is_finite() {
                        Ok(s)
                    } else {
                        Err(format!("non-finite score {s}"))
                    }
                })
                .and_then(|s| {
                    row.lp
                        .parse::<LanguagePair>()
                        .map(|p| (p, s))
                        .map_err(|e| e.to_string())
                })
                .and_then(|(p, s)| table.insert(&row.model, p, s).map_err(|e| e.to_string()));
            if let Err(message) = parsed {
                errors.push(RecordError { line, message });
            }
        }
        if !errors.is_empty() {
            return Err(Error::Records {
                path: path.to_path_buf(),
                errors,
            });
        }
        Ok(table)
    }

    fn load_segments(path: &Path, metric: Metric) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sums: BTreeMap<(String, LanguagePair), (f64, usize)> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<SegmentRow>(line)
                .map_err(|e| e.to_string())
                .and_then(|r| r.lp.parse::<LanguagePair>().map(|p| (r, p)).map_err(|e| e.to_string()));
            match parsed {
                Err(message) => errors.push(RecordError { line: i + 1, message }),
                Ok((row, pair)) => {
                    if !seen.insert((row.model.clone(), pair.clone(), row.instance_id.clone())) {
                        errors.push(RecordError {
                            line: i + 1,
                            message: format!("duplicate segment ({}, {pair}, {})", row.model, row.instance_id),
                        });
                        continue;
                    }
                    let e = sums.entry((row.model, pair)).or_insert((0.0, 0));
                    e.0 += row.score;
                    e.1 += 1;
                }
            }
        }
        if !errors.is_empty() {
            return Err(Error::Records {
                path: path.to_path_buf(),
                errors,
            });
        }
        let mut table = ScoreTable::new(metric);
        table.granularity = Granularity::SegmentLevel;
        for ((model, pair), (sum, n)) in sums {
            table.insert(&model, pair, sum / n as f64)?;
        }
        Ok(table)
    }

    pub fn get(&self, model: &str, pair: &LanguagePair) -> Option<f64> {
        self.entries.get(&(model.to_string(), pair.clone())).copied()
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.entries.keys().map(|k| k.0.clone()).collect();
        m.dedup();
        m
    }

    pub fn pairs(&self) -> Vec<LanguagePair> {
        let mut p: Vec<LanguagePair> = self.entries.keys().map(|k| k.1.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn has_model(&self, model: &str) -> bool {
        self.entries.keys().any(|k| k.0 == model)
    }
}

/// Reasoning-model score minus its instruction-tuned counterpart's.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRecord {
    pub pair: LanguagePair,
    pub reasoning_model: String,
    pub instruct_model: String,
    pub metric: Metric,
    pub delta: f64,
}

/// Deltas for every pairing and every language pair scored on both sides.
/// Pairs missing on one side are skipped and reported in the returned
/// warnings.
pub fn delta_scores(
    reasoning: &ScoreTable,
    instruct: &ScoreTable,
    pairing: &BTreeMap<String, String>,
) -> Result<(Vec<DeltaRecord>, Vec<String>)> {
    if reasoning.metric != instruct.metric {
        return Err(Error::Metric(format!(
            "cannot subtract {} scores from {} scores",
            instruct.metric, reasoning.metric
        )));
    }
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (r_model, i_model) in pairing {
        for m in [r_model, i_model] {
            let table = if m == r_model { reasoning } else { instruct };
            if !table.has_model(m) {
                return Err(Error::Missing(format!(
                    "paired model `{m}` has no {} scores",
                    table.metric
                )));
            }
        }
        let mut pairs = reasoning.pairs();
        pairs.extend(instruct.pairs());
        pairs.sort();
        pairs.dedup();
        for pair in pairs {
            match (reasoning.get(r_model, &pair), instruct.get(i_model, &pair)) {
                (Some(r), Some(i)) => out.push(DeltaRecord {
                    pair,
                    reasoning_model: r_model.clone(),
                    instruct_model: i_model.clone(),
                    metric: reasoning.metric,
                    delta: r - i,
                }),
                (None, None) => {}
                _ => {
                    let msg = format!("{pair}: {} score missing for {r_model} or {i_model}", reasoning.metric);
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
    }
    Ok((out, warnings))
}
