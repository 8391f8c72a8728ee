//! Run configuration, report emission and the command implementations
//! behind the `mtdiag` binary.
//!
//! Every CSV written here starts with a provenance comment
//! `# mtdiag <version> config=<sha256>` followed by optional `#` metadata
//! lines, so the files stay readable by any CSV reader that skips comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{resolve, Corpus, CorpusFormat, LangCode, LanguagePair, PromptTemplate};
use crate::error::{Error, Result};
use crate::metrics::{self, BleuConfig, ChrfConfig, DeltaRecord, Metric, ScoreTable, Smoothing};
use crate::noise::{
    self, ExternalPredictions, LanguageIdentifier, NoiseOptions, NoisePatternSet, NoiseReport, TrigramIdentifier,
};
use crate::reasoning::{aggregate_reasoning, reasoning_stats_for, Delimiters};
use crate::stats::{self, CorrelationResult, PairedSample, DEFAULT_ALPHA, METHOD_NOTE};
use crate::tar::{self, tar_for_language, tar_for_sequences, TarMatrix, TarRecord};
use crate::tokenize::{load_pretokenized, VocabModel, VocabOptions};
use crate::typology::{pair_features, DistanceTable, PairFeatures, FEATURE_COLUMNS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Quotes a CSV field when it needs it.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub lp: LanguagePair,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    /// JSON `token -> id` map; needed unless every language is pretokenized.
    pub vocab: Option<PathBuf>,
    pub merges: Option<PathBuf>,
    #[serde(default)]
    pub options: VocabOptions,
    /// Language code -> JSONL of pre-computed id sequences.
    #[serde(default)]
    pub pretokenized: BTreeMap<String, PathBuf>,
    pub delimiters: Option<Delimiters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Src,
    Tgt,
}

/// Which corpus side supplies the text sample of a language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSide {
    pub code: LangCode,
    pub lp: LanguagePair,
    pub side: Side,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorePaths {
    pub comet: Option<PathBuf>,
    pub bleu: Option<PathBuf>,
    pub chrf: Option<PathBuf>,
}

impl ScorePaths {
    fn get(&self, metric: Metric) -> Option<&PathBuf> {
        match metric {
            Metric::Comet => self.comet.as_ref(),
            Metric::Bleu => self.bleu.as_ref(),
            Metric::Chrf => self.chrf.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseOutputSpec {
    pub model: String,
    pub prompt: PromptTemplate,
    pub lp: LanguagePair,
    /// JSONL with `id` and `hyp` (or `raw`) fields.
    pub path: PathBuf,
    /// External language-id predictions for this file.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub patterns: Option<PathBuf>,
    /// Language code -> trigram profile CSV.
    #[serde(default)]
    pub profiles: BTreeMap<String, PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub per_line: bool,
    #[serde(default)]
    pub outputs: Vec<NoiseOutputSpec>,
}

fn default_threshold() -> f64 {
    noise::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningOutputSpec {
    pub model: String,
    pub lp: LanguagePair,
    /// JSONL with a `raw` field per output.
    pub path: PathBuf,
}

/// Where reasoning token counts come from: the model's tokenizer over the
/// reasoning text, or a per-output `reasoning_tokens` field (API usage).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenSource {
    #[default]
    Computed,
    Ingested,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningSpec {
    #[serde(default)]
    pub outputs: Vec<ReasoningOutputSpec>,
    /// Reasoning model -> its instruction-tuned counterpart.
    #[serde(default)]
    pub pairings: BTreeMap<String, String>,
    #[serde(default)]
    pub token_source: TokenSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Not part of the config hash: where reports go does not change them.
    #[serde(default = "default_out", skip_serializing)]
    pub out_dir: PathBuf,
    /// Per-language sample size for TAR; the whole corpus when absent.
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub corpora: Vec<CorpusSpec>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub languages: Vec<LanguageSide>,
    /// Precomputed `language,model,unique_count,vocab_size` records, used
    /// when no models are configured.
    pub tar_records: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    #[serde(default)]
    pub scores: ScorePaths,
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub reasoning: ReasoningSpec,
    /// Directory relative paths are resolved against; the config file's.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            alpha: DEFAULT_ALPHA,
            out_dir: default_out(),
            sample_size: None,
            corpora: Vec::new(),
            models: Vec::new(),
            languages: Vec::new(),
            tar_records: None,
            distances: None,
            scores: ScorePaths::default(),
            noise: None,
            reasoning: ReasoningSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(&m.name) {
                return Err(Error::Config(format!("model `{}` declared twice", m.name)));
            }
        }
        let mut codes = BTreeSet::new();
        for l in &self.languages {
            if !codes.insert(&l.code) {
                return Err(Error::Config(format!(
                    "language `{}` has two side designations",
                    l.code
                )));
            }
            let on_side = match l.side {
                Side::Src => &l.lp.src,
                Side::Tgt => &l.lp.tgt,
            };
            if *on_side != l.code {
                return Err(Error::Config(format!(
                    "language `{}` is not the {:?} side of {}",
                    l.code, l.side, l.lp
                )));
            }
        }
        Ok(())
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }

    /// SHA-256 of the configuration's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&json)
    }

    fn model(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }
}

/// What a command produced. Warnings never make a run fail.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Writes report files with a shared provenance header.
pub struct Writer {
    out_dir: PathBuf,
    header: String,
}

impl Writer {
    pub fn new(out_dir: impl Into<PathBuf>, config_hash: &str) -> Self {
        Writer {
            out_dir: out_dir.into(),
            header: format!("# mtdiag {VERSION} config={config_hash}\n"),
        }
    }

    pub fn write(&self, outcome: &mut Outcome, name: &str, meta: &[String], body: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        let mut text = self.header.clone();
        for m in meta {
            text.push_str("# ");
            text.push_str(m);
            text.push('\n');
        }
        text.push_str(body);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        outcome.artifacts.push(path.clone());
        Ok(path)
    }
}

fn stats_meta(alpha: f64) -> Vec<String> {
    vec![format!("alpha={alpha}; {METHOD_NOTE}")]
}

fn load_corpus(cfg: &RunConfig, lp: &LanguagePair) -> Result<Corpus> {
    let spec = cfg
        .corpora
        .iter()
        .find(|c| &c.lp == lp)
        .ok_or_else(|| Error::Missing(format!("no corpus configured for {lp}")))?;
    Corpus::load(cfg.path(&spec.path), spec.format, lp.clone())
}

/// Every language that needs a TAR value: the configured side table first,
/// then any corpus language it misses (which is then an error).
fn tar_languages(cfg: &RunConfig) -> Result<Vec<&LanguageSide>> {
    for c in &cfg.corpora {
        for code in [&c.lp.src, &c.lp.tgt] {
            if !cfg.languages.iter().any(|l| &l.code == code) {
                return Err(Error::Config(format!(
                    "language `{code}` (from {}) has no side designation",
                    c.lp
                )));
            }
        }
    }
    Ok(cfg.languages.iter().collect())
}

fn side_texts(corpus: &Corpus, side: Side) -> Result<Vec<String>> {
    corpus
        .instances
        .iter()
        .map(|i| match side {
            Side::Src => Ok(i.src_text.clone()),
            Side::Tgt => i
                .ref_text
                .clone()
                .ok_or_else(|| Error::Missing(format!("instance `{}` of {} has no reference", i.id, corpus.pair))),
        })
        .collect()
}

fn load_model(cfg: &RunConfig, spec: &ModelSpec) -> Result<Option<VocabModel>> {
    let Some(vocab) = &spec.vocab else {
        return Ok(None);
    };
    let merges = spec.merges.as_ref().map(|p| cfg.path(p));
    VocabModel::load(&spec.name, cfg.path(vocab), merges.as_deref(), spec.options.clone()).map(Some)
}

/// TAR records in (model, language) configuration order.
pub fn compute_tar_records(cfg: &RunConfig) -> Result<Vec<TarRecord>> {
    if cfg.models.is_empty() {
        return match &cfg.tar_records {
            Some(p) => tar::load_records(cfg.path(p)),
            None => Err(Error::Config("no models and no tar_records configured".into())),
        };
    }
    let languages = tar_languages(cfg)?;
    let mut corpora: BTreeMap<LanguagePair, Corpus> = BTreeMap::new();
    let mut records = Vec::new();
    for spec in &cfg.models {
        let model = load_model(cfg, spec)?;
        for lang in &languages {
            if let Some(p) = spec.pretokenized.get(lang.code.as_str()) {
                let seqs = load_pretokenized(cfg.path(p))?;
                let (vocab_size, excluded) = match &model {
                    Some(m) => (m.vocab_size(), m.excludes_specials().then(|| m.specials().clone())),
                    None => (
                        spec.options.vocab_size.ok_or_else(|| {
                            Error::Config(format!(
                                "model `{}` needs options.vocab_size or a vocab file",
                                spec.name
                            ))
                        })?,
                        None,
                    ),
                };
                records.push(tar_for_sequences(
                    &spec.name,
                    &seqs,
                    vocab_size,
                    excluded.as_ref(),
                    lang.code.clone(),
                )?);
                continue;
            }
            let model = model.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "model `{}` has no vocab and no pretokenized input for `{}`",
                    spec.name, lang.code
                ))
            })?;
            if !corpora.contains_key(&lang.lp) {
                let mut corpus = load_corpus(cfg, &lang.lp)?;
                if let Some(n) = cfg.sample_size {
                    corpus = corpus.sample(n, cfg.seed)?;
                }
                corpora.insert(lang.lp.clone(), corpus);
            }
            let texts = side_texts(&corpora[&lang.lp], lang.side)?;
            records.push(tar_for_language(model, &texts, lang.code.clone())?);
        }
    }
    Ok(records)
}

pub fn cmd_tar(cfg: &RunConfig, writer: &Writer) -> Result<Outcome> {
    let records = compute_tar_records(cfg)?;
    let mut outcome = Outcome::default();
    let matrix = TarMatrix::from_records(&records)?;
    writer.write(&mut outcome, "tar_matrix.csv", &[], &matrix.to_csv())?;
    writer.write(&mut outcome, "tar_records.csv", &[], &tar::records_to_csv(&records))?;
    Ok(outcome)
}

#[derive(Deserialize)]
struct OutputRow {
    #[serde(alias = "instance_id")]
    id: Option<String>,
    hyp: Option<String>,
    raw: Option<String>,
}

/// `(id, text)` pairs from a JSONL outputs file; `hyp` wins over `raw`,
/// missing ids become 1-based line indices.
pub fn load_outputs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<OutputRow>(line) {
            Ok(row) => {
                let id = row.id.unwrap_or_else(|| (i + 1).to_string());
                let Some(t) = row.hyp.or(row.raw) else {
                    errors.push(crate::error::RecordError {
                        line: i + 1,
                        message: "missing `hyp` or `raw` field".into(),
                    });
                    continue;
                };
                if !ids.insert(id.clone()) {
                    errors.push(crate::error::RecordError {
                        line: i + 1,
                        message: format!("duplicate id `{id}`"),
                    });
                    continue;
                }
                out.push((id, t));
            }
            Err(e) => errors.push(crate::error::RecordError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Records {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok(out)
}

fn pct(rate: f64) -> String {
    format!("{:.2}", rate * 100.0)
}

type RateColumn = (&'static str, fn(&NoiseReport) -> f64);

/// Per-model noise rates: a column group per rate, one column per prompt.
pub fn noise_table(reports: &BTreeMap<(String, PromptTemplate), NoiseReport>, models: &[String]) -> String {
    let prompts = [PromptTemplate::P0, PromptTemplate::P1, PromptTemplate::P2];
    let rates: [RateColumn; 3] = [
        ("clean", NoiseReport::clean_rate),
        ("expl", NoiseReport::expl_rate),
        ("wrongl", NoiseReport::wrongl_rate),
    ];
    let mut out = String::from("model");
    for (name, _) in rates {
        for p in prompts {
            let _ = write!(out, ",{name}_{p}");
        }
    }
    out.push('\n');
    for m in models {
        out.push_str(&csv_field(m));
        for (_, rate) in rates {
            for p in prompts {
                match reports.get(&(m.clone(), p)) {
                    Some(r) => {
                        let _ = write!(out, ",{}", pct(rate(r)));
                    }
                    None => out.push_str(",/"),
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn cmd_noise(cfg: &RunConfig, writer: &Writer) -> Result<Outcome> {
    let spec = cfg
        .noise
        .as_ref()
        .ok_or_else(|| Error::Config("no [noise] section".into()))?;
    let patterns = match &spec.patterns {
        Some(p) => NoisePatternSet::load(cfg.path(p))?,
        None => NoisePatternSet::builtin(),
    };
    let trigram = if spec.profiles.is_empty() {
        None
    } else {
        let paths = spec.profiles.iter().map(|(k, v)| (k.clone(), cfg.path(v))).collect();
        Some(TrigramIdentifier::load(&paths)?)
    };
    let options = NoiseOptions {
        threshold: spec.threshold,
        per_line: spec.per_line,
    };

    let mut models: Vec<String> = Vec::new();
    let mut reports: BTreeMap<(String, PromptTemplate), NoiseReport> = BTreeMap::new();
    let mut rows = String::from("model,prompt,lp,total,explanatory,wrong_language,union,clean,expl,wrongl\n");
    for o in &spec.outputs {
        if !models.contains(&o.model) {
            models.push(o.model.clone());
        }
        let outputs = load_outputs(&cfg.path(&o.path))?;
        let external;
        let identifier: &dyn LanguageIdentifier = match (&o.predictions, &trigram) {
            (Some(p), _) => {
                external = ExternalPredictions::load(cfg.path(p))?;
                &external
            }
            (None, Some(t)) => t,
            (None, None) => {
                return Err(Error::Config(format!(
                    "no language identifier for {} {} {}: set predictions or noise.profiles",
                    o.model, o.prompt, o.lp
                )))
            }
        };
        let view: Vec<noise::Output<'_>> = outputs.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
        let r = noise::clean_rate(&view, o.lp.tgt.as_str(), &patterns, identifier, options)?;
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&o.model),
            o.prompt,
            o.lp,
            r.total,
            r.explanatory,
            r.wrong_language,
            r.union,
            pct(r.clean_rate()),
            pct(r.expl_rate()),
            pct(r.wrongl_rate())
        );
        let key = (o.model.clone(), o.prompt);
        let merged = reports.get(&key).map_or(r, |prev| prev.merge(&r));
        reports.insert(key, merged);
    }
    let mut outcome = Outcome::default();
    let meta = vec![format!(
        "threshold={}; per_line={}; patterns={}",
        spec.threshold,
        spec.per_line,
        patterns.patterns().len()
    )];
    writer.write(&mut outcome, "noise_table.csv", &meta, &noise_table(&reports, &models))?;
    writer.write(&mut outcome, "noise_cells.csv", &meta, &rows)?;
    Ok(outcome)
}

/// Features for every language pair one model is scored on.
fn model_features(
    model: &str,
    pairs: &[LanguagePair],
    records: &[TarRecord],
    distances: &DistanceTable,
) -> Result<Vec<PairFeatures>> {
    let find = |lang: &LangCode| {
        records
            .iter()
            .find(|r| r.model_name == model && &r.language == lang)
            .ok_or_else(|| Error::Missing(format!("no TAR record for ({lang}, {model})")))
    };
    pairs
        .iter()
        .map(|p| pair_features(p, distances, find(&p.src)?, find(&p.tgt)?))
        .collect()
}

fn fmt_coef(v: f64) -> String {
    format!("{v:.4}")
}

fn sig(flag: bool) -> &'static str {
    if flag {
        "*"
    } else {
        ""
    }
}

pub fn cmd_correlate(cfg: &RunConfig, writer: &Writer, metric: Metric) -> Result<Outcome> {
    let score_path = cfg
        .scores
        .get(metric)
        .ok_or_else(|| Error::Config(format!("no {metric} scores configured")))?;
    let scores = ScoreTable::load(cfg.path(score_path), metric)?;
    let distances = DistanceTable::load(
        cfg.path(
            cfg.distances
                .as_ref()
                .ok_or_else(|| Error::Config("no distances configured".into()))?,
        ),
    )?;
    let records = compute_tar_records(cfg)?;
    let mut outcome = Outcome::default();
    outcome.warnings.extend(scores.warnings.iter().cloned());

    let mut wide = String::from("model,n");
    for f in FEATURE_COLUMNS {
        let _ = write!(wide, ",{f},{f}_sig");
    }
    wide.push('\n');
    let mut long = String::from("model,feature,n,r,p_r,rho,p_rho,tau,p_tau,sig_r,sig_rho,sig_tau,note\n");
    let mut features_csv = String::new();

    for model in scores.models() {
        let pairs: Vec<LanguagePair> = scores
            .entries
            .keys()
            .filter(|(m, _)| *m == model)
            .map(|(_, p)| p.clone())
            .collect();
        let features = model_features(&model, &pairs, &records, &distances)?;
        for line in crate::typology::features_to_csv(&features).lines().skip(1) {
            let _ = writeln!(features_csv, "{},{line}", csv_field(&model));
        }
        let row = stats::correlate_features(&features, &scores, &model, cfg.alpha)?;
        let _ = write!(wide, "{},{}", csv_field(&model), row.n);
        for (name, cell) in &row.cells {
            match cell {
                Ok(c) => {
                    let _ = write!(wide, ",{},{}", fmt_coef(c.r), sig(c.significant_r));
                    let _ = writeln!(long, "{},{name},{},{}", csv_field(&model), c.n, result_cells(c));
                }
                Err(e) => {
                    outcome.warn(format!("{model} / {name}: {e}"));
                    wide.push_str(",NA,");
                    let _ = writeln!(
                        long,
                        "{},{name},{},NA,NA,NA,NA,NA,NA,,,,{}",
                        csv_field(&model),
                        row.n,
                        csv_field(e)
                    );
                }
            }
        }
        wide.push('\n');
    }
    let meta = stats_meta(cfg.alpha);
    let tag = metric.to_string().to_ascii_lowercase();
    writer.write(&mut outcome, &format!("correlate_{tag}.csv"), &meta, &wide)?;
    writer.write(&mut outcome, &format!("correlate_{tag}_long.csv"), &meta, &long)?;
    let mut fhead = String::from("model,lp,tar_sum");
    for f in crate::typology::FACET_NAMES {
        let _ = write!(fhead, ",{f}");
    }
    fhead.push_str(",mean\n");
    writer.write(
        &mut outcome,
        &format!("features_{tag}.csv"),
        &[],
        &(fhead + &features_csv),
    )?;
    Ok(outcome)
}

fn result_cells(c: &CorrelationResult) -> String {
    format!(
        "{},{:.6},{},{:.6},{},{:.6},{},{},{},",
        fmt_coef(c.r),
        c.p_r,
        fmt_coef(c.rho),
        c.p_rho,
        fmt_coef(c.tau),
        c.p_tau,
        sig(c.significant_r),
        sig(c.significant_rho),
        sig(c.significant_tau)
    )
}

#[derive(Deserialize)]
struct LooRow {
    label: String,
    actual: f64,
    tar: f64,
}

/// Reads `label,actual,tar` rows.
pub fn load_loo_data(path: &Path) -> Result<PairedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Invalid(format!("{}: {other:?}", path.display())),
        })?;
    let (mut labels, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.deserialize::<LooRow>() {
        let row = row?;
        labels.push(row.label);
        x.push(row.actual);
        y.push(row.tar);
    }
    PairedSample::new(labels, x, y)
}

pub fn loo_table(result: &stats::LooResult) -> String {
    let mut out = String::from("left_out,r,r_sig,rho,rho_sig,tau,tau_sig,p_r,p_rho,p_tau\n");
    for row in &result.rows {
        let c = &row.result;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            csv_field(row.left_out.as_deref().unwrap_or("None")),
            fmt_coef(c.r),
            sig(c.significant_r),
            fmt_coef(c.rho),
            sig(c.significant_rho),
            fmt_coef(c.tau),
            sig(c.significant_tau),
            c.p_r,
            c.p_rho,
            c.p_tau
        );
    }
    out
}

pub fn cmd_loo(data_path: &Path, alpha: f64, writer: &Writer) -> Result<Outcome> {
    let sample = load_loo_data(data_path)?;
    let result = stats::leave_one_out(&sample, alpha)?;
    let mut outcome = Outcome::default();
    let stem = data_path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    writer.write(
        &mut outcome,
        &format!("loo_{stem}.csv"),
        &stats_meta(alpha),
        &loo_table(&result),
    )?;
    Ok(outcome)
}

#[derive(Deserialize)]
struct RawRow {
    raw: Option<String>,
    hyp: Option<String>,
    reasoning_tokens: Option<usize>,
}

/// Raw texts, or the `reasoning_tokens` field of each line when counts are
/// ingested.
fn load_raws(path: &Path, source: TokenSource) -> Result<(Vec<String>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut raws, mut counts, mut errors) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(crate::error::RecordError {
                    line: i + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match source {
            TokenSource::Computed => match row.raw.or(row.hyp) {
                Some(r) => raws.push(r),
                None => errors.push(crate::error::RecordError {
                    line: i + 1,
                    message: "missing `raw` field".into(),
                }),
            },
            TokenSource::Ingested => match row.reasoning_tokens {
                Some(n) => counts.push(n),
                None => errors.push(crate::error::RecordError {
                    line: i + 1,
                    message: "missing `reasoning_tokens` field".into(),
                }),
            },
        }
    }
    if !errors.is_empty() {
        return Err(Error::Records {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok((raws, counts))
}

/// One scatter point: a reasoning model on one language pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReasoningPoint {
    pub model: String,
    pub instruct: String,
    pub pair: LanguagePair,
    pub src_tar: f64,
    pub tgt_tar: f64,
    pub mean_tokens: f64,
    pub delta_comet: Option<f64>,
    pub delta_bleu: Option<f64>,
}

fn find_delta(deltas: &[DeltaRecord], model: &str, pair: &LanguagePair) -> Option<f64> {
    deltas
        .iter()
        .find(|d| d.reasoning_model == model && &d.pair == pair)
        .map(|d| d.delta)
}

/// Labels with their x and y values.
type Series = (Vec<String>, Vec<f64>, Vec<f64>);

fn correlation_line(
    out: &mut String,
    outcome: &mut Outcome,
    scope: &str,
    x_name: &str,
    y_name: &str,
    (labels, x, y): Series,
    alpha: f64,
) {
    let n = labels.len();
    match PairedSample::new(labels, x, y).and_then(|s| stats::correlate(&s, alpha)) {
        Ok(c) => {
            let _ = writeln!(out, "{},{x_name},{y_name},{n},{}", csv_field(scope), result_cells(&c));
        }
        Err(e) => {
            outcome.warn(format!("{scope}: {x_name} vs {y_name}: {e}"));
            let _ = writeln!(
                out,
                "{},{x_name},{y_name},{n},NA,NA,NA,NA,NA,NA,,,,{}",
                csv_field(scope),
                csv_field(&e.to_string())
            );
        }
    }
}

type Target<'a> = (&'a str, &'a dyn Fn(&ReasoningPoint) -> Option<f64>);

pub fn cmd_reasoning(cfg: &RunConfig, writer: &Writer) -> Result<Outcome> {
    let spec = &cfg.reasoning;
    if spec.outputs.is_empty() {
        return Err(Error::Config("no reasoning outputs configured".into()));
    }
    let mut outcome = Outcome::default();
    let load_scores = |m: Metric| -> Result<Option<ScoreTable>> {
        cfg.scores.get(m).map(|p| ScoreTable::load(cfg.path(p), m)).transpose()
    };
    let comet = load_scores(Metric::Comet)?.ok_or_else(|| Error::Config("reasoning needs COMET scores".into()))?;
    let bleu = load_scores(Metric::Bleu)?;
    for o in &spec.outputs {
        if !spec.pairings.contains_key(&o.model) {
            return Err(Error::Missing(format!(
                "reasoning model `{}` has no instruct pairing",
                o.model
            )));
        }
    }
    let (comet_deltas, w) = metrics::delta_scores(&comet, &comet, &spec.pairings)?;
    outcome.warnings.extend(w);
    let bleu_deltas = match &bleu {
        Some(b) => {
            let (d, w) = metrics::delta_scores(b, b, &spec.pairings)?;
            outcome.warnings.extend(w);
            d
        }
        None => Vec::new(),
    };
    let records = compute_tar_records(cfg)?;
    let tar_of = |model: &str, lang: &LangCode| {
        records
            .iter()
            .find(|r| r.model_name == model && &r.language == lang)
            .map(TarRecord::tar)
            .ok_or_else(|| Error::Missing(format!("no TAR record for ({lang}, {model})")))
    };

    let mut models: BTreeMap<String, VocabModel> = BTreeMap::new();
    let mut points = Vec::new();
    let mut stats_csv = String::from("lp,model,mean_reasoning_tokens,n\n");
    let mut delim_notes = BTreeSet::new();
    for o in &spec.outputs {
        let (raws, counts) = load_raws(&cfg.path(&o.path), spec.token_source)?;
        let st = match spec.token_source {
            TokenSource::Ingested => aggregate_reasoning(o.lp.clone(), &o.model, counts)?,
            TokenSource::Computed => {
                let mspec = cfg
                    .model(&o.model)
                    .ok_or_else(|| Error::Config(format!("reasoning model `{}` is not declared", o.model)))?;
                let delims = mspec.delimiters.clone().unwrap_or_default();
                delim_notes.insert(format!("{}: {} {}", o.model, delims.open, delims.close));
                if !models.contains_key(&o.model) {
                    let m = load_model(cfg, mspec)?.ok_or_else(|| {
                        Error::Config(format!("reasoning model `{}` needs a vocab to count tokens", o.model))
                    })?;
                    models.insert(o.model.clone(), m);
                }
                let (st, unterminated) = reasoning_stats_for(o.lp.clone(), &models[&o.model], &raws, &delims)?;
                if unterminated > 0 {
                    outcome.warn(format!(
                        "{} {}: {unterminated} unterminated reasoning blocks",
                        o.model, o.lp
                    ));
                }
                st
            }
        };
        let _ = writeln!(
            stats_csv,
            "{},{},{:.4},{}",
            o.lp,
            csv_field(&o.model),
            st.mean,
            st.counts.len()
        );
        points.push(ReasoningPoint {
            model: o.model.clone(),
            instruct: spec.pairings[&o.model].clone(),
            pair: o.lp.clone(),
            src_tar: tar_of(&o.model, &o.lp.src)?,
            tgt_tar: tar_of(&o.model, &o.lp.tgt)?,
            mean_tokens: st.mean,
            delta_comet: find_delta(&comet_deltas, &o.model, &o.lp),
            delta_bleu: find_delta(&bleu_deltas, &o.model, &o.lp),
        });
    }

    let opt = |v: Option<f64>| v.map(|d| format!("{d:.4}")).unwrap_or_default();
    let mut scatter = String::from("model,instruct,lp,src_tar,tgt_tar,mean_reasoning_tokens,delta_comet,delta_bleu\n");
    for p in &points {
        let _ = writeln!(
            scatter,
            "{},{},{},{:.4},{:.4},{:.2},{},{}",
            csv_field(&p.model),
            csv_field(&p.instruct),
            p.pair,
            p.src_tar,
            p.tgt_tar,
            p.mean_tokens,
            opt(p.delta_comet),
            opt(p.delta_bleu)
        );
    }

    let mut summary = String::from("scope,x,y,n,r,p_r,rho,p_rho,tau,p_tau,sig_r,sig_rho,sig_tau,note\n");
    let mut fits = String::from("model,x,y,n,slope,intercept,r_squared\n");
    let series = |pts: &[&ReasoningPoint], f: &dyn Fn(&ReasoningPoint) -> Option<f64>, pooled: bool| {
        let mut labels = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for p in pts {
            if let Some(v) = f(p) {
                labels.push(if pooled {
                    format!("{}:{}", p.model, p.pair)
                } else {
                    p.pair.to_string()
                });
                x.push(p.mean_tokens);
                y.push(v);
            }
        }
        (labels, x, y)
    };
    let targets: [Target<'_>; 4] = [
        ("src_tar", &|p| Some(p.src_tar)),
        ("tgt_tar", &|p| Some(p.tgt_tar)),
        ("delta_comet", &|p| p.delta_comet),
        ("delta_bleu", &|p| p.delta_bleu),
    ];
    let all: Vec<&ReasoningPoint> = points.iter().collect();
    for (name, f) in &targets[..2] {
        let s = series(&all, *f, true);
        correlation_line(
            &mut summary,
            &mut outcome,
            "all",
            "mean_reasoning_tokens",
            name,
            s,
            cfg.alpha,
        );
    }
    let mut names: Vec<&String> = points.iter().map(|p| &p.model).collect();
    names.sort();
    names.dedup();
    for model in names {
        let pts: Vec<&ReasoningPoint> = points.iter().filter(|p| &p.model == model).collect();
        for (name, f) in &targets {
            let (l, x, y) = series(&pts, *f, false);
            if l.is_empty() {
                continue;
            }
            let n = l.len();
            if name.starts_with("delta") {
                match PairedSample::new(l.clone(), x.clone(), y.clone()).and_then(|s| stats::ols_fit(&s)) {
                    Ok(fit) => {
                        let _ = writeln!(
                            fits,
                            "{},mean_reasoning_tokens,{name},{n},{:.6},{:.6},{:.4}",
                            csv_field(model),
                            fit.slope,
                            fit.intercept,
                            fit.r_squared
                        );
                    }
                    Err(e) => outcome.warn(format!("{model}: fit of {name}: {e}")),
                }
            }
            correlation_line(
                &mut summary,
                &mut outcome,
                model,
                "mean_reasoning_tokens",
                name,
                (l, x, y),
                cfg.alpha,
            );
        }
    }
    let mut meta = stats_meta(cfg.alpha);
    meta.push(
        "reference values (tokens vs tgt_tar, pooled over four reasoning models): r=-0.2572 rho=-0.3177 tau=-0.2306; \
         reference fit R^2=0.628"
            .to_string(),
    );
    let source = match spec.token_source {
        TokenSource::Computed => "reasoning tokens: computed with each model's tokenizer".to_string(),
        TokenSource::Ingested => "reasoning tokens: ingested from `reasoning_tokens`".to_string(),
    };
    let mut counting = vec![source];
    if !delim_notes.is_empty() {
        counting.push(format!(
            "delimiters: {}",
            delim_notes.into_iter().collect::<Vec<_>>().join("; ")
        ));
    }
    meta.extend(counting.iter().cloned());
    writer.write(&mut outcome, "reasoning_stats.csv", &counting, &stats_csv)?;
    writer.write(&mut outcome, "reasoning_points.csv", &counting, &scatter)?;
    writer.write(&mut outcome, "reasoning_correlations.csv", &meta, &summary)?;
    writer.write(&mut outcome, "reasoning_fits.csv", &counting, &fits)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub artifacts: Vec<Artifact>,
    /// Seconds since the epoch from `SOURCE_DATE_EPOCH`; absent otherwise
    /// so that reruns stay byte-identical.
    pub created: Option<u64>,
    pub warnings: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Lists every file already in the output directory with its digest.
pub fn build_manifest(out_dir: &Path, config_hash: &str, warnings: Vec<String>) -> Result<RunManifest> {
    let mut artifacts = Vec::new();
    if out_dir.is_dir() {
        let mut paths = Vec::new();
        collect_files(out_dir, &mut paths)?;
        paths.sort();
        for p in paths {
            let rel = p.strip_prefix(out_dir).unwrap_or(&p);
            if rel == Path::new(MANIFEST_NAME) {
                continue;
            }
            let data = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            artifacts.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&data),
            });
        }
    }
    Ok(RunManifest {
        config_hash: config_hash.to_string(),
        version: VERSION.to_string(),
        artifacts,
        created: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()),
        warnings,
    })
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn cmd_manifest(out_dir: &Path, config_hash: &str) -> Result<Outcome> {
    let manifest = build_manifest(out_dir, config_hash, Vec::new())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(MANIFEST_NAME);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(Outcome {
        artifacts: vec![path],
        warnings: Vec::new(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Corpus BLEU or chrF++ of a hypothesis file against a reference file,
/// one segment per line.
pub fn score_files(metric: Metric, hyp: &Path, reference: &Path, bleu: &BleuConfig) -> Result<f64> {
    let hyps = read_lines(hyp)?;
    let refs = read_lines(reference)?;
    match metric {
        Metric::Bleu => metrics::bleu(&hyps, &refs, bleu),
        Metric::Chrf => metrics::chrf(&hyps, &refs, &ChrfConfig::default()),
        Metric::Comet => Err(Error::Metric("COMET scores are computed externally".into())),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtdiag", version, about = "Machine-translation failure diagnostics")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured sampling seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured significance level.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Comet,
    Bleu,
    Chrf,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Comet => Metric::Comet,
            MetricArg::Bleu => Metric::Bleu,
            MetricArg::Chrf => Metric::Chrf,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Token activation rates per language and model.
    Tar,
    /// Clean, explanatory and wrong-language rates of model outputs.
    Noise,
    /// Correlate metric scores with TAR and typological distances.
    Correlate {
        #[arg(long, value_enum, default_value = "comet")]
        metric: MetricArg,
    },
    /// Leave-one-out correlations over a `label,actual,tar` CSV.
    Loo { data: PathBuf },
    /// Reasoning token counts against TAR and score deltas.
    Reasoning,
    /// Corpus BLEU or chrF++ over plain-text files.
    Metrics {
        #[arg(value_enum)]
        metric: MetricArg,
        /// Hypotheses, one segment per line
        #[arg(long)]
        hyp: PathBuf,
        /// References, aligned with --hyp
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Exponential smoothing for BLEU.
        #[arg(long)]
        smooth: bool,
        /// Lowercase before BLEU tokenization
        #[arg(long)]
        lowercase: bool,
    },
    /// Write manifest.json listing the output directory.
    Manifest,
}

/// Loads the config (or defaults) and applies command-line overrides.
pub fn effective_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(a) = global.alpha {
        cfg.alpha = a;
    }
    if let Some(o) = &global.out {
        // Relative to the working directory, not the config file.
        cfg.out_dir = std::path::absolute(o).map_err(|e| Error::io(o, e))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command. Text meant for stdout is returned in `Outcome` only
/// through the artifacts; the `metrics` score is printed by the caller.
pub fn run(cli: &Cli) -> Result<(Outcome, Option<String>)> {
    let cfg = effective_config(&cli.global)?;
    let hash = cfg.hash();
    let out_dir = cfg.path(&cfg.out_dir);
    let writer = Writer::new(&out_dir, &hash);
    let outcome = match &cli.command {
        Command::Tar => cmd_tar(&cfg, &writer)?,
        Command::Noise => cmd_noise(&cfg, &writer)?,
        Command::Correlate { metric } => cmd_correlate(&cfg, &writer, (*metric).into())?,
        Command::Loo { data } => cmd_loo(data, cfg.alpha, &writer)?,
        Command::Reasoning => cmd_reasoning(&cfg, &writer)?,
        Command::Manifest => cmd_manifest(&out_dir, &hash)?,
        Command::Metrics {
            metric,
            hyp,
            reference,
            smooth,
            lowercase,
        } => {
            let metric: Metric = (*metric).into();
            let bleu = BleuConfig {
                smoothing: if *smooth { Smoothing::Exp } else { Smoothing::None },
                lowercase: *lowercase,
                ..BleuConfig::default()
            };
            let score = score_files(metric, hyp, reference, &bleu)?;
            return Ok((Outcome::default(), Some(format!("{metric} = {}", metric.format(score)))));
        }
    };
    Ok((outcome, None))
}
