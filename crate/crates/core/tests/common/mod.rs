//! Shared fixtures and independent reference implementations for the
//! integration tests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use mtdiag::metrics::{chrf_words, tokenize_13a};
use mtdiag::noise::{ExternalPredictions, LangPrediction};
use mtdiag::tokenize::{PreSplit, VocabModel, VocabOptions};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn toy_dir() -> PathBuf {
    data_dir().join("toy")
}

/// The byte-level toy BPE model shipped with the fixtures.
pub fn toy_model() -> VocabModel {
    let dir = toy_dir();
    let options = VocabOptions {
        byte_level: true,
        pre_split: PreSplit::Whitespace,
        specials: vec!["<|endoftext|>".into()],
        exclude_specials: true,
        ..VocabOptions::default()
    };
    VocabModel::load("toy", dir.join("vocab.json"), Some(&dir.join("merges.txt")), options).unwrap()
}

/// Rows of a `label,actual,tar` style CSV: (label, first, second, third).
pub fn expected_table(name: &str) -> Vec<(String, f64, f64, f64)> {
    let text = std::fs::read_to_string(data_dir().join(name)).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
            )
        })
        .collect()
}

/// Kendall tau-b by enumerating every pair.
pub fn kendall_brute(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                s += if (dx > 0.0) == (dy > 0.0) { 1 } else { -1 };
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    s as f64 / (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt()
}

/// Spearman's rho for tie-free data: `1 - 6 sum d^2 / (n (n^2 - 1))`.
pub fn spearman_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64)
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn count<T: PartialEq>(hay: &[T], n: usize, gram: &[T]) -> usize {
    if hay.len() < n {
        return 0;
    }
    (0..=hay.len() - n).filter(|&i| &hay[i..i + n] == gram).count()
}

/// Clipped matches and totals of order `n`, counted by linear scans.
pub fn ngram_overlap<T: PartialEq>(h: &[T], r: &[T], n: usize) -> (usize, usize, usize) {
    let total = |v: &[T]| v.len().saturating_sub(n - 1).min(v.len());
    let mut matches = 0;
    if h.len() >= n {
        for i in 0..=h.len() - n {
            let g = &h[i..i + n];
            // Count each distinct n-gram once, at its first position.
            if (0..i).any(|k| &h[k..k + n] == g) {
                continue;
            }
            matches += count(h, n, g).min(count(r, n, g));
        }
    }
    let th = if h.len() >= n { total(h) } else { 0 };
    let tr = if r.len() >= n { total(r) } else { 0 };
    (matches, th, tr)
}

/// Corpus BLEU-4 without smoothing.
pub fn bleu_oracle(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    let (mut hl, mut rl) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let h = tokenize_13a(h);
        let r = tokenize_13a(r);
        hl += h.len();
        rl += r.len();
        for n in 1..=4 {
            let (a, b, _) = ngram_overlap(&h, &r, n);
            m[n - 1] += a;
            t[n - 1] += b;
        }
    }
    if hl == 0 || m.contains(&0) {
        return 0.0;
    }
    let bp = if hl < rl {
        (1.0 - rl as f64 / hl as f64).exp()
    } else {
        1.0
    };
    let logp: f64 = (0..4).map(|i| (m[i] as f64 / t[i] as f64).ln()).sum();
    100.0 * bp * (logp / 4.0).exp()
}

/// Corpus chrF++ (character order 6, word order 2, beta 2).
pub fn chrf_oracle(hyps: &[&str], refs: &[&str]) -> f64 {
    let mut stats = vec![(0usize, 0usize, 0usize); 8];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.chars().filter(|c| !c.is_whitespace()).collect();
        let rc: Vec<char> = r.chars().filter(|c| !c.is_whitespace()).collect();
        for n in 1..=6 {
            let (a, b, c) = ngram_overlap(&hc, &rc, n);
            stats[n - 1].0 += a;
            stats[n - 1].1 += b;
            stats[n - 1].2 += c;
        }
        let hw = chrf_words(h);
        let rw = chrf_words(r);
        for n in 1..=2 {
            let (a, b, c) = ngram_overlap(&hw, &rw, n);
            stats[5 + n].0 += a;
            stats[5 + n].1 += b;
            stats[5 + n].2 += c;
        }
    }
    let mut f = Vec::new();
    for (m, h, r) in stats {
        if h == 0 && r == 0 {
            continue;
        }
        let p = if h == 0 { 0.0 } else { m as f64 / h as f64 };
        let rc = if r == 0 { 0.0 } else { m as f64 / r as f64 };
        f.push(if p + rc == 0.0 {
            0.0
        } else {
            5.0 * p * rc / (4.0 * p + rc)
        });
    }
    if f.is_empty() {
        0.0
    } else {
        100.0 * f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Fixture segments for metric oracles: (hypothesis, reference).
pub const METRIC_FIXTURE: [(&str, &str); 7] = [
    ("The cat sat on the mat.", "The cat is sitting on the mat."),
    ("It costs $3.50, or so they say.", "They say it costs $3.50."),
    ("pages 10-12 were missing", "pages 10 to 12 are missing"),
    ("Der Hund schläft.", "Der Hund schläft im Garten."),
    ("a b c d e f", "f e d c b a"),
    ("well-known (and loved) authors", "well-known authors, loved by all"),
    ("no overlap here at all", "völlig andere Wörter als hier"),
];

/// 1,000 outputs: 100 carry an explanation, 50 are in the wrong language,
/// and 10 are both. Returns the outputs and their language predictions.
pub fn planted_noise_corpus() -> (Vec<(String, String)>, ExternalPredictions) {
    let mut outputs = Vec::new();
    let mut preds = Vec::new();
    for i in 0..1000 {
        let id = format!("o{i}");
        let mut text = "Die Katze schläft im Garten.".to_string();
        if i < 100 {
            text.push_str("\n\nExplanation: the verb comes second.");
        }
        let lang = if (90..140).contains(&i) { "en" } else { "de" };
        preds.push((id.clone(), LangPrediction::new(lang, 0.95).unwrap()));
        outputs.push((id, text));
    }
    (outputs, ExternalPredictions::new(preds))
}

/// Deterministic pseudo-random text over a small multilingual word list.
pub fn random_text(seed: u64, words: usize) -> String {
    const WORDS: [&str; 16] = [
        "the",
        "cat",
        "Katze",
        "schläft",
        "jardin",
        "über",
        "naïve",
        "garden",
        "Bahnhof",
        "gare",
        "tea,",
        "thé",
        "quick!",
        "Привет",
        "猫",
        "?",
    ];
    let mut rng = mtdiag::rng::SplitMix64::new(seed);
    (0..words)
        .map(|_| WORDS[rng.below(WORDS.len() as u64) as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn counts_of(ids: &[u32]) -> HashMap<u32, usize> {
    let mut m = HashMap::new();
    for &i in ids {
        *m.entry(i).or_default() += 1;
    }
    m
}

/// The 22 evaluated language pairs.
pub const STUDY_LPS: [&str; 22] = [
    "ar-he", "ar-zh", "de-fr", "de-it", "fr-it", "ko-fr", "ko-zh", "ru-fr", "zh-fr", "zh-ru", "en-cs", "en-de",
    "en-pl", "en-ru", "en-ta", "en-zh", "cs-en", "de-en", "km-en", "ru-en", "ta-en", "zh-en",
];

/// Systems in the published score tables that are not LLMs with a
/// tokenizer of their own.
pub const NON_LLM_SYSTEMS: [&str; 1] = ["Google Translate"];

pub fn study_languages() -> Vec<String> {
    let mut langs: Vec<String> = STUDY_LPS
        .iter()
        .flat_map(|lp| lp.split('-').map(str::to_string))
        .collect();
    langs.sort();
    langs.dedup();
    langs
}

/// Model names of a long-format score fixture, in file order.
pub fn fixture_models(file: &str) -> Vec<String> {
    let text = std::fs::read_to_string(data_dir().join(file)).unwrap();
    let mut models: Vec<String> = Vec::new();
    for line in text.lines().skip(1) {
        let m = line.split(',').next().unwrap().to_string();
        if !models.contains(&m) {
            models.push(m);
        }
    }
    models
}

/// Writes a config with synthetic TAR records and distances covering the
/// published language pairs, scored by the given fixture tables. Scores of
/// systems without a tokenizer are dropped.
pub fn write_study_shaped_config(dir: &std::path::Path, models: &[String], score_files: &[(&str, &str)]) -> PathBuf {
    use std::fmt::Write as _;
    let langs = study_languages();
    let mut records = String::from("language,model,unique_count,vocab_size\n");
    let mut rng = mtdiag::rng::SplitMix64::new(7);
    for m in models {
        for l in &langs {
            let _ = writeln!(records, "{l},{m},{},151669", 1000 + rng.below(9000));
        }
    }
    std::fs::write(dir.join("tar_records.csv"), records).unwrap();

    let mut dist = String::from("lang1,lang2,genetic,geographic,syntactic,phonological,inventory,featural\n");
    for (i, a) in langs.iter().enumerate() {
        for b in &langs[i + 1..] {
            let v: Vec<String> = (0..6)
                .map(|_| format!("{:.4}", rng.below(10_000) as f64 / 10_000.0))
                .collect();
            let _ = writeln!(dist, "{a},{b},{}", v.join(","));
        }
    }
    std::fs::write(dir.join("distances.csv"), dist).unwrap();

    let mut cfg = String::from("tar_records = \"tar_records.csv\"\ndistances = \"distances.csv\"\n\n[scores]\n");
    for (metric, file) in score_files {
        let text = std::fs::read_to_string(data_dir().join(file)).unwrap();
        let kept: Vec<&str> = text
            .lines()
            .filter(|l| !NON_LLM_SYSTEMS.iter().any(|s| l.starts_with(&format!("{s},"))))
            .collect();
        std::fs::write(dir.join(file), kept.join("\n") + "\n").unwrap();
        let _ = writeln!(cfg, "{metric} = \"{file}\"");
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

/// Runs the binary; returns (success, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (bool, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_mtdiag"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Data lines of a report file: comments dropped, header kept first.
pub fn csv_lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// File name -> SHA-256 for every file in a directory.
pub fn dir_digests(dir: &std::path::Path) -> std::collections::BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, mtdiag::report::sha256_hex(&std::fs::read(&p).unwrap()))
        })
        .collect()
}
