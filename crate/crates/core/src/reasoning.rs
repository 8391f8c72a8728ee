//! Reasoning segments in raw model outputs and their token counts.

use serde::{Deserialize, Serialize};

use crate::corpus::LanguagePair;
use crate::error::{Error, Result};
use crate::tokenize::VocabModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub open: String,
    pub close: String,
}

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningSplit {
    pub reasoning_text: String,
    pub answer_text: String,
    /// Set when the open delimiter has no matching close.
    pub unterminated: bool,
    /// Whether the open delimiter was found at all.
    pub delimited: bool,
}

/// Splits off the first delimited block. The answer is everything outside
/// it, text before the block included.
pub fn split_reasoning(raw: &str, delimiters: &Delimiters) -> ReasoningSplit {
    let Some(start) = raw.find(&delimiters.open) else {
        return ReasoningSplit {
            reasoning_text: String::new(),
            answer_text: raw.to_string(),
            unterminated: false,
            delimited: false,
        };
    };
    let before = &raw[..start];
    let body_start = start + delimiters.open.len();
    match raw[body_start..].find(&delimiters.close) {
        Some(rel) => {
            let end = body_start + rel;
            ReasoningSplit {
                reasoning_text: raw[body_start..end].to_string(),
                answer_text: format!("{before}{}", &raw[end + delimiters.close.len()..]),
                unterminated: false,
                delimited: true,
            }
        }
        None => {
            log::warn!("unterminated reasoning block (no {:?})", delimiters.close);
            ReasoningSplit {
                reasoning_text: raw[body_start..].to_string(),
                answer_text: before.to_string(),
                unterminated: true,
                delimited: true,
            }
        }
    }
}

/// Number of tokens the generating model's own tokenizer assigns to the
/// reasoning text.
pub fn count_reasoning_tokens(model: &VocabModel, split: &ReasoningSplit) -> Result<usize> {
    if split.reasoning_text.is_empty() {
        return Ok(0);
    }
    Ok(model.encode(&split.reasoning_text)?.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReasoningStats {
    pub pair: LanguagePair,
    pub model_name: String,
    pub counts: Vec<usize>,
    pub mean: f64,
}

pub fn aggregate_reasoning(pair: LanguagePair, model_name: &str, counts: Vec<usize>) -> Result<ReasoningStats> {
    if counts.is_empty() {
        return Err(Error::Invalid(format!(
            "no reasoning outputs for {model_name} on {pair}"
        )));
    }
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
    Ok(ReasoningStats {
        pair,
        model_name: model_name.to_string(),
        counts,
        mean,
    })
}

/// Splits and counts every output of one language pair.
pub fn reasoning_stats_for<S: AsRef<str>>(
    pair: LanguagePair,
    model: &VocabModel,
    raws: &[S],
    delimiters: &Delimiters,
) -> Result<(ReasoningStats, usize)> {
    let mut unterminated = 0;
    let counts = raws
        .iter()
        .map(|raw| {
            let split = split_reasoning(raw.as_ref(), delimiters);
            unterminated += split.unterminated as usize;
            count_reasoning_tokens(model, &split)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate_reasoning(pair, &model.model_name, counts)?, unterminated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::VocabOptions;

    #[test]
    fn canonical_split() {
        let d = Delimiters::default();
        let s = split_reasoning("<think>plan</think>Hallo", &d);
        assert_eq!((s.reasoning_text.as_str(), s.answer_text.as_str()), ("plan", "Hallo"));
        assert!(!s.unterminated);

        let s = split_reasoning("Hallo", &d);
        assert_eq!((s.reasoning_text.as_str(), s.answer_text.as_str()), ("", "Hallo"));

        let s = split_reasoning("<think>a", &d);
        assert_eq!((s.reasoning_text.as_str(), s.answer_text.as_str()), ("a", ""));
        assert!(s.unterminated);
    }

    #[test]
    fn only_first_block_is_reasoning() {
        let d = Delimiters::default();
        let s = split_reasoning("x<think>a</think>b<think>c</think>", &d);
        assert_eq!(s.reasoning_text, "a");
        assert_eq!(s.answer_text, "xb<think>c</think>");
    }

    #[test]
    fn custom_delimiters() {
        let d = Delimiters {
            open: "[R]".into(),
            close: "[/R]".into(),
        };
        let s = split_reasoning("[R]why[/R]answer", &d);
        assert_eq!(s.reasoning_text, "why");
    }

    #[test]
    fn token_counts() {
        let m = VocabModel::from_parts(
            "toy",
            [("a".to_string(), 0), ("b".to_string(), 1), ("ab".to_string(), 2)],
            vec![("a".into(), "b".into())],
            VocabOptions::default(),
        )
        .unwrap();
        let d = Delimiters::default();
        assert_eq!(count_reasoning_tokens(&m, &split_reasoning("Hallo", &d)).unwrap(), 0);
        let s = split_reasoning("<think>abab</think>ignored", &d);
        assert_eq!(count_reasoning_tokens(&m, &s).unwrap(), 2);
    }

    #[test]
    fn aggregation() {
        let p: LanguagePair = "en-de".parse().unwrap();
        assert_eq!(aggregate_reasoning(p.clone(), "m", vec![10, 20]).unwrap().mean, 15.0);
        assert_eq!(aggregate_reasoning(p.clone(), "m", vec![7]).unwrap().mean, 7.0);
        assert!(aggregate_reasoning(p, "m", vec![]).is_err());
    }
}
