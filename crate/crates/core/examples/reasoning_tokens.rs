//! Splitting raw reasoning outputs and counting thinking tokens per pair.

use std::path::PathBuf;

use mtdiag::reasoning::{reasoning_stats_for, split_reasoning, Delimiters};
use mtdiag::report::load_outputs;
use mtdiag::stats::{ols_fit, PairedSample};
use mtdiag::tokenize::{PreSplit, VocabModel, VocabOptions};

fn main() -> mtdiag::Result<()> {
    let toy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy");
    let options = VocabOptions {
        byte_level: true,
        pre_split: PreSplit::Whitespace,
        specials: vec!["<|endoftext|>".into()],
        exclude_specials: true,
        ..VocabOptions::default()
    };
    let model = VocabModel::load(
        "toy-think",
        toy.join("vocab.json"),
        Some(&toy.join("merges.txt")),
        options,
    )?;
    let delims = Delimiters::default();

    let s = split_reasoning("<think>check the verb</think>Die Katze schläft.", &delims);
    println!("reasoning={:?} answer={:?}\n", s.reasoning_text, s.answer_text);

    let mut means = Vec::new();
    for lp in ["en-de", "en-fr", "de-en", "fr-en", "de-fr", "fr-de"] {
        let raws: Vec<String> = load_outputs(&toy.join(format!("reasoning/{lp}.jsonl")))?
            .into_iter()
            .map(|(_, raw)| raw)
            .collect();
        let (stats, unterminated) = reasoning_stats_for(lp.parse()?, &model, &raws, &delims)?;
        println!(
            "{lp}: mean {:>7.2} tokens over {} outputs ({unterminated} unterminated)",
            stats.mean,
            stats.counts.len()
        );
        means.push(stats.mean);
    }

    // Mean tokens against a stand-in quality delta, one point per pair.
    let deltas = vec![0.012, 0.020, -0.004, 0.003, 0.031, 0.025];
    let fit = ols_fit(&PairedSample::from_xy(means, deltas)?)?;
    println!(
        "\ndelta ~ {:.5} * tokens + {:.4}  (R^2 = {:.3})",
        fit.slope, fit.intercept, fit.r_squared
    );
    Ok(())
}
