//! Explanatory-text and wrong-language rates for the toy outputs.

use std::path::PathBuf;

use mtdiag::noise::{
    clean_rate, ExternalPredictions, NoiseOptions, NoisePatternSet, Output, TrigramIdentifier, TrigramProfile,
};
use mtdiag::report::load_outputs;

fn main() -> mtdiag::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy/noise");
    let patterns = NoisePatternSet::builtin();
    println!("{:<14} {:>7} {:>7} {:>7}", "run", "clean", "expl", "wrongl");
    for run in ["instruct-p0", "instruct-p2", "think-p2"] {
        let outputs = load_outputs(&dir.join(format!("{run}.jsonl")))?;
        let view: Vec<Output<'_>> = outputs.iter().map(|(i, t)| (i.as_str(), t.as_str())).collect();
        let ids = ExternalPredictions::load(dir.join(format!("{run}.pred.jsonl")))?;
        let r = clean_rate(&view, "de", &patterns, &ids, NoiseOptions::default())?;
        println!(
            "{run:<14} {:>6.2}% {:>6.2}% {:>6.2}%",
            100.0 * r.clean_rate(),
            100.0 * r.expl_rate(),
            100.0 * r.wrongl_rate()
        );
    }

    // Without external predictions, a small trigram identifier works too.
    let profiles = [
        (
            "de",
            vec![
                "Die Katze schläft im Garten.",
                "Das Wetter ist heute schön.",
                "Wir gehen morgen auf den Markt.",
            ],
        ),
        (
            "en",
            vec![
                "The cat sleeps in the garden.",
                "The weather is nice today.",
                "We are going to the market.",
            ],
        ),
    ]
    .into_iter()
    .map(|(l, t)| Ok((l.to_string(), TrigramProfile::train(&t)?)))
    .collect::<mtdiag::Result<_>>()?;
    let ident = TrigramIdentifier::new(profiles)?;
    for text in ["Der Garten ist schön.", "The garden is nice."] {
        let p = ident.predict(text);
        println!("{text:<24} -> {} ({:.2})", p.language, p.confidence);
    }
    Ok(())
}
