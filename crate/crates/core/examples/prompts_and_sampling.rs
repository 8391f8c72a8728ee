//! Seeded test-set sampling and the three prompt templates.

use std::path::PathBuf;

use mtdiag::corpus::{render_prompt, Corpus, CorpusFormat, LanguageTable, PromptTemplate};

fn main() -> mtdiag::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy/en-de.jsonl");
    let corpus = Corpus::load(path, CorpusFormat::Jsonl, "en-de".parse()?)?;

    let test = corpus.sample(3, 20240601)?;
    let ids: Vec<&str> = test.instances.iter().map(|i| i.id.as_str()).collect();
    println!("sample(3, seed=20240601): {ids:?}");
    // Same seed, same sample.
    assert_eq!(test, corpus.sample(3, 20240601)?);

    let demos = corpus.sample_demonstrations(2, 7)?;
    let names = LanguageTable::builtin();
    let query = &test.instances[0].src_text;
    for template in [PromptTemplate::P0, PromptTemplate::P1, PromptTemplate::P2] {
        let shots = if template == PromptTemplate::P2 {
            &demos[..]
        } else {
            &[]
        };
        println!("\n--- {template:?} ---");
        println!("{}", render_prompt(template, &corpus.pair, query, shots, &names)?);
    }
    Ok(())
}
