//! Token activation rates for the toy corpora, printed as a
//! language x model matrix.

use std::path::PathBuf;

use mtdiag::corpus::{Corpus, CorpusFormat, LangCode};
use mtdiag::tar::{pair_tar, tar_for_language, TarMatrix};
use mtdiag::tokenize::{PreSplit, VocabModel, VocabOptions};

fn toy() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy")
}

fn load_model(name: &str) -> mtdiag::Result<VocabModel> {
    let options = VocabOptions {
        byte_level: true,
        pre_split: PreSplit::Whitespace,
        specials: vec!["<|endoftext|>".into()],
        exclude_specials: true,
        ..VocabOptions::default()
    };
    VocabModel::load(name, toy().join("vocab.json"), Some(&toy().join("merges.txt")), options)
}

fn main() -> mtdiag::Result<()> {
    let en_de = Corpus::load(toy().join("en-de.jsonl"), CorpusFormat::Jsonl, "en-de".parse()?)?;
    let en_fr = Corpus::load(toy().join("en-fr.jsonl"), CorpusFormat::Jsonl, "en-fr".parse()?)?;
    let src = |c: &Corpus| c.instances.iter().map(|i| i.src_text.clone()).collect::<Vec<_>>();
    let tgt = |c: &Corpus| {
        c.instances
            .iter()
            .filter_map(|i| i.ref_text.clone())
            .collect::<Vec<_>>()
    };
    let sides = [("en", src(&en_de)), ("de", tgt(&en_de)), ("fr", tgt(&en_fr))];

    let mut records = Vec::new();
    // Two names over the same vocabulary; real runs load one file per model.
    for name in ["toy-a", "toy-b"] {
        let model = load_model(name)?;
        for (code, texts) in &sides {
            records.push(tar_for_language(&model, texts, LangCode::new(code)?)?);
        }
    }
    print!("{}", TarMatrix::from_records(&records)?.to_csv());

    let (en, de) = (&records[0], &records[1]);
    println!("\nen-de pair TAR for {}: {:.4}", en.model_name, pair_tar(en, de)?);
    println!("{} / {} = {}", en.unique_count, en.vocab_size, en.rate().percent(2));
    Ok(())
}
