mod common;

use std::collections::HashSet;
use std::fs;

use mtdiag::corpus::{render_prompt, Corpus, CorpusFormat, Instance, LanguagePair, LanguageTable, PromptTemplate};
use mtdiag::Error;
use proptest::prelude::*;

fn corpus(n: usize) -> Corpus {
    let instances = (0..n)
        .map(|i| Instance::new(format!("s{i}"), format!("sentence {i}")).with_ref(format!("Satz {i}")))
        .collect();
    Corpus::new("en-de".parse().unwrap(), instances, "synthetic").unwrap()
}

#[test]
fn sampling_is_uniform_over_seeds() {
    // Each of 20 items should land in a 5-sample with probability 1/4.
    let c = corpus(20);
    let seeds = 10_000;
    let mut hits = [0u32; 20];
    for seed in 0..seeds {
        for inst in c.sample(5, seed).unwrap().instances {
            hits[inst.id[1..].parse::<usize>().unwrap()] += 1;
        }
    }
    let p = 0.25;
    let mean = seeds as f64 * p;
    let sd = (seeds as f64 * p * (1.0 - p)).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        assert!(
            (h as f64 - mean).abs() <= 3.0 * sd,
            "item {i}: {h} hits, expected {mean} +- {}",
            3.0 * sd
        );
    }
}

#[test]
fn first_position_is_uniform() {
    let c = corpus(10);
    let mut first = [0u32; 10];
    for seed in 0..10_000u64 {
        let s = c.sample(3, seed).unwrap();
        first[s.instances[0].id[1..].parse::<usize>().unwrap()] += 1;
    }
    let sd = (10_000.0f64 * 0.1 * 0.9).sqrt();
    assert!(
        first.iter().all(|&h| (h as f64 - 1000.0).abs() <= 3.0 * sd),
        "{first:?}"
    );
}

#[test]
fn demonstration_overlap_is_hypergeometric() {
    // Two independent 5-draws from a pool of 30 share 5 * 5 / 30 items on average.
    let pool = corpus(30);
    let trials = 4000u64;
    let mut shared = 0usize;
    for t in 0..trials {
        let a: HashSet<String> = pool
            .sample_demonstrations(5, 2 * t)
            .unwrap()
            .into_iter()
            .map(|i| i.id)
            .collect();
        let b = pool.sample_demonstrations(5, 2 * t + 1).unwrap();
        shared += b.iter().filter(|i| a.contains(&i.id)).count();
    }
    let mean = shared as f64 / trials as f64;
    let expected = 25.0 / 30.0;
    // Hypergeometric variance: k K/N (N-K)/N (N-k)/(N-1).
    let var = 5.0 * (5.0 / 30.0) * (25.0 / 30.0) * (25.0 / 29.0);
    let se = (var / trials as f64).sqrt();
    assert!(
        (mean - expected).abs() <= 3.0 * se,
        "mean overlap {mean}, expected {expected}"
    );
}

#[test]
fn sample_edge_cases() {
    let c = corpus(5);
    assert_eq!(c.sample(5, 1).unwrap().len(), 5);
    assert!(c.sample(0, 1).unwrap().is_empty());
    assert!(matches!(
        c.sample(6, 1),
        Err(Error::SampleTooLarge {
            requested: 6,
            available: 5
        })
    ));
    assert_eq!(c.sample(3, 42).unwrap(), c.sample(3, 42).unwrap());
}

#[test]
fn fixture_corpora_load() {
    let dir = common::toy_dir();
    let c = Corpus::load(dir.join("en-de.jsonl"), CorpusFormat::Jsonl, "en-de".parse().unwrap()).unwrap();
    assert_eq!(c.len(), 8);
    assert!(c.instances.iter().all(|i| i.ref_text.is_some()));
}

#[test]
fn tsv_and_jsonl_agree() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("c.tsv");
    fs::write(
        &tsv,
        "id\tsrc\tref\na\tHello world\tHallo Welt\nb\tGood night\tGute Nacht\n",
    )
    .unwrap();
    let pair: LanguagePair = "en-de".parse().unwrap();
    let from_tsv = Corpus::load(&tsv, CorpusFormat::Tsv, pair.clone()).unwrap();
    let jsonl = dir.path().join("c.jsonl");
    from_tsv.write_jsonl(&jsonl).unwrap();
    let from_jsonl = Corpus::load(&jsonl, CorpusFormat::Jsonl, pair).unwrap();
    assert_eq!(from_tsv.instances, from_jsonl.instances);
}

#[test]
fn malformed_records_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(
        &p,
        "{\"id\":\"1\",\"src\":\"ok\"}\n{\"id\":\"2\"}\nnot json\n{\"id\":\"1\",\"src\":\"dup\"}\n",
    )
    .unwrap();
    match Corpus::load(&p, CorpusFormat::Jsonl, "en-de".parse().unwrap()) {
        Err(Error::Records { errors, .. }) => {
            let lines: Vec<usize> = errors.iter().map(|e| e.line).collect();
            assert_eq!(lines, [2, 3, 4]);
        }
        other => panic!("expected record errors, got {other:?}"),
    }
}

fn text_strategy() -> impl Strategy<Value = String> {
    "[A-Za-z0-9äöüßéè ,.!?\"\\\\\t]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_round_trip_is_byte_identical(
        rows in prop::collection::vec((text_strategy(), prop::option::of(text_strategy())), 1..12)
    ) {
        let instances = rows
            .into_iter()
            .enumerate()
            .map(|(i, (src, r))| {
                let inst = Instance::new(format!("id{i}"), src);
                match r {
                    Some(r) => inst.with_ref(r),
                    None => inst,
                }
            })
            .collect();
        let c = Corpus::new("fr-de".parse().unwrap(), instances, "gen").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        c.write_jsonl(&p).unwrap();
        let first = fs::read(&p).unwrap();
        let loaded = Corpus::load(&p, CorpusFormat::Jsonl, c.pair.clone()).unwrap();
        prop_assert_eq!(&loaded.instances, &c.instances);
        let q = dir.path().join("d.jsonl");
        loaded.write_jsonl(&q).unwrap();
        prop_assert_eq!(first, fs::read(&q).unwrap());
    }

    #[test]
    fn sample_is_a_duplicate_free_subset(n in 0usize..40, k in 0usize..40, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let c = corpus(n);
        let s = c.sample(k, seed).unwrap();
        prop_assert_eq!(s.len(), k);
        let ids: HashSet<&str> = s.instances.iter().map(|i| i.id.as_str()).collect();
        prop_assert_eq!(ids.len(), k);
        prop_assert!(s.instances.iter().all(|i| c.instances.contains(i)));
    }

    #[test]
    fn prompt_contains_query_once(
        query in "[a-z]{12}",
        demos in prop::collection::vec("[A-Z]{12}", 0..5),
        template in prop::sample::select(vec![PromptTemplate::P0, PromptTemplate::P1, PromptTemplate::P2]),
    ) {
        let demos: Vec<Instance> = demos
            .iter()
            .enumerate()
            .map(|(i, d)| Instance::new(i.to_string(), d.clone()).with_ref(format!("ref{i}")))
            .collect();
        let pair: LanguagePair = "en-ta".parse().unwrap();
        let out = render_prompt(template, &pair, &query, &demos, &LanguageTable::builtin()).unwrap();
        prop_assert_eq!(out.matches(query.as_str()).count(), 1);
        for d in &demos {
            prop_assert_eq!(out.matches(d.src_text.as_str()).count(), 1);
        }
        let per_instance = if template == PromptTemplate::P0 { 2 } else { 1 };
        prop_assert_eq!(out.lines().count(), (demos.len() + 1) * per_instance);
    }
}
