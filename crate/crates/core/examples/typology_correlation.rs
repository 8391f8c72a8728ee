//! Correlating per-pair scores with summed TAR and typological distance.

use std::path::PathBuf;

use mtdiag::corpus::LanguagePair;
use mtdiag::metrics::{Metric, ScoreTable};
use mtdiag::stats::correlate_features;
use mtdiag::tar::TarRecord;
use mtdiag::typology::{pair_features, DistanceTable};
use mtdiag::LangCode;

fn main() -> mtdiag::Result<()> {
    let toy = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy");
    let scores = ScoreTable::load(toy.join("comet.csv"), Metric::Comet)?;
    let distances = DistanceTable::load(toy.join("distances.csv"))?;

    // Made-up activation counts for one model.
    let record = |l: &str, u| TarRecord::new(LangCode::new(l).unwrap(), "toy-think", u, 348);
    let records = [record("en", 140)?, record("de", 95)?, record("fr", 80)?];
    let find = |l: &LangCode| records.iter().find(|r| &r.language == l).unwrap();

    let pairs: Vec<LanguagePair> = scores.pairs();
    let features = pairs
        .iter()
        .map(|p| pair_features(p, &distances, find(&p.src), find(&p.tgt)))
        .collect::<mtdiag::Result<Vec<_>>>()?;
    print!("{}", mtdiag::typology::features_to_csv(&features));

    let row = correlate_features(&features, &scores, "toy-think", 0.05)?;
    println!("\ntoy-think, n={}", row.n);
    for (name, cell) in &row.cells {
        match cell {
            Ok(c) => println!(
                "  {name:<13} r={:+.4} p={:.3}{}",
                c.r,
                c.p_r,
                if c.significant_r { " *" } else { "" }
            ),
            Err(e) => println!("  {name:<13} NA ({e})"),
        }
    }
    Ok(())
}
