//! Corpus BLEU and chrF++ on a handful of segments.

use mtdiag::metrics::{bleu, bleu_stats, chrf, BleuConfig, ChrfConfig, Smoothing};

fn main() -> mtdiag::Result<()> {
    let refs = [
        "The cat sleeps in the garden.",
        "The weather is nice today.",
        "We are going to the market tomorrow morning.",
    ];
    let hyps = [
        "The cat is sleeping in the garden.",
        "Today the weather is nice.",
        "Tomorrow morning we go to the market.",
    ];

    let plain = BleuConfig::default();
    let stats = bleu_stats(&hyps, &refs, &plain)?;
    println!("BLEU       {:.2}", stats.score(&plain));
    println!("  hyp_len {} ref_len {}", stats.hyp_len, stats.ref_len);
    let smoothed = BleuConfig {
        smoothing: Smoothing::Exp,
        ..BleuConfig::default()
    };
    println!("BLEU (exp) {:.2}", bleu(&hyps, &refs, &smoothed)?);
    println!("chrF++     {:.2}", chrf(&hyps, &refs, &ChrfConfig::default())?);

    println!(
        "identity   {:.2} / {:.2}",
        bleu(&refs, &refs, &plain)?,
        chrf(&refs, &refs, &ChrfConfig::default())?
    );
    Ok(())
}
