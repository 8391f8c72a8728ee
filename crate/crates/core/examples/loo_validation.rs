//! Leave-one-language-out correlation between training-data share and TAR.

use std::path::PathBuf;

use mtdiag::report::{load_loo_data, loo_table};
use mtdiag::stats::{leave_one_out, DEFAULT_ALPHA};

fn main() -> mtdiag::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/bloomz_share.csv");
    let sample = load_loo_data(&data)?;
    let loo = leave_one_out(&sample, DEFAULT_ALPHA)?;
    print!("{}", loo_table(&loo));

    let full = &loo.rows[0].result;
    println!(
        "\nfull sample: r={:.4} rho={:.4} tau={:.4} (n={})",
        full.r, full.rho, full.tau, full.n
    );
    Ok(())
}
