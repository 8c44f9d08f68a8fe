//! Regenerates the synthetic toy cohort.
//!
//! Usage: `cargo run -p hrv-glucose --example make_fixture -- <dir> [seed]`

use hrv_glucose::synthetic::{write_synthetic_cohort, CohortSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().ok_or("usage: make_fixture <dir> [seed]")?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2024);
    let cohort = write_synthetic_cohort(&dir, &CohortSpec::default(), seed)?;
    println!("wrote {} subjects to {dir}", cohort.len());
    Ok(())
}
