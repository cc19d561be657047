//! The independent verification suite: tiny-instance enumeration, the
//! zero-predictor variance law and finite-difference gradient checks.
//!
//!     cargo run --release --example oracle

use adsac::harness::oracle::{enumerate_tiny, run_oracle_checks, OracleOptions};

fn main() {
    let tiny = enumerate_tiny();
    println!("actions    simulator  enumerated");
    for (seq, sim, replay) in &tiny.rows {
        println!("{seq:?}  {sim:>9.4}  {replay:>10.4}");
    }
    println!("optimum {:?} = {:.4}; prophet {:?} = {:.4}", tiny.optimum.0, tiny.optimum.1, tiny.prophet.0, tiny.prophet.1);

    let results = run_oracle_checks(&OracleOptions::default());
    for r in &results {
        println!("{r}");
    }
    if results.iter().any(|r| !r.passed) {
        std::process::exit(1);
    }
}
