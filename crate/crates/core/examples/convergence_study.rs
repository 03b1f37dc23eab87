//! Simultaneous space-time refinement against a fine reference: the rate
//! table written by `bvwave convergence`, with pairwise and fitted rates.
//!
//! cargo run --release --example convergence_study -- [first] [last] [reference]
//!
//! Defaults to levels 3..6 against level 7. Levels 5..7 against 8 need about
//! 4 GB of memory and a few minutes.

use bvwave::experiments::{convergence_study, PhiVariant};
use bvwave::pdap::PdapConfig;
use bvwave::wave::SchemeParams;

fn main() -> bvwave::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).map(|a| a.parse().expect("level")).collect();
    let (lo, hi, k_ref) = match args[..] {
        [lo, hi, k_ref] => (lo, hi, k_ref),
        _ => (3, 6, 7),
    };
    let levels: Vec<u32> = (lo..=hi).collect();
    let study = convergence_study(&levels, k_ref, PhiVariant::Corrected, SchemeParams::crank_nicolson(), &PdapConfig::default())?;
    let table = &study.table;
    print!("{}", table.to_csv());
    println!("reference error (Richardson) {:.3e}", table.richardson_error.unwrap_or(f64::NAN));
    let names = table.rows[0].errors().map(|e| e.0);
    for (col, name) in names.iter().enumerate() {
        let pairs: Vec<String> = table.pair_rates(col).iter().map(|r| format!("{r:.2}")).collect();
        println!("{name:>13}: fitted {:.3}, pairwise [{}]", table.fitted_rate(col), pairs.join(", "));
    }
    for (k, run) in levels.iter().zip(&study.runs) {
        match run {
            Ok(run) => println!("k={k}: {} atoms, one per jump: {}", run.row.n_atoms, run.row.count_ok),
            Err(e) => println!("k={k}: failed: {e}"),
        }
    }
    Ok(())
}
