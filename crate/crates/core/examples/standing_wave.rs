//! Solver convergence on the analytic standing wave y = cos(pi t / sqrt 2) g
//! with simultaneous refinement tau = 2^-k, h = 2 sqrt(2) 2^-k.
//!
//! cargo run --release --example standing_wave -- [sigma]

use bvwave::cli::standing_wave_error;
use bvwave::wave::SchemeParams;

fn main() -> bvwave::Result<()> {
    let sigma: f64 = std::env::args().nth(1).map_or(0.25, |s| s.parse().expect("sigma"));
    let params = SchemeParams::new(sigma);
    println!("sigma = {sigma}");
    println!("{:>2} {:>12} {:>6}", "k", "C(L2) error", "rate");
    let mut previous: Option<f64> = None;
    for k in 3..=7 {
        let err = match standing_wave_error(k, params) {
            Ok(e) => e,
            Err(e) => {
                println!("{k:>2} {e}");
                continue;
            }
        };
        let rate = previous.map_or(String::new(), |p| format!("{:.3}", (p / err).log2()));
        println!("{k:>2} {err:>12.4e} {rate:>6}");
        previous = Some(err);
    }
    Ok(())
}
