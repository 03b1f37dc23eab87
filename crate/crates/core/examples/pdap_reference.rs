//! One PDAP run on the manufactured reference problem (jumps +1, -1, +1 at
//! 1/3, 1, 5/3, zero mean), with the iteration history and KKT certificate.
//!
//! cargo run --release --example pdap_reference -- [level] [reference level]

use bvwave::experiments::{control_errors, PhiVariant, ReferenceContext, MATCH_RADIUS};
use bvwave::pdap::{run_pdap, PdapConfig};
use bvwave::wave::SchemeParams;

fn main() -> bvwave::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u32>().expect("level"));
    let k = args.next().unwrap_or(5);
    let k_ref = args.next().unwrap_or(7);
    let params = SchemeParams::crank_nicolson();
    let reference = ReferenceContext::build(PhiVariant::Corrected, k_ref, params, false)?;
    let problem = reference.problem(k, params)?;
    let result = run_pdap(&problem, &PdapConfig::default())?;

    println!("level {k} against reference level {k_ref}");
    println!("{:>4} {:>18} {:>12} {:>12} active", "iter", "cost", "kkt", "gap");
    for r in &result.history.records {
        println!("{:>4} {:>18.12} {:>12.3e} {:>12.3e} {:?}", r.iter, r.cost, r.kkt_violation, r.gap, r.active);
    }
    println!("converged: {}", result.converged);
    for a in result.control.atoms(0) {
        println!("  jump {:+.6} at t = {:.8}", a.weight, a.time);
    }
    println!("  offset {:+.3e}", result.control.offsets()[0]);
    let cert = &result.certificate;
    println!("||p1||/alpha = {:.9}, |p1(0)|/alpha = {:.2e}, signs aligned: {}", cert.max_ratio[0], cert.origin_ratio[0], cert.signs_aligned);
    let err = control_errors(&reference.solution.control, &result.control, MATCH_RADIUS);
    println!(
        "control L1 error {:.4e}, worst jump position {:.2e}, worst amplitude {:.3}, one atom per jump: {}",
        err.l1,
        err.position_max(),
        err.amplitude_max(),
        err.count_ok
    );
    Ok(())
}
