//! B maps jump measures plus a mean to step functions; B* and p1 are exact
//! piecewise quadratics whose global maximum is found in closed form.
//!
//! cargo run --release --example control_operators

use bvwave::control::{apply_b, apply_b_star, compute_p1, compute_z};
use bvwave::experiments::{reference_control, reference_p1_maximum, PhiVariant, Psi, ALPHA, HORIZON};
use bvwave::time::TimeGrid;
use bvwave::wave::SpaceTimeField;

fn main() -> bvwave::Result<()> {
    let control = reference_control();
    let u = &apply_b(&control)[0];
    println!("B(reference measure):");
    for (a, b, v) in u.pieces() {
        println!("  ({a:.4}, {b:.4}): {v:+.3}");
    }
    println!("  mean {:+.1e}, total variation {}", u.mean(), u.total_variation());

    // A field whose spatial pairing with g is sin(pi t): B* and p1 in closed form.
    let grid = TimeGrid::new(HORIZON, 64)?;
    let q = SpaceTimeField::from_fn(grid, 1, |m, _| (std::f64::consts::PI * grid.node(m)).sin());
    let g_load = vec![1.0];
    let image = apply_b_star(&q, std::slice::from_ref(&g_load));
    println!("\n<B*(q), reference> = {:+.6e}, total {:+.3e}", image.pair(&control), image.totals[0]);
    let p1 = compute_p1(&q, &g_load);
    let max = p1.global_max_abs();
    println!("p1 = -int_t^T q: max |p1| = {:.6} at t = {:.6} (continuous: 2/pi at t = 1)", max.abs(), max.time);
    println!("sign changes of z = p1': {:?}", compute_z(&p1).roots());

    let psi = Psi::new(PhiVariant::Corrected, ALPHA);
    let (t, v) = reference_p1_maximum(&psi, HORIZON, 600_000);
    println!("\nreference adjoint functional: max |p1| / alpha = {:.9} at t = {t:.6}", v / ALPHA);
    for t in [1.0 / 3.0, 1.0, 5.0 / 3.0] {
        println!("  p1({t:.4}) / alpha = {:+.12}", psi.p1(t, HORIZON) / ALPHA);
    }
    Ok(())
}
