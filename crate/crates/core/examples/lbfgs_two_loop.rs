//! L-BFGS memory on a quadratic: pairs that fail `yᵀs > β‖s‖²` are skipped,
//! and the newest stored pair satisfies the secant condition `H y = s`.
//!
//! Run with `cargo run --example lbfgs_two_loop`.

use fdsqn::lbfgs::{LbfgsMemory, DEFAULT_BETA};

fn main() -> fdsqn::Result<()> {
    let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
    let mul = |v: &[f64]| -> Vec<f64> { a.iter().map(|row| row.iter().zip(v).map(|(r, x)| r * x).sum()).collect() };

    let mut memory = LbfgsMemory::new(5);
    let steps = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, -0.2, 1.0]];
    for s in steps {
        let y = mul(&s);
        let kept = memory.try_update(&s, &y, DEFAULT_BETA)?;
        println!("s = {s:?}: kept = {kept}, gamma = {:.4}", memory.gamma());
    }
    // negative curvature: rejected, memory unchanged
    let kept = memory.try_update(&[1.0, 1.0, 0.0], &[-1.0, 0.0, 0.0], DEFAULT_BETA)?;
    println!("negative-curvature pair kept = {kept}, {} pairs stored", memory.len());

    let newest = steps[2];
    println!("H y = {:.6?} for s = {newest:?}", memory.apply_h(&mul(&newest)));

    let b = [1.0, -2.0, 0.5];
    println!("H b   = {:.6?}", memory.apply_h(&b));
    println!("H^2 b = {:.6?}", memory.apply_h_squared(&b));
    Ok(())
}
