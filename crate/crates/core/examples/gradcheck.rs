//! Central-difference gradient check of a small custom graph, followed by
//! the full suite over every operation and the joint loss.
//!
//! cargo run --example gradcheck

use rand::SeedableRng;
use wlcoref::diagnostics::{gradient_suite, GRADCHECK_EPS, GRADCHECK_TOLERANCE};
use wlcoref::numerics::{grad_check, ParamStore, Tensor};

fn main() -> wlcoref::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::uniform(&[3, 4], 1.0, &mut rng));
    let w = store.add("w", Tensor::uniform(&[4, 2], 1.0, &mut rng));
    // sum(sigmoid(x w))
    let report = grad_check(&mut store, &[x, w], GRADCHECK_EPS, |g, s| {
        let (x, w) = (g.param(s, x), g.param(s, w));
        let h = g.matmul(x, w);
        let h = g.sigmoid(h);
        g.sum(h)
    })?;
    println!(
        "custom graph: {} entries, max relative error {:.2e}, passes {}",
        report.checked,
        report.max_rel_error,
        report.passes(GRADCHECK_TOLERANCE)
    );
    print!("{}", gradient_suite(0)?);
    Ok(())
}
