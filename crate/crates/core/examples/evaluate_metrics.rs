//! MUC, B3 and CEAF_phi4 on a small key/response pair, scored separately
//! and micro-averaged over two documents.
//!
//! cargo run --example evaluate_metrics

use wlcoref::metrics::{ClusterSet, Evaluation};

fn main() -> wlcoref::Result<()> {
    let key = ClusterSet::new(vec![vec!["a", "b", "c"], vec!["d", "e"]])?;
    let response = ClusterSet::new(vec![vec!["a", "b"], vec!["c", "d", "e"]])?;
    let first = Evaluation::of(&key, &response);
    println!("document 1\n{first}\n");

    let key2 = ClusterSet::new(vec![vec!["x", "y"]])?;
    let response2 = ClusterSet::new(vec![vec!["x", "y"]])?;
    let mut total = first;
    total.add(&key2, &response2);
    println!("both documents\n{total}");
    Ok(())
}
