//! Finite-difference checks of every differentiable operation and of the
//! full training objective.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::to_word_level;
use crate::encoder::pool_tokens;
use crate::error::Result;
use crate::model::{CorefModel, ModelConfig};
use crate::numerics::{grad_check, GradCheckReport, Graph, ParamId, ParamStore, Reduction, Tensor, Var};
use crate::synth::generate_document;
use crate::training::document_loss_with;

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.report.passes(GRADCHECK_TOLERANCE)
    }
}

/// Rows of a suite run, printable as a pass/fail table.
#[derive(Debug, Clone)]
pub struct GradCheckTable(pub Vec<GradCheckRow>);

impl GradCheckTable {
    pub fn all_passed(&self) -> bool {
        self.0.iter().all(GradCheckRow::passed)
    }
}

impl fmt::Display for GradCheckTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>8} {:>12}  result", "operation", "values", "max rel err")?;
        for row in &self.0 {
            writeln!(
                f,
                "{:<16} {:>8} {:>12.3e}  {}",
                row.name,
                row.report.checked,
                row.report.max_rel_error,
                if row.passed() { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

struct Case {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Case {
    fn new(seed: u64) -> Self {
        Case {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn param(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let t = Tensor::uniform(shape, 1.0, &mut self.rng);
        self.store.add(name, t)
    }

    fn weights(&mut self, shape: &[usize]) -> Tensor {
        Tensor::uniform(shape, 1.0, &mut self.rng)
    }

    fn check(mut self, name: &'static str, f: impl Fn(&mut Graph, &ParamStore) -> Var) -> Result<GradCheckRow> {
        let ids: Vec<ParamId> = self.store.ids().collect();
        let report = grad_check(&mut self.store, &ids, GRADCHECK_EPS, f)?;
        Ok(GradCheckRow { name, report })
    }
}

/// Reduces a matrix node to a scalar through fixed random weights so that
/// every output element contributes a distinct gradient.
fn project(g: &mut Graph, x: Var, w: &Tensor) -> Var {
    let w = g.constant(w.clone());
    let p = g.mul(x, w);
    g.sum(p)
}

/// Runs the whole suite; deterministic in `seed`.
pub fn gradient_suite(seed: u64) -> Result<GradCheckTable> {
    let mut rows = Vec::new();

    let mut c = Case::new(seed);
    let (a, b) = (c.param("a", &[3, 4]), c.param("b", &[4, 2]));
    let w = c.weights(&[3, 2]);
    rows.push(c.check("matmul", move |g, s| {
        let (a, b) = (g.param(s, a), g.param(s, b));
        let y = g.matmul(a, b);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 1);
    let a = c.param("a", &[3, 4]);
    let w = c.weights(&[4, 3]);
    rows.push(c.check("transpose", move |g, s| {
        let a = g.param(s, a);
        let y = g.transpose(a);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 2);
    let (a, b) = (c.param("a", &[3, 4]), c.param("b", &[3, 4]));
    let w = c.weights(&[3, 4]);
    rows.push(c.check("add", move |g, s| {
        let (a, b) = (g.param(s, a), g.param(s, b));
        let y = g.add(a, b);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 3);
    let (x, b) = (c.param("x", &[3, 4]), c.param("b", &[4]));
    let w = c.weights(&[3, 4]);
    rows.push(c.check("add_row", move |g, s| {
        let (x, b) = (g.param(s, x), g.param(s, b));
        let y = g.add_row(x, b);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 4);
    let (x, wt, b) = (c.param("x", &[3, 4]), c.param("w", &[4, 2]), c.param("b", &[2]));
    let w = c.weights(&[3, 2]);
    rows.push(c.check("affine", move |g, s| {
        let (x, wt, b) = (g.param(s, x), g.param(s, wt), g.param(s, b));
        let y = g.affine(x, wt, b);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 5);
    let (a, b) = (c.param("a", &[3, 4]), c.param("b", &[3, 4]));
    let w = c.weights(&[3, 4]);
    rows.push(c.check("mul", move |g, s| {
        let (a, b) = (g.param(s, a), g.param(s, b));
        let y = g.mul(a, b);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 6);
    let a = c.param("a", &[3, 4]);
    let w = c.weights(&[3, 4]);
    rows.push(c.check("scale", move |g, s| {
        let a = g.param(s, a);
        let y = g.scale(a, -1.7);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 7);
    let a = c.param("a", &[4, 5]);
    let w = c.weights(&[4, 5]);
    rows.push(c.check("relu", move |g, s| {
        let a = g.param(s, a);
        let y = g.relu(a);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 8);
    let a = c.param("a", &[4, 5]);
    let w = c.weights(&[4, 5]);
    rows.push(c.check("sigmoid", move |g, s| {
        let a = g.param(s, a);
        let y = g.sigmoid(a);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 9);
    let (a, b) = (c.param("a", &[3, 2]), c.param("b", &[3, 3]));
    let w = c.weights(&[3, 5]);
    rows.push(c.check("concat_cols", move |g, s| {
        let (a, b) = (g.param(s, a), g.param(s, b));
        let y = g.concat_cols(&[a, b]);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 10);
    let x = c.param("x", &[4, 3]);
    let w = c.weights(&[5, 3]);
    rows.push(c.check("gather_rows", move |g, s| {
        let x = g.param(s, x);
        let y = g.gather_rows(x, &[2, 0, 2, 3, 2]);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 11);
    let x = c.param("x", &[3, 3]);
    let w = c.weights(&[4, 1]);
    rows.push(c.check("gather_elems", move |g, s| {
        let x = g.param(s, x);
        let y = g.gather_elems(x, &[(1, 0), (2, 1), (2, 0), (1, 0)]);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 12);
    let x = c.param("x", &[1, 3]);
    let w = c.weights(&[4, 3]);
    rows.push(c.check("repeat_rows", move |g, s| {
        let x = g.param(s, x);
        let y = g.repeat_rows(x, 4);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 13);
    let x = c.param("x", &[3, 4]);
    let w = c.weights(&[3, 4]);
    let mask = [
        true, true, true, true, //
        false, true, true, false, //
        false, false, false, false,
    ];
    rows.push(c.check("softmax_rows", move |g, s| {
        let x = g.param(s, x);
        let y = g.softmax_rows(x, Some(&mask));
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 14);
    let (x, k, b) = (c.param("x", &[6, 3]), c.param("kernel", &[3, 3, 2]), c.param("bias", &[2]));
    let w = c.weights(&[6, 2]);
    rows.push(c.check("conv1d_k3", move |g, s| {
        let (x, k, b) = (g.param(s, x), g.param(s, k), g.param(s, b));
        let y = g.conv1d_k3(x, k, b, &[0..1, 1..4, 4..6]);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 15);
    let x = c.param("x", &[4, 5]);
    let w = c.weights(&[4, 5]);
    rows.push(c.check("dropout", move |g, s| {
        g.set_training(seed);
        let x = g.param(s, x);
        let y = g.dropout(x, 0.3);
        project(g, y, &w)
    })?);

    let mut c = Case::new(seed + 16);
    let x = c.param("x", &[3, 4]);
    rows.push(c.check("sum", move |g, s| {
        let x = g.param(s, x);
        g.sum(x)
    })?);

    let mut c = Case::new(seed + 17);
    let x = c.param("scores", &[6, 1]);
    rows.push(c.check("nlml", move |g, s| {
        let x = g.param(s, x);
        g.nlml(x, &[0..0, 0..1, 1..3, 3..6], &[false, true, false, true, false, true])
    })?);

    let mut c = Case::new(seed + 18);
    let x = c.param("scores", &[5, 1]);
    rows.push(c.check("bce_mean", move |g, s| {
        let x = g.param(s, x);
        g.bce_logits(x, &[1.0, 0.0, 0.0, 1.0, 0.0], Reduction::Mean)
    })?);

    let mut c = Case::new(seed + 19);
    let x = c.param("scores", &[5, 1]);
    rows.push(c.check("bce_sum", move |g, s| {
        let x = g.param(s, x);
        g.bce_logits(x, &[1.0, 0.0, 0.0, 1.0, 0.0], Reduction::Sum)
    })?);

    let mut c = Case::new(seed + 20);
    let x = c.param("logits", &[7, 2]);
    rows.push(c.check("segment_xent", move |g, s| {
        let x = g.param(s, x);
        g.segment_xent(x, &[0..4, 4..5, 5..7], &[vec![1, 3], vec![0, 0], vec![1, 0]])
    })?);

    let mut c = Case::new(seed + 21);
    let (x, wa) = (c.param("x", &[6, 4]), c.param("w_a", &[1, 4]));
    let w = c.weights(&[3, 4]);
    rows.push(c.check("pool_tokens", move |g, s| {
        let (x, wa) = (g.param(s, x), g.param(s, wa));
        let y = pool_tokens(g, x, &[(0, 0), (1, 3), (4, 5)], wa);
        project(g, y, &w)
    })?);

    rows.push(joint_loss_row(seed)?);
    Ok(GradCheckTable(rows))
}

/// Joint objective `L_nlml + α·L_bce + L_span` of a small toy-encoder
/// model on a 3-sentence document, checked against every parameter.
/// `k` exceeds the document length, so pruning is fixed under the
/// perturbations.
pub fn joint_loss_row(seed: u64) -> Result<GradCheckRow> {
    let doc = generate_document("toy", 3, &mut ChaCha8Rng::seed_from_u64(seed));
    let wl = to_word_level(&doc);
    let config = ModelConfig {
        dim: 6,
        vocab_buckets: 64,
        feature_dim: 3,
        coref_hidden: vec![5],
        span_hidden: 4,
        k: doc.num_words() + 1,
        seed,
        ..ModelConfig::default()
    };
    let mut model = CorefModel::toy(config)?;
    let mut store = std::mem::take(&mut model.store);
    let ids: Vec<ParamId> = store.ids().collect();
    let report = grad_check(&mut store, &ids, GRADCHECK_EPS, |g, s| {
        document_loss_with(&model, s, g, &doc, &wl, 0.5, Reduction::Mean)
            .expect("toy document is valid")
            .0
    })?;
    Ok(GradCheckRow {
        name: "joint_loss",
        report,
    })
}
