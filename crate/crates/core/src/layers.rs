use rand::Rng;

use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

/// Glorot-uniform initialized weight matrix.
pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], scale, rng)
}

/// Fully connected layers with rectifier activations between them.
/// The last layer is linear unless `relu_output` is set.
#[derive(Debug, Clone)]
pub struct Ffnn {
    layers: Vec<(ParamId, ParamId)>,
    relu_output: bool,
}

impl Ffnn {
    /// `widths` lists input width followed by every layer's output width.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        relu_output: bool,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let weight = store.add(format!("{prefix}.{i}.weight"), glorot(w[0], w[1], rng));
                let bias = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[w[1]]));
                (weight, bias)
            })
            .collect();
        Ffnn {
            layers,
            relu_output,
        }
    }

    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().unwrap()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, dropout: f64) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            h = g.affine(h, wv, bv);
            if i < last || self.relu_output {
                h = g.relu(h);
                h = g.dropout(h, dropout);
            }
        }
        h
    }
}
