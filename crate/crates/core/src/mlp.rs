//! The scoring head: a small MLP over the pooled comparison features.
//!
//! Hidden layers use the smooth Gaussian-error nonlinearity with dropout
//! during training; the final layer is linear so the score is unbounded.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, gelu, gelu_prime, Mat};
use crate::scalar::Real;

/// Layer weights stored as out×in matrices plus bias vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<F> {
    pub weights: Vec<Mat<F>>,
    pub biases: Vec<Vec<F>>,
    pub dropout: f64,
}

impl<F: Real> MlpParams<F> {
    pub fn zeros(sizes: &[usize], dropout: f64) -> Self {
        assert!(sizes.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            weights.push(Mat::zeros(w[1], w[0]));
            biases.push(vec![F::zero(); w[1]]);
        }
        MlpParams { weights, biases, dropout }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone)]
pub struct MlpTrace<F> {
    /// Pre-activation per hidden layer.
    pub pre: Vec<Vec<F>>,
    /// Post-activation (after dropout when training) per hidden layer.
    pub post: Vec<Vec<F>>,
    /// Dropout keep-masks per hidden layer; `None` in inference mode.
    pub masks: Option<Vec<Vec<bool>>>,
}

pub fn mlp_forward<F: Real>(
    input: &[F],
    params: &MlpParams<F>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> (F, MlpTrace<F>) {
    assert_eq!(input.len(), params.input_dim(), "MLP input width");
    let n_layers = params.layer_count();
    let keep = 1.0 - params.dropout;
    let inv_keep = F::c(1.0 / keep);

    let mut trace = MlpTrace {
        pre: Vec::with_capacity(n_layers - 1),
        post: Vec::with_capacity(n_layers - 1),
        masks: dropout_rng.as_ref().map(|_| Vec::with_capacity(n_layers - 1)),
    };

    let mut h: Vec<F> = input.to_vec();
    for l in 0..n_layers - 1 {
        let w = &params.weights[l];
        let b = &params.biases[l];
        let mut pre = vec![F::zero(); w.rows()];
        for (j, p) in pre.iter_mut().enumerate() {
            *p = dot(w.row(j), &h) + b[j];
        }
        let mut post: Vec<F> = pre.iter().map(|&z| gelu(z)).collect();
        if let Some(rng) = dropout_rng.as_deref_mut() {
            let mask: Vec<bool> = post.iter().map(|_| rng.gen::<f64>() < keep).collect();
            for (p, &m) in post.iter_mut().zip(&mask) {
                *p = if m { *p * inv_keep } else { F::zero() };
            }
            trace.masks.as_mut().unwrap().push(mask);
        }
        trace.pre.push(pre);
        trace.post.push(post.clone());
        h = post;
    }

    let w = &params.weights[n_layers - 1];
    let b = &params.biases[n_layers - 1];
    debug_assert_eq!(w.rows(), 1, "final layer is scalar");
    let score = dot(w.row(0), &h) + b[0];
    (score, trace)
}

/// Backward through the MLP; returns the gradient w.r.t. the input vector and
/// accumulates parameter gradients.
pub fn mlp_backward<F: Real>(
    input: &[F],
    params: &MlpParams<F>,
    trace: &MlpTrace<F>,
    d_score: F,
    grads: &mut MlpParams<F>,
) -> Vec<F> {
    let n_layers = params.layer_count();
    let inv_keep = F::c(1.0 / (1.0 - params.dropout));

    // final linear layer
    let last_h: &[F] = if n_layers == 1 { input } else { &trace.post[n_layers - 2] };
    for (g, &h) in grads.weights[n_layers - 1].row_mut(0).iter_mut().zip(last_h) {
        *g += d_score * h;
    }
    grads.biases[n_layers - 1][0] += d_score;
    let mut d_h: Vec<F> = params.weights[n_layers - 1]
        .row(0)
        .iter()
        .map(|&w| w * d_score)
        .collect();

    for l in (0..n_layers - 1).rev() {
        // through dropout then activation
        let mut d_pre = vec![F::zero(); d_h.len()];
        for (j, dp) in d_pre.iter_mut().enumerate() {
            let mut d = d_h[j];
            if let Some(masks) = &trace.masks {
                d = if masks[l][j] { d * inv_keep } else { F::zero() };
            }
            *dp = d * gelu_prime(trace.pre[l][j]);
        }
        let h_in: &[F] = if l == 0 { input } else { &trace.post[l - 1] };
        for (j, &dp) in d_pre.iter().enumerate() {
            crate::linalg::axpy(dp, h_in, grads.weights[l].row_mut(j));
            grads.biases[l][j] += dp;
        }
        let mut d_next = vec![F::zero(); h_in.len()];
        for (j, &dp) in d_pre.iter().enumerate() {
            crate::linalg::axpy(dp, params.weights[l].row(j), &mut d_next);
        }
        d_h = d_next;
    }
    d_h
}
