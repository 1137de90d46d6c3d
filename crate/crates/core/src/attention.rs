//! Bidirectional multi-head cross-attention between utterance sequences.
//!
//! Per head: `softmax(Q Wq (K Wk)ᵀ / sqrt(head_dim)) · K Wv`, heads
//! concatenated and passed through an output projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::scalar::Real;

/// One cross-attention block. `wq/wk/wv[h]` are latent×head_dim; `wo` maps the
/// concatenated heads back to the latent width (applied as `row · wo`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<F> {
    pub wq: Vec<Mat<F>>,
    pub wk: Vec<Mat<F>>,
    pub wv: Vec<Mat<F>>,
    pub wo: Mat<F>,
    pub bo: Vec<F>,
}

impl<F: Real> AttentionParams<F> {
    pub fn zeros(latent: usize, heads: usize) -> Self {
        assert!(heads > 0 && latent % heads == 0, "heads must divide the latent width");
        let head_dim = latent / heads;
        AttentionParams {
            wq: (0..heads).map(|_| Mat::zeros(latent, head_dim)).collect(),
            wk: (0..heads).map(|_| Mat::zeros(latent, head_dim)).collect(),
            wv: (0..heads).map(|_| Mat::zeros(latent, head_dim)).collect(),
            wo: Mat::zeros(latent, latent),
            bo: vec![F::zero(); latent],
        }
    }

    pub fn heads(&self) -> usize {
        self.wq.len()
    }

    pub fn head_dim(&self) -> usize {
        self.wq[0].cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.wq[0].rows()
    }
}

/// Intermediates kept for the backward pass; `weights[h]` exposes the softmax
/// rows for inspection.
#[derive(Debug, Clone)]
pub struct AttnTrace<F> {
    pub q: Vec<Mat<F>>,
    pub k: Vec<Mat<F>>,
    pub v: Vec<Mat<F>>,
    pub weights: Vec<Mat<F>>,
    pub concat: Mat<F>,
}

impl<F: Real> AttnTrace<F> {
    /// Softmax attention weights of one head (rows sum to 1).
    pub fn head_weights(&self, head: usize) -> &Mat<F> {
        &self.weights[head]
    }
}

/// Forward pass returning the context sequence (same length as `queries`).
pub fn cross_attention<F: Real>(
    queries: &Mat<F>,
    keys_values: &Mat<F>,
    params: &AttentionParams<F>,
) -> Result<Mat<F>> {
    cross_attention_traced(queries, keys_values, params).map(|(out, _)| out)
}

pub fn cross_attention_traced<F: Real>(
    queries: &Mat<F>,
    keys_values: &Mat<F>,
    params: &AttentionParams<F>,
) -> Result<(Mat<F>, AttnTrace<F>)> {
    if queries.rows() == 0 || keys_values.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    let latent = params.latent_dim();
    if queries.cols() != latent || keys_values.cols() != latent {
        return Err(Error::DimensionMismatch { expected: latent, got: queries.cols() });
    }
    let heads = params.heads();
    let head_dim = params.head_dim();
    let scale = F::one() / F::c(head_dim as f64).sqrt();

    let n_q = queries.rows();
    let mut concat = Mat::zeros(n_q, latent);
    let mut trace = AttnTrace {
        q: Vec::with_capacity(heads),
        k: Vec::with_capacity(heads),
        v: Vec::with_capacity(heads),
        weights: Vec::with_capacity(heads),
        concat: Mat::zeros(0, 0),
    };

    for h in 0..heads {
        let q = queries.matmul(&params.wq[h]);
        let k = keys_values.matmul(&params.wk[h]);
        let v = keys_values.matmul(&params.wv[h]);
        let mut logits = q.matmul_transb(&k);
        logits.scale(scale);
        if !logits.is_finite() {
            return Err(Error::NonFiniteLogit);
        }
        let weights = softmax_rows(&logits);
        let ctx = weights.matmul(&v);
        for r in 0..n_q {
            let dst = &mut concat.row_mut(r)[h * head_dim..(h + 1) * head_dim];
            dst.copy_from_slice(ctx.row(r));
        }
        trace.q.push(q);
        trace.k.push(k);
        trace.v.push(v);
        trace.weights.push(weights);
    }

    let mut out = concat.matmul(&params.wo);
    for r in 0..n_q {
        for (o, &b) in out.row_mut(r).iter_mut().zip(&params.bo) {
            *o += b;
        }
    }
    trace.concat = concat;
    Ok((out, trace))
}

fn softmax_rows<F: Real>(logits: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let dst = out.row_mut(r);
        let mut sum = F::zero();
        for (d, &l) in dst.iter_mut().zip(row) {
            *d = (l - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d = *d / sum;
        }
    }
    out
}

/// Backward pass. Accumulates into `d_queries`, `d_keys_values` and `grads`.
pub fn attention_backward<F: Real>(
    queries: &Mat<F>,
    keys_values: &Mat<F>,
    params: &AttentionParams<F>,
    trace: &AttnTrace<F>,
    d_out: &Mat<F>,
    d_queries: &mut Mat<F>,
    d_keys_values: &mut Mat<F>,
    grads: &mut AttentionParams<F>,
) {
    let heads = params.heads();
    let head_dim = params.head_dim();
    let scale = F::one() / F::c(head_dim as f64).sqrt();
    let n_q = queries.rows();

    // out = concat · wo + bo
    grads.wo.add_assign(&trace.concat.matmul_transa(d_out));
    for r in 0..n_q {
        for (g, &d) in grads.bo.iter_mut().zip(d_out.row(r)) {
            *g += d;
        }
    }
    let d_concat = d_out.matmul_transb(&params.wo);

    for h in 0..heads {
        // slice this head's span out of d_concat
        let mut d_ctx = Mat::zeros(n_q, head_dim);
        for r in 0..n_q {
            d_ctx
                .row_mut(r)
                .copy_from_slice(&d_concat.row(r)[h * head_dim..(h + 1) * head_dim]);
        }
        let weights = &trace.weights[h];
        let (q, k, v) = (&trace.q[h], &trace.k[h], &trace.v[h]);

        // ctx = weights · v
        let d_weights = d_ctx.matmul_transb(v);
        let d_v = weights.matmul_transa(&d_ctx);

        // softmax backward per row: dz = (da - (da·a)) ⊙ a
        let mut d_logits = Mat::zeros(n_q, k.rows());
        for r in 0..n_q {
            let a = weights.row(r);
            let da = d_weights.row(r);
            let inner = dot(da, a);
            for (dl, (&ai, &dai)) in d_logits.row_mut(r).iter_mut().zip(a.iter().zip(da)) {
                *dl = (dai - inner) * ai;
            }
        }
        d_logits.scale(scale);

        // logits = q · kᵀ (pre-scale)
        let d_q = d_logits.matmul(k);
        let d_k = d_logits.matmul_transa(q);

        // q = queries · wq, etc.
        grads.wq[h].add_assign(&queries.matmul_transa(&d_q));
        grads.wk[h].add_assign(&keys_values.matmul_transa(&d_k));
        grads.wv[h].add_assign(&keys_values.matmul_transa(&d_v));

        // flow into the sequences
        add_matmul_transb(d_queries, &d_q, &params.wq[h]);
        add_matmul_transb(d_keys_values, &d_k, &params.wk[h]);
        add_matmul_transb(d_keys_values, &d_v, &params.wv[h]);
    }
}

/// `acc += a · bᵀ` where `b` is latent×head_dim and `a` is n×head_dim.
fn add_matmul_transb<F: Real>(acc: &mut Mat<F>, a: &Mat<F>, b: &Mat<F>) {
    for r in 0..a.rows() {
        let ar = a.row(r);
        for j in 0..b.rows() {
            let inc = dot(ar, b.row(j));
            acc.row_mut(r)[j] += inc;
        }
    }
}

/// Test-only filler producing deterministic non-trivial parameters.
pub fn fill_attention_for_tests<F: Real>(params: &mut AttentionParams<F>, scale: f64) {
    let mut c = 0u64;
    let mut next = move || {
        c += 1;
        F::c(((c * 2654435761 % 1000) as f64 / 1000.0 - 0.5) * scale)
    };
    for h in 0..params.heads() {
        for m in [&mut params.wq[h], &mut params.wk[h], &mut params.wv[h]] {
            for v in m.data_mut() {
                *v = next();
            }
        }
    }
    for v in params.wo.data_mut() {
        *v = next();
    }
    for v in params.bo.iter_mut() {
        *v = next();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: Vec<Vec<f64>>) -> Mat<f64> {
        Mat::from_rows(rows)
    }

    fn filled_params(latent: usize, heads: usize) -> AttentionParams<f64> {
        let mut p = AttentionParams::zeros(latent, heads);
        fill_attention_for_tests(&mut p, 0.6);
        p
    }

    #[test]
    fn context_length_equals_query_length() {
        let p = filled_params(8, 2);
        let q = seq(vec![vec![0.1; 8]; 5]);
        let kv = seq(vec![vec![0.2; 8]; 3]);
        let out = cross_attention(&q, &kv, &p).unwrap();
        assert_eq!(out.rows(), 5);
        assert_eq!(out.cols(), 8);
    }

    #[test]
    fn single_key_makes_context_independent_of_queries() {
        let p = filled_params(8, 2);
        let kv = seq(vec![vec![0.3, -0.1, 0.7, 0.2, -0.5, 0.9, 0.0, 0.4]]);
        let q1 = seq(vec![vec![1.0; 8], vec![-2.0; 8]]);
        let q2 = seq(vec![vec![0.0; 8], vec![5.0; 8]]);
        let o1 = cross_attention(&q1, &kv, &p).unwrap();
        let o2 = cross_attention(&q2, &kv, &p).unwrap();
        // softmax over one element is 1, so every context row is the key's
        // projected value pushed through wo + bo.
        for r in 0..2 {
            for c in 0..8 {
                assert!((o1.get(r, c) - o2.get(r, c)).abs() < 1e-12);
                assert!((o1.get(0, c) - o1.get(r, c)).abs() < 1e-12);
            }
        }
        // explicit value: v-projections concat, times wo, plus bo
        let mut concat = vec![0.0; 8];
        for h in 0..2 {
            let v = kv.matmul(&p.wv[h]);
            concat[h * 4..(h + 1) * 4].copy_from_slice(v.row(0));
        }
        for c in 0..8 {
            let mut expect = p.bo[c];
            for i in 0..8 {
                expect += concat[i] * p.wo.get(i, c);
            }
            assert!((o1.get(0, c) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_key_rows_give_identical_context_rows() {
        let p = filled_params(8, 2);
        let kv = seq(vec![vec![0.4, 0.1, -0.2, 0.8, 0.3, -0.6, 0.5, 0.2]; 4]);
        let q = seq(vec![vec![0.9, -0.3, 0.2, 0.1, 0.0, 0.7, -0.5, 0.6], vec![0.0; 8]]);
        let out = cross_attention(&q, &kv, &p).unwrap();
        // any convex combination of identical value rows is that row
        for c in 0..8 {
            assert!((out.get(0, c) - out.get(1, c)).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = filled_params(8, 2);
        let q = seq(vec![vec![0.5, -0.4, 0.3, 0.2, 0.9, -0.8, 0.1, 0.0]; 3]);
        let kv = seq(vec![
            vec![0.2, 0.1, 0.0, -0.1, 0.4, 0.3, -0.2, 0.6],
            vec![-0.5, 0.8, 0.2, 0.9, -0.3, 0.1, 0.7, -0.4],
        ]);
        let (_, trace) = cross_attention_traced(&q, &kv, &p).unwrap();
        for h in 0..2 {
            let w = trace.head_weights(h);
            for r in 0..w.rows() {
                let sum: f64 = w.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let p = filled_params(8, 2);
        let q = Mat::<f64>::zeros(0, 8);
        let kv = seq(vec![vec![0.0; 8]]);
        assert!(matches!(cross_attention(&q, &kv, &p), Err(Error::EmptySequence)));
    }

    #[test]
    fn matches_dense_matrix_oracle() {
        // Plain nested-loop recomputation with no shared code paths.
        let p = filled_params(8, 2);
        let q = seq(vec![
            vec![0.11, -0.2, 0.35, 0.07, -0.5, 0.6, 0.21, -0.13],
            vec![0.4, 0.3, -0.7, 0.2, 0.05, -0.15, 0.33, 0.9],
            vec![-0.6, 0.1, 0.2, -0.3, 0.44, 0.5, -0.29, 0.18],
        ]);
        let kv = seq(vec![
            vec![0.9, -0.4, 0.1, 0.3, -0.2, 0.0, 0.55, -0.65],
            vec![0.25, 0.85, -0.35, 0.15, 0.6, -0.45, 0.05, 0.7],
        ]);
        let out = cross_attention(&q, &kv, &p).unwrap();

        let heads = 2;
        let hd = 4;
        for r in 0..q.rows() {
            let mut concat = vec![0.0f64; 8];
            for h in 0..heads {
                let proj = |x: &[f64], w: &Mat<f64>, c: usize| -> f64 {
                    (0..8).map(|i| x[i] * w.get(i, c)).sum()
                };
                let qr: Vec<f64> = (0..hd).map(|c| proj(q.row(r), &p.wq[h], c)).collect();
                let mut logits = Vec::new();
                for s in 0..kv.rows() {
                    let ks: Vec<f64> = (0..hd).map(|c| proj(kv.row(s), &p.wk[h], c)).collect();
                    let z: f64 = qr.iter().zip(&ks).map(|(a, b)| a * b).sum();
                    logits.push(z / (hd as f64).sqrt());
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for c in 0..hd {
                    let mut acc = 0.0;
                    for s in 0..kv.rows() {
                        let vs = proj(kv.row(s), &p.wv[h], c);
                        acc += exps[s] / z * vs;
                    }
                    concat[h * hd + c] = acc;
                }
            }
            for c in 0..8 {
                let mut expect = p.bo[c];
                for i in 0..8 {
                    expect += concat[i] * p.wo.get(i, c);
                }
                assert!((out.get(r, c) - expect).abs() < 1e-12, "row {r} col {c}");
            }
        }
    }
}
