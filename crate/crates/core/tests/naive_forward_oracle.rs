//! Independent re-implementation of the whole scoring forward pass with
//! plain nested loops, used to cross-check `forward_pair` and to pin a
//! golden regression value.

use latefit_core::document::{default_vocab, DocKind};
use latefit_core::encoder::DocInput;
use latefit_core::linalg::Mat;
use latefit_core::model::{init_params, ModelConfig, ParamSet};
use latefit_core::scorer::{forward_pair, ScoreMode};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        backbone: "stub-16".into(),
        backbone_dim: 16,
        latent_dim: 8,
        heads: 2,
        mlp_hidden: vec![12, 6],
        dropout: 0.4,
        brief_vocab: default_vocab(DocKind::Brief),
        profile_vocab: default_vocab(DocKind::Profile),
        seed: 0,
    }
}

fn doc_input(seed: u64, rows: usize, dim: usize) -> DocInput<f64> {
    let mut c = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    let mut next = move || {
        c = c.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((c >> 33) as f64 / (1u64 << 31) as f64) - 1.0
    };
    let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..dim).map(|_| next() * 0.8).collect()).collect();
    DocInput {
        doc_id: format!("d{seed}"),
        backbone: Mat::from_rows(data),
        sections: (0..rows).map(|i| (i % 4) as u16).collect(),
    }
}

// --- naive path, no shared kernels ------------------------------------------

fn naive_encode(input: &DocInput<f64>, w: &Mat<f64>, b: &[f64], cat: &Mat<f64>) -> Vec<Vec<f64>> {
    let latent = w.rows();
    let dim = w.cols();
    let mut out = Vec::new();
    for i in 0..input.len() {
        let mut row = vec![0.0; latent];
        for (j, rj) in row.iter_mut().enumerate() {
            let mut acc = b[j];
            for d in 0..dim {
                acc += w.get(j, d)
                    * (input.backbone.get(i, d) + cat.get(input.sections[i] as usize, d));
            }
            *rj = acc;
        }
        out.push(row);
    }
    out
}

fn naive_attention(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    wq: &[Mat<f64>],
    wk: &[Mat<f64>],
    wv: &[Mat<f64>],
    wo: &Mat<f64>,
    bo: &[f64],
) -> Vec<Vec<f64>> {
    let heads = wq.len();
    let hd = wq[0].cols();
    let latent = wo.rows();
    let proj = |x: &[f64], w: &Mat<f64>| -> Vec<f64> {
        (0..w.cols())
            .map(|c| (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum())
            .collect()
    };
    let mut out = Vec::new();
    for q_row in queries {
        let mut concat = vec![0.0; latent];
        for h in 0..heads {
            let q = proj(q_row, &wq[h]);
            let mut logits = Vec::new();
            for k_row in keys {
                let k = proj(k_row, &wk[h]);
                let dot: f64 = q.iter().zip(&k).map(|(a, b)| a * b).sum();
                logits.push(dot / (hd as f64).sqrt());
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..hd {
                let mut acc = 0.0;
                for (s, k_row) in keys.iter().enumerate() {
                    let v = proj(k_row, &wv[h]);
                    acc += exps[s] / z * v[c];
                }
                concat[h * hd + c] = acc;
            }
        }
        let mut row = vec![0.0; latent];
        for (c, rc) in row.iter_mut().enumerate() {
            let mut acc = bo[c];
            for (i, &ci) in concat.iter().enumerate() {
                acc += ci * wo.get(i, c);
            }
            *rc = acc;
        }
        out.push(row);
    }
    out
}

fn naive_cosines(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 || ny == 0.0 {
                0.0
            } else {
                dot / (nx * ny)
            }
        })
        .collect()
}

/// Stats via raw central-moment sums (a different algebraic route than the
/// implementation's standardized-z accumulation).
fn naive_stats(values: &[f64]) -> [f64; 6] {
    let n = values.len() as f64;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let std = m2.sqrt();
    if std < 1e-12 {
        [min, max, mean, std, 0.0, 0.0]
    } else {
        [min, max, mean, std, m3 / std.powi(3), m4 / std.powi(4)]
    }
}

fn naive_mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut out = vec![0.0; rows[0].len()];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v / n;
        }
    }
    out
}

fn naive_gelu(x: f64) -> f64 {
    let u = (2.0f64 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn naive_score(brief: &DocInput<f64>, profile: &DocInput<f64>, set: &ParamSet<f64>) -> f64 {
    let ep = naive_encode(brief, &set.brief_branch.w, &set.brief_branch.b, &set.brief_branch.categorical);
    let ef = naive_encode(
        profile,
        &set.profile_branch.w,
        &set.profile_branch.b,
        &set.profile_branch.categorical,
    );
    let a_bp = &set.attn_brief_to_profile;
    let a_pb = &set.attn_profile_to_brief;
    let ctx_f = naive_attention(&ep, &ef, &a_bp.wq, &a_bp.wk, &a_bp.wv, &a_bp.wo, &a_bp.bo);
    let ctx_p = naive_attention(&ef, &ep, &a_pb.wq, &a_pb.wk, &a_pb.wv, &a_pb.wo, &a_pb.bo);

    let mut feature = Vec::new();
    feature.extend(naive_stats(&naive_cosines(&ep, &ctx_f)));
    feature.extend(naive_mean_rows(&ep));
    feature.extend(naive_mean_rows(&ctx_f));
    feature.extend(naive_stats(&naive_cosines(&ef, &ctx_p)));
    feature.extend(naive_mean_rows(&ef));
    feature.extend(naive_mean_rows(&ctx_p));

    let mut h = feature;
    let n_layers = set.mlp.weights.len();
    for l in 0..n_layers {
        let w = &set.mlp.weights[l];
        let b = &set.mlp.biases[l];
        let mut next = vec![0.0; w.rows()];
        for (j, nj) in next.iter_mut().enumerate() {
            let mut acc = b[j];
            for (i, &hi) in h.iter().enumerate() {
                acc += w.get(j, i) * hi;
            }
            *nj = if l + 1 < n_layers { naive_gelu(acc) } else { acc };
        }
        h = next;
    }
    h[0]
}

#[test]
fn forward_matches_naive_reimplementation() {
    let config = tiny_config();
    for seed in 0..12u64 {
        let model = init_params::<f64>(&config, 100 + seed);
        let brief = doc_input(2 * seed + 1, 3 + (seed % 3) as usize, 16);
        let profile = doc_input(1000 + seed, 2 + (seed % 4) as usize, 16);
        let (got, _) = forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
        let expect = naive_score(&brief, &profile, &model.set);
        assert!(
            (got - expect).abs() < 1e-9,
            "seed {seed}: impl {got} vs naive {expect}"
        );
    }
}

#[test]
fn default_width_forward_matches_naive() {
    // full-size configuration (140-wide features, 8 heads)
    let config = ModelConfig { backbone_dim: 48, ..Default::default() };
    let model = init_params::<f64>(&config, 7);
    let brief = doc_input(5, 6, 48);
    let profile = doc_input(6, 9, 48);
    let (got, _) = forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
    let expect = naive_score(&brief, &profile, &model.set);
    assert!((got - expect).abs() < 1e-9, "impl {got} vs naive {expect}");
}

/// Golden regression value, recorded from the first verified build and
/// cross-checked against the naive oracle above.
#[test]
fn golden_pinned_score() {
    let config = tiny_config();
    let model = init_params::<f64>(&config, 424242);
    let brief = doc_input(11, 3, 16);
    let profile = doc_input(22, 4, 16);
    let (got, _) = forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
    let naive = naive_score(&brief, &profile, &model.set);
    assert!((got - naive).abs() < 1e-10);
    let golden = 0.12684733367506884;
    assert!((got - golden).abs() < 1e-12, "got {got:.17}, pinned {golden:.17}");
}
