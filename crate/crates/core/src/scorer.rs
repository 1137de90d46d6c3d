//! End-to-end pair scoring: bidirectional cross-attention, cosine similarity
//! distributions, statistical pooling, mean-pooled embeddings, MLP head.

use rand_chacha::ChaCha8Rng;

use crate::attention::{attention_backward, cross_attention_traced, AttnTrace};
use crate::cache::EmbeddingCache;
use crate::encoder::{branch_backward, encode_input, DocInput, EmbeddingSequence};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, Mat};
use crate::mlp::{mlp_backward, mlp_forward, MlpTrace};
use crate::model::{Gradients, ModelParams, ParamSet};
use crate::scalar::Real;
use crate::stats::{describe, describe_backward, DescStats};

/// Scoring mode: training enables dropout through the provided RNG.
pub enum ScoreMode<'r> {
    Infer,
    Train(&'r mut ChaCha8Rng),
}

/// Per-index cosine similarities between a sequence and its context.
/// Zero-norm rows yield cosine 0.
pub fn similarity_distribution<F: Real>(seq: &Mat<F>, context: &Mat<F>) -> Result<Vec<F>> {
    if seq.rows() != context.rows() {
        return Err(Error::LengthMismatch { left: seq.rows(), right: context.rows() });
    }
    let mut out = Vec::with_capacity(seq.rows());
    for i in 0..seq.rows() {
        out.push(cosine(seq.row(i), context.row(i)));
    }
    Ok(out)
}

fn cosine<F: Real>(a: &[F], b: &[F]) -> F {
    let na = norm2(a);
    let nb = norm2(b);
    if na == F::zero() || nb == F::zero() {
        return F::zero();
    }
    dot(a, b) / (na * nb)
}

/// d(cos)/da accumulated into `d_a`, d(cos)/db into `d_b`, times `upstream`.
fn cosine_backward<F: Real>(a: &[F], b: &[F], upstream: F, d_a: &mut [F], d_b: &mut [F]) {
    let na = norm2(a);
    let nb = norm2(b);
    if na == F::zero() || nb == F::zero() {
        return;
    }
    let inv = F::one() / (na * nb);
    let c = dot(a, b) * inv;
    // dc/da = b/(|a||b|) - c a/|a|²
    axpy(upstream * inv, b, d_a);
    axpy(-upstream * c / (na * na), a, d_a);
    axpy(upstream * inv, a, d_b);
    axpy(-upstream * c / (nb * nb), b, d_b);
}

#[derive(Debug, Clone)]
pub struct InteractionTrace<F> {
    pub attn_bp: AttnTrace<F>,
    pub attn_pb: AttnTrace<F>,
    pub ctx_f: Mat<F>,
    pub ctx_p: Mat<F>,
    pub sim_pf: Vec<F>,
    pub sim_fp: Vec<F>,
    pub desc_pf: DescStats<F>,
    pub desc_fp: DescStats<F>,
    pub feature: Vec<F>,
    pub mlp: MlpTrace<F>,
    pub score: F,
}

/// Forward through the comparison block given already-projected sequences.
pub fn interaction_forward<F: Real>(
    ep: &Mat<F>,
    ef: &Mat<F>,
    set: &ParamSet<F>,
    mode: &mut ScoreMode<'_>,
) -> Result<(F, InteractionTrace<F>)> {
    let (ctx_f, attn_bp) = cross_attention_traced(ep, ef, &set.attn_brief_to_profile)?;
    let (ctx_p, attn_pb) = cross_attention_traced(ef, ep, &set.attn_profile_to_brief)?;

    let sim_pf = similarity_distribution(ep, &ctx_f)?;
    let sim_fp = similarity_distribution(ef, &ctx_p)?;
    let desc_pf = describe(&sim_pf)?;
    let desc_fp = describe(&sim_fp)?;

    let mut feature = Vec::with_capacity(set.mlp.input_dim());
    feature.extend_from_slice(&desc_pf.as_array());
    feature.extend(ep.col_mean());
    feature.extend(ctx_f.col_mean());
    feature.extend_from_slice(&desc_fp.as_array());
    feature.extend(ef.col_mean());
    feature.extend(ctx_p.col_mean());
    debug_assert_eq!(feature.len(), set.mlp.input_dim());

    let rng = match mode {
        ScoreMode::Infer => None,
        ScoreMode::Train(rng) => Some(&mut **rng),
    };
    let (score, mlp) = mlp_forward(&feature, &set.mlp, rng);

    Ok((
        score,
        InteractionTrace {
            attn_bp,
            attn_pb,
            ctx_f,
            ctx_p,
            sim_pf,
            sim_fp,
            desc_pf,
            desc_fp,
            feature,
            mlp,
            score,
        },
    ))
}

/// Backward through the comparison block; returns gradients w.r.t. the two
/// projected sequences and accumulates attention/MLP parameter gradients.
pub fn interaction_backward<F: Real>(
    ep: &Mat<F>,
    ef: &Mat<F>,
    set: &ParamSet<F>,
    trace: &InteractionTrace<F>,
    d_score: F,
    grads: &mut Gradients<F>,
) -> (Mat<F>, Mat<F>) {
    let latent = ep.cols();
    let n_p = ep.rows();
    let n_f = ef.rows();

    let d_feature = mlp_backward(&trace.feature, &set.mlp, &trace.mlp, d_score, &mut grads.0.mlp);

    let (d_desc_pf, rest) = d_feature.split_at(6);
    let (d_mean_p, rest) = rest.split_at(latent);
    let (d_mean_ctx_f, rest) = rest.split_at(latent);
    let (d_desc_fp, rest) = rest.split_at(6);
    let (d_mean_f, d_mean_ctx_p) = rest.split_at(latent);

    let mut d_ep = Mat::zeros(n_p, latent);
    let mut d_ef = Mat::zeros(n_f, latent);
    let mut d_ctx_f = Mat::zeros(n_p, latent);
    let mut d_ctx_p = Mat::zeros(n_f, latent);

    // mean pooling spreads gradient uniformly over rows
    let inv_p = F::one() / F::c(n_p as f64);
    let inv_f = F::one() / F::c(n_f as f64);
    for i in 0..n_p {
        axpy(inv_p, d_mean_p, d_ep.row_mut(i));
        axpy(inv_p, d_mean_ctx_f, d_ctx_f.row_mut(i));
    }
    for i in 0..n_f {
        axpy(inv_f, d_mean_f, d_ef.row_mut(i));
        axpy(inv_f, d_mean_ctx_p, d_ctx_p.row_mut(i));
    }

    // statistics over the similarity distributions
    let d_sim_pf = describe_backward(
        &trace.sim_pf,
        &[d_desc_pf[0], d_desc_pf[1], d_desc_pf[2], d_desc_pf[3], d_desc_pf[4], d_desc_pf[5]],
    );
    let d_sim_fp = describe_backward(
        &trace.sim_fp,
        &[d_desc_fp[0], d_desc_fp[1], d_desc_fp[2], d_desc_fp[3], d_desc_fp[4], d_desc_fp[5]],
    );

    for i in 0..n_p {
        cosine_backward(
            ep.row(i),
            trace.ctx_f.row(i),
            d_sim_pf[i],
            d_ep.row_mut(i),
            d_ctx_f.row_mut(i),
        );
    }
    for i in 0..n_f {
        cosine_backward(
            ef.row(i),
            trace.ctx_p.row(i),
            d_sim_fp[i],
            d_ef.row_mut(i),
            d_ctx_p.row_mut(i),
        );
    }

    // both attention blocks feed gradient back into the sequences
    attention_backward(
        ep,
        ef,
        &set.attn_brief_to_profile,
        &trace.attn_bp,
        &d_ctx_f,
        &mut d_ep,
        &mut d_ef,
        &mut grads.0.attn_brief_to_profile,
    );
    attention_backward(
        ef,
        ep,
        &set.attn_profile_to_brief,
        &trace.attn_pb,
        &d_ctx_p,
        &mut d_ef,
        &mut d_ep,
        &mut grads.0.attn_profile_to_brief,
    );

    (d_ep, d_ef)
}

/// Score a pair from already-projected embedding sequences.
pub fn score_pair<F: Real>(
    ep: &EmbeddingSequence<F>,
    ef: &EmbeddingSequence<F>,
    set: &ParamSet<F>,
    mode: &mut ScoreMode<'_>,
) -> Result<F> {
    interaction_forward(&ep.vectors, &ef.vectors, set, mode).map(|(s, _)| s)
}

#[derive(Debug, Clone)]
pub struct PairTrace<F> {
    pub ep: Mat<F>,
    pub ef: Mat<F>,
    pub inner: InteractionTrace<F>,
}

/// Full forward from frozen backbone inputs through both branches and the
/// comparison block.
pub fn forward_pair<F: Real>(
    brief: &DocInput<F>,
    profile: &DocInput<F>,
    set: &ParamSet<F>,
    mode: &mut ScoreMode<'_>,
) -> Result<(F, PairTrace<F>)> {
    let ep = encode_input(brief, &set.brief_branch)?;
    let ef = encode_input(profile, &set.profile_branch)?;
    let (score, inner) = interaction_forward(&ep.vectors, &ef.vectors, set, mode)?;
    Ok((score, PairTrace { ep: ep.vectors, ef: ef.vectors, inner }))
}

/// Full backward for one pair, including both branch projections.
pub fn backward_pair<F: Real>(
    brief: &DocInput<F>,
    profile: &DocInput<F>,
    set: &ParamSet<F>,
    trace: &PairTrace<F>,
    d_score: F,
    grads: &mut Gradients<F>,
) {
    let (d_ep, d_ef) = interaction_backward(&trace.ep, &trace.ef, set, &trace.inner, d_score, grads);
    branch_backward(brief, &set.brief_branch, &d_ep, &mut grads.0.brief_branch);
    branch_backward(profile, &set.profile_branch, &d_ef, &mut grads.0.profile_branch);
}

/// Score one brief against many cached profiles; the brief is projected once.
/// Results are sorted by descending score, ties broken by ascending id.
pub fn score_batch<F: Real>(
    brief_id: &str,
    profile_ids: &[String],
    cache: &EmbeddingCache,
    model: &ModelParams<F>,
) -> Result<Vec<(String, F)>> {
    let brief_input = DocInput::<F>::from_cache_entry(brief_id, cache.get(brief_id)?);
    let ep = encode_input(&brief_input, &model.set.brief_branch)?;
    let mut out = Vec::with_capacity(profile_ids.len());
    for pid in profile_ids {
        let profile_input = DocInput::<F>::from_cache_entry(pid, cache.get(pid)?);
        let ef = encode_input(&profile_input, &model.set.profile_branch)?;
        let (score, _) =
            interaction_forward(&ep.vectors, &ef.vectors, &model.set, &mut ScoreMode::Infer)?;
        out.push((pid.clone(), score));
    }
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::fill_attention_for_tests;
    use crate::document::{default_vocab, DocKind};
    use crate::model::{init_params, ModelConfig};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            backbone: "stub-16".into(),
            backbone_dim: 16,
            latent_dim: 8,
            heads: 2,
            mlp_hidden: vec![10, 6],
            dropout: 0.4,
            brief_vocab: default_vocab(DocKind::Brief),
            profile_vocab: default_vocab(DocKind::Profile),
            seed: 0,
        }
    }

    fn doc_input(seed: u64, rows: usize, dim: usize) -> DocInput<f64> {
        let mut c = seed;
        let mut next = move || {
            c = c.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((c >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..dim).map(|_| next() * 0.7).collect()).collect();
        DocInput {
            doc_id: format!("d{seed}"),
            backbone: Mat::from_rows(data),
            sections: (0..rows).map(|i| (i % 4) as u16).collect(),
        }
    }

    #[test]
    fn similarity_identity_orthogonal_antipodal() {
        let seq = Mat::<f64>::from_rows(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let same = similarity_distribution(&seq, &seq).unwrap();
        assert!(same.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let ortho = Mat::from_rows(vec![vec![0.0, 3.0], vec![5.0, 0.0]]);
        let zeros = similarity_distribution(&seq, &ortho).unwrap();
        assert!(zeros.iter().all(|&v| v.abs() < 1e-12));

        let anti = Mat::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let neg = similarity_distribution(&seq, &anti).unwrap();
        assert!((neg[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_cosine_is_zero() {
        let seq = Mat::<f64>::from_rows(vec![vec![0.0, 0.0]]);
        let ctx = Mat::<f64>::from_rows(vec![vec![1.0, 1.0]]);
        assert_eq!(similarity_distribution(&seq, &ctx).unwrap(), vec![0.0]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let a = Mat::<f64>::zeros(2, 4);
        let b = Mat::<f64>::zeros(3, 4);
        assert!(matches!(
            similarity_distribution(&a, &b),
            Err(Error::LengthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn zero_mlp_returns_final_bias() {
        let config = tiny_config();
        let mut model = init_params::<f64>(&config, 5);
        for w in &mut model.set.mlp.weights {
            for v in w.data_mut() {
                *v = 0.0;
            }
        }
        let n = model.set.mlp.biases.len();
        model.set.mlp.biases[n - 1][0] = 0.123;
        let brief = doc_input(1, 3, 16);
        let profile = doc_input(2, 4, 16);
        let (score, _) =
            forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
        assert!((score - 0.123).abs() < 1e-12);
    }

    #[test]
    fn cosine_values_stay_in_range() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 9);
        for seed in 0..20 {
            let brief = doc_input(seed, 3 + (seed % 3) as usize, 16);
            let profile = doc_input(seed + 100, 2 + (seed % 4) as usize, 16);
            let (_, trace) =
                forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
            for v in trace.inner.sim_pf.iter().chain(&trace.inner.sim_fp) {
                assert!(*v >= -1.0 - 1e-9 && *v <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn feature_width_is_always_input_dim() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 2);
        let brief = doc_input(3, 5, 16);
        let profile = doc_input(4, 3, 16);
        let (_, trace) =
            forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
        assert_eq!(trace.inner.feature.len(), config.feature_dim());
        assert_eq!(trace.inner.ctx_f.rows(), 5);
        assert_eq!(trace.inner.ctx_p.rows(), 3);
    }

    #[test]
    fn infer_mode_is_permutation_invariant() {
        let config = tiny_config();
        let mut model = init_params::<f64>(&config, 13);
        fill_attention_for_tests(&mut model.set.attn_brief_to_profile, 0.4);
        let brief = doc_input(21, 3, 16);
        let profile = doc_input(22, 3, 16);
        let (base, _) =
            forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();

        let perms: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for bp in perms {
            for fp in perms {
                let permute = |input: &DocInput<f64>, p: &[usize; 3]| DocInput {
                    doc_id: input.doc_id.clone(),
                    backbone: Mat::from_rows(
                        p.iter().map(|&i| input.backbone.row(i).to_vec()).collect(),
                    ),
                    sections: p.iter().map(|&i| input.sections[i]).collect(),
                };
                let (score, _) = forward_pair(
                    &permute(&brief, &bp),
                    &permute(&profile, &fp),
                    &model.set,
                    &mut ScoreMode::Infer,
                )
                .unwrap();
                assert!((score - base).abs() <= 1e-6, "perm {bp:?}/{fp:?}: {score} vs {base}");
            }
        }
    }

    #[test]
    fn score_batch_matches_pairwise_and_breaks_ties_by_id() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 31);
        let mut cache = EmbeddingCache::new(16);
        let as_entry = |input: &DocInput<f64>| -> Vec<(u16, Vec<f32>)> {
            (0..input.len())
                .map(|i| {
                    (
                        input.sections[i],
                        input.backbone.row(i).iter().map(|&v| v as f32).collect(),
                    )
                })
                .collect()
        };
        let brief = doc_input(41, 4, 16);
        cache.insert("p1".into(), as_entry(&brief)).unwrap();
        let f1 = doc_input(42, 3, 16);
        let f2 = doc_input(43, 5, 16);
        cache.insert("f1".into(), as_entry(&f1)).unwrap();
        cache.insert("f2".into(), as_entry(&f2)).unwrap();
        // identical embeddings under two ids force the tie-break
        cache.insert("f0-dup".into(), as_entry(&f1)).unwrap();

        let ids = vec!["f1".to_string(), "f2".to_string(), "f0-dup".to_string()];
        let ranked = score_batch("p1", &ids, &cache, &model).unwrap();
        assert_eq!(ranked.len(), 3);
        for w in ranked.windows(2) {
            assert!(w[0].1 >= w[1].1);
            if w[0].1 == w[1].1 {
                assert!(w[0].0 < w[1].0);
            }
        }
        let dup_pos = ranked.iter().position(|(id, _)| id == "f0-dup").unwrap();
        let f1_pos = ranked.iter().position(|(id, _)| id == "f1").unwrap();
        assert_eq!(ranked[dup_pos].1, ranked[f1_pos].1);
        assert!(dup_pos < f1_pos, "tie must order by ascending id");

        // per-pair scores agree exactly
        let brief_in = DocInput::<f64>::from_cache_entry("p1", cache.get("p1").unwrap());
        for (id, score) in &ranked {
            let prof = DocInput::<f64>::from_cache_entry(id, cache.get(id).unwrap());
            let (expect, _) =
                forward_pair(&brief_in, &prof, &model.set, &mut ScoreMode::Infer).unwrap();
            assert_eq!(*score, expect);
        }
    }

    #[test]
    fn cache_miss_is_reported_with_id() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 2);
        let cache = EmbeddingCache::new(16);
        let err = score_batch("p1", &["f1".to_string()], &cache, &model).unwrap_err();
        assert!(matches!(err, Error::CacheMiss(id) if id == "p1"));
    }

    #[test]
    fn singleton_profile_list_ranks_alone() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 3);
        let mut cache = EmbeddingCache::new(16);
        let brief = doc_input(51, 3, 16);
        let prof = doc_input(52, 3, 16);
        let as_entry = |input: &DocInput<f64>| -> Vec<(u16, Vec<f32>)> {
            (0..input.len())
                .map(|i| {
                    (
                        input.sections[i],
                        input.backbone.row(i).iter().map(|&v| v as f32).collect(),
                    )
                })
                .collect()
        };
        cache.insert("p".into(), as_entry(&brief)).unwrap();
        cache.insert("f".into(), as_entry(&prof)).unwrap();
        let ranked = score_batch("p", &["f".to_string()], &cache, &model).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].0, "f");
    }

    #[test]
    fn pair_backward_matches_finite_differences_spotcheck() {
        let config = tiny_config();
        let model = init_params::<f64>(&config, 77);
        let brief = doc_input(61, 3, 16);
        let profile = doc_input(62, 4, 16);

        let (_, trace) =
            forward_pair(&brief, &profile, &model.set, &mut ScoreMode::Infer).unwrap();
        let mut grads = Gradients::zeros(&config);
        backward_pair(&brief, &profile, &model.set, &trace, 1.0, &mut grads);

        let eps = 1e-6;
        let score_of = |set: &ParamSet<f64>| -> f64 {
            forward_pair(&brief, &profile, set, &mut ScoreMode::Infer).unwrap().0
        };
        // one coordinate from every tensor family
        let probes: Vec<usize> = vec![0, 1, 2, 3, 6, 8, 14, 20, 26, 27, 28, 29];
        let flat_names: Vec<String> =
            model.set.tensors().into_iter().map(|(n, _, _)| n).collect();
        for &ti in &probes {
            if ti >= flat_names.len() {
                continue;
            }
            let mut hi = model.set.clone();
            let mut lo = model.set.clone();
            {
                let mut hs = hi.tensors_mut();
                hs[ti][0] += eps;
            }
            {
                let mut ls = lo.tensors_mut();
                ls[ti][0] -= eps;
            }
            let fd = (score_of(&hi) - score_of(&lo)) / (2.0 * eps);
            let analytic = grads.0.tensors()[ti].1[0];
            assert!(
                (fd - analytic).abs() < 1e-6 * (1.0 + fd.abs()),
                "tensor {} ({ti}): fd {fd} vs {analytic}",
                flat_names[ti]
            );
        }
    }
}
