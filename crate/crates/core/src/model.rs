//! The full trainable parameter set and its configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionParams;
use crate::document::{default_vocab, DocKind, SectionVocab};
use crate::encoder::BranchParams;
use crate::linalg::Mat;
use crate::mlp::MlpParams;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: String,
    pub backbone_dim: usize,
    pub latent_dim: usize,
    pub heads: usize,
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    pub brief_vocab: SectionVocab,
    pub profile_vocab: SectionVocab,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: "stub-384".to_string(),
            backbone_dim: 384,
            latent_dim: 32,
            heads: 8,
            mlp_hidden: vec![256, 128, 256],
            dropout: 0.4,
            brief_vocab: default_vocab(DocKind::Brief),
            profile_vocab: default_vocab(DocKind::Profile),
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width of the pooled feature vector fed to the MLP:
    /// two similarity-stat blocks plus four mean-pooled embeddings.
    pub fn feature_dim(&self) -> usize {
        2 * (6 + self.latent_dim + self.latent_dim)
    }

    pub fn mlp_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.feature_dim()];
        sizes.extend(&self.mlp_hidden);
        sizes.push(1);
        sizes
    }
}

/// Every trainable tensor, shared between parameters, gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<F> {
    pub brief_branch: BranchParams<F>,
    pub profile_branch: BranchParams<F>,
    /// Attention with brief utterances as queries, producing profile context.
    pub attn_brief_to_profile: AttentionParams<F>,
    /// Attention with profile utterances as queries, producing brief context.
    pub attn_profile_to_brief: AttentionParams<F>,
    pub mlp: MlpParams<F>,
}

impl<F: Real> ParamSet<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        ParamSet {
            brief_branch: BranchParams::zeros(
                config.latent_dim,
                config.backbone_dim,
                config.brief_vocab.len(),
            ),
            profile_branch: BranchParams::zeros(
                config.latent_dim,
                config.backbone_dim,
                config.profile_vocab.len(),
            ),
            attn_brief_to_profile: AttentionParams::zeros(config.latent_dim, config.heads),
            attn_profile_to_brief: AttentionParams::zeros(config.latent_dim, config.heads),
            mlp: MlpParams::zeros(&config.mlp_sizes(), config.dropout),
        }
    }

    /// All tensors in a fixed, documented order, paired with stable names.
    pub fn tensors(&self) -> Vec<(String, &[F], Vec<usize>)> {
        let mut out: Vec<(String, &[F], Vec<usize>)> = Vec::new();
        for (prefix, branch) in
            [("brief", &self.brief_branch), ("profile", &self.profile_branch)]
        {
            out.push((
                format!("{prefix}.w"),
                branch.w.data(),
                vec![branch.w.rows(), branch.w.cols()],
            ));
            out.push((format!("{prefix}.b"), &branch.b, vec![branch.b.len()]));
            out.push((
                format!("{prefix}.categorical"),
                branch.categorical.data(),
                vec![branch.categorical.rows(), branch.categorical.cols()],
            ));
        }
        for (prefix, attn) in [
            ("attn_bp", &self.attn_brief_to_profile),
            ("attn_pb", &self.attn_profile_to_brief),
        ] {
            for h in 0..attn.heads() {
                for (tag, m) in [("wq", &attn.wq[h]), ("wk", &attn.wk[h]), ("wv", &attn.wv[h])] {
                    out.push((
                        format!("{prefix}.h{h}.{tag}"),
                        m.data(),
                        vec![m.rows(), m.cols()],
                    ));
                }
            }
            out.push((
                format!("{prefix}.wo"),
                attn.wo.data(),
                vec![attn.wo.rows(), attn.wo.cols()],
            ));
            out.push((format!("{prefix}.bo"), &attn.bo, vec![attn.bo.len()]));
        }
        for (l, (w, b)) in self.mlp.weights.iter().zip(&self.mlp.biases).enumerate() {
            out.push((format!("mlp.l{l}.w"), w.data(), vec![w.rows(), w.cols()]));
            out.push((format!("mlp.l{l}.b"), b, vec![b.len()]));
        }
        out
    }

    /// Mutable views over all tensors, in the same order as [`tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for branch in [&mut self.brief_branch, &mut self.profile_branch] {
            out.push(branch.w.data_mut());
            out.push(&mut branch.b);
            out.push(branch.categorical.data_mut());
        }
        for attn in [&mut self.attn_brief_to_profile, &mut self.attn_profile_to_brief] {
            let heads = attn.wq.len();
            let (wq, rest) = (&mut attn.wq, (&mut attn.wk, &mut attn.wv));
            // interleave per head to mirror `tensors`
            let (wk, wv) = rest;
            let mut qs: Vec<&mut Mat<F>> = wq.iter_mut().collect();
            let mut ks: Vec<&mut Mat<F>> = wk.iter_mut().collect();
            let mut vs: Vec<&mut Mat<F>> = wv.iter_mut().collect();
            for _ in 0..heads {
                out.push(qs.remove(0).data_mut());
                out.push(ks.remove(0).data_mut());
                out.push(vs.remove(0).data_mut());
            }
            out.push(attn.wo.data_mut());
            out.push(&mut attn.bo);
        }
        for (w, b) in self.mlp.weights.iter_mut().zip(&mut self.mlp.biases) {
            out.push(w.data_mut());
            out.push(b);
        }
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors().iter().map(|(_, d, _)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, d, _)| d.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: F) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v * s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet<F>) {
        let theirs = other.tensors();
        for (mine, (_, t, _)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, &b) in mine.iter_mut().zip(t) {
                *a += b;
            }
        }
    }

    /// Convert every tensor to another scalar type via f64.
    pub fn convert<G: Real>(&self, config: &ModelConfig) -> ParamSet<G> {
        let mut out = ParamSet::<G>::zeros(config);
        let src = self.tensors();
        for (dst, (_, s, _)) in out.tensors_mut().into_iter().zip(src) {
            for (d, &v) in dst.iter_mut().zip(s) {
                *d = G::c(v.as_f64());
            }
        }
        out
    }
}

/// Gradients mirror the parameter tensors exactly.
#[derive(Debug, Clone)]
pub struct Gradients<F>(pub ParamSet<F>);

impl<F: Real> Gradients<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Gradients(ParamSet::zeros(config))
    }

    pub fn l2_norm(&self) -> f64 {
        self.0
            .tensors()
            .iter()
            .flat_map(|(_, d, _)| d.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub set: ParamSet<F>,
}

/// Initialize parameters: weights uniform in ±sqrt(6/(fan_in+fan_out)),
/// biases and categorical encodings zero. Deterministic per seed.
pub fn init_params<F: Real>(config: &ModelConfig, seed: u64) -> ModelParams<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::<F>::zeros(config);

    init_weight(&mut set.brief_branch.w, &mut rng);
    init_weight(&mut set.profile_branch.w, &mut rng);
    for attn in [&mut set.attn_brief_to_profile, &mut set.attn_profile_to_brief] {
        for h in 0..attn.wq.len() {
            init_weight(&mut attn.wq[h], &mut rng);
            init_weight(&mut attn.wk[h], &mut rng);
            init_weight(&mut attn.wv[h], &mut rng);
        }
        init_weight(&mut attn.wo, &mut rng);
    }
    for w in &mut set.mlp.weights {
        init_weight(w, &mut rng);
    }

    let mut config = config.clone();
    config.seed = seed;
    ModelParams { config, set }
}

fn init_weight<F: Real>(m: &mut Mat<F>, rng: &mut ChaCha8Rng) {
    // rows = fan_out, cols = fan_in for branch/MLP matrices; for attention
    // projections rows = fan_in. Symmetric in the bound, so use rows+cols.
    let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for v in m.data_mut() {
        *v = F::c(rng.gen_range(-bound..bound));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count_is_in_budget() {
        let config = ModelConfig::default();
        let set = ParamSet::<f32>::zeros(&config);
        let n = set.num_trainable();
        // branches: 2×(32×384 + 32) + 8×384 categorical rows
        // attention: 2×(8×3×(32×4) + 32×32 + 32)
        // mlp: 140·256+256 + 256·128+128 + 128·256+256 + 256·1+1
        assert_eq!(n, 138_241);
        assert!((120_000..=150_000).contains(&n));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let config = ModelConfig::default();
        let a = init_params::<f32>(&config, 7);
        let b = init_params::<f32>(&config, 7);
        let c = init_params::<f32>(&config, 8);
        assert_eq!(a.set, b.set);
        assert_ne!(a.set, c.set);
    }

    #[test]
    fn biases_and_categorical_start_at_zero() {
        let config = ModelConfig::default();
        let m = init_params::<f64>(&config, 3);
        assert!(m.set.brief_branch.b.iter().all(|&v| v == 0.0));
        assert!(m.set.profile_branch.b.iter().all(|&v| v == 0.0));
        assert!(m.set.brief_branch.categorical.data().iter().all(|&v| v == 0.0));
        assert!(m.set.attn_brief_to_profile.bo.iter().all(|&v| v == 0.0));
        assert!(m.set.mlp.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn weight_sample_mean_is_near_zero() {
        let config = ModelConfig::default();
        let m = init_params::<f64>(&config, 11);
        let w = m.set.brief_branch.w.data();
        let n = w.len() as f64;
        assert!(n >= 1e4);
        let mean: f64 = w.iter().sum::<f64>() / n;
        let bound = (6.0f64 / (32.0 + 384.0)).sqrt();
        let sigma = bound / 3.0f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn tensor_views_align_with_named_tensors() {
        let config = ModelConfig::default();
        let mut m = init_params::<f64>(&config, 1);
        let names: Vec<(String, Vec<f64>)> = m
            .set
            .tensors()
            .into_iter()
            .map(|(n, d, _)| (n, d.to_vec()))
            .collect();
        let muts = m.set.tensors_mut();
        assert_eq!(names.len(), muts.len());
        for ((_, snapshot), view) in names.iter().zip(&muts) {
            assert_eq!(snapshot.len(), view.len());
            assert_eq!(&snapshot[..], &view[..]);
        }
    }

    #[test]
    fn feature_dim_is_140_for_defaults() {
        assert_eq!(ModelConfig::default().feature_dim(), 140);
    }
}
