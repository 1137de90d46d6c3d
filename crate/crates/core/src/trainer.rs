//! Training loop: batch gradients, adaptive-moment updates, linear LR decay,
//! per-step logging and resumable checkpoints.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::mix;
use crate::cache::EmbeddingCache;
use crate::checkpoint::{TrainState, TrainStateMeta};
use crate::dataset::Dataset;
use crate::encoder::{branch_backward, encode_input, DocInput};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::loss::{loss_and_grad, loss_value, LossItem, LossKind};
use crate::model::{Gradients, ModelConfig, ModelParams, ParamSet};
use crate::sampler::{pointwise_epoch_batches, project_sample, SamplerConfig};
use crate::scalar::Real;
use crate::scorer::{interaction_backward, interaction_forward, InteractionTrace, ScoreMode};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Fixed chunk count for parallel batch reduction, independent of the thread
/// pool so the summation order never changes.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub projects_per_batch: usize,
    pub lr0: f64,
    pub seed: u64,
    pub unsuitable_per_project: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Cmmd,
            epochs: 50,
            projects_per_batch: 64,
            lr0: 0.001,
            seed: 0,
            unsuitable_per_project: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub loss_kind: String,
}

/// A batch resolved down to frozen document inputs.
pub struct ResolvedCandidate<'a, F> {
    pub profile: &'a DocInput<F>,
    pub teacher: F,
    pub label: Option<bool>,
}

pub struct ResolvedProject<'a, F> {
    pub brief: &'a DocInput<F>,
    pub candidates: Vec<ResolvedCandidate<'a, F>>,
}

fn batch_items<F: Real>(batch: &[ResolvedProject<'_, F>], students: &[F]) -> Vec<LossItem<F>> {
    let mut items = Vec::with_capacity(students.len());
    let mut k = 0;
    for (pj, project) in batch.iter().enumerate() {
        for cand in &project.candidates {
            items.push(LossItem {
                project: pj,
                teacher: cand.teacher,
                label: cand.label,
                student: students[k],
            });
            k += 1;
        }
    }
    items
}

struct ProjectForward<F> {
    ep: Mat<F>,
    /// Per candidate: projected profile and the interaction trace.
    candidates: Vec<(Mat<F>, InteractionTrace<F>)>,
}

fn forward_projects<F: Real>(
    set: &ParamSet<F>,
    batch: &[ResolvedProject<'_, F>],
    dropout_seed: Option<u64>,
) -> Result<Vec<ProjectForward<F>>> {
    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let results: Vec<Result<Vec<ProjectForward<F>>>> = batch
        .par_chunks(chunk)
        .enumerate()
        .map(|(chunk_idx, projects)| {
            let base = chunk_idx * chunk;
            let mut out = Vec::with_capacity(projects.len());
            for (off, project) in projects.iter().enumerate() {
                let pj = base + off;
                let ep = encode_input(project.brief, &set.brief_branch)?.vectors;
                let mut candidates = Vec::with_capacity(project.candidates.len());
                for (ci, cand) in project.candidates.iter().enumerate() {
                    let ef = encode_input(cand.profile, &set.profile_branch)?.vectors;
                    let (_, trace) = match dropout_seed {
                        Some(seed) => {
                            let mut rng = ChaCha8Rng::seed_from_u64(mix(
                                seed,
                                mix(pj as u64, ci as u64),
                            ));
                            interaction_forward(&ep, &ef, set, &mut ScoreMode::Train(&mut rng))?
                        }
                        None => interaction_forward(&ep, &ef, set, &mut ScoreMode::Infer)?,
                    };
                    candidates.push((ef, trace));
                }
                out.push(ProjectForward { ep, candidates });
            }
            Ok(out)
        })
        .collect();
    let mut flat = Vec::with_capacity(batch.len());
    for r in results {
        flat.extend(r?);
    }
    Ok(flat)
}

/// Batch loss under the current parameters, dropout off. The forward-only
/// path used by finite-difference verification.
pub fn batch_loss<F: Real>(
    set: &ParamSet<F>,
    batch: &[ResolvedProject<'_, F>],
    kind: LossKind,
) -> Result<F> {
    let forwards = forward_projects(set, batch, None)?;
    let students: Vec<F> = forwards
        .iter()
        .flat_map(|p| p.candidates.iter().map(|(_, t)| t.score))
        .collect();
    loss_value(kind, &batch_items(batch, &students))
}

/// Loss and exact gradients for one batch. `dropout_seed` enables training
/// dropout (masks derived per pair); `None` keeps the pass deterministic for
/// gradient verification.
pub fn batch_gradient<F: Real>(
    config: &ModelConfig,
    set: &ParamSet<F>,
    batch: &[ResolvedProject<'_, F>],
    kind: LossKind,
    dropout_seed: Option<u64>,
) -> Result<(F, Gradients<F>)> {
    let forwards = forward_projects(set, batch, dropout_seed)?;
    let students: Vec<F> = forwards
        .iter()
        .flat_map(|p| p.candidates.iter().map(|(_, t)| t.score))
        .collect();
    let items = batch_items(batch, &students);
    let (loss, d_students) = loss_and_grad(kind, &items)?;

    // per-pair offsets into the flat student list
    let mut offsets = Vec::with_capacity(batch.len());
    let mut k = 0;
    for project in batch {
        offsets.push(k);
        k += project.candidates.len();
    }

    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let partials: Vec<Gradients<F>> = batch
        .par_chunks(chunk)
        .enumerate()
        .map(|(chunk_idx, projects)| {
            let base = chunk_idx * chunk;
            let mut grads = Gradients::zeros(config);
            for (off, project) in projects.iter().enumerate() {
                let pj = base + off;
                let fwd = &forwards[pj];
                let mut d_ep_total = Mat::zeros(fwd.ep.rows(), fwd.ep.cols());
                for (ci, cand) in project.candidates.iter().enumerate() {
                    let (ef, trace) = &fwd.candidates[ci];
                    let d_score = d_students[offsets[pj] + ci];
                    let (d_ep, d_ef) =
                        interaction_backward(&fwd.ep, ef, set, trace, d_score, &mut grads);
                    d_ep_total.add_assign(&d_ep);
                    branch_backward(
                        cand.profile,
                        &set.profile_branch,
                        &d_ef,
                        &mut grads.0.profile_branch,
                    );
                }
                branch_backward(
                    project.brief,
                    &set.brief_branch,
                    &d_ep_total,
                    &mut grads.0.brief_branch,
                );
            }
            grads
        })
        .collect();

    let mut total = Gradients::zeros(config);
    for partial in partials {
        total.0.add_assign(&partial.0);
    }
    Ok((loss, total))
}

fn adam_step<F: Real>(
    set: &mut ParamSet<F>,
    grads: &Gradients<F>,
    m: &mut ParamSet<F>,
    v: &mut ParamSet<F>,
    lr: f64,
    step_1based: u64,
) {
    let b1 = F::c(BETA1);
    let b2 = F::c(BETA2);
    let eps = F::c(ADAM_EPS);
    let lr = F::c(lr);
    let bc1 = F::one() - F::c(BETA1.powi(step_1based as i32));
    let bc2 = F::one() - F::c(BETA2.powi(step_1based as i32));
    let one = F::one();

    let g_list = grads.0.tensors();
    let mut m_list = m.tensors_mut();
    let mut v_list = v.tensors_mut();
    for (ti, p_view) in set.tensors_mut().into_iter().enumerate() {
        let g_view = g_list[ti].1;
        let m_view = &mut m_list[ti];
        let v_view = &mut v_list[ti];
        for i in 0..p_view.len() {
            let g = g_view[i];
            m_view[i] = b1 * m_view[i] + (one - b1) * g;
            v_view[i] = b2 * v_view[i] + (one - b2) * g * g;
            let m_hat = m_view[i] / bc1;
            let v_hat = v_view[i] / bc2;
            p_view[i] = p_view[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Materialize frozen inputs for every document, converting cached f32
/// backbone vectors into the training scalar type.
pub fn materialize_inputs<F: Real>(
    dataset: &Dataset,
    cache: &EmbeddingCache,
) -> Result<BTreeMap<String, DocInput<F>>> {
    let mut out = BTreeMap::new();
    for doc in &dataset.documents {
        let entry = cache.get(&doc.id)?;
        out.insert(doc.id.clone(), DocInput::from_cache_entry(&doc.id, entry));
    }
    Ok(out)
}

pub struct TrainOutcome<F> {
    pub model: ModelParams<F>,
    pub state: TrainState<F>,
    pub log: Vec<StepLog>,
}

/// Number of optimizer steps per epoch for the given dataset and config.
pub fn steps_per_epoch(dataset: &Dataset, cfg: &TrainConfig) -> usize {
    if cfg.loss.is_pointwise() {
        let per_batch = cfg.projects_per_batch * 8;
        dataset.interactions.len().div_ceil(per_batch).max(1)
    } else {
        dataset.project_ids().len().div_ceil(cfg.projects_per_batch).max(1)
    }
}

/// Run (or resume) training. Checkpoint state is epoch-aligned: resuming from
/// the saved state replays the remaining epochs exactly as an uninterrupted
/// run would, since each epoch's sampling derives from `(seed, epoch)`.
pub fn train<F: Real>(
    dataset: &Dataset,
    cache: &EmbeddingCache,
    mut model: ModelParams<F>,
    resume: Option<TrainState<F>>,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome<F>> {
    if dataset.interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inputs = materialize_inputs::<F>(dataset, cache)?;
    let config = model.config.clone();
    let per_epoch = steps_per_epoch(dataset, cfg) as u64;
    let total_steps = per_epoch * cfg.epochs as u64;

    let (mut m, mut v, mut step, start_epoch) = match resume {
        Some(state) => {
            let epoch = state.meta.epoch + 1;
            (state.m, state.v, state.meta.step, epoch)
        }
        None => (ParamSet::zeros(&config), ParamSet::zeros(&config), 0u64, 0usize),
    };

    let sampler = SamplerConfig {
        projects_per_batch: cfg.projects_per_batch,
        unsuitable_per_project: cfg.unsuitable_per_project,
    };
    let mut log = Vec::new();

    for epoch in start_epoch..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5eed_0000 + epoch as u64));
        let batches: Vec<Vec<(String, Vec<crate::sampler::Candidate>)>> = if cfg.loss.is_pointwise()
        {
            pointwise_epoch_batches(dataset, &mut rng, cfg.projects_per_batch * 8)
                .into_iter()
                .map(|chunk| {
                    chunk
                        .into_iter()
                        .map(|rec_idx| {
                            let rec = &dataset.interactions[rec_idx];
                            (
                                rec.project_id.clone(),
                                vec![crate::sampler::Candidate {
                                    profile_id: rec.profile_id.clone(),
                                    teacher_score: rec.teacher_score,
                                    label: rec.label.map(|l| l == 1),
                                    unsuitable: false,
                                }],
                            )
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut project_ids: Vec<&String> = dataset.project_ids().iter().collect();
            project_ids.shuffle(&mut rng);
            let mut out = Vec::new();
            for chunk in project_ids.chunks(cfg.projects_per_batch) {
                let mut batch = Vec::with_capacity(chunk.len());
                for pid in chunk {
                    let sample =
                        project_sample(dataset, pid, &mut rng, sampler.unsuitable_per_project)?;
                    batch.push((sample.project_id, sample.candidates));
                }
                out.push(batch);
            }
            out
        };

        for batch in batches {
            let mut resolved: Vec<ResolvedProject<'_, F>> = Vec::with_capacity(batch.len());
            for (project_id, candidates) in &batch {
                let brief = inputs
                    .get(project_id)
                    .ok_or_else(|| Error::CacheMiss(project_id.clone()))?;
                let mut cands = Vec::with_capacity(candidates.len());
                let mut teacher_mass = 0.0;
                for c in candidates {
                    let profile = inputs
                        .get(&c.profile_id)
                        .ok_or_else(|| Error::CacheMiss(c.profile_id.clone()))?;
                    teacher_mass += c.teacher_score;
                    cands.push(ResolvedCandidate {
                        profile,
                        teacher: F::c(c.teacher_score),
                        label: c.label,
                    });
                }
                // list-wise normalization needs positive teacher mass
                if cfg.loss == LossKind::ClidMse && teacher_mass <= 0.0 {
                    continue;
                }
                if !cands.is_empty() {
                    resolved.push(ResolvedProject { brief, candidates: cands });
                }
            }
            if resolved.is_empty() {
                continue;
            }

            let lr = cfg.lr0 * (1.0 - step as f64 / total_steps as f64);
            let dropout_seed = Some(mix(cfg.seed, 0xd20_0000 + step));
            let (loss, grads) =
                batch_gradient(&config, &model.set, &resolved, cfg.loss, dropout_seed)?;
            let loss_f64 = loss.as_f64();
            if !loss_f64.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!(
                        "loss {loss_f64}, grad norm {:.3e}, params finite: {}",
                        grads.l2_norm(),
                        model.set.is_finite()
                    ),
                });
            }
            adam_step(&mut model.set, &grads, &mut m, &mut v, lr, step + 1);
            step += 1;

            let entry = StepLog {
                epoch,
                step,
                lr,
                loss: loss_f64,
                loss_kind: cfg.loss.name().to_string(),
            };
            on_step(&entry);
            log.push(entry);
        }
    }

    let state = TrainState {
        meta: TrainStateMeta {
            step,
            total_steps,
            epoch: cfg.epochs.saturating_sub(1),
            lr0: cfg.lr0,
            loss_kind: cfg.loss,
            seed: cfg.seed,
        },
        m,
        v,
    };
    Ok(TrainOutcome { model, state, log })
}
