//! Batch construction for training.
//!
//! Pair- and list-wise batches hold, per sampled project, at most one
//! candidate per discrete teacher level plus synthetic unsuitable profiles
//! (no shared job category, teacher score 0). Point-wise batches sample
//! records independently.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rubric::nearest_level_index;

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub projects_per_batch: usize,
    pub unsuitable_per_project: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { projects_per_batch: 64, unsuitable_per_project: 2 }
    }
}

/// One candidate inside a project's batch entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub profile_id: String,
    pub teacher_score: f64,
    pub label: Option<bool>,
    /// True for batch-time synthetic unsuitable profiles.
    pub unsuitable: bool,
}

#[derive(Debug, Clone)]
pub struct ProjectSample {
    pub project_id: String,
    pub candidates: Vec<Candidate>,
}

/// Sample `projects_per_batch` distinct projects and build their candidate
/// lists: one record per covered teacher level, plus unsuitable fillers.
pub fn sample_batch(
    dataset: &Dataset,
    rng: &mut ChaCha8Rng,
    config: &SamplerConfig,
) -> Result<Vec<ProjectSample>> {
    let projects = dataset.project_ids();
    if projects.len() < config.projects_per_batch {
        return Err(Error::InsufficientProjects {
            needed: config.projects_per_batch,
            have: projects.len(),
        });
    }
    let mut chosen: Vec<&String> = projects.iter().collect();
    chosen.shuffle(rng);
    chosen.truncate(config.projects_per_batch);
    chosen
        .into_iter()
        .map(|pid| project_sample(dataset, pid, rng, config.unsuitable_per_project))
        .collect()
}

/// Build one project's batch entry.
pub fn project_sample(
    dataset: &Dataset,
    project_id: &str,
    rng: &mut ChaCha8Rng,
    unsuitable_per_project: usize,
) -> Result<ProjectSample> {
    let mut per_level: [Vec<usize>; 6] = Default::default();
    for &rec_idx in dataset.records_for_project(project_id) {
        let rec = &dataset.interactions[rec_idx];
        per_level[nearest_level_index(rec.teacher_score)].push(rec_idx);
    }
    let mut candidates = Vec::new();
    for bucket in &per_level {
        if bucket.is_empty() {
            continue;
        }
        let rec = &dataset.interactions[bucket[rng.gen_range(0..bucket.len())]];
        candidates.push(Candidate {
            profile_id: rec.profile_id.clone(),
            teacher_score: rec.teacher_score,
            label: rec.label.map(|l| l == 1),
            unsuitable: false,
        });
    }
    for _ in 0..unsuitable_per_project {
        if let Some(profile_id) = sample_unsuitable(dataset, project_id, rng) {
            candidates.push(Candidate {
                profile_id,
                teacher_score: 0.0,
                label: Some(false),
                unsuitable: true,
            });
        }
    }
    Ok(ProjectSample { project_id: project_id.to_string(), candidates })
}

/// Uniformly pick a profile sharing no job category with the project.
pub fn sample_unsuitable(
    dataset: &Dataset,
    project_id: &str,
    rng: &mut ChaCha8Rng,
) -> Option<String> {
    let project_cats = dataset.project_categories(project_id);
    let profiles = dataset.profile_ids();
    if profiles.is_empty() {
        return None;
    }
    // rejection sampling stays uniform over the qualifying set; fall back to
    // a scan if the pool is tiny
    for _ in 0..64 {
        let pick = &profiles[rng.gen_range(0..profiles.len())];
        if dataset.profile_shares_no_category(pick, &project_cats) {
            return Some(pick.clone());
        }
    }
    let qualifying: Vec<&String> = profiles
        .iter()
        .filter(|p| dataset.profile_shares_no_category(p, &project_cats))
        .collect();
    if qualifying.is_empty() {
        None
    } else {
        Some(qualifying[rng.gen_range(0..qualifying.len())].clone())
    }
}

/// Point-wise sampling: a within-epoch shuffled partition of all record
/// indices, in batches sized like the pair-wise ones.
pub fn pointwise_epoch_batches(
    dataset: &Dataset,
    rng: &mut ChaCha8Rng,
    records_per_batch: usize,
) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..dataset.interactions.len()).collect();
    idx.shuffle(rng);
    idx.chunks(records_per_batch.max(1)).map(<[usize]>::to_vec).collect()
}
