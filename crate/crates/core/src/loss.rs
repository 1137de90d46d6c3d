//! Distillation objectives: point-wise MSE, labeled and relaxed margin MSE,
//! the combined calibrated margin loss, and list-wise calibrated distillation.
//!
//! Each loss also exposes its analytic derivative w.r.t. the student scores
//! so one backward pass through the scorer serves every objective.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Floor applied to raw student scores before list-wise normalization; the
/// final MLP layer has no activation so raw scores may be non-positive.
pub const CLID_SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    MarginMseLabeled,
    MarginMseRelaxed,
    Cmmd,
    ClidMse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::MarginMseLabeled => "margin_mse_labeled",
            LossKind::MarginMseRelaxed => "margin_mse_relaxed",
            LossKind::Cmmd => "cmmd",
            LossKind::ClidMse => "clid_mse",
        }
    }

    /// Point-wise losses sample records independently; the others need
    /// project-grouped candidate lists.
    pub fn is_pointwise(self) -> bool {
        matches!(self, LossKind::Mse)
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "margin_mse_labeled" => Ok(LossKind::MarginMseLabeled),
            "margin_mse_relaxed" => Ok(LossKind::MarginMseRelaxed),
            "cmmd" => Ok(LossKind::Cmmd),
            "clid_mse" => Ok(LossKind::ClidMse),
            other => Err(format!(
                "unknown loss {other:?} (expected mse, margin_mse_labeled, margin_mse_relaxed, cmmd, clid_mse)"
            )),
        }
    }
}

/// One scored record inside a batch. `project` groups candidates of the same
/// project; `label` is the optional binary relevance used by the labeled
/// margin loss.
#[derive(Debug, Clone, Copy)]
pub struct LossItem<F> {
    pub project: usize,
    pub teacher: F,
    pub label: Option<bool>,
    pub student: F,
}

fn group_by_project<F: Real>(items: &[LossItem<F>]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        groups.entry(it.project).or_default().push(i);
    }
    groups
}

/// Mean over the batch of `(teacher - student)²`.
pub fn loss_mse<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    if items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = F::c(items.len() as f64);
    let mut acc = F::zero();
    for it in items {
        let d = it.teacher - it.student;
        acc += d * d;
    }
    Ok(acc / n)
}

fn mse_grad<F: Real>(items: &[LossItem<F>], grad: &mut [F]) {
    let inv_n = F::one() / F::c(items.len() as f64);
    let two = F::c(2.0);
    for (g, it) in grad.iter_mut().zip(items) {
        *g += two * (it.student - it.teacher) * inv_n;
    }
}

/// Margin MSE over labeled pairs: relevant × non-relevant within a project.
pub fn loss_margin_mse_labeled<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    margin_labeled_inner(items, None)
}

fn margin_labeled_inner<F: Real>(items: &[LossItem<F>], mut grad: Option<&mut [F]>) -> Result<F> {
    if items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = F::zero();
    let mut pairs = 0usize;
    let mut contribs: Vec<(usize, usize, F)> = Vec::new();
    for (_, idxs) in group_by_project(items) {
        let pos: Vec<usize> =
            idxs.iter().copied().filter(|&i| items[i].label == Some(true)).collect();
        let neg: Vec<usize> =
            idxs.iter().copied().filter(|&i| items[i].label == Some(false)).collect();
        for &a in &pos {
            for &b in &neg {
                let dt = items[a].teacher - items[b].teacher;
                let ds = items[a].student - items[b].student;
                let diff = dt - ds;
                acc += diff * diff;
                pairs += 1;
                if grad.is_some() {
                    contribs.push((a, b, diff));
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::NoValidPairs);
    }
    let inv_n = F::one() / F::c(pairs as f64);
    if let Some(grad) = grad.as_deref_mut() {
        let two = F::c(2.0);
        for (a, b, diff) in contribs {
            // d/ds_a (Δt - (s_a - s_b))² = -2 (Δt - Δs)
            grad[a] -= two * diff * inv_n;
            grad[b] += two * diff * inv_n;
        }
    }
    Ok(acc * inv_n)
}

/// Margin MSE over all ordered candidate pairs of a project, no labels needed.
pub fn loss_margin_mse_relaxed<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    margin_relaxed_inner(items, None)
}

fn margin_relaxed_inner<F: Real>(items: &[LossItem<F>], mut grad: Option<&mut [F]>) -> Result<F> {
    if items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = F::zero();
    let mut pairs = 0usize;
    let mut contribs: Vec<(usize, usize, F)> = Vec::new();
    for (_, idxs) in group_by_project(items) {
        for &a in &idxs {
            for &b in &idxs {
                if a == b {
                    continue;
                }
                let dt = items[a].teacher - items[b].teacher;
                let ds = items[a].student - items[b].student;
                let diff = dt - ds;
                acc += diff * diff;
                pairs += 1;
                if grad.is_some() {
                    contribs.push((a, b, diff));
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::NoValidPairs);
    }
    let inv_n = F::one() / F::c(pairs as f64);
    if let Some(grad) = grad.as_deref_mut() {
        let two = F::c(2.0);
        for (a, b, diff) in contribs {
            grad[a] -= two * diff * inv_n;
            grad[b] += two * diff * inv_n;
        }
    }
    Ok(acc * inv_n)
}

/// Calibrated margin distillation: relaxed margin MSE plus point-wise MSE.
pub fn loss_cmmd<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    Ok(loss_margin_mse_relaxed(items)? + loss_mse(items)?)
}

/// List-wise calibrated distillation: cross-entropy between sum-normalized
/// teacher and student score distributions, averaged over projects.
pub fn loss_clid<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    clid_inner(items, None)
}

fn clid_inner<F: Real>(items: &[LossItem<F>], mut grad: Option<&mut [F]>) -> Result<F> {
    if items.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let floor = F::c(CLID_SCORE_FLOOR);
    let groups = group_by_project(items);
    let n_projects = F::c(groups.len() as f64);
    let mut total = F::zero();
    for (project, idxs) in groups {
        let teacher_sum: F = idxs.iter().map(|&i| items[i].teacher).sum();
        if teacher_sum <= F::zero() {
            return Err(Error::DegenerateProject(format!("group {project}")));
        }
        let clamped: Vec<F> = idxs.iter().map(|&i| items[i].student.max(floor)).collect();
        let z: F = clamped.iter().copied().sum();
        let inv_count = F::one() / F::c(idxs.len() as f64);
        let mut project_loss = F::zero();
        for (&i, &c) in idxs.iter().zip(&clamped) {
            let t_hat = items[i].teacher / teacher_sum;
            if t_hat > F::zero() {
                // -t̂ · ln(ŝ) with ŝ = c/z; 0·ln(x) ≡ 0
                project_loss -= t_hat * (c / z).ln();
            }
        }
        project_loss = project_loss * inv_count;
        total += project_loss;

        if let Some(grad) = grad.as_deref_mut() {
            // d/dc_k of -(1/n)[Σ t̂ ln c - ln z] = -(1/n)(t̂_k/c_k - 1/z);
            // clamp gates the flow back to the raw score.
            for (&i, &c) in idxs.iter().zip(&clamped) {
                if items[i].student < floor {
                    continue;
                }
                let t_hat = items[i].teacher / teacher_sum;
                let d = -(inv_count) * (t_hat / c - F::one() / z) / n_projects;
                grad[i] += d;
            }
        }
    }
    Ok(total / n_projects)
}

/// CLID plus point-wise MSE.
pub fn loss_clid_mse<F: Real>(items: &[LossItem<F>]) -> Result<F> {
    Ok(loss_clid(items)? + loss_mse(items)?)
}

/// Loss value for the selected objective.
pub fn loss_value<F: Real>(kind: LossKind, items: &[LossItem<F>]) -> Result<F> {
    match kind {
        LossKind::Mse => loss_mse(items),
        LossKind::MarginMseLabeled => loss_margin_mse_labeled(items),
        LossKind::MarginMseRelaxed => loss_margin_mse_relaxed(items),
        LossKind::Cmmd => loss_cmmd(items),
        LossKind::ClidMse => loss_clid_mse(items),
    }
}

/// Loss value plus its derivative w.r.t. every student score.
pub fn loss_and_grad<F: Real>(kind: LossKind, items: &[LossItem<F>]) -> Result<(F, Vec<F>)> {
    let mut grad = vec![F::zero(); items.len()];
    let value = match kind {
        LossKind::Mse => {
            let v = loss_mse(items)?;
            mse_grad(items, &mut grad);
            v
        }
        LossKind::MarginMseLabeled => margin_labeled_inner(items, Some(&mut grad))?,
        LossKind::MarginMseRelaxed => margin_relaxed_inner(items, Some(&mut grad))?,
        LossKind::Cmmd => {
            let v = margin_relaxed_inner(items, Some(&mut grad))? + loss_mse(items)?;
            mse_grad(items, &mut grad);
            v
        }
        LossKind::ClidMse => {
            let v = clid_inner(items, Some(&mut grad))? + loss_mse(items)?;
            mse_grad(items, &mut grad);
            v
        }
    };
    Ok((value, grad))
}
