//! Relevancy, ranking and calibration metrics, plus sliced and
//! out-of-distribution evaluation reports.
//!
//! Relevance is `teacher > 0.5`; predicted relevance thresholds the clamped
//! student score the same way. Ranking within a project orders by descending
//! student score with ties broken by ascending profile id.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

pub const RELEVANCE_THRESHOLD: f64 = 0.5;

/// One evaluated (project, profile) pair: calibrated teacher score and raw
/// student score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub project_id: String,
    pub profile_id: String,
    pub teacher: f64,
    pub student: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl ScoredPair {
    fn relevant(&self) -> bool {
        self.teacher > RELEVANCE_THRESHOLD
    }

    fn predicted_relevant(&self) -> bool {
        self.student.clamp(0.0, 1.0) > RELEVANCE_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdcgGains {
    Graded,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub pairs: usize,
    pub projects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub specificity: f64,
    pub r_precision: f64,
    pub nr_false_omission: f64,
    pub map: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub mae: f64,
    pub delta_mean: f64,
    pub delta_iqr: f64,
    pub wasserstein1: f64,
    pub support: Support,
}

fn group_by_project(pairs: &[ScoredPair]) -> BTreeMap<&str, Vec<&ScoredPair>> {
    let mut groups: BTreeMap<&str, Vec<&ScoredPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.project_id.as_str()).or_default().push(p);
    }
    groups
}

/// Project candidates ranked by descending student score, ids ascending on
/// ties.
fn ranked<'a>(group: &[&'a ScoredPair]) -> Vec<&'a ScoredPair> {
    let mut v: Vec<&ScoredPair> = group.to_vec();
    v.sort_by(|a, b| {
        b.student
            .partial_cmp(&a.student)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.profile_id.cmp(&b.profile_id))
    });
    v
}

/// Recall, specificity, R-Precision, non-relevant false omission rate, mAP.
pub fn relevancy_metrics(pairs: &[ScoredPair]) -> Result<(f64, f64, f64, f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for p in pairs {
        match (p.relevant(), p.predicted_relevant()) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let specificity = if tn + fp > 0 { tn as f64 / (tn + fp) as f64 } else { 0.0 };

    let mut rp_sum = 0.0;
    let mut rp_n = 0usize;
    let mut ro_sum = 0.0;
    let mut ro_n = 0usize;
    let mut ap_sum = 0.0;
    let mut ap_n = 0usize;

    for (_, group) in group_by_project(pairs) {
        let order = ranked(&group);
        let k_rel = order.iter().filter(|p| p.relevant()).count();
        let k_non = order.len() - k_rel;

        // precision among the top-k, k = number of relevant candidates
        if k_rel > 0 {
            let hits = order[..k_rel].iter().filter(|p| p.relevant()).count();
            rp_sum += hits as f64 / k_rel as f64;
            rp_n += 1;
        }
        // fraction of non-relevant among the bottom-k' ranks
        if k_non > 0 {
            let tail = &order[order.len() - k_non..];
            let hits = tail.iter().filter(|p| !p.relevant()).count();
            ro_sum += hits as f64 / k_non as f64;
            ro_n += 1;
        }
        // average precision with binary relevance
        if k_rel > 0 {
            let mut seen = 0usize;
            let mut acc = 0.0;
            for (rank0, p) in order.iter().enumerate() {
                if p.relevant() {
                    seen += 1;
                    acc += seen as f64 / (rank0 + 1) as f64;
                }
            }
            ap_sum += acc / k_rel as f64;
            ap_n += 1;
        }
    }

    let rp = if rp_n > 0 { rp_sum / rp_n as f64 } else { 0.0 };
    let ro = if ro_n > 0 { ro_sum / ro_n as f64 } else { 0.0 };
    let map = if ap_n > 0 { ap_sum / ap_n as f64 } else { 0.0 };
    Ok((recall, specificity, rp, ro, map))
}

/// Mean reciprocal rank and NDCG (macro-averaged per project).
pub fn ranking_metrics(pairs: &[ScoredPair], gains: NdcgGains) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rr_sum = 0.0;
    let mut rr_n = 0usize;
    let mut ndcg_sum = 0.0;
    let mut ndcg_n = 0usize;

    for (_, group) in group_by_project(pairs) {
        let order = ranked(&group);
        let rr = order
            .iter()
            .position(|p| p.relevant())
            .map_or(0.0, |i| 1.0 / (i + 1) as f64);
        rr_sum += rr;
        rr_n += 1;

        let gain = |p: &ScoredPair| -> f64 {
            match gains {
                NdcgGains::Graded => p.teacher,
                NdcgGains::Binary => {
                    if p.relevant() {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        };
        let dcg: f64 = order
            .iter()
            .enumerate()
            .map(|(i, p)| gain(p) / ((i + 2) as f64).log2())
            .sum();
        let mut ideal: Vec<f64> = order.iter().map(|p| gain(p)).collect();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let idcg: f64 =
            ideal.iter().enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum();
        if idcg > 0.0 {
            ndcg_sum += dcg / idcg;
            ndcg_n += 1;
        }
    }
    let mrr = rr_sum / rr_n as f64;
    let ndcg = if ndcg_n > 0 { ndcg_sum / ndcg_n as f64 } else { 0.0 };
    Ok((mrr, ndcg))
}

/// Quantile with linear interpolation between order statistics
/// (h = (n+1)·p, clamped to the sample range).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n as f64 + 1.0) * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize; // 1-based
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

fn iqr(sorted: &[f64]) -> f64 {
    quantile(sorted, 0.75) - quantile(sorted, 0.25)
}

/// MAE, |Δmean|, |ΔIQR| and the 1-Wasserstein distance between the clamped
/// student scores and the teacher scores.
pub fn calibration_metrics(pairs: &[ScoredPair]) -> Result<(f64, f64, f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::EmptyDataset);
    }
    let n = pairs.len() as f64;
    let students: Vec<f64> = pairs.iter().map(|p| p.student.clamp(0.0, 1.0)).collect();
    let teachers: Vec<f64> = pairs.iter().map(|p| p.teacher).collect();

    let mae = students
        .iter()
        .zip(&teachers)
        .map(|(s, t)| (s - t).abs())
        .sum::<f64>()
        / n;
    let delta_mean =
        (students.iter().sum::<f64>() / n - teachers.iter().sum::<f64>() / n).abs();

    let mut s_sorted = students;
    let mut t_sorted = teachers;
    s_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let delta_iqr = (iqr(&s_sorted) - iqr(&t_sorted)).abs();

    // equal sample counts by construction, so the sorted-difference form of
    // the transport cost is exact
    let w1 = s_sorted
        .iter()
        .zip(&t_sorted)
        .map(|(s, t)| (s - t).abs())
        .sum::<f64>()
        / n;
    Ok((mae, delta_mean, delta_iqr, w1))
}

/// The full metric set over one pair collection.
pub fn compute_report(pairs: &[ScoredPair], gains: NdcgGains) -> Result<MetricsReport> {
    let (recall, specificity, r_precision, nr_false_omission, map) = relevancy_metrics(pairs)?;
    let (mrr, ndcg) = ranking_metrics(pairs, gains)?;
    let (mae, delta_mean, delta_iqr, wasserstein1) = calibration_metrics(pairs)?;
    Ok(MetricsReport {
        recall,
        specificity,
        r_precision,
        nr_false_omission,
        map,
        mrr,
        ndcg,
        mae,
        delta_mean,
        delta_iqr,
        wasserstein1,
        support: Support { pairs: pairs.len(), projects: group_by_project(pairs).len() },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlicedReport {
    pub groups: BTreeMap<String, MetricsReport>,
    /// Largest absolute recall difference between any two groups.
    pub max_recall_gap: f64,
    /// Pairwise |recall_a - recall_b| keyed "groupA|groupB".
    pub recall_gaps: BTreeMap<String, f64>,
}

/// Group pairs by a metadata key and evaluate each group in full.
pub fn sliced_evaluate(
    pairs: &[ScoredPair],
    slice_key: &str,
    gains: NdcgGains,
) -> Result<SlicedReport> {
    let mut grouped: BTreeMap<String, Vec<ScoredPair>> = BTreeMap::new();
    for p in pairs {
        if let Some(value) = p.metadata.get(slice_key) {
            grouped.entry(value.clone()).or_default().push(p.clone());
        }
    }
    if grouped.is_empty() {
        return Err(Error::UnknownSliceKey(slice_key.to_string()));
    }
    let mut groups = BTreeMap::new();
    for (value, group_pairs) in &grouped {
        groups.insert(value.clone(), compute_report(group_pairs, gains)?);
    }
    let names: Vec<&String> = groups.keys().collect();
    let mut recall_gaps = BTreeMap::new();
    let mut max_gap: f64 = 0.0;
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let gap = (groups[names[i]].recall - groups[names[j]].recall).abs();
            recall_gaps.insert(format!("{}|{}", names[i], names[j]), gap);
            max_gap = max_gap.max(gap);
        }
    }
    Ok(SlicedReport { groups, max_recall_gap: max_gap, recall_gaps })
}

/// Metadata key marking out-of-distribution augmentation rows.
pub const OOD_KEY: &str = "ood";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OodReport {
    pub base: MetricsReport,
    pub with_average: MetricsReport,
    pub with_unsuitable: MetricsReport,
}

/// Evaluate the base pairs and the base enriched with each OOD tag.
pub fn ood_evaluate(pairs: &[ScoredPair], gains: NdcgGains) -> Result<OodReport> {
    let base: Vec<ScoredPair> =
        pairs.iter().filter(|p| !p.metadata.contains_key(OOD_KEY)).cloned().collect();
    let mut with_average = base.clone();
    let mut with_unsuitable = base.clone();
    for p in pairs {
        match p.metadata.get(OOD_KEY).map(String::as_str) {
            Some("average") => with_average.push(p.clone()),
            Some("unsuitable") => with_unsuitable.push(p.clone()),
            _ => {}
        }
    }
    Ok(OodReport {
        base: compute_report(&base, gains)?,
        with_average: compute_report(&with_average, gains)?,
        with_unsuitable: compute_report(&with_unsuitable, gains)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub overall: MetricsReport,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slices: BTreeMap<String, SlicedReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodReport>,
}

impl ReportFile {
    pub fn new(overall: MetricsReport) -> Self {
        ReportFile { schema_version: SCHEMA_VERSION, overall, slices: BTreeMap::new(), ood: None }
    }
}

/// Export `(teacher, student, error)` triples for box/joint plots.
pub fn export_plot_data(path: &Path, pairs: &[ScoredPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "teacher,student,error")?;
    for p in pairs {
        let s = p.student.clamp(0.0, 1.0);
        writeln!(w, "{},{},{}", p.teacher, s, s - p.teacher)?;
    }
    w.flush()?;
    Ok(())
}
