//! Interaction records and the in-memory dataset index used by training and
//! evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::document::{Document, DocKind};
use crate::error::{Error, Result};

/// One (project, profile) supervision record. `teacher_score` is the
/// calibrated score in [0,1]; `label` is optional binary relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub project_id: String,
    pub profile_id: String,
    pub teacher_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl InteractionRecord {
    pub fn validate(&self, line: usize) -> Result<()> {
        if !self.teacher_score.is_finite() || !(0.0..=1.0).contains(&self.teacher_score) {
            return Err(Error::MalformedRecord {
                line,
                reason: format!("teacher_score {} outside [0,1]", self.teacher_score),
            });
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("label {l} is not binary"),
                });
            }
        }
        Ok(())
    }
}

pub fn write_interactions_jsonl(path: &Path, records: &[InteractionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_interactions_jsonl(path: &Path) -> Result<Vec<InteractionRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InteractionRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        rec.validate(lineno + 1)?;
        out.push(rec);
    }
    Ok(out)
}

/// Documents plus interactions, indexed for sampling and scoring.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub documents: Vec<Document>,
    pub interactions: Vec<InteractionRecord>,
    doc_index: BTreeMap<String, usize>,
    by_project: BTreeMap<String, Vec<usize>>,
    /// Profile id -> its category set (from metadata `category`/`categories`).
    profile_categories: BTreeMap<String, BTreeSet<String>>,
    profile_ids: Vec<String>,
    project_ids: Vec<String>,
}

impl Dataset {
    pub fn new(documents: Vec<Document>, interactions: Vec<InteractionRecord>) -> Self {
        let mut doc_index = BTreeMap::new();
        let mut profile_categories = BTreeMap::new();
        let mut profile_ids = Vec::new();
        for (i, doc) in documents.iter().enumerate() {
            doc_index.insert(doc.id.clone(), i);
            if doc.kind == DocKind::Profile {
                profile_ids.push(doc.id.clone());
                profile_categories.insert(doc.id.clone(), doc_categories(doc));
            }
        }
        let mut by_project: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rec) in interactions.iter().enumerate() {
            by_project.entry(rec.project_id.clone()).or_default().push(i);
        }
        let project_ids = by_project.keys().cloned().collect();
        Dataset {
            documents,
            interactions,
            doc_index,
            by_project,
            profile_categories,
            profile_ids,
            project_ids,
        }
    }

    pub fn load(docs_path: &Path, interactions_path: &Path) -> Result<Self> {
        let brief_vocab = crate::document::default_vocab(DocKind::Brief);
        let profile_vocab = crate::document::default_vocab(DocKind::Profile);
        let documents =
            crate::document::read_documents_jsonl(docs_path, &brief_vocab, &profile_vocab)?;
        let interactions = read_interactions_jsonl(interactions_path)?;
        Ok(Dataset::new(documents, interactions))
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.documents[i])
    }

    pub fn project_ids(&self) -> &[String] {
        &self.project_ids
    }

    pub fn profile_ids(&self) -> &[String] {
        &self.profile_ids
    }

    pub fn records_for_project(&self, project_id: &str) -> &[usize] {
        self.by_project.get(project_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn project_categories(&self, project_id: &str) -> BTreeSet<String> {
        self.document(project_id).map(doc_categories).unwrap_or_default()
    }

    pub fn profile_shares_no_category(&self, profile_id: &str, project_cats: &BTreeSet<String>) -> bool {
        match self.profile_categories.get(profile_id) {
            Some(cats) => cats.is_disjoint(project_cats),
            None => false,
        }
    }
}

fn doc_categories(doc: &Document) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if let Some(c) = doc.metadata.get("category") {
        out.insert(c.clone());
    }
    if let Some(cs) = doc.metadata.get("categories") {
        for c in cs.split(',') {
            let c = c.trim();
            if !c.is_empty() {
                out.insert(c.to_string());
            }
        }
    }
    out
}

/// Import externally produced teacher scores: validate, merge into `existing`
/// with last-write-wins on duplicate (project, profile) pairs.
/// Returns the merged records and the number of overwritten duplicates.
pub fn import_teacher_scores(
    path: &Path,
    existing: Vec<InteractionRecord>,
) -> Result<(Vec<InteractionRecord>, usize)> {
    let incoming = read_interactions_jsonl(path)?;
    let mut merged: Vec<InteractionRecord> = existing;
    let mut index: BTreeMap<(String, String), usize> = merged
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.project_id.clone(), r.profile_id.clone()), i))
        .collect();
    let mut warnings = 0usize;
    for rec in incoming {
        let key = (rec.project_id.clone(), rec.profile_id.clone());
        match index.get(&key) {
            Some(&i) => {
                merged[i] = rec;
                warnings += 1;
            }
            None => {
                index.insert(key, merged.len());
                merged.push(rec);
            }
        }
    }
    Ok((merged, warnings))
}
