//! Encoder branches: frozen backbone vectors plus a learned categorical
//! section encoding, projected into the shared latent space.
//!
//! `e = W · (backbone(u) + categorical[section]) + b`

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::cache::CacheEntry;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Mat};
use crate::scalar::Real;

/// Trainable per-branch parameters. `w` is latent×dim, `categorical` holds one
/// dim-wide row per section type of the branch's document kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchParams<F> {
    pub w: Mat<F>,
    pub b: Vec<F>,
    pub categorical: Mat<F>,
}

impl<F: Real> BranchParams<F> {
    pub fn zeros(latent: usize, dim: usize, sections: usize) -> Self {
        BranchParams {
            w: Mat::zeros(latent, dim),
            b: vec![F::zero(); latent],
            categorical: Mat::zeros(sections, dim),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn backbone_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Frozen per-document input to the trainable pipeline: backbone vectors as
/// rows, with the parallel section-id list.
#[derive(Debug, Clone)]
pub struct DocInput<F> {
    pub doc_id: String,
    pub backbone: Mat<F>,
    pub sections: Vec<u16>,
}

impl<F: Real> DocInput<F> {
    pub fn from_cache_entry(doc_id: &str, entry: &CacheEntry) -> Self {
        let sections = entry.iter().map(|(s, _)| *s).collect();
        let rows = entry
            .iter()
            .map(|(_, v)| v.iter().map(|&x| F::c(f64::from(x))).collect())
            .collect();
        DocInput { doc_id: doc_id.to_string(), backbone: Mat::from_rows(rows), sections }
    }

    pub fn from_document(doc: &Document, backend: &dyn Backbone) -> Result<Self> {
        let mut rows = Vec::with_capacity(doc.utterances.len());
        let mut sections = Vec::with_capacity(doc.utterances.len());
        for u in &doc.utterances {
            let v = backend.encode(&u.text)?;
            rows.push(v.into_iter().map(|x| F::c(f64::from(x))).collect());
            sections.push(u.section);
        }
        Ok(DocInput { doc_id: doc.id.clone(), backbone: Mat::from_rows(rows), sections })
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }
}

/// A document projected into the latent space: one row per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence<F> {
    pub doc_id: String,
    pub vectors: Mat<F>,
    pub section_ids: Vec<u16>,
}

/// Project a frozen document input through a branch.
pub fn encode_input<F: Real>(input: &DocInput<F>, branch: &BranchParams<F>) -> Result<EmbeddingSequence<F>> {
    if input.is_empty() {
        return Err(Error::EmptySequence);
    }
    let dim = branch.backbone_dim();
    if input.backbone.cols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: input.backbone.cols() });
    }
    let latent = branch.latent_dim();
    let mut out = Mat::zeros(input.len(), latent);
    let mut u = vec![F::zero(); dim];
    for i in 0..input.len() {
        let sec = input.sections[i] as usize;
        if sec >= branch.categorical.rows() {
            return Err(Error::MissingCategoricalRow(input.sections[i]));
        }
        let cat = branch.categorical.row(sec);
        for ((ud, &bd), &cd) in u.iter_mut().zip(input.backbone.row(i)).zip(cat) {
            *ud = bd + cd;
        }
        let e = out.row_mut(i);
        for (j, ej) in e.iter_mut().enumerate() {
            *ej = crate::linalg::dot(branch.w.row(j), &u) + branch.b[j];
        }
    }
    Ok(EmbeddingSequence {
        doc_id: input.doc_id.clone(),
        vectors: out,
        section_ids: input.sections.clone(),
    })
}

/// Encode a document by running the backbone per utterance, then projecting.
pub fn encode_document<F: Real>(
    doc: &Document,
    backend: &dyn Backbone,
    branch: &BranchParams<F>,
) -> Result<EmbeddingSequence<F>> {
    let input = DocInput::from_document(doc, backend)?;
    encode_input(&input, branch)
}

/// Accumulate branch-parameter gradients given `d_embed`, the gradient of the
/// loss w.r.t. the branch's output rows. The backbone input is frozen so no
/// gradient flows past it.
pub fn branch_backward<F: Real>(
    input: &DocInput<F>,
    branch: &BranchParams<F>,
    d_embed: &Mat<F>,
    grads: &mut BranchParams<F>,
) {
    debug_assert_eq!(d_embed.rows(), input.len());
    let dim = branch.backbone_dim();
    let mut u = vec![F::zero(); dim];
    for i in 0..input.len() {
        let sec = input.sections[i] as usize;
        let cat = branch.categorical.row(sec);
        for ((ud, &bd), &cd) in u.iter_mut().zip(input.backbone.row(i)).zip(cat) {
            *ud = bd + cd;
        }
        let de = d_embed.row(i);
        for (j, &dej) in de.iter().enumerate() {
            // dW[j] += de_j * u ; db[j] += de_j
            axpy(dej, &u, grads.w.row_mut(j));
            grads.b[j] += dej;
            // dcat[sec] += Wᵀ de  (row j contribution: de_j * W[j])
            axpy(dej, branch.w.row(j), grads.categorical.row_mut(sec));
        }
    }
}
