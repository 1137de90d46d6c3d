//! Structured multi-section documents and utterance segmentation.
//!
//! A brief or profile is an ordered list of typed sections; each section is
//! segmented into minimal textual units (sentences, tags, or a single title)
//! before encoding.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on utterances per document; later sections are truncated.
/// Bounds the quadratic comparison-block cost for pathological inputs.
pub const MAX_UTTERANCES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Brief,
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Paragraph,
    Tags,
    Title,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionType {
    pub id: u16,
    pub name: String,
    pub kind: SectionKind,
}

/// The fixed section vocabulary of one document kind. Ids are dense `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionVocab {
    pub kind: DocKind,
    pub types: Vec<SectionType>,
}

impl SectionVocab {
    pub fn new(kind: DocKind, defs: &[(&str, SectionKind)]) -> Self {
        let types = defs
            .iter()
            .enumerate()
            .map(|(id, (name, k))| SectionType { id: id as u16, name: (*name).to_string(), kind: *k })
            .collect();
        SectionVocab { kind, types }
    }

    pub fn lookup(&self, name: &str) -> Option<&SectionType> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn by_id(&self, id: u16) -> Option<&SectionType> {
        self.types.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

pub fn default_vocab(kind: DocKind) -> SectionVocab {
    match kind {
        DocKind::Brief => SectionVocab::new(
            kind,
            &[
                ("title", SectionKind::Title),
                ("description", SectionKind::Paragraph),
                ("skills", SectionKind::Tags),
                ("category", SectionKind::Tags),
            ],
        ),
        DocKind::Profile => SectionVocab::new(
            kind,
            &[
                ("title", SectionKind::Title),
                ("experience", SectionKind::Paragraph),
                ("skills", SectionKind::Tags),
                ("category", SectionKind::Tags),
            ],
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub section: u16,
    pub index_in_section: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    /// Ordered raw sections as `(section id, raw text)`.
    pub sections: Vec<(u16, String)>,
    pub utterances: Vec<Utterance>,
    pub metadata: BTreeMap<String, String>,
}

/// Split a section's raw text into trimmed, non-empty utterance strings.
///
/// Paragraphs split after sentence terminators (`.`, `!`, `?`) and on
/// newlines; tags split on commas, semicolons and newlines; titles yield a
/// single utterance (none when blank).
pub fn segment_section(kind: SectionKind, text: &str) -> Vec<String> {
    let mut out = Vec::new();
    match kind {
        SectionKind::Paragraph => {
            let mut current = String::new();
            for ch in text.chars() {
                match ch {
                    '.' | '!' | '?' => {
                        current.push(ch);
                        push_trimmed(&mut out, &current);
                        current.clear();
                    }
                    '\n' => {
                        push_trimmed(&mut out, &current);
                        current.clear();
                    }
                    _ => current.push(ch),
                }
            }
            push_trimmed(&mut out, &current);
        }
        SectionKind::Tags => {
            for frag in text.split(|c| c == ',' || c == ';' || c == '\n') {
                push_trimmed(&mut out, frag);
            }
        }
        SectionKind::Title => {
            push_trimmed(&mut out, text);
        }
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, frag: &str) {
    let t = frag.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Assemble and segment a document from raw `(section name, text)` pairs.
pub fn build_document(
    id: &str,
    kind: DocKind,
    raw_sections: &[(String, String)],
    metadata: BTreeMap<String, String>,
    vocab: &SectionVocab,
) -> Result<Document> {
    assert_eq!(vocab.kind, kind, "vocab kind must match document kind");
    let mut sections = Vec::with_capacity(raw_sections.len());
    let mut utterances = Vec::new();
    for (name, text) in raw_sections {
        let st = vocab.lookup(name).ok_or_else(|| Error::UnknownSectionType {
            kind,
            name: name.clone(),
        })?;
        sections.push((st.id, text.clone()));
        for (i, u) in segment_section(st.kind, text).into_iter().enumerate() {
            if utterances.len() >= MAX_UTTERANCES {
                break;
            }
            utterances.push(Utterance { text: u, section: st.id, index_in_section: i });
        }
    }
    if utterances.is_empty() {
        return Err(Error::EmptyDocument(id.to_string()));
    }
    Ok(Document { id: id.to_string(), kind, sections, utterances, metadata })
}

// --- JSONL persistence -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SectionJson {
    #[serde(rename = "type")]
    type_name: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct DocumentJson {
    id: String,
    kind: DocKind,
    sections: Vec<SectionJson>,
    metadata: BTreeMap<String, String>,
}

pub fn write_documents_jsonl(
    path: &Path,
    docs: &[Document],
    brief_vocab: &SectionVocab,
    profile_vocab: &SectionVocab,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for doc in docs {
        let vocab = match doc.kind {
            DocKind::Brief => brief_vocab,
            DocKind::Profile => profile_vocab,
        };
        let sections = doc
            .sections
            .iter()
            .map(|(id, text)| {
                let st = vocab.by_id(*id).expect("section id valid for vocab");
                SectionJson { type_name: st.name.clone(), text: text.clone() }
            })
            .collect();
        let line = DocumentJson {
            id: doc.id.clone(),
            kind: doc.kind,
            sections,
            metadata: doc.metadata.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_documents_jsonl(
    path: &Path,
    brief_vocab: &SectionVocab,
    profile_vocab: &SectionVocab,
) -> Result<Vec<Document>> {
    let r = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let dj: DocumentJson = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        let vocab = match dj.kind {
            DocKind::Brief => brief_vocab,
            DocKind::Profile => profile_vocab,
        };
        let raw: Vec<(String, String)> =
            dj.sections.into_iter().map(|s| (s.type_name, s.text)).collect();
        docs.push(build_document(&dj.id, dj.kind, &raw, dj.metadata, vocab)?);
    }
    Ok(docs)
}
