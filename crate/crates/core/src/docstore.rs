//! BM25 keyword retrieval over model documentation.
//!
//! Documents are ranked whole. Tokens are lowercase alphanumeric runs with
//! no stemming or stop words. A document's score for query terms `q_i` is
//!
//! ```text
//! Σ idf(q_i) · f·(k1 + 1) / (f + k1·(1 − b + b·|D|/avgdl))
//! idf(t) = ln((N − n_t + 0.5) / (n_t + 0.5) + 1)
//! ```
//!
//! with `f` the term frequency in the document and `n_t` the number of
//! documents containing `t`.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelRegistry;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const SNIPPET_CHARS: usize = 400;
/// Characters of context kept before the matched term in a snippet.
const SNIPPET_LEAD: usize = 80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocStoreError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id '{0}'")]
    DuplicateDocId(String),
    #[error("document '{0}' has an empty body")]
    EmptyBody(String),
    #[error("query has no searchable terms")]
    EmptyQuery,
    #[error("no document with id '{0}'")]
    UnknownDoc(String),
    #[error("cannot read documents from {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub doc_id: String,
    pub score: f64,
    pub snippet: String,
}

/// Lowercased alphanumeric tokens with the byte range of each in `text`.
fn token_spans(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((text[s..i].to_lowercase(), s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((text[s..].to_lowercase(), s, text.len()));
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(t, _, _)| t).collect()
}

/// Immutable inverted index.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    docs: Vec<DocEntry>,
    by_id: HashMap<String, usize>,
    lengths: Vec<usize>,
    avgdl: f64,
    /// term -> (document, frequency), documents ascending.
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Index {
    pub fn ingest(corpus: Vec<DocEntry>) -> Result<Self, DocStoreError> {
        if corpus.is_empty() {
            return Err(DocStoreError::EmptyCorpus);
        }
        let mut by_id = HashMap::new();
        let mut lengths = Vec::with_capacity(corpus.len());
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (i, doc) in corpus.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(DocStoreError::DuplicateDocId(doc.doc_id.clone()));
            }
            if doc.body.trim().is_empty() {
                return Err(DocStoreError::EmptyBody(doc.doc_id.clone()));
            }
            let tokens = tokenize(&doc.body);
            lengths.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, f) in tf {
                postings.entry(term).or_default().push((i, f));
            }
        }
        let avgdl = lengths.iter().sum::<usize>() as f64 / corpus.len() as f64;
        Ok(Self {
            docs: corpus,
            by_id,
            lengths,
            avgdl,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).map(|&i| self.lengths[i])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc_id.as_str())
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        let total = self.docs.len() as f64;
        ((total - n + 0.5) / (n + 0.5) + 1.0).ln()
    }

    fn scores(&self, terms: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, f) in list {
                let f = f as f64;
                let norm = 1.0 - B + B * self.lengths[doc] as f64 / self.avgdl;
                scores[doc] += idf * f * (K1 + 1.0) / (f + K1 * norm);
            }
        }
        scores
    }

    /// Top `k` documents by BM25 score; documents scoring zero are left out.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievalHit>, DocStoreError> {
        let terms = tokenize(query);
        if terms.is_empty() {
            return Err(DocStoreError::EmptyQuery);
        }
        let scores = self.scores(&terms);
        let mut ranked: Vec<usize> = (0..self.docs.len()).filter(|&i| scores[i] > 0.0).collect();
        ranked.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.docs[a].doc_id.cmp(&self.docs[b].doc_id))
        });
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|i| RetrievalHit {
                doc_id: self.docs[i].doc_id.clone(),
                score: scores[i],
                snippet: self.snippet(&self.docs[i].body, &terms),
            })
            .collect())
    }

    /// Window of the body around the first occurrence of the rarest query
    /// term it contains.
    fn snippet(&self, body: &str, terms: &[String]) -> String {
        let unique: HashSet<&String> = terms.iter().collect();
        let spans = token_spans(body);
        let anchor = spans
            .iter()
            .filter(|(t, _, _)| unique.contains(t))
            .max_by(|a, b| {
                self.idf(&a.0)
                    .total_cmp(&self.idf(&b.0))
                    .then(b.1.cmp(&a.1))
            })
            .map_or(0, |&(_, start, _)| start);
        let lead_start = body[..anchor]
            .char_indices()
            .rev()
            .nth(SNIPPET_LEAD - 1)
            .map_or(0, |(i, _)| i);
        let end = body[lead_start..]
            .char_indices()
            .nth(SNIPPET_CHARS)
            .map_or(body.len(), |(i, _)| lead_start + i);
        body[lead_start..end].to_string()
    }

    pub fn get_doc(&self, doc_id: &str) -> Result<&DocEntry, DocStoreError> {
        self.by_id
            .get(doc_id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| DocStoreError::UnknownDoc(doc_id.to_string()))
    }
}

/// One document per registered model, built from its rendered doc text.
pub fn model_docs(registry: &ModelRegistry) -> Vec<DocEntry> {
    registry
        .list_models()
        .into_iter()
        .map(|info| DocEntry {
            doc_id: info.name.clone(),
            title: info.title.clone(),
            body: info.doc_text.clone(),
        })
        .collect()
}

/// Reads `.txt` and `.md` files from `dir` in file-name order. The file
/// stem is the doc id and the first non-blank line the title.
pub fn load_user_docs(dir: &Path) -> Result<Vec<DocEntry>, DocStoreError> {
    let io = |e: std::io::Error| DocStoreError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "md"))
        })
        .collect();
    paths.sort();
    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let body = std::fs::read_to_string(&path).map_err(io)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let title = body
            .lines()
            .map(|l| l.trim().trim_start_matches('#').trim())
            .find(|l| !l.is_empty())
            .unwrap_or(stem)
            .to_string();
        docs.push(DocEntry {
            doc_id: stem.to_string(),
            title,
            body,
        });
    }
    Ok(docs)
}

/// Shared handle whose index can be replaced while searches are running.
#[derive(Debug)]
pub struct DocStore {
    index: RwLock<Arc<Index>>,
}

impl DocStore {
    pub fn new(index: Index) -> Self {
        Self {
            index: RwLock::new(Arc::new(index)),
        }
    }

    /// Model docs plus, when given, every user document in `user_dir`.
    pub fn build(registry: &ModelRegistry, user_dir: Option<&Path>) -> Result<Self, DocStoreError> {
        Ok(Self::new(Self::corpus_index(registry, user_dir)?))
    }

    pub fn corpus_index(
        registry: &ModelRegistry,
        user_dir: Option<&Path>,
    ) -> Result<Index, DocStoreError> {
        let mut corpus = model_docs(registry);
        if let Some(dir) = user_dir {
            corpus.extend(load_user_docs(dir)?);
        }
        Index::ingest(corpus)
    }

    pub fn snapshot(&self) -> Arc<Index> {
        Arc::clone(&self.index.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn replace(&self, index: Index) {
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(index);
    }

    pub fn search(&self, query: &str, k: usize) -> Result<Vec<RetrievalHit>, DocStoreError> {
        self.snapshot().search(query, k)
    }

    pub fn get_doc(&self, doc_id: &str) -> Result<DocEntry, DocStoreError> {
        self.snapshot().get_doc(doc_id).cloned()
    }
}
