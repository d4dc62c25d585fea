//! Pre-trained dense vectors in the word2vec text format: a `count dim`
//! header followed by one `term v1 ... v_dim` line per term.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textindex::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Keyed by words. Lookups fall back to lowercase and stemmed forms.
    Word,
    /// Keyed by entity identifiers. Lookups are exact.
    Graph,
}

#[derive(Debug)]
pub struct EmbeddingStore {
    kind: EmbeddingKind,
    dim: usize,
    terms: Vec<String>,
    data: Vec<f32>,
    exact: HashMap<String, u32>,
    folded: HashMap<String, u32>,
    stemmed: HashMap<String, u32>,
    misses: AtomicU64,
}

impl Clone for EmbeddingStore {
    fn clone(&self) -> Self {
        EmbeddingStore {
            kind: self.kind,
            dim: self.dim,
            terms: self.terms.clone(),
            data: self.data.clone(),
            exact: self.exact.clone(),
            folded: self.folded.clone(),
            stemmed: self.stemmed.clone(),
            misses: AtomicU64::new(self.misses.load(Ordering::Relaxed)),
        }
    }
}

impl EmbeddingStore {
    /// Builds a store from `(term, vector)` pairs; the first occurrence of a
    /// term wins.
    pub fn from_pairs(kind: EmbeddingKind, dim: usize, pairs: Vec<(String, Vec<f32>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        let mut store = EmbeddingStore {
            kind,
            dim,
            terms: Vec::with_capacity(pairs.len()),
            data: Vec::with_capacity(pairs.len() * dim),
            exact: HashMap::with_capacity(pairs.len()),
            folded: HashMap::new(),
            stemmed: HashMap::new(),
            misses: AtomicU64::new(0),
        };
        for (term, v) in pairs {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            if store.exact.contains_key(&term) {
                continue;
            }
            let slot = store.terms.len() as u32;
            store.exact.insert(term.clone(), slot);
            if kind == EmbeddingKind::Word {
                store.folded.entry(term.to_lowercase()).or_insert(slot);
                // Terms that reduce to exactly one token are reachable by their stem.
                if let [single] = tokenize(&term).as_slice() {
                    store.stemmed.entry(single.clone()).or_insert(slot);
                }
            }
            store.terms.push(term);
            store.data.extend_from_slice(&v);
        }
        Ok(store)
    }

    pub fn load<R: BufRead>(kind: EmbeddingKind, source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let (count, dim) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::Format("embedding file is empty".into()));
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |p: Option<&str>| -> Result<usize> {
                p.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Syntax {
                    line: i + 1,
                    message: "expected `count dim` header".into(),
                })
            };
            let count = parse(parts.next())?;
            let dim = parse(parts.next())?;
            break (count, dim);
        };
        let mut pairs = Vec::with_capacity(count);
        for (i, line) in lines {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|s| !s.is_empty());
            let term = parts.next().unwrap_or_default().to_owned();
            let v = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| Error::Syntax { line: i + 1, message: e.to_string() })?;
            if v.len() != dim {
                return Err(Error::Syntax {
                    line: i + 1,
                    message: format!("expected {dim} components, found {}", v.len()),
                });
            }
            pairs.push((term, v));
        }
        if pairs.len() != count {
            return Err(Error::Format(format!(
                "header announces {count} vectors, file holds {}",
                pairs.len()
            )));
        }
        Self::from_pairs(kind, dim, pairs)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.terms.len(), self.dim)?;
        for (i, term) in self.terms.iter().enumerate() {
            write!(out, "{term}")?;
            for x in self.vector(i) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn vector(&self, slot: usize) -> &[f32] {
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    fn find(&self, term: &str) -> Option<u32> {
        if let Some(&s) = self.exact.get(term) {
            return Some(s);
        }
        if self.kind == EmbeddingKind::Word {
            let lower = term.to_lowercase();
            if let Some(&s) = self.folded.get(&lower) {
                return Some(s);
            }
            return self.stemmed.get(&lower).copied();
        }
        None
    }

    /// Vector for `term`; misses are counted.
    pub fn lookup(&self, term: &str) -> Option<&[f32]> {
        match self.find(term) {
            Some(s) => Some(self.vector(s as usize)),
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Arithmetic mean of `vectors`, or `Σ wᵢ vᵢ` when weights are given.
pub fn centroid<V: AsRef<[f64]>>(vectors: &[V], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidParameter("centroid of an empty set".into()))?;
    let dim = first.as_ref().len();
    if let Some(v) = vectors.iter().find(|v| v.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: v.as_ref().len() });
    }
    let mut c = vec![0.0; dim];
    match weights {
        None => {
            for v in vectors {
                for (c, x) in c.iter_mut().zip(v.as_ref()) {
                    *c += x;
                }
            }
            let n = vectors.len() as f64;
            c.iter_mut().for_each(|x| *x /= n);
        }
        Some(w) => {
            if w.len() != vectors.len() {
                return Err(Error::DimensionMismatch { expected: vectors.len(), found: w.len() });
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
            }
            if w.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidParameter("all weights are zero".into()));
            }
            for (v, &wi) in vectors.iter().zip(w) {
                for (c, x) in c.iter_mut().zip(v.as_ref()) {
                    *c += wi * x;
                }
            }
        }
    }
    Ok(c)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    normalized(dot(a, b), dot(a, a), dot(b, b))
}

/// `d / (‖a‖·‖b‖)` from the squared norms. A single square root keeps the
/// self-similarity of any nonzero vector at exactly 1.
pub(crate) fn normalized(d: f64, na2: f64, nb2: f64) -> f64 {
    if na2 == 0.0 || nb2 == 0.0 {
        return 0.0;
    }
    let mut denom = (na2 * nb2).sqrt();
    if !denom.is_normal() {
        denom = na2.sqrt() * nb2.sqrt();
    }
    (d / denom).clamp(-1.0, 1.0)
}
