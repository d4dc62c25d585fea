use std::collections::HashMap;
use std::fmt::Debug;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::marker::PhantomData;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INDEX_FORMAT: &str = "tablesearch-index";
pub const INDEX_VERSION: u32 = 1;

/// A field set an [`Index`] is built over.
pub trait IndexField: Copy + Eq + Debug + Send + Sync + 'static {
    const ALL: &'static [Self];
    /// Name written to the on-disk manifest.
    const KIND: &'static str;
    fn slot(self) -> usize;
    fn name(self) -> &'static str;
}

/// One posting: internal document slot and term frequency.
pub type Posting = (u32, u32);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldPostings {
    /// Collection frequency of the term in this field.
    pub cf: u64,
    /// Postings sorted by document slot.
    pub docs: Vec<Posting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub total_terms: u64,
    pub doc_count: u64,
}

/// A document handed to the index builder: an id plus tokens per field slot.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub fields: Vec<Vec<String>>,
}

/// Multi-field inverted index with per-field collection statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Index<F: IndexField> {
    doc_ids: Vec<String>,
    #[serde(skip)]
    slots: HashMap<String, u32>,
    /// term -> per-field postings (indexed by field slot).
    #[serde(serialize_with = "sorted_map")]
    postings: HashMap<String, Vec<FieldPostings>>,
    /// field slot -> document slot -> length.
    doc_lengths: Vec<Vec<u32>>,
    stats: Vec<FieldStats>,
    #[serde(skip)]
    _field: PhantomData<F>,
}

/// Writes a map in key order so saved indexes are byte-identical across builds.
fn sorted_map<S: serde::Serializer, V: Serialize>(m: &HashMap<String, V>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(m.iter().collect::<std::collections::BTreeMap<_, _>>())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: String,
    num_docs: usize,
    fields: Vec<String>,
}

impl<F: IndexField> Index<F> {
    /// Builds an index from already-tokenized documents. Document ids must be
    /// unique.
    pub fn build(docs: Vec<Document>) -> Result<Self> {
        let nf = F::ALL.len();
        let mut slots = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if d.fields.len() != nf {
                return Err(Error::InvalidParameter(format!(
                    "document `{}` has {} fields, index expects {nf}",
                    d.id,
                    d.fields.len()
                )));
            }
            if slots.insert(d.id.clone(), i as u32).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }

        // Per-document term counts, computed in parallel.
        let counted: Vec<Vec<Vec<(String, u32)>>> = docs
            .par_iter()
            .map(|d| {
                d.fields
                    .iter()
                    .map(|tokens| {
                        let mut tf: HashMap<&str, u32> = HashMap::new();
                        for t in tokens {
                            *tf.entry(t.as_str()).or_default() += 1;
                        }
                        let mut v: Vec<(String, u32)> =
                            tf.into_iter().map(|(t, c)| (t.to_owned(), c)).collect();
                        v.sort_unstable();
                        v
                    })
                    .collect()
            })
            .collect();

        let mut postings: HashMap<String, Vec<FieldPostings>> = HashMap::new();
        let mut doc_lengths = vec![vec![0u32; docs.len()]; nf];
        let mut stats = vec![FieldStats::default(); nf];
        for (slot, fields) in counted.into_iter().enumerate() {
            for (f, terms) in fields.into_iter().enumerate() {
                let len: u32 = terms.iter().map(|(_, c)| c).sum();
                doc_lengths[f][slot] = len;
                stats[f].total_terms += len as u64;
                for (term, tf) in terms {
                    let entry = postings
                        .entry(term)
                        .or_insert_with(|| vec![FieldPostings::default(); nf]);
                    entry[f].cf += tf as u64;
                    entry[f].docs.push((slot as u32, tf));
                }
            }
        }
        for s in &mut stats {
            s.doc_count = docs.len() as u64;
        }

        Ok(Index {
            doc_ids: docs.into_iter().map(|d| d.id).collect(),
            slots,
            postings,
            doc_lengths,
            stats,
            _field: PhantomData,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, slot: u32) -> &str {
        &self.doc_ids[slot as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn slot(&self, id: &str) -> Option<u32> {
        self.slots.get(id).copied()
    }

    pub fn doc_len(&self, slot: u32, field: F) -> u32 {
        self.doc_lengths[field.slot()][slot as usize]
    }

    pub fn field_stats(&self, field: F) -> &FieldStats {
        &self.stats[field.slot()]
    }

    /// Average document length in `field` (0 for an empty index).
    pub fn avg_len(&self, field: F) -> f64 {
        let s = self.field_stats(field);
        if s.doc_count == 0 {
            0.0
        } else {
            s.total_terms as f64 / s.doc_count as f64
        }
    }

    pub fn postings(&self, term: &str, field: F) -> &[Posting] {
        self.postings
            .get(term)
            .map_or(&[][..], |p| p[field.slot()].docs.as_slice())
    }

    pub fn cf(&self, term: &str, field: F) -> u64 {
        self.postings.get(term).map_or(0, |p| p[field.slot()].cf)
    }

    pub fn df(&self, term: &str, field: F) -> u64 {
        self.postings(term, field).len() as u64
    }

    pub fn tf(&self, term: &str, field: F, slot: u32) -> u32 {
        let p = self.postings(term, field);
        p.binary_search_by_key(&slot, |&(d, _)| d)
            .map_or(0, |i| p[i].1)
    }

    /// Collection language model probability P(t|C_field).
    pub fn p_collection(&self, term: &str, field: F) -> f64 {
        let total = self.field_stats(field).total_terms;
        if total == 0 {
            0.0
        } else {
            self.cf(term, field) as f64 / total as f64
        }
    }

    /// `ln(N/df)`, 0 for terms absent from the field.
    pub fn idf(&self, term: &str, field: F) -> f64 {
        let df = self.df(term, field);
        if df == 0 {
            return 0.0;
        }
        (self.num_docs() as f64 / df as f64).ln()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Writes a manifest plus the binary index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            kind: F::KIND.into(),
            num_docs: self.num_docs(),
            fields: F::ALL.iter().map(|f| f.name().to_owned()).collect(),
        };
        let name = format!("{}.manifest.json", F::KIND);
        serde_json::to_writer_pretty(BufWriter::new(fs::File::create(dir.join(name))?), &manifest)?;
        let data = BufWriter::new(fs::File::create(dir.join(format!("{}.bin", F::KIND)))?);
        bincode::serialize_into(data, self)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let name = format!("{}.manifest.json", F::KIND);
        let manifest: Manifest = serde_json::from_reader(BufReader::new(
            fs::File::open(dir.join(&name)).map_err(|e| {
                Error::MissingResource(format!("{}: {e}", dir.join(&name).display()))
            })?,
        ))?;
        if manifest.format != INDEX_FORMAT || manifest.kind != F::KIND {
            return Err(Error::Format(format!(
                "expected {INDEX_FORMAT}/{}, found {}/{}",
                F::KIND,
                manifest.format,
                manifest.kind
            )));
        }
        if manifest.version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "index version {} is not supported (expected {INDEX_VERSION})",
                manifest.version
            )));
        }
        let expected: Vec<&str> = F::ALL.iter().map(|f| f.name()).collect();
        if manifest.fields != expected {
            return Err(Error::Format(format!("field list mismatch: {:?}", manifest.fields)));
        }
        let data = BufReader::new(fs::File::open(dir.join(format!("{}.bin", F::KIND)))?);
        let mut index: Index<F> = bincode::deserialize_from(data)?;
        if index.num_docs() != manifest.num_docs {
            return Err(Error::Format("manifest document count disagrees with data".into()));
        }
        index.slots = index
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(index)
    }
}
