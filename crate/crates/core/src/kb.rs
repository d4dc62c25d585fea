//! Knowledge-base store: fielded entity descriptions, out-links, WLM
//! relatedness and bag-of-entities vectors.
//!
//! Entities are read from JSON lines
//! (`{"id":..,"names":[..],"categories":[..],"attributes":[..],
//! "similar_entity_names":[..],"related_entity_names":[..]}`) and out-links
//! from a tab-separated `src \t dst` file.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textindex::{tokenize, Document, EntityField, EntityIndex, Index, IndexField};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub id: String,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub similar_entity_names: Vec<String>,
    #[serde(default)]
    pub related_entity_names: Vec<String>,
    /// L_e: identifiers this entity links to. Loaded from the out-links file.
    #[serde(skip)]
    pub out_links: BTreeSet<String>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Entity {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn field(&self, field: EntityField) -> &[String] {
        match field {
            EntityField::Names => &self.names,
            EntityField::Categories => &self.categories,
            EntityField::Attributes => &self.attributes,
            EntityField::SimilarEntityNames => &self.similar_entity_names,
            EntityField::RelatedEntityNames => &self.related_entity_names,
        }
    }
}

/// Sparse binary vector over the entity catalog: sorted, unique component
/// indices whose value is 1.
pub type SparseBinary = Vec<u32>;

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entities: Vec<Entity>,
    by_id: HashMap<String, usize>,
    /// Stored entities first, then dangling link targets.
    catalog: Vec<String>,
    catalog_ids: HashMap<String, u32>,
    /// Catalog index -> sorted out-link catalog indices.
    out: Vec<Vec<u32>>,
    /// Catalog index -> sorted in-link catalog indices.
    inc: Vec<Vec<u32>>,
    skipped_links: usize,
}

impl KnowledgeBase {
    /// Builds a knowledge base; out-links are taken from each entity.
    pub fn from_entities(entities: Vec<Entity>) -> Result<Self> {
        if entities.is_empty() {
            return Err(Error::InsufficientData("knowledge base has no entities".into()));
        }
        let mut by_id = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        let mut catalog: Vec<String> = entities.iter().map(|e| e.id.clone()).collect();
        let mut catalog_ids: HashMap<String, u32> = catalog
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        for e in &entities {
            for dst in &e.out_links {
                if !catalog_ids.contains_key(dst) {
                    catalog_ids.insert(dst.clone(), catalog.len() as u32);
                    catalog.push(dst.clone());
                }
            }
        }
        let mut out = vec![Vec::new(); catalog.len()];
        let mut inc = vec![Vec::new(); catalog.len()];
        for (i, e) in entities.iter().enumerate() {
            for dst in &e.out_links {
                let j = catalog_ids[dst];
                out[i].push(j);
                inc[j as usize].push(i as u32);
            }
        }
        for v in out.iter_mut().chain(inc.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Ok(KnowledgeBase {
            entities,
            by_id,
            catalog,
            catalog_ids,
            out,
            inc,
            skipped_links: 0,
        })
    }

    /// Reads entity records and, optionally, an out-links file.
    pub fn load<R: BufRead, L: BufRead>(entities: R, links: Option<L>) -> Result<Self> {
        let mut list: Vec<Entity> = Vec::new();
        for (i, line) in entities.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Entity = serde_json::from_str(&line).map_err(|e| Error::Syntax {
                line: i + 1,
                message: e.to_string(),
            })?;
            list.push(e);
        }
        let mut skipped = 0;
        if let Some(links) = links {
            let mut pos: HashMap<String, usize> = HashMap::with_capacity(list.len());
            for (i, e) in list.iter().enumerate() {
                if pos.insert(e.id.clone(), i).is_some() {
                    return Err(Error::DuplicateId(e.id.clone()));
                }
            }
            for (i, line) in links.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut parts = line.split('\t');
                let (Some(src), Some(dst), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::Syntax {
                        line: i + 1,
                        message: "expected `src<TAB>dst`".into(),
                    });
                };
                match pos.get(src.trim()) {
                    Some(&k) => {
                        list[k].out_links.insert(dst.trim().to_owned());
                    }
                    None => skipped += 1,
                }
            }
        }
        let mut kb = KnowledgeBase::from_entities(list)?;
        kb.skipped_links = skipped;
        Ok(kb)
    }

    /// Writes entity records and out-links in the format read by [`load`](Self::load).
    pub fn dump<W: Write, L: Write>(&self, mut entities: W, mut links: L) -> Result<()> {
        for e in &self.entities {
            serde_json::to_writer(&mut entities, e)?;
            entities.write_all(b"\n")?;
            for dst in &e.out_links {
                writeln!(links, "{}\t{}", e.id, dst)?;
            }
        }
        Ok(())
    }

    /// Number of stored entities.
    pub fn size(&self) -> usize {
        self.entities.len()
    }

    /// |𝓔|: stored entities plus dangling link targets.
    pub fn catalog_size(&self) -> usize {
        self.catalog.len()
    }

    pub fn dangling_targets(&self) -> usize {
        self.catalog.len() - self.entities.len()
    }

    /// Out-link lines whose source is not a stored entity.
    pub fn skipped_links(&self) -> usize {
        self.skipped_links
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn catalog_id(&self, index: u32) -> &str {
        &self.catalog[index as usize]
    }

    /// The entity standing for a page, matched on the title with spaces or
    /// underscores.
    pub fn page_entity(&self, title: &str) -> Option<&str> {
        let title = title.trim();
        [title.to_owned(), title.replace(' ', "_")]
            .into_iter()
            .find_map(|cand| self.by_id.get_key_value(&cand).map(|(k, _)| k.as_str()))
    }

    fn links(&self, id: &str) -> Result<&[u32]> {
        let i = *self.by_id.get(id).ok_or_else(|| Error::UnknownEntity(id.to_owned()))?;
        Ok(&self.out[i])
    }

    /// Wikipedia Link-based Measure over out-link sets, clamped to [0, 1].
    /// Zero when either entity has no out-links or the link sets are disjoint.
    pub fn wlm(&self, a: &str, b: &str) -> Result<f64> {
        let la = self.links(a)?;
        let lb = self.links(b)?;
        if la.is_empty() || lb.is_empty() {
            return Ok(0.0);
        }
        let common = intersection_size(la, lb);
        if common == 0 {
            return Ok(0.0);
        }
        let (max, min) = if la.len() >= lb.len() {
            (la.len(), lb.len())
        } else {
            (lb.len(), la.len())
        };
        let num = (max as f64).ln() - (common as f64).ln();
        if num == 0.0 {
            return Ok(1.0);
        }
        let den = (self.catalog_size() as f64).ln() - (min as f64).ln();
        if den <= 0.0 {
            return Ok(0.0);
        }
        Ok((1.0 - num / den).clamp(0.0, 1.0))
    }

    /// Bag-of-entities vector: components for every entity linked to or from
    /// `id`. Unknown entities give an empty vector.
    pub fn entity_vector(&self, id: &str) -> SparseBinary {
        let Some(&i) = self.catalog_ids.get(id) else {
            return Vec::new();
        };
        let (a, b) = (&self.out[i as usize], &self.inc[i as usize]);
        let mut v = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0, 0);
        while x < a.len() || y < b.len() {
            let next = match (a.get(x), b.get(y)) {
                (Some(&p), Some(&q)) if p == q => {
                    x += 1;
                    y += 1;
                    p
                }
                (Some(&p), Some(&q)) if p < q => {
                    x += 1;
                    p
                }
                (Some(_), Some(&q)) => {
                    y += 1;
                    q
                }
                (Some(&p), None) => {
                    x += 1;
                    p
                }
                (None, Some(&q)) => {
                    y += 1;
                    q
                }
                (None, None) => unreachable!(),
            };
            v.push(next);
        }
        v
    }

    /// Fielded entity index used for entity retrieval.
    pub fn build_index(&self) -> Result<EntityIndex> {
        use rayon::prelude::*;
        let docs = self
            .entities
            .par_iter()
            .map(|e| Document {
                id: e.id.clone(),
                fields: EntityField::ALL
                    .iter()
                    .map(|f| e.field(*f).iter().flat_map(|s| tokenize(s)).collect())
                    .collect(),
            })
            .collect();
        Index::build(docs)
    }
}

pub(crate) fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}
