//! Semantic matching: term extraction, projection into bag-of-entities, word
//! embedding and graph embedding spaces, early and late fusion similarities,
//! and the feature blocks built from them.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Table;
use crate::embeddings::{centroid, cosine, normalized, EmbeddingStore};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::kb::{intersection_size, KnowledgeBase, SparseBinary};
use crate::lexical::EntityRetriever;
use crate::textindex::{tokenize, EntityIndex, TableField, TableIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Words,
    Entities,
}

/// Unique terms in first-occurrence order, with their multiplicity in the
/// source text (used for TF weighting).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermSet {
    kind: TermKind,
    items: Vec<String>,
    counts: Vec<u32>,
}

impl TermSet {
    pub fn empty(kind: TermKind) -> Self {
        TermSet { kind, items: Vec::new(), counts: Vec::new() }
    }

    fn collect<S: AsRef<str>>(kind: TermKind, terms: impl IntoIterator<Item = S>) -> Self {
        let mut set = TermSet::empty(kind);
        let mut pos: HashMap<String, usize> = HashMap::new();
        for t in terms {
            let t = t.as_ref();
            match pos.get(t) {
                Some(&i) => set.counts[i] += 1,
                None => {
                    pos.insert(t.to_owned(), set.items.len());
                    set.items.push(t.to_owned());
                    set.counts.push(1);
                }
            }
        }
        set
    }

    /// Word set from already-tokenized text.
    pub fn words<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self::collect(TermKind::Words, tokens)
    }

    pub fn entities<S: AsRef<str>>(ids: impl IntoIterator<Item = S>) -> Self {
        Self::collect(TermKind::Entities, ids)
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.items.iter().any(|t| t == term)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    BagOfEntities,
    WordEmbeddings,
    GraphEmbeddings,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::BagOfEntities, Space::WordEmbeddings, Space::GraphEmbeddings];

    pub fn name(self) -> &'static str {
        match self {
            Space::BagOfEntities => "Entity",
            Space::WordEmbeddings => "Word",
            Space::GraphEmbeddings => "Graph",
        }
    }

    pub fn accepts(self) -> TermKind {
        match self {
            Space::WordEmbeddings => TermKind::Words,
            _ => TermKind::Entities,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Early,
    LateMax,
    LateSum,
    LateAvg,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Early, Measure::LateMax, Measure::LateSum, Measure::LateAvg];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Early => "Early",
            Measure::LateMax => "Late-max",
            Measure::LateSum => "Late-sum",
            Measure::LateAvg => "Late-avg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Max,
    Sum,
    Avg,
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregator::Max),
            "sum" => Ok(Aggregator::Sum),
            "avg" => Ok(Aggregator::Avg),
            _ => Err(Error::InvalidParameter(format!("unknown aggregator `{s}`"))),
        }
    }
}

/// Table elements compared by the table matching features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Element {
    /// T_t
    Topic,
    /// T_H
    Headings,
    /// T_E
    Entities,
    /// T_D
    Data,
}

impl Element {
    pub const ALL: [Element; 4] = [Element::Topic, Element::Headings, Element::Entities, Element::Data];

    pub fn name(self) -> &'static str {
        match self {
            Element::Topic => "t",
            Element::Headings => "H",
            Element::Entities => "E",
            Element::Data => "D",
        }
    }

    /// Spaces the element has a representation in.
    pub fn spaces(self) -> &'static [Space] {
        match self {
            Element::Topic | Element::Data => &Space::ALL,
            Element::Headings => &[Space::WordEmbeddings],
            Element::Entities => &[Space::BagOfEntities, Space::GraphEmbeddings],
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Element pairs compared across element types; each is evaluated in both
/// directions over the spaces the two elements share.
pub const CROSS_PAIRS: [(Element, Element); 5] = [
    (Element::Headings, Element::Topic),
    (Element::Headings, Element::Data),
    (Element::Data, Element::Topic),
    (Element::Data, Element::Entities),
    (Element::Topic, Element::Entities),
];

/// Projected terms of one representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Vectors {
    /// Embedding vectors with their centroid weights.
    Dense { vectors: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Bag-of-entities vectors (sorted catalog indices).
    Sparse(Vec<SparseBinary>),
}

impl Vectors {
    pub fn len(&self) -> usize {
        match self {
            Vectors::Dense { vectors, .. } => vectors.len(),
            Vectors::Sparse(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dense(vectors: Vec<Vec<f64>>) -> Self {
        let weights = vec![1.0; vectors.len()];
        Vectors::Dense { vectors, weights }
    }
}

/// Read-only resources used by extraction and projection.
#[derive(Clone)]
pub struct SemanticContext<'a> {
    pub kb: &'a KnowledgeBase,
    pub entity_index: &'a EntityIndex,
    retriever: EntityRetriever,
    /// Source of IDF weights for word centroids.
    pub table_index: Option<&'a TableIndex>,
    pub word: Option<&'a EmbeddingStore>,
    pub graph: Option<&'a EmbeddingStore>,
    /// k for R_k.
    pub k: usize,
    /// Divide Late-sum by n·m.
    pub normalize_late_sum: bool,
}

impl<'a> SemanticContext<'a> {
    pub fn new(kb: &'a KnowledgeBase, entity_index: &'a EntityIndex) -> Result<Self> {
        Ok(SemanticContext {
            kb,
            entity_index,
            retriever: EntityRetriever::new(entity_index)?,
            table_index: None,
            word: None,
            graph: None,
            k: 10,
            normalize_late_sum: false,
        })
    }

    pub fn retrieve(&self, text: &str) -> Result<Vec<String>> {
        self.retriever.retrieve(text, self.k, self.entity_index)
    }
}

/// Query words: its unique tokens.
pub fn extract_words_query(q: &str) -> TermSet {
    TermSet::words(tokenize(q))
}

/// Table words: unique tokens of page title, caption and headings.
pub fn extract_words(t: &Table) -> TermSet {
    let mut tokens = tokenize(&t.page_title);
    tokens.extend(tokenize(&t.caption));
    for h in &t.headings {
        tokens.extend(tokenize(h));
    }
    TermSet::words(tokens)
}

/// R_k(q).
pub fn extract_entities_query(q: &str, ctx: &SemanticContext) -> Result<TermSet> {
    Ok(TermSet::entities(ctx.retrieve(q)?))
}

/// T_E' ∪ R_k(T_p) ∪ R_k(T_c).
pub fn extract_entities_table(t: &Table, ctx: &SemanticContext) -> Result<TermSet> {
    let mut ids = t.core_entities();
    ids.extend(ctx.retrieve(&t.page_title)?);
    ids.extend(ctx.retrieve(&t.caption)?);
    Ok(TermSet::entities(ids))
}

/// Maps every term to a vector in `space`; terms without a representation are
/// dropped.
pub fn project(ts: &TermSet, space: Space, ctx: &SemanticContext) -> Result<Vectors> {
    if ts.kind() != space.accepts() {
        return Err(Error::IncompatibleSpace {
            kind: match ts.kind() {
                TermKind::Words => "words",
                TermKind::Entities => "entities",
            },
            space: space.name(),
        });
    }
    match space {
        Space::BagOfEntities => Ok(Vectors::Sparse(
            ts.items()
                .iter()
                .map(|e| ctx.kb.entity_vector(e))
                .filter(|v| !v.is_empty())
                .collect(),
        )),
        Space::GraphEmbeddings => {
            let store = ctx
                .graph
                .ok_or_else(|| Error::MissingResource("graph embeddings".into()))?;
            Ok(Vectors::dense(
                ts.items().iter().filter_map(|e| store.lookup(e).map(widen)).collect(),
            ))
        }
        Space::WordEmbeddings => {
            let store = ctx
                .word
                .ok_or_else(|| Error::MissingResource("word embeddings".into()))?;
            let mut vectors = Vec::new();
            let mut weights = Vec::new();
            for (term, &tf) in ts.items().iter().zip(ts.counts()) {
                if let Some(v) = store.lookup(term) {
                    vectors.push(widen(v));
                    let idf = ctx.table_index.map_or(1.0, |idx| idx.idf(term, TableField::Catchall));
                    weights.push(tf as f64 * idf);
                }
            }
            // Every term common to all tables: fall back to plain averaging.
            if weights.iter().all(|&w| w == 0.0) {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            Ok(Vectors::Dense { vectors, weights })
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn sparse_cosine(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    (intersection_size(a, b) as f64 / ((a.len() * b.len()) as f64).sqrt()).min(1.0)
}

fn sparse_centroid(vs: &[SparseBinary]) -> HashMap<u32, f64> {
    let mut c = HashMap::new();
    for v in vs {
        for &i in v {
            *c.entry(i).or_insert(0.0) += 1.0;
        }
    }
    c
}

fn sparse_map_cosine(a: &HashMap<u32, f64>, b: &HashMap<u32, f64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut keys: Vec<&u32> = small.keys().collect();
    keys.sort_unstable();
    let d: f64 = keys.iter().filter_map(|k| large.get(k).map(|y| small[k] * y)).sum();
    let sq = |m: &HashMap<u32, f64>| {
        let mut k: Vec<&u32> = m.keys().collect();
        k.sort_unstable();
        k.iter().map(|i| m[i] * m[i]).sum::<f64>()
    };
    normalized(d, sq(a), sq(b))
}

/// Cosine of the (weighted) centroids; 0 when either side is empty.
pub fn sim_early(q: &Vectors, t: &Vectors) -> f64 {
    if q.is_empty() || t.is_empty() {
        return 0.0;
    }
    match (q, t) {
        (Vectors::Dense { vectors: qv, weights: qw }, Vectors::Dense { vectors: tv, weights: tw }) => {
            match (centroid(qv, Some(qw)), centroid(tv, Some(tw))) {
                (Ok(a), Ok(b)) if a.len() == b.len() => cosine(&a, &b),
                _ => 0.0,
            }
        }
        (Vectors::Sparse(a), Vectors::Sparse(b)) => sparse_map_cosine(&sparse_centroid(a), &sparse_centroid(b)),
        _ => 0.0,
    }
}

/// All n·m pairwise cosines.
pub fn pairwise(q: &Vectors, t: &Vectors) -> Vec<f64> {
    match (q, t) {
        (Vectors::Dense { vectors: qv, .. }, Vectors::Dense { vectors: tv, .. }) => qv
            .iter()
            .flat_map(|a| tv.iter().map(move |b| cosine(a, b)))
            .collect(),
        (Vectors::Sparse(qv), Vectors::Sparse(tv)) => qv
            .iter()
            .flat_map(|a| tv.iter().map(move |b| sparse_cosine(a, b)))
            .collect(),
        _ => Vec::new(),
    }
}

/// Aggregated pairwise cosine; 0 when either side is empty.
pub fn sim_late(q: &Vectors, t: &Vectors, aggr: Aggregator) -> f64 {
    let s = pairwise(q, t);
    if s.is_empty() {
        return 0.0;
    }
    match aggr {
        Aggregator::Max => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregator::Sum => s.iter().sum(),
        Aggregator::Avg => s.iter().sum::<f64>() / s.len() as f64,
    }
}

/// The four measures, in [`Measure::ALL`] order.
pub fn similarities(q: &Vectors, t: &Vectors, normalize_late_sum: bool) -> [f64; 4] {
    let s = pairwise(q, t);
    if s.is_empty() {
        return [0.0; 4];
    }
    let sum: f64 = s.iter().sum();
    let avg = sum / s.len() as f64;
    [
        sim_early(q, t),
        s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        if normalize_late_sum { avg } else { sum },
        avg,
    ]
}

fn push_block(out: &mut FeatureVector, prefix: &str, space: Space, sims: [f64; 4]) {
    for (m, v) in Measure::ALL.iter().zip(sims) {
        out.push(format!("{prefix}{}_{}", space.name(), m.name()), v);
    }
}

/// Semantic representation of a keyword query.
#[derive(Debug, Clone)]
pub struct QueryRepr {
    pub spaces: [Vectors; 3],
}

/// Projects a query's words and entities into the three spaces.
pub fn query_repr(q: &str, ctx: &SemanticContext) -> Result<QueryRepr> {
    let words = extract_words_query(q);
    let entities = extract_entities_query(q, ctx)?;
    Ok(QueryRepr {
        spaces: [
            project(&entities, Space::BagOfEntities, ctx)?,
            project(&words, Space::WordEmbeddings, ctx)?,
            project(&entities, Space::GraphEmbeddings, ctx)?,
        ],
    })
}

/// Table-side representation for keyword search.
pub fn table_keyword_repr(t: &Table, ctx: &SemanticContext) -> Result<QueryRepr> {
    let words = extract_words(t);
    let entities = extract_entities_table(t, ctx)?;
    Ok(QueryRepr {
        spaces: [
            project(&entities, Space::BagOfEntities, ctx)?,
            project(&words, Space::WordEmbeddings, ctx)?,
            project(&entities, Space::GraphEmbeddings, ctx)?,
        ],
    })
}

/// Names of the 12 keyword-search semantic features.
pub fn str_keyword_schema() -> Vec<String> {
    Space::ALL
        .iter()
        .flat_map(|s| Measure::ALL.iter().map(move |m| format!("{}_{}", s.name(), m.name())))
        .collect()
}

/// The 12 semantic features between a query and a table representation.
pub fn str_keyword_features(q: &QueryRepr, t: &QueryRepr, normalize_late_sum: bool) -> FeatureVector {
    let mut out = FeatureVector::default();
    for (i, space) in Space::ALL.iter().enumerate() {
        push_block(&mut out, "", *space, similarities(&q.spaces[i], &t.spaces[i], normalize_late_sum));
    }
    out
}

/// Raw element contents of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableContent {
    pub topic_words: TermSet,
    pub topic_entities: TermSet,
    pub heading_words: TermSet,
    pub entities: TermSet,
    pub data_words: TermSet,
    pub data_entities: TermSet,
}

impl TableContent {
    pub fn extract(t: &Table, ctx: &SemanticContext) -> Result<Self> {
        let mut topic_words = tokenize(&t.page_title);
        topic_words.extend(tokenize(&t.caption));
        let mut topical = ctx.retrieve(&t.page_title)?;
        topical.extend(ctx.retrieve(&t.caption)?);
        let mut entities = t.core_entities();
        entities.extend(topical.iter().cloned());
        Ok(TableContent {
            topic_words: TermSet::words(topic_words),
            topic_entities: TermSet::entities(topical),
            heading_words: TermSet::words(t.headings.iter().flat_map(|h| tokenize(h))),
            entities: TermSet::entities(entities),
            data_words: TermSet::words(t.rows.iter().flatten().flat_map(|c| tokenize(&c.text))),
            data_entities: TermSet::entities(t.entities()),
        })
    }

    /// Terms of `element` in `space`, if the element is represented there.
    pub fn terms(&self, element: Element, space: Space) -> Option<&TermSet> {
        let words = space == Space::WordEmbeddings;
        match element {
            Element::Topic => Some(if words { &self.topic_words } else { &self.topic_entities }),
            Element::Headings => words.then_some(&self.heading_words),
            Element::Entities => (!words).then_some(&self.entities),
            Element::Data => Some(if words { &self.data_words } else { &self.data_entities }),
        }
    }
}

/// Projected element representations of a table.
#[derive(Debug, Clone)]
pub struct TableRepr {
    slots: [[Option<Vectors>; 3]; 4],
}

impl TableRepr {
    pub fn build(content: &TableContent, ctx: &SemanticContext) -> Result<Self> {
        let mut slots: [[Option<Vectors>; 3]; 4] = Default::default();
        for e in Element::ALL {
            for (si, s) in Space::ALL.iter().enumerate() {
                if let Some(ts) = content.terms(e, *s) {
                    slots[e.slot()][si] = Some(project(ts, *s, ctx)?);
                }
            }
        }
        Ok(TableRepr { slots })
    }

    pub fn get(&self, element: Element, space: Space) -> Option<&Vectors> {
        let si = Space::ALL.iter().position(|s| *s == space)?;
        self.slots[element.slot()][si].as_ref()
    }
}

/// Element-wise features (36).
pub fn element_wise_features(q: &TableRepr, c: &TableRepr, normalize_late_sum: bool) -> FeatureVector {
    let mut out = FeatureVector::default();
    for e in Element::ALL {
        for &s in e.spaces() {
            let sims = match (q.get(e, s), c.get(e, s)) {
                (Some(a), Some(b)) => similarities(a, b, normalize_late_sum),
                _ => [0.0; 4],
            };
            let prefix = format!("{0}-{0}_", e.name());
            push_block(&mut out, &prefix, s, sims);
        }
    }
    out
}

fn shared_spaces(a: Element, b: Element) -> Vec<Space> {
    a.spaces().iter().copied().filter(|s| b.spaces().contains(s)).collect()
}

/// Cross-element features (72): each pair in both directions.
pub fn cross_element_features(q: &TableRepr, c: &TableRepr, normalize_late_sum: bool) -> FeatureVector {
    let mut out = FeatureVector::default();
    for (a, b) in CROSS_PAIRS {
        for (x, y) in [(a, b), (b, a)] {
            for s in shared_spaces(x, y) {
                let sims = match (q.get(x, s), c.get(y, s)) {
                    (Some(u), Some(v)) => similarities(u, v, normalize_late_sum),
                    _ => [0.0; 4],
                };
                let prefix = format!("{}-{}_", x.name(), y.name());
                push_block(&mut out, &prefix, s, sims);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrVariant {
    T1,
    T2,
    T3,
    T4,
}

impl FromStr for StrVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(StrVariant::T1),
            "t2" => Ok(StrVariant::T2),
            "t3" => Ok(StrVariant::T3),
            "t4" => Ok(StrVariant::T4),
            _ => Err(Error::InvalidParameter(format!("unknown variant `{s}`"))),
        }
    }
}

/// Semantic table matching features. `q_table` and `c_table` are the table
/// feature blocks of the input and candidate tables.
pub fn str_table_features(
    q: &TableRepr,
    c: &TableRepr,
    variant: StrVariant,
    q_table: &FeatureVector,
    c_table: &FeatureVector,
    normalize_late_sum: bool,
) -> FeatureVector {
    let mut out = FeatureVector::default();
    if matches!(variant, StrVariant::T1 | StrVariant::T2 | StrVariant::T4) {
        out.extend(element_wise_features(q, c, normalize_late_sum));
    }
    if matches!(variant, StrVariant::T3 | StrVariant::T4) {
        out.extend(cross_element_features(q, c, normalize_late_sum));
    }
    if variant != StrVariant::T1 {
        out.extend(q_table.prefixed("q_"));
        out.extend(c_table.prefixed("c_"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingKind;
    use crate::kb::Entity;

    fn kb() -> KnowledgeBase {
        let mut ents: Vec<Entity> = ["Oslo", "Norway", "Bergen", "Sweden"]
            .iter()
            .map(|n| {
                let mut e = Entity::new(*n);
                e.names = vec![n.to_string()];
                e
            })
            .collect();
        ents[0].out_links = ["Norway".to_string()].into();
        ents[2].out_links = ["Norway".to_string(), "Oslo".to_string()].into();
        ents[3].out_links = ["Norway".to_string()].into();
        KnowledgeBase::from_entities(ents).unwrap()
    }

    #[test]
    fn word_extraction() {
        let t = Table {
            caption: "World Cup".into(),
            headings: vec!["Year".into(), "Cup".into()],
            ..Default::default()
        };
        assert_eq!(extract_words(&t).items(), ["world", "cup", "year"]);
        assert_eq!(extract_words(&t).counts(), [1, 2, 1]);
        assert!(extract_words(&Table::default()).is_empty());
    }

    #[test]
    fn table_entities_union() {
        let kb = kb();
        let idx = kb.build_index().unwrap();
        let ctx = SemanticContext::new(&kb, &idx).unwrap();
        let t = Table {
            page_title: "Bergen".into(),
            headings: vec!["City".into()],
            rows: vec![
                vec![crate::corpus::Cell::linked("Oslo", "Oslo")],
                vec![crate::corpus::Cell::linked("Bergen", "Bergen")],
            ],
            ..Default::default()
        };
        let ts = extract_entities_table(&t, &ctx).unwrap();
        assert_eq!(ts.items(), ["Oslo", "Bergen"]);
        let empty = Table { headings: vec!["x".into()], ..Default::default() };
        assert!(extract_entities_table(&empty, &ctx).unwrap().is_empty());
    }

    #[test]
    fn projection_rules() {
        let kb = kb();
        let idx = kb.build_index().unwrap();
        let store = EmbeddingStore::from_pairs(
            EmbeddingKind::Word,
            2,
            vec![("oslo".into(), vec![1.0, 0.0]), ("citi".into(), vec![0.5, 0.5])],
        )
        .unwrap();
        let mut ctx = SemanticContext::new(&kb, &idx).unwrap();
        assert!(project(&TermSet::entities(["Oslo"]), Space::WordEmbeddings, &ctx).is_err());
        assert!(project(&TermSet::words(["oslo"]), Space::WordEmbeddings, &ctx).is_err());
        ctx.word = Some(&store);
        assert!(project(&TermSet::words(["zzz", "qqq"]), Space::WordEmbeddings, &ctx)
            .unwrap()
            .is_empty());
        let v = project(&TermSet::words(["citi", "zzz", "oslo"]), Space::WordEmbeddings, &ctx).unwrap();
        assert_eq!(v, Vectors::Dense { vectors: vec![vec![0.5, 0.5], vec![1.0, 0.0]], weights: vec![1.0, 1.0] });
        let b = project(&TermSet::entities(["Oslo", "Nowhere"]), Space::BagOfEntities, &ctx).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn early_fusion_cases() {
        let q = Vectors::dense(vec![vec![1.0, 2.0], vec![0.5, -1.0]]);
        assert_eq!(sim_early(&q, &q), 1.0);
        let a = Vectors::dense(vec![vec![1.0, 0.0]]);
        let b = Vectors::dense(vec![vec![0.0, 3.0]]);
        assert_eq!(sim_early(&a, &b), 0.0);
        assert_eq!(sim_early(&a, &Vectors::dense(vec![])), 0.0);

        let q = Vectors::dense(vec![vec![0.3, -0.2, 0.9, 0.1], vec![0.5, 0.5, -0.4, 0.2], vec![-0.1, 0.8, 0.3, 0.6]]);
        let t = Vectors::dense(vec![vec![0.7, 0.1, 0.2, -0.3], vec![0.2, 0.2, 0.2, 0.9]]);
        // Direct oracle: component sums then cosine.
        let cq = [0.7, 1.1, 0.8, 0.9];
        let ct = [0.9, 0.3, 0.4, 0.6];
        let d: f64 = cq.iter().zip(&ct).map(|(x, y)| x * y).sum();
        let n = cq.iter().map(|x| x * x).sum::<f64>().sqrt() * ct.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((sim_early(&q, &t) - d / n).abs() < 1e-12);
    }

    #[test]
    fn late_fusion_cases() {
        let u = vec![0.6, 0.8];
        let single = Vectors::dense(vec![u.clone()]);
        for aggr in [Aggregator::Max, Aggregator::Sum, Aggregator::Avg] {
            assert!((sim_late(&single, &single, aggr) - 1.0).abs() < 1e-12);
        }
        let pm = Vectors::dense(vec![u.clone(), u.iter().map(|x| -x).collect()]);
        assert!((sim_late(&single, &pm, Aggregator::Max) - 1.0).abs() < 1e-12);
        assert!(sim_late(&single, &pm, Aggregator::Sum).abs() < 1e-12);
        assert!(sim_late(&single, &pm, Aggregator::Avg).abs() < 1e-12);

        let q = Vectors::dense(vec![vec![0.1, 0.9, -0.3], vec![0.4, -0.2, 0.5]]);
        let t = Vectors::dense(vec![vec![1.0, 0.0, 0.2], vec![-0.3, 0.3, 0.3], vec![0.2, 0.2, -0.9]]);
        let (Vectors::Dense { vectors: qv, .. }, Vectors::Dense { vectors: tv, .. }) = (&q, &t) else { unreachable!() };
        let mut all = Vec::new();
        for a in qv {
            for b in tv {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                all.push(d / (na * nb));
            }
        }
        let sum: f64 = all.iter().sum();
        assert!((sim_late(&q, &t, Aggregator::Sum) - sum).abs() < 1e-12);
        assert!((sim_late(&q, &t, Aggregator::Avg) - sum / 6.0).abs() < 1e-12);
        assert!((sim_late(&q, &t, Aggregator::Max) - all.iter().cloned().fold(f64::MIN, f64::max)).abs() < 1e-12);
        assert!("median".parse::<Aggregator>().is_err());
    }

    #[test]
    fn sparse_similarity() {
        let a = Vectors::Sparse(vec![vec![1, 2, 3]]);
        let b = Vectors::Sparse(vec![vec![2, 3, 4, 5]]);
        assert_eq!(sim_early(&a, &a), 1.0);
        let expected = 2.0 / (12f64).sqrt();
        assert!((sim_late(&a, &b, Aggregator::Max) - expected).abs() < 1e-12);
        assert!((sim_early(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn keyword_features_shape() {
        let kb = kb();
        let idx = kb.build_index().unwrap();
        let store = EmbeddingStore::from_pairs(EmbeddingKind::Word, 2, vec![("oslo".into(), vec![1.0, 0.0])]).unwrap();
        let graph = EmbeddingStore::from_pairs(EmbeddingKind::Graph, 2, vec![("Oslo".into(), vec![0.0, 1.0])]).unwrap();
        let mut ctx = SemanticContext::new(&kb, &idx).unwrap();
        ctx.word = Some(&store);
        ctx.graph = Some(&graph);
        let q = query_repr("oslo", &ctx).unwrap();
        let t = Table {
            caption: "oslo".into(),
            headings: vec!["x".into()],
            ..Default::default()
        };
        let tr = table_keyword_repr(&t, &ctx).unwrap();
        let f = str_keyword_features(&q, &tr, false);
        assert_eq!(f.names(), str_keyword_schema());
        for name in ["Entity_Early", "Word_Early", "Graph_Late-max"] {
            assert!((f.get(name).unwrap() - 1.0).abs() < 1e-12, "{name}");
        }

        let none = query_repr("qqq", &ctx).unwrap();
        let f = str_keyword_features(&none, &tr, false);
        assert!(f.values().iter().all(|&v| v == 0.0));
    }
}
