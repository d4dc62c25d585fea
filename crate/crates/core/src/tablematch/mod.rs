//! Table-to-table matching baselines, keyword queries derived from an input
//! table, candidate pooling and the combined matching feature vector.

mod assignment;

pub use assignment::{max_weight_matching, Matching};

use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{detect_core_column, Table};
use crate::embeddings::normalized;
use crate::error::{Error, Result};
use crate::features::{normalize_heading, FeatureVector, HeadingStats, TableFeaturizer};
use crate::kb::KnowledgeBase;
use crate::lexical::{default_mu, rank_lm, rank_mlm, score_lm, score_mlm, MlmConfig, QueryTerms};
use crate::textindex::{tokenize, TableField, TableIndex};

/// `1 − lev(a, b) / max(|a|, |b|)` over characters; 1 for two empty strings.
pub fn edit_sim(a: &str, b: &str) -> f64 {
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max as f64
}

fn unique_headings(t: &Table) -> Vec<String> {
    let mut seen = HashSet::new();
    t.headings
        .iter()
        .map(|h| normalize_heading(h))
        .filter(|h| !h.is_empty() && seen.insert(h.clone()))
        .collect()
}

fn edit_matrix(a: &[String], b: &[String]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| edit_sim(x, y)).collect()).collect()
}

/// Fuzzy Jaccard over unique headings; 0 unless the tables share a heading.
pub fn msje_score(qt: &Table, ct: &Table, delta: f64) -> f64 {
    let (a, b) = (unique_headings(qt), unique_headings(ct));
    if !a.iter().any(|h| b.contains(h)) {
        return 0.0;
    }
    let w = max_weight_matching(&edit_matrix(&a, &b), delta).weight;
    let denom = a.len() as f64 + b.len() as f64 - w;
    if denom <= 0.0 {
        return 0.0;
    }
    (w / denom).clamp(0.0, 1.0)
}

/// Share of the input table's entities found in the candidate.
pub fn entity_coverage(qt: &Table, ct: &Table) -> f64 {
    let q = qt.entities();
    if q.is_empty() {
        return 0.0;
    }
    let c: HashSet<String> = ct.entities().into_iter().collect();
    q.iter().filter(|e| c.contains(*e)).count() as f64 / q.len() as f64
}

/// Benefit of adding heading `h` to the input headings.
pub fn heading_benefit(input: &[String], h: &str, stats: &HeadingStats) -> f64 {
    if input.is_empty() {
        return 0.0;
    }
    let sum: f64 = input
        .iter()
        .map(|x| {
            let n = stats.count(x);
            if n == 0 {
                0.0
            } else {
                stats.pair_count(x, h) as f64 / n as f64
            }
        })
        .sum();
    sum / input.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggr {
    Sum,
    #[default]
    Avg,
    Max,
}

impl FromStr for Aggr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggr::Sum),
            "avg" => Ok(Aggr::Avg),
            "max" => Ok(Aggr::Max),
            _ => Err(Error::InvalidParameter(format!("unknown aggregator `{s}`"))),
        }
    }
}

/// Entity coverage times aggregated heading benefit over candidate headings.
pub fn schema_complement_score(qt: &Table, ct: &Table, stats: &HeadingStats, aggr: Aggr) -> f64 {
    let ec = entity_coverage(qt, ct);
    if ec == 0.0 {
        return 0.0;
    }
    let input = unique_headings(qt);
    let benefits: Vec<f64> = unique_headings(ct)
        .iter()
        .map(|h| heading_benefit(&input, h, stats))
        .collect();
    if benefits.is_empty() {
        return 0.0;
    }
    let hb = match aggr {
        Aggr::Sum => benefits.iter().sum(),
        Aggr::Avg => benefits.iter().sum::<f64>() / benefits.len() as f64,
        Aggr::Max => benefits.iter().copied().fold(0.0, f64::max),
    };
    ec * hb
}

/// Mean pairwise WLM between the entities of the two tables.
pub fn entity_complement_score(qt: &Table, ct: &Table, kb: &KnowledgeBase) -> f64 {
    let (a, b) = (qt.entities(), ct.entities());
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for x in &a {
        for y in &b {
            sum += kb.wlm(x, y).unwrap_or(0.0);
        }
    }
    sum / (a.len() * b.len()) as f64
}

fn column_terms(t: &Table, j: usize) -> HashSet<String> {
    t.column(j).flat_map(|c| tokenize(&c.text)).collect()
}

fn binary_cosine(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.iter().filter(|t| b.contains(*t)).count();
    common as f64 / ((a.len() * b.len()) as f64).sqrt()
}

/// Heading similarity: matching weight over the larger heading count.
pub fn nguyen_sim_h(qt: &Table, ct: &Table) -> f64 {
    let (a, b) = (unique_headings(qt), unique_headings(ct));
    let max = a.len().max(b.len());
    if max == 0 {
        return 0.0;
    }
    max_weight_matching(&edit_matrix(&a, &b), 0.0).weight / max as f64
}

/// Data similarity: half the sum of best column cosines in both directions.
pub fn nguyen_sim_d(qt: &Table, ct: &Table) -> f64 {
    let a: Vec<HashSet<String>> = (0..qt.num_columns()).map(|j| column_terms(qt, j)).collect();
    let b: Vec<HashSet<String>> = (0..ct.num_columns()).map(|j| column_terms(ct, j)).collect();
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let cos: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| binary_cosine(x, y)).collect()).collect();
    let rows: f64 = cos.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum();
    let cols: f64 = (0..b.len())
        .map(|j| cos.iter().map(|r| r[j]).fold(0.0, f64::max))
        .sum();
    0.5 * (rows + cols)
}

pub fn nguyen_score(qt: &Table, ct: &Table, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(alpha * nguyen_sim_h(qt, ct) + (1.0 - alpha) * nguyen_sim_d(qt, ct))
}

type TermVector = BTreeMap<String, f64>;

fn weighted(tokens: impl IntoIterator<Item = String>, index: &TableIndex, use_tf: bool) -> TermVector {
    let mut v: TermVector = BTreeMap::new();
    for t in tokens {
        let idf = index.idf(&t, TableField::Catchall);
        let e = v.entry(t).or_insert(0.0);
        if use_tf {
            *e += idf;
        } else {
            *e = idf;
        }
    }
    v
}

fn vec_cosine(a: &TermVector, b: &TermVector) -> f64 {
    let d: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let sq = |v: &TermVector| v.values().map(|x| x * x).sum::<f64>();
    normalized(d, sq(a), sq(b))
}

/// Element similarities: table data, column values, page title, headings.
pub const INFOGATHER_ELEMENTS: [&str; 4] = ["data", "column_values", "page_title", "headings"];

/// Per-element cosine similarities in [`INFOGATHER_ELEMENTS`] order. Data and
/// page title use IDF weights, headings and column values TF-IDF, with IDF
/// from the catchall field. Column values compare every input column with the
/// candidate's core column and keep the best.
pub fn infogather_similarities(qt: &Table, ct: &Table, index: &TableIndex) -> [f64; 4] {
    let body = |t: &Table| t.rows.iter().flatten().flat_map(|c| tokenize(&c.text)).collect::<Vec<_>>();
    let heads = |t: &Table| t.headings.iter().flat_map(|h| tokenize(h)).collect::<Vec<_>>();
    let col = |t: &Table, j: usize| t.column(j).flat_map(|c| tokenize(&c.text)).collect::<Vec<_>>();

    let data = vec_cosine(&weighted(body(qt), index, false), &weighted(body(ct), index, false));
    let title = vec_cosine(
        &weighted(tokenize(&qt.page_title), index, false),
        &weighted(tokenize(&ct.page_title), index, false),
    );
    let headings = vec_cosine(&weighted(heads(qt), index, true), &weighted(heads(ct), index, true));
    let values = match detect_core_column(ct) {
        Ok(core) => {
            let target = weighted(col(ct, core), index, true);
            (0..qt.num_columns())
                .map(|j| vec_cosine(&weighted(col(qt, j), index, true), &target))
                .fold(0.0, f64::max)
        }
        Err(_) => 0.0,
    };
    [data, values, title, headings]
}

pub fn infogather_score(qt: &Table, ct: &Table, index: &TableIndex, weights: &[f64; 4]) -> f64 {
    infogather_similarities(qt, ct, index)
        .iter()
        .zip(weights)
        .map(|(s, w)| s * w)
        .sum()
}

/// Keyword queries built from one element of the input table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeywordElement {
    /// Entity identifiers against the entities field.
    Entities,
    /// Heading tokens against the headings field.
    Headings,
    /// Caption tokens against caption and catchall.
    Caption,
}

impl KeywordElement {
    pub const ALL: [KeywordElement; 3] = [KeywordElement::Entities, KeywordElement::Headings, KeywordElement::Caption];

    pub fn name(self) -> &'static str {
        match self {
            KeywordElement::Entities => "kw_entities",
            KeywordElement::Headings => "kw_headings",
            KeywordElement::Caption => "kw_caption",
        }
    }

    pub fn query(self, t: &Table) -> QueryTerms {
        match self {
            KeywordElement::Entities => QueryTerms::new(&t.entities()),
            KeywordElement::Headings => QueryTerms::new(&t.headings.iter().flat_map(|h| tokenize(h)).collect::<Vec<_>>()),
            KeywordElement::Caption => QueryTerms::parse(&t.caption),
        }
    }
}

impl FromStr for KeywordElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entities" | "T_E" => Ok(KeywordElement::Entities),
            "headings" | "T_H" => Ok(KeywordElement::Headings),
            "caption" | "T_c" => Ok(KeywordElement::Caption),
            _ => Err(Error::InvalidParameter(format!("unknown keyword element `{s}`"))),
        }
    }
}

fn caption_config(index: &TableIndex) -> Result<MlmConfig> {
    MlmConfig::uniform(&[TableField::Caption, TableField::Catchall], index)
}

fn drop_self(mut ranking: Vec<(u32, f64)>, qt: &Table, index: &TableIndex, k: usize) -> Vec<(u32, f64)> {
    if let Some(own) = index.slot(&qt.id) {
        ranking.retain(|(d, _)| *d != own);
    }
    ranking.truncate(k);
    ranking
}

fn rank_terms(q: &QueryTerms, element: KeywordElement, index: &TableIndex, k: usize) -> Result<Vec<(u32, f64)>> {
    match element {
        KeywordElement::Entities => rank_lm(q, TableField::Entities, default_mu(index, TableField::Entities), index, Some(k)),
        KeywordElement::Headings => rank_lm(q, TableField::Headings, default_mu(index, TableField::Headings), index, Some(k)),
        KeywordElement::Caption => rank_mlm(q, &caption_config(index)?, index, Some(k)),
    }
}

/// Ranks indexed tables using one element of `qt` as a keyword query. The
/// input table itself is excluded.
pub fn keyword_baseline(qt: &Table, element: KeywordElement, index: &TableIndex, k: usize) -> Result<Vec<(u32, f64)>> {
    let q = element.query(qt);
    if q.is_empty() {
        return Ok(Vec::new());
    }
    Ok(drop_self(rank_terms(&q, element, index, k + 1)?, qt, index, k))
}

/// Score of one candidate under a keyword baseline.
pub fn keyword_score(qt: &Table, element: KeywordElement, slot: u32, index: &TableIndex) -> Result<f64> {
    let q = element.query(qt);
    match element {
        KeywordElement::Entities => score_lm(&q, slot, TableField::Entities, default_mu(index, TableField::Entities), index),
        KeywordElement::Headings => score_lm(&q, slot, TableField::Headings, default_mu(index, TableField::Headings), index),
        KeywordElement::Caption => score_mlm(&q, slot, &caption_config(index)?, index),
    }
}

/// Candidates per keyword query when pooling.
pub const POOL_DEPTH: usize = 150;

/// Union of the top-`depth` results of the caption query, the entity query
/// (table entities plus the page entity) and the heading query, in first-seen
/// order. The input table is excluded.
pub fn candidate_pool(qt: &Table, index: &TableIndex, kb: Option<&KnowledgeBase>, depth: usize) -> Result<Vec<u32>> {
    let mut entities = qt.entities();
    if let Some(e) = kb.and_then(|kb| kb.page_entity(&qt.page_title)) {
        if !entities.iter().any(|x| x == e) {
            entities.push(e.to_owned());
        }
    }
    let queries = [
        (KeywordElement::Caption, KeywordElement::Caption.query(qt)),
        (KeywordElement::Entities, QueryTerms::new(&entities)),
        (KeywordElement::Headings, KeywordElement::Headings.query(qt)),
    ];
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for (element, q) in queries {
        if q.is_empty() {
            continue;
        }
        for (d, _) in drop_self(rank_terms(&q, element, index, depth + 1)?, qt, index, depth) {
            if seen.insert(d) {
                pool.push(d);
            }
        }
    }
    Ok(pool)
}

/// Parameters and resources for table matching scores.
#[derive(Clone)]
pub struct MatchContext<'a> {
    pub index: &'a TableIndex,
    pub kb: Option<&'a KnowledgeBase>,
    pub featurizer: &'a TableFeaturizer,
    pub delta: f64,
    pub alpha: f64,
    pub aggr: Aggr,
    pub infogather_weights: [f64; 4],
}

impl<'a> MatchContext<'a> {
    pub fn new(index: &'a TableIndex, featurizer: &'a TableFeaturizer) -> Self {
        MatchContext {
            index,
            kb: None,
            featurizer,
            delta: 0.8,
            alpha: 0.5,
            aggr: Aggr::Avg,
            infogather_weights: [0.25; 4],
        }
    }
}

pub const LTR_T1_FEATURES: [&str; 8] = [
    "msje",
    "schema_complement",
    "entity_complement",
    "nguyen",
    "infogather",
    "kw_entities",
    "kw_headings",
    "kw_caption",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LtrTVariant {
    T1,
    T2,
}

/// All matching scores of a candidate (`t1`), plus table features of both
/// tables (`t2`). The candidate must be indexed.
pub fn ltr_t_features(qt: &Table, ct: &Table, variant: LtrTVariant, ctx: &MatchContext) -> Result<FeatureVector> {
    let kb = ctx
        .kb
        .ok_or_else(|| Error::MissingResource("knowledge base".into()))?;
    let slot = ctx
        .index
        .slot(&ct.id)
        .ok_or_else(|| Error::MissingResource(format!("table `{}` is not indexed", ct.id)))?;
    let values = [
        msje_score(qt, ct, ctx.delta),
        schema_complement_score(qt, ct, &ctx.featurizer.stats, ctx.aggr),
        entity_complement_score(qt, ct, kb),
        nguyen_score(qt, ct, ctx.alpha)?,
        infogather_score(qt, ct, ctx.index, &ctx.infogather_weights),
        keyword_score(qt, KeywordElement::Entities, slot, ctx.index)?,
        keyword_score(qt, KeywordElement::Headings, slot, ctx.index)?,
        keyword_score(qt, KeywordElement::Caption, slot, ctx.index)?,
    ];
    let mut out = FeatureVector::default();
    for (n, v) in LTR_T1_FEATURES.iter().zip(values) {
        out.push(*n, v);
    }
    if variant == LtrTVariant::T2 {
        out.extend(ctx.featurizer.features(qt).prefixed("q_"));
        out.extend(ctx.featurizer.features(ct).prefixed("c_"));
    }
    Ok(out)
}
