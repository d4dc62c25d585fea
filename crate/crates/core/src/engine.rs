//! Loaded stores and method dispatch for keyword search and table matching.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::corpus::Table;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::features::{
    query_feature_names, query_features, query_table_features, FeatureVector, HeadingStats, TableFeaturizer, YRank,
    QUERY_TABLE_FEATURES, TABLE_FEATURES, WEBTABLE_FEATURES, WIKITABLE_FEATURES,
};
use crate::kb::KnowledgeBase;
use crate::lexical::{default_mu, rank_lm, rank_mlm, retrieve_entities, sort_ranking, Fusion, MlmConfig, QueryTerms};
use crate::ltr::{Dataset, Model};
use crate::semantic::{
    query_repr, str_keyword_features, str_keyword_schema, str_table_features, table_keyword_repr, QueryRepr,
    SemanticContext, StrVariant, TableContent, TableRepr,
};
use crate::tablematch::{
    candidate_pool, entity_complement_score, infogather_score, ltr_t_features, msje_score, nguyen_score,
    schema_complement_score, Aggr, LtrTVariant, MatchContext, LTR_T1_FEATURES, POOL_DEPTH,
};
use crate::textindex::{build_table_index, EntityIndex, TableField, TableIndex};

/// Keyword table search methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMethod {
    /// Single-field LM on the catchall field.
    Lm,
    Mlm,
    WebTable,
    WikiTable,
    LtrK,
    StrK,
}

impl SearchMethod {
    pub const ALL: [SearchMethod; 6] = [
        SearchMethod::Lm,
        SearchMethod::Mlm,
        SearchMethod::WebTable,
        SearchMethod::WikiTable,
        SearchMethod::LtrK,
        SearchMethod::StrK,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SearchMethod::Lm => "lm",
            SearchMethod::Mlm => "mlm",
            SearchMethod::WebTable => "wtable",
            SearchMethod::WikiTable => "wikitable",
            SearchMethod::LtrK => "ltr-k",
            SearchMethod::StrK => "str-k",
        }
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, SearchMethod::Lm | SearchMethod::Mlm)
    }

    /// Feature names of a learned method; empty for unsupervised ones.
    pub fn schema(self) -> Vec<String> {
        let mut all = query_feature_names();
        all.extend(TABLE_FEATURES.iter().map(|s| s.to_string()));
        all.extend(QUERY_TABLE_FEATURES.iter().map(|s| s.to_string()));
        match self {
            SearchMethod::Lm | SearchMethod::Mlm => Vec::new(),
            SearchMethod::WebTable => WEBTABLE_FEATURES.iter().map(|s| s.to_string()).collect(),
            SearchMethod::WikiTable => WIKITABLE_FEATURES.iter().map(|s| s.to_string()).collect(),
            SearchMethod::LtrK => all,
            SearchMethod::StrK => {
                all.extend(str_keyword_schema());
                all
            }
        }
    }
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SearchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown search method `{s}`")))
    }
}

/// Table matching methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMethod {
    Msje,
    Schema,
    Entity,
    Nguyen,
    InfoGather,
    LtrT(LtrTVariant),
    StrT(StrVariant),
}

impl MatchMethod {
    pub const ALL: [MatchMethod; 11] = [
        MatchMethod::Msje,
        MatchMethod::Schema,
        MatchMethod::Entity,
        MatchMethod::Nguyen,
        MatchMethod::InfoGather,
        MatchMethod::LtrT(LtrTVariant::T1),
        MatchMethod::LtrT(LtrTVariant::T2),
        MatchMethod::StrT(StrVariant::T1),
        MatchMethod::StrT(StrVariant::T2),
        MatchMethod::StrT(StrVariant::T3),
        MatchMethod::StrT(StrVariant::T4),
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatchMethod::Msje => "msje",
            MatchMethod::Schema => "schema",
            MatchMethod::Entity => "entity",
            MatchMethod::Nguyen => "nguyen",
            MatchMethod::InfoGather => "infogather",
            MatchMethod::LtrT(LtrTVariant::T1) => "ltr-t1",
            MatchMethod::LtrT(LtrTVariant::T2) => "ltr-t2",
            MatchMethod::StrT(StrVariant::T1) => "str-t1",
            MatchMethod::StrT(StrVariant::T2) => "str-t2",
            MatchMethod::StrT(StrVariant::T3) => "str-t3",
            MatchMethod::StrT(StrVariant::T4) => "str-t4",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, MatchMethod::LtrT(_) | MatchMethod::StrT(_))
    }
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MatchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MatchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown match method `{s}`")))
    }
}

/// Tunable parameters. Defaults follow the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// k for R_k.
    pub entity_k: usize,
    pub delta: f64,
    pub alpha: f64,
    pub aggr: Aggr,
    pub infogather_weights: [f64; 4],
    /// MLM field weights for the `mlm` method and the MLM feature.
    pub mlm_weights: Vec<(TableField, f64)>,
    pub fusion: Fusion,
    pub normalize_late_sum: bool,
    /// First-stage MLM depth reranked by learned search methods.
    pub rerank_depth: usize,
    /// Per-query depth of the matching candidate pool.
    pub pool_depth: usize,
}

impl Default for Params {
    fn default() -> Self {
        let fields = [
            TableField::PageTitle,
            TableField::SectionTitle,
            TableField::Caption,
            TableField::Headings,
            TableField::Body,
        ];
        Params {
            entity_k: 10,
            delta: 0.8,
            alpha: 0.5,
            aggr: Aggr::Avg,
            infogather_weights: [0.25; 4],
            mlm_weights: fields.iter().map(|f| (*f, 0.2)).collect(),
            fusion: Fusion::Probability,
            normalize_late_sum: false,
            rerank_depth: 100,
            pool_depth: POOL_DEPTH,
        }
    }
}

/// Optional resources beyond the table corpus.
#[derive(Default)]
pub struct Resources {
    pub kb: Option<KnowledgeBase>,
    pub word: Option<EmbeddingStore>,
    pub graph: Option<EmbeddingStore>,
    /// Heading statistics; computed from the corpus when absent.
    pub heading_stats: Option<HeadingStats>,
    pub yrank: YRank,
}

/// Everything needed to answer search and matching requests. Immutable after
/// construction apart from memoized table representations.
pub struct Engine {
    tables: Vec<Table>,
    index: TableIndex,
    kb: Option<KnowledgeBase>,
    entity_index: Option<EntityIndex>,
    word: Option<EmbeddingStore>,
    graph: Option<EmbeddingStore>,
    featurizer: TableFeaturizer,
    yrank: YRank,
    mlm: MlmConfig,
    params: Params,
    keyword_reprs: Vec<OnceLock<QueryRepr>>,
    table_reprs: Vec<OnceLock<TableRepr>>,
}

impl Engine {
    pub fn new(tables: Vec<Table>, resources: Resources, params: Params) -> Result<Self> {
        let index = build_table_index(&tables)?;
        Self::with_index(tables, index, resources, params)
    }

    /// Uses a prebuilt index; its slots must follow `tables`.
    pub fn with_index(tables: Vec<Table>, index: TableIndex, resources: Resources, params: Params) -> Result<Self> {
        if index.num_docs() != tables.len() || tables.iter().enumerate().any(|(i, t)| index.doc_id(i as u32) != t.id) {
            return Err(Error::SchemaMismatch("index does not match the table corpus".into()));
        }
        let mlm = MlmConfig::new(&params.mlm_weights, &[], &index)?.with_fusion(params.fusion);
        let entity_index = resources.kb.as_ref().map(|kb| kb.build_index()).transpose()?;
        let stats = resources.heading_stats.unwrap_or_else(|| HeadingStats::from_tables(&tables));
        let featurizer = TableFeaturizer::new(stats, &tables);
        let n = tables.len();
        Ok(Engine {
            tables,
            index,
            kb: resources.kb,
            entity_index,
            word: resources.word,
            graph: resources.graph,
            featurizer,
            yrank: resources.yrank,
            mlm,
            params,
            keyword_reprs: (0..n).map(|_| OnceLock::new()).collect(),
            table_reprs: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn index(&self) -> &TableIndex {
        &self.index
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn kb(&self) -> Option<&KnowledgeBase> {
        self.kb.as_ref()
    }

    pub fn table(&self, id: &str) -> Option<&Table> {
        self.index.slot(id).map(|s| &self.tables[s as usize])
    }

    /// Semantic resources; fails unless the KB and both embedding stores are loaded.
    pub fn semantic(&self) -> Result<SemanticContext<'_>> {
        let missing = |what: &str| Error::MissingResource(what.into());
        let kb = self.kb.as_ref().ok_or_else(|| missing("knowledge base"))?;
        let eidx = self.entity_index.as_ref().ok_or_else(|| missing("knowledge base"))?;
        let mut ctx = SemanticContext::new(kb, eidx)?;
        ctx.word = Some(self.word.as_ref().ok_or_else(|| missing("word embeddings"))?);
        ctx.graph = Some(self.graph.as_ref().ok_or_else(|| missing("graph embeddings"))?);
        ctx.table_index = Some(&self.index);
        ctx.k = self.params.entity_k;
        ctx.normalize_late_sum = self.params.normalize_late_sum;
        Ok(ctx)
    }

    pub fn match_context(&self) -> MatchContext<'_> {
        let mut ctx = MatchContext::new(&self.index, &self.featurizer);
        ctx.kb = self.kb.as_ref();
        ctx.delta = self.params.delta;
        ctx.alpha = self.params.alpha;
        ctx.aggr = self.params.aggr;
        ctx.infogather_weights = self.params.infogather_weights;
        ctx
    }

    fn named(&self, mut scored: Vec<(u32, f64)>, k: usize) -> Vec<(String, f64)> {
        sort_ranking(&mut scored, &self.index);
        scored.truncate(k);
        scored.into_iter().map(|(s, v)| (self.index.doc_id(s).to_owned(), v)).collect()
    }

    fn check_model<'m>(&self, model: Option<&'m Model>, schema: &[String], method: &str) -> Result<&'m Model> {
        let m = model.ok_or_else(|| Error::MissingResource(format!("method `{method}` needs a trained model")))?;
        if m.schema() != schema {
            return Err(Error::SchemaMismatch(format!(
                "model has {} features, method `{method}` expects {}",
                m.schema().len(),
                schema.len()
            )));
        }
        Ok(m)
    }

    // ---- keyword search ----

    /// First-stage candidates reranked by learned search methods: the MLM
    /// top `rerank_depth`, then, with a knowledge base, the top tables whose
    /// linked entities match R_k(q).
    pub fn search_candidates(&self, q: &str) -> Result<Vec<u32>> {
        let depth = self.params.rerank_depth;
        let mut out: Vec<u32> = rank_mlm(&QueryTerms::parse(q), &self.mlm, &self.index, Some(depth))?
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        if let Some(eidx) = &self.entity_index {
            let ids = retrieve_entities(q, self.params.entity_k, eidx)?;
            if !ids.is_empty() {
                let field = TableField::Entities;
                let mu = default_mu(&self.index, field);
                let seen: HashSet<u32> = out.iter().copied().collect();
                for (d, _) in rank_lm(&QueryTerms::new(&ids), field, mu, &self.index, Some(depth))? {
                    if !seen.contains(&d) {
                        out.push(d);
                    }
                }
            }
        }
        Ok(out)
    }

    fn keyword_repr(&self, slot: u32, ctx: &SemanticContext) -> Result<&QueryRepr> {
        let cell = &self.keyword_reprs[slot as usize];
        if let Some(r) = cell.get() {
            return Ok(r);
        }
        let r = table_keyword_repr(&self.tables[slot as usize], ctx)?;
        Ok(cell.get_or_init(|| r))
    }

    /// Features of `method` for every slot, in order.
    pub fn search_features(&self, q: &str, method: SearchMethod, slots: &[u32]) -> Result<Vec<FeatureVector>> {
        if !method.is_learned() {
            return Err(Error::InvalidParameter(format!("method `{method}` has no features")));
        }
        let qf = query_features(q, &self.index);
        let ctx = if method == SearchMethod::StrK { Some(self.semantic()?) } else { None };
        let qrepr = ctx.as_ref().map(|c| query_repr(q, c)).transpose()?;
        let schema = method.schema();
        slots
            .par_iter()
            .map(|&s| {
                let t = &self.tables[s as usize];
                let mut fv = qf.clone();
                fv.extend(self.featurizer.features(t));
                fv.extend(query_table_features(q, t, &self.index, &self.mlm, &self.yrank)?);
                match method {
                    SearchMethod::WebTable | SearchMethod::WikiTable => fv.select(&schema),
                    SearchMethod::StrK => {
                        let (ctx, qr) = (ctx.as_ref().unwrap(), qrepr.as_ref().unwrap());
                        fv.extend(str_keyword_features(qr, self.keyword_repr(s, ctx)?, ctx.normalize_late_sum));
                        Ok(fv)
                    }
                    _ => Ok(fv),
                }
            })
            .collect()
    }

    /// Top-`k` tables for a keyword query.
    pub fn search(&self, q: &str, method: SearchMethod, k: usize, model: Option<&Model>) -> Result<Vec<(String, f64)>> {
        let terms = QueryTerms::parse(q);
        let scored = match method {
            SearchMethod::Lm => {
                let mu = default_mu(&self.index, TableField::Catchall);
                rank_lm(&terms, TableField::Catchall, mu, &self.index, None)?
            }
            SearchMethod::Mlm => rank_mlm(&terms, &self.mlm, &self.index, None)?,
            _ => {
                let model = self.check_model(model, &method.schema(), method.name())?;
                let slots = self.search_candidates(q)?;
                let rows = self.search_features(q, method, &slots)?;
                slots.into_iter().zip(rows).map(|(s, fv)| (s, model.predict_values(fv.values()))).collect()
            }
        };
        Ok(self.named(scored, k))
    }

    /// Training rows for a learned search method: every first-stage
    /// candidate of every query, labelled from `qrels` (0 when unjudged).
    pub fn search_dataset(&self, queries: &[(String, String)], qrels: &Qrels, method: SearchMethod) -> Result<Dataset> {
        let mut data = Dataset::new(method.schema());
        for (qid, text) in queries {
            let slots = self.search_candidates(text)?;
            for (s, fv) in slots.iter().zip(self.search_features(text, method, &slots)?) {
                let id = self.index.doc_id(*s);
                data.push(qid, id, &fv, qrels.grade(qid, id))?;
            }
        }
        Ok(data)
    }

    // ---- table matching ----

    /// Candidate pool of an input table.
    pub fn match_candidates(&self, qt: &Table) -> Result<Vec<u32>> {
        candidate_pool(qt, &self.index, self.kb.as_ref(), self.params.pool_depth)
    }

    fn table_repr(&self, slot: u32, ctx: &SemanticContext) -> Result<&TableRepr> {
        let cell = &self.table_reprs[slot as usize];
        if let Some(r) = cell.get() {
            return Ok(r);
        }
        let r = TableRepr::build(&TableContent::extract(&self.tables[slot as usize], ctx)?, ctx)?;
        Ok(cell.get_or_init(|| r))
    }

    /// Feature names of a learned matching method.
    pub fn match_schema(&self, method: MatchMethod) -> Result<Vec<String>> {
        Ok(match method {
            MatchMethod::LtrT(v) => {
                let mut s: Vec<String> = LTR_T1_FEATURES.iter().map(|s| s.to_string()).collect();
                if v == LtrTVariant::T2 {
                    s.extend(TABLE_FEATURES.iter().map(|n| format!("q_{n}")));
                    s.extend(TABLE_FEATURES.iter().map(|n| format!("c_{n}")));
                }
                s
            }
            MatchMethod::StrT(v) => {
                let ctx = self.semantic()?;
                let empty = TableRepr::build(&TableContent::extract(&Table::default(), &ctx)?, &ctx)?;
                let tf = self.featurizer.features(&Table::default());
                str_table_features(&empty, &empty, v, &tf, &tf, false).names().to_vec()
            }
            _ => return Err(Error::InvalidParameter(format!("method `{method}` has no features"))),
        })
    }

    /// Features of a learned matching method for every slot, in order.
    pub fn match_features(&self, qt: &Table, method: MatchMethod, slots: &[u32]) -> Result<Vec<FeatureVector>> {
        let mctx = self.match_context();
        match method {
            MatchMethod::LtrT(v) => slots
                .par_iter()
                .map(|&s| ltr_t_features(qt, &self.tables[s as usize], v, &mctx))
                .collect(),
            MatchMethod::StrT(v) => {
                let ctx = self.semantic()?;
                let own;
                let qrepr = match self.index.slot(&qt.id).filter(|&s| self.tables[s as usize] == *qt) {
                    Some(s) => self.table_repr(s, &ctx)?,
                    None => {
                        own = TableRepr::build(&TableContent::extract(qt, &ctx)?, &ctx)?;
                        &own
                    }
                };
                let qtab = self.featurizer.features(qt);
                slots
                    .par_iter()
                    .map(|&s| {
                        let ct = &self.tables[s as usize];
                        let crepr = self.table_repr(s, &ctx)?;
                        Ok(str_table_features(qrepr, crepr, v, &qtab, &self.featurizer.features(ct), ctx.normalize_late_sum))
                    })
                    .collect()
            }
            _ => Err(Error::InvalidParameter(format!("method `{method}` has no features"))),
        }
    }

    /// Scores of an unsupervised matching method.
    fn match_scores(&self, qt: &Table, method: MatchMethod, slots: &[u32]) -> Result<Vec<f64>> {
        let p = &self.params;
        let kb = || self.kb.as_ref().ok_or_else(|| Error::MissingResource("knowledge base".into()));
        if method == MatchMethod::Entity {
            kb()?;
        }
        slots
            .par_iter()
            .map(|&s| {
                let ct = &self.tables[s as usize];
                Ok(match method {
                    MatchMethod::Msje => msje_score(qt, ct, p.delta),
                    MatchMethod::Schema => schema_complement_score(qt, ct, &self.featurizer.stats, p.aggr),
                    MatchMethod::Entity => entity_complement_score(qt, ct, kb()?),
                    MatchMethod::Nguyen => nguyen_score(qt, ct, p.alpha)?,
                    MatchMethod::InfoGather => infogather_score(qt, ct, &self.index, &p.infogather_weights),
                    _ => unreachable!("learned methods are scored by a model"),
                })
            })
            .collect()
    }

    /// Top-`k` related tables of an input table, reranking its candidate pool.
    pub fn match_table(&self, qt: &Table, method: MatchMethod, k: usize, model: Option<&Model>) -> Result<Vec<(String, f64)>> {
        if qt.headings.is_empty() && qt.rows.is_empty() && qt.caption.trim().is_empty() {
            return Err(Error::InvalidParameter("input table is empty".into()));
        }
        let slots = self.match_candidates(qt)?;
        let scores = if method.is_learned() {
            let model = self.check_model(model, &self.match_schema(method)?, method.name())?;
            self.match_features(qt, method, &slots)?
                .iter()
                .map(|fv| model.predict_values(fv.values()))
                .collect()
        } else {
            self.match_scores(qt, method, &slots)?
        };
        Ok(self.named(slots.into_iter().zip(scores).collect(), k))
    }

    /// Training rows for a learned matching method over the candidate pools.
    pub fn match_dataset(&self, inputs: &[(String, Table)], qrels: &Qrels, method: MatchMethod) -> Result<Dataset> {
        let mut data = Dataset::new(self.match_schema(method)?);
        for (qid, qt) in inputs {
            let slots = self.match_candidates(qt)?;
            for (s, fv) in slots.iter().zip(self.match_features(qt, method, &slots)?) {
                let id = self.index.doc_id(*s);
                data.push(qid, id, &fv, qrels.grade(qid, id))?;
            }
        }
        Ok(data)
    }
}
