//! TOML configuration with command-line overrides.
//!
//! Every section and key is optional. Relative paths are resolved against the
//! directory holding the config file, and every path that is set must exist.
//!
//! ```toml
//! [paths]
//! index = "idx"
//! kb = "entities.jsonl"
//! outlinks = "links.tsv"
//! word_emb = "words.txt"
//! graph_emb = "graph.txt"
//!
//! [retrieval]
//! entity_k = 10
//! delta = 0.8
//! mlm_weights = { caption = 0.5, body = 0.5 }
//!
//! [learning]
//! n_trees = 1000
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tablesearch::engine::{Params, SearchMethod};
use tablesearch::eval::Gain;
use tablesearch::lexical::Fusion;
use tablesearch::ltr::{FeatureSampling, ForestConfig, Learner};
use tablesearch::tablematch::{Aggr, POOL_DEPTH};
use tablesearch::textindex::TableField;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub retrieval: Retrieval,
    pub learning: Learning,
}

/// Input artifacts. Unset stores are simply not loaded.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub outlinks: Option<PathBuf>,
    pub word_emb: Option<PathBuf>,
    pub graph_emb: Option<PathBuf>,
    pub heading_stats: Option<PathBuf>,
    pub yrank: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Retrieval {
    /// Entities retrieved per query (k of R_k). Default 10.
    pub entity_k: usize,
    /// Heading match threshold for msje. Default 0.8.
    pub delta: f64,
    /// Heading weight in the Nguyen score. Default 0.5.
    pub alpha: f64,
    /// Aggregator for the schema complement score. Default `avg`.
    pub aggr: Aggr,
    /// MLM field weights keyed by field name. Default: uniform over page
    /// title, section title, caption, headings and body.
    pub mlm_weights: Option<BTreeMap<String, f64>>,
    /// Default `probability`.
    pub fusion: Fusion,
    /// Divide the Late-sum similarity by the number of pairs. Default false.
    pub normalize_late_sum: bool,
    /// First-stage depth for learned search methods. Default 100.
    pub rerank_depth: usize,
    /// Per-run depth of the table-matching candidate pool. Default 150.
    pub pool_depth: usize,
    /// InfoGather element weights: data, column values, page title, headings.
    pub infogather_weights: [f64; 4],
}

impl Default for Retrieval {
    fn default() -> Self {
        let p = Params::default();
        Retrieval {
            entity_k: p.entity_k,
            delta: p.delta,
            alpha: p.alpha,
            aggr: p.aggr,
            mlm_weights: None,
            fusion: p.fusion,
            normalize_late_sum: p.normalize_late_sum,
            rerank_depth: p.rerank_depth,
            pool_depth: POOL_DEPTH,
            infogather_weights: p.infogather_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Learning {
    /// Default 1000.
    pub n_trees: usize,
    /// Features drawn per split. Default 3.
    pub mtry: usize,
    /// Default 1.
    pub min_leaf: usize,
    /// Unlimited when unset.
    pub max_depth: Option<usize>,
    /// `per_split` (default) or `per_tree`.
    pub sampling: FeatureSampling,
    /// Default true.
    pub bootstrap: bool,
    /// Lasso penalty for the `wikitable` method. Default 0.01.
    pub lasso_lambda: f64,
    /// Cross-validation folds. Default 5.
    pub folds: usize,
    /// Seeds every random choice. Default 0.
    pub seed: u64,
    /// Default `exponential`.
    pub gain: Gain,
    /// NDCG cutoff. Default 10.
    pub cutoff: usize,
}

impl Default for Learning {
    fn default() -> Self {
        let f = ForestConfig::default();
        Learning {
            n_trees: f.n_trees,
            mtry: f.mtry,
            min_leaf: f.min_leaf,
            max_depth: f.max_depth,
            sampling: f.sampling,
            bootstrap: f.bootstrap,
            lasso_lambda: 0.01,
            folds: 5,
            seed: 0,
            gain: Gain::Exponential,
            cutoff: 10,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.paths.all_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fails on the first configured path that does not exist.
    pub fn check_paths(&self) -> Result<(), CliError> {
        let p = &self.paths;
        // The index directory is an output of build-index.
        for path in [&p.corpus, &p.kb, &p.outlinks, &p.word_emb, &p.graph_emb, &p.heading_stats, &p.yrank]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(CliError::Data(format!("{}: no such file", path.display())));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<Params, CliError> {
        let r = &self.retrieval;
        let mut p = Params {
            entity_k: r.entity_k,
            delta: r.delta,
            alpha: r.alpha,
            aggr: r.aggr,
            infogather_weights: r.infogather_weights,
            fusion: r.fusion,
            normalize_late_sum: r.normalize_late_sum,
            rerank_depth: r.rerank_depth,
            pool_depth: r.pool_depth,
            ..Params::default()
        };
        if let Some(w) = &r.mlm_weights {
            p.mlm_weights = w
                .iter()
                .map(|(f, w)| Ok((f.parse::<TableField>().map_err(|e| CliError::Usage(e.to_string()))?, *w)))
                .collect::<Result<_, CliError>>()?;
        }
        if r.entity_k == 0 {
            return Err(CliError::Usage("entity_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&r.delta) || !(0.0..=1.0).contains(&r.alpha) {
            return Err(CliError::Usage("delta and alpha must lie in [0, 1]".into()));
        }
        Ok(p)
    }

    pub fn forest(&self) -> ForestConfig {
        let l = &self.learning;
        ForestConfig {
            n_trees: l.n_trees,
            mtry: l.mtry,
            min_leaf: l.min_leaf,
            max_depth: l.max_depth,
            seed: l.seed,
            sampling: l.sampling,
            bootstrap: l.bootstrap,
        }
    }

    /// Linear regression for `wtable`, Lasso for `wikitable`, a random
    /// forest for everything else.
    pub fn learner(&self, method: &str) -> Learner {
        match method.parse::<SearchMethod>() {
            Ok(SearchMethod::WebTable) => Learner::LeastSquares,
            Ok(SearchMethod::WikiTable) => Learner::Lasso { lambda: self.learning.lasso_lambda },
            _ => Learner::Forest(self.forest()),
        }
    }
}

impl Paths {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 8] {
        [
            &mut self.corpus,
            &mut self.index,
            &mut self.kb,
            &mut self.outlinks,
            &mut self.word_emb,
            &mut self.graph_emb,
            &mut self.heading_stats,
            &mut self.yrank,
        ]
    }
}
