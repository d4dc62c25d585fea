use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use tablesearch::engine::{MatchMethod, SearchMethod};
use tablesearch::eval::Gain;

#[derive(Debug, Parser)]
#[command(name = "tablesearch", version, about = "Keyword and table-to-table retrieval over web tables")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Index directory.
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Knowledge-base entity records (JSON lines).
    #[arg(long, global = true)]
    pub kb: Option<PathBuf>,
    /// Entity out-links (`source \t target` lines).
    #[arg(long, global = true)]
    pub outlinks: Option<PathBuf>,
    /// Word embeddings (`term v1 v2 ...` lines).
    #[arg(long, global = true)]
    pub word_emb: Option<PathBuf>,
    /// Entity embeddings (`id v1 v2 ...` lines).
    #[arg(long, global = true)]
    pub graph_emb: Option<PathBuf>,
    /// Heading counts; computed from the corpus when absent.
    #[arg(long, global = true)]
    pub heading_stats: Option<PathBuf>,
    /// Cached web-search ranks (`query \t table \t rank` lines).
    #[arg(long, global = true)]
    pub yrank: Option<PathBuf>,
    /// Seed for forests and fold assignment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `exponential` or `linear`.
    #[arg(long, global = true)]
    pub gain: Option<Gain>,
    /// Heading match threshold for msje.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Heading weight for nguyen.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Cross-validation folds; `train` reports CV NDCG when set.
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Number of trees for random-forest learners.
    #[arg(long, global = true)]
    pub trees: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a corpus and write an index directory.
    BuildIndex {
        /// Corpus of table records, one JSON object per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Abort on the first malformed record instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Rank tables for keyword queries; prints a TREC run.
    Search {
        #[arg(long, required_unless_present = "queries", conflicts_with = "queries")]
        query: Option<String>,
        #[arg(long, default_value = "q1")]
        qid: String,
        /// Tab-separated `qid \t query` lines.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        method: SearchMethod,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Trained model for learned methods.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank tables related to input tables; prints a TREC run keyed by input id.
    MatchTable {
        /// One JSON table, or JSON lines of tables.
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        method: MatchMethod,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit a model on a feature file.
    Train {
        /// Feature file as written by `features`.
        #[arg(long)]
        data: PathBuf,
        /// Learned method the features belong to; selects the learner.
        #[arg(long)]
        method: AnyMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against relevance judgments.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Second run compared with a paired t-test.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Dump the feature vectors of a learned method.
    Features {
        #[arg(long)]
        method: AnyMethod,
        /// Keyword queries (`qid \t query`) for search methods.
        #[arg(long, conflicts_with = "tables")]
        queries: Option<PathBuf>,
        /// Input tables (JSON lines) for matching methods.
        #[arg(long)]
        tables: Option<PathBuf>,
        /// Labels; instances without a judgment get 0.
        #[arg(long)]
        qrels: Option<PathBuf>,
    },
    /// Serve search and matching over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Trained models; each serves the methods whose schema it fits.
        #[arg(long)]
        model: Vec<PathBuf>,
    },
}

/// A search or matching method name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnyMethod {
    Search(SearchMethod),
    Match(MatchMethod),
}

impl AnyMethod {
    pub fn is_learned(self) -> bool {
        match self {
            AnyMethod::Search(m) => m.is_learned(),
            AnyMethod::Match(m) => m.is_learned(),
        }
    }
}

impl FromStr for AnyMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Ok(m) = s.parse() {
            return Ok(AnyMethod::Search(m));
        }
        s.parse().map(AnyMethod::Match).map_err(|_| {
            let names: Vec<&str> = SearchMethod::ALL
                .iter()
                .map(|m| m.name())
                .chain(MatchMethod::ALL.iter().map(|m| m.name()))
                .collect();
            format!("unknown method `{s}` (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for AnyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnyMethod::Search(m) => m.fmt(f),
            AnyMethod::Match(m) => m.fmt(f),
        }
    }
}
