//! Subcommand implementations. Each writes its primary output to `out`;
//! diagnostics go to stderr.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use tablesearch::corpus::{parse_corpus, resolve_entity_links, write_corpus, CorpusFormat, LinkStats, ParseMode, Table};
use tablesearch::embeddings::{EmbeddingKind, EmbeddingStore};
use tablesearch::engine::{Engine, MatchMethod, Resources, SearchMethod};
use tablesearch::eval::{ndcg_at_k, paired_ttest, Qrels, Run};
use tablesearch::features::{HeadingStats, YRank};
use tablesearch::kb::KnowledgeBase;
use tablesearch::ltr::{cross_validate, Dataset, Model};
use tablesearch::textindex::{build_table_index, IndexField, TableField, TableIndex};

use crate::args::{AnyMethod, Cli, Command, GlobalArgs};
use crate::config::Config;
use crate::{service, CliError};

/// Corpus copy stored next to the index.
pub const TABLES_FILE: &str = "tables.jsonl";
pub const STATS_FILE: &str = "stats.json";

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::BuildIndex { corpus, strict } => build_index(&cfg, corpus, strict, out),
        Command::Search { query, qid, queries, method, k, model } => {
            let queries = match (query, queries) {
                (Some(q), _) => vec![(qid, q)],
                (None, Some(path)) => read_queries(&path)?,
                (None, None) => return Err(CliError::Usage("one of --query or --queries is required".into())),
            };
            let model = load_model_for(method.is_learned(), model.as_deref(), method.name())?;
            let engine = load_engine(&cfg)?;
            let run = search_run(&engine, &queries, method, k, model.as_ref())?;
            out.write_all(render(&run, method.name()).as_bytes())?;
            Ok(())
        }
        Command::MatchTable { table, method, k, model } => {
            let inputs = read_tables(&table)?;
            let model = load_model_for(method.is_learned(), model.as_deref(), method.name())?;
            let engine = load_engine(&cfg)?;
            let run = match_run(&engine, &inputs, method, k, model.as_ref())?;
            out.write_all(render(&run, method.name()).as_bytes())?;
            Ok(())
        }
        Command::Train { data, method, out: path } => train(&cfg, &data, method, cli.global.folds, &path, out),
        Command::Eval { run, qrels, k, baseline } => eval(&cfg, &run, &qrels, k, baseline.as_deref(), out),
        Command::Features { method, queries, tables, qrels } => {
            features(&cfg, method, queries.as_deref(), tables.as_deref(), qrels.as_deref(), out)
        }
        Command::Serve { host, port, model } => {
            let models = model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;
            let state = service::State::from_config(&cfg, models)?;
            service::serve(state, &host, port)
        }
    }
}

/// Loads the config file, if any, and applies flag overrides.
pub fn resolve_config(g: &GlobalArgs) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.index, &g.index),
        (&mut p.kb, &g.kb),
        (&mut p.outlinks, &g.outlinks),
        (&mut p.word_emb, &g.word_emb),
        (&mut p.graph_emb, &g.graph_emb),
        (&mut p.heading_stats, &g.heading_stats),
        (&mut p.yrank, &g.yrank),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    let l = &mut cfg.learning;
    l.seed = g.seed.unwrap_or(l.seed);
    l.gain = g.gain.unwrap_or(l.gain);
    l.folds = g.folds.unwrap_or(l.folds);
    l.n_trees = g.trees.unwrap_or(l.n_trees);
    let r = &mut cfg.retrieval;
    r.delta = g.delta.unwrap_or(r.delta);
    r.alpha = g.alpha.unwrap_or(r.alpha);
    cfg.params()?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn context(path: &Path) -> impl Fn(tablesearch::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn build_index(cfg: &Config, corpus: Option<PathBuf>, strict: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = corpus
        .or_else(|| cfg.paths.corpus.clone())
        .ok_or_else(|| CliError::Usage("--corpus is required".into()))?;
    let dir = cfg.paths.index.clone().ok_or_else(|| CliError::Usage("--index is required".into()))?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let parsed = parse_corpus(open(&corpus)?, CorpusFormat::JsonLines, mode).map_err(context(&corpus))?;
    for d in &parsed.diagnostics {
        eprintln!("{}:{}: skipped: {}", corpus.display(), d.line, d.message);
    }
    let mut tables = parsed.tables;
    let mut links = None;
    if let Some(kb) = load_kb(cfg)? {
        let mut total = LinkStats::default();
        tables = tables
            .into_iter()
            .map(|t| {
                let (t, s) = resolve_entity_links(t, &kb);
                total += s;
                t
            })
            .collect();
        links = Some(total);
    }
    let index = build_table_index(&tables)?;
    index.save(&dir)?;
    write_corpus(&tables, std::io::BufWriter::new(File::create(dir.join(TABLES_FILE))?))?;

    let fields: serde_json::Map<String, serde_json::Value> = TableField::ALL
        .iter()
        .map(|&f| {
            let s = index.field_stats(f);
            (f.name().to_owned(), json!({ "docs": s.doc_count, "terms": s.total_terms }))
        })
        .collect();
    let mut stats = json!({
        "tables": index.num_docs(),
        "vocabulary": index.num_terms(),
        "skipped": parsed.diagnostics.len(),
        "fields": fields,
    });
    if let Some(l) = links {
        stats["links"] = json!({ "resolved": l.resolved, "cleared": l.cleared });
    }
    let text = serde_json::to_string_pretty(&stats).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(dir.join(STATS_FILE), format!("{text}\n"))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn load_kb(cfg: &Config) -> Result<Option<KnowledgeBase>, CliError> {
    let Some(path) = &cfg.paths.kb else {
        return Ok(None);
    };
    let links = cfg.paths.outlinks.as_deref().map(open).transpose()?;
    Ok(Some(KnowledgeBase::load(open(path)?, links).map_err(context(path))?))
}

fn load_embeddings(path: Option<&Path>, kind: EmbeddingKind) -> Result<Option<EmbeddingStore>, CliError> {
    path.map(|p| EmbeddingStore::load(kind, open(p)?).map_err(context(p))).transpose()
}

/// Builds an engine from the index directory and whichever stores are configured.
pub fn load_engine(cfg: &Config) -> Result<Engine, CliError> {
    let dir = cfg.paths.index.as_deref().ok_or_else(|| CliError::Usage("--index is required".into()))?;
    let tables_path = dir.join(TABLES_FILE);
    let tables = parse_corpus(open(&tables_path)?, CorpusFormat::JsonLines, ParseMode::Strict)
        .map_err(context(&tables_path))?
        .tables;
    let index = TableIndex::load(dir).map_err(context(dir))?;
    let p = &cfg.paths;
    let resources = Resources {
        kb: load_kb(cfg)?,
        word: load_embeddings(p.word_emb.as_deref(), EmbeddingKind::Word)?,
        graph: load_embeddings(p.graph_emb.as_deref(), EmbeddingKind::Graph)?,
        heading_stats: p
            .heading_stats
            .as_deref()
            .map(|path| HeadingStats::read(open(path)?).map_err(context(path)))
            .transpose()?,
        yrank: match p.yrank.as_deref() {
            Some(path) => YRank::read(open(path)?).map_err(context(path))?,
            None => YRank::default(),
        },
    };
    Ok(Engine::with_index(tables, index, resources, cfg.params()?)?)
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    Model::load(open(path)?).map_err(context(path))
}

fn load_model_for(learned: bool, path: Option<&Path>, method: &str) -> Result<Option<Model>, CliError> {
    match (learned, path) {
        (true, Some(p)) => load_model(p).map(Some),
        (true, None) => Err(CliError::Usage(format!("method `{method}` requires --model"))),
        (false, Some(_)) => Err(CliError::Usage(format!("method `{method}` does not take a model"))),
        (false, None) => Ok(None),
    }
}

/// Reads `qid \t query` lines.
pub fn read_queries(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, q) = line
            .split_once('\t')
            .ok_or_else(|| CliError::Data(format!("{}:{}: expected `qid<TAB>query`", path.display(), i + 1)))?;
        if !seen.insert(qid.to_owned()) {
            return Err(CliError::Data(format!("{}:{}: duplicate query id `{qid}`", path.display(), i + 1)));
        }
        out.push((qid.to_owned(), q.to_owned()));
    }
    Ok(out)
}

/// Reads a single JSON table or JSON lines of tables, keyed by table id.
pub fn read_tables(path: &Path) -> Result<Vec<(String, Table)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let tables = match serde_json::from_str::<Table>(&text) {
        Ok(t) => {
            t.validate().map_err(context(path))?;
            vec![t]
        }
        Err(_) => {
            parse_corpus(text.as_bytes(), CorpusFormat::JsonLines, ParseMode::Strict)
                .map_err(context(path))?
                .tables
        }
    };
    if tables.is_empty() {
        return Err(CliError::Data(format!("{}: no tables", path.display())));
    }
    Ok(tables.into_iter().map(|t| (t.id.clone(), t)).collect())
}

pub fn search_run(
    engine: &Engine,
    queries: &[(String, String)],
    method: SearchMethod,
    k: usize,
    model: Option<&Model>,
) -> Result<Run, CliError> {
    let mut run = Run::new();
    for (qid, q) in queries {
        run.insert(qid, engine.search(q, method, k, model)?)?;
    }
    Ok(run)
}

pub fn match_run(
    engine: &Engine,
    inputs: &[(String, Table)],
    method: MatchMethod,
    k: usize,
    model: Option<&Model>,
) -> Result<Run, CliError> {
    let mut run = Run::new();
    for (qid, t) in inputs {
        run.insert(qid, engine.match_table(t, method, k, model)?)?;
    }
    Ok(run)
}

/// TREC run text shared by the CLI and the service.
pub fn render(run: &Run, tag: &str) -> String {
    let mut buf = Vec::new();
    run.write(&mut buf, tag).expect("writing to memory");
    String::from_utf8(buf).expect("run text is UTF-8")
}

fn train(
    cfg: &Config,
    data: &Path,
    method: AnyMethod,
    folds: Option<usize>,
    path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !method.is_learned() {
        return Err(CliError::Usage(format!("method `{method}` is not learned")));
    }
    let data_set = Dataset::read(open(data)?).map_err(context(data))?;
    if let AnyMethod::Search(m) = method {
        if data_set.schema() != m.schema().as_slice() {
            return Err(CliError::Data(format!("{}: features do not match method `{m}`", data.display())));
        }
    }
    let learner = cfg.learner(&method.to_string());
    let model = Model::fit(&data_set, &learner)?;
    let mut file = std::io::BufWriter::new(File::create(path)?);
    model.save(&mut file)?;
    file.flush()?;

    let mut summary = json!({
        "method": method.to_string(),
        "instances": data_set.len(),
        "queries": data_set.queries().len(),
        "features": data_set.schema().len(),
        "model": path.display().to_string(),
    });
    if let Some(k) = folds {
        let l = &cfg.learning;
        let cv = cross_validate(&data_set, &learner, k, l.cutoff, l.gain, l.seed)?;
        summary["cv"] = json!({ "folds": k, "cutoff": l.cutoff, "ndcg": cv.metric.mean, "fold_means": cv.fold_means });
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&summary).map_err(|e| CliError::Data(e.to_string()))?)?;
    Ok(())
}

fn eval(
    cfg: &Config,
    run: &Path,
    qrels: &Path,
    k: usize,
    baseline: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let gain = cfg.learning.gain;
    let qrels = Qrels::read(open(qrels)?).map_err(context(qrels))?;
    let r = Run::read(open(run)?).map_err(context(run))?;
    let metric = ndcg_at_k(&r, &qrels, k, gain)?;
    let name = format!("ndcg_cut_{k}");
    metric.write_tsv(&mut *out, &name)?;
    if let Some(b) = baseline {
        let base = ndcg_at_k(&Run::read(open(b)?).map_err(context(b))?, &qrels, k, gain)?;
        let queries: Vec<&String> = metric.per_query.keys().chain(base.per_query.keys()).collect::<BTreeSet<_>>().into_iter().collect();
        let t = paired_ttest(&metric.aligned(&queries), &base.aligned(&queries))?;
        writeln!(out, "ttest\tt\t{:.6}", t.t)?;
        writeln!(out, "ttest\tp\t{:.6}", t.p)?;
    }
    Ok(())
}

fn features(
    cfg: &Config,
    method: AnyMethod,
    queries: Option<&Path>,
    tables: Option<&Path>,
    qrels: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !method.is_learned() {
        return Err(CliError::Usage(format!("method `{method}` has no features")));
    }
    let qrels = match qrels {
        Some(p) => Qrels::read(open(p)?).map_err(context(p))?,
        None => Qrels::new(),
    };
    let data = match method {
        AnyMethod::Search(m) => {
            let path = queries.ok_or_else(|| CliError::Usage(format!("method `{m}` requires --queries")))?;
            let queries = read_queries(path)?;
            load_engine(cfg)?.search_dataset(&queries, &qrels, m)?
        }
        AnyMethod::Match(m) => {
            let path = tables.ok_or_else(|| CliError::Usage(format!("method `{m}` requires --tables")))?;
            let inputs = read_tables(path)?;
            load_engine(cfg)?.match_dataset(&inputs, &qrels, m)?
        }
    };
    data.write(&mut *out)?;
    Ok(())
}
