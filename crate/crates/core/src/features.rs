//! Query, table and query-table features for keyword table search, heading
//! co-occurrence statistics, and the generic feature vector type.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::corpus::Table;
use crate::error::{Error, Result};
use crate::lexical::{score_mlm, MlmConfig, QueryTerms};
use crate::textindex::{tokenize, TableField, TableIndex};

/// Named feature values in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: names.len(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("feature `{}` is not finite", names[i])));
        }
        Ok(FeatureVector { names, values })
    }

    /// Appends a value; non-finite values are stored as 0.
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.names.push(name.into());
        self.values.push(if value.is_finite() { value } else { 0.0 });
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
    }

    pub fn prefixed(&self, prefix: &str) -> FeatureVector {
        FeatureVector {
            names: self.names.iter().map(|n| format!("{prefix}{n}")).collect(),
            values: self.values.clone(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Keeps the named features, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureVector> {
        let mut out = FeatureVector::default();
        for n in names {
            let v = self
                .get(n.as_ref())
                .ok_or_else(|| Error::SchemaMismatch(format!("no feature `{}`", n.as_ref())))?;
            out.push(n.as_ref(), v);
        }
        Ok(out)
    }
}

/// Writes a header of feature names and one row per record, tab-separated,
/// with `qid` and `doc` leading columns.
pub fn write_feature_rows<'a>(
    mut w: impl Write,
    rows: impl IntoIterator<Item = (&'a str, &'a str, &'a FeatureVector)>,
) -> Result<()> {
    let mut header: Option<Vec<String>> = None;
    for (qid, doc, fv) in rows {
        match &header {
            None => {
                writeln!(w, "qid\tdoc\t{}", fv.names().join("\t"))?;
                header = Some(fv.names().to_vec());
            }
            Some(h) if h.as_slice() != fv.names() => {
                return Err(Error::SchemaMismatch(format!("row {qid}/{doc} has a different schema")));
            }
            _ => {}
        }
        write!(w, "{qid}\t{doc}")?;
        for v in fv.values() {
            write!(w, "\t{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Heading frequency and co-occurrence counts over a table collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadingStats {
    single: HashMap<String, u64>,
    pair: HashMap<(String, String), u64>,
    total: u64,
}

/// Lowercases and collapses whitespace.
pub fn normalize_heading(h: &str) -> String {
    h.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl HeadingStats {
    /// Counts tables containing each heading and each unordered heading pair.
    pub fn from_tables(tables: &[Table]) -> Self {
        let mut s = HeadingStats::default();
        for t in tables {
            s.add_table(&t.headings);
        }
        s
    }

    pub fn add_table<S: AsRef<str>>(&mut self, headings: &[S]) {
        let mut hs: Vec<String> = headings
            .iter()
            .map(|h| normalize_heading(h.as_ref()))
            .filter(|h| !h.is_empty())
            .collect();
        hs.sort();
        hs.dedup();
        self.total += 1;
        for (i, a) in hs.iter().enumerate() {
            *self.single.entry(a.clone()).or_default() += 1;
            for b in &hs[i + 1..] {
                *self.pair.entry((a.clone(), b.clone())).or_default() += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, h: &str) -> u64 {
        self.single.get(&normalize_heading(h)).copied().unwrap_or(0)
    }

    /// Tables containing both headings; for equal headings, tables containing it.
    pub fn pair_count(&self, a: &str, b: &str) -> u64 {
        let (a, b) = (normalize_heading(a), normalize_heading(b));
        if a == b {
            return self.single.get(&a).copied().unwrap_or(0);
        }
        self.pair.get(&ordered(&a, &b)).copied().unwrap_or(0)
    }

    /// Reads `#total\tN`, `h\tcount` and `h1\th2\tcount` lines.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut s = HeadingStats::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let syntax = |message: String| Error::Syntax { line: i + 1, message };
            let count = |x: &str| x.trim().parse::<u64>().map_err(|_| syntax(format!("bad count `{x}`")));
            match parts.as_slice() {
                ["#total", n] => s.total = count(n)?,
                [h, n] => {
                    s.single.insert(normalize_heading(h), count(n)?);
                }
                [a, b, n] => {
                    let (a, b) = (normalize_heading(a), normalize_heading(b));
                    s.pair.insert(ordered(&a, &b), count(n)?);
                }
                _ => return Err(syntax(format!("expected 2 or 3 fields, found {}", parts.len()))),
            }
        }
        let max_single = s.single.values().copied().max().unwrap_or(0);
        if s.total < max_single {
            return Err(Error::Format(format!("total {} below a heading count {max_single}", s.total)));
        }
        for ((a, b), n) in &s.pair {
            let bound = s.count(a).min(s.count(b));
            if *n > bound {
                return Err(Error::Format(format!("pair ({a}, {b}) count {n} exceeds {bound}")));
            }
        }
        Ok(s)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "#total\t{}", self.total)?;
        let single: BTreeMap<_, _> = self.single.iter().collect();
        for (h, n) in single {
            writeln!(w, "{h}\t{n}")?;
        }
        let pair: BTreeMap<_, _> = self.pair.iter().collect();
        for ((a, b), n) in pair {
            writeln!(w, "{a}\t{b}\t{n}")?;
        }
        Ok(())
    }
}

/// Pointwise mutual information of two headings; 0 when a count is missing.
pub fn pmi(h1: &str, h2: &str, stats: &HeadingStats) -> f64 {
    let (c1, c2, c12, n) = (stats.count(h1), stats.count(h2), stats.pair_count(h1, h2), stats.total());
    if c1 == 0 || c2 == 0 || c12 == 0 || n == 0 {
        return 0.0;
    }
    let p12 = c12 as f64 / n as f64;
    let p1 = c1 as f64 / n as f64;
    let p2 = c2 as f64 / n as f64;
    (p12 / (p1 * p2)).ln()
}

/// Mean PMI over all unordered heading pairs; 0 with fewer than two headings.
pub fn table_pmi(t: &Table, stats: &HeadingStats) -> f64 {
    let h = &t.headings;
    if h.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            sum += pmi(&h[i], &h[j], stats);
            n += 1;
        }
    }
    sum / n as f64
}

pub const IDF_FIELDS: [TableField; 6] = [
    TableField::PageTitle,
    TableField::SectionTitle,
    TableField::Caption,
    TableField::Headings,
    TableField::Body,
    TableField::Catchall,
];

pub fn query_feature_names() -> Vec<String> {
    let mut v = vec!["QLEN".to_owned()];
    v.extend(IDF_FIELDS.iter().map(|f| format!("IDF_{}", crate::textindex::IndexField::name(*f))));
    v
}

/// QLEN and the summed IDF of the unique query terms per field.
pub fn query_features(q: &str, index: &TableIndex) -> FeatureVector {
    let tokens = tokenize(q);
    let terms = QueryTerms::new(&tokens);
    let mut out = FeatureVector::default();
    out.push("QLEN", tokens.len() as f64);
    for (f, name) in IDF_FIELDS.iter().zip(query_feature_names().into_iter().skip(1)) {
        out.push(name, terms.iter().map(|(t, _)| index.idf(t, *f)).sum::<f64>());
    }
    out
}

pub const TABLE_FEATURES: [&str; 9] = [
    "#rows",
    "#cols",
    "#NULLs",
    "PMI",
    "inLinks",
    "outLinks",
    "pageViews",
    "tableImportance",
    "tablePageFraction",
];

/// Computes table features with corpus-level context.
#[derive(Debug, Clone, Default)]
pub struct TableFeaturizer {
    pub stats: HeadingStats,
    /// Total character length of the corpus tables on each page.
    page_lengths: HashMap<String, u64>,
}

impl TableFeaturizer {
    pub fn new(stats: HeadingStats, tables: &[Table]) -> Self {
        let mut page_lengths: HashMap<String, u64> = HashMap::new();
        for t in tables {
            *page_lengths.entry(t.page_title.clone()).or_default() += t.char_length();
        }
        TableFeaturizer { stats, page_lengths }
    }

    /// Table size over page size, and whether the page size was estimated from
    /// the tables of the page (no page length in the metadata).
    pub fn page_fraction(&self, t: &Table) -> (f64, bool) {
        let len = t.char_length() as f64;
        if let Some(p) = t.page_meta.page_length.filter(|&p| p > 0) {
            return (len / p as f64, false);
        }
        let page = self
            .page_lengths
            .get(&t.page_title)
            .copied()
            .unwrap_or(0)
            .max(t.char_length());
        if page == 0 {
            (1.0, true)
        } else {
            (len / page as f64, true)
        }
    }

    pub fn features(&self, t: &Table) -> FeatureVector {
        let m = &t.page_meta;
        let values = [
            t.num_rows() as f64,
            t.num_columns() as f64,
            t.num_nulls() as f64,
            table_pmi(t, &self.stats),
            m.in_links as f64,
            m.out_links as f64,
            m.page_views as f64,
            1.0 / m.tables_on_page.max(1) as f64,
            self.page_fraction(t).0,
        ];
        let mut out = FeatureVector::default();
        for (n, v) in TABLE_FEATURES.iter().zip(values) {
            out.push(*n, v);
        }
        out
    }
}

/// Offline rank of a table's page for a query, from a cached file.
#[derive(Debug, Clone, Default)]
pub struct YRank {
    ranks: HashMap<(String, String), u32>,
}

impl YRank {
    /// Reads `query \t table_id \t rank` lines.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut ranks = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Syntax { line: i + 1, message: "expected 3 fields".into() });
            }
            let rank = parts[2].trim().parse().map_err(|_| Error::Syntax {
                line: i + 1,
                message: format!("bad rank `{}`", parts[2]),
            })?;
            ranks.insert((parts[0].trim().to_owned(), parts[1].to_owned()), rank);
        }
        Ok(YRank { ranks })
    }

    pub fn insert(&mut self, query: &str, table: &str, rank: u32) {
        self.ranks.insert((query.trim().to_owned(), table.to_owned()), rank);
    }

    /// Rank, or −1 when unavailable.
    pub fn rank(&self, query: &str, table: &str) -> f64 {
        self.ranks
            .get(&(query.trim().to_owned(), table.to_owned()))
            .map_or(-1.0, |&r| r as f64)
    }
}

pub const QUERY_TABLE_FEATURES: [&str; 7] =
    ["#hitsLC", "#hitsSLC", "#hitsB", "qInPgTitle", "qInTableTitle", "yRank", "MLM"];

fn hits<'a>(terms: &HashSet<String>, texts: impl Iterator<Item = &'a str>) -> f64 {
    texts
        .flat_map(tokenize)
        .filter(|t| terms.contains(t))
        .count() as f64
}

fn overlap_ratio(terms: &HashSet<String>, text: &str) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let field: HashSet<String> = tokenize(text).into_iter().collect();
    terms.iter().filter(|t| field.contains(*t)).count() as f64 / terms.len() as f64
}

/// Query-table matching features. The table must be indexed for the MLM score.
pub fn query_table_features(
    q: &str,
    t: &Table,
    index: &TableIndex,
    mlm: &MlmConfig,
    yrank: &YRank,
) -> Result<FeatureVector> {
    let tokens = tokenize(q);
    let terms: HashSet<String> = tokens.iter().cloned().collect();
    let col = |j: usize| t.column(j).map(|c| c.text.as_str());
    let body = t.rows.iter().flatten().map(|c| c.text.as_str());
    let mlm_score = match index.slot(&t.id) {
        Some(slot) => score_mlm(&QueryTerms::new(&tokens), slot, mlm, index)?,
        None => return Err(Error::MissingResource(format!("table `{}` is not indexed", t.id))),
    };
    let values = [
        hits(&terms, col(0)),
        hits(&terms, col(1)),
        hits(&terms, body),
        overlap_ratio(&terms, &t.page_title),
        overlap_ratio(&terms, &t.caption),
        yrank.rank(q, &t.id),
        mlm_score,
    ];
    let mut out = FeatureVector::default();
    for (n, v) in QUERY_TABLE_FEATURES.iter().zip(values) {
        out.push(*n, v);
    }
    Ok(out)
}

/// Features sourced to the WebTables ranker.
pub const WEBTABLE_FEATURES: [&str; 7] = ["#rows", "#cols", "#NULLs", "PMI", "#hitsLC", "#hitsSLC", "#hitsB"];

/// Features sourced to the WikiTables ranker.
pub const WIKITABLE_FEATURES: [&str; 11] = [
    "#rows",
    "#cols",
    "#NULLs",
    "inLinks",
    "outLinks",
    "pageViews",
    "tableImportance",
    "tablePageFraction",
    "qInPgTitle",
    "qInTableTitle",
    "yRank",
];
