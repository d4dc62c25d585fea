//! Relevance judgments, runs, NDCG, paired t-tests and pooling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Graded judgments keyed by query and document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, f64>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: &str, doc: &str, grade: f64) -> Result<()> {
        if !(grade >= 0.0) || !grade.is_finite() {
            return Err(Error::InvalidParameter(format!("grade must be nonnegative, got {grade}")));
        }
        self.judgments
            .entry(qid.to_owned())
            .or_default()
            .insert(doc.to_owned(), grade);
        Ok(())
    }

    /// Reads `qid 0 doc grade` lines.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut q = Qrels::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let syntax = |message: String| Error::Syntax { line: i + 1, message };
            if parts.len() != 4 {
                return Err(syntax(format!("expected 4 columns, found {}", parts.len())));
            }
            let grade: f64 = parts[3]
                .parse()
                .map_err(|_| syntax(format!("bad grade `{}`", parts[3])))?;
            q.insert(parts[0], parts[2], grade).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(q)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        for (qid, docs) in &self.judgments {
            let mut docs: Vec<_> = docs.iter().collect();
            docs.sort_by(|a, b| a.0.cmp(b.0));
            for (doc, g) in docs {
                writeln!(w, "{qid} 0 {doc} {g}")?;
            }
        }
        Ok(())
    }

    pub fn grade(&self, qid: &str, doc: &str) -> f64 {
        self.judgments
            .get(qid)
            .and_then(|d| d.get(doc))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn judged(&self, qid: &str) -> Option<&HashMap<String, f64>> {
        self.judgments.get(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Ranked results per query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Run {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a ranking given in rank order. Duplicate documents are rejected.
    pub fn insert(&mut self, qid: &str, ranking: Vec<(String, f64)>) -> Result<()> {
        let mut seen = HashSet::new();
        for (doc, _) in &ranking {
            if !seen.insert(doc.as_str()) {
                return Err(Error::DuplicateId(format!("{doc} in ranking for query {qid}")));
            }
        }
        self.rankings.insert(qid.to_owned(), ranking);
        Ok(())
    }

    /// Reads `qid Q0 doc rank score tag` lines; rankings follow the rank column.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut raw: BTreeMap<String, Vec<(u64, String, f64)>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let syntax = |message: String| Error::Syntax { line: i + 1, message };
            if parts.len() != 6 {
                return Err(syntax(format!("expected 6 columns, found {}", parts.len())));
            }
            let rank: u64 = parts[3].parse().map_err(|_| syntax(format!("bad rank `{}`", parts[3])))?;
            let score: f64 = parts[4].parse().map_err(|_| syntax(format!("bad score `{}`", parts[4])))?;
            raw.entry(parts[0].to_owned())
                .or_default()
                .push((rank, parts[2].to_owned(), score));
        }
        let mut run = Run::new();
        for (qid, mut rows) in raw {
            rows.sort_by_key(|r| r.0);
            run.insert(&qid, rows.into_iter().map(|(_, d, s)| (d, s)).collect())?;
        }
        Ok(run)
    }

    pub fn write(&self, mut w: impl Write, tag: &str) -> Result<()> {
        for (qid, ranking) in &self.rankings {
            for (i, (doc, score)) in ranking.iter().enumerate() {
                writeln!(w, "{qid} Q0 {doc} {} {score} {tag}", i + 1)?;
            }
        }
        Ok(())
    }

    pub fn ranking(&self, qid: &str) -> &[(String, f64)] {
        self.rankings.get(qid).map_or(&[], Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// 2^rel − 1
    #[default]
    Exponential,
    /// rel
    Linear,
}

impl Gain {
    pub fn apply(self, rel: f64) -> f64 {
        match self {
            Gain::Exponential => rel.exp2() - 1.0,
            Gain::Linear => rel,
        }
    }
}

impl FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(Gain::Exponential),
            "linear" => Ok(Gain::Linear),
            _ => Err(Error::InvalidParameter(format!("unknown gain `{s}`"))),
        }
    }
}

/// DCG of the first `k` grades.
pub fn dcg(grades: &[f64], k: usize, gain: Gain) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of one ranking; 0 when no judged document has a positive grade.
pub fn ndcg<S: AsRef<str>>(ranking: &[S], judged: Option<&HashMap<String, f64>>, k: usize, gain: Gain) -> f64 {
    let Some(judged) = judged else { return 0.0 };
    let mut ideal: Vec<f64> = judged.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k, gain);
    if idcg <= 0.0 {
        return 0.0;
    }
    let grades: Vec<f64> = ranking
        .iter()
        .take(k)
        .map(|d| judged.get(d.as_ref()).copied().unwrap_or(0.0))
        .collect();
    dcg(&grades, k, gain) / idcg
}

/// Per-query values and their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricResult {
    /// Tab-separated `qid value` lines followed by `all mean`.
    pub fn write_tsv(&self, mut w: impl Write, name: &str) -> Result<()> {
        for (q, v) in &self.per_query {
            writeln!(w, "{name}\t{q}\t{v:.6}")?;
        }
        writeln!(w, "{name}\tall\t{:.6}", self.mean)?;
        Ok(())
    }

    /// Values aligned to `queries`, 0 where missing.
    pub fn aligned<S: AsRef<str>>(&self, queries: &[S]) -> Vec<f64> {
        queries
            .iter()
            .map(|q| self.per_query.get(q.as_ref()).copied().unwrap_or(0.0))
            .collect()
    }
}

/// NDCG@k over every query in the qrels or the run.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize, gain: Gain) -> Result<MetricResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let queries: BTreeSet<&str> = qrels.queries().chain(run.queries()).collect();
    let per_query: BTreeMap<String, f64> = queries
        .into_iter()
        .map(|q| {
            let ranking: Vec<&str> = run.ranking(q).iter().map(|(d, _)| d.as_str()).collect();
            (q.to_owned(), ndcg(&ranking, qrels.judged(q), k, gain))
        })
        .collect();
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    Ok(MetricResult { per_query, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
    /// Differences had zero variance; `p` is reported as 1.
    pub degenerate: bool,
}

/// Two-tailed paired t-test on per-query values.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Ok(TTest { t: 0.0, p: 1.0, n, degenerate: true });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t, p, n, degenerate: false })
}

/// Pooled candidates per query with the indices of the runs that contributed
/// each document.
pub type Pool = BTreeMap<String, BTreeMap<String, BTreeSet<usize>>>;

/// Union of the top-`depth` documents of every run.
pub fn pool(runs: &[&Run], depth: usize) -> Pool {
    let mut out: Pool = BTreeMap::new();
    for (r, run) in runs.iter().enumerate() {
        for qid in run.queries() {
            let entry = out.entry(qid.to_owned()).or_default();
            for (doc, _) in run.ranking(qid).iter().take(depth) {
                entry.entry(doc.clone()).or_default().insert(r);
            }
        }
    }
    out
}
