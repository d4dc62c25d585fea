//! Table corpus: data model, line-delimited parsing, entity-link resolution
//! and core column detection.
//!
//! A corpus file holds one JSON record per line:
//!
//! ```text
//! {"id":"t1","pgTitle":"...","secTitle":"...","caption":"...","headings":["a","b"],
//!  "rows":[[{"text":"x","entity":"E1"},{"text":"y"}]],"numHeaderRows":1,
//!  "meta":{"inLinks":3,"outLinks":9,"pageViews":120,"tablesOnPage":2}}
//! ```

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

/// A single body cell. `entity` holds a knowledge-base identifier when the
/// cell links to an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
}

impl Cell {
    pub fn text(text: impl Into<String>) -> Self {
        Cell {
            text: text.into(),
            entity: None,
        }
    }

    pub fn linked(text: impl Into<String>, entity: impl Into<String>) -> Self {
        Cell {
            text: text.into(),
            entity: Some(entity.into()),
        }
    }

    /// A cell with neither text nor entity link.
    pub fn is_empty(&self) -> bool {
        self.entity.is_none() && self.text.trim().is_empty()
    }
}

/// Statistics about the page embedding a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PageMeta {
    #[serde(default)]
    pub in_links: u64,
    #[serde(default)]
    pub out_links: u64,
    #[serde(default)]
    pub page_views: u64,
    #[serde(default = "one")]
    pub tables_on_page: u64,
    /// Character length of the whole page, when the supplier knows it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_length: Option<u64>,
}

fn one() -> u64 {
    1
}

impl Default for PageMeta {
    fn default() -> Self {
        PageMeta {
            in_links: 0,
            out_links: 0,
            page_views: 0,
            tables_on_page: 1,
            page_length: None,
        }
    }
}

/// One corpus table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Table {
    pub id: String,
    #[serde(rename = "pgTitle", default)]
    pub page_title: String,
    #[serde(rename = "secTitle", default)]
    pub section_title: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub headings: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<Cell>>,
    #[serde(default)]
    pub num_header_rows: u32,
    #[serde(rename = "meta", default)]
    pub page_meta: PageMeta,
}

impl Table {
    /// Checks the grid and metadata invariants.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidParameter("table id must be non-empty".into()));
        }
        if let Some(first) = self.rows.first() {
            let width = first.len();
            if let Some((i, row)) = self.rows.iter().enumerate().find(|(_, r)| r.len() != width) {
                return Err(Error::RaggedGrid {
                    id: self.id.clone(),
                    detail: format!("row {i} has {} cells, row 0 has {width}", row.len()),
                });
            }
            if !self.headings.is_empty() && self.headings.len() != width {
                return Err(Error::RaggedGrid {
                    id: self.id.clone(),
                    detail: format!("{} headings but rows have {width} cells", self.headings.len()),
                });
            }
        }
        if self.page_meta.tables_on_page == 0 {
            return Err(Error::InvalidParameter(format!(
                "table `{}`: tablesOnPage must be at least 1",
                self.id
            )));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        if !self.headings.is_empty() {
            self.headings.len()
        } else {
            self.rows.first().map_or(0, Vec::len)
        }
    }

    /// Number of empty body cells.
    pub fn num_nulls(&self) -> usize {
        self.rows.iter().flatten().filter(|c| c.is_empty()).count()
    }

    /// Cells of column `j`, top to bottom.
    pub fn column(&self, j: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().filter_map(move |r| r.get(j))
    }

    /// T_E: unique entity links of the table body in row-major order.
    pub fn entities(&self) -> Vec<String> {
        unique(self.rows.iter().flatten().filter_map(|c| c.entity.as_deref()))
    }

    /// T_E': unique entities of the core column; empty when the table has no
    /// columns or no rows.
    pub fn core_entities(&self) -> Vec<String> {
        match detect_core_column(self) {
            Ok(j) if !self.rows.is_empty() => {
                unique(self.column(j).filter_map(|c| c.entity.as_deref()))
            }
            _ => Vec::new(),
        }
    }

    /// Table topic text: page title followed by caption.
    pub fn topic_text(&self) -> String {
        format!("{} {}", self.page_title, self.caption)
    }

    /// Concatenated body cell text.
    pub fn body_text(&self) -> String {
        let mut s = String::new();
        for cell in self.rows.iter().flatten() {
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(&cell.text);
        }
        s
    }

    /// Size of the table in characters (headings and body text).
    pub fn char_length(&self) -> u64 {
        let h: usize = self.headings.iter().map(|h| h.chars().count()).sum();
        let b: usize = self.rows.iter().flatten().map(|c| c.text.chars().count()).sum();
        (h + b) as u64
    }

    /// A copy keeping only the first `n` data rows.
    pub fn with_row_prefix(&self, n: usize) -> Table {
        let mut t = self.clone();
        t.rows.truncate(n);
        t
    }
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .filter(|s| seen.insert(*s))
        .map(str::to_owned)
        .collect()
}

/// Fraction of data rows whose cell in column `j` carries an entity link.
pub fn column_entity_rate(table: &Table, j: usize) -> Result<f64> {
    let columns = table.num_columns();
    if j >= columns {
        return Err(Error::ColumnOutOfRange { index: j, columns });
    }
    if table.rows.is_empty() {
        return Ok(0.0);
    }
    let linked = table.column(j).filter(|c| c.entity.is_some()).count();
    Ok(linked as f64 / table.rows.len() as f64)
}

/// Index of the column with maximal entity rate; ties go to the leftmost column.
pub fn detect_core_column(table: &Table) -> Result<usize> {
    let columns = table.num_columns();
    if columns == 0 {
        return Err(Error::NoColumns(table.id.clone()));
    }
    let mut best = 0;
    let mut best_rate = f64::NEG_INFINITY;
    for j in 0..columns {
        let rate = column_entity_rate(table, j)?;
        if rate > best_rate {
            best = j;
            best_rate = rate;
        }
    }
    Ok(best)
}

/// How malformed records are treated while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// The first malformed record aborts parsing.
    Strict,
    /// Malformed records are skipped and reported.
    #[default]
    Lenient,
}

/// Physical layout of a corpus source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON record per line.
    #[default]
    JsonLines,
    /// A single JSON array of records.
    JsonArray,
}

/// A skipped record.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based line number (record index for array input).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub tables: Vec<Table>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_corpus<R: BufRead>(source: R, format: CorpusFormat, mode: ParseMode) -> Result<ParsedCorpus> {
    let records: Vec<(usize, Result<Table>)> = match format {
        CorpusFormat::JsonLines => {
            let mut lines = Vec::new();
            for (i, line) in source.lines().enumerate() {
                let line = line?;
                if !line.trim().is_empty() {
                    lines.push((i + 1, line));
                }
            }
            lines
                .into_par_iter()
                .map(|(n, line)| {
                    let parsed = serde_json::from_str::<Table>(&line)
                        .map_err(|e| Error::Syntax { line: n, message: e.to_string() })
                        .and_then(|t| t.validate().map(|_| t));
                    (n, parsed)
                })
                .collect()
        }
        CorpusFormat::JsonArray => {
            let values: Vec<serde_json::Value> = serde_json::from_reader(source)
                .map_err(|e| Error::Syntax { line: e.line(), message: e.to_string() })?;
            values
                .into_par_iter()
                .enumerate()
                .map(|(i, v)| {
                    let parsed = serde_json::from_value::<Table>(v)
                        .map_err(|e| Error::Syntax { line: i + 1, message: e.to_string() })
                        .and_then(|t| t.validate().map(|_| t));
                    (i + 1, parsed)
                })
                .collect()
        }
    };

    let mut out = ParsedCorpus::default();
    let mut ids = HashSet::new();
    for (line, record) in records {
        let record = record.and_then(|t| {
            if ids.contains(&t.id) {
                Err(Error::DuplicateId(t.id))
            } else {
                Ok(t)
            }
        });
        match record {
            Ok(t) => {
                ids.insert(t.id.clone());
                out.tables.push(t);
            }
            Err(e) if mode == ParseMode::Strict => return Err(e),
            Err(e) => out.diagnostics.push(Diagnostic {
                line,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Writes tables as one JSON record per line.
pub fn write_corpus<W: Write>(tables: &[Table], mut out: W) -> Result<()> {
    for t in tables {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Outcome of entity-link resolution for one table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub resolved: usize,
    pub cleared: usize,
}

impl std::ops::AddAssign for LinkStats {
    fn add_assign(&mut self, rhs: Self) {
        self.resolved += rhs.resolved;
        self.cleared += rhs.cleared;
    }
}

/// Keeps cell links that point at a knowledge-base entity and reduces the
/// rest to plain text.
pub fn resolve_entity_links(mut table: Table, kb: &KnowledgeBase) -> (Table, LinkStats) {
    let mut stats = LinkStats::default();
    for cell in table.rows.iter_mut().flatten() {
        if let Some(e) = &cell.entity {
            if kb.contains(e) {
                stats.resolved += 1;
            } else {
                stats.cleared += 1;
                cell.entity = None;
            }
        }
    }
    (table, stats)
}
