//! Tokenization and multi-field inverted indexes over tables and entities.

mod index;
pub mod porter;
mod tokenize;

pub use index::{Document, FieldPostings, FieldStats, Index, IndexField, Posting, INDEX_FORMAT, INDEX_VERSION};
pub use tokenize::{is_stopword, tokenize, unique_tokens, STOPWORDS};

use serde::{Deserialize, Serialize};

use crate::corpus::Table;
use crate::error::Result;

/// Fields of a table document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableField {
    PageTitle,
    SectionTitle,
    Caption,
    Headings,
    Body,
    /// Entity identifiers of linked body cells, one unstemmed token each.
    Entities,
    /// All of the above concatenated.
    Catchall,
}

impl IndexField for TableField {
    const ALL: &'static [Self] = &[
        TableField::PageTitle,
        TableField::SectionTitle,
        TableField::Caption,
        TableField::Headings,
        TableField::Body,
        TableField::Entities,
        TableField::Catchall,
    ];
    const KIND: &'static str = "tables";

    fn slot(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            TableField::PageTitle => "page_title",
            TableField::SectionTitle => "section_title",
            TableField::Caption => "caption",
            TableField::Headings => "headings",
            TableField::Body => "body",
            TableField::Entities => "entities",
            TableField::Catchall => "catchall",
        }
    }
}

impl std::str::FromStr for TableField {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        TableField::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| crate::error::Error::InvalidParameter(format!("unknown field `{s}`")))
    }
}

/// Fields of an entity document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityField {
    Names,
    Categories,
    Attributes,
    SimilarEntityNames,
    RelatedEntityNames,
}

impl IndexField for EntityField {
    const ALL: &'static [Self] = &[
        EntityField::Names,
        EntityField::Categories,
        EntityField::Attributes,
        EntityField::SimilarEntityNames,
        EntityField::RelatedEntityNames,
    ];
    const KIND: &'static str = "entities";

    fn slot(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            EntityField::Names => "names",
            EntityField::Categories => "categories",
            EntityField::Attributes => "attributes",
            EntityField::SimilarEntityNames => "similar_entity_names",
            EntityField::RelatedEntityNames => "related_entity_names",
        }
    }
}

pub type TableIndex = Index<TableField>;
pub type EntityIndex = Index<EntityField>;

/// Tokens of every table field, catchall included.
pub fn table_document(t: &Table) -> Document {
    let page_title = tokenize(&t.page_title);
    let section_title = tokenize(&t.section_title);
    let caption = tokenize(&t.caption);
    let headings: Vec<String> = t.headings.iter().flat_map(|h| tokenize(h)).collect();
    let body: Vec<String> = t.rows.iter().flatten().flat_map(|c| tokenize(&c.text)).collect();
    let entities: Vec<String> = t
        .rows
        .iter()
        .flatten()
        .filter_map(|c| c.entity.clone())
        .collect();
    let catchall: Vec<String> = [&page_title, &section_title, &caption, &headings, &body, &entities]
        .into_iter()
        .flatten()
        .cloned()
        .collect();
    Document {
        id: t.id.clone(),
        fields: vec![page_title, section_title, caption, headings, body, entities, catchall],
    }
}

pub fn build_table_index(tables: &[Table]) -> Result<TableIndex> {
    use rayon::prelude::*;
    Index::build(tables.par_iter().map(table_document).collect())
}
