//! Synthetic test collections with planted relevance.
//!
//! Every topic owns a vocabulary, a synonym for each vocabulary word, two
//! heading schemas and a pool of interlinked entities. Keyword queries are
//! phrased with synonyms, so tables match them mostly through the knowledge
//! base and the embeddings. Trap tables borrow another topic's synonyms,
//! entities or headings to mislead single-signal rankers.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Cell, PageMeta, Table};
use crate::embeddings::{EmbeddingKind, EmbeddingStore};
use crate::error::Result;
use crate::eval::Qrels;
use crate::kb::{Entity, KnowledgeBase};
use crate::textindex::{is_stopword, tokenize};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub tables_per_topic: usize,
    pub entities_per_topic: usize,
    pub queries_per_topic: usize,
    pub inputs_per_topic: usize,
    pub dim: usize,
    /// Probability that a table carries another topic's synonyms.
    pub trap_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 12,
            tables_per_topic: 16,
            entities_per_topic: 20,
            queries_per_topic: 3,
            inputs_per_topic: 4,
            dim: 16,
            trap_rate: 0.3,
            seed: 0,
        }
    }
}

pub struct Collection {
    pub tables: Vec<Table>,
    pub kb: KnowledgeBase,
    pub word: EmbeddingStore,
    pub graph: EmbeddingStore,
    /// Keyword queries as (id, text).
    pub queries: Vec<(String, String)>,
    pub search_qrels: Qrels,
    /// Input tables for matching as (id, table); each is also in the corpus.
    pub inputs: Vec<(String, Table)>,
    pub match_qrels: Qrels,
}

const VOCAB_PER_TOPIC: usize = 6;
const HEADINGS_PER_SCHEMA: usize = 3;
const GENERIC_HEADINGS: usize = 3;
const FILLER: usize = 60;

struct Words {
    rng: ChaCha8Rng,
    seen: HashSet<String>,
}

impl Words {
    /// A fresh pronounceable word that tokenizes to itself.
    fn next(&mut self) -> String {
        const C: &[u8] = b"bdgkmnprtvz";
        const V: &[u8] = b"aio";
        loop {
            let mut w = String::new();
            for i in 0..3 {
                w.push(C[self.rng.gen_range(0..C.len())] as char);
                let v = if i == 2 { b"ao"[self.rng.gen_range(0..2)] } else { V[self.rng.gen_range(0..V.len())] };
                w.push(v as char);
            }
            if !is_stopword(&w) && tokenize(&w) == [w.clone()] && self.seen.insert(w.clone()) {
                return w;
            }
        }
    }
}

struct Topic {
    vocab: Vec<String>,
    synonyms: Vec<String>,
    schemas: [Vec<String>; 2],
    entities: Vec<String>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn near(center: &[f64], rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    center.iter().zip(gaussian(rng, center.len(), scale)).map(|(c, n)| c + n).collect()
}

fn to_f32(v: Vec<f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn generate(cfg: &SynthConfig) -> Result<Collection> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut words = Words { rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed), seen: HashSet::new() };
    let generic: Vec<String> = (0..GENERIC_HEADINGS).map(|_| words.next()).collect();
    let filler: Vec<String> = (0..FILLER).map(|_| words.next()).collect();

    let mut word_vecs: Vec<(String, Vec<f32>)> = Vec::new();
    let mut graph_vecs: Vec<(String, Vec<f32>)> = Vec::new();
    for w in generic.iter().chain(&filler) {
        word_vecs.push((w.clone(), to_f32(gaussian(&mut rng, cfg.dim, 1.0))));
    }

    let mut topics = Vec::with_capacity(cfg.topics);
    for _ in 0..cfg.topics {
        let center = gaussian(&mut rng, cfg.dim, 1.0);
        let vocab: Vec<String> = (0..VOCAB_PER_TOPIC).map(|_| words.next()).collect();
        let synonyms: Vec<String> = (0..VOCAB_PER_TOPIC).map(|_| words.next()).collect();
        for (v, s) in vocab.iter().zip(&synonyms) {
            let base = near(&center, &mut rng, 0.4);
            word_vecs.push((s.clone(), to_f32(near(&base, &mut rng, 0.1))));
            word_vecs.push((v.clone(), to_f32(base)));
        }
        let schemas = [0, 1].map(|_| (0..HEADINGS_PER_SCHEMA).map(|_| words.next()).collect::<Vec<_>>());
        for h in schemas.iter().flatten() {
            word_vecs.push((h.clone(), to_f32(near(&center, &mut rng, 0.5))));
        }
        let entities: Vec<String> = (0..cfg.entities_per_topic).map(|_| capitalize(&words.next())).collect();
        for e in &entities {
            graph_vecs.push((e.clone(), to_f32(near(&center, &mut rng, 0.4))));
        }
        topics.push(Topic { vocab, synonyms, schemas, entities });
    }

    // Knowledge base: entities are described by their topic's words and
    // link mostly within the topic.
    let mut ents = Vec::new();
    for (ti, t) in topics.iter().enumerate() {
        for e in &t.entities {
            let mut ent = Entity::new(e.clone());
            ent.names = vec![e.clone()];
            ent.categories = t.vocab.choose_multiple(&mut rng, 2).cloned().collect();
            ent.attributes = t.synonyms.choose_multiple(&mut rng, 2).cloned().collect();
            let mut links: BTreeSet<String> =
                t.entities.iter().filter(|x| *x != e).choose_multiple(&mut rng, 5).into_iter().cloned().collect();
            let other = &topics[(ti + 1 + rng.gen_range(0..cfg.topics - 1)) % cfg.topics];
            links.insert(other.entities.choose(&mut rng).unwrap().clone());
            ent.related_entity_names = links.iter().take(2).cloned().collect();
            ent.out_links = links;
            ents.push(ent);
        }
    }
    let kb = KnowledgeBase::from_entities(ents)?;

    let mut tables = Vec::new();
    // (topic, schema) of each table.
    let mut labels = Vec::new();
    for (ti, t) in topics.iter().enumerate() {
        for j in 0..cfg.tables_per_topic {
            let schema = j % 2;
            let other = (ti + 1 + rng.gen_range(0..cfg.topics - 1)) % cfg.topics;
            let o = &topics[other];
            let mut headings = vec![generic[rng.gen_range(0..GENERIC_HEADINGS)].clone()];
            headings.extend(t.schemas[schema].iter().cloned());
            if rng.gen_bool(0.2) {
                let k = rng.gen_range(1..headings.len());
                headings[k] = o.schemas[rng.gen_range(0..2)].choose(&mut rng).unwrap().clone();
            }
            let mut caption: Vec<String> = t.vocab.choose_multiple(&mut rng, 2).cloned().collect();
            if rng.gen_bool(0.2) {
                caption.push(t.synonyms.choose(&mut rng).unwrap().clone());
            }
            let page_title: Vec<String> = t.vocab.choose_multiple(&mut rng, 2).cloned().collect();
            let mut section = vec![filler.choose(&mut rng).unwrap().clone()];
            let trap = rng.gen_bool(cfg.trap_rate);
            let trap_word = o.synonyms.choose(&mut rng).unwrap().clone();
            if trap {
                section.push(trap_word.clone());
            }
            let n_rows = rng.gen_range(6..=12);
            let mut row_entities: Vec<&String> = t.entities.choose_multiple(&mut rng, n_rows).collect();
            if rng.gen_bool(0.25) {
                let k = rng.gen_range(1..=n_rows / 3);
                for (slot, e) in o.entities.choose_multiple(&mut rng, k).enumerate() {
                    row_entities[slot * 3 % n_rows] = e;
                }
            }
            let rows = row_entities
                .iter()
                .enumerate()
                .map(|(r, e)| {
                    let mut row = vec![Cell::linked(e.as_str(), e.as_str())];
                    for _ in 1..headings.len() {
                        row.push(if rng.gen_bool(0.1) {
                            Cell::text("")
                        } else {
                            Cell::text(filler.choose(&mut rng).unwrap().as_str())
                        });
                    }
                    if trap && r == 0 {
                        row[1] = Cell::text(trap_word.as_str());
                    }
                    row
                })
                .collect();
            tables.push(Table {
                id: format!("table-{ti:02}-{j:02}"),
                page_title: page_title.join(" "),
                section_title: section.join(" "),
                caption: caption.join(" "),
                headings,
                rows,
                num_header_rows: 1,
                page_meta: PageMeta {
                    in_links: rng.gen_range(0..500),
                    out_links: rng.gen_range(0..300),
                    page_views: rng.gen_range(0..10_000),
                    tables_on_page: rng.gen_range(1..5),
                    page_length: None,
                },
            });
            labels.push((ti, schema));
        }
    }

    // Keyword queries: two synonyms of one topic. Tables of the topic are
    // relevant, more so when their caption holds a matching vocabulary word.
    let mut queries = Vec::new();
    let mut search_qrels = Qrels::new();
    for (ti, t) in topics.iter().enumerate() {
        for qi in 0..cfg.queries_per_topic {
            let picks: Vec<usize> = (0..VOCAB_PER_TOPIC).choose_multiple(&mut rng, 2);
            let qid = format!("q{ti:02}{qi}");
            let text = picks.iter().map(|&i| t.synonyms[i].as_str()).collect::<Vec<_>>().join(" ");
            let strong: HashSet<&str> = picks.iter().map(|&i| t.vocab[i].as_str()).collect();
            for (tab, &(tt, _)) in tables.iter().zip(&labels) {
                if tt == ti {
                    let hit = tokenize(&tab.caption).iter().any(|w| strong.contains(w.as_str()));
                    search_qrels.insert(&qid, &tab.id, if hit { 2.0 } else { 1.0 })?;
                }
            }
            queries.push((qid, text));
        }
    }

    // Matching inputs: same topic and schema is highly relevant, same topic
    // is relevant.
    let mut inputs = Vec::new();
    let mut match_qrels = Qrels::new();
    for ti in 0..cfg.topics {
        let members: Vec<usize> = (0..tables.len()).filter(|&i| labels[i].0 == ti).collect();
        for (n, &i) in members.choose_multiple(&mut rng, cfg.inputs_per_topic).enumerate() {
            let qid = format!("m{ti:02}{n}");
            for &c in &members {
                if c != i {
                    let g = if labels[c].1 == labels[i].1 { 2.0 } else { 1.0 };
                    match_qrels.insert(&qid, &tables[c].id, g)?;
                }
            }
            inputs.push((qid, tables[i].clone()));
        }
    }

    Ok(Collection {
        word: EmbeddingStore::from_pairs(EmbeddingKind::Word, cfg.dim, word_vecs)?,
        graph: EmbeddingStore::from_pairs(EmbeddingKind::Graph, cfg.dim, graph_vecs)?,
        tables,
        kb,
        queries,
        search_qrels,
        inputs,
        match_qrels,
    })
}
