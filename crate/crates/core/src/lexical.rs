//! Query-likelihood ranking with Dirichlet smoothing over a single field, the
//! Mixture of Language Models over several fields, and entity retrieval.
//!
//! Rankers consider the documents that contain at least one query term in a
//! field taking part in the score. Query terms that never occur in the scored
//! field(s) are skipped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textindex::{tokenize, EntityField, EntityIndex, Index, IndexField};

/// Unique query terms with their query frequency, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryTerms(Vec<(String, u32)>);

impl QueryTerms {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut pos: HashMap<&str, usize> = HashMap::new();
        let mut terms: Vec<(String, u32)> = Vec::new();
        for t in tokens {
            let t = t.as_ref();
            match pos.get(t) {
                Some(&i) => terms[i].1 += 1,
                None => {
                    pos.insert(t, terms.len());
                    terms.push((t.to_owned(), 1));
                }
            }
        }
        QueryTerms(terms)
    }

    pub fn parse(text: &str) -> Self {
        Self::new(&tokenize(text))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(t, n)| (t.as_str(), *n))
    }
}

/// How per-field evidence is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Mix field term probabilities inside the log: `log Σᵢ wᵢ P(t|θ_fᵢ)`.
    #[default]
    Probability,
    /// Weighted sum of per-field log-likelihood scores.
    Score,
}

/// Field weights (summing to 1) and Dirichlet priors, indexed by field slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub weights: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default)]
    pub fusion: Fusion,
}

impl MlmConfig {
    /// Builds and validates a configuration. Fields without an explicit μ use
    /// their average length in `index`.
    pub fn new<F: IndexField>(weights: &[(F, f64)], mu: &[(F, f64)], index: &Index<F>) -> Result<Self> {
        let mut w = vec![0.0; F::ALL.len()];
        for &(f, x) in weights {
            w[f.slot()] = x;
        }
        let mut m: Vec<f64> = F::ALL.iter().map(|&f| default_mu(index, f)).collect();
        for &(f, x) in mu {
            m[f.slot()] = x;
        }
        let cfg = MlmConfig { weights: w, mu: m, fusion: Fusion::Probability };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Equal weights over `fields`.
    pub fn uniform<F: IndexField>(fields: &[F], index: &Index<F>) -> Result<Self> {
        let w = 1.0 / fields.len().max(1) as f64;
        let weights: Vec<(F, f64)> = fields.iter().map(|&f| (f, w)).collect();
        Self::new(&weights, &[], index)
    }

    pub fn with_fusion(mut self, fusion: Fusion) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("field weights must be nonnegative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("field weights sum to {sum}, expected 1")));
        }
        if self
            .weights
            .iter()
            .zip(&self.mu)
            .any(|(&w, &mu)| w > 0.0 && !(mu > 0.0 && mu.is_finite()))
        {
            return Err(Error::InvalidParameter("Dirichlet prior must be positive".into()));
        }
        Ok(())
    }

    fn active<'a, F: IndexField>(&'a self) -> impl Iterator<Item = (F, f64, f64)> + 'a {
        F::ALL
            .iter()
            .map(move |&f| (f, self.weights[f.slot()], self.mu[f.slot()]))
            .filter(|&(_, w, _)| w > 0.0)
    }
}

/// Average field length, or 1 for empty fields.
pub fn default_mu<F: IndexField>(index: &Index<F>, field: F) -> f64 {
    let avg = index.avg_len(field);
    if avg > 0.0 {
        avg
    } else {
        1.0
    }
}

fn dirichlet<F: IndexField>(index: &Index<F>, term: &str, field: F, slot: u32, mu: f64) -> (f64, f64) {
    let tf = index.tf(term, field, slot) as f64;
    let len = index.doc_len(slot, field) as f64;
    let pc = index.p_collection(term, field);
    (tf + mu * pc, len + mu)
}

/// Dirichlet-smoothed query log-likelihood of one document field.
pub fn score_lm<F: IndexField>(q: &QueryTerms, slot: u32, field: F, mu: f64, index: &Index<F>) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("Dirichlet prior must be positive, got {mu}")));
    }
    let mut score = 0.0;
    for (term, qtf) in q.iter() {
        if index.cf(term, field) == 0 {
            continue;
        }
        let (num, den) = dirichlet(index, term, field, slot, mu);
        score += qtf as f64 * (num / den).ln();
    }
    Ok(score)
}

/// Multi-field score under `cfg`.
pub fn score_mlm<F: IndexField>(q: &QueryTerms, slot: u32, cfg: &MlmConfig, index: &Index<F>) -> Result<f64> {
    cfg.validate()?;
    Ok(mlm_unchecked(q, slot, cfg, index))
}

fn mlm_unchecked<F: IndexField>(q: &QueryTerms, slot: u32, cfg: &MlmConfig, index: &Index<F>) -> f64 {
    let mut score = 0.0;
    match cfg.fusion {
        Fusion::Probability => {
            for (term, qtf) in q.iter() {
                let mut p = 0.0;
                let mut seen = false;
                for (f, w, mu) in cfg.active::<F>() {
                    if index.cf(term, f) == 0 {
                        continue;
                    }
                    seen = true;
                    let (num, den) = dirichlet(index, term, f, slot, mu);
                    p += w * num / den;
                }
                if seen {
                    score += qtf as f64 * p.ln();
                }
            }
        }
        Fusion::Score => {
            for (f, w, mu) in cfg.active::<F>() {
                // mu is validated positive for active fields.
                score += w * score_lm(q, slot, f, mu, index).unwrap_or(0.0);
            }
        }
    }
    score
}

fn candidates<F: IndexField>(q: &QueryTerms, fields: &[F], index: &Index<F>) -> Vec<u32> {
    let mut docs: Vec<u32> = Vec::new();
    for (term, _) in q.iter() {
        for &f in fields {
            docs.extend(index.postings(term, f).iter().map(|&(d, _)| d));
        }
    }
    docs.sort_unstable();
    docs.dedup();
    docs
}

/// Sorts by descending score, then ascending document id.
pub fn sort_ranking<F: IndexField>(scored: &mut [(u32, f64)], index: &Index<F>) {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.doc_id(a.0).cmp(index.doc_id(b.0)))
    });
}

fn finish<F: IndexField>(mut scored: Vec<(u32, f64)>, index: &Index<F>, k: Option<usize>) -> Vec<(u32, f64)> {
    sort_ranking(&mut scored, index);
    if let Some(k) = k {
        scored.truncate(k);
    }
    scored
}

/// Ranks documents matching at least one query term in `field`.
pub fn rank_lm<F: IndexField>(
    q: &QueryTerms,
    field: F,
    mu: f64,
    index: &Index<F>,
    k: Option<usize>,
) -> Result<Vec<(u32, f64)>> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("Dirichlet prior must be positive, got {mu}")));
    }
    let scored = candidates(q, &[field], index)
        .into_iter()
        .map(|d| Ok((d, score_lm(q, d, field, mu, index)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(scored, index, k))
}

/// Ranks documents matching at least one query term in a weighted field.
pub fn rank_mlm<F: IndexField>(
    q: &QueryTerms,
    cfg: &MlmConfig,
    index: &Index<F>,
    k: Option<usize>,
) -> Result<Vec<(u32, f64)>> {
    cfg.validate()?;
    let fields: Vec<F> = cfg.active::<F>().map(|(f, _, _)| f).collect();
    let scored = candidates(q, &fields, index)
        .into_iter()
        .map(|d| (d, mlm_unchecked(q, d, cfg, index)))
        .collect();
    Ok(finish(scored, index, k))
}

/// Entity ranking over the five entity fields with uniform weights.
#[derive(Debug, Clone)]
pub struct EntityRetriever {
    cfg: MlmConfig,
}

impl EntityRetriever {
    pub fn new(index: &EntityIndex) -> Result<Self> {
        Ok(EntityRetriever {
            cfg: MlmConfig::uniform(EntityField::ALL, index)?,
        })
    }

    pub fn config(&self) -> &MlmConfig {
        &self.cfg
    }

    /// R_k(text): identifiers of the top-`k` entities; ties go to the
    /// lexicographically smaller identifier.
    pub fn retrieve(&self, text: &str, k: usize, index: &EntityIndex) -> Result<Vec<String>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let q = QueryTerms::parse(text);
        if q.is_empty() {
            return Ok(Vec::new());
        }
        Ok(rank_mlm(&q, &self.cfg, index, Some(k))?
            .into_iter()
            .map(|(d, _)| index.doc_id(d).to_owned())
            .collect())
    }
}

/// Convenience wrapper around [`EntityRetriever`].
pub fn retrieve_entities(text: &str, k: usize, index: &EntityIndex) -> Result<Vec<String>> {
    EntityRetriever::new(index)?.retrieve(text, k, index)
}

/// Coordinate ascent over field weights on the probability simplex,
/// maximizing `objective`. Each coordinate is tried at every grid value with
/// the remaining mass rescaled over the other fields.
pub fn coordinate_ascent(
    start: &[f64],
    grid_step: f64,
    max_rounds: usize,
    mut objective: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut best = start.to_vec();
    let mut best_val = objective(&best);
    let steps = (1.0 / grid_step).round() as usize;
    for _ in 0..max_rounds {
        let mut improved = false;
        for i in 0..n {
            for s in 0..=steps {
                let v = s as f64 / steps as f64;
                let rest: f64 = best.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w).sum();
                let mut cand = best.clone();
                cand[i] = v;
                for (j, w) in cand.iter_mut().enumerate() {
                    if j == i {
                        continue;
                    }
                    *w = if rest > 0.0 {
                        best[j] / rest * (1.0 - v)
                    } else {
                        (1.0 - v) / (n - 1).max(1) as f64
                    };
                }
                if n == 1 {
                    cand[0] = 1.0;
                }
                let val = objective(&cand);
                if val > best_val + 1e-12 {
                    best = cand;
                    best_val = val;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (best, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textindex::{Document, TableField};

    type Idx = Index<TableField>;

    fn doc(id: &str, caption: &str, body: &str) -> Document {
        let caption = tokenize(caption);
        let body = tokenize(body);
        let catchall = [caption.clone(), body.clone()].concat();
        Document {
            id: id.into(),
            fields: vec![vec![], vec![], caption, vec![], body, vec![], catchall],
        }
    }

    fn fixture() -> Idx {
        Index::build(vec![
            doc("a", "world cup winners", "brazil germany italy brazil"),
            doc("b", "cup final", "football final match"),
            doc("c", "olympic games", "athens beijing london"),
            doc("d", "world records", "world athletics"),
        ])
        .unwrap()
    }

    #[test]
    fn absent_term_contributes_nothing() {
        let idx = fixture();
        let q = QueryTerms::parse("cup zzyzx");
        let q1 = QueryTerms::parse("cup");
        for d in 0..4 {
            assert_eq!(
                score_lm(&q, d, TableField::Caption, 2.0, &idx).unwrap(),
                score_lm(&q1, d, TableField::Caption, 2.0, &idx).unwrap()
            );
        }
        assert!(score_lm(&q, 0, TableField::Caption, 0.0, &idx).is_err());
    }

    #[test]
    fn single_doc_hand_computation() {
        // One document "red blue red": tf(red)=2, tf(blue)=1, len 3, cf = tf.
        let idx = Index::<TableField>::build(vec![doc("x", "red blue red", "")]).unwrap();
        let q = QueryTerms::parse("red blue red");
        let mu = 2.0;
        let p_red = (2.0 + mu * 2.0 / 3.0) / (3.0 + mu);
        let p_blue = (1.0 + mu * 1.0 / 3.0) / (3.0 + mu);
        let expected = 2.0 * f64::ln(p_red) + f64::ln(p_blue);
        let got = score_lm(&q, 0, TableField::Caption, mu, &idx).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got < 0.0);
    }

    #[test]
    fn more_occurrences_score_higher() {
        let idx = Index::<TableField>::build(vec![
            doc("x", "rock pop", ""),
            doc("y", "rock rock pop", ""),
            doc("z", "rock rock rock pop", ""),
        ])
        .unwrap();
        let q = QueryTerms::parse("rock");
        let s: Vec<f64> = (0..3).map(|d| score_lm(&q, d, TableField::Caption, 1.0, &idx).unwrap()).collect();
        // Longer documents with a higher share of the term score higher.
        assert!(s[0] < s[1] && s[1] < s[2]);
        // Same length, more occurrences.
        let idx2 = Index::<TableField>::build(vec![doc("x", "rock pop jazz", ""), doc("y", "rock rock jazz", "")]).unwrap();
        let a = score_lm(&q, 0, TableField::Caption, 1.0, &idx2).unwrap();
        let b = score_lm(&q, 1, TableField::Caption, 1.0, &idx2).unwrap();
        assert!(b > a);
    }

    #[test]
    fn one_hot_mixture_equals_single_field() {
        let idx = fixture();
        let q = QueryTerms::parse("world cup final");
        for fusion in [Fusion::Probability, Fusion::Score] {
            let cfg = MlmConfig::new(&[(TableField::Caption, 1.0)], &[(TableField::Caption, 3.0)], &idx)
                .unwrap()
                .with_fusion(fusion);
            for d in 0..4 {
                let m = score_mlm(&q, d, &cfg, &idx).unwrap();
                let l = score_lm(&q, d, TableField::Caption, 3.0, &idx).unwrap();
                assert!((m - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_fields_half_half() {
        let docs = vec![doc("a", "alpha beta", "alpha beta"), doc("b", "beta gamma", "beta gamma")];
        let idx = Index::<TableField>::build(docs).unwrap();
        let q = QueryTerms::parse("alpha gamma");
        let mu = [(TableField::Caption, 2.0), (TableField::Body, 2.0)];
        let cfg = MlmConfig::new(&[(TableField::Caption, 0.5), (TableField::Body, 0.5)], &mu, &idx).unwrap();
        for d in 0..2 {
            let m = score_mlm(&q, d, &cfg, &idx).unwrap();
            let l = score_lm(&q, d, TableField::Caption, 2.0, &idx).unwrap();
            assert!((m - l).abs() < 1e-12);
        }
    }

    #[test]
    fn two_field_mixture_matches_term_by_term() {
        let idx = fixture();
        let q = QueryTerms::parse("world brazil final");
        let (wc, wb, mc, mb) = (0.3, 0.7, 2.5, 4.0);
        let cfg = MlmConfig::new(
            &[(TableField::Caption, wc), (TableField::Body, wb)],
            &[(TableField::Caption, mc), (TableField::Body, mb)],
            &idx,
        )
        .unwrap();
        // Hand statistics: caption total 9 tokens, body total 13.
        let caption: [&[&str]; 4] = [
            &["world", "cup", "winner"],
            &["cup", "final"],
            &["olymp", "game"],
            &["world", "record"],
        ];
        let body: [&[&str]; 4] = [
            &["brazil", "germani", "itali", "brazil"],
            &["footbal", "final", "match"],
            &["athen", "beij", "london"],
            &["world", "athlet"],
        ];
        let count = |docs: &[&[&str]], t: &str| docs.iter().flat_map(|d| d.iter()).filter(|x| **x == t).count() as f64;
        let total_c: f64 = caption.iter().map(|d| d.len() as f64).sum();
        let total_b: f64 = body.iter().map(|d| d.len() as f64).sum();
        for d in 0..4 {
            let mut expected = 0.0;
            for t in ["world", "brazil", "final"] {
                let tf_c = caption[d].iter().filter(|x| **x == t).count() as f64;
                let tf_b = body[d].iter().filter(|x| **x == t).count() as f64;
                let p_c = (tf_c + mc * count(&caption, t) / total_c) / (caption[d].len() as f64 + mc);
                let p_b = (tf_b + mb * count(&body, t) / total_b) / (body[d].len() as f64 + mb);
                expected += (wc * p_c + wb * p_b).ln();
            }
            let got = score_mlm(&q, d as u32, &cfg, &idx).unwrap();
            assert!((got - expected).abs() < 1e-12, "doc {d}: {got} vs {expected}");
        }
    }

    #[test]
    fn invalid_configs() {
        let idx = fixture();
        assert!(MlmConfig::new(&[(TableField::Caption, 0.6)], &[], &idx).is_err());
        assert!(MlmConfig::new(&[(TableField::Caption, 1.5), (TableField::Body, -0.5)], &[], &idx).is_err());
        assert!(MlmConfig::new(&[(TableField::Caption, 1.0)], &[(TableField::Caption, 0.0)], &idx).is_err());
    }

    #[test]
    fn ranking_is_sorted_and_filtered() {
        let idx = fixture();
        let q = QueryTerms::parse("world cup");
        let r = rank_lm(&q, TableField::Caption, 2.0, &idx, None).unwrap();
        let ids: Vec<&str> = r.iter().map(|(d, _)| idx.doc_id(*d)).collect();
        assert_eq!(ids[0], "a");
        assert_eq!(ids.len(), 3);
        assert!(r.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(rank_lm(&q, TableField::Caption, 2.0, &idx, Some(1)).unwrap().len(), 1);
    }

    fn entity_index(names: &[&str]) -> EntityIndex {
        Index::build(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| Document {
                    id: format!("E{i:02}"),
                    fields: vec![tokenize(n), vec![], vec![], vec![], vec![]],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn entity_retrieval_basics() {
        let idx = entity_index(&["Oslo"]);
        assert_eq!(retrieve_entities("oslo", 10, &idx).unwrap(), vec!["E00"]);
        assert!(retrieve_entities("", 10, &idx).unwrap().is_empty());
        assert!(retrieve_entities("oslo", 0, &idx).is_err());
    }

    #[test]
    fn coordinate_ascent_finds_peak() {
        // Concave objective with maximum at (0.2, 0.3, 0.5).
        let target = [0.2, 0.3, 0.5];
        let (w, v) = coordinate_ascent(&[1.0 / 3.0; 3], 0.05, 20, |w| {
            -w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        });
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(v > -0.01, "{w:?}");
    }
}
