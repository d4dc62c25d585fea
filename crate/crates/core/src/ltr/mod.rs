//! Pointwise learning to rank: random-forest and linear regressors over
//! feature vectors, query-grouped cross-validation and feature importance.

mod forest;
mod linear;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, Gain, MetricResult, Qrels, Run};
use crate::features::FeatureVector;

pub use forest::{fit_trees, FeatureSampling, ForestConfig, Node, Tree};
pub use linear::{fit_lasso, fit_ols, LinearWeights};

/// One judged (query, table) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub query_id: String,
    pub table_id: String,
    pub values: Vec<f64>,
    pub label: f64,
}

/// Training instances sharing one feature schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    schema: Vec<String>,
    instances: Vec<TrainingInstance>,
}

impl Dataset {
    pub fn new(schema: Vec<String>) -> Self {
        Dataset { schema, instances: Vec::new() }
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn instances(&self) -> &[TrainingInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Adds an instance. The first instance fixes the schema of an empty dataset.
    pub fn push(&mut self, query_id: &str, table_id: &str, features: &FeatureVector, label: f64) -> Result<()> {
        if self.schema.is_empty() && self.instances.is_empty() {
            self.schema = features.names().to_vec();
        }
        if features.names() != self.schema.as_slice() {
            return Err(Error::SchemaMismatch(format!(
                "instance {query_id}/{table_id} has {} features, dataset schema has {}",
                features.len(),
                self.schema.len()
            )));
        }
        self.push_values(query_id, table_id, features.values().to_vec(), label)
    }

    pub fn push_values(&mut self, query_id: &str, table_id: &str, values: Vec<f64>, label: f64) -> Result<()> {
        if values.len() != self.schema.len() {
            return Err(Error::DimensionMismatch { expected: self.schema.len(), found: values.len() });
        }
        if !label.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value in {query_id}/{table_id}")));
        }
        self.instances.push(TrainingInstance {
            query_id: query_id.to_string(),
            table_id: table_id.to_string(),
            values,
            label,
        });
        Ok(())
    }

    pub fn queries(&self) -> BTreeSet<&str> {
        self.instances.iter().map(|i| i.query_id.as_str()).collect()
    }

    /// Labels as relevance judgments.
    pub fn qrels(&self) -> Result<Qrels> {
        let mut q = Qrels::new();
        for i in &self.instances {
            q.insert(&i.query_id, &i.table_id, i.label)?;
        }
        Ok(q)
    }

    /// Reads `qid, doc, label, f1, f2, ...` rows with a header line.
    /// Tab or comma delimited; detected from the header.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => return Err(Error::Format("feature file is empty".into())),
            }
        };
        let delim = if header.contains('\t') { '\t' } else { ',' };
        let cols: Vec<&str> = header.split(delim).map(str::trim).collect();
        if cols.len() < 4 {
            return Err(Error::Syntax { line: 1, message: "expected qid, doc, label and at least one feature".into() });
        }
        let mut data = Dataset::new(cols[3..].iter().map(|s| s.to_string()).collect());
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(delim).map(str::trim).collect();
            if parts.len() != cols.len() {
                return Err(Error::Syntax {
                    line: n + 1,
                    message: format!("expected {} fields, found {}", cols.len(), parts.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Syntax { line: n + 1, message: format!("not a number: {s:?}") })
            };
            let label = num(parts[2])?;
            let values = parts[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            data.push_values(parts[0], parts[1], values, label)?;
        }
        Ok(data)
    }

    /// Writes the tab-delimited form accepted by [`Dataset::read`].
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        write!(w, "qid\tdoc\tlabel")?;
        for n in &self.schema {
            write!(w, "\t{n}")?;
        }
        writeln!(w)?;
        for i in &self.instances {
            write!(w, "{}\t{}\t{}", i.query_id, i.table_id, i.label)?;
            for v in &i.values {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Instances satisfying `keep`, same schema.
    pub fn filter(&self, keep: impl Fn(&TrainingInstance) -> bool) -> Dataset {
        Dataset { schema: self.schema.clone(), instances: self.instances.iter().filter(|i| keep(i)).cloned().collect() }
    }

    fn xy(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        (self.instances.iter().map(|i| i.values.clone()).collect(), self.instances.iter().map(|i| i.label).collect())
    }
}

/// Combines annotator grades: the label held by a strict majority, else the mean.
pub fn aggregate_votes(votes: &[f64]) -> Option<f64> {
    if votes.is_empty() {
        return None;
    }
    for v in votes {
        let c = votes.iter().filter(|w| *w == v).count();
        if 2 * c > votes.len() {
            return Some(*v);
        }
    }
    Some(votes.iter().sum::<f64>() / votes.len() as f64)
}

fn check_schema(schema: &[String], features: &FeatureVector) -> Result<()> {
    if features.names() != schema {
        return Err(Error::SchemaMismatch(format!(
            "model expects [{}], got [{}]",
            schema.join(", "),
            features.names().join(", ")
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema: Vec<String>,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn fit(data: &Dataset, config: &ForestConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("no training instances".into()));
        }
        let (x, y) = data.xy();
        let trees = fit_trees(&x, &y, config)?;
        Ok(ForestModel { schema: data.schema.clone(), config: config.clone(), trees })
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        check_schema(&self.schema, features)?;
        Ok(self.predict_values(features.values()))
    }

    /// Mean of the tree outputs. `x` must follow the model schema.
    pub fn predict_values(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Total impurity reduction per feature, normalized to sum to 1.
    /// A forest without any split reports zero everywhere.
    pub fn gini_importance(&self) -> Vec<(String, f64)> {
        let mut imp = vec![0.0; self.schema.len()];
        for t in &self.trees {
            for n in &t.nodes {
                if let Node::Split { feature, gain, .. } = n {
                    imp[*feature] += gain;
                }
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for v in &mut imp {
                *v /= total;
            }
        }
        self.schema.iter().cloned().zip(imp).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub schema: Vec<String>,
    pub weights: LinearWeights,
}

impl LinearModel {
    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        check_schema(&self.schema, features)?;
        Ok(self.weights.predict(features.values()))
    }
}

/// Training algorithm and its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Forest(ForestConfig),
    LeastSquares,
    Lasso { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Forest(ForestModel),
    Linear(LinearModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Model,
}

const MODEL_FORMAT: &str = "tablesearch-model";
const MODEL_VERSION: u32 = 1;

impl Model {
    pub fn fit(data: &Dataset, learner: &Learner) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("no training instances".into()));
        }
        Ok(match learner {
            Learner::Forest(cfg) => Model::Forest(ForestModel::fit(data, cfg)?),
            Learner::LeastSquares | Learner::Lasso { .. } => {
                let (x, y) = data.xy();
                let weights = match learner {
                    Learner::Lasso { lambda } => fit_lasso(&x, &y, *lambda)?,
                    _ => fit_ols(&x, &y)?,
                };
                Model::Linear(LinearModel { schema: data.schema.clone(), weights })
            }
        })
    }

    pub fn schema(&self) -> &[String] {
        match self {
            Model::Forest(m) => &m.schema,
            Model::Linear(m) => &m.schema,
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        match self {
            Model::Forest(m) => m.predict(features),
            Model::Linear(m) => m.predict(features),
        }
    }

    pub fn predict_values(&self, x: &[f64]) -> f64 {
        match self {
            Model::Forest(m) => m.predict_values(x),
            Model::Linear(m) => m.weights.predict(x),
        }
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() };
        serde_json::to_writer(w, &file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(r: impl Read) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file {} v{}", file.format, file.version)));
        }
        Ok(file.model)
    }
}

/// Scores every instance and ranks per query, highest score first, ties by table id.
pub fn rank_dataset(model: &Model, data: &Dataset) -> Result<Run> {
    if model.schema() != data.schema() {
        return Err(Error::SchemaMismatch("dataset schema differs from model schema".into()));
    }
    let mut per_query: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
    for i in &data.instances {
        per_query.entry(&i.query_id).or_default().push((i.table_id.clone(), model.predict_values(&i.values)));
    }
    let mut run = Run::new();
    for (q, mut r) in per_query {
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        run.insert(q, r)?;
    }
    Ok(run)
}

/// Assigns each query to one of `k` folds after a seeded shuffle.
pub fn assign_folds(data: &Dataset, k: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("cross-validation needs k >= 2, got {k}")));
    }
    let mut queries: Vec<&str> = data.queries().into_iter().collect();
    if queries.len() < k {
        return Err(Error::InsufficientData(format!("{} distinct queries for {k} folds", queries.len())));
    }
    queries.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(queries.into_iter().enumerate().map(|(i, q)| (q.to_string(), i % k)).collect())
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: BTreeMap<String, usize>,
    /// Mean NDCG of each fold's held-out queries.
    pub fold_means: Vec<f64>,
    pub metric: MetricResult,
    /// Out-of-fold ranking of every query.
    pub run: Run,
}

/// Query-grouped k-fold cross-validation scored by NDCG@`cutoff` against the
/// dataset labels.
pub fn cross_validate(
    data: &Dataset,
    learner: &Learner,
    k: usize,
    cutoff: usize,
    gain: Gain,
    seed: u64,
) -> Result<CvResult> {
    cross_validate_against(data, &data.qrels()?, learner, k, cutoff, gain, seed)
}

/// As [`cross_validate`], scored against external judgments. Relevant tables
/// missing from the dataset then count against the ranking.
pub fn cross_validate_against(
    data: &Dataset,
    qrels: &Qrels,
    learner: &Learner,
    k: usize,
    cutoff: usize,
    gain: Gain,
    seed: u64,
) -> Result<CvResult> {
    let folds = assign_folds(data, k, seed)?;
    let mut run = Run::new();
    for f in 0..k {
        let train = data.filter(|i| folds[&i.query_id] != f);
        let test = data.filter(|i| folds[&i.query_id] == f);
        let model = Model::fit(&train, learner)?;
        let fold_run = rank_dataset(&model, &test)?;
        for q in fold_run.queries() {
            run.insert(q, fold_run.ranking(q).to_vec())?;
        }
    }
    let metric = ndcg_at_k(&run, qrels, cutoff, gain)?;
    let mut sums = vec![(0.0, 0usize); k];
    for (q, f) in &folds {
        let v = metric.per_query.get(q).copied().unwrap_or(0.0);
        sums[*f].0 += v;
        sums[*f].1 += 1;
    }
    let fold_means = sums.into_iter().map(|(s, n)| s / n as f64).collect();
    Ok(CvResult { folds, fold_means, metric, run })
}
