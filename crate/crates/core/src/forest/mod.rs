//! Random-forest classifier, out-of-bag error, permutation importance and
//! two-stage variable selection.
//!
//! Trees are unpruned CART trees on bootstrap samples with `mtry` random
//! candidate features per node. Tree `t` draws all of its randomness from
//! stream `t` of a key derived from the forest seed, so growing in parallel
//! gives the same forest as growing serially.

mod importance;
mod tree;
mod vsurf;

pub use importance::{mda_importance, ImportanceReport};
pub use tree::{best_split, Node, SplitChoice, Tree};
pub use vsurf::{vsurf_select, NestedModel, SelectionResult, VsurfConfig};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariate, Dataset, ResponseClass};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, tag};
use tree::{grow_tree, NUM_CLASSES};

/// Training matrix in column-major layout with per-column value ranks.
#[derive(Debug, Clone)]
pub struct ForestData {
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
    names: Vec<String>,
    /// Sorted distinct values of each column.
    distinct: Vec<Vec<f64>>,
    /// Rank of each row's value within `distinct`.
    ranks: Vec<Vec<u32>>,
}

impl ForestData {
    pub fn new(columns: Vec<Vec<f64>>, labels: Vec<u8>, names: Vec<String>) -> Result<Self> {
        if columns.len() != names.len() {
            return Err(Error::Input(format!(
                "{} columns but {} names",
                columns.len(),
                names.len()
            )));
        }
        let n = labels.len();
        if let Some(bad) = labels.iter().find(|&&y| y as usize >= NUM_CLASSES) {
            return Err(Error::Input(format!("label {bad} outside 0..=3")));
        }
        let mut distinct = Vec::with_capacity(columns.len());
        let mut ranks = Vec::with_capacity(columns.len());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Input(format!(
                    "column {j} has {} values, expected {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("column {j} has a non-finite value")));
            }
            let mut values = col.clone();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let r: Vec<u32> = col
                .iter()
                .map(|v| values.partition_point(|u| u < v) as u32)
                .collect();
            distinct.push(values);
            ranks.push(r);
        }
        Ok(ForestData {
            columns,
            labels,
            names,
            distinct,
            ranks,
        })
    }

    pub fn from_dataset(data: &Dataset, covariates: &[Covariate]) -> Self {
        let columns = covariates
            .iter()
            .map(|&c| data.records().iter().map(|r| r.covariates.get(c)).collect())
            .collect();
        let names = covariates.iter().map(|c| c.name().to_string()).collect();
        ForestData::new(columns, data.labels(), names).expect("dataset values are finite")
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Data restricted to the given features, in the given order.
    pub fn select(&self, features: &[usize]) -> ForestData {
        ForestData {
            columns: features.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
            names: features.iter().map(|&j| self.names[j].clone()).collect(),
            distinct: features.iter().map(|&j| self.distinct[j].clone()).collect(),
            ranks: features.iter().map(|&j| self.ranks[j].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    /// Candidate features per node.
    pub mtry: usize,
    /// Nodes with at most this many rows become leaves.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            ntree: 500,
            mtry: 3,
            min_node_size: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::Spec("ntree must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::Spec(format!(
                "mtry = {} must lie in 1..={n_features}",
                self.mtry
            )));
        }
        if self.min_node_size == 0 {
            return Err(Error::Spec("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub n_train: usize,
    trees: Vec<Tree>,
    /// Sorted bootstrap multiset of each tree.
    inbag: Vec<Vec<u32>>,
    /// Training rows absent from each tree's bootstrap sample.
    oob: Vec<Vec<u32>>,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn inbag(&self, t: usize) -> &[u32] {
        &self.inbag[t]
    }

    pub fn oob(&self, t: usize) -> &[u32] {
        &self.oob[t]
    }

    pub fn votes(&self, x: &[f64]) -> [usize; NUM_CLASSES] {
        let mut votes = [0; NUM_CLASSES];
        for tree in &self.trees {
            votes[tree.predict(x) as usize] += 1;
        }
        votes
    }

    pub(crate) fn check_data(&self, data: &ForestData) -> Result<()> {
        if data.n_features() != self.feature_names.len() || data.n_obs() != self.n_train {
            return Err(Error::Input("data do not match the training data of the forest".into()));
        }
        Ok(())
    }
}

/// Class with the most votes; ties go to the lowest class index.
pub fn majority_vote(votes: &[usize; NUM_CLASSES]) -> ResponseClass {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if votes[k] > votes[best] {
            best = k;
        }
    }
    ResponseClass::from_index(best).expect("class index")
}

/// Grows `config.ntree` trees on bootstrap samples of `data`.
pub fn grow_forest(data: &ForestData, config: &ForestConfig) -> Result<ForestModel> {
    let n = data.n_obs();
    if n < 2 {
        return Err(Error::Input("at least two observations are required".into()));
    }
    config.validate(data.n_features())?;
    let key = derive_seed(config.seed, tag::TREES, 0);
    let grown: Vec<(Tree, Vec<u32>, Vec<u32>)> = (0..config.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(key, t as u64);
            let mut inbag: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            let tree = grow_tree(
                data,
                inbag.clone(),
                config.mtry,
                config.min_node_size,
                config.max_depth,
                &mut rng,
            );
            inbag.sort_unstable();
            let mut seen = vec![false; n];
            for &i in &inbag {
                seen[i as usize] = true;
            }
            let oob = (0..n as u32).filter(|&i| !seen[i as usize]).collect();
            (tree, inbag, oob)
        })
        .collect();
    let mut trees = Vec::with_capacity(config.ntree);
    let mut inbag = Vec::with_capacity(config.ntree);
    let mut oob = Vec::with_capacity(config.ntree);
    for (t, i, o) in grown {
        trees.push(t);
        inbag.push(i);
        oob.push(o);
    }
    Ok(ForestModel {
        config: *config,
        feature_names: data.names().to_vec(),
        n_train: n,
        trees,
        inbag,
        oob,
    })
}

/// Majority vote of the trees.
pub fn predict(model: &ForestModel, x: &[f64]) -> Result<ResponseClass> {
    if x.len() != model.feature_names.len() {
        return Err(Error::Input(format!(
            "expected {} features, got {}",
            model.feature_names.len(),
            x.len()
        )));
    }
    Ok(majority_vote(&model.votes(x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobError {
    pub error: f64,
    /// Observations with at least one out-of-bag tree.
    pub n_evaluated: usize,
    /// Observations that were in every bootstrap sample.
    pub n_excluded: usize,
}

/// Out-of-bag misclassification rate, voting per observation over the trees
/// for which it is out of bag.
pub fn oob_error(model: &ForestModel, data: &ForestData) -> Result<OobError> {
    model.check_data(data)?;
    let n = data.n_obs();
    let mut votes = vec![[0usize; NUM_CLASSES]; n];
    for (tree, oob) in model.trees.iter().zip(&model.oob) {
        for &i in oob {
            let i = i as usize;
            votes[i][tree.predict_with(|j| data.columns[j][i]) as usize] += 1;
        }
    }
    let mut evaluated = 0;
    let mut wrong = 0;
    for (v, &y) in votes.iter().zip(&data.labels) {
        if v.iter().all(|&c| c == 0) {
            continue;
        }
        evaluated += 1;
        if majority_vote(v) as u8 != y {
            wrong += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::OobUndefined(
            "no observation is out of bag for any tree".into(),
        ));
    }
    Ok(OobError {
        error: wrong as f64 / evaluated as f64,
        n_evaluated: evaluated,
        n_excluded: n - evaluated,
    })
}
