use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForestData, ForestModel, Node};
use crate::error::Result;
use crate::rng::{derive_seed, substream, tag};

/// Permutation importance of each feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub names: Vec<String>,
    /// Mean decrease of accuracy.
    pub mda: Vec<f64>,
    /// Standard error of the mean; across-forest sd when produced by
    /// [`ImportanceReport::aggregate`].
    pub sd: Vec<f64>,
    /// Feature indices by decreasing `mda`, ties to the lower index.
    pub ranking: Vec<usize>,
}

impl ImportanceReport {
    pub fn new(names: Vec<String>, mda: Vec<f64>, sd: Vec<f64>) -> Self {
        let ranking = rank_descending(&mda);
        ImportanceReport {
            names,
            mda,
            sd,
            ranking,
        }
    }

    /// Mean and sample sd of the MDA across several reports on the same
    /// features.
    pub fn aggregate(reports: &[ImportanceReport]) -> Self {
        assert!(!reports.is_empty(), "no reports to aggregate");
        let p = reports[0].mda.len();
        let r = reports.len() as f64;
        let mut mean = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for j in 0..p {
            mean[j] = reports.iter().map(|x| x.mda[j]).sum::<f64>() / r;
            if reports.len() > 1 {
                let ss: f64 = reports.iter().map(|x| (x.mda[j] - mean[j]).powi(2)).sum();
                sd[j] = (ss / (r - 1.0)).sqrt();
            }
        }
        ImportanceReport::new(reports[0].names.clone(), mean, sd)
    }
}

pub(crate) fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

const NONE: u32 = u32::MAX;

/// Mean decrease of accuracy.
///
/// For tree `t` and feature `j` the values of `j` are shuffled among the
/// out-of-bag rows of `t` and the tree's OOB error recomputed;
/// `MDA_j = (1/ntree) sum_t (err_t^j - err_t)`. Trees that never split on
/// `j` contribute exactly zero, as do trees without OOB rows.
pub fn mda_importance(model: &ForestModel, data: &ForestData, seed: u64) -> Result<ImportanceReport> {
    model.check_data(data)?;
    let p = data.n_features();
    let key = derive_seed(seed, tag::PERMUTATIONS, 0);
    let per_tree: Vec<Vec<f64>> = model
        .trees
        .par_iter()
        .zip(model.oob.par_iter())
        .enumerate()
        .map(|(t, (tree, oob))| {
            let mut diffs = vec![0.0; p];
            if oob.is_empty() {
                return diffs;
            }
            let m = oob.len() as f64;
            // A permutation of feature j can only change a row's prediction
            // below the first node on its path that splits on j, so each row
            // records that node per feature and the descent resumes there.
            let mut first_use = vec![NONE; oob.len() * p];
            let mut base = 0usize;
            let mut base_class = vec![0u8; oob.len()];
            for (r, &i) in oob.iter().enumerate() {
                let i = i as usize;
                let first = &mut first_use[r * p..(r + 1) * p];
                let mut at = 0;
                let class = loop {
                    match tree.nodes()[at] {
                        Node::Leaf { class } => break class,
                        Node::Split { feature, threshold, left, right } => {
                            if first[feature] == NONE {
                                first[feature] = at as u32;
                            }
                            at = if data.columns[feature][i] <= threshold { left } else { right };
                        }
                    }
                };
                base_class[r] = class;
                base += (class != data.labels[i]) as usize;
            }
            let mut rng = substream(key, t as u64);
            let mut shuffled: Vec<u32> = oob.clone();
            for (j, d) in diffs.iter_mut().enumerate() {
                if !tree.uses_feature(j) {
                    continue;
                }
                shuffled.copy_from_slice(oob);
                shuffled.shuffle(&mut rng);
                let mut permuted = base as isize;
                for (r, &i) in oob.iter().enumerate() {
                    let start = first_use[r * p + j];
                    if start == NONE {
                        continue;
                    }
                    let i = i as usize;
                    let y = data.labels[i];
                    let old = base_class[r];
                    let new = tree.predict_from(start as usize, |f| {
                        if f == j {
                            data.columns[j][shuffled[r] as usize]
                        } else {
                            data.columns[f][i]
                        }
                    });
                    permuted += (new != y) as isize - (old != y) as isize;
                }
                *d = (permuted as f64 - base as f64) / m;
            }
            diffs
        })
        .collect();

    let ntree = per_tree.len() as f64;
    let mut mda = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        mda[j] = per_tree.iter().map(|d| d[j]).sum::<f64>() / ntree;
        if per_tree.len() > 1 {
            let ss: f64 = per_tree.iter().map(|d| (d[j] - mda[j]).powi(2)).sum();
            sd[j] = (ss / (ntree - 1.0)).sqrt() / ntree.sqrt();
        }
    }
    Ok(ImportanceReport::new(data.names().to_vec(), mda, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{grow_forest, ForestConfig};
    use rand::Rng;

    fn threshold_data(n: usize, seed: u64) -> ForestData {
        let mut rng = substream(seed, 1);
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        let mut y = Vec::new();
        for _ in 0..n {
            let x1: f64 = rng.random();
            cols[0].push(rng.random());
            cols[1].push(x1);
            cols[2].push(rng.random_range(0..2) as f64);
            y.push(((x1 > 0.25) as u8) + ((x1 > 0.5) as u8) + ((x1 > 0.75) as u8));
        }
        ForestData::new(cols, y, vec!["noise".into(), "x1".into(), "coin".into()]).unwrap()
    }

    #[test]
    fn informative_feature_ranks_first() {
        let d = threshold_data(300, 5);
        let m = grow_forest(&d, &ForestConfig { ntree: 100, mtry: 2, seed: 1, ..Default::default() }).unwrap();
        let r = mda_importance(&m, &d, 2).unwrap();
        assert_eq!(r.ranking[0], 1);
        assert!(r.mda[1] > 0.3);
    }

    #[test]
    fn unused_feature_has_zero_mda() {
        // a constant column can never be split on
        let mut d = threshold_data(200, 6);
        d = ForestData::new(
            vec![d.column(1).to_vec(), vec![1.0; 200]],
            d.labels().to_vec(),
            vec!["x1".into(), "constant".into()],
        )
        .unwrap();
        let m = grow_forest(&d, &ForestConfig { ntree: 50, mtry: 2, seed: 3, ..Default::default() }).unwrap();
        let r = mda_importance(&m, &d, 4).unwrap();
        assert_eq!(r.mda[1], 0.0);
        assert_eq!(r.sd[1], 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let d = threshold_data(150, 7);
        let m = grow_forest(&d, &ForestConfig { ntree: 40, mtry: 1, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(mda_importance(&m, &d, 9).unwrap(), mda_importance(&m, &d, 9).unwrap());
    }

    #[test]
    fn ranking_ties_go_to_lower_index() {
        assert_eq!(rank_descending(&[0.1, 0.3, 0.1, 0.3]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn aggregate_uses_sample_sd() {
        let a = ImportanceReport::new(vec!["a".into()], vec![1.0], vec![0.0]);
        let b = ImportanceReport::new(vec!["a".into()], vec![3.0], vec![0.0]);
        let g = ImportanceReport::aggregate(&[a, b]);
        assert_eq!(g.mda, vec![2.0]);
        assert!((g.sd[0] - 2f64.sqrt()).abs() < 1e-15);
    }
}
