use serde::{Deserialize, Serialize};

use super::importance::rank_descending;
use super::{grow_forest, mda_importance, oob_error, ForestConfig, ForestData, ImportanceReport};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VsurfConfig {
    /// Forests grown in the importance stage.
    pub n_forests: usize,
    pub forest: ForestConfig,
}

impl Default for VsurfConfig {
    fn default() -> Self {
        VsurfConfig {
            n_forests: 25,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedModel {
    /// Feature indices, most important first.
    pub features: Vec<usize>,
    pub oob_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Mean and across-forest sd of the MDA.
    pub importance: ImportanceReport,
    /// Smallest across-forest sd; features with a lower mean MDA are dropped.
    pub threshold: f64,
    /// Features surviving the threshold, by decreasing mean MDA.
    pub retained: Vec<usize>,
    pub nested: Vec<NestedModel>,
    /// Features of the nested model with the smallest OOB error.
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    /// Set when the threshold stage removed every feature.
    pub empty_selection: bool,
}

impl SelectionResult {
    pub fn is_selected(&self, feature: usize) -> bool {
        self.selected.contains(&feature)
    }
}

/// Two-stage selection: threshold the mean MDA of `n_forests` forests at the
/// smallest sd, then pick the nested model (top-1, top-2, ...) of the
/// survivors with the smallest OOB error, ties to the smaller model.
pub fn vsurf_select(data: &ForestData, config: &VsurfConfig) -> Result<SelectionResult> {
    if config.n_forests < 2 {
        return Err(Error::Spec("n_forests must be at least 2".into()));
    }
    config.forest.validate(data.n_features())?;
    let seed = config.forest.seed;

    let mut reports = Vec::with_capacity(config.n_forests);
    for r in 0..config.n_forests as u64 {
        let forest_seed = derive_seed(seed, tag::VSURF_STAGE1, r);
        let cfg = ForestConfig { seed: forest_seed, ..config.forest };
        let model = grow_forest(data, &cfg)?;
        reports.push(mda_importance(&model, data, forest_seed)?);
    }
    let importance = ImportanceReport::aggregate(&reports);
    let threshold = importance.sd.iter().copied().fold(f64::INFINITY, f64::min);
    let retained: Vec<usize> = rank_descending(&importance.mda)
        .into_iter()
        .filter(|&j| importance.mda[j] >= threshold)
        .collect();

    let mut nested = Vec::with_capacity(retained.len());
    for m in 1..=retained.len() {
        let features = retained[..m].to_vec();
        let sub = data.select(&features);
        let cfg = ForestConfig {
            seed: derive_seed(seed, tag::VSURF_STAGE2, m as u64),
            mtry: config.forest.mtry.min(m),
            ..config.forest
        };
        let model = grow_forest(&sub, &cfg)?;
        nested.push(NestedModel {
            features,
            oob_error: oob_error(&model, &sub)?.error,
        });
    }

    let mut best: Option<&NestedModel> = None;
    for model in &nested {
        if best.is_none_or(|b| model.oob_error < b.oob_error) {
            best = Some(model);
        }
    }
    let selected = best.map(|b| b.features.clone()).unwrap_or_default();
    let selected_names = selected.iter().map(|&j| data.names()[j].clone()).collect();
    Ok(SelectionResult {
        importance,
        threshold,
        empty_selection: retained.is_empty(),
        retained,
        nested,
        selected,
        selected_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn keeps_the_signal_feature() {
        let mut rng = substream(11, 0);
        let n = 300;
        let mut cols = vec![Vec::new(); 4];
        let mut y = Vec::new();
        for _ in 0..n {
            for c in cols.iter_mut() {
                c.push(rng.random::<f64>());
            }
            y.push((cols[2].last().unwrap() > &0.5) as u8 * 2);
        }
        let names = (0..4).map(|j| format!("x{j}")).collect();
        let d = ForestData::new(cols, y, names).unwrap();
        let cfg = VsurfConfig {
            n_forests: 4,
            forest: ForestConfig { ntree: 50, mtry: 2, seed: 8, ..Default::default() },
        };
        let r = vsurf_select(&d, &cfg).unwrap();
        assert!(r.is_selected(2));
        assert_eq!(r.retained[0], 2);
        assert_eq!(r.nested.len(), r.retained.len());
        assert_eq!(r, vsurf_select(&d, &cfg).unwrap());
    }

    #[test]
    fn single_forest_is_rejected() {
        let d = ForestData::new(vec![vec![0.0, 1.0]], vec![0, 1], vec!["a".into()]).unwrap();
        let cfg = VsurfConfig { n_forests: 1, forest: ForestConfig { mtry: 1, ..Default::default() } };
        assert!(matches!(vsurf_select(&d, &cfg), Err(Error::Spec(_))));
    }
}
