//! Labeled probe datasets and train/test splitting.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::rng;
use crate::scalar::Scalar;
use crate::types::LayerId;

use super::StoreError;

/// Pseudo-labels for generated samples: `sample_id -> class index`,
/// plus the class-name table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub classes: Vec<String>,
    map: BTreeMap<u64, u32>,
    pub source: LabelSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Oracle,
    Manual,
}

impl LabelMap {
    pub fn new(classes: Vec<String>, source: LabelSource) -> Self {
        LabelMap {
            classes,
            map: BTreeMap::new(),
            source,
        }
    }

    pub fn insert(&mut self, sample_id: u64, class: u32) -> Result<(), StoreError> {
        if class as usize >= self.classes.len() {
            return Err(StoreError::ClassOutOfRange {
                class,
                n_classes: self.classes.len(),
            });
        }
        self.map.insert(sample_id, class);
        Ok(())
    }

    pub fn get(&self, sample_id: u64) -> Option<u32> {
        self.map.get(&sample_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.map.iter().map(|(&k, &v)| (k, v))
    }

    /// Number of distinct classes actually present.
    pub fn distinct_classes(&self) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        for &c in self.map.values() {
            seen.insert(c);
        }
        seen.len()
    }

    /// Write as newline-delimited `sample_id<TAB>class_index`.
    pub fn save_tsv(&self, path: &Path) -> Result<(), StoreError> {
        let mut out = String::new();
        for (id, class) in self.iter() {
            out.push_str(&format!("{id}\t{class}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Read from newline-delimited `sample_id<TAB>class_index`.
    pub fn load_tsv(
        path: &Path,
        classes: Vec<String>,
        source: LabelSource,
    ) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut labels = LabelMap::new(classes, source);
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let parse = |s: Option<&str>| -> Option<u64> { s.and_then(|v| v.trim().parse().ok()) };
            let id = parse(parts.next());
            let class = parse(parts.next());
            match (id, class) {
                (Some(id), Some(class)) => labels.insert(id, class as u32)?,
                _ => {
                    return Err(StoreError::LabelParse {
                        line: lineno + 1,
                        content: line.to_string(),
                    })
                }
            }
        }
        Ok(labels)
    }
}

/// Split policy for dataset assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 0,
            stratified: true,
        }
    }
}

/// Feature matrix plus labels and split masks for one (layer, timestep) cell.
#[derive(Debug, Clone)]
pub struct ProbeDataset<F: Scalar> {
    pub features: Array2<F>,
    pub labels: Vec<u32>,
    /// `true` marks a training row; test rows are the complement.
    pub train_mask: Vec<bool>,
    pub layer_id: LayerId,
    pub timestep: usize,
}

impl<F: Scalar> ProbeDataset<F> {
    /// Assemble from parallel rows, applying the split. Rows must already be
    /// ordered by sample id; callers that read from a store guarantee this.
    pub fn from_rows(
        features: Array2<F>,
        labels: Vec<u32>,
        layer_id: LayerId,
        timestep: usize,
        split: SplitSpec,
    ) -> Result<Self, StoreError> {
        let n = features.nrows();
        assert_eq!(n, labels.len(), "feature/label row mismatch");
        let distinct: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(StoreError::SingleClassDataset);
        }
        let train_mask = make_split(&labels, split)?;
        let ds = ProbeDataset {
            features,
            labels,
            train_mask,
            layer_id,
            timestep,
        };
        for &class in &distinct {
            let in_train = ds.rows_of(true).any(|i| ds.labels[i] == class);
            let in_test = ds.rows_of(false).any(|i| ds.labels[i] == class);
            if !in_train || !in_test {
                return Err(StoreError::ClassMissingFromSplit { class });
            }
        }
        Ok(ds)
    }

    /// Assemble with an explicit train mask (no internal split). Both sides
    /// must still contain every class.
    pub fn with_mask(
        features: Array2<F>,
        labels: Vec<u32>,
        train_mask: Vec<bool>,
        layer_id: LayerId,
        timestep: usize,
    ) -> Result<Self, StoreError> {
        assert_eq!(features.nrows(), labels.len(), "feature/label row mismatch");
        assert_eq!(labels.len(), train_mask.len(), "label/mask row mismatch");
        let distinct: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(StoreError::SingleClassDataset);
        }
        let ds = ProbeDataset {
            features,
            labels,
            train_mask,
            layer_id,
            timestep,
        };
        for &class in &distinct {
            let in_train = ds.rows_of(true).any(|i| ds.labels[i] == class);
            let in_test = ds.rows_of(false).any(|i| ds.labels[i] == class);
            if !in_train || !in_test {
                return Err(StoreError::ClassMissingFromSplit { class });
            }
        }
        Ok(ds)
    }

    fn rows_of(&self, train: bool) -> impl Iterator<Item = usize> + '_ {
        self.train_mask
            .iter()
            .enumerate()
            .filter(move |(_, &m)| m == train)
            .map(|(i, _)| i)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.train_mask.iter().filter(|&&m| m).count()
    }

    pub fn n_test(&self) -> usize {
        self.n_rows() - self.n_train()
    }

    /// Copy of the train (or test) rows with their labels.
    pub fn split_rows(&self, train: bool) -> (Array2<F>, Vec<u32>) {
        let idx: Vec<usize> = self.rows_of(train).collect();
        let mut out = Array2::zeros((idx.len(), self.dim()));
        let mut labels = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        (out, labels)
    }

    /// Re-type the feature matrix (e.g. stored f32 -> f64 for fitting).
    pub fn cast<G: Scalar>(&self) -> ProbeDataset<G> {
        ProbeDataset {
            features: self.features.mapv(|v| G::from(v).unwrap()),
            labels: self.labels.clone(),
            train_mask: self.train_mask.clone(),
            layer_id: self.layer_id.clone(),
            timestep: self.timestep,
        }
    }
}

/// Build a train mask. Stratified mode preserves per-class proportions
/// within one sample; plain mode shuffles globally.
fn make_split(labels: &[u32], split: SplitSpec) -> Result<Vec<bool>, StoreError> {
    if !(0.0..1.0).contains(&split.test_fraction) || split.test_fraction <= 0.0 {
        return Err(StoreError::InvalidSplitFraction(split.test_fraction));
    }
    let n = labels.len();
    let mut mask = vec![true; n];
    let mut rng = rng::stream(split.seed, "dataset-split", 0);
    if split.stratified {
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            by_class.entry(c).or_default().push(i);
        }
        for idx in by_class.values() {
            let mut shuffled = idx.clone();
            shuffled.shuffle(&mut rng);
            let n_test = (idx.len() as f64 * split.test_fraction).round() as usize;
            let n_test = n_test.min(idx.len().saturating_sub(1)).max(1);
            for &i in shuffled.iter().take(n_test) {
                mask[i] = false;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_test = ((n as f64) * split.test_fraction).round() as usize;
        for &i in order.iter().take(n_test) {
            mask[i] = false;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn features(n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |(i, j)| (i * d + j) as f64)
    }

    #[test]
    fn stratified_split_is_proportional() {
        // 100 rows, balanced 2 classes, test 0.2 -> 10 per class in test.
        let labels: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let ds = ProbeDataset::from_rows(
            features(100, 3),
            labels,
            LayerId::new("l"),
            0,
            SplitSpec {
                test_fraction: 0.2,
                seed: 9,
                stratified: true,
            },
        )
        .unwrap();
        assert_eq!(ds.n_train(), 80);
        assert_eq!(ds.n_test(), 20);
        let (_, test_labels) = ds.split_rows(false);
        let per_class = test_labels.iter().filter(|&&c| c == 0).count();
        assert_eq!(per_class, 10);
    }

    #[test]
    fn single_class_rejected() {
        let labels = vec![1u32; 10];
        let err = ProbeDataset::from_rows(
            features(10, 2),
            labels,
            LayerId::new("l"),
            0,
            SplitSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, StoreError::SingleClassDataset));
    }

    #[test]
    fn split_is_deterministic() {
        let labels: Vec<u32> = (0..50).map(|i| (i % 2) as u32).collect();
        let split = SplitSpec {
            test_fraction: 0.2,
            seed: 4,
            stratified: true,
        };
        let a = make_split(&labels, split).unwrap();
        let b = make_split(&labels, split).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labelmap_tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        let mut labels = LabelMap::new(vec!["red".into(), "blue".into()], LabelSource::Oracle);
        labels.insert(0, 1).unwrap();
        labels.insert(5, 0).unwrap();
        labels.save_tsv(&path).unwrap();
        let loaded =
            LabelMap::load_tsv(&path, vec!["red".into(), "blue".into()], LabelSource::Oracle)
                .unwrap();
        assert_eq!(labels, loaded);
    }

    #[test]
    fn labelmap_rejects_out_of_range_class() {
        let mut labels = LabelMap::new(vec!["red".into()], LabelSource::Manual);
        assert!(labels.insert(0, 3).is_err());
    }
}
