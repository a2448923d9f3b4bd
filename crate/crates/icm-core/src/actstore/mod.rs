//! Durable store for pooled activation vectors captured during generation.
//!
//! Layout on disk: `manifest.json` plus fixed-record binary shards under
//! `shards/<layer_hash>_<t>.bin`, one shard per (layer, timestep) cell.
//! Shards are little-endian f32 with an 8-byte header (magic `ICMA`,
//! format version u32). Record layout:
//! `[sample_id u64][branch u8][pad 7B][f32 x d_l]`.
//!
//! A store is append-only until sealed; sealing writes the manifest. Sealed
//! stores are immutable and safe for any number of concurrent readers.

mod dataset;
mod pooling;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{Branch, LayerId};

pub use dataset::{LabelMap, LabelSource, ProbeDataset, SplitSpec};
pub use pooling::{pool_activation, Pooled, PoolingMode};

pub const SHARD_MAGIC: [u8; 4] = *b"ICMA";
pub const FORMAT_VERSION: u32 = 1;
const SHARD_HEADER_LEN: u64 = 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest corrupt: {0}")]
    ManifestCorrupt(String),
    #[error("create target {0} exists and is not an empty directory")]
    PathConflict(PathBuf),
    #[error("vector length {got} does not match registered width {expected} for {layer}")]
    WidthMismatch {
        layer: LayerId,
        expected: usize,
        got: usize,
    },
    #[error("duplicate record key (sample {sample_id}, {layer}, t={timestep}, {branch})")]
    DuplicateKey {
        sample_id: u64,
        layer: LayerId,
        timestep: usize,
        branch: Branch,
    },
    #[error("layer {0} is not registered in the store manifest")]
    UnknownLayer(LayerId),
    #[error("timestep {got} outside [0, {n_steps})")]
    TimestepOutOfRange { got: usize, n_steps: usize },
    #[error("store is not writable in {0:?} mode")]
    WrongMode(StoreMode),
    #[error("activation tensor has no rows")]
    EmptyTensor,
    #[error("requested {k} patches from {rows} token rows")]
    PatchCountExceedsTokens { k: usize, rows: usize },
    #[error("{0} sample ids have records but no label (first: {1:?})")]
    MissingLabels(usize, Vec<u64>),
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("class {class} absent from one side of the split")]
    ClassMissingFromSplit { class: u32 },
    #[error("class index {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: u32, n_classes: usize },
    #[error("test fraction {0} outside (0, 1)")]
    InvalidSplitFraction(f64),
    #[error("label file line {line} unparseable: {content:?}")]
    LabelParse { line: usize, content: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreMode {
    Create,
    Read,
    Append,
}

/// One pooled activation vector keyed by (sample, layer, timestep, branch).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub sample_id: u64,
    pub layer_id: LayerId,
    pub timestep: usize,
    pub branch: Branch,
    pub vector: Vec<f32>,
    pub prompt_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerEntry {
    pub id: LayerId,
    pub width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShardEntry {
    layer_id: LayerId,
    timestep: usize,
    file: String,
    n_records: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PromptEntry {
    sample_id: u64,
    prompt_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    magic: String,
    version: u32,
    pub layers: Vec<LayerEntry>,
    pub n_sampling_steps: usize,
    pub dtype: String,
    pub n_records: u64,
    pub default_split: DefaultSplit,
    shards: Vec<ShardEntry>,
    prompts: Vec<PromptEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefaultSplit {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl From<DefaultSplit> for SplitSpec {
    fn from(d: DefaultSplit) -> Self {
        SplitSpec {
            test_fraction: d.test_fraction,
            seed: d.seed,
            stratified: d.stratified,
        }
    }
}

/// Parameters fixed at store creation.
#[derive(Debug, Clone)]
pub struct StoreSpec {
    pub layers: Vec<LayerEntry>,
    pub n_sampling_steps: usize,
    pub default_split: DefaultSplit,
}

fn layer_hash(id: &LayerId) -> String {
    let digest = Sha256::digest(id.as_str().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn shard_file_name(layer: &LayerId, timestep: usize) -> String {
    format!("{}_{}.bin", layer_hash(layer), timestep)
}

/// Handle over a store directory. Single writer, many readers.
#[derive(Debug)]
pub struct StoreHandle {
    dir: PathBuf,
    mode: StoreMode,
    manifest: Manifest,
    widths: BTreeMap<LayerId, usize>,
    keys: BTreeSet<(u64, LayerId, usize, u8)>,
    writers: BTreeMap<(LayerId, usize), BufWriter<fs::File>>,
    shard_counts: BTreeMap<(LayerId, usize), u64>,
    prompt_ids: BTreeMap<u64, u64>,
    next_index: u64,
}

impl StoreHandle {
    /// Create a new store at `path` (must be absent or an empty directory).
    pub fn create(path: &Path, spec: StoreSpec) -> Result<Self, StoreError> {
        if path.exists() {
            let nonempty = path.read_dir()?.next().is_some();
            if !path.is_dir() || nonempty {
                return Err(StoreError::PathConflict(path.to_path_buf()));
            }
        } else {
            fs::create_dir_all(path)?;
        }
        fs::create_dir_all(path.join("shards"))?;
        let manifest = Manifest {
            magic: "ICMA".to_string(),
            version: FORMAT_VERSION,
            layers: spec.layers.clone(),
            n_sampling_steps: spec.n_sampling_steps,
            dtype: "f32".to_string(),
            n_records: 0,
            default_split: spec.default_split,
            shards: Vec::new(),
            prompts: Vec::new(),
        };
        let widths = spec
            .layers
            .iter()
            .map(|l| (l.id.clone(), l.width))
            .collect();
        Ok(StoreHandle {
            dir: path.to_path_buf(),
            mode: StoreMode::Create,
            manifest,
            widths,
            keys: BTreeSet::new(),
            writers: BTreeMap::new(),
            shard_counts: BTreeMap::new(),
            prompt_ids: BTreeMap::new(),
            next_index: 0,
        })
    }

    /// Open an existing sealed store read-only, validating the manifest and
    /// every shard's header and size.
    pub fn open_read(path: &Path) -> Result<Self, StoreError> {
        let manifest = Self::load_manifest(path)?;
        Self::validate_shards(path, &manifest)?;
        let widths: BTreeMap<LayerId, usize> = manifest
            .layers
            .iter()
            .map(|l| (l.id.clone(), l.width))
            .collect();
        let prompt_ids = manifest
            .prompts
            .iter()
            .map(|p| (p.sample_id, p.prompt_id))
            .collect();
        let next_index = manifest.n_records;
        Ok(StoreHandle {
            dir: path.to_path_buf(),
            mode: StoreMode::Read,
            manifest,
            widths,
            keys: BTreeSet::new(),
            writers: BTreeMap::new(),
            shard_counts: BTreeMap::new(),
            prompt_ids,
            next_index,
        })
    }

    /// Reopen a sealed store for appending. Existing keys are re-indexed so
    /// duplicate detection spans the whole store.
    pub fn open_append(path: &Path) -> Result<Self, StoreError> {
        let mut handle = Self::open_read(path)?;
        for entry in handle.manifest.shards.clone() {
            let rows = handle.read_shard(&entry)?;
            for (sample_id, branch, _) in rows {
                handle.keys.insert((
                    sample_id,
                    entry.layer_id.clone(),
                    entry.timestep,
                    branch.as_u8(),
                ));
            }
            handle
                .shard_counts
                .insert((entry.layer_id.clone(), entry.timestep), entry.n_records);
        }
        handle.mode = StoreMode::Append;
        Ok(handle)
    }

    pub fn open(path: &Path, mode: StoreMode, spec: Option<StoreSpec>) -> Result<Self, StoreError> {
        match mode {
            StoreMode::Create => {
                let spec = spec.ok_or_else(|| {
                    StoreError::ManifestCorrupt("create mode requires a store spec".into())
                })?;
                Self::create(path, spec)
            }
            StoreMode::Read => Self::open_read(path),
            StoreMode::Append => Self::open_append(path),
        }
    }

    fn load_manifest(path: &Path) -> Result<Manifest, StoreError> {
        let file = path.join("manifest.json");
        let text = fs::read_to_string(&file)
            .map_err(|e| StoreError::ManifestCorrupt(format!("cannot read {file:?}: {e}")))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| StoreError::ManifestCorrupt(format!("bad JSON: {e}")))?;
        if manifest.magic != "ICMA" {
            return Err(StoreError::ManifestCorrupt(format!(
                "magic {:?} != \"ICMA\"",
                manifest.magic
            )));
        }
        if manifest.version != FORMAT_VERSION {
            return Err(StoreError::ManifestCorrupt(format!(
                "format version {} unsupported (expect {FORMAT_VERSION})",
                manifest.version
            )));
        }
        if manifest.dtype != "f32" {
            return Err(StoreError::ManifestCorrupt(format!(
                "dtype {:?} unsupported",
                manifest.dtype
            )));
        }
        Ok(manifest)
    }

    fn validate_shards(path: &Path, manifest: &Manifest) -> Result<(), StoreError> {
        let widths: BTreeMap<&LayerId, usize> =
            manifest.layers.iter().map(|l| (&l.id, l.width)).collect();
        for entry in &manifest.shards {
            let width = *widths.get(&entry.layer_id).ok_or_else(|| {
                StoreError::ManifestCorrupt(format!("shard references unknown layer {}", entry.layer_id))
            })?;
            let file = path.join("shards").join(&entry.file);
            let meta = fs::metadata(&file).map_err(|e| {
                StoreError::ManifestCorrupt(format!("missing shard {:?}: {e}", entry.file))
            })?;
            let record_len = 16 + 4 * width as u64;
            let expect = SHARD_HEADER_LEN + entry.n_records * record_len;
            if meta.len() != expect {
                return Err(StoreError::ManifestCorrupt(format!(
                    "shard {:?} is {} bytes, expected {expect}",
                    entry.file,
                    meta.len()
                )));
            }
            let mut header = [0u8; 8];
            fs::File::open(&file)?.read_exact(&mut header)?;
            if header[..4] != SHARD_MAGIC {
                return Err(StoreError::ManifestCorrupt(format!(
                    "shard {:?} has bad magic",
                    entry.file
                )));
            }
            let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
            if version != FORMAT_VERSION {
                return Err(StoreError::ManifestCorrupt(format!(
                    "shard {:?} has version {version}",
                    entry.file
                )));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn mode(&self) -> StoreMode {
        self.mode
    }

    pub fn n_records(&self) -> u64 {
        self.next_index
    }

    pub fn layer_width(&self, layer: &LayerId) -> Option<usize> {
        self.widths.get(layer).copied()
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerEntry> {
        self.manifest.layers.iter()
    }

    /// Append one record; returns its monotonically increasing index.
    pub fn append_record(&mut self, rec: &ActivationRecord) -> Result<u64, StoreError> {
        if self.mode == StoreMode::Read {
            return Err(StoreError::WrongMode(self.mode));
        }
        let width = self
            .widths
            .get(&rec.layer_id)
            .copied()
            .ok_or_else(|| StoreError::UnknownLayer(rec.layer_id.clone()))?;
        if rec.vector.len() != width {
            return Err(StoreError::WidthMismatch {
                layer: rec.layer_id.clone(),
                expected: width,
                got: rec.vector.len(),
            });
        }
        if rec.timestep >= self.manifest.n_sampling_steps {
            return Err(StoreError::TimestepOutOfRange {
                got: rec.timestep,
                n_steps: self.manifest.n_sampling_steps,
            });
        }
        let key = (
            rec.sample_id,
            rec.layer_id.clone(),
            rec.timestep,
            rec.branch.as_u8(),
        );
        if self.keys.contains(&key) {
            return Err(StoreError::DuplicateKey {
                sample_id: rec.sample_id,
                layer: rec.layer_id.clone(),
                timestep: rec.timestep,
                branch: rec.branch,
            });
        }

        let shard_key = (rec.layer_id.clone(), rec.timestep);
        if !self.writers.contains_key(&shard_key) {
            let file_name = shard_file_name(&rec.layer_id, rec.timestep);
            let path = self.dir.join("shards").join(&file_name);
            let fresh = !path.exists();
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)?;
            let mut writer = BufWriter::new(file);
            if fresh {
                writer.write_all(&SHARD_MAGIC)?;
                writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
            }
            self.writers.insert(shard_key.clone(), writer);
        }
        let writer = self.writers.get_mut(&shard_key).unwrap();
        writer.write_all(&rec.sample_id.to_le_bytes())?;
        writer.write_all(&[rec.branch.as_u8(), 0, 0, 0, 0, 0, 0, 0])?;
        for &v in &rec.vector {
            writer.write_all(&v.to_le_bytes())?;
        }

        self.keys.insert(key);
        *self.shard_counts.entry(shard_key).or_insert(0) += 1;
        self.prompt_ids.insert(rec.sample_id, rec.prompt_id);
        let index = self.next_index;
        self.next_index += 1;
        Ok(index)
    }

    /// Flush buffered shard data to disk without sealing.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        for writer in self.writers.values_mut() {
            writer.flush()?;
        }
        Ok(())
    }

    /// Flush and write the manifest; the store becomes immutable.
    pub fn seal(mut self) -> Result<(), StoreError> {
        self.flush()?;
        let mut shards = Vec::new();
        let mut seen: BTreeSet<(LayerId, usize)> = BTreeSet::new();
        for (key, count) in &self.shard_counts {
            shards.push(ShardEntry {
                layer_id: key.0.clone(),
                timestep: key.1,
                file: shard_file_name(&key.0, key.1),
                n_records: *count,
            });
            seen.insert(key.clone());
        }
        self.manifest.shards = shards;
        self.manifest.n_records = self.next_index;
        self.manifest.prompts = self
            .prompt_ids
            .iter()
            .map(|(&sample_id, &prompt_id)| PromptEntry {
                sample_id,
                prompt_id,
            })
            .collect();
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| StoreError::ManifestCorrupt(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }

    fn read_shard(&self, entry: &ShardEntry) -> Result<Vec<(u64, Branch, Vec<f32>)>, StoreError> {
        let width = self
            .widths
            .get(&entry.layer_id)
            .copied()
            .ok_or_else(|| StoreError::UnknownLayer(entry.layer_id.clone()))?;
        let path = self.dir.join("shards").join(&entry.file);
        let bytes = fs::read(&path)?;
        let record_len = 16 + 4 * width;
        let expect = SHARD_HEADER_LEN as usize + entry.n_records as usize * record_len;
        if bytes.len() != expect || bytes[..4] != SHARD_MAGIC {
            return Err(StoreError::ManifestCorrupt(format!(
                "shard {:?} invalid at read time",
                entry.file
            )));
        }
        let mut rows = Vec::with_capacity(entry.n_records as usize);
        let mut off = SHARD_HEADER_LEN as usize;
        for _ in 0..entry.n_records {
            let sample_id = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let branch = Branch::from_u8(bytes[off + 8]).ok_or_else(|| {
                StoreError::ManifestCorrupt(format!("bad branch byte in {:?}", entry.file))
            })?;
            off += 16;
            let mut vector = Vec::with_capacity(width);
            for i in 0..width {
                let s = off + 4 * i;
                vector.push(f32::from_le_bytes(bytes[s..s + 4].try_into().unwrap()));
            }
            off += 4 * width;
            rows.push((sample_id, branch, vector));
        }
        Ok(rows)
    }

    /// All records for one (layer, timestep) cell, ordered by (sample, branch).
    pub fn read_cell(
        &self,
        layer: &LayerId,
        timestep: usize,
    ) -> Result<Vec<ActivationRecord>, StoreError> {
        if !self.widths.contains_key(layer) {
            return Err(StoreError::UnknownLayer(layer.clone()));
        }
        let entry = self
            .manifest
            .shards
            .iter()
            .find(|s| &s.layer_id == layer && s.timestep == timestep);
        let Some(entry) = entry else {
            return Ok(Vec::new());
        };
        let mut rows = self.read_shard(entry)?;
        rows.sort_by_key(|(sample_id, branch, _)| (*sample_id, branch.as_u8()));
        Ok(rows
            .into_iter()
            .map(|(sample_id, branch, vector)| ActivationRecord {
                sample_id,
                layer_id: layer.clone(),
                timestep,
                branch,
                vector,
                prompt_id: self.prompt_ids.get(&sample_id).copied().unwrap_or(0),
            })
            .collect())
    }

    /// Assemble the probe dataset for one cell: conditional-branch records
    /// only, rows ordered by sample id, labels joined from `labels`.
    pub fn assemble_dataset<F: Scalar>(
        &self,
        layer: &LayerId,
        timestep: usize,
        labels: &LabelMap,
        split: SplitSpec,
    ) -> Result<ProbeDataset<F>, StoreError> {
        let records = self.read_cell(layer, timestep)?;
        let conditional: Vec<&ActivationRecord> = records
            .iter()
            .filter(|r| r.branch == Branch::Conditional)
            .collect();
        let missing: Vec<u64> = conditional
            .iter()
            .filter(|r| labels.get(r.sample_id).is_none())
            .map(|r| r.sample_id)
            .collect();
        if !missing.is_empty() {
            let shown = missing.iter().take(5).copied().collect();
            return Err(StoreError::MissingLabels(missing.len(), shown));
        }
        let width = self.widths[layer];
        let mut features = Array2::zeros((conditional.len(), width));
        let mut y = Vec::with_capacity(conditional.len());
        for (i, rec) in conditional.iter().enumerate() {
            for (j, &v) in rec.vector.iter().enumerate() {
                features[[i, j]] = F::from(v).unwrap();
            }
            y.push(labels.get(rec.sample_id).unwrap());
        }
        ProbeDataset::from_rows(features, y, layer.clone(), timestep, split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn spec_two_layers() -> StoreSpec {
        StoreSpec {
            layers: vec![
                LayerEntry {
                    id: LayerId::new("down.0.attn.self"),
                    width: 4,
                },
                LayerEntry {
                    id: LayerId::new("mid.0.attn.self"),
                    width: 8,
                },
            ],
            n_sampling_steps: 10,
            default_split: DefaultSplit {
                test_fraction: 0.2,
                seed: 1,
                stratified: true,
            },
        }
    }

    fn rec(sample_id: u64, layer: &str, t: usize, branch: Branch, width: usize) -> ActivationRecord {
        ActivationRecord {
            sample_id,
            layer_id: LayerId::new(layer),
            timestep: t,
            branch,
            vector: (0..width).map(|i| sample_id as f32 + i as f32 * 0.5).collect(),
            prompt_id: 0,
        }
    }

    #[test]
    fn create_on_empty_dir_has_zero_records() {
        let dir = tempdir().unwrap();
        let store = StoreHandle::create(&dir.path().join("s"), spec_two_layers()).unwrap();
        assert_eq!(store.n_records(), 0);
    }

    #[test]
    fn create_over_nonempty_dir_conflicts() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("junk"), b"x").unwrap();
        let err = StoreHandle::create(dir.path(), spec_two_layers()).unwrap_err();
        assert!(matches!(err, StoreError::PathConflict(_)));
    }

    #[test]
    fn append_indexes_start_at_zero() {
        let dir = tempdir().unwrap();
        let mut store = StoreHandle::create(&dir.path().join("s"), spec_two_layers()).unwrap();
        let idx = store
            .append_record(&rec(0, "down.0.attn.self", 0, Branch::Conditional, 4))
            .unwrap();
        assert_eq!(idx, 0);
        let idx = store
            .append_record(&rec(1, "down.0.attn.self", 0, Branch::Conditional, 4))
            .unwrap();
        assert_eq!(idx, 1);
    }

    #[test]
    fn wrong_width_rejected() {
        let dir = tempdir().unwrap();
        let mut store = StoreHandle::create(&dir.path().join("s"), spec_two_layers()).unwrap();
        let err = store
            .append_record(&rec(0, "down.0.attn.self", 0, Branch::Conditional, 7))
            .unwrap_err();
        assert!(matches!(err, StoreError::WidthMismatch { .. }));
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempdir().unwrap();
        let mut store = StoreHandle::create(&dir.path().join("s"), spec_two_layers()).unwrap();
        let r = rec(3, "mid.0.attn.self", 2, Branch::Conditional, 8);
        store.append_record(&r).unwrap();
        let err = store.append_record(&r).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateKey { .. }));
    }

    #[test]
    fn roundtrip_preserves_bytes_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        let mut originals = Vec::new();
        {
            let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
            for sample in 0..20u64 {
                for t in [0usize, 3] {
                    let mut r = rec(sample, "down.0.attn.self", t, Branch::Conditional, 4);
                    // Exercise non-trivial float bit patterns.
                    r.vector[0] = f32::from_bits(0x3f80_0001 + sample as u32);
                    originals.push(r.clone());
                    store.append_record(&r).unwrap();
                }
            }
            store.seal().unwrap();
        }
        let store = StoreHandle::open_read(&path).unwrap();
        assert_eq!(store.n_records(), 40);
        let cell = store.read_cell(&LayerId::new("down.0.attn.self"), 3).unwrap();
        assert_eq!(cell.len(), 20);
        for r in &cell {
            let orig = originals
                .iter()
                .find(|o| o.sample_id == r.sample_id && o.timestep == 3)
                .unwrap();
            for (a, b) in orig.vector.iter().zip(&r.vector) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn reopen_append_preserves_count_and_detects_duplicates() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        {
            let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
            store
                .append_record(&rec(0, "down.0.attn.self", 0, Branch::Conditional, 4))
                .unwrap();
            store.seal().unwrap();
        }
        let mut store = StoreHandle::open_append(&path).unwrap();
        assert_eq!(store.n_records(), 1);
        let err = store
            .append_record(&rec(0, "down.0.attn.self", 0, Branch::Conditional, 4))
            .unwrap_err();
        assert!(matches!(err, StoreError::DuplicateKey { .. }));
        store
            .append_record(&rec(1, "down.0.attn.self", 0, Branch::Conditional, 4))
            .unwrap();
        store.seal().unwrap();
        let store = StoreHandle::open_read(&path).unwrap();
        assert_eq!(store.n_records(), 2);
    }

    #[test]
    fn truncated_shard_fails_open() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        {
            let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
            store
                .append_record(&rec(0, "down.0.attn.self", 0, Branch::Conditional, 4))
                .unwrap();
            store.seal().unwrap();
        }
        let shard_dir = path.join("shards");
        let shard = shard_dir.read_dir().unwrap().next().unwrap().unwrap().path();
        let bytes = std::fs::read(&shard).unwrap();
        std::fs::write(&shard, &bytes[..bytes.len() - 1]).unwrap();
        let err = StoreHandle::open_read(&path).unwrap_err();
        assert!(matches!(err, StoreError::ManifestCorrupt(_)));
    }

    #[test]
    fn concurrent_readers_agree() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        {
            let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
            for sample in 0..50u64 {
                store
                    .append_record(&rec(sample, "mid.0.attn.self", 1, Branch::Conditional, 8))
                    .unwrap();
            }
            store.seal().unwrap();
        }
        let single = StoreHandle::open_read(&path)
            .unwrap()
            .read_cell(&LayerId::new("mid.0.attn.self"), 1)
            .unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let p = path.clone();
                std::thread::spawn(move || {
                    StoreHandle::open_read(&p)
                        .unwrap()
                        .read_cell(&LayerId::new("mid.0.attn.self"), 1)
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), single);
        }
    }

    #[test]
    fn assemble_missing_labels_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
        for sample in 0..10u64 {
            store
                .append_record(&rec(sample, "down.0.attn.self", 0, Branch::Conditional, 4))
                .unwrap();
        }
        store.seal().unwrap();
        let store = StoreHandle::open_read(&path).unwrap();
        let mut labels = LabelMap::new(vec!["a".into(), "b".into()], LabelSource::Manual);
        for sample in 0..9u64 {
            labels.insert(sample, (sample % 2) as u32).unwrap();
        }
        let err = store
            .assemble_dataset::<f64>(&LayerId::new("down.0.attn.self"), 0, &labels, SplitSpec::default())
            .unwrap_err();
        assert!(matches!(err, StoreError::MissingLabels(1, _)));
    }

    #[test]
    fn assemble_skips_unconditional_and_orders_by_sample() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s");
        let mut store = StoreHandle::create(&path, spec_two_layers()).unwrap();
        // Insert out of order, with unconditional records interleaved.
        for sample in [5u64, 1, 3, 0, 2, 4] {
            store
                .append_record(&rec(sample, "down.0.attn.self", 0, Branch::Conditional, 4))
                .unwrap();
            store
                .append_record(&rec(sample, "down.0.attn.self", 0, Branch::Unconditional, 4))
                .unwrap();
        }
        store.seal().unwrap();
        let store = StoreHandle::open_read(&path).unwrap();
        let mut labels = LabelMap::new(vec!["a".into(), "b".into()], LabelSource::Manual);
        for sample in 0..6u64 {
            labels.insert(sample, (sample % 2) as u32).unwrap();
        }
        let ds = store
            .assemble_dataset::<f64>(
                &LayerId::new("down.0.attn.self"),
                0,
                &labels,
                SplitSpec {
                    test_fraction: 0.34,
                    seed: 0,
                    stratified: true,
                },
            )
            .unwrap();
        assert_eq!(ds.n_rows(), 6);
        // Row i corresponds to sample i; vector[0] encodes the sample id.
        for i in 0..6 {
            assert_eq!(ds.features[[i, 0]], i as f64);
        }
    }
}
