//! Clip metadata, uploader-based client partitioning, and synthetic tasks.
//!
//! The canonical manifest is a CSV file with header
//! `clip_id,uploader,labels,split,duration_s`, where `labels` is a
//! `|`-separated list of class names. Partitioning groups training clips by
//! uploader, mirroring how device rosters are simulated from real upload
//! metadata. The synthetic generator produces a learnable multi-label task
//! with power-law client sizes and Dirichlet label skew for desk-scale
//! federation experiments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{LabeledBatch, Matrix};
use crate::rng::{next_unit_f64, stream_rng, Stream};

/// Scale of class prototype vectors in the synthetic task.
pub const PROTOTYPE_NORM: f64 = 3.0;
/// Standard deviation of the additive noise around prototypes.
pub const EXAMPLE_NOISE_STD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest is missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: duplicate clip_id `{clip_id}`")]
    DuplicateClipId { row: u64, clip_id: String },
    #[error("row {row}: empty label field")]
    EmptyLabels { row: u64 },
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: u64, field: String },
    #[error("row {row}: unknown split `{value}` (expected train, val, or test)")]
    BadSplit { row: u64, value: String },
    #[error("row {row}: invalid duration `{value}`")]
    BadDuration { row: u64, value: String },
    #[error("label `{0}` is not in the vocabulary")]
    UnknownLabel(String),
    #[error("infeasible synthetic task spec: {0}")]
    InfeasibleSpec(String),
}

/// Dataset split of one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(value: &str) -> Option<Self> {
        match value {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One row of the clip manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub uploader: String,
    pub labels: BTreeSet<String>,
    pub split: Split,
    pub duration_s: Option<f64>,
}

/// Ordered class vocabulary shared by labels, targets, and score columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary in the given class order. Duplicates keep the first index.
    pub fn from_classes(classes: Vec<String>) -> Self {
        let mut index = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            index.entry(c.clone()).or_insert(i);
        }
        Self { classes, index }
    }

    /// Sorted vocabulary of every label appearing in the clips.
    pub fn from_clips(clips: &[ClipRecord]) -> Self {
        let set: BTreeSet<&String> = clips.iter().flat_map(|c| c.labels.iter()).collect();
        Self::from_classes(set.into_iter().cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn position(&self, class: &str) -> Option<usize> {
        self.index.get(class).copied()
    }

    /// Multi-hot vector for a label set, in vocabulary order.
    pub fn binary_vector(&self, labels: &BTreeSet<String>) -> Result<Vec<f64>, DataError> {
        let mut v = vec![0.0; self.classes.len()];
        for label in labels {
            let i = self.position(label).ok_or_else(|| DataError::UnknownLabel(label.clone()))?;
            v[i] = 1.0;
        }
        Ok(v)
    }
}

/// One simulated device: a client id plus its private labeled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: String,
    pub data: LabeledBatch,
}

impl ClientDataset {
    /// Local example count, the `n_k` aggregation weight.
    pub fn n_k(&self) -> usize {
        self.data.len()
    }
}

/// Metadata-level client: one uploader and the indices of their train clips.
#[derive(Debug, Clone, PartialEq)]
pub struct UploaderClient {
    pub client_id: String,
    pub clip_indices: Vec<usize>,
}

impl UploaderClient {
    pub fn n_k(&self) -> usize {
        self.clip_indices.len()
    }
}

const REQUIRED_COLUMNS: [&str; 5] = ["clip_id", "uploader", "labels", "split", "duration_s"];

/// Parse a clip manifest. Rejects duplicate clip ids, empty label fields,
/// unknown splits, and malformed durations, each with its file row number.
pub fn ingest_metadata(path: &Path) -> Result<Vec<ClipRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut column = HashMap::new();
    for (i, name) in headers.iter().enumerate() {
        column.insert(name.trim().to_string(), i);
    }
    let mut col = [0usize; 5];
    for (slot, name) in col.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = *column.get(name).ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
    }
    let [clip_col, uploader_col, labels_col, split_col, duration_col] = col;

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str, DataError> {
            row.get(i).ok_or_else(|| DataError::MissingField { row: line, field: name.into() })
        };

        let clip_id = field(clip_col, "clip_id")?.trim().to_string();
        if !seen.insert(clip_id.clone()) {
            return Err(DataError::DuplicateClipId { row: line, clip_id });
        }
        let uploader = field(uploader_col, "uploader")?.trim().to_string();

        let raw_labels = field(labels_col, "labels")?.trim();
        if raw_labels.is_empty() {
            return Err(DataError::EmptyLabels { row: line });
        }
        let mut labels = BTreeSet::new();
        for part in raw_labels.split('|') {
            let part = part.trim();
            if part.is_empty() {
                return Err(DataError::EmptyLabels { row: line });
            }
            labels.insert(part.to_string());
        }

        let split_raw = field(split_col, "split")?.trim();
        let split = Split::parse(split_raw)
            .ok_or_else(|| DataError::BadSplit { row: line, value: split_raw.to_string() })?;

        let duration_raw = field(duration_col, "duration_s")?.trim();
        let duration_s = if duration_raw.is_empty() {
            None
        } else {
            match duration_raw.parse::<f64>() {
                Ok(d) if d > 0.0 && d.is_finite() => Some(d),
                _ => {
                    return Err(DataError::BadDuration {
                        row: line,
                        value: duration_raw.to_string(),
                    })
                }
            }
        };

        records.push(ClipRecord { clip_id, uploader, labels, split, duration_s });
    }
    Ok(records)
}

/// Group train-split clips by uploader and keep uploaders contributing at
/// least `min_clips` clips. Clients come back sorted by id.
pub fn partition_by_uploader(clips: &[ClipRecord], min_clips: usize) -> Vec<UploaderClient> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, clip) in clips.iter().enumerate() {
        if clip.split == Split::Train {
            groups.entry(&clip.uploader).or_default().push(i);
        }
    }
    groups
        .into_iter()
        .filter(|(_, indices)| indices.len() >= min_clips)
        .map(|(uploader, clip_indices)| UploaderClient {
            client_id: uploader.to_string(),
            clip_indices,
        })
        .collect()
}

/// Uploader counts by contribution bucket, over train-split clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UploaderHistogram {
    /// Uploaders contributing exactly one clip.
    pub single: usize,
    /// Uploaders contributing 2 to 10 clips.
    pub two_to_ten: usize,
    /// Uploaders contributing 11 to 99 clips.
    pub eleven_to_ninety_nine: usize,
    /// Uploaders contributing 100 or more clips.
    pub hundred_or_more: usize,
}

impl UploaderHistogram {
    pub fn total_uploaders(&self) -> usize {
        self.single + self.two_to_ten + self.eleven_to_ninety_nine + self.hundred_or_more
    }

    /// Uploaders contributing 10 clips or less.
    pub fn at_most_ten(&self) -> usize {
        self.single + self.two_to_ten
    }
}

/// Exact uploader counts per clip-count bucket {1, 2-10, 11-99, >=100}.
pub fn uploader_histogram(clips: &[ClipRecord]) -> UploaderHistogram {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for clip in clips.iter().filter(|c| c.split == Split::Train) {
        *counts.entry(&clip.uploader).or_insert(0) += 1;
    }
    let mut hist = UploaderHistogram::default();
    for (_, n) in counts {
        match n {
            1 => hist.single += 1,
            2..=10 => hist.two_to_ten += 1,
            11..=99 => hist.eleven_to_ninety_nine += 1,
            _ => hist.hundred_or_more += 1,
        }
    }
    hist
}

/// Truncated power law for client sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeLaw {
    /// Power-law exponent; 0 gives a uniform draw over the range.
    pub exponent: f64,
    pub min_size: usize,
    pub max_size: usize,
}

/// Configuration for the synthetic non-IID federated task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthTaskSpec {
    pub num_clients: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub size_law: SizeLaw,
    /// Dirichlet concentration; small values give strong per-client label
    /// skew, large values approach the IID limit.
    pub label_skew: f64,
    /// Centrally held evaluation data, as a fraction of the total training
    /// examples (at least one example per class is always generated).
    pub eval_fraction: f64,
    pub seed: u64,
}

impl SynthTaskSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.num_clients == 0 || self.num_classes == 0 || self.input_dim == 0 {
            return Err(DataError::InfeasibleSpec("counts must be >= 1".into()));
        }
        if self.size_law.min_size == 0 {
            return Err(DataError::InfeasibleSpec("min_size must be >= 1".into()));
        }
        if self.size_law.min_size > self.size_law.max_size {
            return Err(DataError::InfeasibleSpec(format!(
                "min size {} > max size {}",
                self.size_law.min_size, self.size_law.max_size
            )));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(DataError::InfeasibleSpec("eval_fraction must lie in (0, 1)".into()));
        }
        if !(self.label_skew > 0.0) {
            return Err(DataError::InfeasibleSpec("label_skew must be > 0".into()));
        }
        Ok(())
    }
}

/// A generated federated task: the client roster, the centrally held
/// evaluation batch, and the ground-truth class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub spec: SynthTaskSpec,
    pub clients: Vec<ClientDataset>,
    pub eval: LabeledBatch,
    pub prototypes: Matrix,
}

impl SynthTask {
    /// Pool every client's examples into one centralized batch.
    pub fn pooled_train(&self) -> LabeledBatch {
        let batches: Vec<&LabeledBatch> = self.clients.iter().map(|c| &c.data).collect();
        LabeledBatch::concat(&batches).expect("clients share dimensions")
    }

    pub fn total_examples(&self) -> usize {
        self.clients.iter().map(ClientDataset::n_k).sum()
    }

    /// Synthetic class names, "class_00", "class_01", ...
    pub fn vocabulary(&self) -> Vocabulary {
        let width = (self.spec.num_classes.max(2) - 1).to_string().len();
        Vocabulary::from_classes(
            (0..self.spec.num_classes).map(|c| format!("class_{c:0width$}")).collect(),
        )
    }
}

fn sample_size(u: f64, law: &SizeLaw) -> usize {
    let lo = law.min_size as f64;
    let hi = law.max_size as f64;
    let alpha = law.exponent;
    let s = if alpha == 0.0 {
        lo + u * (hi - lo)
    } else if (alpha - 1.0).abs() < 1e-12 {
        lo * (hi / lo).powf(u)
    } else {
        let a = 1.0 - alpha;
        (lo.powf(a) + u * (hi.powf(a) - lo.powf(a))).powf(1.0 / a)
    };
    (s.round() as usize).clamp(law.min_size, law.max_size)
}

/// Symmetric Dirichlet draw via normalized gamma variates. Degenerate draws
/// (all-zero underflow) are retried.
fn dirichlet<R: Rng>(concentration: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum.is_finite() && sum > 0.0 {
            return draws.into_iter().map(|d| d / sum).collect();
        }
    }
}

fn categorical(proportions: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    proportions.len() - 1
}

/// Generate a deterministic synthetic federated task.
///
/// Client sizes follow a truncated power law, per-client class proportions
/// follow a symmetric Dirichlet, and examples are noisy class prototypes so
/// that a linear model can learn the task. Identical specs produce
/// bit-identical tasks.
pub fn synth_federated_task(spec: &SynthTaskSpec) -> Result<SynthTask, DataError> {
    spec.validate()?;
    let k = spec.num_classes;
    let d = spec.input_dim;

    let mut size_rng = stream_rng(spec.seed, Stream::SynthSizes, &[]);
    let sizes: Vec<usize> =
        (0..spec.num_clients).map(|_| sample_size(next_unit_f64(&mut size_rng), &spec.size_law)).collect();

    // Ground-truth prototypes: random directions scaled to a fixed norm.
    let mut mix_rng = stream_rng(spec.seed, Stream::SynthMixtures, &[]);
    let mut prototypes = Matrix::zeros(k, d);
    for c in 0..k {
        let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut mix_rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        for (j, v) in row.iter().enumerate() {
            prototypes.set(c, j, v / norm * PROTOTYPE_NORM);
        }
    }

    let width = (spec.num_clients.max(2) - 1).to_string().len();
    let mut clients = Vec::with_capacity(spec.num_clients);
    for (i, &n_k) in sizes.iter().enumerate() {
        let mut client_rng = stream_rng(spec.seed, Stream::SynthExamples, &[i as u64]);
        let proportions = dirichlet(spec.label_skew, k, &mut client_rng);
        let mut inputs = Matrix::zeros(n_k, d);
        let mut targets = Matrix::zeros(n_k, k);
        for row in 0..n_k {
            let class = categorical(&proportions, next_unit_f64(&mut client_rng));
            targets.set(row, class, 1.0);
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(&mut client_rng);
                inputs.set(row, j, prototypes.get(class, j) + EXAMPLE_NOISE_STD * noise);
            }
        }
        clients.push(ClientDataset {
            client_id: format!("client_{i:0width$}"),
            data: LabeledBatch::new(inputs, targets).expect("targets are one-hot"),
        });
    }

    // Central evaluation data covers every class via round-robin labels.
    let total: usize = sizes.iter().sum();
    let eval_size = ((spec.eval_fraction * total as f64).round() as usize).max(k);
    let mut eval_rng = stream_rng(spec.seed, Stream::SynthEval, &[]);
    let mut inputs = Matrix::zeros(eval_size, d);
    let mut targets = Matrix::zeros(eval_size, k);
    for row in 0..eval_size {
        let class = row % k;
        targets.set(row, class, 1.0);
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut eval_rng);
            inputs.set(row, j, prototypes.get(class, j) + EXAMPLE_NOISE_STD * noise);
        }
    }
    let eval = LabeledBatch::new(inputs, targets).expect("targets are one-hot");

    Ok(SynthTask { spec: *spec, clients, eval, prototypes })
}

/// Write a task to the canonical manifest format: one row per example,
/// uploader = client id, eval rows under the reserved `__central__` uploader
/// with split `val`.
pub fn write_synth_manifest<W: Write>(task: &SynthTask, mut out: W) -> Result<(), DataError> {
    let vocab = task.vocabulary();
    writeln!(out, "clip_id,uploader,labels,split,duration_s")?;
    let label_of = |targets: &Matrix, row: usize| -> String {
        let mut names = Vec::new();
        for (c, name) in vocab.classes().iter().enumerate() {
            if targets.get(row, c) != 0.0 {
                names.push(name.as_str());
            }
        }
        names.join("|")
    };
    for client in &task.clients {
        for row in 0..client.n_k() {
            writeln!(
                out,
                "{}_{row:06},{},{},train,",
                client.client_id,
                client.client_id,
                label_of(&client.data.targets, row)
            )?;
        }
    }
    for row in 0..task.eval.len() {
        writeln!(out, "eval_{row:06},__central__,{},val,", label_of(&task.eval.targets, row))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    const HEADER: &str = "clip_id,uploader,labels,split,duration_s\n";

    #[test]
    fn three_row_fixture_round_trip() {
        let f = manifest_file(&format!(
            "{HEADER}c1,alice,dog|bark,train,2.5\nc2,bob,cat,val,\nc3,alice,dog,test,0.7\n"
        ));
        let clips = ingest_metadata(f.path()).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(clips[0].clip_id, "c1");
        assert_eq!(clips[0].uploader, "alice");
        assert_eq!(
            clips[0].labels,
            BTreeSet::from(["dog".to_string(), "bark".to_string()])
        );
        assert_eq!(clips[0].split, Split::Train);
        assert_eq!(clips[0].duration_s, Some(2.5));
        assert_eq!(clips[1].duration_s, None);
        assert_eq!(clips[2].split, Split::Test);
    }

    #[test]
    fn empty_labels_name_the_row() {
        let f = manifest_file(&format!("{HEADER}c1,alice,dog,train,\nc2,bob,,train,\n"));
        match ingest_metadata(f.path()).unwrap_err() {
            DataError::EmptyLabels { row } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_clip_ids_are_rejected() {
        let f = manifest_file(&format!("{HEADER}c1,alice,dog,train,\nc1,bob,cat,train,\n"));
        match ingest_metadata(f.path()).unwrap_err() {
            DataError::DuplicateClipId { row, clip_id } => {
                assert_eq!(row, 3);
                assert_eq!(clip_id, "c1");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let f = manifest_file("clip_id,uploader,labels,split\nc1,alice,dog,train\n");
        match ingest_metadata(f.path()).unwrap_err() {
            DataError::MissingColumn(name) => assert_eq!(name, "duration_s"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_split_and_duration_are_reported() {
        let f = manifest_file(&format!("{HEADER}c1,alice,dog,training,\n"));
        assert!(matches!(
            ingest_metadata(f.path()).unwrap_err(),
            DataError::BadSplit { row: 2, .. }
        ));
        let f = manifest_file(&format!("{HEADER}c1,alice,dog,train,-3\n"));
        assert!(matches!(
            ingest_metadata(f.path()).unwrap_err(),
            DataError::BadDuration { row: 2, .. }
        ));
    }

    fn clip(id: &str, uploader: &str, split: Split) -> ClipRecord {
        ClipRecord {
            clip_id: id.to_string(),
            uploader: uploader.to_string(),
            labels: BTreeSet::from(["x".to_string()]),
            split,
            duration_s: None,
        }
    }

    #[test]
    fn partition_conserves_train_clips_at_threshold_one() {
        let mut clips = Vec::new();
        for i in 0..5 {
            clips.push(clip(&format!("a{i}"), "alice", Split::Train));
        }
        for i in 0..3 {
            clips.push(clip(&format!("b{i}"), "bob", Split::Train));
        }
        clips.push(clip("v0", "alice", Split::Val));
        let clients = partition_by_uploader(&clips, 1);
        assert_eq!(clients.len(), 2);
        assert_eq!(clients[0].client_id, "alice");
        assert_eq!(clients[1].client_id, "bob");
        let total: usize = clients.iter().map(UploaderClient::n_k).sum();
        assert_eq!(total, 8); // every train clip in exactly one group
    }

    #[test]
    fn threshold_drops_small_uploaders() {
        let mut clips = Vec::new();
        for (uploader, n) in [("u1", 5usize), ("u2", 100), ("u3", 120)] {
            for i in 0..n {
                clips.push(clip(&format!("{uploader}_{i}"), uploader, Split::Train));
            }
        }
        let clients = partition_by_uploader(&clips, 100);
        assert_eq!(clients.len(), 2);
        assert_eq!(clients[0].n_k(), 100);
        assert_eq!(clients[1].n_k(), 120);
    }

    #[test]
    fn raising_threshold_is_monotone() {
        let mut clips = Vec::new();
        for (uploader, n) in [("a", 1usize), ("b", 4), ("c", 30), ("d", 150)] {
            for i in 0..n {
                clips.push(clip(&format!("{uploader}{i}"), uploader, Split::Train));
            }
        }
        let mut prev_clients = usize::MAX;
        let mut prev_total = usize::MAX;
        for min_clips in [1usize, 2, 10, 50, 100, 1000] {
            let clients = partition_by_uploader(&clips, min_clips);
            let total: usize = clients.iter().map(UploaderClient::n_k).sum();
            assert!(clients.len() <= prev_clients);
            assert!(total <= prev_total);
            prev_clients = clients.len();
            prev_total = total;
        }
    }

    #[test]
    fn histogram_buckets_count_uploaders() {
        let mut clips = Vec::new();
        for (uploader, n) in [("a", 1usize), ("b", 1), ("c", 3), ("d", 150)] {
            for i in 0..n {
                clips.push(clip(&format!("{uploader}{i}"), uploader, Split::Train));
            }
        }
        let hist = uploader_histogram(&clips);
        assert_eq!(hist.single, 2);
        assert_eq!(hist.two_to_ten, 1);
        assert_eq!(hist.eleven_to_ninety_nine, 0);
        assert_eq!(hist.hundred_or_more, 1);
        assert_eq!(hist.total_uploaders(), 4);
        assert_eq!(hist.at_most_ten(), 3);
    }

    fn small_spec() -> SynthTaskSpec {
        SynthTaskSpec {
            num_clients: 6,
            num_classes: 4,
            input_dim: 8,
            size_law: SizeLaw { exponent: 1.3, min_size: 10, max_size: 40 },
            label_skew: 0.3,
            eval_fraction: 0.2,
            seed: 17,
        }
    }

    #[test]
    fn synth_task_is_deterministic() {
        let spec = small_spec();
        let a = synth_federated_task(&spec).unwrap();
        let b = synth_federated_task(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_task_shapes_and_coverage() {
        let task = synth_federated_task(&small_spec()).unwrap();
        assert_eq!(task.clients.len(), 6);
        for client in &task.clients {
            let n = client.n_k();
            assert!((10..=40).contains(&n));
            assert_eq!(client.data.input_dim(), 8);
            assert_eq!(client.data.num_classes(), 4);
        }
        // every class appears in the eval set
        for class in 0..4 {
            let count = (0..task.eval.len())
                .filter(|&i| task.eval.targets.get(i, class) != 0.0)
                .count();
            assert!(count > 0, "class {class} missing from eval set");
        }
        assert_eq!(task.total_examples(), task.clients.iter().map(|c| c.n_k()).sum::<usize>());
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = small_spec();
        spec.size_law.min_size = 50;
        spec.size_law.max_size = 10;
        assert!(matches!(synth_federated_task(&spec).unwrap_err(), DataError::InfeasibleSpec(_)));
        let mut spec = small_spec();
        spec.eval_fraction = 1.0;
        assert!(synth_federated_task(&spec).is_err());
        let mut spec = small_spec();
        spec.label_skew = 0.0;
        assert!(synth_federated_task(&spec).is_err());
    }

    #[test]
    fn strong_skew_concentrates_labels() {
        let spec = SynthTaskSpec {
            num_clients: 20,
            num_classes: 6,
            input_dim: 8,
            size_law: SizeLaw { exponent: 1.0, min_size: 40, max_size: 80 },
            label_skew: 0.05,
            eval_fraction: 0.1,
            seed: 3,
        };
        let task = synth_federated_task(&spec).unwrap();
        let mut dominant_shares: Vec<f64> = task
            .clients
            .iter()
            .map(|c| {
                let mut counts = vec![0usize; 6];
                for row in 0..c.n_k() {
                    for class in 0..6 {
                        if c.data.targets.get(row, class) != 0.0 {
                            counts[class] += 1;
                        }
                    }
                }
                *counts.iter().max().unwrap() as f64 / c.n_k() as f64
            })
            .collect();
        dominant_shares.sort_by(f64::total_cmp);
        let median = dominant_shares[dominant_shares.len() / 2];
        assert!(median > 0.5, "median dominant-class share {median} too small");
    }

    #[test]
    fn near_iid_limit_matches_global_distribution() {
        let spec = SynthTaskSpec {
            num_clients: 20,
            num_classes: 4,
            input_dim: 6,
            size_law: SizeLaw { exponent: 0.0, min_size: 1000, max_size: 1400 },
            label_skew: 1e6,
            eval_fraction: 0.01,
            seed: 11,
        };
        let task = synth_federated_task(&spec).unwrap();
        let hist = |batch: &LabeledBatch| -> Vec<f64> {
            let mut counts = vec![0.0; 4];
            for row in 0..batch.len() {
                for class in 0..4 {
                    counts[class] += batch.targets.get(row, class);
                }
            }
            let total: f64 = counts.iter().sum();
            counts.into_iter().map(|c| c / total).collect()
        };
        let global = hist(&task.pooled_train());
        for client in &task.clients {
            let local = hist(&client.data);
            let tv: f64 =
                0.5 * global.iter().zip(&local).map(|(g, l)| (g - l).abs()).sum::<f64>();
            assert!(tv < 0.05, "client {} deviates from global: tv = {tv}", client.client_id);
        }
    }

    #[test]
    fn manifest_export_parses_back() {
        let task = synth_federated_task(&small_spec()).unwrap();
        let mut buf = Vec::new();
        write_synth_manifest(&task, &mut buf).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        f.flush().unwrap();
        let clips = ingest_metadata(f.path()).unwrap();
        let train = clips.iter().filter(|c| c.split == Split::Train).count();
        let val = clips.iter().filter(|c| c.split == Split::Val).count();
        assert_eq!(train, task.total_examples());
        assert_eq!(val, task.eval.len());
        let clients = partition_by_uploader(&clips, 1);
        assert_eq!(clients.len(), task.clients.len());
    }
}
