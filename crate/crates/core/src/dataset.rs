//! Recorded payload windows.
//!
//! On disk a dataset is a directory holding one `emitter_<id>.iq` file per
//! emitter plus `manifest.json`. Each `.iq` file is a plain concatenation of
//! windows; a window is `window_len` complex samples stored as interleaved
//! little-endian IEEE-754 `f32` pairs `I, Q, I, Q, ...` (4800 bytes for the
//! default 600-sample window). This is the usual SDR file-sink layout, so the
//! files open directly in common tooling as `complex64` streams.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::Scenario;
use crate::error::{Error, Result};
use crate::framing::{HeaderStatus, ReceivedPacket};
use crate::rng::stream;
use crate::signal::PayloadKind;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_WINDOW_LEN: usize = 600;

pub fn emitter_file_name(id: u32) -> String {
    format!("emitter_{id}.iq")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_emitters: usize,
    pub counts: Vec<usize>,
    pub env_epoch: u32,
    pub payload_kind: PayloadKind,
    pub profile_file: String,
    pub window_len: usize,
    #[serde(default)]
    pub header_failed: usize,
    #[serde(default)]
    pub no_frame: usize,
    /// Generator configuration, kept verbatim for replay.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Descriptive fields of a dataset known before any packet is recorded.
#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_emitters: usize,
    pub env_epoch: u32,
    pub payload_kind: PayloadKind,
    pub profile_file: String,
    pub window_len: usize,
    pub config: serde_json::Value,
}

/// Streams packets into per-emitter files.
pub struct DatasetWriter {
    dir: PathBuf,
    meta: DatasetMeta,
    files: BTreeMap<u32, BufWriter<File>>,
    counts: Vec<usize>,
    header_failed: usize,
    no_frame: usize,
    scratch: Vec<u8>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, meta: DatasetMeta) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = BTreeMap::new();
        // Every emitter gets a file, even if it never transmits.
        for id in 0..meta.n_emitters as u32 {
            let path = dir.join(emitter_file_name(id));
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            files.insert(id, BufWriter::new(f));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            counts: vec![0; meta.n_emitters],
            meta,
            files,
            header_failed: 0,
            no_frame: 0,
            scratch: Vec::new(),
        })
    }

    pub fn record_no_frame(&mut self) {
        self.no_frame += 1;
    }

    /// Appends the packet's window to its emitter's file; header failures are
    /// counted and dropped.
    pub fn push(&mut self, packet: &ReceivedPacket) -> Result<()> {
        let id = match packet.emitter_id_decoded {
            HeaderStatus::Decoded(id) => id,
            HeaderStatus::HeaderFailed => {
                self.header_failed += 1;
                return Ok(());
            }
        };
        let window = &packet.payload_window.samples;
        if window.len() != self.meta.window_len {
            return Err(Error::Shape {
                expected: self.meta.window_len,
                got: window.len(),
            });
        }
        let path = self.dir.join(emitter_file_name(id));
        let file = self.files.get_mut(&id).ok_or_else(|| Error::Format {
            what: "packet",
            detail: format!("decoded id {id} outside 0..{}", self.meta.n_emitters),
        })?;
        self.scratch.clear();
        for s in window {
            self.scratch.extend_from_slice(&(s.re as f32).to_le_bytes());
            self.scratch.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        file.write_all(&self.scratch)
            .map_err(|e| Error::io(&path, e))?;
        self.counts[id as usize] += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<Manifest> {
        for (id, mut f) in self.files {
            f.flush()
                .map_err(|e| Error::io(self.dir.join(emitter_file_name(id)), e))?;
        }
        let manifest = Manifest {
            scenario: self.meta.scenario,
            seed: self.meta.seed,
            n_emitters: self.meta.n_emitters,
            counts: self.counts,
            env_epoch: self.meta.env_epoch,
            payload_kind: self.meta.payload_kind,
            profile_file: self.meta.profile_file,
            window_len: self.meta.window_len,
            header_failed: self.header_failed,
            no_frame: self.no_frame,
            config: self.meta.config,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Writes every packet and the manifest.
pub fn write_dataset<'a, I>(packets: I, dir: &Path, meta: DatasetMeta) -> Result<Manifest>
where
    I: IntoIterator<Item = &'a ReceivedPacket>,
{
    let mut writer = DatasetWriter::create(dir, meta)?;
    for p in packets {
        writer.push(p)?;
    }
    writer.finish()
}

/// All windows of a dataset in memory, grouped by emitter in file order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    /// `len() * window_len * 2` floats, I/Q interleaved.
    windows: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    /// Builds an in-memory dataset; `windows` holds `labels.len()` windows.
    pub fn from_parts(manifest: Manifest, windows: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        let stride = manifest.window_len * 2;
        if windows.len() != labels.len() * stride {
            return Err(Error::Shape {
                expected: labels.len() * stride,
                got: windows.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= manifest.n_emitters) {
            return Err(Error::LabelRange {
                label: bad as usize,
                n_classes: manifest.n_emitters,
            });
        }
        if windows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format {
                what: "dataset",
                detail: "non-finite sample".into(),
            });
        }
        Ok(Self {
            manifest,
            windows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.n_emitters
    }

    pub fn window_len(&self) -> usize {
        self.manifest.window_len
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Window `i` as `window_len` interleaved (I, Q) pairs.
    pub fn window(&self, i: usize) -> &[f32] {
        let stride = self.window_len() * 2;
        &self.windows[i * stride..(i + 1) * stride]
    }

    pub fn indices_of(&self, label: u32) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    if manifest.counts.len() != manifest.n_emitters {
        return Err(Error::Format {
            what: "manifest",
            detail: format!(
                "{} counts for {} emitters",
                manifest.counts.len(),
                manifest.n_emitters
            ),
        });
    }
    let window_bytes = manifest.window_len * 8;
    let mut windows = Vec::with_capacity(manifest.total() * manifest.window_len * 2);
    let mut labels = Vec::with_capacity(manifest.total());
    let mut bytes = Vec::new();
    for (id, &count) in manifest.counts.iter().enumerate() {
        let path = dir.join(emitter_file_name(id as u32));
        bytes.clear();
        File::open(&path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(&path, e))?;
        if bytes.len() != count * window_bytes {
            return Err(Error::Format {
                what: "dataset",
                detail: format!(
                    "{} holds {} bytes, manifest says {count} windows of {window_bytes}",
                    path.display(),
                    bytes.len()
                ),
            });
        }
        windows.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        labels.extend(std::iter::repeat_n(id as u32, count));
    }
    Dataset::from_parts(manifest, windows, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl SplitPart {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Val => "val",
            SplitPart::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn part(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    /// Every example in the test part; used when a whole dataset is held out.
    pub fn all_test(n: usize) -> Self {
        Self {
            test: (0..n).collect(),
            ..Self::default()
        }
    }
}

pub const TRAIN_FRACTION: f64 = 0.7;
pub const VAL_FRACTION: f64 = 0.1;

/// Stratified 70/10/20 split after a seeded per-emitter shuffle.
pub fn split_shuffle(ds: &Dataset, seed: u64) -> Split {
    let mut split = Split::default();
    for label in 0..ds.n_classes() as u32 {
        let mut idx: Vec<usize> = ds.indices_of(label).collect();
        idx.shuffle(&mut stream(seed, label as u64));
        let n = idx.len();
        let mut n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let mut n_val = ((n as f64 * VAL_FRACTION).round() as usize).min(n - n_train);
        // Small classes still get one example in each part.
        if n >= 3 {
            if n_val == 0 {
                n_val = 1;
                n_train -= 1;
            }
            if n_train + n_val == n {
                n_train -= 1;
            }
        }
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split
}

/// One mini-batch: `labels.len()` windows laid out as B x window_len x 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

/// Iterates over one split part in batches. The training part is reshuffled
/// from `epoch_seed`; validation and test parts keep their split order.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch: usize,
    pos: usize,
    normalize: bool,
}

impl<'a> BatchIter<'a> {
    /// Scale every window to unit RMS (off by default: amplitude is part of
    /// what the scenarios randomize).
    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let ids = &self.order[self.pos..end];
        self.pos = end;
        let stride = self.ds.window_len() * 2;
        let mut inputs = Vec::with_capacity(ids.len() * stride);
        for &i in ids {
            let w = self.ds.window(i);
            if self.normalize {
                let rms =
                    (w.iter().map(|v| v * v).sum::<f32>() / self.ds.window_len() as f32).sqrt();
                let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
                inputs.extend(w.iter().map(|v| v * scale));
            } else {
                inputs.extend_from_slice(w);
            }
        }
        let labels = ids.iter().map(|&i| self.ds.label(i) as usize).collect();
        Some(Batch { inputs, labels })
    }
}

pub fn batch_iter<'a>(
    ds: &'a Dataset,
    split: &Split,
    part: SplitPart,
    batch: usize,
    epoch_seed: u64,
) -> BatchIter<'a> {
    let mut order = split.part(part).to_vec();
    if part == SplitPart::Train {
        order.shuffle(&mut stream(epoch_seed, 0));
    }
    BatchIter {
        ds,
        order,
        batch: batch.max(1),
        pos: 0,
        normalize: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::IqBuffer;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn meta(n: usize) -> DatasetMeta {
        DatasetMeta {
            scenario: Scenario::Plain,
            seed: 1,
            n_emitters: n,
            env_epoch: 0,
            payload_kind: PayloadKind::Static,
            profile_file: "profiles.json".into(),
            window_len: DEFAULT_WINDOW_LEN,
            config: serde_json::Value::Null,
        }
    }

    fn packet(id: u32, fill: impl Fn(usize) -> Complex64) -> ReceivedPacket {
        ReceivedPacket {
            emitter_id_decoded: HeaderStatus::Decoded(id),
            payload_window: IqBuffer::new((0..DEFAULT_WINDOW_LEN).map(fill).collect()),
            detect_offset: 200,
            rx_time_s: 0.0,
        }
    }

    fn synthetic(n_classes: usize, per_class: usize) -> Dataset {
        let mut m = Manifest {
            scenario: Scenario::Plain,
            seed: 0,
            n_emitters: n_classes,
            counts: vec![per_class; n_classes],
            env_epoch: 0,
            payload_kind: PayloadKind::Static,
            profile_file: String::new(),
            window_len: 4,
            header_failed: 0,
            no_frame: 0,
            config: serde_json::Value::Null,
        };
        m.counts = vec![per_class; n_classes];
        let labels: Vec<u32> = (0..n_classes as u32)
            .flat_map(|c| std::iter::repeat_n(c, per_class))
            .collect();
        let windows = (0..labels.len() * 8).map(|i| i as f32).collect();
        Dataset::from_parts(m, windows, labels).unwrap()
    }

    #[test]
    fn file_size_and_byte_pattern() {
        let dir = tempfile::tempdir().unwrap();
        let packets: Vec<ReceivedPacket> = (0..10)
            .map(|_| packet(3, |_| Complex64::new(1.0, -1.0)))
            .collect();
        let m = write_dataset(&packets, dir.path(), meta(5)).unwrap();
        assert_eq!(m.counts, vec![0, 0, 0, 10, 0]);
        let bytes = fs::read(dir.path().join("emitter_3.iq")).unwrap();
        assert_eq!(bytes.len(), 48_000);
        let pattern = [0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x80, 0xbf];
        assert!(bytes.chunks_exact(8).all(|c| c == pattern));
        assert_eq!(fs::read(dir.path().join("emitter_0.iq")).unwrap().len(), 0);
    }

    #[test]
    fn write_read_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let packets: Vec<ReceivedPacket> = (0..6)
            .map(|k| {
                packet(k % 2, move |n| {
                    Complex64::new(
                        (n * 7 + k as usize) as f64 * 0.1 - 3.0,
                        1.0 / (n + 1) as f64,
                    )
                })
            })
            .collect();
        write_dataset(&packets, dir.path(), meta(2)).unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 6);
        // File order groups by emitter: packets 0, 2, 4 then 1, 3, 5.
        for (slot, k) in [0, 2, 4, 1, 3, 5].into_iter().enumerate() {
            let expected: Vec<f32> = packets[k]
                .payload_window
                .samples
                .iter()
                .flat_map(|s| [s.re as f32, s.im as f32])
                .collect();
            assert_eq!(ds.window(slot), &expected[..]);
            assert_eq!(ds.label(slot), k as u32 % 2);
        }
    }

    #[test]
    fn header_failures_are_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = packet(0, |_| Complex64::new(0.0, 0.0));
        bad.emitter_id_decoded = HeaderStatus::HeaderFailed;
        let good = packet(1, |_| Complex64::new(0.5, 0.5));
        let m = write_dataset([&bad, &good, &bad], dir.path(), meta(2)).unwrap();
        assert_eq!(m.header_failed, 2);
        assert_eq!(m.counts, vec![0, 1]);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn manifest_has_external_fields() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            [&packet(0, |_| Complex64::new(0.1, 0.0))],
            dir.path(),
            meta(2),
        )
        .unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        for key in [
            "scenario",
            "seed",
            "n_emitters",
            "counts",
            "env_epoch",
            "payload_kind",
            "profile_file",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            [&packet(1, |_| Complex64::new(0.1, 0.0))],
            dir.path(),
            meta(2),
        )
        .unwrap();
        let path = dir.path().join("emitter_1.iq");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn wrong_window_length_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::create(dir.path(), meta(2)).unwrap();
        let mut p = packet(0, |_| Complex64::new(0.0, 0.0));
        p.payload_window.samples.pop();
        assert!(w.push(&p).is_err());
    }

    #[test]
    fn split_proportions() {
        let ds = synthetic(3, 1000);
        let s = split_shuffle(&ds, 4);
        for c in 0..3u32 {
            let count = |part: &[usize]| part.iter().filter(|&&i| ds.label(i) == c).count();
            assert_eq!(
                (count(&s.train), count(&s.val), count(&s.test)),
                (700, 100, 200)
            );
        }
        assert_eq!(s, split_shuffle(&ds, 4));
        assert_ne!(s.train, split_shuffle(&ds, 5).train);
    }

    #[test]
    fn batch_sizes_and_label_histogram() {
        let ds = synthetic(7, 100);
        let split = Split {
            train: (0..700).collect(),
            ..Split::default()
        };
        let batches: Vec<Batch> = batch_iter(&ds, &split, SplitPart::Train, 128, 3).collect();
        let sizes: Vec<usize> = batches.iter().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![128, 128, 128, 128, 128, 60]);
        assert!(batches.iter().all(|b| b.inputs.len() == b.labels.len() * 8));
        let mut hist = [0usize; 7];
        for b in &batches {
            for &l in &b.labels {
                hist[l] += 1;
            }
        }
        assert_eq!(hist, [100; 7]);
        let again: Vec<Batch> = batch_iter(&ds, &split, SplitPart::Train, 128, 3).collect();
        assert_eq!(batches, again);
        let other: Vec<Batch> = batch_iter(&ds, &split, SplitPart::Train, 128, 4).collect();
        assert_ne!(batches, other);
    }

    #[test]
    fn batches_carry_the_right_windows() {
        let ds = synthetic(2, 3);
        let split = Split::all_test(6);
        let b: Vec<Batch> = batch_iter(&ds, &split, SplitPart::Test, 4, 0).collect();
        assert_eq!(b[0].labels, vec![0, 0, 0, 1]);
        assert_eq!(
            &b[1].inputs[..],
            ds.window(4)
                .iter()
                .chain(ds.window(5))
                .copied()
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn optional_rms_normalization() {
        let ds = synthetic(2, 2);
        let split = Split::all_test(4);
        let b = batch_iter(&ds, &split, SplitPart::Test, 1, 0)
            .normalized(true)
            .next()
            .unwrap();
        let rms = (b.inputs.iter().map(|v| v * v).sum::<f32>() / 4.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn split_is_a_stratified_partition(n_classes in 2usize..6, per_class in 5usize..80, seed in any::<u64>()) {
            let ds = synthetic(n_classes, per_class);
            let s = split_shuffle(&ds, seed);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            for c in 0..n_classes as u32 {
                for part in [&s.train, &s.val, &s.test] {
                    prop_assert!(part.iter().any(|&i| ds.label(i) == c));
                }
                let n_train = s.train.iter().filter(|&&i| ds.label(i) == c).count() as f64;
                prop_assert!((n_train - per_class as f64 * 0.7).abs() <= 1.0);
            }
        }
    }
}
