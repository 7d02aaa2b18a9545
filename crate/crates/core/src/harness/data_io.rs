//! Dataset ingestion (CSV, IDX, synthetic blobs) and corruption injection.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::Array2;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::oracle::{CorruptionEntry, CorruptionKind, CorruptionLog};
use crate::seed;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetDescriptor {
    Csv { path: String },
    Idx { images: String, labels: String },
    Blobs { n: usize, dim: usize, n_classes: usize, class_means_scale: f64, seed: u64 },
}

impl FromStr for DatasetDescriptor {
    type Err = Error;

    /// `csv:PATH`, `idx:IMAGES,LABELS`, or
    /// `blobs:n=200,d=2,c=2,scale=3.0,seed=1`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("dataset descriptor {s:?}: expected kind:args")))?;
        match kind {
            "csv" => Ok(DatasetDescriptor::Csv { path: rest.to_string() }),
            "idx" => {
                let (images, labels) = rest.split_once(',').ok_or_else(|| {
                    Error::config("idx descriptor: expected idx:IMAGES_PATH,LABELS_PATH")
                })?;
                Ok(DatasetDescriptor::Idx { images: images.into(), labels: labels.into() })
            }
            "blobs" => {
                let (mut n, mut dim, mut n_classes, mut scale, mut seed_v) =
                    (None, None, None, None, None);
                for part in rest.split(',') {
                    let (key, value) = part.split_once('=').ok_or_else(|| {
                        Error::config(format!("blobs descriptor: bad key=value pair {part:?}"))
                    })?;
                    let parse_err =
                        |e| Error::config(format!("blobs descriptor: bad value for {key}: {e}"));
                    match key {
                        "n" => n = Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                        "d" => dim = Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?),
                        "c" => {
                            n_classes =
                                Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?)
                        }
                        "scale" => {
                            scale = Some(value.parse::<f64>().map_err(|e| parse_err(e.to_string()))?)
                        }
                        "seed" => {
                            seed_v = Some(value.parse::<u64>().map_err(|e| parse_err(e.to_string()))?)
                        }
                        other => {
                            return Err(Error::config(format!("blobs descriptor: unknown key {other:?}")))
                        }
                    }
                }
                Ok(DatasetDescriptor::Blobs {
                    n: n.ok_or_else(|| Error::config("blobs descriptor: missing n"))?,
                    dim: dim.ok_or_else(|| Error::config("blobs descriptor: missing d"))?,
                    n_classes: n_classes.ok_or_else(|| Error::config("blobs descriptor: missing c"))?,
                    class_means_scale: scale.unwrap_or(2.0),
                    seed: seed_v.unwrap_or(0),
                })
            }
            other => Err(Error::config(format!("unknown dataset kind {other:?}"))),
        }
    }
}

pub fn load_dataset(descriptor: &DatasetDescriptor) -> Result<Dataset> {
    match descriptor {
        DatasetDescriptor::Csv { path } => read_csv(Path::new(path)),
        DatasetDescriptor::Idx { images, labels } => read_idx(Path::new(images), Path::new(labels)),
        DatasetDescriptor::Blobs { n, dim, n_classes, class_means_scale, seed } => {
            blobs(*n, *dim, *n_classes, *class_means_scale, *seed)
        }
    }
}

/// Seeded isotropic Gaussian clusters: class means drawn from
/// `scale·N(0, I)`, one unit-variance cloud per class, classes assigned
/// round-robin so the dataset is balanced.
pub fn blobs(n: usize, dim: usize, n_classes: usize, scale: f64, seed_value: u64) -> Result<Dataset> {
    if dim == 0 || n_classes == 0 {
        return Err(Error::config("blobs: need dim >= 1 and n_classes >= 1"));
    }
    if !scale.is_finite() || scale < 0.0 {
        return Err(Error::config("blobs: scale must be finite and >= 0"));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "blobs"));
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let means = Array2::from_shape_fn((n_classes, dim), |_| scale * normal.sample(&mut rng));
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % n_classes;
        for j in 0..dim {
            features[[i, j]] = means[[y, j]] + normal.sample(&mut rng);
        }
        labels.push(y);
    }
    let ids = (0..n).map(|i| format!("blob-{i:05}")).collect();
    Dataset::new(features, labels, ids, n_classes)
}

/// Read the dataset CSV: header `id,label,f0..f{d-1}`, UTF-8, decimal
/// floats.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)
        .map_err(|e| Error::config(format!("csv {path:?}: {e}")))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    {
        let headers = reader.headers().map_err(|e| Error::config(format!("csv header: {e}")))?;
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
            return Err(Error::config(format!(
                "csv {path:?}: header must be id,label,f0..f{{d-1}}, got {cols:?}"
            )));
        }
        for (j, c) in cols[2..].iter().enumerate() {
            if *c != format!("f{j}") {
                return Err(Error::config(format!(
                    "csv {path:?}: feature column {j} named {c:?}, expected f{j}"
                )));
            }
        }
    }
    let d = reader.headers().unwrap().len() - 2;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::config(format!("csv row {row}: {e}")))?;
        if record.len() != d + 2 {
            return Err(Error::config(format!(
                "csv row {row}: {} fields, expected {}",
                record.len(),
                d + 2
            )));
        }
        ids.push(record[0].to_string());
        labels.push(
            record[1]
                .parse::<usize>()
                .map_err(|e| Error::config(format!("csv row {row}: bad label: {e}")))?,
        );
        for j in 0..d {
            values.push(
                record[j + 2]
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("csv row {row} f{j}: {e}")))?,
            );
        }
    }
    let n = ids.len();
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::config(format!("csv {path:?}: {e}")));
    Dataset::new(features?, labels, ids, n_classes)
}

/// Write the dataset CSV in the exact format `read_csv` accepts. Floats
/// use the shortest round-trippable decimal form.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "id,label")?;
    for j in 0..data.dim() {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for i in 0..data.len() {
        write!(w, "{},{}", data.id(i), data.label(i))?;
        for v in data.feature_row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read the standard big-endian IDX pair (images magic 0x00000803, labels
/// magic 0x00000801); pixel bytes are scaled to [0, 1].
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(
        File::open(images_path).map_err(|e| Error::config(format!("idx {images_path:?}: {e}")))?,
    );
    let magic = img.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::config(format!(
            "idx {images_path:?}: image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = img.read_u32::<BigEndian>()? as usize;
    let rows = img.read_u32::<BigEndian>()? as usize;
    let cols = img.read_u32::<BigEndian>()? as usize;
    let d = rows * cols;
    let mut pixels = vec![0u8; n * d];
    img.read_exact(&mut pixels)
        .map_err(|e| Error::config(format!("idx {images_path:?}: truncated pixel data: {e}")))?;

    let mut lab = BufReader::new(
        File::open(labels_path).map_err(|e| Error::config(format!("idx {labels_path:?}: {e}")))?,
    );
    let magic = lab.read_u32::<BigEndian>()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::config(format!(
            "idx {labels_path:?}: label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n_labels = lab.read_u32::<BigEndian>()? as usize;
    if n_labels != n {
        return Err(Error::config(format!(
            "idx: {n} images but {n_labels} labels"
        )));
    }
    let mut raw_labels = vec![0u8; n];
    lab.read_exact(&mut raw_labels)
        .map_err(|e| Error::config(format!("idx {labels_path:?}: truncated labels: {e}")))?;

    let features =
        Array2::from_shape_fn((n, d), |(i, j)| pixels[i * d + j] as f64 / 255.0);
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    let ids = (0..n).map(|i| format!("idx-{i:06}")).collect();
    Dataset::new(features, labels, ids, n_classes)
}

/// Flip `⌊ratio·n⌋` uniformly chosen labels to a uniformly chosen wrong
/// class.
pub fn inject_mislabels(
    data: &Dataset,
    ratio: f64,
    seed_value: u64,
) -> Result<(Dataset, CorruptionLog)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("inject_mislabels: ratio must be in [0, 1]"));
    }
    if data.n_classes() < 2 {
        return Err(Error::config("inject_mislabels: need at least 2 classes"));
    }
    let n = data.len();
    let n_flip = (ratio * n as f64).floor() as usize;
    let mut rng = seed::rng(seed::derive(seed_value, "mislabel"));
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut labels = data.labels().to_vec();
    let mut entries = Vec::with_capacity(n_flip);
    let c = data.n_classes();
    for &idx in order.iter().take(n_flip) {
        let original = labels[idx];
        let wrong = rand::Rng::random_range(&mut rng, 0..c - 1);
        let new_label = if wrong >= original { wrong + 1 } else { wrong };
        labels[idx] = new_label;
        entries.push(CorruptionEntry {
            index: idx,
            original_label: original,
            new_label,
            kind: CorruptionKind::Mislabel,
        });
    }
    Ok((data.with_labels(labels)?, CorruptionLog { entries, seed: seed_value }))
}

/// Copy `n_leaks` test-pool points into the training set under fresh ids.
/// Returns the augmented training set, the test set holding exactly the
/// leaked points, and a log mapping each new train row to its source id.
pub fn inject_leak(
    train: &Dataset,
    test_pool: &Dataset,
    n_leaks: usize,
    seed_value: u64,
) -> Result<(Dataset, Dataset, CorruptionLog)> {
    if n_leaks == 0 {
        return Err(Error::config("no leak requested"));
    }
    if n_leaks > test_pool.len() {
        return Err(Error::config(format!(
            "inject_leak: {n_leaks} leaks from a pool of {}",
            test_pool.len()
        )));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "leak"));
    let mut order: Vec<usize> = (0..test_pool.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let chosen = &order[..n_leaks];

    let leaked = test_pool.subset(chosen)?;
    let renamed = Dataset::new(
        leaked.features().to_owned(),
        leaked.labels().to_vec(),
        (0..n_leaks).map(|k| format!("leak-{k:04}")).collect(),
        leaked.n_classes(),
    )?;
    let augmented = train.concat(&renamed)?;
    let entries = chosen
        .iter()
        .enumerate()
        .map(|(k, &src)| CorruptionEntry {
            index: train.len() + k,
            original_label: test_pool.label(src),
            new_label: test_pool.label(src),
            kind: CorruptionKind::LeakDuplicateOf { id: test_pool.id(src).to_string() },
        })
        .collect();
    Ok((augmented, leaked, CorruptionLog { entries, seed: seed_value }))
}
