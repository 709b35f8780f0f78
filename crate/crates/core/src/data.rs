//! Long-tailed class profiles, synthetic Gaussian datasets and their CSV
//! file format.
//!
//! A dataset is stored as `<stem>.csv` with header `label,f0,...,f{d-1}` and
//! a sidecar `<stem>.meta` of `key=value` lines (`num_classes`, `dim`,
//! `seed`, `counts`, `sigma`, and `means`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::theory::GaussianTaskSpec;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid long-tail spec: {0}")]
    InvalidSpec(String),
    #[error("missing header")]
    MissingHeader,
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse `{value}`")]
    BadValue { line: usize, value: String },
    #[error("line {line}: label {label} is not a valid class (num_classes = {num_classes})")]
    UnknownLabel {
        line: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("metadata line {line}: {reason}")]
    BadMeta { line: usize, reason: String },
    #[error("class counts {found:?} disagree with metadata {expected:?}")]
    CountMismatch { expected: Vec<u64>, found: Vec<u64> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Recipe for a long-tailed class profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTailSpec {
    pub num_classes: usize,
    /// Count of the most frequent class.
    pub base_count: u64,
    /// Ratio between the first and last class counts.
    pub imbalance_ratio: f64,
    pub seed: u64,
}

/// `N_i = round(N·K^{−(i−1)/(|Y|−1)})`, ties to even, clamped at 1.
pub fn class_counts(spec: &LongTailSpec) -> Result<Vec<u64>, DataError> {
    let LongTailSpec {
        num_classes,
        base_count,
        imbalance_ratio,
        ..
    } = *spec;
    if num_classes == 0 {
        return Err(DataError::InvalidSpec(
            "num_classes must be positive".into(),
        ));
    }
    if base_count == 0 {
        return Err(DataError::InvalidSpec("base_count must be positive".into()));
    }
    if !(imbalance_ratio.is_finite() && imbalance_ratio >= 1.0) {
        return Err(DataError::InvalidSpec(format!(
            "imbalance ratio must be finite and >= 1, got {imbalance_ratio}"
        )));
    }
    if num_classes < 2 {
        if imbalance_ratio > 1.0 {
            return Err(DataError::InvalidSpec(
                "a single class cannot have an imbalance ratio above 1".into(),
            ));
        }
        return Ok(vec![base_count]);
    }
    let n = base_count as f64;
    let span = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|i| {
            let raw = n * imbalance_ratio.powf(-(i as f64) / span);
            (raw.round_ties_even() as u64).max(1)
        })
        .collect())
}

/// Samples stored row-wise with their generating class means.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_means: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features
            .first()
            .map(Vec::len)
            .or_else(|| self.class_means.first().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        counts.windows(2).all(|w| w[0] == w[1])
    }
}

/// Class means for a synthetic task.
///
/// With a binary task spec the means are `+θ` (class 0, the majority `y = +1`)
/// and `−θ` (class 1). Otherwise each mean is a standard-normal draw from
/// `seed` rescaled to Euclidean norm `mean_norm`.
pub fn class_means(
    num_classes: usize,
    dim: usize,
    mean_norm: f64,
    task: Option<&GaussianTaskSpec>,
    seed: u64,
) -> Result<Vec<Vec<f64>>, DataError> {
    if let Some(task) = task {
        if num_classes != 2 {
            return Err(DataError::InvalidSpec(
                "a Gaussian task spec needs exactly 2 classes".into(),
            ));
        }
        if task.dim() != dim {
            return Err(DataError::InvalidSpec(format!(
                "task dimension d1 + d2 = {} differs from dim = {dim}",
                task.dim()
            )));
        }
        let theta = task.theta();
        let neg = theta.iter().map(|t| -t).collect();
        return Ok(vec![theta, neg]);
    }
    if dim < 2 {
        return Err(DataError::InvalidSpec("dim must be at least 2".into()));
    }
    if !(mean_norm.is_finite() && mean_norm > 0.0) {
        return Err(DataError::InvalidSpec("mean_norm must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..num_classes)
        .map(|_| {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.into_iter().map(|v| v * mean_norm / norm).collect()
        })
        .collect())
}

/// Draws `counts[c]` samples of `mean_c + σ·N(0, I)` for every class, in
/// class order. Noise uses stream 1 of `seed`, so it never overlaps the
/// stream [`class_means`] uses for the means.
pub fn sample_gaussian(means: &[Vec<f64>], counts: &[u64], sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let total: u64 = counts.iter().sum();
    let mut features = Vec::with_capacity(total as usize);
    let mut labels = Vec::with_capacity(total as usize);
    for (c, (mean, &n)) in means.iter().zip(counts).enumerate() {
        for _ in 0..n {
            features.push(
                mean.iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + sigma * z
                    })
                    .collect(),
            );
            labels.push(c);
        }
    }
    Dataset {
        features,
        labels,
        num_classes: means.len(),
        class_means: means.to_vec(),
        noise_sigma: sigma,
        seed,
    }
}

/// Long-tailed synthetic training set.
pub fn generate_synthetic(
    spec: &LongTailSpec,
    dim: usize,
    mean_norm: f64,
    sigma: f64,
    task: Option<&GaussianTaskSpec>,
) -> Result<Dataset, DataError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(DataError::InvalidSpec(
            "sigma must be finite and >= 0".into(),
        ));
    }
    let counts = class_counts(spec)?;
    let means = class_means(spec.num_classes, dim, mean_norm, task, spec.seed)?;
    Ok(sample_gaussian(&means, &counts, sigma, spec.seed))
}

/// Balanced companion set drawn from the same class means as `train`.
pub fn generate_balanced_test(train: &Dataset, per_class: u64, seed: u64) -> Dataset {
    let counts = vec![per_class; train.num_classes];
    sample_gaussian(&train.class_means, &counts, train.noise_sigma, seed)
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Writes `<path>` as CSV and the `.meta` sidecar next to it.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let dim = ds.dim();
    let mut out = String::from("label");
    for j in 0..dim {
        write!(out, ",f{j}").unwrap();
    }
    out.push('\n');
    for (x, y) in ds.features.iter().zip(&ds.labels) {
        write!(out, "{y}").unwrap();
        for v in x {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))?;

    let means = ds
        .class_means
        .iter()
        .map(|m| {
            m.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";");
    let meta = format!(
        "num_classes={}\ndim={dim}\nseed={}\ncounts={}\nsigma={:?}\nmeans={means}\n",
        ds.num_classes,
        ds.seed,
        join(&ds.class_counts()),
        ds.noise_sigma,
    );
    let mpath = meta_path(path);
    fs::write(&mpath, meta).map_err(io_err(&mpath))
}

#[derive(Debug, Default)]
struct Meta {
    num_classes: Option<usize>,
    dim: Option<usize>,
    seed: Option<u64>,
    counts: Option<Vec<u64>>,
    sigma: Option<f64>,
    means: Option<Vec<Vec<f64>>>,
}

fn parse_meta(text: &str) -> Result<Meta, DataError> {
    let mut meta = Meta::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let (key, value) = raw.split_once('=').ok_or_else(|| DataError::BadMeta {
            line,
            reason: format!("expected key=value, got `{raw}`"),
        })?;
        let bad = |reason: String| DataError::BadMeta { line, reason };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{v}` for `{key}`")))
        };
        match key.trim() {
            "num_classes" => meta.num_classes = Some(num(value)? as usize),
            "dim" => meta.dim = Some(num(value)? as usize),
            "seed" => {
                meta.seed = Some(
                    value
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad seed `{value}`")))?,
                )
            }
            "sigma" => meta.sigma = Some(num(value)?),
            "counts" => {
                let counts = value
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<u64>()
                            .map_err(|_| bad(format!("bad count `{c}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                meta.counts = Some(counts);
            }
            "means" if !value.trim().is_empty() => {
                let means = value
                    .split(';')
                    .map(|row| row.split(',').map(num).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                meta.means = Some(means);
            }
            _ => {}
        }
    }
    Ok(meta)
}

/// Reads a dataset CSV (and its `.meta` sidecar, if present).
pub fn read_dataset(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mpath = meta_path(path);
    let meta = if mpath.exists() {
        parse_meta(&fs::read_to_string(&mpath).map_err(io_err(&mpath))?)?
    } else {
        Meta::default()
    };

    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(DataError::MissingHeader),
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
        }
    };
    let columns: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if columns.first() != Some(&"label") {
        return Err(DataError::MalformedHeader {
            line: header.0,
            reason: "first column must be `label`".into(),
        });
    }
    for (j, name) in columns[1..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(DataError::MalformedHeader {
                line: header.0,
                reason: format!("column {} should be `f{j}`, found `{name}`", j + 1),
            });
        }
    }
    let dim = columns.len() - 1;
    if let Some(d) = meta.dim {
        if d != dim {
            return Err(DataError::MalformedHeader {
                line: header.0,
                reason: format!("header has {dim} features but metadata says {d}"),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut label_lines = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(DataError::ColumnCount {
                line,
                expected: dim + 1,
                found: fields.len(),
            });
        }
        let label = fields[0]
            .parse::<usize>()
            .map_err(|_| DataError::BadValue {
                line,
                value: fields[0].to_string(),
            })?;
        let row = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| DataError::BadValue {
                    line,
                    value: f.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        features.push(row);
        labels.push(label);
        label_lines.push(line);
    }

    let num_classes = meta
        .num_classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    if let Some((&label, &line)) = labels
        .iter()
        .zip(&label_lines)
        .find(|(&y, _)| y >= num_classes)
    {
        return Err(DataError::UnknownLabel {
            line,
            label,
            num_classes,
        });
    }

    let ds = Dataset {
        features,
        labels,
        num_classes,
        class_means: meta.means.unwrap_or_default(),
        noise_sigma: meta.sigma.unwrap_or(0.0),
        seed: meta.seed.unwrap_or(0),
    };
    if let Some(expected) = meta.counts {
        let found = ds.class_counts();
        if expected != found {
            return Err(DataError::CountMismatch { expected, found });
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lt(num_classes: usize, base_count: u64, k: f64) -> LongTailSpec {
        LongTailSpec {
            num_classes,
            base_count,
            imbalance_ratio: k,
            seed: 0,
        }
    }

    #[test]
    fn counts_examples() {
        assert_eq!(class_counts(&lt(4, 300, 1.0)).unwrap(), vec![300; 4]);
        assert_eq!(
            class_counts(&lt(5, 1000, 10.0)).unwrap(),
            vec![1000, 562, 316, 178, 100]
        );
        let c = class_counts(&lt(10, 5000, 50.0)).unwrap();
        assert_eq!((c[0], c[9]), (5000, 100));
    }

    #[test]
    fn counts_clamp_and_reject() {
        assert_eq!(class_counts(&lt(3, 2, 1000.0)).unwrap(), vec![2, 1, 1]);
        assert!(class_counts(&lt(1, 10, 5.0)).is_err());
        assert_eq!(class_counts(&lt(1, 10, 1.0)).unwrap(), vec![10]);
        assert!(class_counts(&lt(3, 10, 0.5)).is_err());
    }

    #[test]
    fn binary_task_means() {
        let task = GaussianTaskSpec::new(1.0, 0.2, 5, 5, 0.5, 10.0).unwrap();
        let ds = generate_synthetic(&lt(2, 100, 10.0), 10, 1.0, 0.5, Some(&task)).unwrap();
        let theta = vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.2, 0.2, 0.2, 0.2, 0.2];
        assert_eq!(ds.class_means[0], theta);
        assert_eq!(
            ds.class_means[1],
            theta.iter().map(|t| -t).collect::<Vec<_>>()
        );
        assert_eq!(ds.class_counts(), vec![100, 10]);
    }

    #[test]
    fn zero_noise_gives_means() {
        let ds = generate_synthetic(&lt(3, 20, 4.0), 4, 2.0, 0.0, None).unwrap();
        for (x, &y) in ds.features.iter().zip(&ds.labels) {
            assert_eq!(x, &ds.class_means[y]);
        }
        for m in &ds.class_means {
            let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = LongTailSpec {
            seed: 42,
            ..lt(4, 50, 5.0)
        };
        let a = generate_synthetic(&spec, 6, 3.0, 1.0, None).unwrap();
        let b = generate_synthetic(&spec, 6, 3.0, 1.0, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balanced_test_set() {
        let train = generate_synthetic(&lt(5, 80, 8.0), 3, 1.0, 1.0, None).unwrap();
        let test = generate_balanced_test(&train, 30, 9);
        assert_eq!(test.class_counts(), vec![30; 5]);
        assert!(test.is_balanced());
        assert_eq!(test.class_means, train.class_means);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let ds = generate_synthetic(&lt(3, 40, 4.0), 5, 2.0, 0.7, None).unwrap();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn unknown_label_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "label,f0,f1\n0,1.0,2.0\n1,0.5,0.5\n").unwrap();
        fs::write(meta_path(&path), "num_classes=1\ndim=2\n").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(
            matches!(
                err,
                DataError::UnknownLabel {
                    line: 3,
                    label: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn empty_file_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        fs::write(&path, "").unwrap();
        assert!(matches!(read_dataset(&path), Err(DataError::MissingHeader)));
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        fs::write(&path, "label,f0,f1\n0,1.0\n").unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DataError::ColumnCount {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
        fs::write(&path, "label,f0,x\n").unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DataError::MalformedHeader { line: 1, .. })
        ));
        fs::write(&path, "label,f0\n0,abc\n").unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(DataError::BadValue { line: 2, .. })
        ));
    }
}
