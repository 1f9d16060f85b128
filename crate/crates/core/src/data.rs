//! Synthetic ID / near-OOD / far-OOD data and the feature interchange files.
//!
//! # Feature file layout (version 1)
//!
//! All integers and floats little-endian.
//!
//! | offset | size      | field                                     |
//! |--------|-----------|-------------------------------------------|
//! | 0      | 8         | magic `BOOTFEAT`                          |
//! | 8      | 4         | format version, `u32` = 1                 |
//! | 12     | 8         | row count `N`, `u64`                      |
//! | 20     | 8         | feature dimension `D`, `u64`              |
//! | 28     | 1         | labels flag, `0` or `1`                   |
//! | 29     | 8·N·D     | features, row-major `f64`                 |
//! | …      | 4·N       | labels as `u32` (only when the flag is 1) |
//!
//! The file length must match the header exactly; short or long payloads are
//! rejected. The CSV fallback has a single header line `f0,…,f{D-1}` with an
//! optional trailing `label` column.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{distance, dot, norm2, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub inputs: Matrix,
    /// 0-based class labels.
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
    /// Generator name and seed.
    pub provenance: String,
    /// Generating class centers, one row per class.
    pub centers: Matrix,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Gaussian-blob task parameters. Sample counts are per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 8,
            n_train: 500,
            n_val: 100,
            n_test: 100,
            separation: 6.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl BlobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "need input dimension >= 2, got {}",
                self.dim
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "separation must be >= 0, got {}",
                self.separation
            )));
        }
        for (name, n) in [("train", self.n_train), ("val", self.n_val), ("test", self.n_test)] {
            if n < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{name} split needs >= 2 samples per class, got {n}"
                )));
            }
        }
        Ok(())
    }

    /// Largest distance of an ID sample's typical support from the origin:
    /// center norm plus three standard deviations.
    pub fn extent(&self) -> f64 {
        self.separation + 3.0 * self.sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Class centers `separation · q_c` for a random orthonormal frame
/// `q_1..q_C` (Gram-Schmidt on Gaussian vectors). Centers are pairwise
/// `separation·√2` apart. When `C > d` the extra directions are random unit
/// vectors instead.
fn blob_centers(classes: usize, dim: usize, separation: f64, rng: &mut SeededRng) -> Matrix {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while frame.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if frame.len() < dim {
            for u in &frame {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
        }
        let n = norm2(&v);
        if n < 1e-6 {
            continue;
        }
        frame.push(v.into_iter().map(|x| x / n).collect());
    }
    let scaled: Vec<Vec<f64>> = frame
        .into_iter()
        .map(|u| u.into_iter().map(|x| separation * x).collect())
        .collect();
    Matrix::from_rows(&scaled).expect("equal-length rows")
}

/// Train/val/test splits drawn from one stream. Each class draws
/// `n_train + n_val + n_test` samples which are partitioned by index, so the
/// splits are disjoint by construction.
pub fn make_blob_splits(cfg: &BlobConfig) -> Result<BlobSplits> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let centers = blob_centers(cfg.classes, cfg.dim, cfg.separation, &mut rng);
    let per_class = cfg.n_train + cfg.n_val + cfg.n_test;
    let bounds = [
        (Split::Train, 0, cfg.n_train),
        (Split::Val, cfg.n_train, cfg.n_train + cfg.n_val),
        (Split::Test, cfg.n_train + cfg.n_val, per_class),
    ];
    let mut parts: Vec<(Vec<f64>, Vec<usize>)> = vec![Default::default(); 3];
    for c in 0..cfg.classes {
        for i in 0..per_class {
            let part = bounds
                .iter()
                .position(|&(_, lo, hi)| i >= lo && i < hi)
                .expect("index in a split");
            let (inputs, labels) = &mut parts[part];
            inputs.extend(centers.row(c).iter().map(|m| m + cfg.sigma * rng.normal()));
            labels.push(c);
        }
    }
    let provenance = format!("blobs(seed={})", cfg.seed);
    let mut out = parts.into_iter().zip(bounds).map(|((inputs, labels), (split, _, _))| {
        Ok::<_, Error>(LabeledDataset {
            inputs: Matrix::from_vec(labels.len(), cfg.dim, inputs)?,
            labels,
            classes: cfg.classes,
            split,
            provenance: provenance.clone(),
            centers: centers.clone(),
        })
    });
    let train = out.next().expect("train")?;
    let val = out.next().expect("val")?;
    let test = out.next().expect("test")?;
    Ok(BlobSplits { train, val, test })
}

/// A single blob split of `n_per_class` samples per class.
pub fn make_blobs(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let cfg = BlobConfig {
        classes,
        dim,
        n_train: n_per_class,
        n_val: 2,
        n_test: 2,
        separation,
        sigma,
        seed,
    };
    Ok(make_blob_splits(&cfg)?.train)
}

/// Near-OOD samples with the pair and weight each one was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NearOodSet {
    pub inputs: Matrix,
    pub pairs: Vec<(usize, usize)>,
    pub lambdas: Vec<f64>,
}

/// Points inside the segment between two distinct class centers,
/// `λ c_a + (1 − λ) c_b + N(0, η² I)` with `λ ~ U(0.3, 0.7)`.
pub fn make_near_ood(dataset: &LabeledDataset, n: usize, jitter: f64, seed: u64) -> Result<NearOodSet> {
    let classes = dataset.centers.rows();
    if classes < 2 {
        return Err(Error::InvalidConfig("near-OOD needs at least 2 class centers".into()));
    }
    if !(jitter >= 0.0) {
        return Err(Error::InvalidConfig(format!("jitter must be >= 0, got {jitter}")));
    }
    let dim = dataset.centers.cols();
    let mut rng = SeededRng::new(seed);
    let mut inputs = Matrix::zeros(n, dim);
    let mut pairs = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    for r in 0..n {
        let a = rng.below(classes);
        let mut b = rng.below(classes - 1);
        if b >= a {
            b += 1;
        }
        let lambda = rng.uniform_range(0.3, 0.7);
        let (ca, cb) = (dataset.centers.row(a), dataset.centers.row(b));
        for (k, x) in inputs.row_mut(r).iter_mut().enumerate() {
            *x = lambda * ca[k] + (1.0 - lambda) * cb[k];
            if jitter > 0.0 {
                *x += jitter * rng.normal();
            }
        }
        pairs.push((a, b));
        lambdas.push(lambda);
    }
    Ok(NearOodSet { inputs, pairs, lambdas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FarOodMode {
    /// Uniform on `[−scale, scale]^d`.
    UniformBox,
    /// `N(scale · u, I)` for a random unit direction `u`.
    #[default]
    ShiftedGaussian,
}

impl std::str::FromStr for FarOodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-box" => Ok(FarOodMode::UniformBox),
            "shifted-gaussian" => Ok(FarOodMode::ShiftedGaussian),
            other => Err(Error::InvalidConfig(format!("unknown far-OOD mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for FarOodMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FarOodMode::UniformBox => "uniform-box",
            FarOodMode::ShiftedGaussian => "shifted-gaussian",
        })
    }
}

pub fn make_far_ood(dim: usize, n: usize, mode: FarOodMode, scale: f64, seed: u64) -> Result<Matrix> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "far-OOD scale must be positive, got {scale}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut out = Matrix::zeros(n, dim);
    match mode {
        FarOodMode::UniformBox => {
            for v in out.as_mut_slice() {
                *v = rng.uniform_range(-scale, scale);
            }
        }
        FarOodMode::ShiftedGaussian => {
            let dir: Vec<f64> = loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let n = norm2(&v);
                if n > 1e-6 {
                    break v.into_iter().map(|x| x / n).collect();
                }
            };
            for r in 0..n {
                for (x, u) in out.row_mut(r).iter_mut().zip(&dir) {
                    *x = scale * u + rng.normal();
                }
            }
        }
    }
    Ok(out)
}

/// Fraction of rows within `radius` of any center.
pub fn fraction_near_centers(samples: &Matrix, centers: &Matrix, radius: f64) -> f64 {
    if samples.rows() == 0 {
        return 0.0;
    }
    let near = samples
        .iter_rows()
        .filter(|s| centers.iter_rows().any(|c| distance(s, c) <= radius))
        .count();
    near as f64 / samples.rows() as f64
}

/// Features with optional 0-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
}

const MAGIC: &[u8; 8] = b"BOOTFEAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 1;

impl FeatureFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (n, d) = self.features.shape();
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::dims("feature file labels", n, l.len()));
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * d + 4 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        out.push(u8::from(self.labels.is_some()));
        for v in self.features.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for &y in labels {
                let y = u32::try_from(y).map_err(|_| Error::InvalidConfig(format!("label {y} exceeds u32")))?;
                out.extend_from_slice(&y.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::CorruptHeader(format!(
                "file is {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..8] != MAGIC {
            return Err(Error::CorruptHeader("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::CorruptHeader(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let d = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
        let has_labels = match bytes[28] {
            0 => false,
            1 => true,
            other => return Err(Error::CorruptHeader(format!("labels flag {other}"))),
        };
        let declared = usize::try_from(n)
            .ok()
            .zip(usize::try_from(d).ok())
            .and_then(|(n, d)| {
                let feats = n.checked_mul(d)?.checked_mul(8)?;
                let labels = if has_labels { n.checked_mul(4)? } else { 0 };
                feats.checked_add(labels)?.checked_add(HEADER_LEN)
            })
            .ok_or_else(|| Error::CorruptHeader(format!("header dimensions {n}×{d} overflow")))?;
        if declared != bytes.len() {
            return Err(Error::DimMismatch {
                declared,
                found: bytes.len(),
            });
        }
        let (n, d) = (n as usize, d as usize);
        let mut pos = HEADER_LEN;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            data.push(f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes")));
            pos += 8;
        }
        let labels = has_labels.then(|| {
            (0..n)
                .map(|i| {
                    let at = pos + 4 * i;
                    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
                })
                .collect()
        });
        Ok(Self {
            features: Matrix::from_vec(n, d, data)?,
            labels,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.features.cols();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        for (r, row) in self.features.iter_rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                rec.push(l[r].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let has_labels = header.iter().last() == Some("label");
        let d = header.len() - usize::from(has_labels);
        for (i, name) in header.iter().take(d).enumerate() {
            if name != format!("f{i}") {
                return Err(Error::CorruptHeader(format!("unexpected CSV column `{name}`")));
            }
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::dims("feature CSV row", header.len(), rec.len()));
            }
            for field in rec.iter().take(d) {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::CorruptHeader(format!("bad value `{field}`: {e}")))?,
                );
            }
            if has_labels {
                let f = &rec[d];
                labels.push(
                    f.parse::<usize>()
                        .map_err(|e| Error::CorruptHeader(format!("bad label `{f}`: {e}")))?,
                );
            }
            n += 1;
        }
        Ok(Self {
            features: Matrix::from_vec(n, d, data)?,
            labels: has_labels.then_some(labels),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_deterministic_and_balanced() {
        let cfg = BlobConfig {
            n_train: 20,
            n_val: 5,
            n_test: 7,
            ..BlobConfig::default()
        };
        let a = make_blob_splits(&cfg).unwrap();
        let b = make_blob_splits(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.class_counts(), vec![20; 4]);
        assert_eq!(a.val.class_counts(), vec![5; 4]);
        assert_eq!(a.test.class_counts(), vec![7; 4]);
        assert!(a.train.inputs.is_finite());
        // Disjoint: no row repeats across splits.
        for row in a.test.inputs.iter_rows() {
            assert!(a.train.inputs.iter_rows().all(|t| t != row));
            assert!(a.val.inputs.iter_rows().all(|t| t != row));
        }
        let other = make_blob_splits(&BlobConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train.inputs, other.train.inputs);
    }

    #[test]
    fn centers_form_scaled_orthonormal_frame() {
        let d = make_blobs(4, 8, 3, 6.0, 1.0, 3).unwrap();
        for a in 0..4 {
            assert!((norm2(d.centers.row(a)) - 6.0).abs() < 1e-12);
            for b in a + 1..4 {
                assert!(dot(d.centers.row(a), d.centers.row(b)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tiny_sigma_collapses_to_centers() {
        let d = make_blobs(3, 4, 10, 5.0, 1e-12, 0).unwrap();
        for (row, &y) in d.inputs.iter_rows().zip(&d.labels) {
            assert!(distance(row, d.centers.row(y)) < 1e-9);
        }
    }

    #[test]
    fn zero_separation_stacks_centers() {
        let d = make_blobs(3, 4, 10, 0.0, 1.0, 0).unwrap();
        for c in d.centers.iter_rows() {
            assert!(c.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn invalid_blob_config() {
        assert!(make_blobs(1, 8, 10, 6.0, 1.0, 0).is_err());
        assert!(make_blobs(4, 1, 10, 6.0, 1.0, 0).is_err());
        assert!(make_blobs(4, 8, 10, 6.0, 0.0, 0).is_err());
    }

    #[test]
    fn near_ood_without_jitter_is_convex() {
        let d = make_blobs(4, 8, 3, 6.0, 1.0, 1).unwrap();
        let near = make_near_ood(&d, 200, 0.0, 9).unwrap();
        for r in 0..200 {
            let (a, b) = near.pairs[r];
            let l = near.lambdas[r];
            assert_ne!(a, b);
            assert!(l > 0.3 && l < 0.7);
            for k in 0..8 {
                let expect = l * d.centers[(a, k)] + (1.0 - l) * d.centers[(b, k)];
                assert_eq!(near.inputs[(r, k)], expect);
            }
        }
        let mid = NearOodSet {
            inputs: Matrix::zeros(0, 8),
            pairs: vec![],
            lambdas: vec![],
        };
        assert!(mid.inputs.is_empty());
        assert_eq!(
            make_near_ood(&d, 50, 0.5, 4).unwrap(),
            make_near_ood(&d, 50, 0.5, 4).unwrap()
        );
    }

    #[test]
    fn far_ood_is_far() {
        assert_eq!(
            make_far_ood(8, 0, FarOodMode::UniformBox, 1.0, 0).unwrap().shape(),
            (0, 8)
        );
        let cfg = BlobConfig::default();
        let d = make_blobs(4, 8, 3, cfg.separation, cfg.sigma, 0).unwrap();
        let huge = make_far_ood(8, 200, FarOodMode::UniformBox, 1e6, 1).unwrap();
        for row in huge.iter_rows() {
            for c in d.centers.iter_rows() {
                assert!(distance(row, c) > cfg.separation);
            }
        }
        for mode in [FarOodMode::UniformBox, FarOodMode::ShiftedGaussian] {
            let far = make_far_ood(8, 1000, mode, 3.0 * cfg.extent(), 2).unwrap();
            assert!(fraction_near_centers(&far, &d.centers, 3.0 * cfg.sigma) < 0.01);
            assert_eq!(far, make_far_ood(8, 1000, mode, 3.0 * cfg.extent(), 2).unwrap());
        }
        assert!(make_far_ood(8, 10, FarOodMode::UniformBox, 0.0, 0).is_err());
    }

    fn sample_file(rows: usize, cols: usize, labels: bool) -> FeatureFile {
        let mut rng = SeededRng::new(5);
        FeatureFile {
            features: Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap(),
            labels: labels.then(|| (0..rows).map(|i| i % 3).collect()),
        }
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (rows, labels) in [(10, false), (10, true), (0, false), (0, true)] {
            let f = sample_file(rows, 16, labels);
            let path = dir.path().join("f.bin");
            f.write(&path).unwrap();
            let back = FeatureFile::read(&path).unwrap();
            assert_eq!(back.features.shape(), (rows, 16));
            let same_bits = back
                .features
                .as_slice()
                .iter()
                .zip(f.features.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits);
            assert_eq!(back.labels, f.labels);
        }
    }

    #[test]
    fn feature_file_rejects_damage() {
        let bytes = sample_file(4, 3, true).to_bytes().unwrap();
        assert!(matches!(
            FeatureFile::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::DimMismatch { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(FeatureFile::from_bytes(&long), Err(Error::DimMismatch { .. })));
        assert!(matches!(
            FeatureFile::from_bytes(&bytes[..10]),
            Err(Error::CorruptHeader(_))
        ));
        let mut bad_version = bytes.clone();
        bad_version[8] = 2;
        assert!(matches!(
            FeatureFile::from_bytes(&bad_version),
            Err(Error::CorruptHeader(_))
        ));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(matches!(
            FeatureFile::from_bytes(&bad_magic),
            Err(Error::CorruptHeader(_))
        ));
    }

    #[test]
    fn feature_csv_round_trip() {
        for labels in [false, true] {
            let f = sample_file(5, 3, labels);
            let mut buf = Vec::new();
            f.write_csv(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            let header = text.lines().next().unwrap();
            assert_eq!(header, if labels { "f0,f1,f2,label" } else { "f0,f1,f2" });
            assert_eq!(FeatureFile::read_csv(buf.as_slice()).unwrap(), f);
        }
    }
}
