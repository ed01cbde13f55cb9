//! Feature, label and boundary files, and the dataset manifest.
//!
//! Binary feature files: magic `UOSF`, `u32` m, `u32` N, `u32` reserved
//! (zero), then the `m x N` entries as column-major little-endian `f64`.
//! CSV feature files hold one sample per row; a non-numeric first row is
//! taken as a header.

use std::path::{Path, PathBuf};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::prox::DenseMatrix;
use crate::sequence::SequenceSample;
use crate::solver::{BlockShape, FeatureMatrix};

const FEATURE_MAGIC: &[u8; 4] = b"UOSF";
const HEADER_LEN: usize = 16;
/// Columns whose norm is further than this from 1 are renormalized.
const RENORM_TOL: f64 = 1e-12;
/// Renormalizations beyond this deviation are reported.
const RENORM_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(FileFormat::Csv),
            Some("bin") => Ok(FileFormat::Binary),
            _ => Err(Error::Config(format!("cannot infer feature format of {}", path.display()))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "bin" | "binary" => Ok(FileFormat::Binary),
            _ => Err(Error::Config(format!("unknown feature format '{s}'"))),
        }
    }
}

fn load_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Load { path: path.to_path_buf(), reason: reason.into() }
}

fn check_entry(path: &Path, v: f64, row: usize, col: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(load_err(path, format!("non-finite value {v} at row {row}, column {col}")))
    }
}

/// Reads a CSV with one sample per row into an `m x N` matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| load_err(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| load_err(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if r == 0 => continue,
            Err(_) => return Err(load_err(path, format!("unparsable value in row {r}"))),
        };
        for (c, &v) in values.iter().enumerate() {
            check_entry(path, v, r, c)?;
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(load_err(path, format!("row {r} has {} values, expected {}", values.len(), first.len())));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(load_err(path, "no data rows"));
    }
    Ok(DenseMatrix::from_fn(rows[0].len(), rows.len(), |i, j| rows[j][i]))
}

pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| load_err(path, e.to_string()))?;
    for col in m.column_iter() {
        w.write_record(col.iter().map(|v| v.to_string())).map_err(|e| load_err(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<DenseMatrix> {
    let buf = std::fs::read(path).map_err(|e| load_err(path, e.to_string()))?;
    if buf.len() < HEADER_LEN || &buf[..4] != FEATURE_MAGIC {
        return Err(load_err(path, "missing UOSF header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (m, n) = (word(4), word(8));
    let body = &buf[HEADER_LEN..];
    if m == 0 || n == 0 || m.checked_mul(n).and_then(|c| c.checked_mul(8)) != Some(body.len()) {
        return Err(load_err(path, format!("header says {m}x{n} but the body has {} bytes", body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    for (k, &v) in data.iter().enumerate() {
        check_entry(path, v, k % m, k / m)?;
    }
    Ok(DenseMatrix::from_vec(m, n, data))
}

pub fn write_matrix_bin(path: &Path, m: &DenseMatrix) -> Result<()> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| load_err(path, "matrix too large"));
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&dim(m.nrows())?.to_le_bytes());
    buf.extend_from_slice(&dim(m.ncols())?.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    m.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path, format: FileFormat) -> Result<DenseMatrix> {
    match format {
        FileFormat::Csv => read_matrix_csv(path),
        FileFormat::Binary => read_matrix_bin(path),
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => write_matrix_csv(path, m),
        FileFormat::Binary => write_matrix_bin(path, m),
    }
}

/// Scales columns to unit norm. Columns already within rounding of 1 are
/// left untouched so that stored unit-norm data round-trips bit for bit.
pub fn normalize_columns(path: &Path, m: &mut DenseMatrix) -> Result<()> {
    let mut worst: f64 = 0.0;
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 {
            return Err(load_err(path, format!("column {j} is zero")));
        }
        if (n - 1.0).abs() > RENORM_TOL {
            worst = worst.max((n - 1.0).abs());
            col /= n;
        }
    }
    if worst > RENORM_WARN {
        log::warn!("{}: renormalized columns (largest norm deviation {worst:e})", path.display());
    }
    Ok(())
}

/// One non-negative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| load_err(path, e.to_string()))?;
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| l.parse().map_err(|_| load_err(path, format!("line {}: bad label '{l}'", n + 1))))
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Half-open `[start, end)` ranges, one `start end` pair per line.
pub fn read_boundaries(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| load_err(path, e.to_string()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().map(str::trim).enumerate().filter(|(_, l)| !l.is_empty()) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        out.push(parsed.ok_or_else(|| load_err(path, format!("line {}: expected 'start end'", k + 1)))?);
    }
    check_partition(&out, n).map_err(|r| load_err(path, r))?;
    Ok(out)
}

pub fn write_boundaries(path: &Path, ranges: &[(usize, usize)]) -> Result<()> {
    let s: String = ranges.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
    std::fs::write(path, s)?;
    Ok(())
}

fn check_partition(ranges: &[(usize, usize)], n: usize) -> std::result::Result<(), String> {
    let mut next = 0;
    for &(a, b) in ranges {
        if a != next || b <= a {
            return Err(format!("range {a}..{b} does not continue the partition at {next}"));
        }
        next = b;
    }
    if next != n {
        return Err(format!("ranges cover {next} of {n} samples"));
    }
    Ok(())
}

/// Describes a dataset on disk. Stored as a key=value file; relative paths
/// are resolved against the manifest's directory.
///
/// Keys: `features`, `format` (csv or bin, else inferred), `labels`,
/// `boundaries`, `sequence_labels`, `block_shape` (`BLOCKSxBINS`).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub features: PathBuf,
    pub format: FileFormat,
    pub labels: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub sequence_labels: Option<PathBuf>,
    pub block_shape: Option<BlockShape>,
}

const MANIFEST_KEYS: &[&str] = &["features", "format", "labels", "boundaries", "sequence_labels", "block_shape"];

impl DatasetManifest {
    pub fn new(features: PathBuf, format: FileFormat) -> Self {
        DatasetManifest { features, format, labels: None, boundaries: None, sequence_labels: None, block_shape: None }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let kv = KeyValues::from_file(path)?;
        kv.check_known(MANIFEST_KEYS)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |key: &str| -> Result<Option<PathBuf>> { Ok(kv.get::<String>(key)?.map(|p| dir.join(p))) };
        let features = dir.join(kv.require::<String>("features")?);
        let format = match kv.raw("format") {
            Some(f) => FileFormat::parse(f)?,
            None => FileFormat::from_path(&features)?,
        };
        let block_shape = match kv.raw("block_shape") {
            None => None,
            Some(s) => {
                let parsed =
                    s.split_once('x').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
                let (blocks, bins) = parsed.ok_or_else(|| Error::Config(format!("bad block_shape '{s}'")))?;
                Some(BlockShape { blocks, bins })
            }
        };
        let manifest = DatasetManifest {
            features,
            format,
            labels: resolve("labels")?,
            boundaries: resolve("boundaries")?,
            sequence_labels: resolve("sequence_labels")?,
            block_shape,
        };
        manifest.check_files()?;
        Ok(manifest)
    }

    fn check_files(&self) -> Result<()> {
        let all = [Some(&self.features), self.labels.as_ref(), self.boundaries.as_ref(), self.sequence_labels.as_ref()];
        for p in all.into_iter().flatten() {
            if !p.is_file() {
                return Err(load_err(p, "file does not exist"));
            }
        }
        Ok(())
    }

    /// Writes the manifest with paths relative to `dir` where possible.
    pub fn write(&self, path: &Path) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).display().to_string();
        let mut s = format!("features = {}\n", rel(&self.features));
        s.push_str(match self.format {
            FileFormat::Csv => "format = csv\n",
            FileFormat::Binary => "format = bin\n",
        });
        for (k, v) in
            [("labels", &self.labels), ("boundaries", &self.boundaries), ("sequence_labels", &self.sequence_labels)]
        {
            if let Some(p) = v {
                s.push_str(&format!("{k} = {}\n", rel(p)));
            }
        }
        if let Some(b) = self.block_shape {
            s.push_str(&format!("block_shape = {}x{}\n", b.blocks, b.bins));
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_labels(&self) -> Result<Option<Vec<usize>>> {
        self.labels.as_deref().map(read_labels).transpose()
    }
}

/// Loads the feature file of a manifest as unit-norm columns.
pub fn load_feature_matrix(manifest: &DatasetManifest) -> Result<FeatureMatrix> {
    let mut data = read_matrix(&manifest.features, manifest.format)?;
    normalize_columns(&manifest.features, &mut data)?;
    let x = FeatureMatrix::new(data)?;
    match manifest.block_shape {
        Some(shape) => x.with_block_shape(shape),
        None => Ok(x),
    }
}

/// Loads a sequence dataset: frames are the feature columns, split by the
/// manifest's boundaries, each labeled from `sequence_labels` when present.
pub fn load_sequences(manifest: &DatasetManifest) -> Result<Vec<SequenceSample>> {
    let x = load_feature_matrix(manifest)?;
    let bounds_path = manifest
        .boundaries
        .as_deref()
        .ok_or_else(|| Error::Config("sequence dataset manifest has no 'boundaries' entry".into()))?;
    let bounds = read_boundaries(bounds_path, x.len())?;
    let labels = match &manifest.sequence_labels {
        Some(p) => {
            let l = read_labels(p)?;
            if l.len() != bounds.len() {
                return Err(load_err(p, format!("{} labels for {} sequences", l.len(), bounds.len())));
            }
            l.into_iter().map(Some).collect()
        }
        None => vec![None; bounds.len()],
    };
    bounds
        .iter()
        .zip(labels)
        .map(|(&(a, b), label)| SequenceSample::new(x.data().columns(a, b - a).into_owned(), label))
        .collect()
}

/// Writes sequences as one concatenated feature file plus boundaries and
/// labels, and returns the manifest (also written to `dir/manifest.txt`).
pub fn write_sequences(dir: &Path, seqs: &[SequenceSample], format: FileFormat) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    if seqs.is_empty() {
        return Err(Error::Config("no sequences to write".into()));
    }
    let m = seqs[0].features.nrows();
    let total: usize = seqs.iter().map(SequenceSample::len).sum();
    let mut all = DenseMatrix::zeros(m, total);
    let mut bounds = Vec::with_capacity(seqs.len());
    let mut at = 0;
    for s in seqs {
        if s.features.nrows() != m {
            return Err(Error::Dimension("sequences differ in feature dimension".into()));
        }
        all.columns_mut(at, s.len()).copy_from(&s.features);
        bounds.push((at, at + s.len()));
        at += s.len();
    }
    let features = dir.join(match format {
        FileFormat::Csv => "features.csv",
        FileFormat::Binary => "features.bin",
    });
    write_matrix(&features, &all, format)?;
    let mut manifest = DatasetManifest::new(features, format);
    let b = dir.join("boundaries.txt");
    write_boundaries(&b, &bounds)?;
    manifest.boundaries = Some(b);
    if seqs.iter().all(|s| s.label.is_some()) {
        let l = dir.join("sequence_labels.txt");
        write_labels(&l, &seqs.iter().filter_map(|s| s.label).collect::<Vec<_>>())?;
        manifest.sequence_labels = Some(l);
    }
    manifest.write(&dir.join("manifest.txt"))?;
    Ok(manifest)
}
