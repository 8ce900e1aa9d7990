//! Binary feature store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ERSKFEAT"
//! version  u32
//! n        u64      rows
//! dim      u64      columns
//! dtype    u8       1 = f32 LE (the only payload type)
//! scheme   u32 len + UTF-8
//! meta     u32 len + UTF-8 JSON
//! labels?  u8       0/1
//! ids      n × (u32 len + UTF-8)
//! relevant n × u8
//! labels   n × (u32 len + UTF-8), only if labels? = 1
//! payload  n·dim × f32, row-major
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::binio::{put_str, put_u32, put_u64, put_u8, temp_sibling, Framed};
use super::{Manifest, PRNG};
use crate::synth::rng;
use crate::{Domain, Error, FeatureMatrix, Result};

pub const STORE_MAGIC: &[u8; 8] = b"ERSKFEAT";
pub const STORE_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

/// In-memory feature store: one f32 row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub scheme: String,
    pub meta: serde_json::Value,
    pub ids: Vec<String>,
    /// `false` marks distractors, which are relevant to no query.
    pub relevant: Vec<bool>,
    pub labels: Option<Vec<String>>,
    pub data: Array2<f32>,
}

impl FeatureStore {
    pub fn new(scheme: impl Into<String>, ids: Vec<String>, data: Array2<f32>) -> Result<Self> {
        let n = ids.len();
        let s = Self {
            scheme: scheme.into(),
            meta: serde_json::json!({}),
            ids,
            relevant: vec![true; n],
            labels: None,
            data,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_matrix(m: &FeatureMatrix<f32>, scheme: impl Into<String>) -> Self {
        let n = m.len();
        Self {
            scheme: scheme.into(),
            meta: serde_json::json!({}),
            ids: m.ids().to_vec(),
            relevant: vec![true; n],
            labels: m.labels().map(|l| l.to_vec()),
            data: m.rows().to_owned(),
        }
    }

    pub fn to_matrix(&self, domain: Domain) -> Result<FeatureMatrix<f32>> {
        FeatureMatrix::new(self.data.clone(), self.ids.clone(), self.labels.clone(), domain)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.ids.len();
        if self.data.nrows() != n || self.relevant.len() != n || self.labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::InvalidInput(format!(
                "store has {n} ids but {} rows / {} relevance flags",
                self.data.nrows(),
                self.relevant.len()
            )));
        }
        if self.data.ncols() == 0 {
            return Err(Error::InvalidInput("store dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = self.ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate id '{dup}' in store")));
        }
        Ok(())
    }

    /// Every id must appear in the manifest and, if given, the dimension must match.
    pub fn validate_against(&self, manifest: &Manifest, expected_dim: Option<usize>) -> Result<()> {
        if let Some(d) = expected_dim {
            if d != self.dim() {
                return Err(Error::InvalidInput(format!("store dimension {} but {d} expected", self.dim())));
            }
        }
        let known: HashSet<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
        if let Some(id) = self.ids.iter().find(|id| !known.contains(id.as_str())) {
            return Err(Error::InvalidInput(format!("store id '{id}' is not in the manifest")));
        }
        Ok(())
    }
}

pub fn save_features(path: impl AsRef<Path>, store: &FeatureStore) -> Result<()> {
    store.validate()?;
    let mut w = StoreWriter::create(
        path,
        &store.scheme,
        &store.meta,
        store.dim(),
        &store.ids,
        &store.relevant,
        store.labels.as_deref(),
    )?;
    w.write_rows(store.data.view())?;
    w.finish()
}

/// Streams rows into a new store; the file appears at its final path only
/// after [`StoreWriter::finish`] succeeds.
pub struct StoreWriter {
    out: BufWriter<File>,
    tmp: PathBuf,
    path: PathBuf,
    dim: usize,
    expected: usize,
    written: usize,
}

impl StoreWriter {
    pub fn create(
        path: impl AsRef<Path>,
        scheme: &str,
        meta: &serde_json::Value,
        dim: usize,
        ids: &[String],
        relevant: &[bool],
        labels: Option<&[String]>,
    ) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if relevant.len() != ids.len() || labels.is_some_and(|l| l.len() != ids.len()) {
            return Err(Error::InvalidInput("ids, relevance flags and labels differ in length".into()));
        }
        let mut meta = meta.clone();
        if let Some(obj) = meta.as_object_mut() {
            obj.entry("prng").or_insert_with(|| PRNG.into());
        }
        let tmp = temp_sibling(&path);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::with_capacity(1 << 20, file);
        let res: std::io::Result<()> = (|| {
            w.write_all(STORE_MAGIC)?;
            put_u32(&mut w, STORE_VERSION)?;
            put_u64(&mut w, ids.len() as u64)?;
            put_u64(&mut w, dim as u64)?;
            put_u8(&mut w, DTYPE_F32)?;
            put_str(&mut w, scheme)?;
            put_str(&mut w, &meta.to_string())?;
            put_u8(&mut w, labels.is_some() as u8)?;
            for id in ids {
                put_str(&mut w, id)?;
            }
            for r in relevant {
                put_u8(&mut w, *r as u8)?;
            }
            for l in labels.unwrap_or(&[]) {
                put_str(&mut w, l)?;
            }
            Ok(())
        })();
        res.map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::io(&path, e)
        })?;
        Ok(Self { out: w, tmp, path, dim, expected: ids.len(), written: 0 })
    }

    pub fn write_rows(&mut self, rows: ArrayView2<'_, f32>) -> Result<()> {
        if rows.ncols() != self.dim {
            return Err(Error::InvalidInput(format!("row width {} but store dimension {}", rows.ncols(), self.dim)));
        }
        if self.written + rows.nrows() > self.expected {
            return Err(Error::InvalidInput(format!("more than the declared {} rows", self.expected)));
        }
        let mut buf = Vec::with_capacity(self.dim * 4);
        for row in rows.rows() {
            buf.clear();
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.out.write_all(&buf).map_err(|e| Error::io(&self.tmp, e))?;
        }
        self.written += rows.nrows();
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if self.written != self.expected {
            let _ = std::fs::remove_file(&self.tmp);
            return Err(Error::InvalidInput(format!("{} rows written, {} declared", self.written, self.expected)));
        }
        let tmp = self.tmp.clone();
        let res = (|| {
            let f = self.out.into_inner().map_err(|e| e.into_error())?;
            f.sync_all()?;
            std::fs::rename(&tmp, &self.path)
        })();
        res.map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::io(&tmp, e)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub version: u32,
    pub n: usize,
    pub dim: usize,
    pub scheme: String,
    pub meta: serde_json::Value,
}

/// Reads the header, ids and flags eagerly and the payload in row chunks.
pub struct StoreReader {
    src: Framed<BufReader<File>>,
    pub header: StoreHeader,
    pub ids: Vec<String>,
    pub relevant: Vec<bool>,
    pub labels: Option<Vec<String>>,
    rows_read: usize,
}

impl StoreReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path: PathBuf = path.as_ref().into();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let size = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let mut src = Framed { inner: BufReader::with_capacity(1 << 20, file), path };

        let mut magic = [0u8; 8];
        src.bytes(&mut magic, "magic")?;
        if &magic != STORE_MAGIC {
            return Err(Error::UnsupportedVersion(format!("{} is not a feature store", src.path.display())));
        }
        let version = src.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::UnsupportedVersion(format!(
                "feature store version {version}, expected {STORE_VERSION}"
            )));
        }
        let n = src.u64("row count")?;
        let dim = src.u64("dimension")?;
        let dtype = src.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(src.corrupt(format!("unknown dtype tag {dtype}")));
        }
        let payload = n
            .checked_mul(dim)
            .and_then(|v| v.checked_mul(4))
            .filter(|p| *p <= size)
            .ok_or_else(|| src.corrupt(format!("header claims {n}×{dim} values, larger than the file")))?;
        let scheme = src.string("scheme", size)?;
        let meta_text = src.string("meta", size)?;
        let meta = serde_json::from_str(&meta_text).map_err(|e| src.corrupt(format!("bad meta JSON: {e}")))?;
        let has_labels = src.u8("label flag")? == 1;
        let n = n as usize;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(src.string("id", size)?);
        }
        let mut flags = vec![0u8; n];
        src.bytes(&mut flags, "relevance flags")?;
        let labels = if has_labels {
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                l.push(src.string("label", size)?);
            }
            Some(l)
        } else {
            None
        };
        let pos = src.inner.stream_position().map_err(|e| Error::io(&src.path, e))?;
        if pos + payload != size {
            return Err(src.corrupt(format!("payload is {} bytes, expected {payload}", size.saturating_sub(pos))));
        }
        Ok(Self {
            src,
            header: StoreHeader { version, n, dim: dim as usize, scheme, meta },
            ids,
            relevant: flags.into_iter().map(|f| f != 0).collect(),
            labels,
            rows_read: 0,
        })
    }

    pub fn remaining(&self) -> usize {
        self.header.n - self.rows_read
    }

    /// Next block of at most `max_rows` rows; `None` once the payload is exhausted.
    pub fn next_chunk(&mut self, max_rows: usize) -> Result<Option<Array2<f32>>> {
        let rows = self.remaining().min(max_rows.max(1));
        if rows == 0 {
            return Ok(None);
        }
        let dim = self.header.dim;
        let mut bytes = vec![0u8; rows * dim * 4];
        self.src.bytes(&mut bytes, "payload")?;
        let vals: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        self.rows_read += rows;
        Ok(Some(Array2::from_shape_vec((rows, dim), vals).expect("chunk shape")))
    }

    pub fn into_store(mut self) -> Result<FeatureStore> {
        let mut data = Array2::<f32>::zeros((0, self.header.dim));
        data.reserve_rows(self.header.n).expect("row reservation");
        while let Some(chunk) = self.next_chunk(4096)? {
            data.append(Axis(0), chunk.view()).expect("matching widths");
        }
        let mut extra = [0u8; 1];
        if self.src.inner.read(&mut extra).map_err(|e| Error::io(&self.src.path, e))? != 0 {
            return Err(self.src.corrupt("trailing bytes after payload"));
        }
        Ok(FeatureStore {
            scheme: self.header.scheme,
            meta: self.header.meta,
            ids: self.ids,
            relevant: self.relevant,
            labels: self.labels,
            data,
        })
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    StoreReader::open(path)?.into_store()
}

/// Concatenate a relevant store with a distractor store; every distractor
/// is flagged non-relevant.
pub fn merge_distractors(relevant: &FeatureStore, distractors: &FeatureStore) -> Result<FeatureStore> {
    if distractors.is_empty() {
        return Ok(relevant.clone());
    }
    if relevant.dim() != distractors.dim() {
        return Err(Error::InvalidInput(format!(
            "relevant store has dimension {}, distractors {}",
            relevant.dim(),
            distractors.dim()
        )));
    }
    if relevant.scheme != distractors.scheme {
        tracing::warn!(a = %relevant.scheme, b = %distractors.scheme, "merging stores with different schemes");
    }
    let mut ids = relevant.ids.clone();
    ids.extend(distractors.ids.iter().cloned());
    let mut flags = relevant.relevant.clone();
    flags.extend(std::iter::repeat_n(false, distractors.len()));
    let labels = relevant.labels.as_ref().map(|l| {
        let mut l = l.clone();
        l.extend(std::iter::repeat_n(String::new(), distractors.len()));
        l
    });
    let mut data = relevant.data.clone();
    data.append(Axis(0), distractors.data.view()).expect("equal widths checked");
    let merged = FeatureStore {
        scheme: relevant.scheme.clone(),
        meta: relevant.meta.clone(),
        ids,
        relevant: flags,
        labels,
        data,
    };
    merged.validate()?;
    Ok(merged)
}

/// Uniform sample of `count` rows without replacement across all stores,
/// returned in canonical order (store order, then row order).
pub fn sample_descriptors(stores: &[FeatureStore], count: usize, seed: u64) -> Result<FeatureMatrix<f32>> {
    let total: usize = stores.iter().map(|s| s.len()).sum();
    if count > total {
        return Err(Error::InsufficientData(format!("{count} descriptors requested, {total} available")));
    }
    if count == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let dim = stores[0].dim();
    if let Some(s) = stores.iter().find(|s| s.dim() != dim) {
        return Err(Error::InvalidInput(format!("descriptor dimensions differ: {dim} vs {}", s.dim())));
    }
    let mut picks = if count == total { (0..total).collect() } else { sample(&mut rng(seed), total, count).into_vec() };
    picks.sort_unstable();
    let mut out = Array2::<f32>::zeros((count, dim));
    let (mut store, mut offset) = (0usize, 0usize);
    for (o, g) in picks.into_iter().enumerate() {
        while g >= offset + stores[store].len() {
            offset += stores[store].len();
            store += 1;
        }
        out.row_mut(o).assign(&stores[store].data.row(g - offset));
    }
    FeatureMatrix::from_rows(out, "d", Domain::Source)
}

/// Numeric text matrix: one row per line, values separated by whitespace
/// or commas; blank lines and `#` comments are skipped.
pub fn read_text_matrix(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vals = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schema { line: i + 1, message: format!("bad number: {e}") })?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Schema { line: i + 1, message: format!("{} values, expected {c}", row.len()) })
            }
            _ => {}
        }
        vals.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::InsufficientData(format!("{} holds no rows", path.display())))?;
    Ok(Array2::from_shape_vec((rows, cols), vals).expect("consistent row widths"))
}
