//! Versioned model container.
//!
//! ```text
//! magic    8 bytes  "ERSKMODL"
//! version  u32
//! kind     u8
//! header   u32 len + UTF-8 JSON {scalar, prng, arrays: [{name, shape}], extra}
//! payload  for each array in header order: product(shape) × f64 LE
//! ```
//!
//! Values are widened to f64 on write, so both f32 and f64 models round-trip
//! bit-exactly.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::binio::{atomic_write, put_str, put_u32, put_u8, Framed};
use super::PRNG;
use crate::adapt::{GfkModel, SaModel};
use crate::encode::{Codebook, GmmModel};
use crate::linalg::Subspace;
use crate::{Error, Real, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"ERSKMODL";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Codebook,
    Gmm,
    Sa,
    Gfk,
    Subspace,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Codebook => 1,
            ModelKind::Gmm => 2,
            ModelKind::Sa => 3,
            ModelKind::Gfk => 4,
            ModelKind::Subspace => 5,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            1 => ModelKind::Codebook,
            2 => ModelKind::Gmm,
            3 => ModelKind::Sa,
            4 => ModelKind::Gfk,
            5 => ModelKind::Subspace,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel<T> {
    Codebook(Codebook<T>),
    Gmm(GmmModel<T>),
    Sa(SaModel<T>),
    Gfk(GfkModel<T>),
    Subspace(Subspace<T>),
}

impl<T> StoredModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Codebook(_) => ModelKind::Codebook,
            StoredModel::Gmm(_) => ModelKind::Gmm,
            StoredModel::Sa(_) => ModelKind::Sa,
            StoredModel::Gfk(_) => ModelKind::Gfk,
            StoredModel::Subspace(_) => ModelKind::Subspace,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    scalar: String,
    prng: String,
    arrays: Vec<ArraySpec>,
    #[serde(default)]
    extra: serde_json::Value,
}

struct Part {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn vec1<T: Real>(name: impl Into<String>, a: &Array1<T>) -> Part {
    Part { name: name.into(), shape: vec![a.len()], values: a.iter().map(|v| v.as_f64()).collect() }
}

fn mat<T: Real>(name: impl Into<String>, a: &Array2<T>) -> Part {
    Part { name: name.into(), shape: vec![a.nrows(), a.ncols()], values: a.iter().map(|v| v.as_f64()).collect() }
}

fn subspace_parts<T: Real>(prefix: &str, s: &Subspace<T>) -> Vec<Part> {
    let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
    vec![vec1(p("mean"), &s.mean), mat(p("basis"), &s.basis), vec1(p("eigenvalues"), &s.eigenvalues)]
}

fn parts<T: Real>(m: &StoredModel<T>) -> (Vec<Part>, serde_json::Value) {
    match m {
        StoredModel::Codebook(c) => (vec![mat("centers", &c.centers)], serde_json::json!({})),
        StoredModel::Gmm(g) => (
            vec![vec1("weights", &g.weights), mat("means", &g.means), mat("variances", &g.variances)],
            serde_json::json!({}),
        ),
        StoredModel::Sa(s) => {
            let mut p = subspace_parts("source", &s.source);
            p.extend(subspace_parts("target", &s.target));
            p.push(mat("m", &s.m));
            p.push(mat("x_a", &s.x_a));
            (p, serde_json::json!({}))
        }
        StoredModel::Gfk(g) => (
            vec![mat("g", &g.g), vec1("source_mean", &g.source_mean), vec1("target_mean", &g.target_mean)],
            serde_json::json!({ "d": g.d }),
        ),
        StoredModel::Subspace(s) => (subspace_parts("", s), serde_json::json!({})),
    }
}

pub fn write_model<T: Real>(w: &mut impl Write, model: &StoredModel<T>) -> std::io::Result<()> {
    let (parts, extra) = parts(model);
    let header = Header {
        scalar: std::any::type_name::<T>().into(),
        prng: PRNG.into(),
        arrays: parts.iter().map(|p| ArraySpec { name: p.name.clone(), shape: p.shape.clone() }).collect(),
        extra,
    };
    w.write_all(MODEL_MAGIC)?;
    put_u32(w, MODEL_VERSION)?;
    put_u8(w, model.kind().tag())?;
    put_str(w, &serde_json::to_string(&header).expect("header serialises"))?;
    for p in &parts {
        let mut buf = Vec::with_capacity(p.values.len() * 8);
        for v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_model<T: Real>(path: impl AsRef<Path>, model: &StoredModel<T>) -> Result<()> {
    atomic_write(path.as_ref(), |w| write_model(w, model))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<StoredModel<T>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(f), path)
}

struct Arrays<'a, R> {
    src: &'a mut Framed<R>,
    specs: std::vec::IntoIter<ArraySpec>,
}

impl<R: Read> Arrays<'_, R> {
    fn next<T: Real>(&mut self, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<T>)> {
        let spec = self.specs.next().ok_or_else(|| self.src.corrupt(format!("missing array '{name}'")))?;
        if spec.name != name || spec.shape.len() != rank {
            return Err(self.src.corrupt(format!("expected {rank}-d array '{name}', found '{}'", spec.name)));
        }
        let len: usize = spec.shape.iter().product();
        let mut bytes = vec![0u8; len * 8];
        self.src.bytes(&mut bytes, name)?;
        let vals =
            bytes.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
        Ok((spec.shape, vals))
    }

    fn vec1<T: Real>(&mut self, name: &str) -> Result<Array1<T>> {
        Ok(Array1::from_vec(self.next(name, 1)?.1))
    }

    fn mat<T: Real>(&mut self, name: &str) -> Result<Array2<T>> {
        let (shape, v) = self.next(name, 2)?;
        Ok(Array2::from_shape_vec((shape[0], shape[1]), v).expect("shape matches length"))
    }

    fn subspace<T: Real>(&mut self, prefix: &str) -> Result<Subspace<T>> {
        let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
        Subspace::new(self.vec1(&p("mean"))?, self.mat(&p("basis"))?, self.vec1(&p("eigenvalues"))?)
    }
}

pub fn read_model<T: Real>(r: impl Read, path: impl Into<PathBuf>) -> Result<StoredModel<T>> {
    let mut src = Framed { inner: r, path: path.into() };
    let mut magic = [0u8; 8];
    src.bytes(&mut magic, "magic")?;
    if &magic != MODEL_MAGIC {
        return Err(Error::UnsupportedVersion(format!("{} is not a model file (bad magic)", src.path.display())));
    }
    let version = src.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(format!("model version {version}, expected {MODEL_VERSION}")));
    }
    let tag = src.u8("kind")?;
    let kind =
        ModelKind::from_tag(tag).ok_or_else(|| Error::UnsupportedVersion(format!("unknown model kind {tag}")))?;
    let text = src.string("header", 1 << 24)?;
    let header: Header = serde_json::from_str(&text).map_err(|e| src.corrupt(format!("bad header JSON: {e}")))?;
    let extra = header.extra.clone();
    let mut a = Arrays { src: &mut src, specs: header.arrays.into_iter() };
    let model = match kind {
        ModelKind::Codebook => StoredModel::Codebook(Codebook::new(a.mat("centers")?)?),
        ModelKind::Gmm => StoredModel::Gmm(GmmModel::new(a.vec1("weights")?, a.mat("means")?, a.mat("variances")?)?),
        ModelKind::Sa => {
            let source = a.subspace("source")?;
            let target = a.subspace("target")?;
            let m = a.mat("m")?;
            let x_a = a.mat("x_a")?;
            StoredModel::Sa(SaModel { source, target, m, x_a })
        }
        ModelKind::Gfk => {
            let g = a.mat("g")?;
            let source_mean = a.vec1("source_mean")?;
            let target_mean = a.vec1("target_mean")?;
            let d = extra.get("d").and_then(|v| v.as_u64()).ok_or_else(|| a.src.corrupt("GFK header lacks 'd'"))?;
            StoredModel::Gfk(GfkModel { g, d: d as usize, source_mean, target_mean })
        }
        ModelKind::Subspace => StoredModel::Subspace(a.subspace("")?),
    };
    Ok(model)
}
