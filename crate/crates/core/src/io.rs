//! File formats: inline JSON matrices and the quartet bundle.
//!
//! A bundle is a directory holding `meta.json` (shapes, weights, offsets)
//! and `payload.bin` (little-endian `f64` pairs `re, im`, column-major, one
//! matrix after another).

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discrete_ops::{OperatorQuartet, QuartetMeta};
use crate::error::{EvoError, Result};
use crate::linalg::CMat;

pub const BUNDLE_FORMAT: &str = "evocore-quartet";
pub const BUNDLE_VERSION: u32 = 1;

/// Row-major matrix with `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn to_cmat(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(EvoError::Config(format!(
                "matrix declares {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(EvoError::Config("matrix entries must be finite".into()));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| {
            let [re, im] = self.data[i * self.cols + j];
            Complex64::new(re, im)
        }))
    }
}

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockMeta {
    name: String,
    rows: usize,
    cols: usize,
    /// Offset in `f64` pairs.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    format: String,
    version: u32,
    quartet: QuartetMeta,
    w0: Vec<f64>,
    w1: Vec<f64>,
    blocks: Vec<BlockMeta>,
}

const BLOCKS: [&str; 4] = ["gmax", "dmax", "e_int_g", "e_int_d"];

fn block<'a>(q: &'a OperatorQuartet, name: &str) -> &'a CMat {
    match name {
        "gmax" => &q.gmax,
        "dmax" => &q.dmax,
        "e_int_g" => &q.e_int_g,
        _ => &q.e_int_d,
    }
}

pub fn write_quartet_bundle(q: &OperatorQuartet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut payload = Vec::new();
    let mut blocks = Vec::new();
    let mut offset = 0;
    for name in BLOCKS {
        let m = block(q, name);
        for x in m.iter() {
            payload.extend_from_slice(&x.re.to_le_bytes());
            payload.extend_from_slice(&x.im.to_le_bytes());
        }
        blocks.push(BlockMeta {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            offset,
        });
        offset += m.len();
    }
    let meta = BundleMeta {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        quartet: q.meta.clone(),
        w0: q.w0.clone(),
        w1: q.w1.clone(),
        blocks,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    fs::write(dir.join("payload.bin"), payload)?;
    Ok(())
}

pub fn read_quartet_bundle(dir: &Path) -> Result<OperatorQuartet> {
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    if meta.format != BUNDLE_FORMAT || meta.version != BUNDLE_VERSION {
        return Err(EvoError::Config(format!(
            "unsupported bundle {} v{}",
            meta.format, meta.version
        )));
    }
    let bytes = fs::read(dir.join("payload.bin"))?;
    if bytes.len() % 16 != 0 {
        return Err(EvoError::Config("payload length is not a multiple of 16".into()));
    }
    let vals: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let mut mats = Vec::new();
    for name in BLOCKS {
        let b = meta
            .blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| EvoError::Config(format!("bundle has no block {name}")))?;
        let end = b.offset + b.rows * b.cols;
        if end > vals.len() {
            return Err(EvoError::Config(format!("block {name} runs past the payload")));
        }
        mats.push(CMat::from_column_slice(b.rows, b.cols, &vals[b.offset..end]));
    }
    let [gmax, dmax, e_int_g, e_int_d]: [CMat; 4] = mats.try_into().unwrap();
    let (n0, n1) = (meta.w0.len(), meta.w1.len());
    let shapes = [
        ("gmax", &gmax, n1, n0),
        ("dmax", &dmax, n0, n1),
        ("e_int_g", &e_int_g, n0, e_int_g.ncols()),
        ("e_int_d", &e_int_d, n1, e_int_d.ncols()),
    ];
    for (name, m, r, c) in shapes {
        if m.nrows() != r || m.ncols() != c {
            return Err(EvoError::Dimension(format!(
                "{name} is {}x{}, weights imply {r}x{c}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    if meta.w0.iter().chain(&meta.w1).any(|w| !(*w > 0.0)) {
        return Err(EvoError::Config("quadrature weights must be positive".into()));
    }
    Ok(OperatorQuartet {
        gmax,
        dmax,
        e_int_g,
        e_int_d,
        w0: meta.w0,
        w1: meta.w1,
        meta: meta.quartet,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
