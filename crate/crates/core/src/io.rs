//! Binary containers: the `PNPD` dataset file and the `PNPW` named-tensor
//! file used for denoiser weights and LMMSE filter caches. All integers and
//! floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::channel_model::{ChannelMatrix, Sample, SampleSet, C64};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"PNPD";
pub const TENSOR_MAGIC: &[u8; 4] = b"PNPW";
pub const FORMAT_VERSION: u32 = 1;

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; 4 * n];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s(w: &mut impl Write, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * data.len());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::format(what, format!("bad magic {m:?}")));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(what, format!("unsupported version {version}")));
    }
    Ok(())
}

fn u32_of(v: usize, what: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(what, format!("{v} does not fit in u32")))
}

fn write_matrix(w: &mut impl Write, m: &Array2<C64>) -> Result<()> {
    let mut buf = Vec::with_capacity(2 * m.len());
    for v in m.iter() {
        buf.push(v.re as f32);
        buf.push(v.im as f32);
    }
    write_f32s(w, &buf)
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<C64>> {
    let raw = read_f32s(r, 2 * rows * cols)?;
    let data: Vec<C64> = raw
        .chunks_exact(2)
        .map(|c| C64::new(c[0] as f64, c[1] as f64))
        .collect();
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::format("dataset", e.to_string()))
}

/// Write one sample set. Values are stored as `f32`.
pub fn write_sample_set(w: &mut impl Write, set: &SampleSet) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [set.n_s, set.n_t, set.crop_rows, set.samples.len()] {
        w.write_all(&u32_of(v, "dataset")?.to_le_bytes())?;
    }
    for s in &set.samples {
        write_matrix(w, s.clean.values())?;
        w.write_all(&(s.sigma2 as f32).to_le_bytes())?;
        write_matrix(w, s.noisy.values())?;
    }
    Ok(())
}

/// Read a sample set; angular-delay forms are recomputed from the stored
/// spatial-frequency matrices.
pub fn read_sample_set(r: &mut impl Read) -> Result<SampleSet> {
    check_magic(r, DATASET_MAGIC, "dataset")?;
    let n_s = read_u32(r)? as usize;
    let n_t = read_u32(r)? as usize;
    let crop_rows = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    if n_s == 0 || n_t == 0 || crop_rows == 0 || crop_rows > n_s {
        return Err(Error::format(
            "dataset",
            format!("bad header N_s={n_s} N_t={n_t} crop={crop_rows}"),
        ));
    }
    let mut set = SampleSet {
        n_s,
        n_t,
        crop_rows,
        samples: Vec::with_capacity(count),
    };
    let transform = set.transform()?;
    for _ in 0..count {
        let clean = ChannelMatrix::new(read_matrix(r, n_s, n_t)?)?;
        let sigma2 = read_f32(r)? as f64;
        let noisy = ChannelMatrix::new(read_matrix(r, n_s, n_t)?)?;
        set.samples
            .push(Sample::from_parts(clean, noisy, sigma2, &transform)?);
    }
    Ok(set)
}

pub fn save_sample_set(path: &Path, set: &SampleSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sample_set(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn load_sample_set(path: &Path) -> Result<SampleSet> {
    read_sample_set(&mut BufReader::new(File::open(path)?))
}

/// The three split files written for a dataset base path `data.pnpd`:
/// `data.train.pnpd`, `data.val.pnpd`, `data.test.pnpd`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    pub fn from_base(base: &Path) -> Self {
        let stem = base
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into());
        let ext = base
            .extension()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pnpd".into());
        let with = |split: &str| base.with_file_name(format!("{stem}.{split}.{ext}"));
        Self {
            train: with("train"),
            val: with("val"),
            test: with("test"),
        }
    }
}

/// One named real tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            dims,
            data,
        };
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::dim(format!(
                "tensor '{}' dims {:?} do not match {} values",
                t.name,
                t.dims,
                t.data.len()
            )));
        }
        Ok(t)
    }
}

pub fn write_tensors(w: &mut impl Write, tensors: &[NamedTensor]) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&u32_of(tensors.len(), "tensor file")?.to_le_bytes())?;
    for t in tensors {
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::format("tensor file", "tensor name longer than 65535 bytes"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        let ndim = u8::try_from(t.dims.len())
            .map_err(|_| Error::format("tensor file", "more than 255 dimensions"))?;
        w.write_all(&[ndim])?;
        for &d in &t.dims {
            w.write_all(&u32_of(d, "tensor file")?.to_le_bytes())?;
        }
        write_f32s(w, &t.data)?;
    }
    Ok(())
}

pub fn read_tensors(r: &mut impl Read) -> Result<Vec<NamedTensor>> {
    check_magic(r, TENSOR_MAGIC, "tensor file")?;
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u16(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::format("tensor file", e.to_string()))?;
        let ndim = read_u8(r)? as usize;
        let dims = (0..ndim)
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims.iter().product();
        let data = read_f32s(r, n)?;
        out.push(NamedTensor::new(name, dims, data)?);
    }
    Ok(out)
}

pub fn save_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensors(&mut w, tensors)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    read_tensors(&mut BufReader::new(File::open(path)?))
}
