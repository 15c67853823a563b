//! Reading and writing dense real tensors in the numpy `.npy` v1.0 format.
//!
//! Only C-order float arrays are supported (`f4` or `f8`, either byte order on
//! read; little-endian on write). Values are always held as `f64` in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// On-disk element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F4,
    #[default]
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

/// A dense row-major tensor of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    dtype: Dtype,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            dtype: Dtype::F8,
        })
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Tensor::new(
            vec![rows.len(), cols],
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    /// Number of leading-axis entries (1 for a scalar).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of all trailing axes: the flattened row width.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    fn first_nonfinite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

/// Options for [`read_tensor`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub allow_nonfinite: bool,
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor_with(path, ReadOptions::default())
}

pub fn read_tensor_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    read_npy(&mut reader, opts)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_npy(t, &mut writer).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Decodes an npy stream.
pub fn read_npy<R: Read>(reader: &mut R, opts: ReadOptions) -> Result<Tensor> {
    let mut preamble = [0u8; 8];
    reader
        .read_exact(&mut preamble)
        .map_err(|_| Error::MalformedNpy("truncated preamble".into()))?;
    if &preamble[..6] != MAGIC {
        return Err(Error::MalformedNpy("bad magic".into()));
    }
    let header_len = match preamble[6] {
        1 => {
            let mut b = [0u8; 2];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::MalformedNpy("truncated header length".into()))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::MalformedNpy("truncated header length".into()))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::MalformedNpy(format!("unsupported version {v}"))),
    };
    let mut header = vec![0u8; header_len];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::MalformedNpy("truncated header".into()))?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::MalformedNpy("header is not text".into()))?;
    let dict = parse_header(header)?;

    let (width, big_endian) = match dict.descr.as_str() {
        "<f4" => (4, false),
        "<f8" => (8, false),
        ">f4" => (4, true),
        ">f8" => (8, true),
        other => return Err(Error::UnsupportedDtype(other.to_string())),
    };
    if dict.fortran_order {
        return Err(Error::MalformedNpy("fortran order not supported".into()));
    }

    let len: usize = dict.shape.iter().product();
    let mut raw = vec![0u8; len * width];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::MalformedNpy(format!("payload shorter than {len} elements")))?;
    let data: Vec<f64> = raw
        .chunks_exact(width)
        .map(|c| match (width, big_endian) {
            (4, false) => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            (4, true) => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            (_, false) => f64::from_le_bytes(c.try_into().unwrap()),
            (_, true) => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();

    let dtype = if width == 4 { Dtype::F4 } else { Dtype::F8 };
    let t = Tensor::new(dict.shape, data)?.with_dtype(dtype);
    if !opts.allow_nonfinite {
        if let Some(index) = t.first_nonfinite() {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(t)
}

/// Encodes a tensor as npy v1.0. Non-finite data is rejected.
pub fn write_npy<W: Write>(t: &Tensor, writer: &mut W) -> Result<()> {
    if let Some(index) = t.first_nonfinite() {
        return Err(Error::NonFinite { index });
    }
    let shape = match t.shape.len() {
        1 => format!("({},)", t.shape[0]),
        _ => format!(
            "({})",
            t.shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        t.dtype.descr(),
        shape
    );
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::MalformedNpy("header too long for v1.0".into()))?;

    let io = |e| Error::io("<stream>", e);
    writer.write_all(MAGIC).map_err(io)?;
    writer.write_all(&[1, 0]).map_err(io)?;
    writer.write_all(&header_len.to_le_bytes()).map_err(io)?;
    writer.write_all(header.as_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(t.data.len() * t.dtype.width());
    for &v in &t.data {
        match t.dtype {
            Dtype::F4 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F8 => buf.extend_from_slice(&v.to_le_bytes()),
        }
    }
    writer.write_all(&buf).map_err(io)
}

#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses the python-literal dict header, e.g.
/// `{'descr': '<f8', 'fortran_order': False, 'shape': (3, 4), }`.
fn parse_header(header: &str) -> Result<HeaderDict> {
    let bad = |msg: &str| Error::MalformedNpy(format!("{msg} in header {header:?}"));
    let body = header
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| bad("missing braces"))?;

    let value_after = |key: &str| -> Result<&str> {
        let pat_single = format!("'{key}'");
        let pat_double = format!("\"{key}\"");
        let at = body
            .find(&pat_single)
            .map(|i| i + pat_single.len())
            .or_else(|| body.find(&pat_double).map(|i| i + pat_double.len()))
            .ok_or_else(|| bad(&format!("missing key '{key}'")))?;
        let rest = body[at..].trim_start();
        rest.strip_prefix(':')
            .map(str::trim_start)
            .ok_or_else(|| bad("missing ':'"))
    };

    let descr_raw = value_after("descr")?;
    let quote = descr_raw.chars().next().ok_or_else(|| bad("empty descr"))?;
    if quote != '\'' && quote != '"' {
        return Err(bad("descr is not a string"));
    }
    let end = descr_raw[1..]
        .find(quote)
        .ok_or_else(|| bad("unterminated descr"))?;
    let descr = descr_raw[1..1 + end].to_string();

    let fo = value_after("fortran_order")?;
    let fortran_order = if fo.starts_with("False") {
        false
    } else if fo.starts_with("True") {
        true
    } else {
        return Err(bad("fortran_order is not a bool"));
    };

    let sh = value_after("shape")?;
    let sh = sh
        .strip_prefix('(')
        .ok_or_else(|| bad("shape is not a tuple"))?;
    let close = sh.find(')').ok_or_else(|| bad("unterminated shape"))?;
    let shape = sh[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| bad("non-integer dimension"))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(HeaderDict {
        descr,
        fortran_order,
        shape,
    })
}
