//! NPY v1.0 reader and writer for 2-d little-endian float arrays.
//!
//! Layout: magic `\x93NUMPY`, version bytes, little-endian u16 header
//! length, then an ASCII dict literal with keys `descr`, `fortran_order`,
//! `shape`, space-padded so the payload starts on a 64-byte boundary. The
//! writer replicates numpy's canonical layout byte for byte, so
//! save(load(f)) equals the canonical re-encoding of f.

use std::fs;
use std::path::Path;

use projlens_core::{DenseMatrix, Dtype};

use crate::error::{io_err, CliError, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Loads a 2-d `<f4`/`<f8` NPY file. Fortran-order files are converted to
/// row-major; every element must be finite.
pub fn load_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_npy(&bytes, path)
}

/// Writes the matrix in canonical NPY v1.0 form, precision per its dtype.
pub fn save_matrix(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_npy(m)).map_err(io_err(path))
}

/// Canonical NPY bytes for a matrix.
pub fn encode_npy(m: &DenseMatrix) -> Vec<u8> {
    let descr = match m.dtype() {
        Dtype::F32 => "<f4",
        Dtype::F64 => "<f8",
    };
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        descr,
        m.rows(),
        m.cols()
    );
    let mut header = dict.into_bytes();
    // Pad with spaces, newline-terminated, so magic+version+len+header is a
    // multiple of 64.
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    header.extend(std::iter::repeat_n(b' ', padding));
    header.push(b'\n');

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + m.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(&header);
    match m.dtype() {
        Dtype::F32 => {
            for &v in m.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

fn parse_npy(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(CliError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if major != 1 || minor != 0 {
        return Err(CliError::UnsupportedVersion {
            path: path.to_path_buf(),
            major,
            minor,
        });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes.len() < 10 + header_len {
        return Err(CliError::MalformedHeader {
            path: path.to_path_buf(),
            what: "header truncated".into(),
        });
    }
    let header = std::str::from_utf8(&bytes[10..10 + header_len]).map_err(|_| {
        CliError::MalformedHeader {
            path: path.to_path_buf(),
            what: "header not ASCII".into(),
        }
    })?;

    let descr = dict_value(header, "descr", path)?;
    let descr = descr.trim_matches(['\'', '"']);
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => {
            return Err(CliError::UnsupportedDtype {
                path: path.to_path_buf(),
                descr: other.to_string(),
            })
        }
    };
    let fortran = match dict_value(header, "fortran_order", path)? {
        "True" => true,
        "False" => false,
        other => {
            return Err(CliError::MalformedHeader {
                path: path.to_path_buf(),
                what: format!("fortran_order is {other:?}"),
            })
        }
    };
    let shape_str = dict_value(header, "shape", path)?;
    let dims = parse_shape(shape_str, path)?;
    if dims.len() != 2 {
        return Err(CliError::NotTwoDimensional {
            path: path.to_path_buf(),
            ndim: dims.len(),
        });
    }
    let (rows, cols) = (dims[0], dims[1]);

    let item = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let payload = &bytes[10 + header_len..];
    let expected = rows * cols * item;
    if payload.len() != expected {
        return Err(CliError::PayloadMismatch {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }

    let mut data = vec![0.0f64; rows * cols];
    let read_at = |flat: usize| -> f64 {
        let off = flat * item;
        match dtype {
            Dtype::F32 => f32::from_le_bytes([
                payload[off],
                payload[off + 1],
                payload[off + 2],
                payload[off + 3],
            ]) as f64,
            Dtype::F64 => f64::from_le_bytes([
                payload[off],
                payload[off + 1],
                payload[off + 2],
                payload[off + 3],
                payload[off + 4],
                payload[off + 5],
                payload[off + 6],
                payload[off + 7],
            ]),
        }
    };
    for i in 0..rows {
        for j in 0..cols {
            let flat = if fortran { j * rows + i } else { i * cols + j };
            data[i * cols + j] = read_at(flat);
        }
    }
    let m = DenseMatrix::new(rows, cols, data)?.with_dtype(dtype);
    m.check_finite()?;
    Ok(m)
}

/// Extracts the raw value substring for `key` in the header dict.
fn dict_value<'a>(header: &'a str, key: &str, path: &Path) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let at = header.find(&pat).ok_or_else(|| CliError::MalformedHeader {
        path: path.to_path_buf(),
        what: format!("missing key {key:?}"),
    })?;
    let rest = header[at + pat.len()..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|e| e + 1)
    } else {
        rest.find([',', '}']).or(Some(rest.len()))
    }
    .ok_or_else(|| CliError::MalformedHeader {
        path: path.to_path_buf(),
        what: format!("unterminated value for {key:?}"),
    })?;
    Ok(rest[..end].trim())
}

fn parse_shape(s: &str, path: &Path) -> Result<Vec<usize>> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let mut dims = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        dims.push(
            part.parse::<usize>()
                .map_err(|_| CliError::MalformedHeader {
                    path: path.to_path_buf(),
                    what: format!("bad shape component {part:?}"),
                })?,
        );
    }
    Ok(dims)
}
