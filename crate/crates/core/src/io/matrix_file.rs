use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, RpcaError};
use crate::matrix::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"RPCAMAT1";
pub const DTYPE_F64_LE: u8 = 0x01;
/// Magic, dtype byte, two `u64` dimensions.
pub const HEADER_LEN: usize = 8 + 1 + 8 + 8;

/// Serializes `m` in the binary matrix format: `RPCAMAT1`, dtype `0x01`,
/// rows and cols as little-endian `u64`, then the entries row-major as
/// little-endian `f64`.
pub fn encode_matrix(m: &DenseMatrix) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F64_LE);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    let a = m.as_dmatrix();
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Parses the binary matrix format. `context` labels errors (usually the
/// file path).
pub fn decode_matrix(bytes: &[u8], context: &str) -> Result<DenseMatrix> {
    let fail = |offset: usize, msg: String| Err(RpcaError::format(context, Some(offset as u64), msg));
    if bytes.len() < HEADER_LEN {
        return fail(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        );
    }
    if &bytes[..8] != MAGIC {
        return fail(
            0,
            format!(
                "bad magic {:?}, expected \"RPCAMAT1\"",
                String::from_utf8_lossy(&bytes[..8])
            ),
        );
    }
    if bytes[8] != DTYPE_F64_LE {
        return fail(8, format!("unsupported dtype 0x{:02x}, expected 0x01", bytes[8]));
    }
    let (rows, cols) = (read_u64(bytes, 9), read_u64(bytes, 17));
    if rows == 0 || cols == 0 {
        return fail(9, format!("matrix dimensions must be positive, got {rows}x{cols}"));
    }
    let payload = bytes.len() - HEADER_LEN;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .filter(|&b| usize::try_from(b).is_ok());
    let Some(expected) = expected else {
        return fail(9, format!("dimensions {rows}x{cols} overflow the payload size"));
    };
    if expected as usize != payload {
        let kind = if (payload as u64) < expected {
            "truncated"
        } else {
            "oversized"
        };
        return fail(
            HEADER_LEN,
            format!("{kind} payload: expected {expected} bytes for {rows}x{cols}, found {payload}"),
        );
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if !x.is_finite() {
            return fail(
                HEADER_LEN + 8 * k,
                format!("non-finite entry at ({}, {})", k / cols, k % cols),
            );
        }
        m[(k / cols, k % cols)] = x;
    }
    DenseMatrix::from_dmatrix(m)
}

/// Parses a header-free CSV matrix: one row per line, comma-separated.
pub fn parse_csv_matrix(bytes: &[u8], context: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let offset = e.position().map(|p| p.byte());
            RpcaError::format(context, offset, e.to_string())
        })?;
        let pos = rec.position().expect("records from a reader carry a position");
        let (offset, line) = (pos.byte(), pos.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(RpcaError::format(
                    context,
                    Some(offset),
                    format!("line {line}: expected {c} fields, found {}", rec.len()),
                ))
            }
            Some(_) => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                RpcaError::format(
                    context,
                    Some(offset),
                    format!("line {line}, field {}: '{field}' is not a number", j + 1),
                )
            })?;
            if !x.is_finite() {
                return Err(RpcaError::format(
                    context,
                    Some(offset),
                    format!("line {line}, field {}: non-finite value", j + 1),
                ));
            }
            data.push(x);
        }
        rows += 1;
    }
    let Some(cols) = cols else {
        return Err(RpcaError::format(context, Some(0), "no data rows"));
    };
    DenseMatrix::from_row_major(rows, cols, data)
}

/// Formats `m` as CSV. Values use the shortest representation that parses
/// back to the same `f64`.
pub fn encode_csv_matrix(m: &DenseMatrix) -> String {
    let a = m.as_dmatrix();
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = a.row(i).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a matrix file; paths ending in `.csv` are parsed as CSV.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = std::fs::read(path).map_err(|e| RpcaError::io(path, e))?;
    let ctx = path.display().to_string();
    if is_csv(path) {
        parse_csv_matrix(&bytes, &ctx)
    } else {
        decode_matrix(&bytes, &ctx)
    }
}

/// Writes a matrix file; paths ending in `.csv` are written as CSV.
pub fn write_matrix(m: &DenseMatrix, path: &Path) -> Result<()> {
    let bytes = if is_csv(path) {
        encode_csv_matrix(m).into_bytes()
    } else {
        encode_matrix(m)
    };
    std::fs::write(path, bytes).map_err(|e| RpcaError::io(path, e))
}
