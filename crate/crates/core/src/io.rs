//! Readers and writers for embedding sequences and projection matrices.
//!
//! Binary layout (all integers `u32` little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic: "ESEQ" (sequence) or "PROJ" (projection)
//! 4       4     version, currently 1
//! 8       4     n (tokens) / out_dim (rows)
//! 12      4     d (channels) / in_dim (columns)
//! 16      4     reserved, must be 0
//! 20      4*n*d payload, f32 little-endian; token-major / row-major
//! ```
//!
//! JSON sequences use `{"n": <int>, "d": <int>, "data": [[...], ...]}` with one
//! inner array per token. JSON values are rounded to single precision on load so
//! a JSON file and its binary twin yield the same in-memory values.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::{Embedding, ProjectionMatrix};
use crate::spectral::EmbeddingSequence;

pub const SEQUENCE_MAGIC: [u8; 4] = *b"ESEQ";
pub const PROJECTION_MAGIC: [u8; 4] = *b"PROJ";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

struct Header {
    rows: usize,
    cols: usize,
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

fn parse_header(bytes: &[u8], magic: [u8; 4]) -> Result<Header> {
    let label = String::from_utf8_lossy(&magic).into_owned();
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!("{} bytes, too short for the {label} magic", bytes.len())));
    }
    if bytes[..4] != magic {
        return Err(Error::BadMagic { expected: label, found: String::from_utf8_lossy(&bytes[..4]).into_owned() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let rows = read_u32(bytes, 8) as usize;
    let cols = read_u32(bytes, 12) as usize;
    let reserved = read_u32(bytes, 16);
    if reserved != 0 {
        return Err(Error::Schema { path: "header.reserved".into(), message: format!("expected 0, found {reserved}") });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyDimension(format!("{label} header declares {rows} x {cols}")));
    }
    let want = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Schema { path: "header".into(), message: format!("{rows} x {cols} overflows") })?;
    let have = bytes.len() - HEADER_LEN;
    if have < want {
        return Err(Error::Truncated(format!(
            "header declares {rows} x {cols} = {} values, payload holds {}",
            rows * cols,
            have / 4
        )));
    }
    if have > want {
        return Err(Error::TrailingBytes(format!("{} bytes after the declared payload", have - want)));
    }
    Ok(Header { rows, cols })
}

fn payload<T: Scalar>(bytes: &[u8], header: &Header, row_label: &str, col_label: &str) -> Result<Vec<T>> {
    bytes[HEADER_LEN..]
        .chunks_exact(4)
        .enumerate()
        .map(|(k, c)| {
            let v = f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("{row_label} {}, {col_label} {}", k / header.cols, k % header.cols),
                });
            }
            Ok(T::from_single(v))
        })
        .collect()
}

fn encode(magic: [u8; 4], rows: usize, cols: usize, values: &[impl Scalar]) -> Result<Vec<u8>> {
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Shape(format!("{what} = {v} does not fit the u32 header field")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&dim(cols, "cols")?.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for (k, v) in values.iter().enumerate() {
        let single = v.to_single();
        if !single.is_finite() {
            return Err(Error::NonFinite { location: format!("value {k} overflows single precision") });
        }
        out.extend_from_slice(&single.to_le_bytes());
    }
    Ok(out)
}

pub fn read_sequence<T: Scalar>(bytes: &[u8]) -> Result<EmbeddingSequence<T>> {
    let header = parse_header(bytes, SEQUENCE_MAGIC)?;
    let data = payload(bytes, &header, "token", "channel")?;
    EmbeddingSequence::new(header.rows, header.cols, data)
}

pub fn write_sequence<T: Scalar>(seq: &EmbeddingSequence<T>) -> Result<Vec<u8>> {
    encode(SEQUENCE_MAGIC, seq.n(), seq.d(), seq.data())
}

pub fn read_projection<T: Scalar>(bytes: &[u8]) -> Result<ProjectionMatrix<T>> {
    let header = parse_header(bytes, PROJECTION_MAGIC)?;
    let data = payload(bytes, &header, "row", "column")?;
    ProjectionMatrix::new(header.rows, header.cols, data)
}

pub fn write_projection<T: Scalar>(proj: &ProjectionMatrix<T>) -> Result<Vec<u8>> {
    encode(PROJECTION_MAGIC, proj.out_dim(), proj.in_dim(), proj.data())
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn positive_field(obj: &serde_json::Map<String, Value>, key: &str) -> Result<usize> {
    let path = format!("$.{key}");
    let v = obj.get(key).ok_or_else(|| schema(&path, "missing field"))?;
    let n = v.as_u64().ok_or_else(|| schema(&path, "expected a non-negative integer"))?;
    if n == 0 {
        return Err(Error::EmptyDimension(format!("{path} must be >= 1")));
    }
    usize::try_from(n).map_err(|_| schema(&path, "too large"))
}

pub fn read_sequence_json<T: Scalar>(text: &str) -> Result<EmbeddingSequence<T>> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    let n = positive_field(obj, "n")?;
    let d = positive_field(obj, "d")?;
    let rows = obj
        .get("data")
        .ok_or_else(|| schema("$.data", "missing field"))?
        .as_array()
        .ok_or_else(|| schema("$.data", "expected an array of token rows"))?;
    if rows.len() != n {
        return Err(schema("$.data", format!("expected {n} rows, found {}", rows.len())));
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| schema(format!("$.data[{i}]"), "expected an array"))?;
        if row.len() != d {
            return Err(schema(format!("$.data[{i}]"), format!("row {i} has {} values, expected d = {d}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            let x = v.as_f64().ok_or_else(|| schema(format!("$.data[{i}][{j}]"), "expected a number"))?;
            let single = x as f32;
            if !single.is_finite() {
                return Err(Error::NonFinite { location: format!("$.data[{i}][{j}] overflows single precision") });
            }
            data.push(T::from_single(single));
        }
    }
    EmbeddingSequence::new(n, d, data)
}

pub fn write_sequence_json<T: Scalar>(seq: &EmbeddingSequence<T>) -> Result<String> {
    let mut rows = Vec::with_capacity(seq.n());
    for (i, token) in seq.tokens().enumerate() {
        let mut row = Vec::with_capacity(seq.d());
        for (j, v) in token.iter().enumerate() {
            let single = v.to_single();
            if !single.is_finite() {
                return Err(Error::NonFinite {
                    location: format!("token {i}, channel {j} overflows single precision"),
                });
            }
            row.push(single);
        }
        rows.push(row);
    }
    let doc = serde_json::json!({ "n": seq.n(), "d": seq.d(), "data": rows });
    Ok(serde_json::to_string(&doc).expect("JSON values are finite"))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Loads a sequence, choosing JSON for `.json` paths and the binary format otherwise.
pub fn load_sequence<T: Scalar>(path: &Path) -> Result<EmbeddingSequence<T>> {
    let bytes = read_bytes(path)?;
    if is_json(path) {
        let text = std::str::from_utf8(&bytes).map_err(|e| schema("$", format!("not UTF-8: {e}")))?;
        read_sequence_json(text)
    } else {
        read_sequence(&bytes)
    }
}

pub fn save_sequence<T: Scalar>(path: &Path, seq: &EmbeddingSequence<T>) -> Result<()> {
    let bytes = if is_json(path) { write_sequence_json(seq)?.into_bytes() } else { write_sequence(seq)? };
    write_atomically(path, &bytes)
}

/// Loads a single embedding stored as a one-token sequence.
pub fn load_embedding<T: Scalar>(path: &Path) -> Result<Embedding<T>> {
    let seq = load_sequence::<T>(path)?;
    if seq.n() != 1 {
        return Err(Error::Shape(format!(
            "{} holds {} tokens; an embedding file must hold exactly 1",
            path.display(),
            seq.n()
        )));
    }
    Embedding::new(seq.into_data())
}

pub fn embedding_to_sequence<T: Scalar>(emb: &Embedding<T>) -> Result<EmbeddingSequence<T>> {
    EmbeddingSequence::new(1, emb.dim(), emb.values().to_vec())
}

/// Loads a projection and returns it with the SHA-256 hex digest of the file bytes.
pub fn load_projection<T: Scalar>(path: &Path) -> Result<(ProjectionMatrix<T>, String)> {
    use sha2::{Digest, Sha256};
    let bytes = read_bytes(path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    Ok((read_projection(&bytes)?, digest))
}

/// Writes through a sibling temporary file so a failed run never leaves a partial output.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.partial"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(format!("renaming into {}", path.display()), e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: &[u8; 4], version: u32, rows: u32, cols: u32, reserved: u32) -> Vec<u8> {
        [magic.as_slice(), &version.to_le_bytes(), &rows.to_le_bytes(), &cols.to_le_bytes(), &reserved.to_le_bytes()]
            .concat()
    }

    #[test]
    fn minimal_file_by_hand() {
        let mut bytes = header(b"ESEQ", 1, 1, 1, 0);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
        let seq = read_sequence::<f64>(&bytes).unwrap();
        assert_eq!((seq.n(), seq.d(), seq.data()), (1, 1, [1.0].as_slice()));
        assert_eq!(write_sequence(&seq).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = header(b"ESEQ", 1, 2, 3, 0);
        for k in 0..5 {
            bytes.extend_from_slice(&(k as f32).to_le_bytes());
        }
        assert!(matches!(read_sequence::<f32>(&bytes), Err(Error::Truncated(_))));
        assert!(matches!(read_sequence::<f32>(&bytes[..10]), Err(Error::Truncated(_))));
        assert!(matches!(read_sequence::<f32>(b"ES"), Err(Error::Truncated(_))));
    }

    #[test]
    fn distinct_error_classes() {
        let mut ok = header(b"ESEQ", 1, 1, 2, 0);
        ok.extend_from_slice(&[0u8; 8]);
        let mut bad_magic = ok.clone();
        bad_magic[..4].copy_from_slice(b"ESEX");
        assert!(matches!(read_sequence::<f32>(&bad_magic), Err(Error::BadMagic { .. })));
        let mut bad_version = ok.clone();
        bad_version[4] = 7;
        assert!(matches!(read_sequence::<f32>(&bad_version), Err(Error::UnsupportedVersion(7))));
        let mut zero = header(b"ESEQ", 1, 0, 2, 0);
        zero.extend_from_slice(&[0u8; 8]);
        assert!(matches!(read_sequence::<f32>(&zero), Err(Error::EmptyDimension(_))));
        let mut nan = ok.clone();
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_sequence::<f32>(&nan), Err(Error::NonFinite { .. })));
        let mut trailing = ok.clone();
        trailing.push(0);
        assert!(matches!(read_sequence::<f32>(&trailing), Err(Error::TrailingBytes(_))));
        let mut reserved = ok;
        reserved[16] = 1;
        assert!(matches!(read_sequence::<f32>(&reserved), Err(Error::Schema { .. })));
    }

    #[test]
    fn projection_identity_and_bad_magic() {
        let mut bytes = header(b"PROJ", 1, 2, 2, 0);
        for v in [1.0f32, 0.0, 0.0, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let p = read_projection::<f64>(&bytes).unwrap();
        assert_eq!(p.row(0), &[1.0, 0.0]);
        assert_eq!(p.row(1), &[0.0, 1.0]);
        bytes[..4].copy_from_slice(b"PRJX");
        assert!(matches!(read_projection::<f64>(&bytes), Err(Error::BadMagic { .. })));
        // a sequence file is not a projection
        let seq = write_sequence(&EmbeddingSequence::new(1, 1, vec![1.0f32]).unwrap()).unwrap();
        assert!(matches!(read_projection::<f32>(&seq), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn json_matches_binary_twin() {
        let seq = EmbeddingSequence::new(3, 1, vec![1.0f32, 0.0, 0.0]).unwrap();
        let from_json = read_sequence_json::<f64>(r#"{"n":3,"d":1,"data":[[1.0],[0.0],[0.0]]}"#).unwrap();
        let from_bin = read_sequence::<f64>(&write_sequence(&seq).unwrap()).unwrap();
        assert_eq!(from_json, from_bin);
        let tenth = read_sequence_json::<f64>(r#"{"n":1,"d":1,"data":[[0.1]]}"#).unwrap();
        assert_eq!(tenth.data()[0], 0.1f32 as f64);
    }

    #[test]
    fn json_schema_errors_carry_paths() {
        let path_of = |text: &str| match read_sequence_json::<f32>(text) {
            Err(Error::Schema { path, .. }) => path,
            other => panic!("expected schema error for {text}, got {other:?}"),
        };
        assert_eq!(path_of(r#"{"n":2,"d":2,"data":[[1,2],[3]]}"#), "$.data[1]");
        assert_eq!(path_of(r#"{"n":2,"d":2,"data":[[1,2]]}"#), "$.data");
        assert_eq!(path_of(r#"{"n":1,"d":2,"data":[[1,"x"]]}"#), "$.data[0][1]");
        assert_eq!(path_of(r#"{"d":2,"data":[]}"#), "$.n");
        assert_eq!(path_of(r#"{"n":-1,"d":2,"data":[]}"#), "$.n");
        assert_eq!(path_of("[1,2]"), "$");
        assert_eq!(path_of("{not json"), "$");
        assert!(matches!(read_sequence_json::<f32>(r#"{"n":0,"d":2,"data":[]}"#), Err(Error::EmptyDimension(_))));
        assert!(matches!(read_sequence_json::<f32>(r#"{"n":1,"d":1,"data":[[1e300]]}"#), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn writers_reject_values_outside_single_precision() {
        let seq = EmbeddingSequence::new(1, 1, vec![1e300f64]).unwrap();
        assert!(matches!(write_sequence(&seq), Err(Error::NonFinite { .. })));
        assert!(matches!(write_sequence_json(&seq), Err(Error::NonFinite { .. })));
    }
}
