//! EMB1 binary and CSV readers/writers.
//!
//! EMB1 layout (little-endian):
//! - bytes 0..4   magic `EMB1`
//! - bytes 4..8   u32 version (1)
//! - bytes 8..16  u64 n
//! - bytes 16..20 u32 d
//! - byte  20     u8 modality (0 unknown, 1 vision, 2 language)
//! - bytes 21..25 reserved, zero
//! - payload      n*d f32, row-major

use std::fmt::Write as _;
use std::path::Path;

use super::{EmbeddingSet, Modality};
use crate::error::{Error, Result};

pub const EMB1_HEADER_LEN: usize = 25;
const EMB1_MAGIC: &[u8; 4] = b"EMB1";
const EMB1_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Emb1,
    Csv,
}

impl Format {
    /// `.csv` selects CSV, anything else EMB1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Emb1,
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Emb1 => decode_emb1(&bytes),
        Format::Csv => {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            decode_csv(text)
        }
    }
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Emb1 => encode_emb1(set),
        Format::Csv => encode_csv(set).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_emb1(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB1_HEADER_LEN + set.as_slice().len() * 4);
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.n() as u64).to_le_bytes());
    out.extend_from_slice(&(set.d() as u32).to_le_bytes());
    out.push(set.modality().tag());
    out.extend_from_slice(&[0u8; 4]);
    for v in set.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < 4 || &bytes[..4] != EMB1_MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::BadMagic { expected: "EMB1".into(), found });
    }
    if bytes.len() < EMB1_HEADER_LEN {
        return Err(Error::TruncatedFile { expected: EMB1_HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMB1_VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u64::from(u32::from_le_bytes(bytes[16..20].try_into().unwrap()));
    if n == 0 || d == 0 {
        return Err(Error::DimensionZero { n, d });
    }
    let modality = Modality::from_tag(bytes[20]).ok_or(Error::BadModality(bytes[20]))?;
    if bytes[21..25].iter().any(|&b| b != 0) {
        return Err(Error::ReservedNonZero);
    }

    let payload = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::TooLarge(format!("n={n}, d={d} overflows the payload size")))?;
    let expected = EMB1_HEADER_LEN as u64 + payload;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::TruncatedFile { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { offset: expected, extra: found - expected });
    }

    let d = d as usize;
    let mut data = Vec::with_capacity(payload as usize / 4);
    for (k, chunk) in bytes[EMB1_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row: k / d, col: k % d, offset: (EMB1_HEADER_LEN + 4 * k) as u64 });
        }
        data.push(v);
    }
    EmbeddingSet::new(d, modality, data)
}

fn encode_csv(set: &EmbeddingSet) -> String {
    let mut out = String::new();
    for row in set.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // Display for f32 is the shortest string that round-trips.
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn decode_csv(text: &str) -> Result<EmbeddingSet> {
    let mut data = Vec::new();
    let mut d = 0usize;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for field in line.split(',') {
            let v: f32 =
                field.trim().parse().map_err(|_| Error::Parse { line: lineno + 1, message: format!("not a number: {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: rows, col: data.len() - start, offset: lineno as u64 + 1 });
            }
            data.push(v);
        }
        let width = data.len() - start;
        if rows == 0 {
            d = width;
        } else if width != d {
            return Err(Error::Parse { line: lineno + 1, message: format!("expected {d} fields, found {width}") });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::DimensionZero { n: 0, d: 0 });
    }
    EmbeddingSet::new(d, Modality::Unknown, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_rows() -> EmbeddingSet {
        EmbeddingSet::from_rows(Modality::Vision, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_emb1(&identity_rows());
        assert_eq!(bytes.len(), 25 + 24);
        assert_eq!(&bytes[0..4], b"EMB1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(bytes[20], 1);
        assert_eq!(&bytes[21..25], &[0, 0, 0, 0]);
        assert_eq!(&bytes[25..29], &1.0f32.to_le_bytes());
    }

    #[test]
    fn minimal_instance_is_29_bytes() {
        let one = EmbeddingSet::new(1, Modality::Unknown, vec![1.0]).unwrap();
        assert_eq!(encode_emb1(&one).len(), 29);
    }

    #[test]
    fn decode_identity() {
        let set = decode_emb1(&encode_emb1(&identity_rows())).unwrap();
        assert_eq!((set.n(), set.d()), (2, 3));
        assert_eq!(set.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(set.modality(), Modality::Vision);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_emb1(&identity_rows());
        bytes[0] = b'X';
        assert!(matches!(decode_emb1(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_header_and_payload() {
        let bytes = encode_emb1(&identity_rows());
        assert!(matches!(decode_emb1(&bytes[..10]), Err(Error::TruncatedFile { .. })));
        assert!(matches!(decode_emb1(&bytes[..bytes.len() - 1]), Err(Error::TruncatedFile { expected: 49, found: 48 })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_emb1(&identity_rows());
        bytes.push(0);
        assert!(matches!(decode_emb1(&bytes), Err(Error::TrailingBytes { offset: 49, extra: 1 })));
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut bytes = encode_emb1(&identity_rows());
        bytes[16..20].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_emb1(&bytes), Err(Error::DimensionZero { d: 0, .. })));
    }

    #[test]
    fn non_finite_payload_names_offset() {
        let mut bytes = encode_emb1(&identity_rows());
        bytes[25 + 16..25 + 20].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(decode_emb1(&bytes), Err(Error::NonFiniteValue { row: 1, col: 1, offset: 41 })));
    }

    #[test]
    fn reserved_bytes_must_be_zero() {
        let mut bytes = encode_emb1(&identity_rows());
        bytes[23] = 7;
        assert!(matches!(decode_emb1(&bytes), Err(Error::ReservedNonZero)));
    }

    #[test]
    fn csv_identity() {
        let set = decode_csv("1.0,0.0\n0.0,1.0").unwrap();
        assert_eq!((set.n(), set.d()), (2, 2));
        assert_eq!(set.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_ragged_rows() {
        assert!(matches!(decode_csv("1,2\n3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let set = EmbeddingSet::new(2, Modality::Unknown, vec![0.1, -1.0e-30, 3.4028235e38, 0.3]).unwrap();
        assert_eq!(decode_csv(&encode_csv(&set)).unwrap().as_slice(), set.as_slice());
    }
}
