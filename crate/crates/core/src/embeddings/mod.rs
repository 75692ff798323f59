//! Embedding matrices for one modality and aligned image/text pairs.
//!
//! Values are stored as binary32, row-major. All downstream arithmetic
//! widens to binary64 before accumulating.

mod io;

pub use io::{decode_emb1, encode_emb1, load_embeddings, save_embeddings, Format, EMB1_HEADER_LEN};

use crate::error::{Error, Result};

/// Rows whose binary64 norm is within this distance of 1 are treated as
/// already normalized and left bit-identical by [`normalize_rows`].
const UNIT_NORM_SLACK: f64 = 2.384_185_791_015_625e-7; // 2^-22

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Unknown,
    Vision,
    Language,
}

impl Modality {
    pub fn tag(self) -> u8 {
        match self {
            Modality::Unknown => 0,
            Modality::Vision => 1,
            Modality::Language => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Modality::Unknown),
            1 => Some(Modality::Vision),
            2 => Some(Modality::Language),
            _ => None,
        }
    }
}

/// An `n x d` matrix of feature vectors for a single modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    modality: Modality,
    data: Vec<f32>,
}

impl EmbeddingSet {
    /// Builds a set from row-major data. Fails on empty shapes, ragged data or
    /// non-finite entries.
    pub fn new(d: usize, modality: Modality, data: Vec<f32>) -> Result<Self> {
        if d == 0 || data.is_empty() {
            return Err(Error::DimensionZero { n: (data.len() / d.max(1)) as u64, d: d as u64 });
        }
        if data.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not fill rows of width {d}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { row: pos / d, col: pos % d, offset: (pos * 4) as u64 });
        }
        Ok(EmbeddingSet { n: data.len() / d, d, modality, data })
    }

    pub fn from_rows(modality: Modality, rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("rows of unequal length".into()));
        }
        Self::new(d, modality, rows.concat())
    }

    /// Convenience for tests and synthetic pools: rounds binary64 rows to binary32.
    pub fn from_f64_rows(modality: Modality, rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        Self::from_rows(modality, &rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    /// Row-major binary64 copy, the working form of every scoring kernel.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Checks that every row norm lies within `tol` of 1.
    pub fn check_unit_rows(&self, side: &'static str, tol: f64) -> Result<()> {
        for i in 0..self.n {
            let norm = self.row_norm(i);
            if (norm - 1.0).abs() > tol {
                return Err(Error::NotNormalized { side, row: i, norm });
            }
        }
        Ok(())
    }

    /// Rows at the given positions, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::IndexOutOfRange { index: i, len: self.n });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.d, self.modality, data)
    }

    /// Stacks sets row-wise. Modality is kept when all parts agree.
    pub fn concat(parts: &[EmbeddingSet]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyTarget)?;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut modality = first.modality;
        for p in parts {
            if p.d != first.d {
                return Err(Error::ShapeMismatch(format!("d={} vs d={}", first.d, p.d)));
            }
            if p.modality != modality {
                modality = Modality::Unknown;
            }
            data.extend_from_slice(&p.data);
        }
        Self::new(first.d, modality, data)
    }
}

/// Divides every row by its L2 norm (computed in binary64).
///
/// Rows that are already unit-norm to storage precision are returned
/// unchanged, which makes the operation exactly idempotent.
pub fn normalize_rows(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut data = Vec::with_capacity(set.data.len());
    for (i, row) in set.rows().enumerate() {
        let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroNormRow(i));
        }
        if (norm - 1.0).abs() <= UNIT_NORM_SLACK {
            data.extend_from_slice(row);
        } else {
            data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
        }
    }
    Ok(EmbeddingSet { data, ..*set })
}

/// Aligned image and text embeddings of the same pool.
#[derive(Debug, Clone, Copy)]
pub struct PairedEmbeddings<'a> {
    pub image: &'a EmbeddingSet,
    pub text: &'a EmbeddingSet,
}

impl<'a> PairedEmbeddings<'a> {
    pub fn n(&self) -> usize {
        self.image.n
    }

    pub fn d(&self) -> usize {
        self.image.d
    }
}

pub fn pair<'a>(image: &'a EmbeddingSet, text: &'a EmbeddingSet) -> Result<PairedEmbeddings<'a>> {
    if image.n != text.n || image.d != text.d {
        return Err(Error::ShapeMismatch(format!("image is {}x{}, text is {}x{}", image.n, image.d, text.n, text.d)));
    }
    let bad = |m: Modality, want: Modality| m != want && m != Modality::Unknown;
    if bad(image.modality, Modality::Vision) || bad(text.modality, Modality::Language) {
        return Err(Error::ShapeMismatch(format!(
            "modalities ({:?}, {:?}) cannot be paired as (image, text)",
            image.modality, text.modality
        )));
    }
    Ok(PairedEmbeddings { image, text })
}
