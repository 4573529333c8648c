//! Core domain types: datasets, ranked results, shared numeric helpers.

use crate::error::{Error, Result};

/// Unit-norm tolerance accepted by [`validate_dataset`] without rescaling.
pub const NORM_TOL: f64 = 1e-6;
/// Columns below this norm cannot be normalized.
pub const ZERO_TOL: f64 = 1e-12;

/// A collection of `len` unit-norm `d`-dimensional vectors, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    len: usize,
    data: Vec<f64>,
    ids: Option<Vec<u64>>,
}

impl Dataset {
    /// Dimensionality of each vector.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of vectors.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `i`-th vector as a contiguous slice.
    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// External identifiers, when attached.
    pub fn ids(&self) -> Option<&[u64]> {
        self.ids.as_deref()
    }

    /// Attaches one external identifier per column.
    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.len {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} columns",
                ids.len(),
                self.len
            )));
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ids.len() {
            return Err(Error::InvalidParams("dataset ids must be unique".into()));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    /// Raw column-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Checks a raw `d x n` column-major matrix and wraps it as a [`Dataset`].
///
/// With `normalize` set, columns are rescaled to unit norm; otherwise any
/// column whose norm deviates from 1 by more than [`NORM_TOL`] is rejected.
pub fn validate_dataset(raw: Vec<f64>, d: usize, normalize: bool) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::InvalidParams("dimensionality must be >= 1".into()));
    }
    if raw.is_empty() || !raw.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: raw.len(),
        });
    }
    let len = raw.len() / d;
    let mut data = raw;
    for i in 0..len {
        let col = &mut data[i * d..(i + 1) * d];
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { col: i });
        }
        let norm = norm(col);
        if normalize {
            if norm < ZERO_TOL {
                return Err(Error::ZeroVector { col: i, norm });
            }
            for v in col.iter_mut() {
                *v /= norm;
            }
        } else if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotUnitNorm { col: i, norm });
        }
    }
    Ok(Dataset {
        d,
        len,
        data,
        ids: None,
    })
}

/// Validates a single query vector against a dataset's dimensionality.
pub fn validate_query(query: &[f64], d: usize) -> Result<()> {
    if query.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { col: 0 });
    }
    let norm = norm(query);
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotUnitNorm { col: 0, norm });
    }
    Ok(())
}

/// Ground-truth similarities `s_i = x_i^T q` for every dataset vector.
///
/// This is the exhaustive-search oracle every approximation is measured
/// against.
pub fn exhaustive_similarities(dataset: &Dataset, query: &[f64]) -> Result<Vec<f64>> {
    if query.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: query.len(),
        });
    }
    Ok((0..dataset.len())
        .map(|i| dot(dataset.column(i), query))
        .collect())
}

/// A ranked query answer plus the operation counters used for complexity
/// accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    /// `(vector index, estimated similarity)`, sorted by similarity
    /// descending with ties broken by ascending index.
    pub entries: Vec<(u32, f64)>,
    /// Entries removed by per-unit non-maxima suppression, with the scores
    /// they held before removal.
    pub suppressed: Vec<(u32, f64)>,
    /// Number of group measurements taken (each costs `d` multiply-adds).
    pub measurements_count: u64,
    /// Decoder coefficients touched while estimating similarities.
    pub decode_ops: u64,
}

impl RankedResult {
    /// Ranked vector indices, best first.
    pub fn indices(&self) -> Vec<u32> {
        self.entries.iter().map(|&(i, _)| i).collect()
    }
}

/// Dot product with a fixed 4-way accumulator pattern.
///
/// The summation order depends only on the vector length, so results are
/// bit-reproducible across runs and thread counts.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sorts `(index, score)` pairs by score descending, ties by ascending index.
pub(crate) fn sort_ranked(entries: &mut [(u32, f64)]) {
    entries.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
}
