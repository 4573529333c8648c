//! Query-time engine: group measurements, similarity decoding, per-unit
//! non-maxima suppression and the two-stage cascade search.

use rayon::prelude::*;

use crate::decoding::SparseDecoder;
use crate::encoding::MemoryBank;
use crate::error::{Error, Result};
use crate::grouping::Assignment;
use crate::index::Index;
use crate::model::{dot, sort_ranked, validate_query, RankedResult};

/// Query-time knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryParams {
    pub top_k: usize,
    /// Apply per-unit non-maxima suppression to the ranking.
    pub correction: bool,
    /// Cascade shortlist size `|R|`; `None` uses `max(1000, N / 100)`.
    pub shortlist_size: Option<usize>,
    /// How many ranked entries the suppression pass scans; `None` uses
    /// `top_k * 10`.
    pub correction_depth: Option<usize>,
}

impl QueryParams {
    pub fn new(top_k: usize) -> Self {
        Self {
            top_k,
            correction: false,
            shortlist_size: None,
            correction_depth: None,
        }
    }

    pub fn with_correction(mut self) -> Self {
        self.correction = true;
        self
    }

    pub fn depth(&self) -> usize {
        self.correction_depth.unwrap_or(self.top_k * 10)
    }

    fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidParams("top_k must be >= 1".into()));
        }
        Ok(())
    }

    fn shortlist(&self, num_vectors: usize) -> Result<usize> {
        let r = match self.shortlist_size {
            Some(r) => {
                if r < self.top_k {
                    return Err(Error::InvalidParams(format!(
                        "shortlist size {r} is smaller than top_k {}",
                        self.top_k
                    )));
                }
                r
            }
            None => 1000.max(num_vectors / 100).max(self.top_k),
        };
        Ok(r.min(num_vectors))
    }
}

/// Group measurements `c = q^T Y` for a dense bank.
pub fn measure(bank: &MemoryBank, query: &[f64]) -> Result<Vec<f64>> {
    if query.len() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            got: query.len(),
        });
    }
    Ok((0..bank.num_units())
        .into_par_iter()
        .map(|j| dot(bank.column(j), query))
        .collect())
}

/// Similarity estimates `s_hat = c U`, touching only stored coefficients.
pub fn decode(measurements: &[f64], decoder: &SparseDecoder) -> Result<Vec<f64>> {
    if measurements.len() != decoder.num_units() {
        return Err(Error::ShapeMismatch(format!(
            "{} measurements for {} units",
            measurements.len(),
            decoder.num_units()
        )));
    }
    Ok((0..decoder.num_vectors())
        .map(|i| {
            let col = decoder.column(i);
            col.indices
                .iter()
                .zip(&col.values)
                .map(|(&j, &v)| measurements[j as usize] * v)
                .sum()
        })
        .collect())
}

/// Precomputed co-membership neighbor sets: for each vector, every other
/// vector sharing at least one memory unit with it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoMembers {
    sets: Vec<Vec<u32>>,
}

impl CoMembers {
    pub fn from_assignment(assignment: &Assignment) -> Self {
        let sets = (0..assignment.num_vectors())
            .into_par_iter()
            .map(|i| {
                let mut nb: Vec<u32> = assignment
                    .memberships_of(i)
                    .iter()
                    .flat_map(|&j| assignment.unit(j as usize).iter().copied())
                    .filter(|&v| v != i as u32)
                    .collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        Self { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn of(&self, i: usize) -> &[u32] {
        &self.sets[i]
    }
}

/// Per-unit non-maxima suppression.
///
/// One pass over the ranking: each surviving entry among the first `depth`
/// suppresses every lower-ranked entry sharing a memory unit with it.
/// Suppressed entries are removed and recorded; the surviving order is a
/// subsequence of the input order.
pub fn correct(ranked: RankedResult, co_members: &CoMembers, depth: usize) -> RankedResult {
    let mut flagged = vec![false; co_members.len()];
    let mut entries = Vec::with_capacity(ranked.entries.len());
    let mut suppressed = ranked.suppressed;
    for (rank, (i, s)) in ranked.entries.into_iter().enumerate() {
        if flagged[i as usize] {
            suppressed.push((i, s));
            continue;
        }
        entries.push((i, s));
        if rank < depth {
            for &nb in co_members.of(i as usize) {
                flagged[nb as usize] = true;
            }
        }
    }
    RankedResult {
        entries,
        suppressed,
        measurements_count: ranked.measurements_count,
        decode_ops: ranked.decode_ops,
    }
}

fn rank_all(scores: &[f64]) -> Vec<(u32, f64)> {
    let mut entries: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u32, s))
        .collect();
    sort_ranked(&mut entries);
    entries
}

/// Indices of the `k` best scores (descending, ties toward lower index).
fn top_k_indices(scores: &[f64], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..scores.len() as u32).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .partial_cmp(&scores[*a as usize])
            .unwrap()
            .then(a.cmp(b))
    };
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Full search: measure, decode, rank, optionally correct, truncate.
pub fn query(index: &Index, q: &[f64], params: &QueryParams) -> Result<RankedResult> {
    params.validate()?;
    validate_query(q, index.dim())?;
    let c = index.measure(q)?;
    let scores = decode(&c, index.decoder())?;
    let mut ranked = RankedResult {
        entries: rank_all(&scores),
        suppressed: Vec::new(),
        measurements_count: index.num_units() as u64,
        decode_ops: index.decoder().nnz(),
    };
    if params.correction {
        ranked = correct(ranked, index.co_members(), params.depth());
    }
    ranked.entries.truncate(params.top_k);
    Ok(ranked)
}

/// Two-stage search over a cascade decoder.
///
/// The head pass scores every vector with `U0`; the top `|R|` entries are
/// refined with their `U1` columns, and only the refined shortlist is
/// ranked (and optionally corrected). Decode operations count the full head
/// plus the tails actually touched.
pub fn query_cascade(index: &Index, q: &[f64], params: &QueryParams) -> Result<RankedResult> {
    params.validate()?;
    validate_query(q, index.dim())?;
    let decoder = index.decoder();
    if decoder.cascade().is_none() {
        return Err(Error::NoCascade);
    }
    let c = index.measure(q)?;
    if c.len() != decoder.num_units() {
        return Err(Error::ShapeMismatch(format!(
            "{} measurements for {} units",
            c.len(),
            decoder.num_units()
        )));
    }
    let n = decoder.num_vectors();
    let head_scores: Vec<f64> = (0..n)
        .map(|i| {
            let (idx, val) = decoder.head_of(i);
            idx.iter()
                .zip(val)
                .map(|(&j, &v)| c[j as usize] * v)
                .sum()
        })
        .collect();
    let mut ops = decoder.nnz_head().expect("cascade present");

    let shortlist = top_k_indices(&head_scores, params.shortlist(n)?);
    let mut refined: Vec<(u32, f64)> = shortlist
        .iter()
        .map(|&i| {
            let (idx, val) = decoder.tail_of(i as usize);
            ops += idx.len() as u64;
            let extra: f64 = idx
                .iter()
                .zip(val)
                .map(|(&j, &v)| c[j as usize] * v)
                .sum();
            (i, head_scores[i as usize] + extra)
        })
        .collect();
    sort_ranked(&mut refined);
    let mut ranked = RankedResult {
        entries: refined,
        suppressed: Vec::new(),
        measurements_count: index.num_units() as u64,
        decode_ops: ops,
    };
    if params.correction {
        ranked = correct(ranked, index.co_members(), params.depth());
    }
    ranked.entries.truncate(params.top_k);
    Ok(ranked)
}
