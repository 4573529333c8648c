//! Retrieval metrics and experiment protocol: average precision, the
//! complexity ratio, instrumented evaluation runs and batched builds.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{BuildParams, Index};
use crate::model::{exhaustive_similarities, sort_ranked, Dataset, RankedResult};
use crate::search::{query, query_cascade, QueryParams};

/// Per-query relevance structure. `ignore` indices are dropped from the
/// ranking before scoring and never count as relevant (junk-list handling).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub relevant: Vec<Vec<u32>>,
    pub ignore: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn new(relevant: Vec<Vec<u32>>) -> Self {
        let ignore = vec![Vec::new(); relevant.len()];
        Self { relevant, ignore }
    }

    pub fn with_ignores(relevant: Vec<Vec<u32>>, ignore: Vec<Vec<u32>>) -> Result<Self> {
        if ignore.len() != relevant.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ignore sets for {} queries",
                ignore.len(),
                relevant.len()
            )));
        }
        Ok(Self { relevant, ignore })
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    /// Checks index ranges and relevant/ignore disjointness.
    pub fn validate(&self, num_vectors: usize) -> Result<()> {
        for (q, (rel, ign)) in self.relevant.iter().zip(&self.ignore).enumerate() {
            for &i in rel.iter().chain(ign.iter()) {
                if i as usize >= num_vectors {
                    return Err(Error::IndexOutOfRange {
                        index: i as usize,
                        len: num_vectors,
                    });
                }
            }
            if rel.iter().any(|i| ign.contains(i)) {
                return Err(Error::InvalidParams(format!(
                    "query {q}: relevant and ignore sets overlap"
                )));
            }
        }
        Ok(())
    }
}

/// Average precision of a ranking: mean over relevant items of the
/// precision at their rank, with missing relevant items contributing zero.
pub fn average_precision(ranking: &[u32], relevant: &[u32], ignore: &[u32]) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant(0));
    }
    debug_assert!(
        {
            let mut seen = ranking.to_vec();
            seen.sort_unstable();
            seen.windows(2).all(|w| w[0] != w[1])
        },
        "ranking contains duplicates"
    );
    let is_relevant = |i: u32| relevant.contains(&i);
    let mut hits = 0usize;
    let mut rank = 0usize;
    let mut sum = 0.0f64;
    for &i in ranking {
        if ignore.contains(&i) {
            continue;
        }
        rank += 1;
        if is_relevant(i) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Complexity ratio `rho = (M d + s) / (d N)`: scalar operations of the
/// approximate search relative to exhaustive search. `s` is the number of
/// decoder coefficients touched (mean over queries for cascade search).
pub fn complexity_ratio(num_units: usize, d: usize, s: f64, num_vectors: usize) -> Result<f64> {
    if d == 0 || num_vectors == 0 {
        return Err(Error::InvalidParams(
            "complexity ratio needs d > 0 and N > 0".into(),
        ));
    }
    Ok((num_units as f64 * d as f64 + s) / (d as f64 * num_vectors as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryReport {
    /// `None` when the query was skipped for an empty relevant set.
    pub ap: Option<f64>,
    pub decode_ops: u64,
    pub measurements: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    /// Queries scored / skipped for empty relevant sets.
    pub evaluated: usize,
    pub skipped: usize,
    /// Measured complexity ratio from the instrumented counters.
    pub rho: f64,
    pub mean_decode_ops: f64,
    pub mean_seconds: f64,
    pub per_query: Vec<QueryReport>,
}

fn summarize(
    num_units: usize,
    d: usize,
    num_vectors: usize,
    per_query: Vec<QueryReport>,
    rho_override: Option<f64>,
) -> Result<EvalReport> {
    let evaluated = per_query.iter().filter(|r| r.ap.is_some()).count();
    let skipped = per_query.len() - evaluated;
    let map = if evaluated > 0 {
        per_query.iter().filter_map(|r| r.ap).sum::<f64>() / evaluated as f64
    } else {
        0.0
    };
    let mean_decode_ops = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().map(|r| r.decode_ops as f64).sum::<f64>() / per_query.len() as f64
    };
    let mean_seconds = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().map(|r| r.seconds).sum::<f64>() / per_query.len() as f64
    };
    let rho = match rho_override {
        Some(r) => r,
        None => complexity_ratio(num_units, d, mean_decode_ops, num_vectors)?,
    };
    Ok(EvalReport {
        map,
        evaluated,
        skipped,
        rho,
        mean_decode_ops,
        mean_seconds,
        per_query,
    })
}

/// Runs every query through the index and aggregates mAP and the measured
/// complexity ratio. Cascade indexes are searched through the cascade path.
pub fn evaluate(
    index: &Index,
    queries: &Dataset,
    ground_truth: &GroundTruth,
    params: &QueryParams,
) -> Result<EvalReport> {
    if ground_truth.len() != queries.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth rows for {} queries",
            ground_truth.len(),
            queries.len()
        )));
    }
    ground_truth.validate(index.num_vectors())?;
    if queries.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            got: queries.dim(),
        });
    }
    let cascade = index.decoder().cascade().is_some();
    let per_query: Vec<Result<QueryReport>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let started = Instant::now();
            let result = if cascade {
                query_cascade(index, queries.column(qi), params)?
            } else {
                query(index, queries.column(qi), params)?
            };
            let seconds = started.elapsed().as_secs_f64();
            let ap = score_query(&result, ground_truth, qi)?;
            Ok(QueryReport {
                ap,
                decode_ops: result.decode_ops,
                measurements: result.measurements_count,
                seconds,
            })
        })
        .collect();
    let mut reports = Vec::with_capacity(per_query.len());
    for r in per_query {
        reports.push(r?);
    }
    summarize(
        index.num_units(),
        index.dim(),
        index.num_vectors(),
        reports,
        None,
    )
}

fn score_query(
    result: &RankedResult,
    ground_truth: &GroundTruth,
    qi: usize,
) -> Result<Option<f64>> {
    let ranking = result.indices();
    match average_precision(
        &ranking,
        &ground_truth.relevant[qi],
        &ground_truth.ignore[qi],
    ) {
        Ok(ap) => Ok(Some(ap)),
        Err(Error::EmptyRelevant(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Exhaustive-search baseline: brute-force similarities, `rho = 1` by
/// construction.
pub fn evaluate_exhaustive(
    dataset: &Dataset,
    queries: &Dataset,
    ground_truth: &GroundTruth,
    top_k: usize,
) -> Result<EvalReport> {
    if ground_truth.len() != queries.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ground-truth rows for {} queries",
            ground_truth.len(),
            queries.len()
        )));
    }
    ground_truth.validate(dataset.len())?;
    let per_query: Vec<Result<QueryReport>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let started = Instant::now();
            let result = exhaustive_ranked(dataset, queries.column(qi), top_k)?;
            let seconds = started.elapsed().as_secs_f64();
            let ap = score_query(&result, ground_truth, qi)?;
            Ok(QueryReport {
                ap,
                decode_ops: result.decode_ops,
                measurements: result.measurements_count,
                seconds,
            })
        })
        .collect();
    let mut reports = Vec::with_capacity(per_query.len());
    for r in per_query {
        reports.push(r?);
    }
    summarize(0, dataset.dim(), dataset.len(), reports, Some(1.0))
}

/// Brute-force ranked result; `measurements_count` counts one measurement
/// per dataset vector, so the cost convention matches `rho = 1`.
pub fn exhaustive_ranked(dataset: &Dataset, q: &[f64], top_k: usize) -> Result<RankedResult> {
    let scores = exhaustive_similarities(dataset, q)?;
    let mut entries: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (i as u32, s))
        .collect();
    sort_ranked(&mut entries);
    entries.truncate(top_k);
    Ok(RankedResult {
        entries,
        suppressed: Vec::new(),
        measurements_count: dataset.len() as u64,
        decode_ops: 0,
    })
}

/// Builds an index from a stream of dataset batches; each batch is grouped,
/// encoded and decoded with only that batch resident, then the parts are
/// concatenated.
pub fn batch_build<I>(batches: I, params: &BuildParams) -> Result<Index>
where
    I: IntoIterator<Item = Result<Dataset>>,
{
    Index::build_from_batches(batches, params)
}
