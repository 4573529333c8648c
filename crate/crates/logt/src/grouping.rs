//! Assignment of dataset vectors to memory units.
//!
//! Two strategies: the random-permutation baseline and a greedy orthogonal
//! grouping that works on independent chunks of `k * n` vectors, so the
//! construction stays linear in the dataset size and batch-friendly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dot, Dataset};

/// Default number of memory units built per chunk.
pub const DEFAULT_CHUNK_FACTOR: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignmentParams {
    /// Unit size.
    pub n: usize,
    /// Number of units each vector belongs to.
    pub m: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Chunk factor `k`: orthogonal grouping processes `k * n` vectors at a
    /// time. Ignored by the random strategy.
    pub chunk_factor: usize,
}

/// Bipartite membership structure between vectors and memory units.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    num_vectors: usize,
    units: Vec<Vec<u32>>,
    memberships: Vec<Vec<u32>>,
    params: AssignmentParams,
}

impl Assignment {
    /// Number of memory units `M`.
    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn num_vectors(&self) -> usize {
        self.num_vectors
    }

    /// Member vector indices of unit `j`, ascending.
    pub fn unit(&self, j: usize) -> &[u32] {
        &self.units[j]
    }

    pub fn units(&self) -> &[Vec<u32>] {
        &self.units
    }

    /// Unit indices containing vector `i`, ascending.
    pub fn memberships_of(&self, i: usize) -> &[u32] {
        &self.memberships[i]
    }

    pub fn params(&self) -> &AssignmentParams {
        &self.params
    }

    /// Builds an assignment from explicit unit member lists, deriving the
    /// membership lists and checking mutual consistency.
    pub fn from_units(
        num_vectors: usize,
        units: Vec<Vec<u32>>,
        params: AssignmentParams,
    ) -> Result<Self> {
        let mut units = units;
        let mut memberships = vec![Vec::new(); num_vectors];
        for (j, unit) in units.iter_mut().enumerate() {
            if unit.is_empty() || unit.len() > params.n {
                return Err(Error::InvalidParams(format!(
                    "unit {j} has {} members, expected 1..={}",
                    unit.len(),
                    params.n
                )));
            }
            unit.sort_unstable();
            let mut prev = None;
            for &i in unit.iter() {
                if prev == Some(i) {
                    return Err(Error::InvalidParams(format!(
                        "vector {i} appears twice in unit {j}"
                    )));
                }
                prev = Some(i);
                if i as usize >= num_vectors {
                    return Err(Error::IndexOutOfRange {
                        index: i as usize,
                        len: num_vectors,
                    });
                }
                memberships[i as usize].push(j as u32);
            }
        }
        for (i, mem) in memberships.iter().enumerate() {
            if mem.len() != params.m {
                return Err(Error::InvalidParams(format!(
                    "vector {i} appears in {} units, expected m = {}",
                    mem.len(),
                    params.m
                )));
            }
        }
        Ok(Self {
            num_vectors,
            units,
            memberships,
            params,
        })
    }

    /// Concatenates per-batch assignments, offsetting vector indices.
    ///
    /// Unit indices follow the concatenation order; each part must share
    /// `n`, `m` and strategy.
    pub fn concat(parts: Vec<Assignment>) -> Result<Self> {
        let params = match parts.first() {
            Some(p) => p.params,
            None => return Err(Error::InvalidParams("no assignments to concatenate".into())),
        };
        let mut units = Vec::new();
        let mut memberships = Vec::new();
        let mut vec_offset = 0u32;
        for part in parts {
            if part.params.n != params.n
                || part.params.m != params.m
                || part.params.strategy != params.strategy
            {
                return Err(Error::InvalidParams(
                    "assignment parts have mismatched parameters".into(),
                ));
            }
            let unit_offset = units.len() as u32;
            for unit in part.units {
                units.push(unit.into_iter().map(|i| i + vec_offset).collect());
            }
            for mem in part.memberships {
                memberships.push(mem.into_iter().map(|j| j + unit_offset).collect());
            }
            vec_offset = memberships.len() as u32;
        }
        Ok(Self {
            num_vectors: memberships.len(),
            units,
            memberships,
            params,
        })
    }
}

fn check_params(num_vectors: usize, n: usize, m: usize) -> Result<()> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidParams("n and m must be >= 1".into()));
    }
    if num_vectors == 0 {
        return Err(Error::InvalidParams("empty dataset".into()));
    }
    if n > num_vectors {
        return Err(Error::InvalidParams(format!(
            "unit size n = {n} exceeds dataset size {num_vectors}"
        )));
    }
    Ok(())
}

fn finish(
    num_vectors: usize,
    mut units: Vec<Vec<u32>>,
    params: AssignmentParams,
) -> Assignment {
    let mut memberships = vec![Vec::new(); num_vectors];
    for (j, unit) in units.iter_mut().enumerate() {
        unit.sort_unstable();
        for &i in unit.iter() {
            memberships[i as usize].push(j as u32);
        }
    }
    Assignment {
        num_vectors,
        units,
        memberships,
        params,
    }
}

/// Random baseline: `m` independent permutations, consecutive blocks of `n`
/// indices per permutation form the units. A trailing partial block forms a
/// smaller unit, so `M = m * ceil(N / n)`.
pub fn random_assignment(num_vectors: usize, n: usize, m: usize, seed: u64) -> Result<Assignment> {
    check_params(num_vectors, n, m)?;
    let params = AssignmentParams {
        n,
        m,
        seed,
        strategy: Strategy::Random,
        chunk_factor: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units = Vec::with_capacity(m * num_vectors.div_ceil(n));
    let mut perm: Vec<u32> = (0..num_vectors as u32).collect();
    for _ in 0..m {
        perm.shuffle(&mut rng);
        for block in perm.chunks(n) {
            units.push(block.to_vec());
        }
    }
    Ok(finish(num_vectors, units, params))
}

/// Greedy orthogonal grouping of one chunk of vector indices.
///
/// The first `k'` indices seed `k' = ceil(len / n)` units; each round every
/// unit in index order takes the unassigned vector minimizing the maximum
/// absolute inner product against its current members (ties broken by the
/// smallest dataset index). Reads only the columns named in `chunk`.
pub(crate) fn orthogonal_units_for_chunk(
    dataset: &Dataset,
    chunk: &[u32],
    n: usize,
    k: usize,
) -> Vec<Vec<u32>> {
    let k_eff = k.min(chunk.len().div_ceil(n));
    let mut units: Vec<Vec<u32>> = (0..k_eff).map(|u| vec![chunk[u]]).collect();
    let mut assigned = vec![false; chunk.len()];
    assigned[..k_eff].iter_mut().for_each(|a| *a = true);

    // score[c][u]: max |<x_c, member>| over current members of unit u.
    let mut score = vec![0.0f64; chunk.len() * k_eff];
    for u in 0..k_eff {
        let member = dataset.column(chunk[u] as usize);
        for (c, &idx) in chunk.iter().enumerate() {
            if !assigned[c] {
                score[c * k_eff + u] = dot(dataset.column(idx as usize), member).abs();
            }
        }
    }

    let mut remaining = chunk.len() - k_eff;
    while remaining > 0 {
        for u in 0..k_eff {
            if remaining == 0 || units[u].len() >= n {
                continue;
            }
            let mut best: Option<(f64, u32, usize)> = None;
            for (c, &idx) in chunk.iter().enumerate() {
                if assigned[c] {
                    continue;
                }
                let s = score[c * k_eff + u];
                let better = match best {
                    None => true,
                    Some((bs, bi, _)) => s < bs || (s == bs && idx < bi),
                };
                if better {
                    best = Some((s, idx, c));
                }
            }
            let (_, idx, c) = best.expect("unassigned candidate exists");
            assigned[c] = true;
            units[u].push(idx);
            remaining -= 1;
            let member = dataset.column(idx as usize);
            for (c2, &idx2) in chunk.iter().enumerate() {
                if !assigned[c2] {
                    let cell = &mut score[c2 * k_eff + u];
                    let ip = dot(dataset.column(idx2 as usize), member).abs();
                    if ip > *cell {
                        *cell = ip;
                    }
                }
            }
        }
    }
    units
}

/// Greedy orthogonal assignment over random chunks of `k * n` vectors.
///
/// Each of the `m` passes shuffles the indices, splits them into chunks and
/// builds `k` units per chunk with [`orthogonal_units_for_chunk`]. Chunks are
/// processed in parallel and merged in chunk order, so the output depends
/// only on `(dataset, n, m, k, seed)`.
pub fn orthogonal_assignment(
    dataset: &Dataset,
    n: usize,
    m: usize,
    chunk_factor: usize,
    seed: u64,
) -> Result<Assignment> {
    let num_vectors = dataset.len();
    check_params(num_vectors, n, m)?;
    if chunk_factor < 1 {
        return Err(Error::InvalidParams("chunk factor must be >= 1".into()));
    }
    let params = AssignmentParams {
        n,
        m,
        seed,
        strategy: Strategy::Orthogonal,
        chunk_factor,
    };
    let chunk_len = chunk_factor * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u32> = (0..num_vectors as u32).collect();
    let mut units = Vec::with_capacity(m * num_vectors.div_ceil(n));
    for _ in 0..m {
        perm.shuffle(&mut rng);
        let pass_units: Vec<Vec<Vec<u32>>> = perm
            .par_chunks(chunk_len)
            .map(|chunk| orthogonal_units_for_chunk(dataset, chunk, n, chunk_factor))
            .collect();
        units.extend(pass_units.into_iter().flatten());
    }
    Ok(finish(num_vectors, units, params))
}

/// Per-unit maximum absolute inner product over member pairs.
///
/// Diagnostic for how orthogonal each unit's members are; singleton units
/// report 0.
pub fn intra_unit_coherence(dataset: &Dataset, assignment: &Assignment) -> Vec<f64> {
    assignment
        .units()
        .iter()
        .map(|unit| {
            let mut worst = 0.0f64;
            for (a, &ia) in unit.iter().enumerate() {
                let xa = dataset.column(ia as usize);
                for &ib in unit.iter().skip(a + 1) {
                    let ip = dot(xa, dataset.column(ib as usize)).abs();
                    if ip > worst {
                        worst = ip;
                    }
                }
            }
            worst
        })
        .collect()
}
