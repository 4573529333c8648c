//! Product quantization of the memory bank.
//!
//! Memory vectors are split into subvectors, each coded by one byte into a
//! per-subspace codebook learned with k-means. Asymmetric measurement builds
//! per-subspace lookup tables of query inner products, so the quantized
//! measurement equals the inner product against the reconstructed memory
//! vector. Decoders for a quantized index are learned from the reconstructed
//! vectors, not the originals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decoding::{build_decoder, DecoderConfig, SparseDecoder};
use crate::encoding::{Construction, MemoryBank};
use crate::error::{Error, Result};
use crate::grouping::Assignment;
use crate::model::Dataset;

/// Centroids per subquantizer; one byte per subspace code.
pub const CODEBOOK_SIZE: usize = 256;
/// Default Lloyd iterations.
pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer {
    sub_count: usize,
    sub_dim: usize,
    /// `sub_count * CODEBOOK_SIZE * sub_dim`, centroid-major per subspace.
    codebooks: Vec<f64>,
    seed: u64,
    kmeans_iters: usize,
}

impl ProductQuantizer {
    pub fn sub_count(&self) -> usize {
        self.sub_count
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.sub_count * self.sub_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kmeans_iters(&self) -> usize {
        self.kmeans_iters
    }

    pub fn centroid(&self, sub: usize, code: usize) -> &[f64] {
        let base = (sub * CODEBOOK_SIZE + code) * self.sub_dim;
        &self.codebooks[base..base + self.sub_dim]
    }

    pub fn codebooks(&self) -> &[f64] {
        &self.codebooks
    }

    pub fn from_parts(
        sub_count: usize,
        sub_dim: usize,
        codebooks: Vec<f64>,
        seed: u64,
        kmeans_iters: usize,
    ) -> Result<Self> {
        if sub_count == 0 || sub_dim == 0 || codebooks.len() != sub_count * CODEBOOK_SIZE * sub_dim
        {
            return Err(Error::ShapeMismatch(format!(
                "codebook storage of {} values does not match {sub_count} x {CODEBOOK_SIZE} x {sub_dim}",
                codebooks.len()
            )));
        }
        Ok(Self {
            sub_count,
            sub_dim,
            codebooks,
            seed,
            kmeans_iters,
        })
    }

    /// Rounds centroids through `f32` for lossless single-precision
    /// persistence.
    pub fn round_to_f32(&mut self) {
        for v in self.codebooks.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}

/// Byte codes for a bank: `codes[j * sub_count + sub]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodes {
    num_units: usize,
    sub_count: usize,
    codes: Vec<u8>,
}

impl PqCodes {
    pub fn num_units(&self) -> usize {
        self.num_units
    }

    pub fn sub_count(&self) -> usize {
        self.sub_count
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.codes[j * self.sub_count..(j + 1) * self.sub_count]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.codes
    }

    pub fn from_parts(num_units: usize, sub_count: usize, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != num_units * sub_count {
            return Err(Error::ShapeMismatch(format!(
                "{} codes do not match {num_units} x {sub_count}",
                codes.len()
            )));
        }
        Ok(Self {
            num_units,
            sub_count,
            codes,
        })
    }

    /// Appends codes of another bank with the same subspace layout.
    pub fn concat(&mut self, other: &PqCodes) -> Result<()> {
        if other.sub_count != self.sub_count {
            return Err(Error::ShapeMismatch(
                "code rows have mismatched subspace counts".into(),
            ));
        }
        self.codes.extend_from_slice(&other.codes);
        self.num_units += other.num_units;
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means over one subspace's points.
///
/// k-means++ initialization (uniform fallback once every point is covered),
/// then fixed Lloyd iterations with nearest-centroid ties broken toward the
/// lowest code. Clusters that empty out are re-seeded with the farthest
/// member of the largest cluster.
#[allow(clippy::needless_range_loop)]
fn kmeans_subspace(points: &[f64], sub_dim: usize, seed: u64, iters: usize) -> Vec<f64> {
    let count = points.len() / sub_dim;
    let point = |i: usize| &points[i * sub_dim..(i + 1) * sub_dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<f64> = Vec::with_capacity(CODEBOOK_SIZE * sub_dim);
    let first = rng.gen_range(0..count);
    centroids.extend_from_slice(point(first));
    let mut best_dist: Vec<f64> = (0..count)
        .map(|i| sq_dist(point(i), point(first)))
        .collect();
    for _ in 1..CODEBOOK_SIZE {
        let total: f64 = best_dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = count - 1;
            for (i, &w) in best_dist.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..count)
        };
        let c_base = centroids.len();
        centroids.extend_from_slice(point(pick));
        let new_c = centroids[c_base..c_base + sub_dim].to_vec();
        for i in 0..count {
            let d = sq_dist(point(i), &new_c);
            if d < best_dist[i] {
                best_dist[i] = d;
            }
        }
    }

    let mut assign = vec![0usize; count];
    for _ in 0..iters {
        for i in 0..count {
            let p = point(i);
            let mut best = (f64::INFINITY, 0usize);
            for c in 0..CODEBOOK_SIZE {
                let d = sq_dist(p, &centroids[c * sub_dim..(c + 1) * sub_dim]);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
        }
        let mut sizes = vec![0usize; CODEBOOK_SIZE];
        for &a in &assign {
            sizes[a] += 1;
        }
        for empty in 0..CODEBOOK_SIZE {
            if sizes[empty] > 0 {
                continue;
            }
            let largest = (0..CODEBOOK_SIZE)
                .max_by_key(|&c| (sizes[c], usize::MAX - c))
                .unwrap();
            if sizes[largest] <= 1 {
                continue;
            }
            let donor_centroid = centroids[largest * sub_dim..(largest + 1) * sub_dim].to_vec();
            let mut far = (f64::NEG_INFINITY, usize::MAX);
            for i in 0..count {
                if assign[i] == largest {
                    let d = sq_dist(point(i), &donor_centroid);
                    if d > far.0 {
                        far = (d, i);
                    }
                }
            }
            assign[far.1] = empty;
            sizes[largest] -= 1;
            sizes[empty] += 1;
        }
        let mut sums = vec![0.0f64; CODEBOOK_SIZE * sub_dim];
        for i in 0..count {
            let base = assign[i] * sub_dim;
            for (t, v) in point(i).iter().enumerate() {
                sums[base + t] += v;
            }
        }
        for c in 0..CODEBOOK_SIZE {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                for t in 0..sub_dim {
                    centroids[c * sub_dim + t] = sums[c * sub_dim + t] * inv;
                }
            }
        }
    }
    centroids
}

fn subspace_points(bank: &MemoryBank, sub: usize, sub_dim: usize) -> Vec<f64> {
    let mut points = Vec::with_capacity(bank.num_units() * sub_dim);
    for j in 0..bank.num_units() {
        let col = bank.column(j);
        points.extend_from_slice(&col[sub * sub_dim..(sub + 1) * sub_dim]);
    }
    points
}

pub(crate) fn subspace_seed(seed: u64, sub: usize) -> u64 {
    seed.wrapping_add((sub as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains one 256-centroid codebook per subspace on the given vectors.
pub fn pq_train(training: &MemoryBank, sub_count: usize, seed: u64) -> Result<ProductQuantizer> {
    pq_train_with(training, sub_count, seed, DEFAULT_KMEANS_ITERS)
}

pub fn pq_train_with(
    training: &MemoryBank,
    sub_count: usize,
    seed: u64,
    kmeans_iters: usize,
) -> Result<ProductQuantizer> {
    if sub_count == 0 || !training.dim().is_multiple_of(sub_count) {
        return Err(Error::InvalidParams(format!(
            "subspace count {sub_count} must divide dimensionality {}",
            training.dim()
        )));
    }
    if training.num_units() == 0 {
        return Err(Error::InvalidParams("no training vectors".into()));
    }
    let sub_dim = training.dim() / sub_count;
    let codebooks: Vec<Vec<f64>> = (0..sub_count)
        .into_par_iter()
        .map(|sub| {
            let points = subspace_points(training, sub, sub_dim);
            kmeans_subspace(&points, sub_dim, subspace_seed(seed, sub), kmeans_iters)
        })
        .collect();
    Ok(ProductQuantizer {
        sub_count,
        sub_dim,
        codebooks: codebooks.concat(),
        seed,
        kmeans_iters,
    })
}

/// Codes each memory vector as its per-subspace nearest centroids.
pub fn pq_encode(pq: &ProductQuantizer, bank: &MemoryBank) -> Result<PqCodes> {
    if bank.dim() != pq.dim() {
        return Err(Error::DimensionMismatch {
            expected: pq.dim(),
            got: bank.dim(),
        });
    }
    let sub_dim = pq.sub_dim;
    let codes: Vec<u8> = (0..bank.num_units())
        .into_par_iter()
        .flat_map_iter(|j| {
            let col = bank.column(j);
            (0..pq.sub_count).map(move |sub| {
                let p = &col[sub * sub_dim..(sub + 1) * sub_dim];
                let mut best = (f64::INFINITY, 0usize);
                for c in 0..CODEBOOK_SIZE {
                    let d = sq_dist(p, pq.centroid(sub, c));
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                best.1 as u8
            })
        })
        .collect();
    PqCodes::from_parts(bank.num_units(), pq.sub_count, codes)
}

/// Reconstructs the quantized bank as explicit centroid concatenations.
pub fn pq_reconstruct(
    pq: &ProductQuantizer,
    codes: &PqCodes,
    construction: Construction,
) -> Result<MemoryBank> {
    if codes.sub_count != pq.sub_count {
        return Err(Error::ShapeMismatch(
            "codes do not match the quantizer layout".into(),
        ));
    }
    let mut data = Vec::with_capacity(codes.num_units * pq.dim());
    for j in 0..codes.num_units {
        for (sub, &code) in codes.row(j).iter().enumerate() {
            data.extend_from_slice(pq.centroid(sub, code as usize));
        }
    }
    MemoryBank::from_columns(pq.dim(), data, construction)
}

/// Asymmetric group measurements: per-subspace lookup tables of query inner
/// products, summed per code row. Equals `q^T y_hat_j` for the reconstructed
/// memory vector.
pub fn pq_measure(pq: &ProductQuantizer, codes: &PqCodes, query: &[f64]) -> Result<Vec<f64>> {
    if query.len() != pq.dim() {
        return Err(Error::DimensionMismatch {
            expected: pq.dim(),
            got: query.len(),
        });
    }
    if codes.sub_count != pq.sub_count {
        return Err(Error::ShapeMismatch(
            "codes do not match the quantizer layout".into(),
        ));
    }
    let sub_dim = pq.sub_dim;
    let mut tables = vec![0.0f64; pq.sub_count * CODEBOOK_SIZE];
    for sub in 0..pq.sub_count {
        let q_sub = &query[sub * sub_dim..(sub + 1) * sub_dim];
        for code in 0..CODEBOOK_SIZE {
            tables[sub * CODEBOOK_SIZE + code] = crate::model::dot(q_sub, pq.centroid(sub, code));
        }
    }
    Ok((0..codes.num_units)
        .map(|j| {
            codes
                .row(j)
                .iter()
                .enumerate()
                .map(|(sub, &code)| tables[sub * CODEBOOK_SIZE + code as usize])
                .sum()
        })
        .collect())
}

/// Builds the decoder against the reconstructed quantized bank, so the fit
/// sees the same vectors the quantized measurements will.
pub fn build_decoder_pq(
    pq: &ProductQuantizer,
    codes: &PqCodes,
    dataset: &Dataset,
    assignment: &Assignment,
    config: &DecoderConfig,
) -> Result<SparseDecoder> {
    let bank = pq_reconstruct(pq, codes, Construction::Sum)?;
    build_decoder(&bank, dataset, assignment, config)
}
