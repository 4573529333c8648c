//! Shared fixtures and independent oracles for the integration suites.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use logt::eval::GroundTruth;
use logt::model::{validate_dataset, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn random_unit_dataset(seed: u64, d: usize, count: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(d * count);
    for _ in 0..count {
        raw.extend(unit_vector(&mut rng, d));
    }
    validate_dataset(raw, d, true).unwrap()
}

/// Identity-basis dataset: `count` orthonormal columns in `d = count`
/// dimensions, exactly representable in f32.
pub fn basis_dataset(count: usize) -> Dataset {
    let mut raw = vec![0.0; count * count];
    for i in 0..count {
        raw[i * count + i] = 1.0;
    }
    validate_dataset(raw, count, false).unwrap()
}

pub struct PlantedBenchmark {
    pub dataset: Dataset,
    pub queries: Dataset,
    pub gt: GroundTruth,
}

/// Synthetic retrieval benchmark with exact ground truth: each query gets
/// `matches` planted neighbors at similarity in [0.82, 0.95]; every other
/// vector is an independent random direction (similarity O(1/sqrt(d))).
pub fn planted_benchmark(
    seed: u64,
    num_vectors: usize,
    d: usize,
    num_queries: usize,
    matches: usize,
) -> PlantedBenchmark {
    assert!(num_queries * matches <= num_vectors);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<Vec<f64>> = (0..num_queries).map(|_| unit_vector(&mut rng, d)).collect();
    let mut raw = Vec::with_capacity(num_vectors * d);
    for _ in 0..num_vectors {
        raw.extend(unit_vector(&mut rng, d));
    }
    let mut slots: Vec<u32> = (0..num_vectors as u32).collect();
    rand::seq::SliceRandom::shuffle(&mut slots[..], &mut rng);
    let mut relevant = Vec::with_capacity(num_queries);
    for (t, q) in queries.iter().enumerate() {
        let mine: Vec<u32> = slots[t * matches..(t + 1) * matches].to_vec();
        for &slot in &mine {
            let alpha = 0.82 + 0.13 * rng.gen::<f64>();
            // Random direction orthogonal to q.
            let mut w = unit_vector(&mut rng, d);
            let proj: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
            for (wv, qv) in w.iter_mut().zip(q) {
                *wv -= proj * qv;
            }
            let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let beta = (1.0 - alpha * alpha).sqrt() / wn;
            let col = &mut raw[slot as usize * d..(slot as usize + 1) * d];
            for ((c, qv), wv) in col.iter_mut().zip(q).zip(&w) {
                *c = alpha * qv + beta * wv;
            }
        }
        let mut mine = mine;
        mine.sort_unstable();
        relevant.push(mine);
    }
    let dataset = validate_dataset(raw, d, true).unwrap();
    let queries = validate_dataset(queries.concat(), d, false).unwrap();
    PlantedBenchmark {
        dataset,
        queries,
        gt: GroundTruth::new(relevant),
    }
}

/// Spearman rank correlation (ordinal ranks, ties broken by index).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_unstable_by(|&x, &y| v[x].partial_cmp(&v[y]).unwrap().then(x.cmp(&y)));
        let mut ranks = vec![0.0; v.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let (da, db) = (ra[i] - mean, rb[i] - mean);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Gaussian elimination with partial pivoting; the least-squares oracle for
/// the reference OMP stays independent of the library's solvers.
fn solve_normal_equations(atoms: &[&[f64]], selected: &[usize], x: &[f64]) -> Vec<f64> {
    let t = selected.len();
    let mut aug = vec![vec![0.0f64; t + 1]; t];
    for r in 0..t {
        for c in 0..t {
            aug[r][c] = atoms[selected[r]]
                .iter()
                .zip(atoms[selected[c]])
                .map(|(p, q)| p * q)
                .sum();
        }
        aug[r][t] = atoms[selected[r]].iter().zip(x).map(|(p, q)| p * q).sum();
    }
    for col in 0..t {
        let pivot = (col..t)
            .max_by(|&p, &q| aug[p][col].abs().partial_cmp(&aug[q][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let diag = aug[col][col];
        for r in 0..t {
            if r != col && aug[r][col] != 0.0 {
                let f = aug[r][col] / diag;
                for c in col..=t {
                    aug[r][c] -= f * aug[col][c];
                }
            }
        }
    }
    (0..t).map(|r| aug[r][t] / aug[r][r]).collect()
}

/// Step-by-step reference OMP: norm-scaled correlation selection (ties to
/// the lowest atom index), full least-squares re-solve from scratch each
/// iteration.
pub fn reference_omp(
    atoms: &[&[f64]],
    x: &[f64],
    max_nonzeros: usize,
    residual_tol: f64,
) -> (Vec<usize>, Vec<f64>) {
    let norms: Vec<f64> = atoms
        .iter()
        .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut residual = x.to_vec();
    let mut selected: Vec<usize> = Vec::new();
    let mut coef: Vec<f64> = Vec::new();
    while selected.len() < max_nonzeros.min(atoms.len()) {
        let rnorm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= residual_tol {
            break;
        }
        let mut best: Option<(f64, usize)> = None;
        for (j, atom) in atoms.iter().enumerate() {
            if selected.contains(&j) || norms[j] == 0.0 {
                continue;
            }
            let corr: f64 = residual.iter().zip(*atom).map(|(r, a)| r * a).sum();
            let score = corr.abs() / norms[j];
            if best.is_none_or(|(bs, _)| score > bs) {
                best = Some((score, j));
            }
        }
        let (score, pick) = match best {
            Some(v) => v,
            None => break,
        };
        if score <= 1e-13 * x_norm {
            break;
        }
        selected.push(pick);
        coef = solve_normal_equations(atoms, &selected, x);
        residual.copy_from_slice(x);
        for (t, &j) in selected.iter().enumerate() {
            for (r, a) in residual.iter_mut().zip(atoms[j]) {
                *r -= coef[t] * a;
            }
        }
    }
    (selected, coef)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
