//! Local sparse decoder construction.
//!
//! One decoder column per dataset vector, fitted against the memory vectors
//! of a small neighborhood of the assignment graph: the units containing the
//! vector (0-order) or every unit reachable through one co-member (1-order).
//! Columns are either dense least-squares fits over the support or sparsified
//! further with Orthogonal Matching Pursuit. Column construction never reads
//! a memory vector outside the support, which is what makes batched and
//! parallel builds possible.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouping::Assignment;
use crate::linalg;
use crate::model::{dot, Dataset};

/// Default OMP stopping residual.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
/// Default cap on 1-order support size.
pub const DEFAULT_MAX_SUPPORT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportOrder {
    Order0,
    Order1,
}

/// Anything that can hand out memory vectors by unit index.
///
/// Decoder construction is generic over this so tests can interpose
/// access-counting wrappers and the quantized path can substitute
/// reconstructed memory vectors.
pub trait AtomSource: Sync {
    fn dim(&self) -> usize;
    fn num_atoms(&self) -> usize;
    fn atom(&self, j: usize) -> &[f64];
}

impl AtomSource for crate::encoding::MemoryBank {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn num_atoms(&self) -> usize {
        self.num_units()
    }
    fn atom(&self, j: usize) -> &[f64] {
        self.column(j)
    }
}

/// One sparse decoder column: parallel `(unit index, coefficient)` arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseColumn {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    fn sort_by_index(&mut self) {
        let mut order: Vec<usize> = (0..self.indices.len()).collect();
        order.sort_unstable_by_key(|&e| self.indices[e]);
        self.indices = order.iter().map(|&e| self.indices[e]).collect();
        self.values = order.iter().map(|&e| self.values[e]).collect();
    }
}

/// Cascade decomposition `U = U0 + U1`: for each column the first
/// `boundaries[i]` stored entries form the high-energy head `u0_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub p: f64,
    pub boundaries: Vec<u32>,
}

/// Column-sparse `M x N` decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDecoder {
    num_units: usize,
    columns: Vec<SparseColumn>,
    support_order: SupportOrder,
    sparsity: Option<usize>,
    cascade: Option<Cascade>,
}

impl SparseDecoder {
    pub fn new(
        num_units: usize,
        columns: Vec<SparseColumn>,
        support_order: SupportOrder,
        sparsity: Option<usize>,
    ) -> Self {
        Self {
            num_units,
            columns,
            support_order,
            sparsity,
            cascade: None,
        }
    }

    pub fn num_units(&self) -> usize {
        self.num_units
    }

    pub fn num_vectors(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &SparseColumn {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub fn support_order(&self) -> SupportOrder {
        self.support_order
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    pub fn cascade(&self) -> Option<&Cascade> {
        self.cascade.as_ref()
    }

    pub(crate) fn set_cascade(&mut self, cascade: Option<Cascade>) {
        self.cascade = cascade;
    }

    /// Total stored coefficients (`s` in the complexity ratio).
    pub fn nnz(&self) -> u64 {
        self.columns.iter().map(|c| c.nnz() as u64).sum()
    }

    /// Stored coefficients in the cascade head `U0`.
    pub fn nnz_head(&self) -> Option<u64> {
        self.cascade
            .as_ref()
            .map(|c| c.boundaries.iter().map(|&b| b as u64).sum())
    }

    /// Head slice of column `i` (the whole column when no cascade is set).
    pub fn head_of(&self, i: usize) -> (&[u32], &[f64]) {
        let col = &self.columns[i];
        match &self.cascade {
            Some(c) => {
                let b = c.boundaries[i] as usize;
                (&col.indices[..b], &col.values[..b])
            }
            None => (&col.indices, &col.values),
        }
    }

    /// Tail slice of column `i` (empty when no cascade is set).
    pub fn tail_of(&self, i: usize) -> (&[u32], &[f64]) {
        let col = &self.columns[i];
        match &self.cascade {
            Some(c) => {
                let b = c.boundaries[i] as usize;
                (&col.indices[b..], &col.values[b..])
            }
            None => (&[], &[]),
        }
    }

    /// Rounds every coefficient through `f32` for lossless single-precision
    /// persistence.
    pub fn round_to_f32(&mut self) {
        for col in self.columns.iter_mut() {
            for v in col.values.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Appends the columns of a per-batch decoder whose unit indices start
    /// at `unit_offset`.
    pub fn concat(&mut self, other: SparseDecoder, unit_offset: u32) -> Result<()> {
        if self.cascade.is_some() || other.cascade.is_some() {
            return Err(Error::InvalidParams(
                "concatenate before splitting the cascade".into(),
            ));
        }
        if self.support_order != other.support_order || self.sparsity != other.sparsity {
            return Err(Error::InvalidParams(
                "decoder parts have mismatched parameters".into(),
            ));
        }
        self.num_units += other.num_units;
        for mut col in other.columns {
            for idx in col.indices.iter_mut() {
                *idx += unit_offset;
            }
            self.columns.push(col);
        }
        Ok(())
    }
}

/// 0-order support: the units vector `i` belongs to.
pub fn support_order0(assignment: &Assignment, i: usize) -> Result<Vec<u32>> {
    if i >= assignment.num_vectors() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: assignment.num_vectors(),
        });
    }
    Ok(assignment.memberships_of(i).to_vec())
}

/// 1-order support: every unit containing a co-member of vector `i`
/// (up to three edges away in the bipartite assignment graph), ascending.
pub fn support_order1(assignment: &Assignment, i: usize) -> Result<Vec<u32>> {
    let mut s = support_order1_capped(assignment, i, usize::MAX)?;
    s.sort_unstable();
    Ok(s)
}

/// 1-order support truncated to `cap` units in BFS discovery order.
///
/// The 0-order units always survive truncation. Returned in discovery
/// order, not sorted.
pub fn support_order1_capped(assignment: &Assignment, i: usize, cap: usize) -> Result<Vec<u32>> {
    if i >= assignment.num_vectors() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: assignment.num_vectors(),
        });
    }
    let mut unit_seen = vec![false; assignment.num_units()];
    let mut vec_seen = vec![false; assignment.num_vectors()];
    let mut out = Vec::new();
    for &j in assignment.memberships_of(i) {
        unit_seen[j as usize] = true;
        out.push(j);
    }
    'expand: for &j in assignment.memberships_of(i) {
        for &v in assignment.unit(j as usize) {
            if vec_seen[v as usize] {
                continue;
            }
            vec_seen[v as usize] = true;
            for &u in assignment.memberships_of(v as usize) {
                if !unit_seen[u as usize] {
                    unit_seen[u as usize] = true;
                    if out.len() >= cap {
                        break 'expand;
                    }
                    out.push(u);
                }
            }
        }
    }
    Ok(out)
}

fn gather_atoms<'a, B: AtomSource>(bank: &'a B, support: &[u32]) -> Vec<&'a [f64]> {
    support.iter().map(|&j| bank.atom(j as usize)).collect()
}

/// Dense least-squares decoder column over an explicit support.
pub fn solve_local_decoder<B: AtomSource>(
    bank: &B,
    dataset: &Dataset,
    i: usize,
    support: &[u32],
) -> Result<SparseColumn> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let atoms = gather_atoms(bank, support);
    let a = linalg::columns_to_matrix(&atoms, bank.dim());
    let x = DVector::from_column_slice(dataset.column(i));
    let u = linalg::least_squares(&a, &x)?;
    let mut col = SparseColumn {
        indices: support.to_vec(),
        values: u.as_slice().to_vec(),
    };
    col.sort_by_index();
    Ok(col)
}

/// Incrementally extended Cholesky factor of the Gram matrix of selected
/// atoms, packed row-major.
struct GramCholesky {
    rows: Vec<f64>,
    n: usize,
}

#[allow(clippy::needless_range_loop)]
impl GramCholesky {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            n: 0,
        }
    }

    /// Tries to extend with an atom of squared norm `norm_sq` whose inner
    /// products with the already-selected atoms are `g`. Fails when the atom
    /// is numerically dependent on the selection.
    fn push(&mut self, g: &[f64], norm_sq: f64) -> bool {
        let mut w = vec![0.0f64; self.n];
        for r in 0..self.n {
            let base = r * (r + 1) / 2;
            let mut acc = g[r];
            for k in 0..r {
                acc -= self.rows[base + k] * w[k];
            }
            w[r] = acc / self.rows[base + r];
        }
        let diag_sq = norm_sq - w.iter().map(|v| v * v).sum::<f64>();
        if diag_sq <= norm_sq * 1e-12 {
            return false;
        }
        self.rows.extend_from_slice(&w);
        self.rows.push(diag_sq.sqrt());
        self.n += 1;
        true
    }

    /// Solves `G u = b` with `G = L L^T`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0f64; self.n];
        for r in 0..self.n {
            let base = r * (r + 1) / 2;
            let mut acc = b[r];
            for k in 0..r {
                acc -= self.rows[base + k] * z[k];
            }
            z[r] = acc / self.rows[base + r];
        }
        let mut u = vec![0.0f64; self.n];
        for r in (0..self.n).rev() {
            let mut acc = z[r];
            for k in r + 1..self.n {
                acc -= self.rows[k * (k + 1) / 2 + r] * u[k];
            }
            u[r] = acc / self.rows[r * (r + 1) / 2 + r];
        }
        u
    }
}

/// Orthogonal Matching Pursuit restricted to the atoms named by `support`.
///
/// Repeats: pick the atom with the largest norm-scaled absolute correlation
/// with the residual, refit by least squares on the selection, update the
/// residual; stops after `max_nonzeros` selections or once the residual norm
/// drops below `residual_tol`.
pub fn solve_omp_decoder<B: AtomSource>(
    bank: &B,
    dataset: &Dataset,
    i: usize,
    support: &[u32],
    max_nonzeros: usize,
    residual_tol: f64,
) -> Result<SparseColumn> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if max_nonzeros < 1 {
        return Err(Error::InvalidParams("OMP needs at least one atom".into()));
    }
    let atoms = gather_atoms(bank, support);
    let x = dataset.column(i);
    let x_norm = crate::model::norm(x);
    // Normalized selection keeps heterogeneous atom norms from biasing the
    // correlation step; coefficients are still fitted on the raw atoms.
    let norms: Vec<f64> = atoms.iter().map(|a| crate::model::norm(a)).collect();
    let corr_floor = 1e-13 * x_norm;

    let mut selected: Vec<usize> = Vec::new();
    let mut excluded = vec![false; atoms.len()];
    let mut chol = GramCholesky::new();
    let mut b: Vec<f64> = Vec::new();
    let mut residual = x.to_vec();
    let mut residual_norm = x_norm;
    let mut coef: Vec<f64> = Vec::new();

    while selected.len() < max_nonzeros.min(atoms.len()) && residual_norm > residual_tol {
        let mut best: Option<(f64, usize)> = None;
        for (c, atom) in atoms.iter().enumerate() {
            if excluded[c] || norms[c] == 0.0 {
                continue;
            }
            let score = dot(&residual, atom).abs() / norms[c];
            // Support indices ascend, so strict `>` breaks ties toward the
            // smallest unit index.
            if best.is_none_or(|(bs, _)| score > bs) {
                best = Some((score, c));
            }
        }
        let (score, pick) = match best {
            Some(v) => v,
            None => break,
        };
        if score <= corr_floor {
            break;
        }
        let g: Vec<f64> = selected.iter().map(|&s| dot(atoms[pick], atoms[s])).collect();
        if !chol.push(&g, norms[pick] * norms[pick]) {
            excluded[pick] = true;
            continue;
        }
        selected.push(pick);
        excluded[pick] = true;
        b.push(dot(atoms[pick], x));
        coef = chol.solve(&b);
        residual.copy_from_slice(x);
        for (t, &s) in selected.iter().enumerate() {
            let c = coef[t];
            for (r, v) in residual.iter_mut().zip(atoms[s]) {
                *r -= c * v;
            }
        }
        residual_norm = crate::model::norm(&residual);
    }

    let mut col = SparseColumn {
        indices: selected.iter().map(|&s| support[s]).collect(),
        values: coef,
    };
    col.sort_by_index();
    Ok(col)
}

/// Decoder build configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub order: SupportOrder,
    /// Maximum non-zeros per column; `None` keeps the dense fit.
    pub sparsity: Option<usize>,
    pub residual_tol: f64,
    /// 1-order supports larger than this are truncated in BFS discovery
    /// order.
    pub max_support: usize,
}

impl DecoderConfig {
    pub fn new(order: SupportOrder, sparsity: Option<usize>) -> Self {
        Self {
            order,
            sparsity,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            max_support: DEFAULT_MAX_SUPPORT,
        }
    }
}

/// Builds the full decoder, one column per dataset vector.
pub fn build_decoder<B: AtomSource>(
    bank: &B,
    dataset: &Dataset,
    assignment: &Assignment,
    config: &DecoderConfig,
) -> Result<SparseDecoder> {
    if assignment.num_vectors() != dataset.len() {
        return Err(Error::ShapeMismatch(format!(
            "assignment covers {} vectors, dataset has {}",
            assignment.num_vectors(),
            dataset.len()
        )));
    }
    if bank.num_atoms() != assignment.num_units() {
        return Err(Error::ShapeMismatch(format!(
            "bank has {} atoms, assignment has {} units",
            bank.num_atoms(),
            assignment.num_units()
        )));
    }
    if bank.dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: bank.dim(),
        });
    }
    let columns: Vec<Result<SparseColumn>> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mut support = match config.order {
                SupportOrder::Order0 => support_order0(assignment, i)?,
                SupportOrder::Order1 => support_order1_capped(assignment, i, config.max_support)?,
            };
            support.sort_unstable();
            match config.sparsity {
                Some(l) => solve_omp_decoder(bank, dataset, i, &support, l, config.residual_tol),
                None => solve_local_decoder(bank, dataset, i, &support),
            }
        })
        .collect();
    let mut cols = Vec::with_capacity(columns.len());
    for c in columns {
        cols.push(c?);
    }
    Ok(SparseDecoder::new(
        assignment.num_units(),
        cols,
        config.order,
        config.sparsity,
    ))
}

/// Splits each column into a high-energy head and a low-energy tail.
///
/// Entries are ranked by absolute value (ties by unit index); the shortest
/// prefix holding at least `p` of the column's squared norm becomes the
/// head. Head and tail are each stored in ascending unit order, so `p = 1`
/// leaves the stored column bit-identical.
pub fn cascade_split(decoder: SparseDecoder, p: f64) -> Result<SparseDecoder> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "cascade energy fraction must be in (0, 1], got {p}"
        )));
    }
    if decoder.cascade.is_some() {
        return Err(Error::InvalidParams("decoder already has a cascade".into()));
    }
    let mut decoder = decoder;
    let mut boundaries = Vec::with_capacity(decoder.columns.len());
    for col in decoder.columns.iter_mut() {
        let total: f64 = col.values.iter().map(|v| v * v).sum();
        let mut order: Vec<usize> = (0..col.nnz()).collect();
        order.sort_unstable_by(|&a, &b| {
            let (ea, eb) = (col.values[a].abs(), col.values[b].abs());
            eb.partial_cmp(&ea)
                .unwrap()
                .then(col.indices[a].cmp(&col.indices[b]))
        });
        let mut head_len = 0usize;
        let mut cum = 0.0f64;
        for &e in &order {
            if cum >= p * total {
                break;
            }
            cum += col.values[e] * col.values[e];
            head_len += 1;
        }
        let mut head: Vec<usize> = order[..head_len].to_vec();
        let mut tail: Vec<usize> = order[head_len..].to_vec();
        head.sort_unstable_by_key(|&e| col.indices[e]);
        tail.sort_unstable_by_key(|&e| col.indices[e]);
        let pick = |sel: &[usize], src: &SparseColumn| SparseColumn {
            indices: sel.iter().map(|&e| src.indices[e]).collect(),
            values: sel.iter().map(|&e| src.values[e]).collect(),
        };
        let mut rebuilt = pick(&head, col);
        let tail_col = pick(&tail, col);
        rebuilt.indices.extend_from_slice(&tail_col.indices);
        rebuilt.values.extend_from_slice(&tail_col.values);
        *col = rebuilt;
        boundaries.push(head_len as u32);
    }
    decoder.cascade = Some(Cascade { p, boundaries });
    Ok(decoder)
}

/// The transposed-assignment baseline decoder: coefficient 1 at every unit
/// the vector belongs to.
pub fn baseline_decoder_gt(assignment: &Assignment) -> SparseDecoder {
    let columns = (0..assignment.num_vectors())
        .map(|i| {
            let indices = assignment.memberships_of(i).to_vec();
            let values = vec![1.0; indices.len()];
            SparseColumn { indices, values }
        })
        .collect();
    SparseDecoder::new(
        assignment.num_units(),
        columns,
        SupportOrder::Order0,
        None,
    )
}
