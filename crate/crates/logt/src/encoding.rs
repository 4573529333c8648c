//! Memory-vector construction: one representative vector per memory unit.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouping::Assignment;
use crate::linalg;
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Plain sum of the unit members.
    Sum,
    /// Moore-Penrose pseudo-inverse construction: the minimum-norm vector
    /// with unit inner product against every member.
    Pinv,
}

/// The memory vectors of all units, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    d: usize,
    num_units: usize,
    data: Vec<f64>,
    construction: Construction,
}

impl MemoryBank {
    pub fn from_columns(d: usize, data: Vec<f64>, construction: Construction) -> Result<Self> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form columns of length {d}",
                data.len()
            )));
        }
        Ok(Self {
            d,
            num_units: data.len() / d,
            data,
            construction,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_units(&self) -> usize {
        self.num_units
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rounds every entry through `f32`, so later single-precision
    /// persistence is lossless.
    pub fn round_to_f32(&mut self) {
        for v in self.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }

    /// Appends the columns of another bank with the same dimensionality.
    pub fn concat(&mut self, other: MemoryBank) -> Result<()> {
        if other.d != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        self.data.extend_from_slice(&other.data);
        self.num_units += other.num_units;
        Ok(())
    }
}

fn check_consistent(dataset: &Dataset, assignment: &Assignment) -> Result<()> {
    if assignment.num_vectors() != dataset.len() {
        return Err(Error::ShapeMismatch(format!(
            "assignment covers {} vectors, dataset has {}",
            assignment.num_vectors(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Sum construction: `y_j` is the sum of the members of unit `j`.
pub fn encode_sum(dataset: &Dataset, assignment: &Assignment) -> Result<MemoryBank> {
    check_consistent(dataset, assignment)?;
    let d = dataset.dim();
    let mut data = vec![0.0f64; d * assignment.num_units()];
    data.par_chunks_mut(d).enumerate().for_each(|(j, y)| {
        for &i in assignment.unit(j) {
            let x = dataset.column(i as usize);
            for (acc, v) in y.iter_mut().zip(x) {
                *acc += v;
            }
        }
    });
    MemoryBank::from_columns(d, data, Construction::Sum)
}

/// Pseudo-inverse construction.
///
/// For unit `j` with member matrix `A` (members as columns), `y_j` is the
/// minimum-norm solution of `A^T y = 1`, so `y_j^T x = 1` for every member
/// `x` whenever the members are linearly independent. `tol` overrides the
/// relative singular-value cutoff (default `max(n_j, d) * eps`).
pub fn encode_pinv(
    dataset: &Dataset,
    assignment: &Assignment,
    tol: Option<f64>,
) -> Result<MemoryBank> {
    check_consistent(dataset, assignment)?;
    let d = dataset.dim();
    let columns: Vec<Result<Vec<f64>>> = (0..assignment.num_units())
        .into_par_iter()
        .map(|j| {
            let members: Vec<&[f64]> = assignment
                .unit(j)
                .iter()
                .map(|&i| dataset.column(i as usize))
                .collect();
            let a = linalg::columns_to_matrix(&members, d);
            let ones = DVector::from_element(members.len(), 1.0);
            // min ||y|| s.t. A^T y ≈ 1
            let y = linalg::min_norm_solve(&a.transpose(), &ones, tol)?;
            Ok(y.as_slice().to_vec())
        })
        .collect();
    let mut data = Vec::with_capacity(d * assignment.num_units());
    for col in columns {
        data.extend_from_slice(&col?);
    }
    MemoryBank::from_columns(d, data, Construction::Pinv)
}

/// Pseudo-inverse construction with per-unit fallback to the sum when the
/// SVD fails to converge.
pub fn encode_pinv_or_sum(
    dataset: &Dataset,
    assignment: &Assignment,
    tol: Option<f64>,
) -> Result<MemoryBank> {
    check_consistent(dataset, assignment)?;
    let d = dataset.dim();
    let mut data = Vec::with_capacity(d * assignment.num_units());
    for j in 0..assignment.num_units() {
        let members: Vec<&[f64]> = assignment
            .unit(j)
            .iter()
            .map(|&i| dataset.column(i as usize))
            .collect();
        let a = linalg::columns_to_matrix(&members, d);
        let ones = DVector::from_element(members.len(), 1.0);
        match linalg::min_norm_solve(&a.transpose(), &ones, tol) {
            Ok(y) => data.extend_from_slice(y.as_slice()),
            Err(Error::NumericalFailure(_)) => {
                let mut y = vec![0.0f64; d];
                for m in &members {
                    for (acc, v) in y.iter_mut().zip(m.iter()) {
                        *acc += v;
                    }
                }
                data.extend_from_slice(&y);
            }
            Err(e) => return Err(e),
        }
    }
    MemoryBank::from_columns(d, data, Construction::Pinv)
}
