//! The persisted search bundle: assignment, memory bank, decoder and build
//! parameters, answering ranked queries.

use crate::decoding::{self, DecoderConfig, SparseDecoder, SupportOrder};
use crate::encoding::{self, Construction, MemoryBank};
use crate::error::{Error, Result};
use crate::eval::complexity_ratio;
use crate::grouping::{self, Assignment, Strategy};
use crate::model::Dataset;
use crate::quantization::{self, PqCodes, ProductQuantizer};
use crate::search::CoMembers;

/// Build-time configuration.
///
/// Defaults follow the headline operating point: units of 50 vectors, 4
/// memberships per vector, orthogonal grouping with chunk factor 16,
/// pseudo-inverse memory vectors and a 1-order OMP decoder with 300
/// non-zeros per column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub n: usize,
    pub m: usize,
    pub strategy: Strategy,
    pub chunk_factor: usize,
    pub encoder: Construction,
    pub order: SupportOrder,
    /// Maximum non-zeros per decoder column; `None` keeps the dense fit.
    pub omp_l: Option<usize>,
    /// Energy fraction of the cascade head; `None` skips the split.
    pub cascade_p: Option<f64>,
    /// Product-quantization subspace count; `None` keeps the bank dense.
    pub pq_subspaces: Option<usize>,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            n: 50,
            m: 4,
            strategy: Strategy::Orthogonal,
            chunk_factor: grouping::DEFAULT_CHUNK_FACTOR,
            encoder: Construction::Pinv,
            order: SupportOrder::Order1,
            omp_l: Some(300),
            cascade_p: None,
            pq_subspaces: None,
            seed: 0,
        }
    }
}

impl BuildParams {
    pub(crate) fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig::new(self.order, self.omp_l)
    }
}

/// Memory-vector storage: explicit columns or PQ codes plus codebooks.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexBank {
    Dense(MemoryBank),
    Quantized {
        quantizer: ProductQuantizer,
        codes: PqCodes,
    },
}

impl IndexBank {
    pub fn num_units(&self) -> usize {
        match self {
            IndexBank::Dense(b) => b.num_units(),
            IndexBank::Quantized { codes, .. } => codes.num_units(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            IndexBank::Dense(b) => b.dim(),
            IndexBank::Quantized { quantizer, .. } => quantizer.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub(crate) params: BuildParams,
    pub(crate) assignment: Assignment,
    pub(crate) bank: IndexBank,
    pub(crate) decoder: SparseDecoder,
    pub(crate) co_members: CoMembers,
}

/// Per-batch pieces assembled by [`Index::build_from_batches`].
struct BatchParts {
    assignment: Assignment,
    bank: MemoryBank,
    codes: Option<PqCodes>,
    decoder: SparseDecoder,
}

fn batch_seed(seed: u64, batch: usize) -> u64 {
    seed.wrapping_add((batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Index {
    /// Builds an index over one resident dataset.
    pub fn build(dataset: &Dataset, params: &BuildParams) -> Result<Self> {
        Self::build_internal(std::iter::once(Ok(BatchRef::Borrowed(dataset))), params)
    }

    /// Builds an index from a stream of dataset batches.
    ///
    /// Each batch is grouped, encoded and decoded with only that batch
    /// resident, then dropped; vector and unit indices are offset by the
    /// batch position. A quantizer, when requested, is trained on the first
    /// batch's memory vectors and reused for the rest.
    pub fn build_from_batches<I>(batches: I, params: &BuildParams) -> Result<Self>
    where
        I: IntoIterator<Item = Result<Dataset>>,
    {
        Self::build_internal(
            batches.into_iter().map(|b| b.map(BatchRef::Owned)),
            params,
        )
    }

    fn build_internal<'a, I>(batches: I, params: &BuildParams) -> Result<Self>
    where
        I: Iterator<Item = Result<BatchRef<'a>>>,
    {
        if let Some(p) = params.cascade_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "cascade energy fraction must be in (0, 1], got {p}"
                )));
            }
        }
        let mut quantizer: Option<ProductQuantizer> = None;
        let mut parts: Vec<BatchParts> = Vec::new();
        for (b, batch) in batches.enumerate() {
            let batch = batch?;
            let dataset = batch.as_ref();
            parts.push(Self::build_batch(
                dataset,
                params,
                batch_seed(params.seed, b),
                &mut quantizer,
            )?);
            // `batch` dropped here: only one batch of columns stays resident.
        }
        if parts.is_empty() {
            return Err(Error::InvalidParams("no batches to build from".into()));
        }

        let mut parts = parts.into_iter();
        let first = parts.next().expect("checked non-empty");
        let mut assignments = vec![first.assignment];
        let mut bank = first.bank;
        let mut codes = first.codes;
        let mut decoder = first.decoder;
        for part in parts {
            let unit_offset = bank.num_units() as u32;
            decoder.concat(part.decoder, unit_offset)?;
            bank.concat(part.bank)?;
            if let (Some(codes), Some(part_codes)) = (codes.as_mut(), part.codes.as_ref()) {
                codes.concat(part_codes)?;
            }
            assignments.push(part.assignment);
        }
        let assignment = Assignment::concat(assignments)?;

        if let Some(p) = params.cascade_p {
            decoder = decoding::cascade_split(decoder, p)?;
        }
        let bank = match (quantizer, codes) {
            (Some(quantizer), Some(codes)) => IndexBank::Quantized { quantizer, codes },
            _ => IndexBank::Dense(bank),
        };
        let co_members = CoMembers::from_assignment(&assignment);
        Ok(Self {
            params: *params,
            assignment,
            bank,
            decoder,
            co_members,
        })
    }

    /// Grouping, encoding and decoder fitting for one resident batch.
    ///
    /// Memory vectors and coefficients are rounded through `f32` before the
    /// decoder is fitted, so the fit sees exactly the values query time will
    /// and single-precision persistence stays lossless.
    fn build_batch(
        dataset: &Dataset,
        params: &BuildParams,
        seed: u64,
        quantizer: &mut Option<ProductQuantizer>,
    ) -> Result<BatchParts> {
        let assignment = match params.strategy {
            Strategy::Random => grouping::random_assignment(dataset.len(), params.n, params.m, seed)?,
            Strategy::Orthogonal => grouping::orthogonal_assignment(
                dataset,
                params.n,
                params.m,
                params.chunk_factor,
                seed,
            )?,
        };
        let mut bank = match params.encoder {
            Construction::Sum => encoding::encode_sum(dataset, &assignment)?,
            Construction::Pinv => encoding::encode_pinv(dataset, &assignment, None)?,
        };
        bank.round_to_f32();
        let config = params.decoder_config();
        let (codes, mut decoder) = match params.pq_subspaces {
            Some(sub_count) => {
                if quantizer.is_none() {
                    let mut pq = quantization::pq_train(&bank, sub_count, params.seed)?;
                    pq.round_to_f32();
                    *quantizer = Some(pq);
                }
                let pq = quantizer.as_ref().expect("just trained");
                let codes = quantization::pq_encode(pq, &bank)?;
                let decoder =
                    quantization::build_decoder_pq(pq, &codes, dataset, &assignment, &config)?;
                (Some(codes), decoder)
            }
            None => {
                let decoder = decoding::build_decoder(&bank, dataset, &assignment, &config)?;
                (None, decoder)
            }
        };
        decoder.round_to_f32();
        Ok(BatchParts {
            assignment,
            bank,
            codes,
            decoder,
        })
    }

    /// Assembles an index from already-built pieces, rebuilding the
    /// co-membership sets. Used by persistence.
    pub(crate) fn from_parts(
        params: BuildParams,
        assignment: Assignment,
        bank: IndexBank,
        decoder: SparseDecoder,
    ) -> Result<Self> {
        if bank.num_units() != assignment.num_units()
            || decoder.num_units() != assignment.num_units()
            || decoder.num_vectors() != assignment.num_vectors()
        {
            return Err(Error::ShapeMismatch(
                "index sections disagree on shapes".into(),
            ));
        }
        let co_members = CoMembers::from_assignment(&assignment);
        Ok(Self {
            params,
            assignment,
            bank,
            decoder,
            co_members,
        })
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn bank(&self) -> &IndexBank {
        &self.bank
    }

    pub fn decoder(&self) -> &SparseDecoder {
        &self.decoder
    }

    pub fn co_members(&self) -> &CoMembers {
        &self.co_members
    }

    pub fn num_vectors(&self) -> usize {
        self.assignment.num_vectors()
    }

    pub fn num_units(&self) -> usize {
        self.assignment.num_units()
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    /// Group measurements for a query: dense inner products or quantized
    /// lookup-table sums.
    pub fn measure(&self, query: &[f64]) -> Result<Vec<f64>> {
        match &self.bank {
            IndexBank::Dense(bank) => crate::search::measure(bank, query),
            IndexBank::Quantized { quantizer, codes } => {
                quantization::pq_measure(quantizer, codes, query)
            }
        }
    }

    pub fn stats(&self) -> IndexStats {
        let m = self.num_units();
        let d = self.dim();
        let n_vec = self.num_vectors();
        let nnz = self.decoder.nnz();
        let nnz_head = self.decoder.nnz_head();
        IndexStats {
            num_vectors: n_vec,
            dim: d,
            num_units: m,
            nnz,
            nnz_head,
            predicted_rho: complexity_ratio(m, d, nnz as f64, n_vec).unwrap_or(f64::NAN),
            predicted_rho_head: nnz_head
                .map(|h| complexity_ratio(m, d, h as f64, n_vec).unwrap_or(f64::NAN)),
        }
    }
}

enum BatchRef<'a> {
    Borrowed(&'a Dataset),
    Owned(Dataset),
}

impl BatchRef<'_> {
    fn as_ref(&self) -> &Dataset {
        match self {
            BatchRef::Borrowed(d) => d,
            BatchRef::Owned(d) => d,
        }
    }
}

/// Size and predicted-complexity summary.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexStats {
    pub num_vectors: usize,
    pub dim: usize,
    pub num_units: usize,
    pub nnz: u64,
    pub nnz_head: Option<u64>,
    /// `(M d + nnz) / (d N)` for full decoding.
    pub predicted_rho: f64,
    /// Complexity of the cascade head pass alone, when split.
    pub predicted_rho_head: Option<f64>,
}

impl std::fmt::Display for IndexStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "vectors:        {}", self.num_vectors)?;
        writeln!(f, "dimensionality: {}", self.dim)?;
        writeln!(f, "memory units:   {}", self.num_units)?;
        writeln!(f, "decoder nnz:    {}", self.nnz)?;
        if let Some(h) = self.nnz_head {
            writeln!(f, "cascade U0 nnz: {h}")?;
        }
        write!(f, "predicted rho:  {:.4}", self.predicted_rho)?;
        if let Some(r) = self.predicted_rho_head {
            write!(f, "\nhead-pass rho:  {r:.4}")?;
        }
        Ok(())
    }
}
