//! Similarity search by non-adaptive group testing.
//!
//! Dataset vectors are grouped into *memory units*, each represented by a
//! single *memory vector* (sum or pseudo-inverse construction). At query time
//! only the memory vectors are measured; a sparse decoder matrix maps the
//! group measurements back to per-vector similarity estimates, so the
//! original vectors never have to be resident. Orthogonal grouping keeps the
//! members of a unit mutually uncorrelated, which both lowers decoding noise
//! and justifies a per-unit non-maxima suppression of the ranked results.
//!
//! Pipeline:
//!
//! 1. [`grouping`] - assign vectors to units (random baseline or greedy
//!    orthogonal chunks),
//! 2. [`encoding`] - build memory vectors (sum or Moore-Penrose
//!    pseudo-inverse),
//! 3. [`decoding`] - fit one sparse decoder column per vector from its local
//!    neighborhood in the assignment graph (dense least squares or OMP),
//!    optionally split into a cascade pair,
//! 4. [`search`] - measure, decode, rank, correct,
//! 5. [`quantization`] - optional product quantization of the memory bank,
//! 6. [`eval`] - mAP / complexity-ratio instrumentation and batched builds,
//! 7. [`io`] - fvecs/bvecs ingestion and bit-exact index persistence.

pub mod decoding;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod grouping;
pub mod index;
pub mod io;
pub mod model;
pub mod quantization;
pub mod search;

mod linalg;

pub use error::{Error, Result};
pub use grouping::{Assignment, AssignmentParams, Strategy};
pub use index::{BuildParams, Index, IndexBank};
pub use model::{Dataset, RankedResult};
pub use search::QueryParams;

