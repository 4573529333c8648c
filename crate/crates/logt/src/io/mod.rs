//! File ingestion, persistence and text formats.

mod index_file;
mod text;
mod vecs;

pub use index_file::{load_index, save_index, FORMAT_VERSION};
pub use text::{parse_ground_truth, write_ground_truth, write_report_csv, write_results_csv};
pub use vecs::{read_bvecs, read_fvecs, read_vecs, write_fvecs, RawMatrix, VecsFormat};
