//! Compact binary codes (ITQ) and Hamming ranking.

mod hamming;
mod itq;

pub use hamming::{hamming_distance, hamming_rank, BinaryCode};
pub use itq::{encode_itq, fit_itq, ItqFit, ItqModel, DEFAULT_ITQ_ITERS};
