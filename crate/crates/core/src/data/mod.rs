//! Interaction ingestion: parsing, implicit conversion, k-core filtering,
//! id remapping, per-user splitting and BPR triple sampling.

mod filter;
mod interactions;
mod records;
mod remap;
mod sampler;
mod split;

pub use filter::{dedup_pairs, k_core_filter, threshold_implicit};
pub use interactions::InteractionSet;
pub use records::{parse_records, ColumnSpec, Delimiter, RatingRecord};
pub use remap::{remap_ids, IdMap};
pub use sampler::{sample_bpr_batch, NegativeSampler, TrainBatch, Triple};
pub use split::{split_user_based, split_counts, SplitDataset, SplitRatios};

/// A raw `(user, item)` pair before remapping.
pub type RawPair = (alloc::string::String, alloc::string::String);
