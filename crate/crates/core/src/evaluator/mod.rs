//! Recognition via generation: fused-distance rank-1 identification and
//! pose-binned report tables.

mod cache;
mod pipeline;
mod rank;
mod report;

pub use cache::{
    cache_key, load_embeddings, manifest_hash, save_embeddings, CACHE_MAGIC, CACHE_VERSION,
};
pub use pipeline::{evaluate, extractor_from_id, synthesize, EvalOptions, Evaluation};
pub use rank::{
    cosine_distance, fused_distance, rank1, EmbeddingSet, ProbeOutcome, RankedResult, Source, Tally,
};
pub use report::{format_percent, pose_binned_report, Report, ReportTable};
