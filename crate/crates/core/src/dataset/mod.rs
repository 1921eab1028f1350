//! Manifest ingestion, landmark alignment, pose taxonomy and the
//! probe/gallery protocol.

mod align;
mod manifest;
mod pose;
mod protocol;
mod record;
pub mod taxonomy;

pub use align::{
    align_face, align_face_with_transform, check_non_degenerate, estimate_similarity,
    sample_bilinear, template, warp, Similarity, ALIGN_SIZES, TEMPLATE_128,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestMode};
pub use pose::{pose_bin, PoseBin};
pub use protocol::{
    build_protocol, resolve_ref, seeded_shuffle, ProtocolDir, ProtocolMeta, ProtocolSplit,
    M2FPA_TRAIN_SUBJECTS,
};
pub use record::{Attribute, Illumination, ImageRecord, Landmarks};
