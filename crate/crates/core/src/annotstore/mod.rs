//! Workers, annotations, the quality-control funnel, and label statistics.

mod agreement;
mod quality;
mod records;
pub mod synth;

pub use agreement::{group_rate_ttest, krippendorff_alpha, krippendorff_alpha_nominal, GroupTTest};
pub use quality::{
    load_split, quality_filter, split_train_test, write_funnel, write_split, CleanDataset, FunnelStage, Side,
    StigmaAnnotation,
};
pub use records::{
    load_annotations, load_workers, write_annotations, write_workers, AnnotationRecord, Answer, Loaded, RowError,
    WorkerAttribute, WorkerProfile,
};
