//! Dataset preparation, pretraining, checkpoints and embedding export.

mod config;
mod data;
mod export;
mod train;

pub use config::{ConfigError, TrainConfig};
pub use data::{generate_city, prepare_dataset, City, Dataset, DatasetMeta, GenConfig, PrepConfig, PrepError, Split};
pub use export::{
    export_static_segment_embeddings, export_trajectory_embeddings, write_embeddings_csv, TrajectoryExport,
    EXPORT_BATCH,
};
pub use train::{
    batch_masks, build_model, evaluate_loss, featurizer_for, make_batch, prepare_all, pretrain, CheckpointMeta,
    MetricRow, MetricsLog, Pretrained, TrainError,
};
