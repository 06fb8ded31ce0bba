//! Optimizer, schedules, the pre-training procedures and evaluation.

pub mod config;
pub mod eval;
pub mod procedures;
pub mod trainer;

pub use crate::data::LabeledDataset;
pub use config::{lr_at, lr_at_with, sgd_step, TrainConfig};
pub use eval::{evaluate, predict_all, rank_of, report_from_scores, topk_hit, ClassCount, EvalProvenance, EvalReport};
pub use procedures::{
    arap, image_to_input, joint_tune, non_joint_tune, output_to_image, pretrain_submodel, rap, reconstruct,
    train_baseline, train_from_scratch, train_method, train_submodel, tune_from, visualize_features, Method,
    Pretrained, TrainOutput,
};
pub use trainer::{grouped_lrs, run_stage, MetricRecord, Objective, Stage, StageReport, Tie, TieTarget};
