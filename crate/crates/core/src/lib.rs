//! Patch-triplet metric tuning over class-wise connected graphs.
//!
//! The pipeline samples labeled patches across a batch of images, builds a
//! graph whose same-class nodes form connected subgraphs, derives one triplet
//! per node, and minimizes a normalized hinge ranking loss through a small
//! trainable embedder. A random-triplet baseline and an evaluation harness
//! round out the experiment surface.

pub mod check;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod metric;
pub mod sampler;
mod svg;
pub mod train;

pub use data::{
    load_dataset, make_synthetic, seeded_rng, sub_seed, write_dataset, Embedding, LabeledImage,
    Patch, Rect, RunConfig, IGNORE_LABEL,
};
pub use error::{Error, Result};
pub use eval::{
    compare_strategies, evaluate, experiment_csv, images_for_node_target, sweep_graph_size,
    ArmSummary, EvalReport, ExperimentResult, ExperimentRow,
};
pub use graph::{
    build_graph, check_classwise_connected, extract_triplets, random_triplets, GraphNode,
    PatchGraph, Triplet,
};
pub use metric::{
    finite_diff_grad, gradient_relative_error, normalize, perceptual_distance, triplet_loss,
    triplet_loss_grad, GradientSet, LossReport,
};
pub use sampler::{central_label, rect_iou, sample_patches, SampleBatch};
pub use train::{
    sgd_step, tune, tune_with_embedder, Embedder, HistoryPoint, Strategy, TrainState, Variant,
};
