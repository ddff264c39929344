//! End-to-end library flow: synthesize, persist, reload, tune, checkpoint,
//! evaluate.

use patchgraph::data::{
    load_dataset, make_synthetic, two_phase_schedule, write_dataset, RunConfig,
};
use patchgraph::eval::{evaluate, history_csv};
use patchgraph::train::{tune, Embedder, Strategy};

#[test]
fn synth_to_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let images = make_synthetic(5, 4, (48, 48), 13).unwrap();
    write_dataset(&images, dir.path()).unwrap();
    let reloaded = load_dataset(dir.path()).unwrap();
    assert_eq!(reloaded.len(), 5);

    let cfg = RunConfig {
        seed: 2,
        images_per_batch: 4,
        patches_per_image: 8,
        patch_resize: 8,
        embed_dim: 8,
        iterations: 30,
        learning_rate_schedule: two_phase_schedule(30),
        ..RunConfig::default()
    };
    let state = tune(&reloaded, &cfg, Strategy::Graph).unwrap();
    assert_eq!(state.history.len() + state.skipped_steps.len(), 30);

    let csv = history_csv(&state.history);
    assert!(csv.starts_with("iteration,loss,active_fraction\n"));
    assert_eq!(csv.lines().count(), state.history.len() + 1);

    let ckpt = dir.path().join("embedder.ckpt");
    state.embedder.save(&ckpt).unwrap();
    let restored = Embedder::load(&ckpt).unwrap();

    // the restored embedder evaluates identically to the in-memory one
    let from_memory = evaluate(&state.embedder, &reloaded, &cfg, 2).unwrap();
    let from_disk = evaluate(&restored, &reloaded, &cfg, 2).unwrap();
    assert_eq!(from_memory, from_disk);
    assert!(from_memory.knn_accuracy > 0.5);
}

#[test]
fn strategies_share_the_sampling_stream() {
    // identical seeds must give both strategies identical patch batches, so
    // an identity embedder (never updated by anything patch-dependent)
    // evaluates identically under both
    let images = make_synthetic(4, 3, (32, 32), 77).unwrap();
    let cfg = RunConfig {
        seed: 6,
        images_per_batch: 3,
        patches_per_image: 5,
        patch_resize: 4,
        embed_dim: 4 * 4 * 3,
        iterations: 5,
        learning_rate_schedule: two_phase_schedule(5),
        ..RunConfig::default()
    };
    let graph = tune(&images, &cfg, Strategy::Graph).unwrap();
    let random = tune(&images, &cfg, Strategy::Random).unwrap();
    // same init, same batches, different triplet draws: histories align on
    // iteration indices and both run every step
    assert_eq!(graph.history.len(), random.history.len());
    for (g, r) in graph.history.iter().zip(&random.history) {
        assert_eq!(g.iteration, r.iteration);
    }
}
