//! Embedding-quality metrics, the paired strategy comparison, the graph-size
//! sweep, and CSV/SVG output.
//!
//! Held-out evaluation patches come from the same images through a dedicated
//! RNG stream, disjoint from every training stream.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::data::{seeded_rng, streams, sub_seed, Embedding, LabeledImage, RunConfig};
use crate::error::{Error, Result};
use crate::metric::{perceptual_distance, triplet_loss};
use crate::sampler::sample_patches;
use crate::svg;
use crate::train::{batch_triplets, tune, HistoryPoint, Strategy, TrainState};

/// Embedding-quality proxies computed on a held-out patch batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Fraction of graph-derived triplets with zero hinge at the configured margin.
    pub triplet_satisfaction: f64,
    /// Leave-one-out 1-NN accuracy under the normalized squared distance.
    pub knn_accuracy: f64,
    /// Mean same-class distance over mean cross-class distance.
    pub intra_inter_ratio: f64,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "triplet_satisfaction={:.4} knn_accuracy={:.4} intra_inter_ratio={:.4}",
            self.triplet_satisfaction, self.knn_accuracy, self.intra_inter_ratio
        )
    }
}

/// Leave-one-out 1-NN accuracy: a patch counts as correct when its nearest
/// other embedding shares its label. Ties break to the lower index.
pub fn knn_accuracy(embeddings: &[Embedding], labels: &[u32]) -> Result<f64> {
    if embeddings.len() != labels.len() || embeddings.len() < 2 {
        return Err(Error::Config(
            "knn needs at least two aligned embeddings".into(),
        ));
    }
    let mut correct = 0usize;
    for i in 0..embeddings.len() {
        let mut best = usize::MAX;
        let mut best_dist = f64::INFINITY;
        for j in 0..embeddings.len() {
            if i == j {
                continue;
            }
            let d = perceptual_distance(&embeddings[i], &embeddings[j])?;
            if d < best_dist {
                best_dist = d;
                best = j;
            }
        }
        if labels[best] == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / embeddings.len() as f64)
}

/// Mean intra-class distance divided by mean inter-class distance.
/// 0 when classes are collapsed to points; requires at least one cross pair.
pub fn intra_inter_ratio(embeddings: &[Embedding], labels: &[u32]) -> Result<f64> {
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let d = perceptual_distance(&embeddings[i], &embeddings[j])?;
            if labels[i] == labels[j] {
                intra.0 += d;
                intra.1 += 1;
            } else {
                inter.0 += d;
                inter.1 += 1;
            }
        }
    }
    if inter.1 == 0 {
        return Err(Error::TooFewClasses);
    }
    let inter_mean = inter.0 / inter.1 as f64;
    let intra_mean = if intra.1 == 0 {
        0.0
    } else {
        intra.0 / intra.1 as f64
    };
    if inter_mean <= 0.0 {
        return Err(Error::NonFinite("intra/inter ratio".into()));
    }
    Ok(intra_mean / inter_mean)
}

/// Evaluate an embedder on a fresh held-out batch drawn from `images`.
pub fn evaluate(
    embedder: &crate::train::Embedder,
    images: &[LabeledImage],
    cfg: &RunConfig,
    seed: u64,
) -> Result<EvalReport> {
    let mut rng = seeded_rng(sub_seed(seed, streams::EVAL));
    let batch = sample_patches(images, cfg, &mut rng)?;
    let labels = batch.labels();
    {
        let distinct: std::collections::HashSet<u32> = labels.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(Error::TooFewClasses);
        }
    }
    let embeddings: Vec<Embedding> = batch
        .patches
        .iter()
        .map(|p| embedder.forward(&p.pixels))
        .collect::<Result<_>>()?;

    let knn = knn_accuracy(&embeddings, &labels)?;
    let ratio = intra_inter_ratio(&embeddings, &labels)?;
    // satisfaction over graph-derived triplets; these depend only on labels
    // and the eval stream, so paired arms score the same triplet set
    let triplets = batch_triplets(&batch, Strategy::Graph, &mut rng)?;
    let report = triplet_loss(&embeddings, &triplets, cfg.margin_alpha)?;
    Ok(EvalReport {
        triplet_satisfaction: report.satisfaction(),
        knn_accuracy: knn,
        intra_inter_ratio: ratio,
    })
}

/// One evaluated training run.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub seed: u64,
    pub arm: String,
    /// Node-count target for sweep rows; None for strategy arms.
    pub nodes: Option<usize>,
    pub report: EvalReport,
    pub iterations: usize,
    pub wall_ms_per_iter: f64,
}

/// Per-arm aggregate over seeds.
#[derive(Debug, Clone)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub satisfaction_mean: f64,
    pub satisfaction_median: f64,
    pub knn_mean: f64,
    pub knn_std: f64,
    pub ratio_mean: f64,
    pub wall_ms_mean: f64,
}

/// Rows plus summaries for one experiment. Failed seeds are recorded and do
/// not abort the remaining ones.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub summaries: Vec<ArmSummary>,
    pub failures: Vec<(u64, String)>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn summarize(rows: &[ExperimentRow]) -> Vec<ArmSummary> {
    let mut arms: Vec<String> = Vec::new();
    for row in rows {
        if !arms.contains(&row.arm) {
            arms.push(row.arm.clone());
        }
    }
    arms.into_iter()
        .map(|arm| {
            let of_arm: Vec<&ExperimentRow> = rows.iter().filter(|r| r.arm == arm).collect();
            let sat: Vec<f64> = of_arm
                .iter()
                .map(|r| r.report.triplet_satisfaction)
                .collect();
            let knn: Vec<f64> = of_arm.iter().map(|r| r.report.knn_accuracy).collect();
            let ratio: Vec<f64> = of_arm.iter().map(|r| r.report.intra_inter_ratio).collect();
            let wall: Vec<f64> = of_arm.iter().map(|r| r.wall_ms_per_iter).collect();
            ArmSummary {
                arm,
                runs: of_arm.len(),
                satisfaction_mean: mean(&sat),
                satisfaction_median: median(&sat),
                knn_mean: mean(&knn),
                knn_std: std_dev(&knn),
                ratio_mean: mean(&ratio),
                wall_ms_mean: mean(&wall),
            }
        })
        .collect()
}

fn timed_run(
    images: &[LabeledImage],
    cfg: &RunConfig,
    strategy: Strategy,
) -> Result<(TrainState, EvalReport, f64)> {
    let start = Instant::now();
    let state = tune(images, cfg, strategy)?;
    let wall_ms_per_iter = start.elapsed().as_secs_f64() * 1e3 / cfg.iterations as f64;
    let report = evaluate(&state.embedder, images, cfg, cfg.seed)?;
    Ok((state, report, wall_ms_per_iter))
}

/// Train both strategies per seed on identical patch streams and evaluate
/// them on identical held-out batches.
pub fn compare_strategies(
    images: &[LabeledImage],
    cfg: &RunConfig,
    seeds: &[u64],
) -> Result<ExperimentResult> {
    if seeds.len() < 2 {
        return Err(Error::Config("compare needs at least 2 seeds".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        let run_cfg = cfg.clone().with_seed(seed);
        let mut seed_rows = Vec::new();
        let mut failed = None;
        for strategy in [Strategy::Graph, Strategy::Random] {
            match timed_run(images, &run_cfg, strategy) {
                Ok((_, report, wall)) => seed_rows.push(ExperimentRow {
                    seed,
                    arm: strategy.name().to_string(),
                    nodes: None,
                    report,
                    iterations: run_cfg.iterations,
                    wall_ms_per_iter: wall,
                }),
                Err(e) => {
                    failed = Some(format!("{} arm: {e}", strategy.name()));
                    break;
                }
            }
        }
        match failed {
            None => rows.extend(seed_rows),
            Some(msg) => failures.push((seed, msg)),
        }
    }
    if rows.is_empty() {
        let (seed, msg) = &failures[0];
        return Err(Error::Dataset(format!(
            "all {} seeds failed; first (seed {seed}): {msg}",
            failures.len()
        )));
    }
    let summaries = summarize(&rows);
    Ok(ExperimentResult {
        rows,
        summaries,
        failures,
    })
}

/// Images per batch needed to reach `target` nodes at a fixed
/// patches-per-image budget.
pub fn images_for_node_target(target: usize, patches_per_image: usize) -> Result<usize> {
    if patches_per_image == 0 {
        return Err(Error::Config("patches_per_image must be >= 1".into()));
    }
    if target == 0 || !target.is_multiple_of(patches_per_image) {
        return Err(Error::NodeTarget(format!(
            "target {target} is not a positive multiple of {patches_per_image} patches per image"
        )));
    }
    Ok(target / patches_per_image)
}

/// Graph-strategy runs at several node-count targets, recording metrics and
/// wall time per iteration.
pub fn sweep_graph_size(
    images: &[LabeledImage],
    cfg: &RunConfig,
    node_targets: &[usize],
    seeds: &[u64],
) -> Result<ExperimentResult> {
    if node_targets.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs node targets and seeds".into()));
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &target in node_targets {
        let images_per_batch = images_for_node_target(target, cfg.patches_per_image)?;
        let arm = format!("nodes{target}");
        for &seed in seeds {
            let mut run_cfg = cfg.clone().with_seed(seed);
            run_cfg.images_per_batch = images_per_batch;
            match timed_run(images, &run_cfg, Strategy::Graph) {
                Ok((_, report, wall)) => rows.push(ExperimentRow {
                    seed,
                    arm: arm.clone(),
                    nodes: Some(target),
                    report,
                    iterations: run_cfg.iterations,
                    wall_ms_per_iter: wall,
                }),
                Err(e) => failures.push((seed, format!("{arm}: {e}"))),
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Dataset("every sweep run failed".into()));
    }
    let summaries = summarize(&rows);
    Ok(ExperimentResult {
        rows,
        summaries,
        failures,
    })
}

// ---------------------------------------------------------------------------
// CSV / SVG output
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str =
    "seed,arm,triplet_satisfaction,knn_accuracy,intra_inter_ratio,iters,wall_ms";

/// Render an experiment as CSV: header, one row per (seed, arm), then a
/// summary block as `#` comment lines. Deterministic except for `wall_ms`.
pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{:.3}\n",
            r.seed,
            r.arm,
            r.report.triplet_satisfaction,
            r.report.knn_accuracy,
            r.report.intra_inter_ratio,
            r.iterations,
            r.wall_ms_per_iter,
        ));
    }
    out.push_str("# summary\n");
    for s in &result.summaries {
        out.push_str(&format!(
            "# {},runs={},satisfaction_mean={:.6},satisfaction_median={:.6},knn_mean={:.6},knn_std={:.6},ratio_mean={:.6}\n",
            s.arm, s.runs, s.satisfaction_mean, s.satisfaction_median, s.knn_mean, s.knn_std, s.ratio_mean,
        ));
    }
    for (seed, msg) in &result.failures {
        out.push_str(&format!("# failed seed {seed}: {msg}\n"));
    }
    out
}

pub fn write_experiment_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    fs::write(path, experiment_csv(result)).map_err(|e| Error::io(path, e))
}

/// Per-step training history as CSV.
pub fn history_csv(history: &[HistoryPoint]) -> String {
    let mut out = String::from("iteration,loss,active_fraction\n");
    for p in history {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            p.iteration, p.loss, p.active_fraction
        ));
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[HistoryPoint]) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Scatter of per-seed 1-NN accuracy, one series per arm.
pub fn write_compare_svg(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut arms: Vec<String> = Vec::new();
    for r in &result.rows {
        if !arms.contains(&r.arm) {
            arms.push(r.arm.clone());
        }
    }
    let series: Vec<svg::Series> = arms
        .iter()
        .enumerate()
        .map(|(i, arm)| svg::Series {
            label: arm,
            color: svg::PALETTE[i % svg::PALETTE.len()],
            points: result
                .rows
                .iter()
                .filter(|r| &r.arm == arm)
                .enumerate()
                .map(|(k, r)| (k as f64, r.report.knn_accuracy))
                .collect(),
        })
        .collect();
    let chart = svg::chart_group(
        "1-NN accuracy by strategy",
        "seed index",
        "knn accuracy",
        &series,
        0.0,
    );
    fs::write(path, svg::document(&[chart])).map_err(|e| Error::io(path, e))
}

/// Two stacked panels: mean 1-NN accuracy and per-iteration wall time, both
/// against the node-count target.
pub fn write_sweep_svg(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut targets: Vec<usize> = Vec::new();
    for r in &result.rows {
        if let Some(n) = r.nodes {
            if !targets.contains(&n) {
                targets.push(n);
            }
        }
    }
    targets.sort_unstable();
    let per_target = |f: &dyn Fn(&ExperimentRow) -> f64| -> Vec<(f64, f64)> {
        targets
            .iter()
            .map(|&n| {
                let vals: Vec<f64> = result
                    .rows
                    .iter()
                    .filter(|r| r.nodes == Some(n))
                    .map(f)
                    .collect();
                (n as f64, mean(&vals))
            })
            .collect()
    };
    let knn = svg::Series {
        label: "mean knn",
        color: svg::PALETTE[0],
        points: per_target(&|r| r.report.knn_accuracy),
    };
    let time = svg::Series {
        label: "ms per iteration",
        color: svg::PALETTE[1],
        points: per_target(&|r| r.wall_ms_per_iter),
    };
    let charts = [
        svg::chart_group(
            "Accuracy vs graph size",
            "nodes",
            "mean knn accuracy",
            &[knn],
            0.0,
        ),
        svg::chart_group(
            "Cost vs graph size",
            "nodes",
            "ms per iteration",
            &[time],
            400.0,
        ),
    ];
    fs::write(path, svg::document(&charts)).map_err(|e| Error::io(path, e))
}

/// Training loss curve.
pub fn write_history_svg(path: &Path, history: &[HistoryPoint]) -> Result<()> {
    let series = svg::Series {
        label: "loss",
        color: svg::PALETTE[0],
        points: history
            .iter()
            .map(|p| (p.iteration as f64, p.loss))
            .collect(),
    };
    let chart = svg::chart_group(
        "Training loss",
        "iteration",
        "mean hinge loss",
        &[series],
        0.0,
    );
    fs::write(path, svg::document(&[chart])).map_err(|e| Error::io(path, e))
}
