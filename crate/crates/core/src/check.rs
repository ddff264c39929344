//! Built-in self-tests: metric properties, graph invariants, and gradient
//! agreement. Backs the CLI `check` subcommand.

use rand::Rng;

use crate::data::{seeded_rng, Embedding};
use crate::graph::{build_graph, check_classwise_connected, extract_triplets, Triplet};
use crate::metric::{
    finite_diff_grad, gradient_relative_error, perceptual_distance, triplet_loss_grad,
};
use crate::sampler::SampleBatch;
use crate::train::Embedder;

/// Outcome of one self-test.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

pub(crate) fn batch_with_labels(labels: &[u32]) -> SampleBatch {
    use crate::data::{Patch, Rect};
    SampleBatch {
        patches: labels
            .iter()
            .map(|&label| Patch {
                pixels: vec![0.0],
                side: 1,
                channels: 1,
                label,
                source: (0, Rect::new(0, 0, 1, 1)),
            })
            .collect(),
        per_image_counts: vec![labels.len()],
    }
}

fn metric_properties(pairs: usize) -> CheckResult {
    let mut rng = seeded_rng(0xD15);
    let mut violations = 0usize;
    for _ in 0..pairs {
        let dim = rng.gen_range(2..16);
        let a = Embedding::new((0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let b = Embedding::new((0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect());
        if a.norm() < 1e-6 || b.norm() < 1e-6 {
            continue;
        }
        let d = perceptual_distance(&a, &b).unwrap();
        let sym = perceptual_distance(&b, &a).unwrap();
        let self_d = perceptual_distance(&a, &a).unwrap();
        let factor: f64 = rng.gen_range(0.1..10.0);
        let scaled = Embedding::new(a.values.iter().map(|v| v * factor).collect());
        let d_scaled = perceptual_distance(&scaled, &b).unwrap();
        if !(0.0..=4.0 + 1e-12).contains(&d)
            || (d - sym).abs() > 1e-12
            || self_d > 1e-12
            || (d - d_scaled).abs() > 1e-9
        {
            violations += 1;
        }
    }
    result(
        "metric properties",
        violations == 0,
        format!("{pairs} random pairs, {violations} violations"),
    )
}

fn graph_invariants(batches: usize) -> CheckResult {
    let mut rng = seeded_rng(0x6AF);
    let mut failures = 0usize;
    for _ in 0..batches {
        let classes = rng.gen_range(2..=8u32);
        let count = rng.gen_range(8..=80usize);
        let mut labels: Vec<u32> = (0..count).map(|_| rng.gen_range(0..classes)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let batch = batch_with_labels(&labels);
        let graph = match build_graph(&batch, &mut rng) {
            Ok(g) => g,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let triplets = extract_triplets(&graph, &mut rng);
        if graph.validate().is_err()
            || !check_classwise_connected(&graph)
            || triplets.len() != graph.original_node_count()
        {
            failures += 1;
        }
    }
    result(
        "graph invariants",
        failures == 0,
        format!("{batches} fuzzed batches, {failures} failures"),
    )
}

fn embedding_gradients(instances: usize) -> CheckResult {
    let mut rng = seeded_rng(0x9EAD);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let alpha = 0.6;
    while checked < instances {
        let dim = rng.gen_range(2..10);
        let count = rng.gen_range(4..10) * 2;
        let embeddings: Vec<Embedding> = (0..count)
            .map(|_| Embedding::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let triplets: Vec<Triplet> = (0..count / 2)
            .map(|i| Triplet {
                anchor: 2 * i,
                positive: 2 * i + 1,
                negative: (2 * i + 2) % count,
            })
            .collect();
        let near_kink = triplets.iter().any(|t| {
            let d_ap = perceptual_distance(&embeddings[t.anchor], &embeddings[t.positive]).unwrap();
            let d_an = perceptual_distance(&embeddings[t.anchor], &embeddings[t.negative]).unwrap();
            (d_ap - d_an + alpha).abs() < 1e-4
        });
        if near_kink {
            continue;
        }
        let (_, analytic) = triplet_loss_grad(&embeddings, &triplets, alpha).unwrap();
        let fd = finite_diff_grad(&embeddings, &triplets, alpha, 1e-6).unwrap();
        worst = worst.max(gradient_relative_error(&analytic, &fd));
        checked += 1;
    }
    result(
        "embedding gradients vs finite differences",
        worst < 1e-5,
        format!("{instances} instances, worst relative error {worst:.2e}"),
    )
}

fn end_to_end_gradients(instances: usize) -> CheckResult {
    let mut rng = seeded_rng(0xE2E);
    let alpha = 0.8;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    'instance: while checked < instances {
        let embedder = Embedder::two_layer(6, 5, 4, 1, &mut seeded_rng(rng.gen()));
        let inputs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let triplets = [
            Triplet {
                anchor: 0,
                positive: 1,
                negative: 4,
            },
            Triplet {
                anchor: 2,
                positive: 3,
                negative: 7,
            },
            Triplet {
                anchor: 5,
                positive: 4,
                negative: 0,
            },
        ];
        let embeddings: Vec<Embedding> = inputs
            .iter()
            .map(|x| embedder.forward(x).unwrap())
            .collect();
        if embeddings.iter().any(|e| e.norm() < 1e-6) {
            continue 'instance; // dead ReLU layer emitted a zero vector
        }
        for t in &triplets {
            let d_ap = perceptual_distance(&embeddings[t.anchor], &embeddings[t.positive]).unwrap();
            let d_an = perceptual_distance(&embeddings[t.anchor], &embeddings[t.negative]).unwrap();
            if (d_ap - d_an + alpha).abs() < 1e-4 {
                continue 'instance;
            }
        }
        let (_, emb_grads) = triplet_loss_grad(&embeddings, &triplets, alpha).unwrap();
        let mut analytic = vec![0.0; embedder.num_params()];
        for (x, g) in inputs.iter().zip(&emb_grads.grads) {
            for (acc, v) in analytic.iter_mut().zip(embedder.backward(x, g).unwrap()) {
                *acc += v;
            }
        }
        let h = 1e-6;
        let mut probe = embedder.clone();
        let mut diff_sq = 0.0;
        let mut fd_sq = 0.0;
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = probe.params()[idx];
            let loss_at = |value: f64, probe: &mut Embedder| {
                probe.params_mut()[idx] = value;
                let embs: Vec<Embedding> =
                    inputs.iter().map(|x| probe.forward(x).unwrap()).collect();
                crate::metric::triplet_loss(&embs, &triplets, alpha)
                    .unwrap()
                    .loss
            };
            let plus = loss_at(orig + h, &mut probe);
            let minus = loss_at(orig - h, &mut probe);
            probe.params_mut()[idx] = orig;
            let fd = (plus - minus) / (2.0 * h);
            diff_sq += (fd - a) * (fd - a);
            fd_sq += fd * fd;
        }
        worst = worst.max(diff_sq.sqrt() / fd_sq.sqrt().max(1e-12));
        checked += 1;
    }
    result(
        "end-to-end gradients vs finite differences",
        worst < 1e-5,
        format!("{instances} instances, worst relative error {worst:.2e}"),
    )
}

/// Run every self-test. The CLI maps any failure to a nonzero exit.
pub fn self_check() -> Vec<CheckResult> {
    vec![
        metric_properties(1000),
        graph_invariants(50),
        embedding_gradients(10),
        end_to_end_gradients(3),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_self_checks_pass() {
        for check in self_check() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
