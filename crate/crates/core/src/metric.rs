//! Squared distance on L2-normalized embeddings, mean hinge triplet loss,
//! exact analytic gradients, and a finite-difference oracle.
//!
//! All arithmetic is f64. The hinge subgradient at the kink takes the zero
//! branch.

use crate::data::Embedding;
use crate::error::{Error, Result};
use crate::graph::Triplet;

/// Norm floor below which an embedding is treated as degenerate.
pub const NORM_EPSILON: f64 = 1e-12;

/// Loss value with its per-triplet hinge terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub per_triplet: Vec<f64>,
    /// Triplets with a strictly positive hinge.
    pub active_count: usize,
}

impl LossReport {
    pub fn active_fraction(&self) -> f64 {
        self.active_count as f64 / self.per_triplet.len() as f64
    }

    /// Fraction of triplets whose margin is already satisfied.
    pub fn satisfaction(&self) -> f64 {
        1.0 - self.active_fraction()
    }
}

/// Per-node loss gradients, aligned with the embedding list.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<Vec<f64>>,
}

impl GradientSet {
    fn zeros(count: usize, dim: usize) -> Self {
        Self {
            grads: vec![vec![0.0; dim]; count],
        }
    }
}

fn checked_norm(x: &Embedding) -> Result<f64> {
    let norm = x.norm();
    if norm.is_nan() || norm <= NORM_EPSILON {
        return Err(Error::DegenerateEmbedding { norm });
    }
    Ok(norm)
}

/// `x / ||x||`, erroring on near-zero input.
pub fn normalize(x: &Embedding) -> Result<Embedding> {
    let norm = checked_norm(x)?;
    Ok(Embedding::new(x.values.iter().map(|v| v / norm).collect()))
}

/// Squared Euclidean distance between the L2-normalized inputs, in [0, 4].
/// Symmetric and invariant to positive rescaling of either argument.
pub fn perceptual_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ua = normalize(a)?;
    let ub = normalize(b)?;
    Ok(squared_distance(&ua.values, &ub.values))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean hinge ranking loss: per triplet, `max(D(a,p) - D(a,n) + alpha, 0)`.
pub fn triplet_loss(
    embeddings: &[Embedding],
    triplets: &[Triplet],
    alpha: f64,
) -> Result<LossReport> {
    if triplets.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    let mut per_triplet = Vec::with_capacity(triplets.len());
    let mut active_count = 0;
    for t in triplets {
        let d_ap = perceptual_distance(&embeddings[t.anchor], &embeddings[t.positive])?;
        let d_an = perceptual_distance(&embeddings[t.anchor], &embeddings[t.negative])?;
        let term = d_ap - d_an + alpha;
        if term > 0.0 {
            active_count += 1;
            per_triplet.push(term);
        } else {
            per_triplet.push(0.0);
        }
    }
    let loss = per_triplet.iter().sum::<f64>() / per_triplet.len() as f64;
    Ok(LossReport {
        loss,
        per_triplet,
        active_count,
    })
}

/// Loss plus its exact gradient with respect to every (pre-normalization)
/// embedding, accumulated over all triplets a node appears in. Inactive
/// triplets contribute nothing.
pub fn triplet_loss_grad(
    embeddings: &[Embedding],
    triplets: &[Triplet],
    alpha: f64,
) -> Result<(LossReport, GradientSet)> {
    if triplets.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let mut norms = Vec::with_capacity(embeddings.len());
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.dim(),
            });
        }
        let norm = checked_norm(e)?;
        norms.push(norm);
        units.push(e.values.iter().map(|v| v / norm).collect());
    }

    let mut grads = GradientSet::zeros(embeddings.len(), dim);
    let mut per_triplet = Vec::with_capacity(triplets.len());
    let mut active_count = 0;
    let inv_n = 1.0 / triplets.len() as f64;
    for t in triplets {
        let d_ap = squared_distance(&units[t.anchor], &units[t.positive]);
        let d_an = squared_distance(&units[t.anchor], &units[t.negative]);
        let term = d_ap - d_an + alpha;
        if term <= 0.0 {
            per_triplet.push(0.0);
            continue;
        }
        per_triplet.push(term);
        active_count += 1;
        accumulate_distance_grad(&mut grads, t.anchor, t.positive, inv_n, &units, &norms);
        accumulate_distance_grad(&mut grads, t.anchor, t.negative, -inv_n, &units, &norms);
    }
    let loss = per_triplet.iter().sum::<f64>() / per_triplet.len() as f64;
    Ok((
        LossReport {
            loss,
            per_triplet,
            active_count,
        },
        grads,
    ))
}

/// Add `scale * dD(x_i, x_j)/dx` to both endpoints' gradients.
///
/// With unit vectors u and cosine c = u_i . u_j:
/// dD/dx_i = 2 (c u_i - u_j) / ||x_i||, and symmetrically for x_j.
/// For i == j both contributions cancel exactly, matching D(x, x) = 0.
fn accumulate_distance_grad(
    grads: &mut GradientSet,
    i: usize,
    j: usize,
    scale: f64,
    units: &[Vec<f64>],
    norms: &[f64],
) {
    let c = dot(&units[i], &units[j]);
    for ((ui, uj), t) in units[i].iter().zip(&units[j]).zip(0..) {
        grads.grads[i][t] += scale * 2.0 * (c * ui - uj) / norms[i];
        grads.grads[j][t] += scale * 2.0 * (c * uj - ui) / norms[j];
    }
}

/// Central-difference gradient of [`triplet_loss`], one coordinate at a time.
/// The verification oracle: O(n * d) loss evaluations, no shared code with
/// the analytic path beyond the loss itself.
pub fn finite_diff_grad(
    embeddings: &[Embedding],
    triplets: &[Triplet],
    alpha: f64,
    h: f64,
) -> Result<GradientSet> {
    let mut work = embeddings.to_vec();
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let mut grads = GradientSet::zeros(embeddings.len(), dim);
    for k in 0..embeddings.len() {
        for t in 0..embeddings[k].dim() {
            let orig = work[k].values[t];
            work[k].values[t] = orig + h;
            let plus = triplet_loss(&work, triplets, alpha)?.loss;
            work[k].values[t] = orig - h;
            let minus = triplet_loss(&work, triplets, alpha)?.loss;
            work[k].values[t] = orig;
            grads.grads[k][t] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Frobenius-norm relative difference between two gradient sets.
pub fn gradient_relative_error(a: &GradientSet, b: &GradientSet) -> f64 {
    let mut diff = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (ga, gb) in a.grads.iter().zip(&b.grads) {
        for (x, y) in ga.iter().zip(gb) {
            diff += (x - y) * (x - y);
            norm_a += x * x;
            norm_b += y * y;
        }
    }
    let denom = norm_a.sqrt().max(norm_b.sqrt());
    if denom <= NORM_EPSILON {
        return 0.0;
    }
    diff.sqrt() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn e(values: &[f64]) -> Embedding {
        Embedding::new(values.to_vec())
    }

    #[test]
    fn normalize_three_four_five() {
        let u = normalize(&e(&[3.0, 4.0])).unwrap();
        assert!((u.values[0] - 0.6).abs() < 1e-15);
        assert!((u.values[1] - 0.8).abs() < 1e-15);
        // idempotent on unit vectors
        let again = normalize(&u).unwrap();
        assert_eq!(u, again);
        assert!(normalize(&e(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn distance_anchors() {
        let x = e(&[0.3, -0.8, 0.1]);
        assert_eq!(perceptual_distance(&x, &x).unwrap(), 0.0);
        assert!(
            (perceptual_distance(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap() - 2.0).abs() < 1e-15
        );
        assert!(
            (perceptual_distance(&e(&[2.0, 0.0]), &e(&[-3.0, 0.0])).unwrap() - 4.0).abs() < 1e-15
        );
        // scale invariance
        let d1 = perceptual_distance(&e(&[1.0, 0.0]), &e(&[0.0, 2.0])).unwrap();
        let d2 = perceptual_distance(&e(&[5.0, 0.0]), &e(&[0.0, 1.0])).unwrap();
        assert!((d1 - 2.0).abs() < 1e-15);
        assert!((d2 - 2.0).abs() < 1e-15);
    }

    fn t(a: usize, p: usize, n: usize) -> Triplet {
        Triplet {
            anchor: a,
            positive: p,
            negative: n,
        }
    }

    #[test]
    fn loss_hinge_cases() {
        // D(a,p) = 0, D(a,n) = 4: slack margin, zero loss
        let embs = [e(&[1.0, 0.0]), e(&[2.0, 0.0]), e(&[-1.0, 0.0])];
        let report = triplet_loss(&embs, &[t(0, 1, 2)], 2.1).unwrap();
        assert_eq!(report.per_triplet, vec![0.0]);
        assert_eq!(report.active_count, 0);

        // D(a,p) = D(a,n): hinge collapses to alpha
        let embs = [e(&[1.0, 0.0]), e(&[0.0, 1.0]), e(&[0.0, -1.0])];
        let report = triplet_loss(&embs, &[t(0, 1, 2)], 2.1).unwrap();
        assert!((report.per_triplet[0] - 2.1).abs() < 1e-15);

        // mean over {0, 2.1}
        let embs = [
            e(&[1.0, 0.0]),
            e(&[2.0, 0.0]),
            e(&[-1.0, 0.0]),
            e(&[0.0, 1.0]),
            e(&[0.0, -1.0]),
        ];
        let report = triplet_loss(&embs, &[t(0, 1, 2), t(0, 3, 4)], 2.1).unwrap();
        assert!((report.loss - 1.05).abs() < 1e-15);
        assert_eq!(report.active_count, 1);
        assert!((report.active_fraction() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_triplet_list_is_an_error() {
        let embs = [e(&[1.0, 0.0])];
        assert!(matches!(
            triplet_loss(&embs, &[], 1.0),
            Err(Error::EmptyTriplets)
        ));
        assert!(triplet_loss_grad(&embs, &[], 1.0).is_err());
    }

    #[test]
    fn inactive_triplets_give_exactly_zero_gradients() {
        let embs = [e(&[1.0, 0.0]), e(&[2.0, 0.0]), e(&[-1.0, 0.0])];
        let (report, grads) = triplet_loss_grad(&embs, &[t(0, 1, 2)], 1.0).unwrap();
        assert_eq!(report.loss, 0.0);
        for g in &grads.grads {
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn duplicate_positive_contributes_no_gradient_through_the_pair() {
        // anchor == positive encodes the duplication rule; D(a,a) is
        // identically zero so only the negative pair moves
        let embs = [e(&[1.0, 0.2]), e(&[0.4, 1.0])];
        let (_, analytic) = triplet_loss_grad(&embs, &[t(0, 0, 1)], 2.1).unwrap();
        let fd = finite_diff_grad(&embs, &[t(0, 0, 1)], 2.1, 1e-6).unwrap();
        assert!(gradient_relative_error(&analytic, &fd) < 1e-7);
    }

    fn random_instance(
        rng: &mut rand_chacha::ChaCha8Rng,
        dim: usize,
        classes: usize,
    ) -> (Vec<Embedding>, Vec<Triplet>) {
        let per_class = 2;
        let count = classes * per_class;
        let embeddings: Vec<Embedding> = (0..count)
            .map(|_| Embedding::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let labels: Vec<usize> = (0..count).map(|i| i / per_class).collect();
        let mut triplets = Vec::new();
        for anchor in 0..count {
            let positive = (0..count)
                .filter(|&j| labels[j] == labels[anchor] && j != anchor)
                .nth(rng.gen_range(0..per_class - 1))
                .unwrap();
            let negatives: Vec<usize> = (0..count)
                .filter(|&j| labels[j] != labels[anchor])
                .collect();
            let negative = negatives[rng.gen_range(0..negatives.len())];
            triplets.push(t(anchor, positive, negative));
        }
        (embeddings, triplets)
    }

    fn min_kink_distance(embs: &[Embedding], triplets: &[Triplet], alpha: f64) -> f64 {
        triplets
            .iter()
            .map(|t| {
                let d_ap = perceptual_distance(&embs[t.anchor], &embs[t.positive]).unwrap();
                let d_an = perceptual_distance(&embs[t.anchor], &embs[t.negative]).unwrap();
                (d_ap - d_an + alpha).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(20);
        let mut checked = 0;
        while checked < 30 {
            let dim = [2, 8, 32][checked % 3];
            let classes = 3 + checked % 8;
            let alpha = 0.5;
            let (embs, triplets) = random_instance(&mut rng, dim, classes);
            if min_kink_distance(&embs, &triplets, alpha) < 1e-4 {
                continue; // subgradient ambiguity at the hinge kink
            }
            let (_, analytic) = triplet_loss_grad(&embs, &triplets, alpha).unwrap();
            let fd = finite_diff_grad(&embs, &triplets, alpha, 1e-6).unwrap();
            let err = gradient_relative_error(&analytic, &fd);
            assert!(err < 1e-5, "instance {checked}: relative error {err}");
            checked += 1;
        }
    }

    #[test]
    fn active_negative_is_pushed_away_from_anchor() {
        // one active triplet; the descent step on the negative must have
        // positive inner product with the anchor-to-negative direction
        let embs = [e(&[1.0, 0.1]), e(&[0.9, 0.3]), e(&[0.7, 0.6])];
        let triplet = t(0, 1, 2);
        let report = triplet_loss(&embs, &[triplet], 2.1).unwrap();
        assert_eq!(report.active_count, 1);
        let (_, grads) = triplet_loss_grad(&embs, &[triplet], 2.1).unwrap();
        let ua = normalize(&embs[0]).unwrap();
        let un = normalize(&embs[2]).unwrap();
        let away: Vec<f64> = un
            .values
            .iter()
            .zip(&ua.values)
            .map(|(n, a)| n - a)
            .collect();
        let descent: Vec<f64> = grads.grads[2].iter().map(|g| -g).collect();
        assert!(dot(&descent, &away) > 0.0);
        // the finite-difference oracle agrees on the sign
        let fd = finite_diff_grad(&embs, &[triplet], 2.1, 1e-6).unwrap();
        let fd_descent: Vec<f64> = fd.grads[2].iter().map(|g| -g).collect();
        assert!(dot(&fd_descent, &away) > 0.0);
    }

    #[test]
    fn finite_differences_converge_second_order() {
        let mut rng = seeded_rng(31);
        let (embs, triplets) = random_instance(&mut rng, 4, 3);
        assert!(min_kink_distance(&embs, &triplets, 0.7) > 1e-3);
        let (_, analytic) = triplet_loss_grad(&embs, &triplets, 0.7).unwrap();
        let errors: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
            .iter()
            .map(|&h| {
                let fd = finite_diff_grad(&embs, &triplets, 0.7, h).unwrap();
                gradient_relative_error(&analytic, &fd)
            })
            .collect();
        assert!(errors[1] < errors[0]);
        assert!(errors[2] < errors[1]);
        // roughly quartering per halving of h
        assert!(errors[1] / errors[0] < 0.35, "{errors:?}");
        assert!(errors[2] / errors[1] < 0.35, "{errors:?}");
    }

    fn arbitrary_vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim).prop_filter("non-degenerate", |v| {
            v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3
        })
    }

    proptest! {
        #[test]
        fn distance_properties(a in arbitrary_vector(5), b in arbitrary_vector(5), c in 1e-3f64..1e3) {
            let (ea, eb) = (Embedding::new(a), Embedding::new(b));
            let d = perceptual_distance(&ea, &eb).unwrap();
            prop_assert!((0.0..=4.0 + 1e-12).contains(&d));
            prop_assert!((d - perceptual_distance(&eb, &ea).unwrap()).abs() < 1e-12);
            prop_assert!(perceptual_distance(&ea, &ea).unwrap() < 1e-12);
            let scaled = Embedding::new(ea.values.iter().map(|v| v * c).collect());
            prop_assert!((perceptual_distance(&scaled, &eb).unwrap() - d).abs() < 1e-9);
        }

        #[test]
        fn loss_invariant_under_per_node_rescaling(
            seed in 0u64..1000,
            scales in prop::collection::vec(1e-2f64..1e2, 6),
        ) {
            let mut rng = seeded_rng(seed);
            let (embs, triplets) = random_instance(&mut rng, 3, 3);
            let before = triplet_loss(&embs, &triplets, 1.3).unwrap();
            prop_assert!(before.loss >= 0.0);
            let rescaled: Vec<Embedding> = embs
                .iter()
                .enumerate()
                .map(|(i, e)| Embedding::new(e.values.iter().map(|v| v * scales[i % scales.len()]).collect()))
                .collect();
            let after = triplet_loss(&rescaled, &triplets, 1.3).unwrap();
            prop_assert!((before.loss - after.loss).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_zero_iff_all_margins_met() {
        // antipodal classes meet any margin up to 4 - 0 = 4 > 2.1
        let embs = [
            e(&[1.0, 0.0]),
            e(&[1.0, 0.0]),
            e(&[-1.0, 0.0]),
            e(&[-1.0, 0.0]),
        ];
        let trips = [t(0, 1, 2), t(2, 3, 0)];
        let report = triplet_loss(&embs, &trips, 2.1).unwrap();
        assert_eq!(report.loss, 0.0);
        assert_eq!(report.satisfaction(), 1.0);
        // nudge one margin: loss becomes positive
        let report = triplet_loss(&embs, &trips, 4.1).unwrap();
        assert!(report.loss > 0.0);
    }
}
