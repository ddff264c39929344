//! Trainable embedders with hand-rolled backprop, plain SGD, bit-exact
//! checkpoints, and the tuning loop: sample, build triplets, step.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{seeded_rng, streams, sub_seed, Embedding, LabeledImage, RunConfig};
use crate::error::{Error, Result};
use crate::graph::{build_graph, extract_triplets, random_triplets, Triplet};
use crate::metric::triplet_loss_grad;
use crate::sampler::sample_patches;

/// Hidden width of the default two-layer embedder.
pub const DEFAULT_HIDDEN_DIM: usize = 64;

const CHECKPOINT_MAGIC: &[u8; 8] = b"PGEMB001";

/// How triplets are derived from a sampled batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Class-wise connected graph, one triplet per node.
    Graph,
    /// Unconstrained uniform picks, equal triplet budget.
    Random,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Graph => "graph",
            Strategy::Random => "random",
        }
    }
}

/// Embedder architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Pass-through; embedding dim equals input dim.
    Identity,
    /// Single affine map.
    Linear,
    /// Affine, ReLU, affine.
    TwoLayer,
}

impl Variant {
    fn code(self) -> u8 {
        match self {
            Variant::Identity => 0,
            Variant::Linear => 1,
            Variant::TwoLayer => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Identity),
            1 => Some(Variant::Linear),
            2 => Some(Variant::TwoLayer),
            _ => None,
        }
    }
}

/// Trainable map from flattened patch pixels to an embedding vector.
///
/// Inputs pass through a fixed per-channel standardization (a no-op until
/// [`Embedder::set_standardization`] is called) before the parametric map.
/// Parameters live in one flat block so updates, checkpoints, and gradient
/// checks all see the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    variant: Variant,
    input_dim: usize,
    hidden_dim: usize,
    embed_dim: usize,
    channels: usize,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    params: Vec<f64>,
}

fn param_count(variant: Variant, input_dim: usize, hidden_dim: usize, embed_dim: usize) -> usize {
    match variant {
        Variant::Identity => 0,
        Variant::Linear => embed_dim * input_dim + embed_dim,
        Variant::TwoLayer => {
            hidden_dim * input_dim + hidden_dim + embed_dim * hidden_dim + embed_dim
        }
    }
}

fn xavier_fill(params: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for p in params {
        *p = rng.gen_range(-limit..limit);
    }
}

impl Embedder {
    pub fn identity(dim: usize, channels: usize) -> Self {
        Self {
            variant: Variant::Identity,
            input_dim: dim,
            hidden_dim: 0,
            embed_dim: dim,
            channels: channels.max(1),
            input_mean: vec![0.0; channels.max(1)],
            input_std: vec![1.0; channels.max(1)],
            params: Vec::new(),
        }
    }

    pub fn linear(
        input_dim: usize,
        embed_dim: usize,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut params = vec![0.0; param_count(Variant::Linear, input_dim, 0, embed_dim)];
        xavier_fill(
            &mut params[..embed_dim * input_dim],
            input_dim,
            embed_dim,
            rng,
        );
        Self {
            variant: Variant::Linear,
            input_dim,
            hidden_dim: 0,
            embed_dim,
            channels: channels.max(1),
            input_mean: vec![0.0; channels.max(1)],
            input_std: vec![1.0; channels.max(1)],
            params,
        }
    }

    pub fn two_layer(
        input_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut params =
            vec![0.0; param_count(Variant::TwoLayer, input_dim, hidden_dim, embed_dim)];
        let w1 = hidden_dim * input_dim;
        let w2_start = w1 + hidden_dim;
        xavier_fill(&mut params[..w1], input_dim, hidden_dim, rng);
        xavier_fill(
            &mut params[w2_start..w2_start + embed_dim * hidden_dim],
            hidden_dim,
            embed_dim,
            rng,
        );
        Self {
            variant: Variant::TwoLayer,
            input_dim,
            hidden_dim,
            embed_dim,
            channels: channels.max(1),
            input_mean: vec![0.0; channels.max(1)],
            input_std: vec![1.0; channels.max(1)],
            params,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Install per-channel input standardization (applied as `(x - mean) / std`).
    pub fn set_standardization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.channels || std.len() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                got: mean.len().min(std.len()),
            });
        }
        self.input_mean = mean;
        self.input_std = std.into_iter().map(|s| s.max(1e-6)).collect();
        Ok(())
    }

    fn standardized(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % self.channels;
                (v - self.input_mean[c]) / self.input_std[c]
            })
            .collect()
    }

    /// Map an input vector to an embedding.
    pub fn forward(&self, input: &[f64]) -> Result<Embedding> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        let z = self.standardized(input);
        let out = match self.variant {
            Variant::Identity => z,
            Variant::Linear => {
                let (w, b) = self.linear_slices();
                affine(w, b, &z, self.embed_dim)
            }
            Variant::TwoLayer => {
                let (w1, b1, w2, b2) = self.two_layer_slices();
                let mut hidden = affine(w1, b1, &z, self.hidden_dim);
                for h in &mut hidden {
                    if *h < 0.0 {
                        *h = 0.0;
                    }
                }
                affine(w2, b2, &hidden, self.embed_dim)
            }
        };
        Ok(Embedding::new(out))
    }

    /// Gradient of `upstream . forward(input)` with respect to the flat
    /// parameter block.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        if upstream.len() != self.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.embed_dim,
                got: upstream.len(),
            });
        }
        let z = self.standardized(input);
        let mut grads = vec![0.0; self.params.len()];
        match self.variant {
            Variant::Identity => {}
            Variant::Linear => {
                let w_len = self.embed_dim * self.input_dim;
                for i in 0..self.embed_dim {
                    for (j, &zj) in z.iter().enumerate() {
                        grads[i * self.input_dim + j] = upstream[i] * zj;
                    }
                    grads[w_len + i] = upstream[i];
                }
            }
            Variant::TwoLayer => {
                let (w1, b1, w2, _) = self.two_layer_slices();
                let pre = affine(w1, b1, &z, self.hidden_dim);
                let hidden: Vec<f64> = pre.iter().map(|&h| h.max(0.0)).collect();

                let w1_len = self.hidden_dim * self.input_dim;
                let w2_start = w1_len + self.hidden_dim;
                let w2_len = self.embed_dim * self.hidden_dim;
                for i in 0..self.embed_dim {
                    for (j, &hj) in hidden.iter().enumerate() {
                        grads[w2_start + i * self.hidden_dim + j] = upstream[i] * hj;
                    }
                    grads[w2_start + w2_len + i] = upstream[i];
                }
                // ReLU subgradient takes the zero branch at the kink
                for j in 0..self.hidden_dim {
                    if pre[j] <= 0.0 {
                        continue;
                    }
                    let mut dh = 0.0;
                    for (i, &u) in upstream.iter().enumerate() {
                        dh += u * w2[i * self.hidden_dim + j];
                    }
                    for (k, &zk) in z.iter().enumerate() {
                        grads[j * self.input_dim + k] = dh * zk;
                    }
                    grads[w1_len + j] = dh;
                }
            }
        }
        Ok(grads)
    }

    fn linear_slices(&self) -> (&[f64], &[f64]) {
        let w_len = self.embed_dim * self.input_dim;
        (&self.params[..w_len], &self.params[w_len..])
    }

    fn two_layer_slices(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let w1_len = self.hidden_dim * self.input_dim;
        let w2_start = w1_len + self.hidden_dim;
        let w2_len = self.embed_dim * self.hidden_dim;
        (
            &self.params[..w1_len],
            &self.params[w1_len..w2_start],
            &self.params[w2_start..w2_start + w2_len],
            &self.params[w2_start + w2_len..],
        )
    }

    /// Serialize to `path`. Round-trips bit-exactly through [`Embedder::load`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(64 + 8 * (self.params.len() + 2 * self.channels));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(self.variant.code());
        for dim in [
            self.input_dim,
            self.hidden_dim,
            self.embed_dim,
            self.channels,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for value in self.input_mean.iter().chain(&self.input_std) {
            out.extend_from_slice(&value.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for value in &self.params {
            out.extend_from_slice(&value.to_le_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::Checkpoint(format!("{} ({reason})", path.display()));
        let mut cursor = Cursor {
            bytes: &bytes,
            pos: 0,
        };

        if cursor.take(8).ok_or_else(|| bad("truncated magic"))? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let code = cursor.take(1).ok_or_else(|| bad("truncated variant"))?[0];
        let variant = Variant::from_code(code).ok_or_else(|| bad("unknown variant"))?;
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let raw = cursor.take(4).ok_or_else(|| bad("truncated dims"))?;
            *d = u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize;
        }
        let [input_dim, hidden_dim, embed_dim, channels] = dims;
        if channels == 0 {
            return Err(bad("zero channels"));
        }
        let input_mean =
            read_f64s(&mut cursor, channels).ok_or_else(|| bad("truncated mean block"))?;
        let input_std =
            read_f64s(&mut cursor, channels).ok_or_else(|| bad("truncated std block"))?;
        let count_raw = cursor.take(8).ok_or_else(|| bad("truncated param count"))?;
        let count = u64::from_le_bytes(count_raw.try_into().expect("8 bytes")) as usize;
        if count != param_count(variant, input_dim, hidden_dim, embed_dim) {
            return Err(bad("parameter count does not match dims"));
        }
        let params =
            read_f64s(&mut cursor, count).ok_or_else(|| bad("truncated parameter block"))?;
        if cursor.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            variant,
            input_dim,
            hidden_dim,
            embed_dim,
            channels,
            input_mean,
            input_std,
            params,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(len)?;
        if end > self.bytes.len() {
            return None;
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Some(slice)
    }
}

fn read_f64s(cursor: &mut Cursor, count: usize) -> Option<Vec<f64>> {
    let raw = cursor.take(8 * count)?;
    Some(
        raw.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    )
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = b[i];
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        out.push(acc);
    }
    out
}

/// `parameters <- parameters - rate * grads`, rejecting non-finite gradients.
pub fn sgd_step(embedder: &mut Embedder, grads: &[f64], rate: f64) -> Result<()> {
    if grads.len() != embedder.params.len() {
        return Err(Error::DimensionMismatch {
            expected: embedder.params.len(),
            got: grads.len(),
        });
    }
    if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "parameter gradient at index {pos}"
        )));
    }
    for (p, g) in embedder.params.iter_mut().zip(grads) {
        *p -= rate * g;
    }
    Ok(())
}

/// Progress record for one executed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub loss: f64,
    pub active_fraction: f64,
}

/// Result of a tuning run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub embedder: Embedder,
    pub iteration: usize,
    pub seed: u64,
    pub history: Vec<HistoryPoint>,
    /// Iterations skipped because of a transient sampling failure.
    pub skipped_steps: Vec<usize>,
}

/// Per-channel mean and standard deviation over all pixels of `images`.
pub fn channel_stats(images: &[LabeledImage]) -> (Vec<f64>, Vec<f64>) {
    let channels = images.first().map_or(1, |i| i.channels);
    let mut sum = vec![0.0; channels];
    let mut sum_sq = vec![0.0; channels];
    let mut count = 0usize;
    for img in images {
        count += img.width * img.height;
        for (i, &p) in img.pixels.iter().enumerate() {
            sum[i % channels] += p;
            sum_sq[i % channels] += p * p;
        }
    }
    let n = count.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
        .collect();
    (mean, std)
}

/// Train the default two-layer embedder on `images`.
///
/// Each step draws `images_per_batch` images with replacement, samples
/// patches, derives triplets via `strategy`, and takes one SGD step at the
/// scheduled rate. All randomness is derived from `cfg.seed` through
/// per-purpose streams, so both strategies see identical patch sampling.
pub fn tune(images: &[LabeledImage], cfg: &RunConfig, strategy: Strategy) -> Result<TrainState> {
    cfg.validate()?;
    let channels = images.first().map_or(3, |i| i.channels);
    let input_dim = cfg.patch_resize * cfg.patch_resize * channels;
    let mut init_rng = seeded_rng(sub_seed(cfg.seed, streams::INIT));
    let mut embedder = Embedder::two_layer(
        input_dim,
        DEFAULT_HIDDEN_DIM,
        cfg.embed_dim,
        channels,
        &mut init_rng,
    );
    let (mean, std) = channel_stats(images);
    embedder.set_standardization(mean, std)?;
    tune_with_embedder(embedder, images, cfg, strategy)
}

/// [`tune`] with a caller-supplied embedder (variant, widths, init).
pub fn tune_with_embedder(
    mut embedder: Embedder,
    images: &[LabeledImage],
    cfg: &RunConfig,
    strategy: Strategy,
) -> Result<TrainState> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Dataset("cannot tune on an empty dataset".into()));
    }
    if crate::data::dataset_labels(images).len() < 2 {
        return Err(Error::TooFewClasses);
    }

    let mut history = Vec::with_capacity(cfg.iterations);
    let mut skipped_steps = Vec::new();
    let mut consecutive_failures = 0usize;
    for iteration in 0..cfg.iterations {
        match run_step(&mut embedder, images, cfg, strategy, iteration) {
            Ok((loss, active_fraction)) => {
                consecutive_failures = 0;
                history.push(HistoryPoint {
                    iteration,
                    loss,
                    active_fraction,
                });
            }
            Err(Error::EmptyBatch) | Err(Error::TooFewClasses) => {
                skipped_steps.push(iteration);
                consecutive_failures += 1;
                if consecutive_failures >= 20 {
                    return Err(Error::TrainingStalled(consecutive_failures));
                }
            }
            Err(other) => return Err(other),
        }
    }
    Ok(TrainState {
        embedder,
        iteration: cfg.iterations,
        seed: cfg.seed,
        history,
        skipped_steps,
    })
}

fn run_step(
    embedder: &mut Embedder,
    images: &[LabeledImage],
    cfg: &RunConfig,
    strategy: Strategy,
    iteration: usize,
) -> Result<(f64, f64)> {
    let rate = cfg.rate_at(iteration);
    let mut batch_rng = seeded_rng(sub_seed(
        sub_seed(cfg.seed, streams::BATCH),
        iteration as u64,
    ));
    let drawn: Vec<LabeledImage> = (0..cfg.images_per_batch)
        .map(|_| images[batch_rng.gen_range(0..images.len())].clone())
        .collect();
    let batch = sample_patches(&drawn, cfg, &mut batch_rng)?;

    let embeddings: Vec<Embedding> = batch
        .patches
        .iter()
        .map(|p| embedder.forward(&p.pixels))
        .collect::<Result<_>>()?;

    let mut triplet_rng = seeded_rng(sub_seed(
        sub_seed(cfg.seed, streams::TRIPLETS),
        iteration as u64,
    ));
    let triplets = batch_triplets(&batch, strategy, &mut triplet_rng)?;

    let (report, grad_set) = triplet_loss_grad(&embeddings, &triplets, cfg.margin_alpha)?;
    let mut param_grads = vec![0.0; embedder.num_params()];
    for (patch, grad) in batch.patches.iter().zip(&grad_set.grads) {
        if grad.iter().all(|&g| g == 0.0) {
            continue;
        }
        let pg = embedder.backward(&patch.pixels, grad)?;
        for (acc, g) in param_grads.iter_mut().zip(&pg) {
            *acc += g;
        }
    }
    sgd_step(embedder, &param_grads, rate)?;
    Ok((report.loss, report.active_fraction()))
}

/// Triplets over patch indices for the chosen strategy. Graph-node triplets
/// are remapped through `patch_index`, so a duplicate positive resolves to
/// its original patch and shares that embedding.
pub fn batch_triplets(
    batch: &crate::sampler::SampleBatch,
    strategy: Strategy,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triplet>> {
    match strategy {
        Strategy::Graph => {
            let graph = build_graph(batch, rng)?;
            let node_triplets = extract_triplets(&graph, rng);
            Ok(node_triplets
                .iter()
                .map(|t| Triplet {
                    anchor: graph.nodes[t.anchor].patch_index,
                    positive: graph.nodes[t.positive].patch_index,
                    negative: graph.nodes[t.negative].patch_index,
                })
                .collect())
        }
        Strategy::Random => random_triplets(batch, batch.patches.len(), rng),
    }
}
