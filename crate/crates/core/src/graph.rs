//! Class-wise connected patch graph: iterative construction, triplet
//! extraction (one per node), and the unconstrained random-triplet baseline.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampler::SampleBatch;

/// One graph node. Duplicates are appended copies of unique-label nodes so
/// that every original node has a same-label partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphNode {
    pub patch_index: usize,
    pub label: u32,
    pub is_duplicate: bool,
}

/// Patch graph with attractive (same-label) and rejective (different-label)
/// edges. Built so the attractive subgraph of every class is connected.
#[derive(Debug, Clone, Default)]
pub struct PatchGraph {
    pub nodes: Vec<GraphNode>,
    pub attractive_edges: Vec<(usize, usize)>,
    pub rejective_edges: Vec<(usize, usize)>,
}

/// (anchor, positive, negative) node indices. Anchor and positive share a
/// label; the negative differs. `anchor == positive` only encodes the
/// duplicated positive of a unique-label anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl PatchGraph {
    pub fn original_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_duplicate).count()
    }

    /// Structural checks: edge label constraints, no self-loops, no duplicate
    /// edges, and the 2-edges-per-insertion bound.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for (kind, edges) in [
            ("attractive", &self.attractive_edges),
            ("rejective", &self.rejective_edges),
        ] {
            for &(i, j) in edges {
                if i == j {
                    return Err(format!("{kind} self-loop at node {i}"));
                }
                if i >= self.nodes.len() || j >= self.nodes.len() {
                    return Err(format!("{kind} edge ({i}, {j}) out of bounds"));
                }
                if !seen.insert((i.min(j), i.max(j))) {
                    return Err(format!("duplicate edge ({i}, {j})"));
                }
                let same = self.nodes[i].label == self.nodes[j].label;
                if kind == "attractive" && !same {
                    return Err(format!("attractive edge ({i}, {j}) joins different labels"));
                }
                if kind == "rejective" && same {
                    return Err(format!("rejective edge ({i}, {j}) joins equal labels"));
                }
            }
        }
        let edge_count = self.attractive_edges.len() + self.rejective_edges.len();
        if edge_count > 2 * self.nodes.len() {
            return Err(format!(
                "{edge_count} edges exceed the 2x bound for {} nodes",
                self.nodes.len()
            ));
        }
        Ok(())
    }

    /// Debug dump, one edge per line: `A i j` or `R i j`.
    pub fn write_edge_list<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for &(i, j) in &self.attractive_edges {
            writeln!(out, "A {i} {j}")?;
        }
        for &(i, j) in &self.rejective_edges {
            writeln!(out, "R {i} {j}")?;
        }
        Ok(())
    }
}

/// Build a class-wise connected graph over the batch's patches.
///
/// Nodes are absorbed in a random order. Each insertion adds one attractive
/// edge to a uniformly chosen existing same-label node and one rejective edge
/// to a uniformly chosen existing different-label node, when such nodes
/// exist. Any node still without a same-label partner afterwards is
/// duplicated: a copy flagged `is_duplicate` joins it by an attractive edge.
pub fn build_graph(batch: &SampleBatch, rng: &mut ChaCha8Rng) -> Result<PatchGraph> {
    build_from_labels(&batch.labels(), rng)
}

pub(crate) fn build_from_labels(labels: &[u32], rng: &mut ChaCha8Rng) -> Result<PatchGraph> {
    let distinct: HashSet<u32> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::TooFewClasses);
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(rng);

    let mut nodes: Vec<GraphNode> = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| GraphNode {
            patch_index: i,
            label,
            is_duplicate: false,
        })
        .collect();
    let mut attractive = Vec::with_capacity(labels.len());
    let mut rejective = Vec::with_capacity(labels.len());
    let mut attractive_degree = vec![0usize; labels.len()];
    let mut inserted: Vec<usize> = Vec::with_capacity(labels.len());
    let mut by_label: HashMap<u32, Vec<usize>> = HashMap::new();

    for &node in &order {
        let label = labels[node];
        let same = by_label.entry(label).or_default();
        if !same.is_empty() {
            let partner = same[rng.gen_range(0..same.len())];
            attractive.push((partner, node));
            attractive_degree[partner] += 1;
            attractive_degree[node] += 1;
        }
        let diff_total = inserted.len() - same.len();
        if diff_total > 0 {
            let mut k = rng.gen_range(0..diff_total);
            for &candidate in &inserted {
                if labels[candidate] != label {
                    if k == 0 {
                        rejective.push((candidate, node));
                        break;
                    }
                    k -= 1;
                }
            }
        }
        by_label
            .get_mut(&label)
            .expect("entry created above")
            .push(node);
        inserted.push(node);
    }

    // duplication rule: unique-label nodes become their own positives
    for i in 0..labels.len() {
        if attractive_degree[i] == 0 {
            let copy = nodes.len();
            nodes.push(GraphNode {
                patch_index: nodes[i].patch_index,
                label: nodes[i].label,
                is_duplicate: true,
            });
            attractive.push((i, copy));
        }
    }

    Ok(PatchGraph {
        nodes,
        attractive_edges: attractive,
        rejective_edges: rejective,
    })
}

/// Derive exactly one triplet per non-duplicate node, with that node as the
/// anchor. Positives come uniformly from attractive neighbors; negatives
/// uniformly from rejective neighbors, falling back to a uniform
/// different-label original node when the anchor has no rejective edge.
pub fn extract_triplets(graph: &PatchGraph, rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    let n = graph.nodes.len();
    let mut attractive_adj = vec![Vec::new(); n];
    for &(i, j) in &graph.attractive_edges {
        attractive_adj[i].push(j);
        attractive_adj[j].push(i);
    }
    let mut rejective_adj = vec![Vec::new(); n];
    for &(i, j) in &graph.rejective_edges {
        rejective_adj[i].push(j);
        rejective_adj[j].push(i);
    }

    let mut triplets = Vec::with_capacity(graph.original_node_count());
    for anchor in 0..n {
        if graph.nodes[anchor].is_duplicate {
            continue;
        }
        let positives = &attractive_adj[anchor];
        let positive = positives[rng.gen_range(0..positives.len())];
        let negatives = &rejective_adj[anchor];
        let negative = if negatives.is_empty() {
            let label = graph.nodes[anchor].label;
            let candidates: Vec<usize> = (0..n)
                .filter(|&j| !graph.nodes[j].is_duplicate && graph.nodes[j].label != label)
                .collect();
            candidates[rng.gen_range(0..candidates.len())]
        } else {
            negatives[rng.gen_range(0..negatives.len())]
        };
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    triplets
}

/// Baseline strategy: `count` triplets with uniform anchors, uniform
/// same-label positives (the anchor itself when its label is unique), and
/// uniform different-label negatives. No connectivity constraint. Indices
/// refer to `batch.patches`.
pub fn random_triplets(
    batch: &SampleBatch,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triplet>> {
    let labels = batch.labels();
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_label.entry(label).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Err(Error::TooFewClasses);
    }

    let n = labels.len();
    let mut triplets = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor = rng.gen_range(0..n);
        let same = &by_label[&labels[anchor]];
        let positive = if same.len() == 1 {
            anchor
        } else {
            let anchor_pos = same.iter().position(|&i| i == anchor).expect("member");
            let k = rng.gen_range(0..same.len() - 1);
            same[if k >= anchor_pos { k + 1 } else { k }]
        };
        let diff_total = n - same.len();
        let mut k = rng.gen_range(0..diff_total);
        let mut negative = usize::MAX;
        for (j, &label) in labels.iter().enumerate() {
            if label != labels[anchor] {
                if k == 0 {
                    negative = j;
                    break;
                }
                k -= 1;
            }
        }
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(triplets)
}

/// True iff, for every class, BFS over attractive edges restricted to that
/// class reaches all of its nodes. Works from the raw edge list only.
pub fn check_classwise_connected(graph: &PatchGraph) -> bool {
    let n = graph.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in &graph.attractive_edges {
        if graph.nodes[i].label == graph.nodes[j].label {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        by_class.entry(node.label).or_default().push(i);
    }
    for (class, members) in by_class {
        let mut visited = HashSet::new();
        let mut queue = VecDeque::new();
        visited.insert(members[0]);
        queue.push_back(members[0]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if graph.nodes[w].label == class && visited.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        if visited.len() != members.len() {
            return false;
        }
    }
    true
}
