//! Deterministic, seedable generators for the synthetic benchmarks
//! (BA-Shapes, Tree-Grid, Infection, MixMotif), a Mutag file loader,
//! and dataset splitting.
//!
//! Every generator is a pure function of its seed: equal seeds produce
//! bit-identical datasets.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RalignError, Result};
use crate::graph::{adjacency_from_edges, parse_graphs, write_graph, Graph, Labels};
use crate::tensor::Matrix;

/// Feature dimensionality for the structural synthetic datasets; the tasks
/// carry no feature signal, so constant all-ones vectors are used.
pub const SYNTH_FEATURE_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    NodeLevel,
    GraphLevel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// One explanation-eligible instance: a graph (graph task) or a center node
/// in a graph (node task), with its ground-truth explanation edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainInstance {
    pub graph: usize,
    pub center: Option<usize>,
    /// canonical (u < v) ground-truth edges, full-graph indices
    pub gt_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    /// explanation-eligible instances; `splits` indexes into this list
    pub instances: Vec<ExplainInstance>,
    pub splits: Splits,
}

impl Dataset {
    pub fn graph_label(&self, idx: usize) -> usize {
        match &self.graphs[idx].labels {
            Labels::Graph(c) => *c,
            Labels::Node(_) => panic!("graph_label on node-task dataset"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.graphs {
            match (&g.labels, self.task) {
                (Labels::Graph(c), Task::GraphLevel) if *c >= self.num_classes => {
                    return Err(RalignError::Domain(format!(
                        "graph label {c} >= {} classes",
                        self.num_classes
                    )))
                }
                (Labels::Node(ls), Task::NodeLevel)
                    if ls.iter().any(|&l| l >= self.num_classes) =>
                {
                    return Err(RalignError::Domain("node label out of range".into()))
                }
                _ => {}
            }
        }
        for inst in &self.instances {
            let g = &self.graphs[inst.graph];
            for &(u, v) in &inst.gt_edges {
                if g.adjacency.get(u, v) == 0.0 {
                    return Err(RalignError::Domain(format!(
                        "gt edge ({u},{v}) not in adjacency of graph {}",
                        inst.graph
                    )));
                }
            }
        }
        Ok(())
    }
}

/// MixMotif coupling strength between base-graph type and motif label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixRatio(f64);

impl MixRatio {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(RalignError::Domain(format!("mix ratio {gamma} not in [0,1]")));
        }
        Ok(MixRatio(gamma))
    }

    pub fn gamma(&self) -> f64 {
        self.0
    }

    /// Probability that a base graph receives its matched motif.
    pub fn matched_prob(&self) -> f64 {
        (2.0 / 3.0) * self.0 + 1.0 / 3.0
    }

    /// Probability for each of the two unmatched motifs.
    pub fn unmatched_prob(&self) -> f64 {
        (1.0 - self.0) / 3.0
    }
}

/// Node features for the synthetic structural benchmarks: a one-hot encoding
/// of node degree (capped at the last bucket). Degree is locally informative
/// but never sufficient on its own, so trained models must still aggregate
/// neighborhood structure, while the encoding breaks the symmetry that makes
/// constant features hard to optimize.
fn degree_features(adjacency: &Matrix) -> Matrix {
    let n = adjacency.rows;
    let mut f = Matrix::zeros(n, SYNTH_FEATURE_DIM);
    for v in 0..n {
        let deg: f64 = adjacency.row(v).iter().sum();
        f.set(v, (deg as usize).min(SYNTH_FEATURE_DIM - 1), 1.0);
    }
    f
}

fn per_item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Barabasi-Albert base: each new node attaches to `m` distinct existing
/// nodes with degree-proportional preference (the first few nodes attach to
/// all predecessors while fewer than `m` exist).
fn barabasi_albert_edges(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(n * m);
    // endpoint multiset: sampling uniformly from it is degree-proportional
    let mut endpoints: Vec<usize> = vec![0];
    for v in 1..n {
        let k = m.min(v);
        let mut targets: Vec<usize> = Vec::with_capacity(k);
        while targets.len() < k {
            let candidate = if v <= m {
                targets.len() // attach to every predecessor
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if !targets.contains(&candidate) {
                targets.push(candidate);
            }
        }
        for &t in &targets {
            edges.push((t.min(v), t.max(v)));
            endpoints.push(t);
        }
        endpoints.push(v);
    }
    edges
}

/// House motif on nodes base..base+5, ordered [top, mid, mid, bottom, bottom].
/// Two roof edges plus a square base, 6 edges total.
fn house_edges(base: usize) -> Vec<(usize, usize)> {
    let (t, m1, m2, b1, b2) = (base, base + 1, base + 2, base + 3, base + 4);
    vec![(t, m1), (t, m2), (m1, m2), (m1, b1), (m2, b2), (b1, b2)]
}

const HOUSE_ROLES: [usize; 5] = [1, 2, 2, 3, 3];

/// 3x3 lattice on nodes base..base+9, row-major; 12 edges.
fn grid_edges(base: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(12);
    for r in 0..3 {
        for c in 0..3 {
            let i = base + r * 3 + c;
            if c < 2 {
                edges.push((i, i + 1));
            }
            if r < 2 {
                edges.push((i, i + 3));
            }
        }
    }
    edges
}

fn cycle_edges(base: usize, len: usize) -> Vec<(usize, usize)> {
    (0..len)
        .map(|i| {
            let u = base + i;
            let v = base + (i + 1) % len;
            (u.min(v), u.max(v))
        })
        .collect()
}

fn canonical(edges: &mut Vec<(usize, usize)>) {
    for e in edges.iter_mut() {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    }
    edges.sort_unstable();
    edges.dedup();
}

struct MotifPlacement {
    nodes: std::ops::Range<usize>,
    edges: Vec<(usize, usize)>,
}

fn build_node_dataset(
    name: &str,
    num_classes: usize,
    n_total: usize,
    mut edges: Vec<(usize, usize)>,
    node_labels: Vec<usize>,
    motifs: Vec<MotifPlacement>,
) -> Result<Dataset> {
    canonical(&mut edges);
    let adjacency = adjacency_from_edges(n_total, &edges);
    let mut gt = Matrix::zeros(n_total, n_total);
    let mut instances = Vec::new();
    for m in &motifs {
        for &(u, v) in &m.edges {
            gt.set(u, v, 1.0);
            gt.set(v, u, 1.0);
        }
        for v in m.nodes.clone() {
            instances.push(ExplainInstance {
                graph: 0,
                center: Some(v),
                gt_edges: m.edges.clone(),
            });
        }
    }
    let features = degree_features(&adjacency);
    let graph = Graph::new(
        adjacency,
        features,
        Labels::Node(node_labels),
        Some(gt),
        None,
    )?;
    Ok(Dataset {
        name: name.to_string(),
        task: Task::NodeLevel,
        graphs: vec![graph],
        num_classes,
        instances,
        splits: Splits::default(),
    })
}

/// BA base of 300 nodes plus 80 house motifs, each tied to one random base
/// node. Node labels: base 0, house roles 1..3. 700 nodes total, 4 classes.
pub fn gen_ba_shapes(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const BASE: usize = 300;
    const MOTIFS: usize = 80;
    let mut edges = barabasi_albert_edges(BASE, 5, &mut rng);
    let mut labels = vec![0usize; BASE];
    let mut motifs = Vec::with_capacity(MOTIFS);
    for m in 0..MOTIFS {
        let start = BASE + m * 5;
        let motif_edges = house_edges(start);
        edges.extend_from_slice(&motif_edges);
        labels.extend_from_slice(&HOUSE_ROLES);
        let attach_from = start + rng.random_range(0..5);
        let attach_to = rng.random_range(0..BASE);
        edges.push((attach_to, attach_from));
        motifs.push(MotifPlacement {
            nodes: start..start + 5,
            edges: motif_edges,
        });
    }
    let mut d = build_node_dataset("ba-shapes", 4, BASE + MOTIFS * 5, edges, labels, motifs)?;
    d.splits = split_indices(d.instances.len(), [0.8, 0.1, 0.1], seed)?;
    Ok(d)
}

/// Balanced binary tree of depth 8 (511 nodes) plus 80 3x3 grid motifs.
/// Node labels: tree 0, grid 1. 1231 nodes total, 2 classes.
pub fn gen_tree_grid(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const TREE: usize = 511; // 2^9 - 1
    const MOTIFS: usize = 80;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 0..TREE {
        for child in [2 * i + 1, 2 * i + 2] {
            if child < TREE {
                edges.push((i, child));
            }
        }
    }
    let mut labels = vec![0usize; TREE];
    let mut motifs = Vec::with_capacity(MOTIFS);
    for m in 0..MOTIFS {
        let start = TREE + m * 9;
        let motif_edges = grid_edges(start);
        edges.extend_from_slice(&motif_edges);
        labels.extend(std::iter::repeat(1).take(9));
        let attach_from = start + rng.random_range(0..9);
        // attach to a leaf (depth-8) tree node so the bridge edge carries as
        // little tree structure as possible into the motif neighborhood
        let leaf_start = TREE / 2; // first index of the last tree level
        let attach_to = leaf_start + rng.random_range(0..TREE - leaf_start);
        edges.push((attach_to, attach_from));
        motifs.push(MotifPlacement {
            nodes: start..start + 9,
            edges: motif_edges,
        });
    }
    let mut d = build_node_dataset("tree-grid", 2, TREE + MOTIFS * 9, edges, labels, motifs)?;
    d.splits = split_indices(d.instances.len(), [0.8, 0.1, 0.1], seed)?;
    Ok(d)
}

/// Erdos-Renyi graph of 1000 nodes with p = 8/999 (~4000 expected edges).
/// 5% of nodes are infected; every other node is labeled with its clipped
/// shortest distance to the infected set. Eligible instances are the
/// non-infected nodes with a unique shortest path of length <= 4.
pub fn gen_infection(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const N: usize = 1000;
    const INFECTED: usize = 50;
    let p = 8.0 / 999.0;
    let mut edges = Vec::new();
    for u in 0..N {
        for v in (u + 1)..N {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let adjacency = adjacency_from_edges(N, &edges);
    let mut order: Vec<usize> = (0..N).collect();
    order.shuffle(&mut rng);
    let mut infected = vec![false; N];
    for &v in order.iter().take(INFECTED) {
        infected[v] = true;
    }

    // multi-source BFS with shortest-path counting
    let mut dist = vec![usize::MAX; N];
    let mut paths = vec![0u64; N];
    let mut queue = VecDeque::new();
    for v in 0..N {
        if infected[v] {
            dist[v] = 0;
            paths[v] = 1;
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        for w in 0..N {
            if adjacency.get(u, w) == 0.0 {
                continue;
            }
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[u] + 1 {
                paths[w] = paths[w].saturating_add(paths[u]);
            }
        }
    }

    let labels: Vec<usize> = (0..N)
        .map(|v| if dist[v] == usize::MAX { 4 } else { dist[v].min(4) })
        .collect();

    let mut instances = Vec::new();
    for v in 0..N {
        if infected[v] || dist[v] == usize::MAX || dist[v] > 4 || paths[v] != 1 {
            continue;
        }
        // unique shortest path: walk back through the single predecessor chain
        let mut gt_edges = Vec::new();
        let mut cur = v;
        while dist[cur] > 0 {
            let mut pred = None;
            for u in 0..N {
                if adjacency.get(cur, u) != 0.0 && dist[u] + 1 == dist[cur] {
                    pred = Some(u);
                    break;
                }
            }
            let u = pred.expect("unique shortest path must have a predecessor");
            gt_edges.push((u.min(cur), u.max(cur)));
            cur = u;
        }
        gt_edges.reverse();
        instances.push(ExplainInstance {
            graph: 0,
            center: Some(v),
            gt_edges,
        });
    }

    let mut gt = Matrix::zeros(N, N);
    for inst in &instances {
        for &(u, v) in &inst.gt_edges {
            gt.set(u, v, 1.0);
            gt.set(v, u, 1.0);
        }
    }
    // infection status one-hot in the first two dimensions: the labels are
    // distances to infected nodes, which pure structure cannot reveal
    let mut features = Matrix::zeros(N, SYNTH_FEATURE_DIM);
    for v in 0..N {
        features.set(v, usize::from(!infected[v]), 1.0);
    }
    let graph = Graph::new(adjacency, features, Labels::Node(labels), Some(gt), None)?;
    let n_inst = instances.len();
    Ok(Dataset {
        name: "infection".to_string(),
        task: Task::NodeLevel,
        graphs: vec![graph],
        num_classes: 5,
        instances,
        splits: split_indices(n_inst, [0.8, 0.1, 0.1], seed)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BaseKind {
    Tree,
    Ladder,
    Wheel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifKind {
    Cycle,
    House,
    Grid,
}

impl BaseKind {
    fn matched_motif(self) -> MotifKind {
        match self {
            BaseKind::Tree => MotifKind::Cycle,
            BaseKind::Ladder => MotifKind::House,
            BaseKind::Wheel => MotifKind::Grid,
        }
    }
}

fn base_edges(kind: BaseKind) -> (usize, Vec<(usize, usize)>) {
    match kind {
        // balanced binary tree of depth 4: 15 nodes
        BaseKind::Tree => {
            let n = 15;
            let mut e = Vec::new();
            for i in 0..n {
                for child in [2 * i + 1, 2 * i + 2] {
                    if child < n {
                        e.push((i, child));
                    }
                }
            }
            (n, e)
        }
        // ladder of length 6: rails 0..6 and 6..12 plus rungs
        BaseKind::Ladder => {
            let mut e = Vec::new();
            for i in 0..5 {
                e.push((i, i + 1));
                e.push((6 + i, 6 + i + 1));
            }
            for i in 0..6 {
                e.push((i, 6 + i));
            }
            (12, e)
        }
        // wheel with 8 rim nodes and a hub: 9 nodes
        BaseKind::Wheel => {
            let mut e = Vec::new();
            for i in 0..8 {
                e.push((i, (i + 1) % 8));
                e.push((i, 8));
            }
            canonical(&mut e);
            (9, e)
        }
    }
}

fn motif_edges_for(kind: MotifKind, base: usize) -> (usize, Vec<(usize, usize)>) {
    match kind {
        MotifKind::Cycle => (6, cycle_edges(base, 6)),
        MotifKind::House => (5, house_edges(base)),
        MotifKind::Grid => (9, grid_edges(base)),
    }
}

/// 3000 graphs: a uniformly chosen base (Tree, Ladder, Wheel) with one motif
/// attached by a single edge. The matched motif is chosen with probability
/// (2/3)γ + 1/3, each other motif with (1-γ)/3. Graph label = motif type.
/// Split 5:2:3.
pub fn gen_mixmotif(gamma: MixRatio, seed: u64) -> Result<Dataset> {
    const GRAPHS: usize = 3000;
    let mut graphs = Vec::with_capacity(GRAPHS);
    let mut instances = Vec::with_capacity(GRAPHS);
    for i in 0..GRAPHS {
        let mut rng = per_item_rng(seed, i as u64);
        let base_kind = [BaseKind::Tree, BaseKind::Ladder, BaseKind::Wheel]
            [rng.random_range(0..3)];
        let matched = base_kind.matched_motif();
        let r: f64 = rng.random();
        let motif_kind = pick_motif(matched, gamma, r);

        let (base_n, mut edges) = base_edges(base_kind);
        let (motif_n, motif_e) = motif_edges_for(motif_kind, base_n);
        edges.extend_from_slice(&motif_e);
        let attach_from = base_n + rng.random_range(0..motif_n);
        let attach_to = rng.random_range(0..base_n);
        edges.push((attach_to, attach_from));
        canonical(&mut edges);

        let n = base_n + motif_n;
        let adjacency = adjacency_from_edges(n, &edges);
        let mut gt = Matrix::zeros(n, n);
        for &(u, v) in &motif_e {
            gt.set(u, v, 1.0);
            gt.set(v, u, 1.0);
        }
        let label = match motif_kind {
            MotifKind::Cycle => 0,
            MotifKind::House => 1,
            MotifKind::Grid => 2,
        };
        let features = degree_features(&adjacency);
        graphs.push(Graph::new(
            adjacency,
            features,
            Labels::Graph(label),
            Some(gt),
            None,
        )?);
        let mut gt_edges = motif_e.clone();
        canonical(&mut gt_edges);
        instances.push(ExplainInstance {
            graph: i,
            center: None,
            gt_edges,
        });
    }
    Ok(Dataset {
        name: format!("mixmotif-{}", gamma.gamma()),
        task: Task::GraphLevel,
        graphs,
        num_classes: 3,
        instances,
        splits: split_indices(GRAPHS, [0.5, 0.2, 0.3], seed)?,
    })
}

fn pick_motif(matched: MotifKind, gamma: MixRatio, r: f64) -> MotifKind {
    let order = [MotifKind::Cycle, MotifKind::House, MotifKind::Grid];
    let mut acc = 0.0;
    for kind in order {
        let p = if kind == matched {
            gamma.matched_prob()
        } else {
            gamma.unmatched_prob()
        };
        acc += p;
        if r < acc {
            return kind;
        }
    }
    matched
}

/// Loads a graph-level dataset from the text serialization format, with
/// ground-truth edges taken from the per-edge gt flags. 8:1:1 split seeded
/// by `seed`.
pub fn load_mutag(path: &Path, seed: u64) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let graphs = parse_graphs(&text)?;
    if graphs.is_empty() {
        return Err(RalignError::Domain("empty dataset file".into()));
    }
    let mut instances = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let gt_edges = g
            .gt_edge_mask
            .as_ref()
            .map(|m| crate::graph::edge_list(m))
            .unwrap_or_default();
        instances.push(ExplainInstance {
            graph: i,
            center: None,
            gt_edges,
        });
    }
    let n = graphs.len();
    Ok(Dataset {
        name: "mutag".to_string(),
        task: Task::GraphLevel,
        graphs,
        num_classes: 2,
        instances,
        splits: split_indices(n, [0.8, 0.1, 0.1], seed)?,
    })
}

fn split_indices(n: usize, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if n == 0 {
        return Err(RalignError::Domain("cannot split an empty dataset".into()));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(RalignError::Domain(format!("ratios sum to {total}, expected 1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5157_u64));
    idx.shuffle(&mut rng);
    // cumulative rounding keeps every split within one instance of exact
    let b1 = (ratios[0] * n as f64).round() as usize;
    let b2 = ((ratios[0] + ratios[1]) * n as f64).round() as usize;
    Ok(Splits {
        train: idx[..b1].to_vec(),
        val: idx[b1..b2].to_vec(),
        test: idx[b2..].to_vec(),
    })
}

/// Deterministic shuffled re-split of a dataset's instances.
pub fn split_dataset(d: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    let mut out = d.clone();
    out.splits = split_indices(d.instances.len(), ratios, seed)?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    name: String,
    task: Task,
    num_classes: usize,
    instances: Vec<ExplainInstance>,
    splits: Splits,
    generator: serde_json::Value,
}

/// Persists graphs in the text format plus a JSON manifest.
pub fn save_dataset(d: &Dataset, dir: &Path, generator: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    for (i, g) in d.graphs.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        write_graph(g, &mut text);
    }
    fs::write(dir.join("graphs.txt"), text)?;
    let manifest = DatasetManifest {
        name: d.name.clone(),
        task: d.task,
        num_classes: d.num_classes,
        instances: d.instances.clone(),
        splits: d.splits.clone(),
        generator,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let graphs = parse_graphs(&fs::read_to_string(dir.join("graphs.txt"))?)?;
    let d = Dataset {
        name: manifest.name,
        task: manifest.task,
        graphs,
        num_classes: manifest.num_classes,
        instances: manifest.instances,
        splits: manifest.splits,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ba_shapes_statistics() {
        let d = gen_ba_shapes(7).unwrap();
        assert_eq!(d.graphs[0].n, 700);
        assert_eq!(d.num_classes, 4);
        assert_eq!(d.instances.len(), 400);
        d.validate().unwrap();
        // base labels 0, motif labels 1..3
        if let Labels::Node(ls) = &d.graphs[0].labels {
            assert!(ls[..300].iter().all(|&l| l == 0));
            assert!(ls[300..].iter().all(|&l| (1..=3).contains(&l)));
        }
    }

    #[test]
    fn ba_shapes_deterministic() {
        let a = gen_ba_shapes(42).unwrap();
        let b = gen_ba_shapes(42).unwrap();
        assert_eq!(a.graphs[0].adjacency.data, b.graphs[0].adjacency.data);
        assert_eq!(a.splits, b.splits);
        let c = gen_ba_shapes(43).unwrap();
        assert_ne!(a.graphs[0].adjacency.data, c.graphs[0].adjacency.data);
    }

    #[test]
    fn tree_grid_statistics() {
        let d = gen_tree_grid(3).unwrap();
        assert_eq!(d.graphs[0].n, 1231);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.instances.len(), 720);
        d.validate().unwrap();
        for inst in &d.instances {
            assert_eq!(inst.gt_edges.len(), 12);
        }
        if let Labels::Node(ls) = &d.graphs[0].labels {
            assert!(ls[..511].iter().all(|&l| l == 0));
            assert!(ls[511..].iter().all(|&l| l == 1));
        }
    }

    #[test]
    fn infection_statistics_and_bfs_oracle() {
        let d = gen_infection(11).unwrap();
        let g = &d.graphs[0];
        assert_eq!(g.n, 1000);
        assert_eq!(d.num_classes, 5);
        d.validate().unwrap();
        let Labels::Node(labels) = &g.labels else { panic!() };
        let infected: Vec<usize> = (0..g.n).filter(|&v| labels[v] == 0).collect();
        assert_eq!(infected.len(), 50, "all infected nodes keep label 0");
        // independent oracle: per-instance path length equals label, path is
        // connected, starts at the infected set, and ends at the center
        for inst in &d.instances {
            let v = inst.center.unwrap();
            assert_eq!(inst.gt_edges.len(), labels[v], "node {v}");
            let (first_u, _) = inst.gt_edges[0];
            let start = if labels[inst.gt_edges[0].0] == 0 {
                inst.gt_edges[0].0
            } else {
                inst.gt_edges[0].1
            };
            assert_eq!(labels[start], 0, "path must start infected ({first_u})");
            if labels[v] == 1 {
                // distance-1 instance: single edge touching the center
                assert!(inst.gt_edges[0].0 == v || inst.gt_edges[0].1 == v);
            }
        }
        // at least one distance-1 instance exists in a graph this dense
        assert!(d.instances.iter().any(|i| i.gt_edges.len() == 1));
    }

    #[test]
    fn mixratio_probabilities() {
        let g0 = MixRatio::new(0.0).unwrap();
        assert!((g0.matched_prob() - 1.0 / 3.0).abs() < 1e-12);
        let g1 = MixRatio::new(1.0).unwrap();
        assert!((g1.matched_prob() - 1.0).abs() < 1e-12);
        assert!((g1.unmatched_prob()).abs() < 1e-12);
        let g07 = MixRatio::new(0.7).unwrap();
        assert!((g07.matched_prob() - 0.8).abs() < 1e-12);
        assert!((g07.unmatched_prob() - 0.1).abs() < 1e-12);
        assert!(MixRatio::new(1.5).is_err());
        // probabilities sum to 1
        assert!((g07.matched_prob() + 2.0 * g07.unmatched_prob() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixmotif_statistics() {
        let gamma = MixRatio::new(0.7).unwrap();
        let d = gen_mixmotif(gamma, 5).unwrap();
        assert_eq!(d.graphs.len(), 3000);
        assert_eq!(d.num_classes, 3);
        assert_eq!(d.splits.train.len(), 1500);
        assert_eq!(d.splits.val.len(), 600);
        assert_eq!(d.splits.test.len(), 900);
        d.validate().unwrap();
    }

    #[test]
    fn mixmotif_attachment_frequencies_within_3_sigma() {
        let gamma = MixRatio::new(0.7).unwrap();
        let d = gen_mixmotif(gamma, 9).unwrap();
        // base type recoverable from node count: tree 15, ladder 12, wheel 9
        let mut matched = [0usize; 3];
        let mut total = [0usize; 3];
        for (i, g) in d.graphs.iter().enumerate() {
            let motif_n = match d.graph_label(i) {
                0 => 6,
                1 => 5,
                _ => 9,
            };
            let base_n = g.n - motif_n;
            let base = match base_n {
                15 => 0, // tree -> cycle
                12 => 1, // ladder -> house
                9 => 2,  // wheel -> grid
                _ => panic!("unexpected base size {base_n}"),
            };
            total[base] += 1;
            if d.graph_label(i) == base {
                matched[base] += 1;
            }
        }
        let p = gamma.matched_prob();
        for b in 0..3 {
            let n = total[b] as f64;
            let freq = matched[b] as f64 / n;
            let sigma = (p * (1.0 - p) / n).sqrt();
            assert!(
                (freq - p).abs() < 3.0 * sigma,
                "base {b}: freq {freq} vs {p} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn mixmotif_deterministic() {
        let gamma = MixRatio::new(0.3).unwrap();
        let a = gen_mixmotif(gamma, 2).unwrap();
        let b = gen_mixmotif(gamma, 2).unwrap();
        for (x, y) in a.graphs.iter().zip(b.graphs.iter()) {
            assert_eq!(x.adjacency.data, y.adjacency.data);
        }
    }

    #[test]
    fn split_exact_and_deterministic() {
        let s = split_indices(10, [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let s2 = split_indices(10, [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!(s, s2);
        assert!(split_indices(0, [0.8, 0.1, 0.1], 1).is_err());
        assert!(split_indices(10, [0.8, 0.3, 0.1], 1).is_err());
    }

    #[test]
    fn mutag_loader_roundtrip() {
        use crate::graph::write_graph;
        let mut a = Matrix::zeros(3, 3);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        let mut gt = Matrix::zeros(3, 3);
        gt.set(0, 1, 1.0);
        gt.set(1, 0, 1.0);
        let g = Graph::new(a, Matrix::filled(3, 2, 1.0), Labels::Graph(1), Some(gt), None).unwrap();
        let mut text = String::new();
        write_graph(&g, &mut text);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mutag.txt");
        std::fs::write(&path, &text).unwrap();
        let d = load_mutag(&path, 0).unwrap();
        assert_eq!(d.graphs.len(), 1);
        assert_eq!(d.num_classes, 2);
        assert_eq!(d.instances[0].gt_edges, vec![(0, 1)]);
    }

    #[test]
    fn mutag_loader_rejects_bad_edge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "2 1 0\n1.0\n1.0\n0 9\n").unwrap();
        assert!(matches!(
            load_mutag(&path, 0),
            Err(RalignError::Parse { .. })
        ));
        assert!(load_mutag(Path::new("/nonexistent/file"), 0).is_err());
    }

    #[test]
    fn dataset_save_load_roundtrip() {
        let d = gen_mixmotif(MixRatio::new(0.0).unwrap(), 1).unwrap();
        let small = Dataset {
            graphs: d.graphs[..5].to_vec(),
            instances: d.instances[..5].to_vec(),
            splits: Splits {
                train: vec![0, 1, 2],
                val: vec![3],
                test: vec![4],
            },
            ..d
        };
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small, dir.path(), serde_json::json!({"seed": 1})).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.graphs.len(), 5);
        assert_eq!(loaded.splits, small.splits);
        for (a, b) in loaded.graphs.iter().zip(small.graphs.iter()) {
            assert_eq!(a, b);
        }
    }
}
