//! Embedding-alignment losses between the internal trace of the original
//! graph and of a masked candidate explanation.
//!
//! Four variants: direct squared distance, anchor-distance profiles,
//! Gaussian-mixture responsibilities compared by KL divergence, and a
//! Jensen-Shannon mutual-information estimator. Anchors come from DBSCAN
//! over a pool of dataset embeddings (k-means fallback).
//!
//! Node-level tasks align the center node's embedding; graph-level tasks
//! align the mean-pooled graph vector per layer. The direct variant sums
//! over all nodes.

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{RalignError, Result};
use crate::gnn::{forward_all, EmbeddingTrace, GcnModel, TraceVars, NUM_LAYERS};
use crate::tensor::{
    load_checkpoint, save_checkpoint, AdamState, Matrix, Tape, Var,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignVariant {
    None,
    Direct,
    Anchor,
    Gaussian,
    Mi,
}

impl AlignVariant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => AlignVariant::None,
            "direct" => AlignVariant::Direct,
            "anchor" => AlignVariant::Anchor,
            "gaussian" => AlignVariant::Gaussian,
            "mi" => AlignVariant::Mi,
            _ => return Err(RalignError::Domain(format!("unknown alignment `{s}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlignVariant::None => "none",
            AlignVariant::Direct => "direct",
            AlignVariant::Anchor => "anchor",
            AlignVariant::Gaussian => "gaussian",
            AlignVariant::Mi => "mi",
        }
    }
}

/// Per-layer cluster-center embeddings with a Gaussian bandwidth each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorSet {
    /// one K_l x d matrix per layer
    pub anchors: Vec<Matrix>,
    /// one bandwidth per layer, > 0
    pub sigma: Vec<f64>,
}

impl AnchorSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: AnchorSet = serde_json::from_str(&fs::read_to_string(path)?)?;
        if set.sigma.iter().any(|&s| s <= 0.0) || set.anchors.iter().any(|a| a.rows == 0) {
            return Err(RalignError::Contract("invalid anchor set".into()));
        }
        Ok(set)
    }
}

/// One compatibility network: bilinear score h'ᵀWh plus a one-hidden-layer
/// perceptron on the concatenation.
#[derive(Debug, Clone)]
pub struct MiNet {
    pub w: Matrix,  // d x d
    pub w1: Matrix, // 2d x hidden
    pub b1: Matrix, // 1 x hidden
    pub w2: Matrix, // hidden x 1
    pub b2: Matrix, // 1 x 1
}

const MI_HIDDEN: usize = 64;

impl MiNet {
    pub fn new(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let mut m = Matrix::zeros(rows, cols);
            for x in m.data.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
            m
        };
        MiNet {
            w: glorot(d, d, rng),
            w1: glorot(2 * d, MI_HIDDEN, rng),
            b1: Matrix::zeros(1, MI_HIDDEN),
            w2: glorot(MI_HIDDEN, 1, rng),
            b2: Matrix::zeros(1, 1),
        }
    }

    fn params(&self) -> Vec<Matrix> {
        vec![
            self.w.clone(),
            self.w1.clone(),
            self.b1.clone(),
            self.w2.clone(),
            self.b2.clone(),
        ]
    }

    fn set_params(&mut self, p: Vec<Matrix>) {
        let mut it = p.into_iter();
        self.w = it.next().unwrap();
        self.w1 = it.next().unwrap();
        self.b1 = it.next().unwrap();
        self.w2 = it.next().unwrap();
        self.b2 = it.next().unwrap();
    }

    /// Row-wise scores T(a_i, b_i) for paired m x d matrices, on a tape.
    fn scores_on_tape(&self, t: &Tape, pvars: &[Var], a: Var, b: Var) -> Result<Var> {
        let d = self.w.rows;
        // bilinear: rowsum((A·W) ⊙ B)
        let aw = t.matmul(a, pvars[0])?;
        let bil = t.matmul(
            t.mul(aw, b)?,
            t.constant(Matrix::filled(d, 1, 1.0)),
        )?;
        let cat = t.concat_cols(a, b)?;
        let hidden = t.relu(t.add_row(t.matmul(cat, pvars[1])?, pvars[2])?);
        let mlp = t.add_row(t.matmul(hidden, pvars[3])?, pvars[4])?;
        t.add(bil, mlp)
    }

    fn const_params(&self, t: &Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| t.constant(p)).collect()
    }

    /// T for a single pair of vectors.
    pub fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        let t = Tape::new();
        let pv = self.const_params(&t);
        let av = t.constant(Matrix::from_vec(1, a.len(), a.to_vec()).unwrap());
        let bv = t.constant(Matrix::from_vec(1, b.len(), b.to_vec()).unwrap());
        let s = self.scores_on_tape(&t, &pv, av, bv).unwrap();
        t.scalar_value(s)
    }
}

/// One trained compatibility network per GCN layer.
#[derive(Debug, Clone)]
pub struct MiEstimator {
    pub layers: Vec<MiNet>,
}

impl MiEstimator {
    pub fn save(&self, base: &Path) -> Result<()> {
        let mut entries = Vec::new();
        for (l, net) in self.layers.iter().enumerate() {
            for (name, p) in ["w", "w1", "b1", "w2", "b2"].iter().zip(net.params()) {
                entries.push((format!("l{l}_{name}"), p));
            }
        }
        save_checkpoint(base, &entries)
    }

    pub fn load(base: &Path) -> Result<Self> {
        let entries = load_checkpoint(base)?;
        if entries.len() % 5 != 0 || entries.is_empty() {
            return Err(RalignError::Contract("unexpected estimator layout".into()));
        }
        let mut layers = Vec::new();
        for chunk in entries.chunks(5) {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut net = MiNet::new(chunk[0].1.rows, &mut rng);
            net.set_params(chunk.iter().map(|(_, p)| p.clone()).collect());
            layers.push(net);
        }
        Ok(MiEstimator { layers })
    }
}

/// Shared per-experiment alignment artifacts; the reference trace of each
/// instance is passed alongside at loss time.
#[derive(Debug, Clone)]
pub struct AlignContext {
    pub variant: AlignVariant,
    pub anchors: Option<AnchorSet>,
    pub mi: Option<MiEstimator>,
}

impl AlignContext {
    pub fn none() -> Self {
        AlignContext {
            variant: AlignVariant::None,
            anchors: None,
            mi: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            AlignVariant::Anchor | AlignVariant::Gaussian if self.anchors.is_none() => Err(
                RalignError::Contract("anchor/gaussian alignment without anchors".into()),
            ),
            AlignVariant::Mi if self.mi.is_none() => Err(RalignError::Contract(
                "mi alignment without a trained estimator".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Per-layer pools of embedding vectors for anchor fitting and MI training.
/// Node tasks contribute the center-node embedding of each sampled instance;
/// graph tasks the mean-pooled graph vector.
pub fn collect_embeddings(
    model: &GcnModel,
    dataset: &Dataset,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<Matrix>> {
    if sample_size == 0 {
        return Err(RalignError::Contract("sample_size must be >= 1".into()));
    }
    if dataset.instances.is_empty() {
        return Err(RalignError::Contract("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..dataset.instances.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(sample_size);
    idx.sort_unstable();

    let mut pools: Vec<Vec<f64>> = vec![Vec::new(); NUM_LAYERS];
    let mut width = 0;
    let mut trace_cache: Vec<Option<EmbeddingTrace>> = vec![None; dataset.graphs.len()];
    for &i in &idx {
        let inst = &dataset.instances[i];
        if trace_cache[inst.graph].is_none() {
            let (_, trace) = forward_all(model, &dataset.graphs[inst.graph], None, None)?;
            trace_cache[inst.graph] = Some(trace);
        }
        let trace = trace_cache[inst.graph].as_ref().unwrap();
        for l in 0..NUM_LAYERS {
            let row = match dataset.task {
                Task::NodeLevel => {
                    let c = inst.center.ok_or_else(|| {
                        RalignError::Contract("node instance without center".into())
                    })?;
                    trace.layers[l].row(c)
                }
                Task::GraphLevel => trace.pooled[l].row(0),
            };
            width = row.len();
            pools[l].extend_from_slice(row);
        }
    }
    pools
        .into_iter()
        .map(|p| {
            let rows = p.len() / width;
            Matrix::from_vec(rows, width, p)
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Density-based clustering; label −1 marks noise. Core points need
/// `min_pts` neighbors within `eps` (the point itself included). Clusters
/// are connected components of core points, numbered by their smallest core
/// index; border points join the cluster of their lowest-indexed core
/// neighbor.
pub fn dbscan(points: &Matrix, eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if eps <= 0.0 {
        return Err(RalignError::Domain("eps must be > 0".into()));
    }
    if min_pts == 0 {
        return Err(RalignError::Domain("min_pts must be >= 1".into()));
    }
    let n = points.rows;
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if dist(points.row(i), points.row(j)) <= eps {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();
    let mut labels = vec![-1i64; n];
    let mut next = 0i64;
    for start in 0..n {
        if !core[start] || labels[start] != -1 {
            continue;
        }
        // flood the core component
        let mut queue = vec![start];
        labels[start] = next;
        while let Some(u) = queue.pop() {
            for &v in &neighbors[u] {
                if core[v] && labels[v] == -1 {
                    labels[v] = next;
                    queue.push(v);
                }
            }
        }
        next += 1;
    }
    // border points: lowest-indexed core neighbor decides
    for i in 0..n {
        if core[i] || labels[i] != -1 {
            continue;
        }
        if let Some(&c) = neighbors[i].iter().find(|&&j| core[j]) {
            labels[i] = labels[c];
        }
    }
    Ok(labels)
}

fn kmeans(points: &Matrix, k: usize, iters: usize) -> Vec<Vec<f64>> {
    let n = points.rows;
    let d = points.cols;
    // deterministic init: first k distinct rows
    let mut centroids: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let row = points.row(i).to_vec();
        if !centroids.iter().any(|c| dist(c, &row) == 0.0) {
            centroids.push(row);
            if centroids.len() == k {
                break;
            }
        }
    }
    let k = centroids.len();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let row = points.row(i);
            let mut best = 0;
            for c in 1..k {
                if dist(row, &centroids[c]) < dist(row, &centroids[best]) {
                    best = c;
                }
            }
            counts[best] += 1;
            for j in 0..d {
                sums[best][j] += row[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
    }
    // drop empty clusters
    let mut counts = vec![0usize; k];
    for i in 0..n {
        let row = points.row(i);
        let mut best = 0;
        for c in 1..k {
            if dist(row, &centroids[c]) < dist(row, &centroids[best]) {
                best = c;
            }
        }
        counts[best] += 1;
    }
    centroids
        .into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(c, _)| c)
        .collect()
}

const DBSCAN_MIN_PTS: usize = 4;

fn cluster_means(points: &Matrix, labels: &[i64]) -> Vec<Vec<f64>> {
    let k = labels.iter().copied().max().unwrap_or(-1) + 1;
    let d = points.cols;
    let mut sums = vec![vec![0.0; d]; k as usize];
    let mut counts = vec![0usize; k as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        counts[l as usize] += 1;
        for j in 0..d {
            sums[l as usize][j] += points.get(i, j);
        }
    }
    sums.into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| s.into_iter().map(|x| x / c as f64).collect())
        .collect()
}

fn fit_layer_anchors(pool: &Matrix, target: usize) -> Result<Vec<Vec<f64>>> {
    if pool.rows < DBSCAN_MIN_PTS {
        return Err(RalignError::Contract(format!(
            "pool of {} points is too small",
            pool.rows
        )));
    }
    let (band_lo, band_hi) = (target.saturating_sub(5).max(1), target + 5);
    // distance scale for the eps search
    let mut max_d: f64 = 0.0;
    let mut min_pos = f64::INFINITY;
    for i in 0..pool.rows {
        for j in (i + 1)..pool.rows {
            let d = dist(pool.row(i), pool.row(j));
            max_d = max_d.max(d);
            if d > 0.0 {
                min_pos = min_pos.min(d);
            }
        }
    }
    if max_d > 0.0 {
        let mut lo = (min_pos * 0.5).min(max_d);
        let mut hi = max_d;
        for _ in 0..50 {
            let eps = 0.5 * (lo + hi);
            let labels = dbscan(pool, eps, DBSCAN_MIN_PTS)?;
            let clusters = (labels.iter().copied().max().unwrap_or(-1) + 1) as usize;
            let noise = labels.iter().filter(|&&l| l < 0).count();
            if (band_lo..=band_hi).contains(&clusters) {
                return Ok(cluster_means(pool, &labels));
            }
            if clusters > band_hi || noise * 2 > pool.rows {
                lo = eps; // too fragmented or mostly noise: widen
            } else {
                hi = eps; // merged too far: tighten
            }
        }
    }
    // search exhausted (or degenerate pool): k-means fallback
    Ok(kmeans(pool, target, 100))
}

/// Clusters each layer's pool (binary-searching DBSCAN's eps toward
/// ~`target_groups` clusters, k-means fallback) and sets the per-layer
/// bandwidth to the median pairwise anchor distance / √2.
pub fn fit_anchors(pools: &[Matrix], target_groups: usize) -> Result<AnchorSet> {
    let mut anchors = Vec::new();
    let mut sigma = Vec::new();
    for pool in pools {
        let means = fit_layer_anchors(pool, target_groups)?;
        let d = pool.cols;
        let k = means.len();
        let mut dists: Vec<f64> = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                dists.push(dist(&means[i], &means[j]));
            }
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = if dists.is_empty() {
            0.0
        } else {
            dists[dists.len() / 2]
        };
        let mut s = med / std::f64::consts::SQRT_2;
        if let Some(f) = std::env::var("RA_SIGMA_SCALE").ok().and_then(|v| v.parse::<f64>().ok()) {
            s *= f;
        }
        sigma.push(if s > 0.0 { s } else { 1.0 });
        anchors.push(Matrix::from_vec(
            k,
            d,
            means.into_iter().flatten().collect(),
        )?);
    }
    Ok(AnchorSet { anchors, sigma })
}

/// Relative distances ||h − a_k||₂ to each anchor of one layer.
pub fn anchor_repr(h: &[f64], anchors_l: &Matrix) -> Vec<f64> {
    (0..anchors_l.rows)
        .map(|k| dist(h, anchors_l.row(k)))
        .collect()
}

/// Softmax responsibilities over anchors: p_k ∝ exp(−||h − a_k||² / 2σ²).
pub fn gauss_prob(h: &[f64], anchors_l: &Matrix, sigma: f64) -> Vec<f64> {
    let scores: Vec<f64> = (0..anchors_l.rows)
        .map(|k| {
            let d = dist(h, anchors_l.row(k));
            -d * d / (2.0 * sigma * sigma)
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

// ---- tape-level building blocks -----------------------------------------

/// K x 1 column of distances from a 1 x d tape vector to each anchor.
fn anchor_repr_on_tape(t: &Tape, h: Var, anchors_l: &Matrix) -> Result<Var> {
    let (k, d) = anchors_l.shape();
    let bcast = t.matmul(t.constant(Matrix::filled(k, 1, 1.0)), h)?;
    let diff = t.sub(bcast, t.constant(anchors_l.clone()))?;
    let sq = t.mul(diff, diff)?;
    let rowsum = t.matmul(sq, t.constant(Matrix::filled(d, 1, 1.0)))?;
    // epsilon keeps the sqrt differentiable when h sits on an anchor
    Ok(t.sqrt(t.add_scalar(rowsum, 1e-12)))
}

/// 1 x K responsibility row for a 1 x d tape vector.
fn gauss_prob_on_tape(t: &Tape, h: Var, anchors_l: &Matrix, sigma: f64) -> Result<Var> {
    let (k, d) = anchors_l.shape();
    let bcast = t.matmul(t.constant(Matrix::filled(k, 1, 1.0)), h)?;
    let diff = t.sub(bcast, t.constant(anchors_l.clone()))?;
    let sq = t.mul(diff, diff)?;
    let rowsum = t.matmul(sq, t.constant(Matrix::filled(d, 1, 1.0)))?;
    let scores = t.scale(t.transpose(rowsum), -1.0 / (2.0 * sigma * sigma));
    Ok(t.row_softmax(scores))
}

/// Per-layer alignment vector of a masked trace on the tape: center-node row
/// for node tasks, pooled mean for graph tasks.
fn masked_vector(t: &Tape, masked: &TraceVars, task: Task, center: Option<usize>, l: usize) -> Result<Var> {
    match task {
        Task::NodeLevel => {
            let c = center
                .ok_or_else(|| RalignError::Contract("node-task alignment without center".into()))?;
            t.row_select(masked.layers[l], c)
        }
        Task::GraphLevel => Ok(masked.pooled[l]),
    }
}

fn reference_vector<'a>(
    reference: &'a EmbeddingTrace,
    task: Task,
    center: Option<usize>,
    l: usize,
) -> Result<&'a [f64]> {
    match task {
        Task::NodeLevel => {
            let c = center
                .ok_or_else(|| RalignError::Contract("node-task alignment without center".into()))?;
            Ok(reference.layers[l].row(c))
        }
        Task::GraphLevel => Ok(reference.pooled[l].row(0)),
    }
}

/// Differentiable alignment loss on an open tape; gradients flow through
/// `masked`. Returns a scalar Var (constant 0 for variant None).
pub fn align_loss_on_tape(
    t: &Tape,
    ctx: &AlignContext,
    reference: &EmbeddingTrace,
    masked: &TraceVars,
    task: Task,
    center: Option<usize>,
) -> Result<Var> {
    ctx.validate()?;
    let mut total = t.constant(Matrix::scalar(0.0));
    match ctx.variant {
        AlignVariant::None => {}
        AlignVariant::Direct => {
            for l in 0..NUM_LAYERS {
                let (hv, href) = match task {
                    // all nodes, all layers
                    Task::NodeLevel => (masked.layers[l], reference.layers[l].clone()),
                    Task::GraphLevel => (masked.pooled[l], reference.pooled[l].clone()),
                };
                let (r, c) = t.shape(hv);
                let diff = t.sub(hv, t.constant(href))?;
                // per-element mean keeps the loss scale comparable across
                // subgraph sizes and embedding widths, so one lambda grid
                // serves every dataset
                total = t.add(total, t.scale(t.sum(t.mul(diff, diff)?), 1.0 / (r * c) as f64))?;
            }
        }
        AlignVariant::Anchor => {
            let set = ctx.anchors.as_ref().unwrap();
            for l in 0..NUM_LAYERS {
                let hv = masked_vector(t, masked, task, center, l)?;
                let s = anchor_repr_on_tape(t, hv, &set.anchors[l])?;
                let sref = anchor_repr(reference_vector(reference, task, center, l)?, &set.anchors[l]);
                let sref = t.constant(Matrix::from_vec(sref.len(), 1, sref)?);
                let d = t.sub(s, sref)?;
                let (k, _) = t.shape(d);
                total = t.add(total, t.scale(t.sum(t.mul(d, d)?), 1.0 / k as f64))?;
            }
        }
        AlignVariant::Gaussian => {
            let set = ctx.anchors.as_ref().unwrap();
            for l in 0..NUM_LAYERS {
                let hv = masked_vector(t, masked, task, center, l)?;
                let p = gauss_prob_on_tape(t, hv, &set.anchors[l], set.sigma[l])?;
                let pref = gauss_prob(
                    reference_vector(reference, task, center, l)?,
                    &set.anchors[l],
                    set.sigma[l],
                );
                // KL(p' ‖ p_ref) = Σ p'(ln p' − ln p_ref)
                let ln_pref: Vec<f64> = pref.iter().map(|&x| x.max(1e-12).ln()).collect();
                let ln_pref = t.constant(Matrix::from_vec(1, ln_pref.len(), ln_pref)?);
                let lp = t.ln(p);
                let kl = t.sum(t.mul(p, t.sub(lp, ln_pref)?)?);
                total = t.add(total, kl)?;
            }
        }
        AlignVariant::Mi => {
            let est = ctx.mi.as_ref().unwrap();
            for l in 0..NUM_LAYERS {
                let net = &est.layers[l];
                let pv = net.const_params(t);
                let hv = masked_vector(t, masked, task, center, l)?;
                let href = reference_vector(reference, task, center, l)?;
                let href = t.constant(Matrix::from_vec(1, href.len(), href.to_vec())?);
                let score = net.scores_on_tape(t, &pv, hv, href)?;
                total = t.add(total, t.sum(t.softplus(t.scale(score, -1.0))))?;
            }
        }
    }
    Ok(total)
}

// ---- value-level losses ---------------------------------------------------

fn trace_as_vars(t: &Tape, trace: &EmbeddingTrace) -> TraceVars {
    TraceVars {
        layers: trace.layers.iter().map(|m| t.constant(m.clone())).collect(),
        pooled: trace.pooled.iter().map(|m| t.constant(m.clone())).collect(),
    }
}

fn eval_loss(
    ctx: &AlignContext,
    reference: &EmbeddingTrace,
    masked: &EmbeddingTrace,
    task: Task,
    center: Option<usize>,
) -> Result<f64> {
    if reference.layers.len() != masked.layers.len() {
        return Err(RalignError::Dimension("trace layer count".into()));
    }
    for (a, b) in reference.layers.iter().zip(masked.layers.iter()) {
        if a.shape() != b.shape() {
            return Err(RalignError::Dimension("trace shape mismatch".into()));
        }
    }
    let t = Tape::new();
    let vars = trace_as_vars(&t, masked);
    let loss = align_loss_on_tape(&t, ctx, reference, &vars, task, center)?;
    Ok(t.scalar_value(loss))
}

/// Σ_l mean_v,d (h_v^l − h'^l_v)² (pooled vectors for graph tasks).
pub fn align_direct(
    reference: &EmbeddingTrace,
    masked: &EmbeddingTrace,
    task: Task,
) -> Result<f64> {
    let ctx = AlignContext {
        variant: AlignVariant::Direct,
        anchors: None,
        mi: None,
    };
    eval_loss(&ctx, reference, masked, task, Some(0))
}

/// Σ_l mean_k (s^l_k − s'^l_k)² over anchor-distance profiles.
pub fn align_anchor(
    reference: &EmbeddingTrace,
    masked: &EmbeddingTrace,
    anchors: &AnchorSet,
    task: Task,
    center: Option<usize>,
) -> Result<f64> {
    let ctx = AlignContext {
        variant: AlignVariant::Anchor,
        anchors: Some(anchors.clone()),
        mi: None,
    };
    eval_loss(&ctx, reference, masked, task, center)
}

/// Σ_l KL(p'^l ‖ p^l) over Gaussian-mixture responsibilities.
pub fn align_gauss(
    reference: &EmbeddingTrace,
    masked: &EmbeddingTrace,
    anchors: &AnchorSet,
    task: Task,
    center: Option<usize>,
) -> Result<f64> {
    let ctx = AlignContext {
        variant: AlignVariant::Gaussian,
        anchors: Some(anchors.clone()),
        mi: None,
    };
    eval_loss(&ctx, reference, masked, task, center)
}

/// Σ_l sp(−T^l(h', h)).
pub fn align_mi(
    reference: &EmbeddingTrace,
    masked: &EmbeddingTrace,
    estimator: &MiEstimator,
    task: Task,
    center: Option<usize>,
) -> Result<f64> {
    let ctx = AlignContext {
        variant: AlignVariant::Mi,
        anchors: None,
        mi: Some(estimator.clone()),
    };
    eval_loss(&ctx, reference, masked, task, center)
}

// ---- MI estimator training ------------------------------------------------

#[derive(Debug, Clone)]
pub struct MiTrainConfig {
    pub drop_ratio: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub sample_size: usize,
}

impl Default for MiTrainConfig {
    fn default() -> Self {
        MiTrainConfig {
            drop_ratio: 0.3,
            epochs: 50,
            lr: 1e-3,
            seed: 0,
            sample_size: 400,
        }
    }
}

fn dropped(h: &Matrix, drop_ratio: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut out = h.clone();
    for x in out.data.iter_mut() {
        if rng.random::<f64>() < drop_ratio {
            *x = 0.0;
        }
    }
    out
}

fn shuffled_rows(h: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let mut order: Vec<usize> = (0..h.rows).collect();
    order.shuffle(rng);
    let mut out = Matrix::zeros(h.rows, h.cols);
    for (i, &src) in order.iter().enumerate() {
        out.data[i * h.cols..(i + 1) * h.cols].copy_from_slice(h.row(src));
    }
    out
}

/// Trains one compatibility network per layer with the Jensen-Shannon
/// objective: minimize E[sp(−T(h, h⁺))] + E[sp(T(h, h⁻))]. Positives are
/// neuron-dropped copies, negatives are shuffled pairings within the pool.
pub fn mi_train(model: &GcnModel, dataset: &Dataset, cfg: &MiTrainConfig) -> Result<MiEstimator> {
    let pools = collect_embeddings(model, dataset, cfg.sample_size, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(17));
    let mut layers = Vec::with_capacity(pools.len());
    for pool in &pools {
        let mut net = MiNet::new(pool.cols, &mut rng);
        let mut params = net.params();
        let shapes: Vec<(usize, usize)> = params.iter().map(|p| p.shape()).collect();
        let mut adam = AdamState::new(cfg.lr, 0.0, &shapes);
        let m = pool.rows as f64;
        for _epoch in 0..cfg.epochs {
            let pos = dropped(pool, cfg.drop_ratio, &mut rng);
            let neg = shuffled_rows(pool, &mut rng);
            let t = Tape::new();
            let pvars: Vec<Var> = params.iter().map(|p| t.leaf(p.clone())).collect();
            let h = t.constant(pool.clone());
            let hp = t.constant(pos);
            let hn = t.constant(neg);
            let s_pos = net.scores_on_tape(&t, &pvars, h, hp)?;
            let s_neg = net.scores_on_tape(&t, &pvars, h, hn)?;
            let loss_pos = t.sum(t.softplus(t.scale(s_pos, -1.0)));
            let loss_neg = t.sum(t.softplus(s_neg));
            let loss = t.scale(t.add(loss_pos, loss_neg)?, 1.0 / m);
            if !t.scalar_value(loss).is_finite() {
                return Err(RalignError::Training("non-finite MI loss".into()));
            }
            let grads = t.backward(loss)?;
            let gs: Vec<Option<&Matrix>> = pvars.iter().map(|&v| grads.get(v)).collect();
            adam.step(&mut params, &gs)?;
        }
        net.set_params(params);
        layers.push(net);
    }
    Ok(MiEstimator { layers })
}
