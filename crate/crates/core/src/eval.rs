//! Explanation quality metrics: edge AUROC (Mann-Whitney), fidelity
//! curves under top-k edge removal, top-k structural hamming distance
//! across runs, and a numerical check of the information-decomposition
//! identity behind the two-term surrogate objective.

use std::collections::HashSet;

use crate::data::Task;
use crate::error::{RalignError, Result};
use crate::explain::{EdgeImportance, PreparedInstance};
use crate::gnn::{forward, GcnModel};
use crate::graph::MaskPair;
use crate::tensor::Matrix;

/// Probability that a random positive outranks a random negative, ties
/// counted 0.5 (Mann-Whitney with average ranks). Errors when either side
/// is empty.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(RalignError::Dimension("scores vs labels length".into()));
    }
    let p = positive.iter().filter(|&&x| x).count();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Err(RalignError::Domain(
            "degenerate ground truth: need both positives and negatives".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // ranks are 1-based
        for &k in &idx[i..j] {
            if positive[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p as f64 * n as f64))
}

/// AUROC of an importance ranking against a ground-truth edge set.
pub fn edge_auroc(importance: &EdgeImportance, gt: &[(usize, usize)]) -> Result<f64> {
    importance.validate()?;
    let gt_set: HashSet<(usize, usize)> = gt
        .iter()
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    let positive: Vec<bool> = importance.edges.iter().map(|e| gt_set.contains(e)).collect();
    auroc(&importance.weights, &positive)
}

/// Per-instance fidelity: entry i is 1.0 while the prediction with the
/// top-i edges hard-zeroed still matches the original prediction, else 0.0.
/// Entry 0 is always 1.0 (nothing removed). `max_k` is clamped to the edge
/// count; the curve always has max_k+1 entries.
pub fn fidelity_curve(
    model: &GcnModel,
    task: Task,
    prep: &PreparedInstance,
    importance: &EdgeImportance,
    max_k: usize,
) -> Result<Vec<f64>> {
    if importance.edges.len() != prep.edges.len() {
        return Err(RalignError::Dimension("importance vs prepared edges".into()));
    }
    let _ = task;
    let ranking = importance.ranking();
    let mut curve = Vec::with_capacity(max_k + 1);
    let mut mask = prep.graph.adjacency.clone();
    for i in 0..=max_k {
        if i > 0 {
            if let Some(&e) = ranking.get(i - 1) {
                let (u, v) = prep.edges[e];
                mask.set(u, v, 0.0);
                mask.set(v, u, 0.0);
            }
        }
        let masks = MaskPair {
            edge_mask: mask.clone(),
            feat_mask: None,
        };
        let (logits, _) = forward(model, &prep.graph, Some(&masks), None)?;
        let pred = crate::gnn::argmax(&logits.data);
        curve.push(if pred == prep.target_class { 1.0 } else { 0.0 });
    }
    Ok(curve)
}

/// Mean element-wise curve over instances.
pub fn aggregate_curves(curves: &[Vec<f64>]) -> Vec<f64> {
    if curves.is_empty() {
        return vec![];
    }
    let len = curves[0].len();
    let mut out = vec![0.0; len];
    for c in curves {
        for (o, x) in out.iter_mut().zip(c.iter()) {
            *o += x;
        }
    }
    for o in out.iter_mut() {
        *o /= curves.len() as f64;
    }
    out
}

/// Area under an aggregated fidelity curve (simple sum of step values).
pub fn curve_area(curve: &[f64]) -> f64 {
    curve.iter().sum()
}

fn topk_set(run: &EdgeImportance, k: usize) -> HashSet<(usize, usize)> {
    let k = k.min(run.edges.len());
    run.ranking()[..k].iter().map(|&i| run.edges[i]).collect()
}

/// Average over unordered run pairs of |topk(a) Δ topk(b)|; k is clamped to
/// the edge count, ties broken by canonical edge order.
pub fn shd_topk(runs: &[EdgeImportance], k: usize) -> Result<f64> {
    if runs.len() < 2 {
        return Err(RalignError::Contract("shd needs at least 2 runs".into()));
    }
    let sets: Vec<HashSet<(usize, usize)>> = runs.iter().map(|r| topk_set(r, k)).collect();
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            total += sets[i].symmetric_difference(&sets[j]).count() as f64;
            pairs += 1.0;
        }
    }
    Ok(total / pairs)
}

fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum()
}

/// Checks the decomposition identity
///   I(G;G';Y) = I(G';Y) + I(G;G') + H(G'|G,Y) − H(G')
/// on a discrete joint p(g, g', y) given as a flat row-major array with
/// dimensions `dims = [|G|, |G'|, |Y|]`. Both sides are computed from
/// independently marginalized entropies; returns |LHS − RHS|.
pub fn mi_decomposition_check(joint: &[f64], dims: [usize; 3]) -> Result<f64> {
    let [a, b, c] = dims;
    if joint.len() != a * b * c {
        return Err(RalignError::Dimension(format!(
            "joint of {} entries for dims {:?}",
            joint.len(),
            dims
        )));
    }
    let total: f64 = joint.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(RalignError::Domain(format!("joint sums to {total}, expected 1")));
    }
    if joint.iter().any(|&x| x < 0.0) {
        return Err(RalignError::Domain("negative probability".into()));
    }
    let at = |g: usize, gp: usize, y: usize| joint[(g * b + gp) * c + y];

    let mut p_g = vec![0.0; a];
    let mut p_gp = vec![0.0; b];
    let mut p_y = vec![0.0; c];
    let mut p_g_gp = vec![0.0; a * b];
    let mut p_g_y = vec![0.0; a * c];
    let mut p_gp_y = vec![0.0; b * c];
    for g in 0..a {
        for gp in 0..b {
            for y in 0..c {
                let p = at(g, gp, y);
                p_g[g] += p;
                p_gp[gp] += p;
                p_y[y] += p;
                p_g_gp[g * b + gp] += p;
                p_g_y[g * c + y] += p;
                p_gp_y[gp * c + y] += p;
            }
        }
    }
    let h_g = entropy(&p_g);
    let h_gp = entropy(&p_gp);
    let h_y = entropy(&p_y);
    let h_g_gp = entropy(&p_g_gp);
    let h_g_y = entropy(&p_g_y);
    let h_gp_y = entropy(&p_gp_y);
    let h_all = entropy(joint);

    // co-information of the three variables
    let lhs = h_g + h_gp + h_y - h_g_gp - h_g_y - h_gp_y + h_all;
    // surrogate decomposition
    let i_gp_y = h_gp + h_y - h_gp_y;
    let i_g_gp = h_g + h_gp - h_g_gp;
    let h_gp_given_gy = h_all - h_g_y;
    let rhs = i_gp_y + i_g_gp + h_gp_given_gy - h_gp;
    Ok((lhs - rhs).abs())
}

/// Hard-to-misuse helper used by property tests: a Dirichlet(1,...,1)
/// sample over `n` outcomes.
pub fn random_simplex(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    let mut v: Vec<f64> = (0..n)
        .map(|_| -(rng.random_range(1e-12..1.0f64)).ln())
        .collect();
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
    // exact renormalization so the sum check at 1e-12 always passes
    let s2: f64 = v.iter().sum();
    let last = v.len() - 1;
    v[last] += 1.0 - s2;
    v
}

/// Per-edge pooled AUROC over many instances: every (instance, edge) pair
/// is one sample. Instances with degenerate ground truth are skipped; errors
/// only if nothing remains.
pub fn pooled_edge_auroc(
    runs: &[(EdgeImportance, Vec<(usize, usize)>)],
) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (imp, gt) in runs {
        let gt_set: HashSet<(usize, usize)> =
            gt.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let pos: Vec<bool> = imp.edges.iter().map(|e| gt_set.contains(e)).collect();
        if pos.iter().all(|&x| x) || pos.iter().all(|&x| !x) {
            continue; // degenerate instance
        }
        scores.extend_from_slice(&imp.weights);
        labels.extend(pos);
    }
    auroc(&scores, &labels)
}

/// The same statistic by exhaustive pair enumeration; the production
/// implementation must agree with this exactly.
pub fn auroc_pairwise_oracle(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(RalignError::Domain("degenerate ground truth".into()));
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}
