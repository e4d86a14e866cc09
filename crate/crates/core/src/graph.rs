//! Graph representation, adjacency normalization, k-hop subgraph extraction,
//! and deterministic edge enumeration.
//!
//! All graphs are undirected, stored as dense symmetric {0,1} adjacency
//! matrices with zero diagonal. Self-loops appear only inside normalization.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{RalignError, Result};
use crate::tensor::Matrix;

/// Graph-task graphs carry one class index; node-task graphs carry one label
/// per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Graph(usize),
    Node(Vec<usize>),
}

/// The unit of explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    /// dense symmetric {0,1} matrix, zero diagonal
    pub adjacency: Matrix,
    /// n x d node features
    pub features: Matrix,
    pub labels: Labels,
    /// symmetric {0,1} matrix marking ground-truth explanation edges
    pub gt_edge_mask: Option<Matrix>,
    /// center node for node-task subgraphs
    pub center: Option<usize>,
}

impl Graph {
    pub fn new(
        adjacency: Matrix,
        features: Matrix,
        labels: Labels,
        gt_edge_mask: Option<Matrix>,
        center: Option<usize>,
    ) -> Result<Self> {
        let n = adjacency.rows;
        if adjacency.cols != n {
            return Err(RalignError::Dimension(format!(
                "adjacency must be square, got {}x{}",
                adjacency.rows, adjacency.cols
            )));
        }
        if features.rows != n {
            return Err(RalignError::Dimension(format!(
                "features has {} rows for {} nodes",
                features.rows, n
            )));
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(RalignError::Domain(format!("self-loop at node {i}")));
            }
            for j in 0..n {
                let a = adjacency.get(i, j);
                if a != 0.0 && a != 1.0 {
                    return Err(RalignError::Domain(format!(
                        "adjacency[{i}][{j}] = {a}, expected 0 or 1"
                    )));
                }
                if a != adjacency.get(j, i) {
                    return Err(RalignError::Domain(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if let Labels::Node(ls) = &labels {
            if ls.len() != n {
                return Err(RalignError::Dimension(format!(
                    "{} node labels for {} nodes",
                    ls.len(),
                    n
                )));
            }
        }
        if let Some(gt) = &gt_edge_mask {
            if gt.shape() != adjacency.shape() {
                return Err(RalignError::Dimension("gt_edge_mask shape".into()));
            }
            for i in 0..n {
                for j in 0..n {
                    if gt.get(i, j) > adjacency.get(i, j) {
                        return Err(RalignError::Domain(format!(
                            "gt_edge_mask marks non-edge ({i},{j})"
                        )));
                    }
                }
            }
        }
        if let Some(c) = center {
            if c >= n {
                return Err(RalignError::Index(format!("center {c} of {n} nodes")));
            }
        }
        Ok(Graph {
            n,
            adjacency,
            features,
            labels,
            gt_edge_mask,
            center,
        })
    }

    pub fn num_edges(&self) -> usize {
        edge_list(&self.adjacency).len()
    }

    pub fn node_label(&self, v: usize) -> usize {
        match &self.labels {
            Labels::Graph(c) => *c,
            Labels::Node(ls) => ls[v],
        }
    }
}

/// Continuous edge/feature masks parameterizing a candidate explanation.
#[derive(Debug, Clone)]
pub struct MaskPair {
    /// n x n in [0,1], symmetric, zero off the adjacency support
    pub edge_mask: Matrix,
    /// n x d in [0,1], or a broadcast 1 x d row
    pub feat_mask: Option<Matrix>,
}

impl MaskPair {
    pub fn all_ones(g: &Graph) -> Self {
        MaskPair {
            edge_mask: g.adjacency.clone(),
            feat_mask: None,
        }
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.edge_mask.shape() != g.adjacency.shape() {
            return Err(RalignError::Dimension("edge_mask shape".into()));
        }
        for i in 0..g.n {
            for j in 0..g.n {
                let m = self.edge_mask.get(i, j);
                if !(0.0..=1.0).contains(&m) {
                    return Err(RalignError::Domain(format!("edge_mask[{i}][{j}] = {m}")));
                }
                if (m - self.edge_mask.get(j, i)).abs() > 1e-12 {
                    return Err(RalignError::Domain("edge_mask not symmetric".into()));
                }
                if g.adjacency.get(i, j) == 0.0 && m != 0.0 {
                    return Err(RalignError::Domain(format!(
                        "edge_mask[{i}][{j}] set off the adjacency support"
                    )));
                }
            }
        }
        if let Some(f) = &self.feat_mask {
            if f.cols != g.features.cols || (f.rows != g.n && f.rows != 1) {
                return Err(RalignError::Dimension("feat_mask shape".into()));
            }
            if f.data.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(RalignError::Domain("feat_mask outside [0,1]".into()));
            }
        }
        Ok(())
    }
}

/// Canonical undirected edge enumeration: upper triangle, row-major.
pub fn edge_list(adjacency: &Matrix) -> Vec<(usize, usize)> {
    let n = adjacency.rows;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if adjacency.get(u, v) != 0.0 {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Rebuilds a symmetric adjacency from a canonical edge list.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for &(u, v) in edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    a
}

/// D^{-1/2} (A + I) D^{-1/2} with the edge mask applied to the normalized
/// off-diagonal entries; self-loop entries are never masked and degrees come
/// from the unmasked graph.
///
/// Masking after normalization keeps each edge's message weight proportional
/// to its mask value. Recomputing degrees on the masked graph instead makes
/// the propagation matrix nearly invariant to uniform mask changes, so the
/// prediction loss is flat (and can locally invert) around dense masks,
/// which destabilizes mask optimization.
pub fn normalize_adjacency(adjacency: &Matrix, edge_mask: Option<&Matrix>) -> Result<Matrix> {
    let n = adjacency.rows;
    if adjacency.cols != n {
        return Err(RalignError::Dimension("adjacency must be square".into()));
    }
    let mut b = adjacency.clone();
    for i in 0..n {
        b.data[i * n + i] += 1.0;
    }
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let d: f64 = b.row(i).iter().sum();
        inv_sqrt_deg[i] = 1.0 / d.sqrt();
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.data[i * n + j] = inv_sqrt_deg[i] * b.data[i * n + j] * inv_sqrt_deg[j];
        }
    }
    if let Some(m) = edge_mask {
        if m.shape() != adjacency.shape() {
            return Err(RalignError::Dimension("edge_mask shape".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    out.data[i * n + j] *= m.data[i * n + j];
                }
            }
        }
    }
    Ok(out)
}

/// Induced subgraph on nodes within graph distance <= k of `v`.
///
/// Node ordering is BFS order with ties broken by original index; the
/// returned mapping gives the original index of each subgraph node. The
/// center field is set to v's new index (always 0).
pub fn k_hop_subgraph(g: &Graph, v: usize, k: usize) -> Result<(Graph, Vec<usize>)> {
    if v >= g.n {
        return Err(RalignError::Index(format!("node {v} of {}", g.n)));
    }
    if k == 0 {
        return Err(RalignError::Domain("k must be >= 1".into()));
    }
    let mut dist = vec![usize::MAX; g.n];
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    dist[v] = 0;
    queue.push_back(v);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        if dist[u] == k {
            continue;
        }
        for w in 0..g.n {
            if g.adjacency.get(u, w) != 0.0 && dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut new_index = vec![usize::MAX; g.n];
    for (i, &u) in order.iter().enumerate() {
        new_index[u] = i;
    }
    let m = order.len();
    let mut adj = Matrix::zeros(m, m);
    let mut gt = g.gt_edge_mask.as_ref().map(|_| Matrix::zeros(m, m));
    for (i, &u) in order.iter().enumerate() {
        for (j, &w) in order.iter().enumerate() {
            adj.set(i, j, g.adjacency.get(u, w));
            if let (Some(gtm), Some(src)) = (&mut gt, &g.gt_edge_mask) {
                gtm.set(i, j, src.get(u, w));
            }
        }
    }
    let d = g.features.cols;
    let mut feats = Matrix::zeros(m, d);
    for (i, &u) in order.iter().enumerate() {
        feats.data[i * d..(i + 1) * d].copy_from_slice(g.features.row(u));
    }
    let labels = match &g.labels {
        Labels::Graph(c) => Labels::Graph(*c),
        Labels::Node(ls) => Labels::Node(order.iter().map(|&u| ls[u]).collect()),
    };
    let sub = Graph::new(adj, feats, labels, gt, Some(0))?;
    Ok((sub, order))
}

/// Serializes one graph in the line-oriented text format:
///
/// ```text
/// n d label          # label = -1 for node-task graphs
/// labels l0 ... ln-1 # node-task only
/// center c           # only when a center is set
/// f0 f1 ... fd-1     # n feature rows
/// u v [gt]           # one line per edge, gt flag in {0,1}
/// ```
///
/// Graphs in a multi-graph file are separated by one blank line.
pub fn write_graph(g: &Graph, out: &mut String) {
    let label = match &g.labels {
        Labels::Graph(c) => *c as i64,
        Labels::Node(_) => -1,
    };
    writeln!(out, "{} {} {}", g.n, g.features.cols, label).unwrap();
    if let Labels::Node(ls) = &g.labels {
        out.push_str("labels");
        for l in ls {
            write!(out, " {l}").unwrap();
        }
        out.push('\n');
    }
    if let Some(c) = g.center {
        writeln!(out, "center {c}").unwrap();
    }
    for i in 0..g.n {
        let row = g.features.row(i);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    for (u, v) in edge_list(&g.adjacency) {
        let gt = g
            .gt_edge_mask
            .as_ref()
            .map(|m| m.get(u, v) != 0.0)
            .unwrap_or(false);
        if g.gt_edge_mask.is_some() {
            writeln!(out, "{u} {v} {}", gt as u8).unwrap();
        } else {
            writeln!(out, "{u} {v}").unwrap();
        }
    }
}

/// Parses graphs from the text format. `line_offset` is added to reported
/// line numbers.
pub fn parse_graphs(text: &str) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    loop {
        // skip blank separators
        while matches!(lines.peek(), Some((_, l)) if l.trim().is_empty()) {
            lines.next();
        }
        let Some((lineno, header)) = lines.next() else { break };
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(RalignError::Parse {
                line: lineno + 1,
                msg: format!("expected header `n d label`, got `{header}`"),
            });
        }
        let n: usize = parse_field(parts[0], lineno, "n")?;
        let d: usize = parse_field(parts[1], lineno, "d")?;
        let label: i64 = parse_field(parts[2], lineno, "label")?;

        let mut node_labels: Option<Vec<usize>> = None;
        let mut center: Option<usize> = None;
        // optional labels / center lines
        while let Some((_, l)) = lines.peek() {
            let l = l.trim();
            if l.starts_with("labels") {
                let (ln, l) = lines.next().unwrap();
                let ls: Vec<usize> = l
                    .split_whitespace()
                    .skip(1)
                    .map(|t| parse_field(t, ln, "node label"))
                    .collect::<Result<_>>()?;
                if ls.len() != n {
                    return Err(RalignError::Parse {
                        line: ln + 1,
                        msg: format!("{} labels for {} nodes", ls.len(), n),
                    });
                }
                node_labels = Some(ls);
            } else if l.starts_with("center") {
                let (ln, l) = lines.next().unwrap();
                let c: usize = parse_field(
                    l.split_whitespace().nth(1).unwrap_or(""),
                    ln,
                    "center",
                )?;
                center = Some(c);
            } else {
                break;
            }
        }

        let mut feats = Matrix::zeros(n, d);
        for i in 0..n {
            let Some((ln, l)) = lines.next() else {
                return Err(RalignError::Parse {
                    line: lineno + 1,
                    msg: format!("missing feature row {i}"),
                });
            };
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| parse_field(t, ln, "feature"))
                .collect::<Result<_>>()?;
            if vals.len() != d {
                return Err(RalignError::Parse {
                    line: ln + 1,
                    msg: format!("{} features in row of width {}", vals.len(), d),
                });
            }
            feats.data[i * d..(i + 1) * d].copy_from_slice(&vals);
        }

        let mut adj = Matrix::zeros(n, n);
        let mut gt: Option<Matrix> = None;
        while let Some((_, l)) = lines.peek() {
            if l.trim().is_empty() {
                break;
            }
            let (ln, l) = lines.next().unwrap();
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() < 2 || parts.len() > 3 {
                return Err(RalignError::Parse {
                    line: ln + 1,
                    msg: format!("expected edge `u v [gt]`, got `{l}`"),
                });
            }
            let u: usize = parse_field(parts[0], ln, "u")?;
            let v: usize = parse_field(parts[1], ln, "v")?;
            if u >= n || v >= n {
                return Err(RalignError::Parse {
                    line: ln + 1,
                    msg: format!("edge ({u},{v}) out of range for {n} nodes"),
                });
            }
            adj.set(u, v, 1.0);
            adj.set(v, u, 1.0);
            if parts.len() == 3 {
                let flag: u8 = parse_field(parts[2], ln, "gt")?;
                let gtm = gt.get_or_insert_with(|| Matrix::zeros(n, n));
                if flag != 0 {
                    gtm.set(u, v, 1.0);
                    gtm.set(v, u, 1.0);
                }
            }
        }

        let labels = match node_labels {
            Some(ls) => Labels::Node(ls),
            None => {
                if label < 0 {
                    return Err(RalignError::Parse {
                        line: lineno + 1,
                        msg: "node-task header (label -1) without a labels line".into(),
                    });
                }
                Labels::Graph(label as usize)
            }
        };
        graphs.push(
            Graph::new(adj, feats, labels, gt, center).map_err(|e| RalignError::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?,
        );
    }
    Ok(graphs)
}

fn parse_field<T: std::str::FromStr>(tok: &str, lineno: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| RalignError::Parse {
        line: lineno + 1,
        msg: format!("bad {what}: `{tok}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Graph {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n - 1 {
            a.set(i, i + 1, 1.0);
            a.set(i + 1, i, 1.0);
        }
        Graph::new(a, Matrix::filled(n, 2, 1.0), Labels::Node(vec![0; n]), None, None).unwrap()
    }

    #[test]
    fn normalize_single_node() {
        let a = Matrix::zeros(1, 1);
        let n = normalize_adjacency(&a, None).unwrap();
        assert_eq!(n.data, vec![1.0]);
    }

    #[test]
    fn normalize_two_nodes_one_edge() {
        let a = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let n = normalize_adjacency(&a, None).unwrap();
        for &v in &n.data {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_zero_mask_keeps_only_self_loops() {
        // triangle: every node has degree 2, so each self-loop entry is 1/3
        let a = Matrix::from_vec(3, 3, vec![0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap();
        let m = Matrix::zeros(3, 3);
        let n = normalize_adjacency(&a, Some(&m)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((n.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_mask_scales_offdiagonal_entries() {
        // each off-diagonal entry is the unmasked normalized weight times the
        // mask value; self-loops are untouched
        let a = Matrix::from_vec(3, 3, vec![0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap();
        let m = Matrix::from_vec(3, 3, vec![0., 0.5, 0., 0.5, 0., 0., 0., 0., 0.]).unwrap();
        let plain = normalize_adjacency(&a, None).unwrap();
        let masked = normalize_adjacency(&a, Some(&m)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { plain.get(i, j) } else { plain.get(i, j) * m.get(i, j) };
                assert!((masked.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn khop_star_center() {
        let mut a = Matrix::zeros(6, 6);
        for leaf in 1..6 {
            a.set(0, leaf, 1.0);
            a.set(leaf, 0, 1.0);
        }
        let g = Graph::new(a, Matrix::filled(6, 1, 1.0), Labels::Node(vec![0; 6]), None, None)
            .unwrap();
        let (sub, order) = k_hop_subgraph(&g, 0, 1).unwrap();
        assert_eq!(sub.n, 6);
        assert_eq!(order, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sub.center, Some(0));
    }

    #[test]
    fn khop_path_two_hops() {
        let g = path_graph(4);
        let (sub, order) = k_hop_subgraph(&g, 0, 2).unwrap();
        assert_eq!(sub.n, 3);
        assert_eq!(order, vec![0, 1, 2]);
        assert_eq!(edge_list(&sub.adjacency).len(), 2);
    }

    #[test]
    fn khop_isolated_node() {
        let g = Graph::new(
            Matrix::zeros(1, 1),
            Matrix::filled(1, 1, 1.0),
            Labels::Node(vec![0]),
            None,
            None,
        )
        .unwrap();
        let (sub, _) = k_hop_subgraph(&g, 0, 3).unwrap();
        assert_eq!(sub.n, 1);
    }

    #[test]
    fn khop_out_of_range() {
        let g = path_graph(3);
        assert!(k_hop_subgraph(&g, 7, 1).is_err());
    }

    #[test]
    fn khop_idempotent() {
        let g = path_graph(6);
        let (s1, _) = k_hop_subgraph(&g, 2, 2).unwrap();
        let (s2, _) = k_hop_subgraph(&s1, s1.center.unwrap(), 2).unwrap();
        assert_eq!(s1.n, s2.n);
        assert_eq!(edge_list(&s1.adjacency), edge_list(&s2.adjacency));
    }

    #[test]
    fn edge_list_triangle() {
        let a = Matrix::from_vec(3, 3, vec![0., 1., 1., 1., 0., 1., 1., 1., 0.]).unwrap();
        assert_eq!(edge_list(&a), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn edge_list_empty_and_single() {
        assert!(edge_list(&Matrix::zeros(4, 4)).is_empty());
        let a = Matrix::from_vec(2, 2, vec![0., 1., 1., 0.]).unwrap();
        assert_eq!(edge_list(&a), vec![(0, 1)]);
    }

    #[test]
    fn edge_list_roundtrip() {
        let a = Matrix::from_vec(4, 4, vec![
            0., 1., 0., 1., //
            1., 0., 1., 0., //
            0., 1., 0., 0., //
            1., 0., 0., 0.,
        ])
        .unwrap();
        let rebuilt = adjacency_from_edges(4, &edge_list(&a));
        assert_eq!(rebuilt, a);
    }

    #[test]
    fn serialization_roundtrip() {
        let mut a = Matrix::zeros(3, 3);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        let mut gt = Matrix::zeros(3, 3);
        gt.set(1, 2, 1.0);
        gt.set(2, 1, 1.0);
        let g = Graph::new(
            a,
            Matrix::from_vec(3, 2, vec![0.5, 1.0, -2.25, 0.0, 3.0, 1.5]).unwrap(),
            Labels::Node(vec![0, 1, 1]),
            Some(gt),
            Some(1),
        )
        .unwrap();
        let mut text = String::new();
        write_graph(&g, &mut text);
        let parsed = parse_graphs(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], g);
    }

    #[test]
    fn parse_rejects_out_of_range_edge() {
        let text = "2 1 0\n1.0\n1.0\n0 5\n";
        let err = parse_graphs(text).unwrap_err();
        assert!(matches!(err, RalignError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn gt_subset_enforced() {
        let a = Matrix::from_vec(2, 2, vec![0., 1., 1., 0.]).unwrap();
        let gt = Matrix::from_vec(2, 2, vec![0., 1., 1., 0.]).unwrap();
        assert!(Graph::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
            Labels::Graph(0),
            Some(gt),
            None
        )
        .is_err());
        // valid subset passes
        let gt2 = Matrix::zeros(2, 2);
        assert!(Graph::new(a, Matrix::zeros(2, 1), Labels::Graph(0), Some(gt2), None).is_ok());
    }
}
