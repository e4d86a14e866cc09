use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{RalignError, Result};
use crate::tensor::Matrix;

/// Inputs to `ln` are clamped at this value so that log of a hard zero stays
/// finite; matches the probability clamping used by the KL alignment loss.
pub const LN_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    /// matrix (n x c) plus a broadcast row (1 x c)
    AddRow(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Ln(usize),
    Sqrt(usize),
    Rsqrt(usize),
    Transpose(usize),
    RowSoftmax(usize),
    ConcatCols(usize, usize),
    MeanRows(usize),
    MaxRows(usize, Vec<usize>),
    RowSelect(usize, usize),
    Sum(usize),
    MaskedSelect(usize, Rc<Vec<usize>>),
    /// Symmetric scatter of per-edge values into an n x n matrix.
    ScatterEdges(usize, Rc<Vec<(usize, usize)>>, usize),
    /// Constant sparse matrix times a dense operand.
    SpmmConst(Rc<SparseMat>, usize),
}

/// Constant sparse matrix in triplet form, used on the tape as the left
/// operand of [`Tape::spmm`]. Only the dense operand receives gradients.
#[derive(Debug, Clone)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMat {
    pub fn from_dense(m: &Matrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.rows {
            for j in 0..m.cols {
                let x = m.get(i, j);
                if x != 0.0 {
                    entries.push((i, j, x));
                }
            }
        }
        SparseMat {
            rows: m.rows,
            cols: m.cols,
            entries,
        }
    }

    pub fn matmul(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows != self.cols {
            return Err(RalignError::Dimension(format!(
                "spmm: {}x{} times {}x{}",
                self.rows, self.cols, h.rows, h.cols
            )));
        }
        let c = h.cols;
        let mut out = Matrix::zeros(self.rows, c);
        for &(i, j, x) in &self.entries {
            let (dst, src) = (i * c, j * c);
            for k in 0..c {
                out.data[dst + k] += x * h.data[src + k];
            }
        }
        Ok(out)
    }

    /// Transposed product: out = selfᵀ · h.
    fn matmul_t(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows != self.rows {
            return Err(RalignError::Dimension("spmm_t shape".into()));
        }
        let c = h.cols;
        let mut out = Matrix::zeros(self.cols, c);
        for &(i, j, x) in &self.entries {
            let (dst, src) = (j * c, i * c);
            for k in 0..c {
                out.data[dst + k] += x * h.data[src + k];
            }
        }
        Ok(out)
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Single-use computation tape for reverse-mode differentiation.
///
/// Nodes are appended in topological order by construction; `backward`
/// sweeps them in reverse. Only leaves created with `leaf` receive
/// gradients, intermediate adjoints are dropped as soon as the sweep
/// passes them.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Gradients for the leaf variables of one backward pass.
pub struct Grads {
    by_node: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, op: Op, value: Matrix) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var(nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&self, value: Matrix) -> Var {
        self.push(Op::Leaf { requires_grad: true }, value)
    }

    /// Non-trainable input.
    pub fn constant(&self, value: Matrix) -> Var {
        self.push(
            Op::Leaf {
                requires_grad: false,
            },
            value,
        )
    }

    pub fn value(&self, v: Var) -> Matrix {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        (nodes[v.0].value.rows, nodes[v.0].value.cols)
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.data[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)?
        };
        Ok(self.push(Op::Matmul(a.0, b.0), value))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip(&nodes[b.0].value, |x, y| x + y)?
        };
        Ok(self.push(Op::Add(a.0, b.0), value))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip(&nodes[b.0].value, |x, y| x - y)?
        };
        Ok(self.push(Op::Sub(a.0, b.0), value))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.zip(&nodes[b.0].value, |x, y| x * y)?
        };
        Ok(self.push(Op::Mul(a.0, b.0), value))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| c * x);
        self.push(Op::Scale(a.0, c), value)
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| x + c);
        self.push(Op::AddScalar(a.0, c), value)
    }

    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let m = &nodes[a.0].value;
            let r = &nodes[row.0].value;
            if r.rows != 1 || r.cols != m.cols {
                return Err(RalignError::Dimension(format!(
                    "add_row {}x{} with {}x{}",
                    m.rows, m.cols, r.rows, r.cols
                )));
            }
            let mut out = m.clone();
            for i in 0..out.rows {
                for j in 0..out.cols {
                    out.data[i * out.cols + j] += r.data[j];
                }
            }
            out
        };
        Ok(self.push(Op::AddRow(a.0, row.0), value))
    }

    /// relu with the convention relu'(0) = 0.
    pub fn relu(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a.0), value)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(sigmoid);
        self.push(Op::Sigmoid(a.0), value)
    }

    pub fn softplus(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(softplus);
        self.push(Op::Softplus(a.0), value)
    }

    /// Natural log with inputs clamped at [`LN_CLAMP`].
    pub fn ln(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| x.max(LN_CLAMP).ln());
        self.push(Op::Ln(a.0), value)
    }

    pub fn sqrt(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| x.max(0.0).sqrt());
        self.push(Op::Sqrt(a.0), value)
    }

    /// x^(-1/2), used by symmetric degree normalization.
    pub fn rsqrt(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|x| 1.0 / x.sqrt());
        self.push(Op::Rsqrt(a.0), value)
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.transpose();
        self.push(Op::Transpose(a.0), value)
    }

    /// Softmax over each row, with max subtraction for stability.
    pub fn row_softmax(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            row_softmax(&nodes[a.0].value)
        };
        self.push(Op::RowSoftmax(a.0), value)
    }

    pub fn concat_cols(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let y = &nodes[b.0].value;
            if x.rows != y.rows {
                return Err(RalignError::Dimension(format!(
                    "concat rows {} vs {}",
                    x.rows, y.rows
                )));
            }
            let mut out = Matrix::zeros(x.rows, x.cols + y.cols);
            for i in 0..x.rows {
                out.data[i * out.cols..i * out.cols + x.cols]
                    .copy_from_slice(&x.data[i * x.cols..(i + 1) * x.cols]);
                out.data[i * out.cols + x.cols..(i + 1) * out.cols]
                    .copy_from_slice(&y.data[i * y.cols..(i + 1) * y.cols]);
            }
            out
        };
        Ok(self.push(Op::ConcatCols(a.0, b.0), value))
    }

    /// Column-wise mean over rows, yielding 1 x c.
    pub fn mean_rows(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = Matrix::zeros(1, x.cols);
            for i in 0..x.rows {
                for j in 0..x.cols {
                    out.data[j] += x.data[i * x.cols + j];
                }
            }
            for j in 0..x.cols {
                out.data[j] /= x.rows as f64;
            }
            out
        };
        self.push(Op::MeanRows(a.0), value)
    }

    /// Column-wise max over rows, yielding 1 x c. Ties route the gradient to
    /// the first maximizing row.
    pub fn max_rows(&self, a: Var) -> Var {
        let (value, argmax) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = Matrix::filled(1, x.cols, f64::NEG_INFINITY);
            let mut arg = vec![0usize; x.cols];
            for i in 0..x.rows {
                for j in 0..x.cols {
                    let v = x.data[i * x.cols + j];
                    if v > out.data[j] {
                        out.data[j] = v;
                        arg[j] = i;
                    }
                }
            }
            (out, arg)
        };
        self.push(Op::MaxRows(a.0, argmax), value)
    }

    pub fn row_select(&self, a: Var, r: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if r >= x.rows {
                return Err(RalignError::Index(format!("row {} of {} rows", r, x.rows)));
            }
            Matrix::from_vec(1, x.cols, x.row(r).to_vec())?
        };
        Ok(self.push(Op::RowSelect(a.0, r), value))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Matrix::scalar(self.nodes.borrow()[a.0].value.sum());
        self.push(Op::Sum(a.0), value)
    }

    /// Gathers the entries at flat `positions` into an m x 1 column.
    pub fn masked_select(&self, a: Var, positions: Rc<Vec<usize>>) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut data = Vec::with_capacity(positions.len());
            for &p in positions.iter() {
                if p >= x.data.len() {
                    return Err(RalignError::Index(format!(
                        "flat position {} of {}",
                        p,
                        x.data.len()
                    )));
                }
                data.push(x.data[p]);
            }
            Matrix::from_vec(positions.len(), 1, data)?
        };
        Ok(self.push(Op::MaskedSelect(a.0, positions), value))
    }

    /// Places per-edge values (m x 1) symmetrically into an n x n matrix:
    /// out[u][v] = out[v][u] = theta[e].
    pub fn scatter_edges(&self, theta: Var, edges: Rc<Vec<(usize, usize)>>, n: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[theta.0].value;
            if t.rows != edges.len() || t.cols != 1 {
                return Err(RalignError::Dimension(format!(
                    "scatter_edges wants {}x1, got {}x{}",
                    edges.len(),
                    t.rows,
                    t.cols
                )));
            }
            let mut out = Matrix::zeros(n, n);
            for (e, &(u, v)) in edges.iter().enumerate() {
                if u >= n || v >= n {
                    return Err(RalignError::Index(format!("edge ({u},{v}) in graph of {n}")));
                }
                out.data[u * n + v] = t.data[e];
                out.data[v * n + u] = t.data[e];
            }
            out
        };
        Ok(self.push(Op::ScatterEdges(theta.0, edges, n), value))
    }

    /// Product of a constant sparse matrix with a tape value; gradients flow
    /// only into the dense operand.
    pub fn spmm(&self, s: Rc<SparseMat>, h: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            s.matmul(&nodes[h.0].value)?
        };
        Ok(self.push(Op::SpmmConst(s, h.0), value))
    }

    /// Reverse sweep from a scalar loss. Returns gradients for all
    /// `requires_grad` leaves; intermediate adjoints are released.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(RalignError::Contract("backward on empty tape".into()));
        }
        let l = &nodes[loss.0].value;
        if l.rows != 1 || l.cols != 1 {
            return Err(RalignError::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                l.rows, l.cols
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; nodes.len()];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(grad) = adj[i].take() else { continue };
            let node = &nodes[i];
            let keep = matches!(node.op, Op::Leaf { requires_grad: true });
            match &node.op {
                Op::Leaf { .. } => {}
                Op::Matmul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&mut adj[*a], grad.matmul(&bv.transpose())?);
                    accumulate(&mut adj[*b], av.transpose().matmul(&grad)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[*a], grad.clone());
                    accumulate(&mut adj[*b], grad.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[*a], grad.clone());
                    accumulate(&mut adj[*b], grad.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&mut adj[*a], grad.zip(bv, |g, y| g * y)?);
                    accumulate(&mut adj[*b], grad.zip(av, |g, x| g * x)?);
                }
                Op::Scale(a, c) => accumulate(&mut adj[*a], grad.map(|g| g * c)),
                Op::AddScalar(a, _c) => {
                    let _ = _c; // the constant contributes no gradient
                    accumulate(&mut adj[*a], grad.clone());
                }
                Op::AddRow(a, r) => {
                    let mut rg = Matrix::zeros(1, grad.cols);
                    for i in 0..grad.rows {
                        for j in 0..grad.cols {
                            rg.data[j] += grad.data[i * grad.cols + j];
                        }
                    }
                    accumulate(&mut adj[*a], grad.clone());
                    accumulate(&mut adj[*r], rg);
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut adj[*a], grad.zip(x, |g, v| if v > 0.0 { g } else { 0.0 })?);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut adj[*a], grad.zip(y, |g, s| g * s * (1.0 - s))?);
                }
                Op::Softplus(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut adj[*a], grad.zip(x, |g, v| g * sigmoid(v))?);
                }
                Op::Ln(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut adj[*a], grad.zip(x, |g, v| g / v.max(LN_CLAMP))?);
                }
                Op::Sqrt(a) => {
                    let y = &node.value;
                    accumulate(&mut adj[*a], grad.zip(y, |g, s| g / (2.0 * s.max(LN_CLAMP)))?);
                }
                Op::Rsqrt(a) => {
                    let y = &node.value;
                    accumulate(&mut adj[*a], grad.zip(y, |g, s| g * (-0.5) * s * s * s)?);
                }
                Op::Transpose(a) => accumulate(&mut adj[*a], grad.transpose()),
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let mut dot = 0.0;
                        for c in 0..y.cols {
                            dot += grad.data[r * y.cols + c] * y.data[r * y.cols + c];
                        }
                        for c in 0..y.cols {
                            let idx = r * y.cols + c;
                            dx.data[idx] = y.data[idx] * (grad.data[idx] - dot);
                        }
                    }
                    accumulate(&mut adj[*a], dx);
                }
                Op::ConcatCols(a, b) => {
                    let ac = nodes[*a].value.cols;
                    let bc = nodes[*b].value.cols;
                    let mut da = Matrix::zeros(grad.rows, ac);
                    let mut db = Matrix::zeros(grad.rows, bc);
                    for i in 0..grad.rows {
                        da.data[i * ac..(i + 1) * ac]
                            .copy_from_slice(&grad.data[i * grad.cols..i * grad.cols + ac]);
                        db.data[i * bc..(i + 1) * bc]
                            .copy_from_slice(&grad.data[i * grad.cols + ac..(i + 1) * grad.cols]);
                    }
                    accumulate(&mut adj[*a], da);
                    accumulate(&mut adj[*b], db);
                }
                Op::MeanRows(a) => {
                    let x = &nodes[*a].value;
                    let inv = 1.0 / x.rows as f64;
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    for i in 0..x.rows {
                        for j in 0..x.cols {
                            dx.data[i * x.cols + j] = grad.data[j] * inv;
                        }
                    }
                    accumulate(&mut adj[*a], dx);
                }
                Op::MaxRows(a, argmax) => {
                    let x = &nodes[*a].value;
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    for (j, &i) in argmax.iter().enumerate() {
                        dx.data[i * x.cols + j] = grad.data[j];
                    }
                    accumulate(&mut adj[*a], dx);
                }
                Op::RowSelect(a, r) => {
                    let x = &nodes[*a].value;
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    dx.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(&grad.data);
                    accumulate(&mut adj[*a], dx);
                }
                Op::Sum(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut adj[*a], Matrix::filled(x.rows, x.cols, grad.data[0]));
                }
                Op::MaskedSelect(a, positions) => {
                    let x = &nodes[*a].value;
                    let mut dx = Matrix::zeros(x.rows, x.cols);
                    for (e, &p) in positions.iter().enumerate() {
                        dx.data[p] += grad.data[e];
                    }
                    accumulate(&mut adj[*a], dx);
                }
                Op::ScatterEdges(t, edges, n) => {
                    let mut dt = Matrix::zeros(edges.len(), 1);
                    for (e, &(u, v)) in edges.iter().enumerate() {
                        dt.data[e] = grad.data[u * n + v] + grad.data[v * n + u];
                    }
                    accumulate(&mut adj[*t], dt);
                }
                Op::SpmmConst(s, h) => accumulate(&mut adj[*h], s.matmul_t(&grad)?),
            }
            if keep {
                adj[i] = Some(grad);
            }
        }
        // drop adjoints of non-trainable leaves
        for (i, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf { requires_grad: true }) {
                adj[i] = None;
            }
        }
        Ok(Grads { by_node: adj })
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data.iter_mut().zip(g.data.iter()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn row_softmax(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (c, &v) in row.iter().enumerate() {
            let e = (v - m).exp();
            out.data[r * x.cols + c] = e;
            z += e;
        }
        for c in 0..x.cols {
            out.data[r * x.cols + c] /= z;
        }
    }
    out
}

/// Max relative error between reverse-mode and central finite differences,
/// over all coordinates of `x`.
pub fn grad_check<F>(f: F, x: &Matrix, epsilon: f64) -> Result<f64>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&tape, xv)?;
    let grads = tape.backward(loss)?;
    let ad = grads
        .get(xv)
        .ok_or_else(|| RalignError::Contract("no gradient for input".into()))?
        .clone();

    let eval = |m: &Matrix| -> Result<f64> {
        let t = Tape::new();
        let v = t.leaf(m.clone());
        let l = f(&t, v)?;
        Ok(t.scalar_value(l))
    };

    let mut max_err: f64 = 0.0;
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += epsilon;
        let mut xm = x.clone();
        xm.data[i] -= epsilon;
        let fd = (eval(&xp)? - eval(&xm)?) / (2.0 * epsilon);
        let a = ad.data[i];
        let err = (a - fd).abs() / 1.0_f64.max(a.abs()).max(fd.abs());
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
