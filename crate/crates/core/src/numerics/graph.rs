//! Eager computation graph with reverse-mode differentiation.
//!
//! Values are computed as nodes are added; nodes only reference earlier
//! nodes, so the insertion order is a topological order and `backward` is a
//! single reverse sweep. All tensors are treated as matrices.

use super::{NumericError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    Gather(NodeId, Vec<(usize, usize)>),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    MeanRows(NodeId),
    Sum(NodeId),
    L2NormalizeRows(NodeId),
    ClippedSurrogate {
        logp: NodeId,
        old: Vec<f64>,
        advantages: Vec<f64>,
        low: f64,
        high: f64,
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::ScaleBy(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::GatherRows(a, _)
            | Op::Gather(a, _)
            | Op::SliceCols(a, _)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::MeanRows(a)
            | Op::Sum(a)
            | Op::L2NormalizeRows(a) => vec![*a],
            Op::ConcatRows(xs) | Op::ConcatCols(xs) => xs.clone(),
            Op::ClippedSurrogate { logp, .. } => vec![*logp],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that reaches it.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

/// Per-element PPO-style clipped objective; returns `(loss, dloss/dlogp)`.
pub(crate) fn surrogate_term(logp_new: f64, logp_old: f64, advantage: f64, low: f64, high: f64) -> (f64, f64) {
    let ratio = (logp_new - logp_old).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - low, 1.0 + high) * advantage;
    if unclipped <= clipped {
        (-unclipped, -unclipped)
    } else {
        (-clipped, 0.0)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = self.value(id);
        (v.rows(), v.cols())
    }

    /// Parameters and constants alike enter the graph as leaves.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimensions {n}x{k} * {k2}x{m}");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let row = &bv[p * m..(p + 1) * m];
                for (o, y) in out[i * m..(i + 1) * m].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        self.push(Tensor::from_parts(vec![n, m], out), Op::MatMul(a, b))
    }

    fn zip_same(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        assert_eq!(self.dims(a), self.dims(b), "elementwise shape mismatch");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let (r, c) = self.dims(a);
        self.push(Tensor::from_parts(vec![r, c], data), op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a + 1 * bias` for a `1 x c` bias row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        assert_eq!(self.dims(bias), (1, c), "bias row shape");
        let b = self.value(bias).data().to_vec();
        let data = self
            .value(a)
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>())
            .collect();
        self.push(Tensor::from_parts(vec![r, c], data), Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let (r, c) = self.dims(a);
        let data = self.value(a).data().iter().map(|x| x * s).collect();
        self.push(Tensor::from_parts(vec![r, c], data), Op::Scale(a, s))
    }

    /// Multiplies every entry of `a` by the `1 x 1` node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.dims(s), (1, 1), "scale_by expects a scalar node");
        let k = self.scalar(s);
        let (r, c) = self.dims(a);
        let data = self.value(a).data().iter().map(|x| x * k).collect();
        self.push(Tensor::from_parts(vec![r, c], data), Op::ScaleBy(a, s))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let v = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a))
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        assert!(!rows.is_empty(), "gather_rows needs at least one index");
        let v = self.value(a);
        let c = v.cols();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            out.extend_from_slice(v.row_slice(r));
        }
        self.push(Tensor::from_parts(vec![rows.len(), c], out), Op::GatherRows(a, rows.to_vec()))
    }

    /// Picks single entries into a `1 x n` row.
    pub fn gather(&mut self, a: NodeId, positions: &[(usize, usize)]) -> NodeId {
        assert!(!positions.is_empty(), "gather needs at least one position");
        let v = self.value(a);
        let out = positions.iter().map(|&(r, c)| v.get(r, c)).collect();
        self.push(
            Tensor::from_parts(vec![1, positions.len()], out),
            Op::Gather(a, positions.to_vec()),
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let c = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.dims(p);
            assert_eq!(pc, c, "concat_rows column mismatch");
            out.extend_from_slice(self.value(p).data());
            rows += r;
        }
        self.push(Tensor::from_parts(vec![rows, c], out), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let r = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pr, pc) = self.dims(p);
                assert_eq!(pr, r, "concat_cols row mismatch");
                pc
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        self.push(Tensor::from_parts(vec![r, total], out), Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.dims(a);
        assert!(len > 0 && start + len <= c, "slice_cols out of range");
        let v = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v.row_slice(i)[start..start + len]);
        }
        self.push(Tensor::from_parts(vec![r, len], out), Op::SliceCols(a, start))
    }

    fn rowwise(&mut self, a: NodeId, f: fn(&[f64], &mut [f64]), op: Op) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = vec![0.0; r * c];
        for (row, o) in self.value(a).data().chunks(c).zip(out.chunks_mut(c)) {
            f(row, o);
        }
        self.push(Tensor::from_parts(vec![r, c], out), op)
    }

    /// Max-subtracted softmax over each row.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        self.rowwise(a, softmax_row, Op::SoftmaxRows(a))
    }

    /// Log-sum-exp stabilized log-softmax over each row.
    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        self.rowwise(a, log_softmax_row, Op::LogSoftmaxRows(a))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = vec![0.0; c];
        for row in self.value(a).data().chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        self.push(Tensor::from_parts(vec![1, c], out), Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Divides each row by its Euclidean norm. Rows must be nonzero.
    pub fn l2_normalize_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let mut out = vec![0.0; r * c];
        for (row, o) in self.value(a).data().chunks(c).zip(out.chunks_mut(c)) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm > 0.0, "l2_normalize_rows on a zero row");
            for (y, x) in o.iter_mut().zip(row) {
                *y = x / norm;
            }
        }
        self.push(Tensor::from_parts(vec![r, c], out), Op::L2NormalizeRows(a))
    }

    /// Mean over entries of `-min(rho * A, clip(rho, 1 - low, 1 + high) * A)`
    /// with `rho = exp(logp - old)`; `logp` is a `1 x n` row.
    pub fn clipped_surrogate(&mut self, logp: NodeId, old: &[f64], advantages: &[f64], low: f64, high: f64) -> NodeId {
        let lp = self.value(logp).data();
        assert_eq!(lp.len(), old.len());
        assert_eq!(lp.len(), advantages.len());
        let total: f64 = lp
            .iter()
            .zip(old)
            .zip(advantages)
            .map(|((&n, &o), &a)| surrogate_term(n, o, a, low, high).0)
            .sum();
        let value = total / lp.len() as f64;
        self.push(
            Tensor::scalar(value),
            Op::ClippedSurrogate {
                logp,
                old: old.to_vec(),
                advantages: advantages.to_vec(),
                low,
                high,
            },
        )
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericError> {
        if self.dims(loss) != (1, 1) {
            return Err(NumericError::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.op.inputs().iter().any(|x| x.0 >= i) {
                return Err(NumericError::GraphCycle { node: i });
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor>], id: NodeId) -> &'a mut [f64] {
        let (r, c) = self.dims(id);
        grads[id.0]
            .get_or_insert_with(|| Tensor::zeros(r, c))
            .data_mut()
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.dims(*a);
                let m = self.dims(*b).1;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = self.acc(grads, *a);
                for row in 0..n {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..m {
                            s += gd[row * m + j] * bv[p * m + j];
                        }
                        da[row * k + p] += s;
                    }
                }
                let db = self.acc(grads, *b);
                for row in 0..n {
                    for p in 0..k {
                        let x = av[row * k + p];
                        for j in 0..m {
                            db[p * m + j] += x * gd[row * m + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(gd) {
                    *d += x;
                }
                for (d, x) in self.acc(grads, *b).iter_mut().zip(gd) {
                    *d += x;
                }
            }
            Op::Sub(a, b) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(gd) {
                    *d += x;
                }
                for (d, x) in self.acc(grads, *b).iter_mut().zip(gd) {
                    *d -= x;
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                for ((d, x), y) in self.acc(grads, *a).iter_mut().zip(gd).zip(bv) {
                    *d += x * y;
                }
                for ((d, x), y) in self.acc(grads, *b).iter_mut().zip(gd).zip(av) {
                    *d += x * y;
                }
            }
            Op::AddRow(a, bias) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(gd) {
                    *d += x;
                }
                let c = g.cols();
                let db = self.acc(grads, *bias);
                for row in gd.chunks(c) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
            }
            Op::Scale(a, s) => {
                for (d, x) in self.acc(grads, *a).iter_mut().zip(gd) {
                    *d += s * x;
                }
            }
            Op::ScaleBy(a, s) => {
                let k = self.scalar(*s);
                let av = self.value(*a).data();
                let ds: f64 = gd.iter().zip(av).map(|(x, y)| x * y).sum();
                for (d, x) in self.acc(grads, *a).iter_mut().zip(gd) {
                    *d += k * x;
                }
                self.acc(grads, *s)[0] += ds;
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(*a);
                let da = self.acc(grads, *a);
                for row in 0..r {
                    for col in 0..c {
                        da[row * c + col] += gd[col * r + row];
                    }
                }
            }
            Op::GatherRows(a, rows) => {
                let c = self.dims(*a).1;
                let da = self.acc(grads, *a);
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        da[r * c + j] += gd[k * c + j];
                    }
                }
            }
            Op::Gather(a, positions) => {
                let c = self.dims(*a).1;
                let da = self.acc(grads, *a);
                for (k, &(r, col)) in positions.iter().enumerate() {
                    da[r * c + col] += gd[k];
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    for (d, x) in self.acc(grads, *p).iter_mut().zip(&gd[offset..offset + n]) {
                        *d += x;
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut col0 = 0;
                for p in parts {
                    let (r, c) = self.dims(*p);
                    let dp = self.acc(grads, *p);
                    for row in 0..r {
                        for j in 0..c {
                            dp[row * c + j] += gd[row * total + col0 + j];
                        }
                    }
                    col0 += c;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.dims(*a);
                let len = g.cols();
                let da = self.acc(grads, *a);
                for row in 0..r {
                    for j in 0..len {
                        da[row * c + start + j] += gd[row * len + j];
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let c = g.cols();
                let y = node.value.data();
                let da = self.acc(grads, *a);
                for ((dy, yr), dx) in gd.chunks(c).zip(y.chunks(c)).zip(da.chunks_mut(c)) {
                    let dot: f64 = dy.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dx[j] += yr[j] * (dy[j] - dot);
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let c = g.cols();
                let y = node.value.data();
                let da = self.acc(grads, *a);
                for ((dy, yr), dx) in gd.chunks(c).zip(y.chunks(c)).zip(da.chunks_mut(c)) {
                    let total: f64 = dy.iter().sum();
                    for j in 0..c {
                        dx[j] += dy[j] - yr[j].exp() * total;
                    }
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = self.dims(*a);
                let da = self.acc(grads, *a);
                for row in da.chunks_mut(c) {
                    for (d, x) in row.iter_mut().zip(gd) {
                        *d += x / r as f64;
                    }
                }
            }
            Op::Sum(a) => {
                let s = gd[0];
                for d in self.acc(grads, *a).iter_mut() {
                    *d += s;
                }
            }
            Op::L2NormalizeRows(a) => {
                let c = g.cols();
                let x = self.value(*a).data();
                let y = node.value.data();
                let da = self.acc(grads, *a);
                for (((dy, yr), xr), dx) in gd
                    .chunks(c)
                    .zip(y.chunks(c))
                    .zip(x.chunks(c))
                    .zip(da.chunks_mut(c))
                {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = dy.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dx[j] += (dy[j] - yr[j] * dot) / norm;
                    }
                }
            }
            Op::ClippedSurrogate {
                logp,
                old,
                advantages,
                low,
                high,
            } => {
                let lp = self.value(*logp).data().to_vec();
                let n = lp.len() as f64;
                let s = gd[0];
                let dl = self.acc(grads, *logp);
                for k in 0..lp.len() {
                    let (_, d) = surrogate_term(lp[k], old[k], advantages[k], *low, *high);
                    dl[k] += s * d / n;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, losses};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        let data = (0..r * c).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Tensor::new(vec![r, c], data).unwrap()
    }

    fn check(seed: u64, shapes: &[(usize, usize)], f: impl Fn(&mut Graph, &[NodeId]) -> NodeId) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Tensor> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
        let err = grad_check(f, &params, 1e-5);
        assert!(err < 1e-6, "seed {seed}: relative error {err}");
    }

    // Weighted sum so every output entry gets a distinct upstream gradient.
    fn weigh(g: &mut Graph, x: NodeId) -> NodeId {
        let (r, c) = g.dims(x);
        let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.17 * i as f64).collect();
        let wn = g.leaf(Tensor::new(vec![r, c], w).unwrap());
        let prod = g.mul(x, wn);
        g.sum(prod)
    }

    #[test]
    fn elementwise_and_linear_ops() {
        for seed in 0..5 {
            check(seed, &[(3, 4), (4, 2)], |g, p| {
                let m = g.matmul(p[0], p[1]);
                weigh(g, m)
            });
            check(seed, &[(2, 3), (2, 3)], |g, p| {
                let a = g.add(p[0], p[1]);
                let s = g.sub(a, p[1]);
                let m = g.mul(s, p[1]);
                let t = g.scale(m, -0.7);
                weigh(g, t)
            });
            check(seed, &[(3, 2), (1, 2), (1, 1)], |g, p| {
                let a = g.add_row(p[0], p[1]);
                let b = g.scale_by(a, p[2]);
                let t = g.transpose(b);
                weigh(g, t)
            });
        }
    }

    #[test]
    fn indexing_ops() {
        for seed in 0..5 {
            check(seed, &[(4, 3), (2, 3)], |g, p| {
                let rows = g.gather_rows(p[0], &[2, 0, 2]);
                let cat = g.concat_rows(&[rows, p[1]]);
                let left = g.slice_cols(cat, 1, 2);
                let right = g.slice_cols(cat, 0, 1);
                let both = g.concat_cols(&[right, left]);
                let picked = g.gather(both, &[(0, 0), (4, 2), (3, 1)]);
                weigh(g, picked)
            });
        }
    }

    #[test]
    fn reductions_and_normalizers() {
        for seed in 0..5 {
            check(seed, &[(3, 4)], |g, p| {
                let s = g.softmax_rows(p[0]);
                weigh(g, s)
            });
            check(seed, &[(3, 4)], |g, p| {
                let s = g.log_softmax_rows(p[0]);
                weigh(g, s)
            });
            check(seed, &[(3, 4)], |g, p| {
                let n = g.l2_normalize_rows(p[0]);
                weigh(g, n)
            });
            check(seed, &[(3, 4)], |g, p| {
                let m = g.mean_rows(p[0]);
                let w = weigh(g, m);
                let total = g.mean(p[0]);
                g.add(w, total)
            });
        }
    }

    #[test]
    fn surrogate_away_from_kinks() {
        // ratios well inside or well outside the clip band
        let logp = Tensor::row(&[0.0, 0.5, -0.6, 0.05]);
        let old = [0.1, 0.0, 0.0, 0.0];
        let adv = [0.7, 1.0, -1.0, -0.4];
        let err = grad_check(
            |g, p| g.clipped_surrogate(p[0], &old, &adv, 0.2, 0.28),
            &[logp],
            1e-6,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut g = Graph::new();
        let logits = g.leaf(Tensor::row(&[0.0, 0.0]));
        let loss = losses::cross_entropy_node(&mut g, logits, &[0]).unwrap();
        let grads = g.backward(loss).unwrap();
        let d = grads.get(logits).unwrap().data();
        assert!((d[0] + 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infonce_gradient() {
        for seed in 0..5 {
            check(seed, &[(4, 3), (4, 3)], |g, p| {
                losses::infonce_node(g, p[0], p[1], 0.5).unwrap()
            });
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(&[1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }
}
