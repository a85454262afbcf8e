use crate::{ParamGrads, ParamId, ParamStore, Result, Tensor, TensorError};

/// Handle to a node of one [`Graph`]. Only meaningful for the graph that made it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Embedding(Var, Vec<usize>),
    MeanRows(Var),
    Tanh(Var),
    L2NormSq(Var),
    ConcatRows(Vec<Var>),
    Dot(Var, Var),
    Row(Var, usize),
    Pick(Var, usize),
    Sum(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Tape of one forward pass. Nodes are appended in creation order, so the
/// tape is already topologically sorted.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    backward_done: bool,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Untracked leaf: receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked leaf with no backing parameter. Its gradient is readable via [`Graph::grad`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Tracked leaf holding a copy of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let var = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.push((id, var));
        var
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a tracked node after [`Graph::backward`]. `None` for
    /// untracked nodes and for tracked nodes the loss does not depend on.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        node.grad.as_deref()
    }

    /// Gradients of every parameter leaf, summed when a parameter entered
    /// the graph more than once.
    pub fn param_grads(&self) -> ParamGrads {
        let mut out = ParamGrads::new();
        for &(id, var) in &self.params {
            if let Some(g) = &self.nodes[var.0].grad {
                match out.get_mut(&id) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                    None => {
                        out.insert(id, g.clone());
                    }
                }
            }
        }
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || tb.rank() != 2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k) = ta.as_matrix();
        let (k2, n) = tb.as_matrix();
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let shape = if ta.rank() == 1 { vec![n] } else { vec![m, n] };
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`, with `a` of shape [m, k] (or [k]) and `b` of shape [n, k].
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || tb.rank() != 2 {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let (m, k) = ta.as_matrix();
        let (n, k2) = tb.as_matrix();
        if k != k2 {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &ad[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bd[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let shape = if ta.rank() == 1 { vec![n] } else { vec![m, n] };
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMulT(a, b), rg))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `b` ([n]) to every row of `a` ([m, n] or [n]).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || tb.rank() != 1 || ta.cols() != tb.numel() {
            return Err(mismatch("add_row", ta, tb));
        }
        let n = tb.numel();
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bd[i % n])
            .collect();
        let shape = ta.shape().to_vec();
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::AddRow(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * s).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.tracked(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() == 0 {
            return Err(TensorError::BadShape {
                op: "softmax",
                shape: vec![],
            });
        }
        let (m, n) = ta.as_matrix();
        let mut data = ta.data().to_vec();
        for i in 0..m {
            let row = &mut data[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let shape = ta.shape().to_vec();
        let rg = self.tracked(&[a]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Softmax(a), rg))
    }

    /// Log-softmax over the last dimension.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() == 0 {
            return Err(TensorError::BadShape {
                op: "log_softmax",
                shape: vec![],
            });
        }
        let (m, n) = ta.as_matrix();
        let mut data = ta.data().to_vec();
        for i in 0..m {
            let row = &mut data[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let shape = ta.shape().to_vec();
        let rg = self.tracked(&[a]);
        Ok(self.push(Tensor::new(shape, data)?, Op::LogSoftmax(a), rg))
    }

    /// Gathers rows of `table` ([V, d]) into a [len, d] matrix.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(TensorError::BadShape {
                op: "embedding",
                shape: tt.shape().to_vec(),
            });
        }
        let (rows, d) = tt.as_matrix();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &ix in indices {
            if ix >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: ix,
                    len: rows,
                });
            }
            data.extend_from_slice(tt.row(ix));
        }
        let value = Tensor::new(vec![indices.len(), d], data)?;
        let rg = self.tracked(&[table]);
        Ok(self.push(value, Op::Embedding(table, indices.to_vec()), rg))
    }

    /// Column-wise mean over the rows of a matrix, producing a vector.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.as_matrix();
        if ta.rank() == 0 || m == 0 {
            return Err(TensorError::BadShape {
                op: "mean_rows",
                shape: ta.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, x) in out.iter_mut().zip(ta.row(i)) {
                *o += x;
            }
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.tracked(&[a]);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.tracked(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Sum of squared entries, as a scalar.
    pub fn l2_norm_sq(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum();
        let rg = self.tracked(&[a]);
        self.push(Tensor::scalar(s), Op::L2NormSq(a), rg)
    }

    /// Stacks vectors ([n]) and matrices ([m, n]) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::BadShape {
                op: "concat_rows",
                shape: vec![],
            });
        };
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() == 0 || t.cols() != n {
                return Err(mismatch("concat_rows", self.value(first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = self.tracked(parts);
        Ok(self.push(
            Tensor::new(vec![rows, n], data)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(mismatch("dot", ta, tb));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.tracked(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), rg))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(TensorError::BadShape {
                op: "row",
                shape: ta.shape().to_vec(),
            });
        }
        if i >= ta.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index: i,
                len: ta.rows(),
            });
        }
        let value = Tensor::vector(ta.row(i).to_vec());
        let rg = self.tracked(&[a]);
        Ok(self.push(value, Op::Row(a, i), rg))
    }

    /// Element `i` of the flattened tensor, as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let ta = self.value(a);
        if i >= ta.numel() {
            return Err(TensorError::IndexOutOfRange {
                op: "pick",
                index: i,
                len: ta.numel(),
            });
        }
        let value = Tensor::scalar(ta.data()[i]);
        let rg = self.tracked(&[a]);
        Ok(self.push(value, Op::Pick(a, i), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.tracked(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let value = Tensor::new(shape.to_vec(), ta.data().to_vec())?;
        let rg = self.tracked(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Sum of scalars; an empty list gives a constant zero.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut iter = terms.iter();
        let Some(&first) = iter.next() else {
            return Ok(self.constant(Tensor::scalar(0.0)));
        };
        let mut acc = first;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Reverse pass from a scalar loss. May run at most once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(grad) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
            self.propagate(idx, &op, &grad);
            self.nodes[idx].op = op;
            self.nodes[idx].grad = Some(grad);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, op: &Op, grad: &[f64]) {
        // Parent values are copied out before borrowing a parent's grad buffer.
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.as_matrix();
                let n = self.nodes[b.0].value.cols();
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, m * k);
                    for i in 0..m {
                        let grow = &grad[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let gb = accumulate(&mut self.nodes[b.0].grad, k * n);
                    for i in 0..m {
                        let grow = &grad[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = ad[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (g, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *g += x * y;
                            }
                        }
                    }
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.nodes[a.0].value.as_matrix();
                let n = self.nodes[b.0].value.rows();
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, m * k);
                    for i in 0..m {
                        for j in 0..n {
                            let g = grad[i * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            for (o, y) in ga[i * k..(i + 1) * k].iter_mut().zip(&bd[j * k..(j + 1) * k]) {
                                *o += g * y;
                            }
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let gb = accumulate(&mut self.nodes[b.0].grad, n * k);
                    for i in 0..m {
                        for j in 0..n {
                            let g = grad[i * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            for (o, x) in gb[j * k..(j + 1) * k].iter_mut().zip(&ad[i * k..(i + 1) * k]) {
                                *o += g * x;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.add_grad(*a, grad, 1.0);
                self.add_grad(*b, grad, sign);
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, grad.len());
                    for ((o, g), y) in ga.iter_mut().zip(grad).zip(&bd) {
                        *o += g * y;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let gb = accumulate(&mut self.nodes[b.0].grad, grad.len());
                    for ((o, g), x) in gb.iter_mut().zip(grad).zip(&ad) {
                        *o += g * x;
                    }
                }
            }
            Op::AddRow(a, b) => {
                self.add_grad(*a, grad, 1.0);
                if self.nodes[b.0].requires_grad {
                    let n = self.nodes[b.0].value.numel();
                    let gb = accumulate(&mut self.nodes[b.0].grad, n);
                    for (i, g) in grad.iter().enumerate() {
                        gb[i % n] += g;
                    }
                }
            }
            Op::Scale(a, s) => self.add_grad(*a, grad, *s),
            Op::Softmax(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = self.nodes[idx].value.data().to_vec();
                    let n = self.nodes[idx].value.cols();
                    let ga = accumulate(&mut self.nodes[a.0].grad, y.len());
                    for (yr, (gr, or)) in y
                        .chunks(n)
                        .zip(grad.chunks(n).zip(ga.chunks_mut(n)))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for ((o, y), g) in or.iter_mut().zip(yr).zip(gr) {
                            *o += y * (g - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = self.nodes[idx].value.data().to_vec();
                    let n = self.nodes[idx].value.cols();
                    let ga = accumulate(&mut self.nodes[a.0].grad, y.len());
                    for (yr, (gr, or)) in y
                        .chunks(n)
                        .zip(grad.chunks(n).zip(ga.chunks_mut(n)))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((o, y), g) in or.iter_mut().zip(yr).zip(gr) {
                            *o += g - y.exp() * total;
                        }
                    }
                }
            }
            Op::Embedding(table, indices) => {
                if self.nodes[table.0].requires_grad {
                    let (rows, d) = self.nodes[table.0].value.as_matrix();
                    let gt = accumulate(&mut self.nodes[table.0].grad, rows * d);
                    for (r, &ix) in indices.iter().enumerate() {
                        for (o, g) in gt[ix * d..(ix + 1) * d].iter_mut().zip(&grad[r * d..(r + 1) * d]) {
                            *o += g;
                        }
                    }
                }
            }
            Op::MeanRows(a) => {
                if self.nodes[a.0].requires_grad {
                    let (m, n) = self.nodes[a.0].value.as_matrix();
                    let inv = 1.0 / m as f64;
                    let ga = accumulate(&mut self.nodes[a.0].grad, m * n);
                    for row in ga.chunks_mut(n) {
                        for (o, g) in row.iter_mut().zip(grad) {
                            *o += g * inv;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = self.nodes[idx].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, y.len());
                    for ((o, y), g) in ga.iter_mut().zip(&y).zip(grad) {
                        *o += g * (1.0 - y * y);
                    }
                }
            }
            Op::L2NormSq(a) => {
                if self.nodes[a.0].requires_grad {
                    let x = self.nodes[a.0].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, x.len());
                    for (o, x) in ga.iter_mut().zip(&x) {
                        *o += 2.0 * x * grad[0];
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.numel();
                    self.add_grad(*p, &grad[offset..offset + len], 1.0);
                    offset += len;
                }
            }
            Op::Dot(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].value.data().to_vec();
                    let ga = accumulate(&mut self.nodes[a.0].grad, bd.len());
                    for (o, y) in ga.iter_mut().zip(&bd) {
                        *o += grad[0] * y;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].value.data().to_vec();
                    let gb = accumulate(&mut self.nodes[b.0].grad, ad.len());
                    for (o, x) in gb.iter_mut().zip(&ad) {
                        *o += grad[0] * x;
                    }
                }
            }
            Op::Row(a, i) => {
                if self.nodes[a.0].requires_grad {
                    let (m, n) = self.nodes[a.0].value.as_matrix();
                    let ga = accumulate(&mut self.nodes[a.0].grad, m * n);
                    for (o, g) in ga[i * n..(i + 1) * n].iter_mut().zip(grad) {
                        *o += g;
                    }
                }
            }
            Op::Pick(a, i) => {
                if self.nodes[a.0].requires_grad {
                    let len = self.nodes[a.0].value.numel();
                    accumulate(&mut self.nodes[a.0].grad, len)[*i] += grad[0];
                }
            }
            Op::Sum(a) => {
                if self.nodes[a.0].requires_grad {
                    let len = self.nodes[a.0].value.numel();
                    let ga = accumulate(&mut self.nodes[a.0].grad, len);
                    ga.iter_mut().for_each(|o| *o += grad[0]);
                }
            }
            Op::Reshape(a) => self.add_grad(*a, grad, 1.0),
        }
    }

    fn add_grad(&mut self, v: Var, grad: &[f64], factor: f64) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let g = accumulate(&mut node.grad, grad.len());
        for (o, x) in g.iter_mut().zip(grad) {
            *o += factor * x;
        }
    }
}
