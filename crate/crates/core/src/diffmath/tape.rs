use super::matrix::{softmax_vec, Matrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    ConcatCols(usize, usize),
    Transpose(usize),
    /// Row-wise max-shifted softmax.
    SoftmaxRows(usize),
    SelectRow(usize, usize),
    SelectEntry(usize, usize, usize),
    /// Stack 1-row operands into one matrix, in order.
    StackRows(Vec<usize>),
    /// Broadcast-add a 1xC row vector to every row of an RxC matrix.
    AddRowVec(usize, usize),
    Sum(usize),
    /// ln(max(x, floor)) entrywise; gradient is zero where clamped.
    LogClamped(usize, f64),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Wengert tape: records primitive matrix operations during the forward
/// pass, then replays them in reverse to accumulate gradients. A tape is
/// confined to one thread for its lifetime.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(super::matrix::sigmoid);
        self.push(v, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a.0))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(Error::shape(format!(
                "concat_cols: {} rows vs {} rows",
                ma.rows(),
                mb.rows()
            )));
        }
        let rows = ma.rows();
        let (p, q) = (ma.cols(), mb.cols());
        let mut out = Matrix::zeros(rows, p + q);
        for r in 0..rows {
            for c in 0..p {
                out.set(r, c, ma.get(r, c));
            }
            for c in 0..q {
                out.set(r, p + c, mb.get(r, c));
            }
        }
        Ok(self.push(out, Op::ConcatCols(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.cols() == 0 {
            return Err(Error::domain("softmax over zero columns".to_string()));
        }
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            let s = softmax_vec(m.row(r))?;
            for (c, x) in s.into_iter().enumerate() {
                out.set(r, c, x);
            }
        }
        Ok(self.push(out, Op::SoftmaxRows(a.0)))
    }

    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let m = self.value(a);
        if r >= m.rows() {
            return Err(Error::shape(format!(
                "select_row: row {} of {} rows",
                r,
                m.rows()
            )));
        }
        let v = Matrix::row_vec(m.row(r));
        Ok(self.push(v, Op::SelectRow(a.0, r)))
    }

    pub fn select_entry(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let m = self.value(a);
        if r >= m.rows() || c >= m.cols() {
            return Err(Error::shape(format!(
                "select_entry: ({}, {}) of {}x{}",
                r,
                c,
                m.rows(),
                m.cols()
            )));
        }
        let v = Matrix::filled(1, 1, m.get(r, c));
        Ok(self.push(v, Op::SelectEntry(a.0, r, c)))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::domain("stack_rows of nothing".to_string()));
        }
        let cols = self.value(rows[0]).cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let m = self.value(r);
            if m.rows() != 1 || m.cols() != cols {
                return Err(Error::shape(format!(
                    "stack_rows: expected 1x{}, got {}x{}",
                    cols,
                    m.rows(),
                    m.cols()
                )));
            }
            data.extend_from_slice(m.row(0));
        }
        let v = Matrix::from_vec(rows.len(), cols, data)?;
        Ok(self.push(v, Op::StackRows(rows.iter().map(|r| r.0).collect())))
    }

    pub fn add_row_vec(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != m.cols() {
            return Err(Error::shape(format!(
                "add_row_vec: matrix {}x{} with bias {}x{}",
                m.rows(),
                m.cols(),
                b.rows(),
                b.cols()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + b.get(0, c);
                out.set(r, c, v);
            }
        }
        Ok(self.push(out, Op::AddRowVec(a.0, bias.0)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a.0))
    }

    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::LogClamped(a.0, floor))
    }

    /// Reverse sweep from a scalar loss. Returns one gradient matrix per
    /// recorded value, indexed by `Var`; leaves never reached by the loss
    /// get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lm = self.value(loss);
        if lm.shape() != (1, 1) {
            return Err(Error::domain(format!(
                "backward expects a scalar loss, got {}x{}",
                lm.rows(),
                lm.cols()
            )));
        }
        let mut grads: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].set(0, 0, 1.0);

        for i in (0..=loss.0).rev() {
            let g = grads[i].clone();
            if g.data().iter().all(|&x| x == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ma, mb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = g.matmul(&mb.transpose())?;
                    let gb = ma.transpose().matmul(&g)?;
                    grads[*a].add_assign(&ga);
                    grads[*b].add_assign(&gb);
                }
                Op::Add(a, b) => {
                    grads[*a].add_assign(&g);
                    grads[*b].add_assign(&g);
                }
                Op::Sub(a, b) => {
                    grads[*a].add_assign(&g);
                    let neg = g.scale(-1.0);
                    grads[*b].add_assign(&neg);
                }
                Op::Mul(a, b) => {
                    let (ma, mb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = g.mul(mb)?;
                    let gb = g.mul(ma)?;
                    grads[*a].add_assign(&ga);
                    grads[*b].add_assign(&gb);
                }
                Op::Scale(a, c) => {
                    let ga = g.scale(*c);
                    grads[*a].add_assign(&ga);
                }
                Op::Sigmoid(a) => {
                    let s = &self.nodes[i].value;
                    let ga = g.zip(s, |gi, si| gi * si * (1.0 - si))?;
                    grads[*a].add_assign(&ga);
                }
                Op::Tanh(a) => {
                    let t = &self.nodes[i].value;
                    let ga = g.zip(t, |gi, ti| gi * (1.0 - ti * ti))?;
                    grads[*a].add_assign(&ga);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let ga = g.zip(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 })?;
                    grads[*a].add_assign(&ga);
                }
                Op::ConcatCols(a, b) => {
                    let p = self.nodes[*a].value.cols();
                    let ga = &mut grads[*a];
                    for r in 0..g.rows() {
                        for c in 0..p {
                            let v = ga.get(r, c) + g.get(r, c);
                            ga.set(r, c, v);
                        }
                    }
                    let q = self.nodes[*b].value.cols();
                    let gb = &mut grads[*b];
                    for r in 0..g.rows() {
                        for c in 0..q {
                            let v = gb.get(r, c) + g.get(r, p + c);
                            gb.set(r, c, v);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let ga = g.transpose();
                    grads[*a].add_assign(&ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    grads[*a].add_assign(&ga);
                }
                Op::SelectRow(a, r) => {
                    let ga = &mut grads[*a];
                    for c in 0..g.cols() {
                        let v = ga.get(*r, c) + g.get(0, c);
                        ga.set(*r, c, v);
                    }
                }
                Op::SelectEntry(a, r, c) => {
                    let ga = &mut grads[*a];
                    let v = ga.get(*r, *c) + g.get(0, 0);
                    ga.set(*r, *c, v);
                }
                Op::StackRows(parts) => {
                    for (r, &a) in parts.iter().enumerate() {
                        let ga = &mut grads[a];
                        for c in 0..g.cols() {
                            let v = ga.get(0, c) + g.get(r, c);
                            ga.set(0, c, v);
                        }
                    }
                }
                Op::AddRowVec(a, b) => {
                    grads[*a].add_assign(&g);
                    let gb = &mut grads[*b];
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let v = gb.get(0, c) + g.get(r, c);
                            gb.set(0, c, v);
                        }
                    }
                }
                Op::Sum(a) => {
                    let gs = g.get(0, 0);
                    let shape = self.nodes[*a].value.shape();
                    let ones = Matrix::filled(shape.0, shape.1, gs);
                    grads[*a].add_assign(&ones);
                }
                Op::LogClamped(a, floor) => {
                    let x = &self.nodes[*a].value;
                    let ga = g.zip(x, |gi, xi| if xi > *floor { gi / xi } else { 0.0 })?;
                    grads[*a].add_assign(&ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Matrix {
        &self.grads[v.0]
    }
}
