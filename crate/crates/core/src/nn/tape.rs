use std::cell::RefCell;

use super::layers::Activation;
use super::{NnError, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    DivCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Act(Var, Activation),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Cos(Var),
    Sin(Var),
    SliceCols(Var, usize),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    /// Output row r depends on input row r through `jac[r]`, an
    /// out_cols × in_cols row-major block.
    RowJacobian(Var, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward pass so that [`Tape::backward`] can replay it in
/// reverse. Methods take `&self` so that recorded values can be combined
/// freely while building an expression.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch { op, left: a.shape.clone(), right: b.shape.clone() }
}

fn as_matrix(t: Tensor) -> Tensor {
    if t.shape.len() == 2 {
        Tensor { grad: None, ..t }
    } else {
        let (r, c) = (t.rows(), t.cols());
        Tensor { shape: vec![r, c], values: t.values, grad: None }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Constant input; gradients are not propagated past it.
    pub fn input(&self, t: Tensor) -> Var {
        self.push(as_matrix(t), Op::Leaf)
    }

    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        self.push(as_matrix(store.param(id).tensor.clone()), Op::Param(id))
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let t = &nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// First entry of a value; the loss for scalar nodes.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.values[0]
    }

    fn unary<F: Fn(f64) -> f64>(&self, a: Var, f: F, op: Op) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            Tensor { shape: t.shape.clone(), values: t.values.iter().map(|&x| f(x)).collect(), grad: None }
        };
        self.push(value, op)
    }

    fn elementwise<F: Fn(f64, f64) -> f64>(&self, a: Var, b: Var, name: &'static str, f: F, op: Op) -> Result<Var, NnError> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape != tb.shape {
                return Err(mismatch(name, ta, tb));
            }
            let values = ta.values.iter().zip(&tb.values).map(|(&x, &y)| f(x, y)).collect();
            Tensor { shape: ta.shape.clone(), values, grad: None }
        };
        Ok(self.push(value, op))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
            if tb.rows() != k {
                return Err(mismatch("matmul", ta, tb));
            }
            let mut out = vec![0.0; n * m];
            for i in 0..n {
                let orow = &mut out[i * m..(i + 1) * m];
                for p in 0..k {
                    let x = ta.values[i * k + p];
                    if x == 0.0 {
                        continue;
                    }
                    let brow = &tb.values[p * m..(p + 1) * m];
                    for (o, &w) in orow.iter_mut().zip(brow) {
                        *o += x * w;
                    }
                }
            }
            Tensor { shape: vec![n, m], values: out, grad: None }
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var, NnError> {
        self.elementwise(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    fn broadcast<F: Fn(f64, f64) -> f64>(&self, a: Var, b: Var, by_row: bool, name: &'static str, f: F, op: Op) -> Result<Var, NnError> {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (n, m) = (ta.rows(), ta.cols());
            let ok = if by_row { tb.rows() == 1 && tb.cols() == m } else { tb.rows() == n && tb.cols() == 1 };
            if !ok {
                return Err(mismatch(name, ta, tb));
            }
            let mut values = Vec::with_capacity(n * m);
            for i in 0..n {
                for j in 0..m {
                    let y = if by_row { tb.values[j] } else { tb.values[i] };
                    values.push(f(ta.values[i * m + j], y));
                }
            }
            Tensor { shape: vec![n, m], values, grad: None }
        };
        Ok(self.push(value, op))
    }

    /// a[i, j] + row[0, j]
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var, NnError> {
        self.broadcast(a, row, true, "add_row", |x, y| x + y, Op::AddRow(a, row))
    }

    /// a[i, j] · row[0, j]
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var, NnError> {
        self.broadcast(a, row, true, "mul_row", |x, y| x * y, Op::MulRow(a, row))
    }

    /// a[i, j] · col[i, 0]
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var, NnError> {
        self.broadcast(a, col, false, "mul_col", |x, y| x * y, Op::MulCol(a, col))
    }

    /// a[i, j] / col[i, 0]
    pub fn div_col(&self, a: Var, col: Var) -> Result<Var, NnError> {
        self.broadcast(a, col, false, "div_col", |x, y| x / y, Op::DivCol(a, col))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn activation(&self, a: Var, act: Activation) -> Var {
        self.unary(a, |x| act.apply(x), Op::Act(a, act))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn cos(&self, a: Var) -> Var {
        self.unary(a, f64::cos, Op::Cos(a))
    }

    pub fn sin(&self, a: Var) -> Var {
        self.unary(a, f64::sin, Op::Sin(a))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            let (n, m) = (t.rows(), t.cols());
            if start >= end || end > m {
                return Err(NnError::ShapeMismatch { op: "slice_cols", left: t.shape.clone(), right: vec![start, end] });
            }
            let mut values = Vec::with_capacity(n * (end - start));
            for i in 0..n {
                values.extend_from_slice(&t.values[i * m + start..i * m + end]);
            }
            Tensor { shape: vec![n, end - start], values, grad: None }
        };
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var, NnError> {
        let value = {
            let nodes = self.nodes.borrow();
            let first = &nodes[parts[0].0].value;
            let n = first.rows();
            let mut total = 0;
            for p in parts {
                let t = &nodes[p.0].value;
                if t.rows() != n {
                    return Err(mismatch("concat_cols", first, t));
                }
                total += t.cols();
            }
            let mut values = Vec::with_capacity(n * total);
            for i in 0..n {
                for p in parts {
                    values.extend_from_slice(nodes[p.0].value.row(i));
                }
            }
            Tensor { shape: vec![n, total], values, grad: None }
        };
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.nodes.borrow()[a.0].value.values.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let s = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.0].value.values;
            v.iter().sum::<f64>() / v.len() as f64
        };
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Row sums as an [rows, 1] column.
    pub fn sum_cols(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            let m = t.cols();
            let values = t.values.chunks(m).map(|r| r.iter().sum()).collect();
            Tensor { shape: vec![t.rows(), 1], values, grad: None }
        };
        self.push(value, Op::SumCols(a))
    }

    /// Records a row-wise map computed outside the tape: `value` row r is a
    /// function of `input` row r with Jacobian `jac[r]` (out × in, row-major).
    pub fn row_jacobian(&self, input: Var, value: Tensor, jac: Vec<f64>) -> Result<Var, NnError> {
        let value = as_matrix(value);
        {
            let nodes = self.nodes.borrow();
            let t = &nodes[input.0].value;
            if value.rows() != t.rows() || jac.len() != t.rows() * value.cols() * t.cols() {
                return Err(mismatch("row_jacobian", t, &value));
            }
        }
        Ok(self.push(value, Op::RowJacobian(input, jac)))
    }

    /// Reverse pass from a scalar `loss`, accumulating ∂loss/∂p into the
    /// gradient buffers of `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<(), NnError> {
        self.backward_impl(loss, store, false)
    }

    /// Like [`Tape::backward`], but fails if a trainable parameter of
    /// `store` does not reach the loss.
    pub fn backward_strict(&self, loss: Var, store: &mut ParamStore) -> Result<(), NnError> {
        self.backward_impl(loss, store, true)
    }

    fn backward_impl(&self, loss: Var, store: &mut ParamStore, strict: bool) -> Result<(), NnError> {
        let nodes = self.nodes.borrow();
        let lt = &nodes[loss.0].value;
        if lt.values.len() != 1 {
            return Err(NnError::NotScalar(lt.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut reached = vec![false; store.len()];

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let out = &node.value;
            let (n, m) = (out.rows(), out.cols());
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    store.accumulate_grad(*id, &g);
                    reached[id.0] = true;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let k = ta.cols();
                    {
                        let ga = acc(&mut grads, *a, n * k);
                        for i in 0..n {
                            let grow = &g[i * m..(i + 1) * m];
                            for p in 0..k {
                                let brow = &tb.values[p * m..(p + 1) * m];
                                ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, k * m);
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let x = ta.values[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * gv;
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    for (x, gv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += gv;
                    }
                    for (x, gv) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                        *x += sign * gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&val(*a).values, &val(*b).values);
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(tb.iter()) {
                        *x += gv * y;
                    }
                    for ((x, gv), y) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(ta.iter()) {
                        *x += gv * y;
                    }
                }
                Op::Div(a, b) => {
                    let tb = &val(*b).values;
                    let ga: Vec<f64> = g.iter().zip(tb).map(|(gv, y)| gv / y).collect();
                    for (x, d) in acc(&mut grads, *a, g.len()).iter_mut().zip(&ga) {
                        *x += d;
                    }
                    for ((x, d), o) in acc(&mut grads, *b, g.len()).iter_mut().zip(&ga).zip(&out.values) {
                        *x -= d * o;
                    }
                }
                Op::AddRow(a, row) => {
                    for (x, gv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += gv;
                    }
                    let gr = acc(&mut grads, *row, m);
                    for i in 0..n {
                        for j in 0..m {
                            gr[j] += g[i * m + j];
                        }
                    }
                }
                Op::MulRow(a, row) => {
                    let ta = &val(*a).values;
                    let tr = &val(*row).values;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[i * m + j] * tr[j];
                        }
                    }
                    let gr = acc(&mut grads, *row, m);
                    for i in 0..n {
                        for j in 0..m {
                            gr[j] += g[i * m + j] * ta[i * m + j];
                        }
                    }
                }
                Op::MulCol(a, col) => {
                    let ta = &val(*a).values;
                    let tc = &val(*col).values;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[i * m + j] * tc[i];
                        }
                    }
                    let gc = acc(&mut grads, *col, n);
                    for i in 0..n {
                        for j in 0..m {
                            gc[i] += g[i * m + j] * ta[i * m + j];
                        }
                    }
                }
                Op::DivCol(a, col) => {
                    let tc = &val(*col).values;
                    let ga = acc(&mut grads, *a, g.len());
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += g[i * m + j] / tc[i];
                        }
                    }
                    let gc = acc(&mut grads, *col, n);
                    for i in 0..n {
                        for j in 0..m {
                            gc[i] -= g[i * m + j] * out.values[i * m + j] / tc[i];
                        }
                    }
                }
                Op::Scale(a, c) => {
                    for (x, gv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += c * gv;
                    }
                }
                Op::AddScalar(a) => {
                    for (x, gv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *x += gv;
                    }
                }
                Op::Act(a, act) => {
                    let ta = &val(*a).values;
                    let d: Vec<f64> = ta.iter().zip(&out.values).map(|(&x, &y)| act.derivative(x, y)).collect();
                    for ((x, gv), dv) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&d) {
                        *x += gv * dv;
                    }
                }
                Op::Exp(a) => {
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&out.values) {
                        *x += gv * y;
                    }
                }
                Op::Log(a) => {
                    let ta = &val(*a).values;
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(ta.iter()) {
                        *x += gv / y;
                    }
                }
                Op::Sqrt(a) => {
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&out.values) {
                        *x += gv * 0.5 / y;
                    }
                }
                Op::Square(a) => {
                    let ta = &val(*a).values;
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(ta.iter()) {
                        *x += gv * 2.0 * y;
                    }
                }
                Op::Cos(a) => {
                    let ta = &val(*a).values;
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(ta.iter()) {
                        *x -= gv * y.sin();
                    }
                }
                Op::Sin(a) => {
                    let ta = &val(*a).values;
                    for ((x, gv), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(ta.iter()) {
                        *x += gv * y.cos();
                    }
                }
                Op::SliceCols(a, start) => {
                    let ma = val(*a).cols();
                    let ga = acc(&mut grads, *a, n * ma);
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * ma + start + j] += g[i * m + j];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let mp = val(*p).cols();
                        let gp = acc(&mut grads, *p, n * mp);
                        for i in 0..n {
                            for j in 0..mp {
                                gp[i * mp + j] += g[i * m + offset + j];
                            }
                        }
                        offset += mp;
                    }
                }
                Op::Sum(a) => {
                    for x in acc(&mut grads, *a, val(*a).len()).iter_mut() {
                        *x += g[0];
                    }
                }
                Op::Mean(a) => {
                    let len = val(*a).len();
                    for x in acc(&mut grads, *a, len).iter_mut() {
                        *x += g[0] / len as f64;
                    }
                }
                Op::SumCols(a) => {
                    let ma = val(*a).cols();
                    let ga = acc(&mut grads, *a, n * ma);
                    for i in 0..n {
                        for j in 0..ma {
                            ga[i * ma + j] += g[i];
                        }
                    }
                }
                Op::RowJacobian(a, jac) => {
                    let k = val(*a).cols();
                    let ga = acc(&mut grads, *a, n * k);
                    for i in 0..n {
                        let block = &jac[i * m * k..(i + 1) * m * k];
                        for o in 0..m {
                            let gv = g[i * m + o];
                            if gv == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i * k + p] += gv * block[o * k + p];
                            }
                        }
                    }
                }
            }
        }

        if strict {
            for (i, p) in store.iter().enumerate() {
                if p.trainable && !reached[i] {
                    return Err(NnError::DisconnectedGraph(p.name.clone()));
                }
            }
        }
        Ok(())
    }
}
