use std::sync::atomic::{AtomicU64, Ordering};

use super::{check_finite, matmul_at_kernel, matmul_bt_kernel, matmul_kernel, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Ew(EwOp, usize, usize),
    Scale(usize, f64),
    Shift(usize),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Hinge(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Records operations in evaluation order so gradients can be replayed in
/// reverse. A node is tracked when it is a trainable leaf or depends on one.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf: receives a gradient from [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        v.tape == self.id && self.nodes[v.index].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, tracked });
        Var { tape: self.id, index }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage("variable is not recorded on this tape".into()));
        }
        Ok(&self.nodes[v.index])
    }

    fn record(&mut self, op_name: &str, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[usize]) -> Result<Var> {
        check_finite(op_name, &data)?;
        let tracked = inputs.iter().any(|&i| self.nodes[i].tracked);
        Ok(self.push(Tensor::from_parts(shape, data), op, tracked))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        if k != k2 {
            return Err(Error::dim("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let data = matmul_kernel(ta.data(), tb.data(), m, k, n);
        self.record(
            "matmul",
            vec![m, n],
            data,
            Op::MatMul(a.index, b.index),
            &[a.index, b.index],
        )
    }

    /// Elementwise `a op b`; `b` may be a one-element tensor broadcast over `a`.
    pub fn ew(&mut self, op: EwOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        let f = match op {
            EwOp::Add => |x: f64, y: f64| x + y,
            EwOp::Sub => |x: f64, y: f64| x - y,
            EwOp::Mul => |x: f64, y: f64| x * y,
        };
        let data: Vec<f64> = if ta.shape() == tb.shape() {
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect()
        } else if tb.is_scalar() {
            let y = tb.data()[0];
            ta.data().iter().map(|&x| f(x, y)).collect()
        } else {
            return Err(Error::dim(
                "elementwise",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        };
        let shape = ta.shape().to_vec();
        self.record(
            "elementwise",
            shape,
            data,
            Op::Ew(op, a.index, b.index),
            &[a.index, b.index],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ew(EwOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ew(EwOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ew(EwOp::Mul, a, b)
    }

    /// `k · x` for a fixed constant `k`.
    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|v| v * k).collect();
        let shape = t.shape().to_vec();
        self.record("scale", shape, data, Op::Scale(x.index, k), &[x.index])
    }

    /// `x + k` for a fixed constant `k`.
    pub fn shift(&mut self, x: Var, k: f64) -> Result<Var> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|v| v + k).collect();
        let shape = t.shape().to_vec();
        self.record("shift", shape, data, Op::Shift(x.index), &[x.index])
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        match kind {
            Activation::LeakyRelu(slope) => self.leaky_relu(x, slope),
            Activation::Tanh => self.tanh(x),
        }
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::Domain(format!("leaky_relu slope {slope} outside (0, 1)")));
        }
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let shape = t.shape().to_vec();
        self.record("leaky_relu", shape, data, Op::LeakyRelu(x.index, slope), &[x.index])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|v| v.tanh()).collect();
        let shape = t.shape().to_vec();
        self.record("tanh", shape, data, Op::Tanh(x.index), &[x.index])
    }

    /// `max(0, x)` elementwise. The subgradient at 0 is 0.
    pub fn hinge(&mut self, x: Var) -> Result<Var> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape().to_vec();
        self.record("hinge", shape, data, Op::Hinge(x.index), &[x.index])
    }

    /// `|x|` elementwise, subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|v| v.abs()).collect();
        let shape = t.shape().to_vec();
        self.record("abs", shape, data, Op::Abs(x.index), &[x.index])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = &self.node(x)?.value;
        let s = t.data().iter().sum();
        self.record("sum", vec![1], vec![s], Op::Sum(x.index), &[x.index])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = &self.node(x)?.value;
        if t.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let m = t.mean();
        self.record("mean", vec![1], vec![m], Op::Mean(x.index), &[x.index])
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to every
    /// tracked node. Tracked leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss)?;
        if !root.value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        if root.tracked {
            grads[loss.index] = Some(vec![1.0]);
        }

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let (m, k) = ta.dims2()?;
                    let n = tb.shape()[1];
                    if self.nodes[a].tracked {
                        let ga = matmul_bt_kernel(&g, tb.data(), m, k, n);
                        accumulate(&mut grads, a, ga);
                    }
                    if self.nodes[b].tracked {
                        let gb = matmul_at_kernel(ta.data(), &g, m, k, n);
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Ew(op, a, b) => {
                    let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let broadcast = ta.shape() != tb.shape();
                    let bval = |j: usize| if broadcast { tb.data()[0] } else { tb.data()[j] };
                    if self.nodes[a].tracked {
                        let ga = match op {
                            EwOp::Add | EwOp::Sub => g.clone(),
                            EwOp::Mul => g.iter().enumerate().map(|(j, gv)| gv * bval(j)).collect(),
                        };
                        accumulate(&mut grads, a, ga);
                    }
                    if self.nodes[b].tracked {
                        let gb: Vec<f64> = match op {
                            EwOp::Add => g.clone(),
                            EwOp::Sub => g.iter().map(|v| -v).collect(),
                            EwOp::Mul => g.iter().zip(ta.data()).map(|(gv, av)| gv * av).collect(),
                        };
                        let gb = if broadcast { vec![gb.iter().sum()] } else { gb };
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::Scale(x, k) => {
                    if self.nodes[x].tracked {
                        accumulate(&mut grads, x, g.iter().map(|v| v * k).collect());
                    }
                }
                Op::Shift(x) => {
                    if self.nodes[x].tracked {
                        accumulate(&mut grads, x, g);
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    if self.nodes[x].tracked {
                        let xs = self.nodes[x].value.data();
                        let gx = g
                            .iter()
                            .zip(xs)
                            .map(|(gv, &xv)| if xv > 0.0 { *gv } else { slope * gv })
                            .collect();
                        accumulate(&mut grads, x, gx);
                    }
                }
                Op::Tanh(x) => {
                    if self.nodes[x].tracked {
                        let ys = node.value.data();
                        let gx = g.iter().zip(ys).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                        accumulate(&mut grads, x, gx);
                    }
                }
                Op::Hinge(x) => {
                    if self.nodes[x].tracked {
                        let xs = self.nodes[x].value.data();
                        let gx = g
                            .iter()
                            .zip(xs)
                            .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, x, gx);
                    }
                }
                Op::Abs(x) => {
                    if self.nodes[x].tracked {
                        let xs = self.nodes[x].value.data();
                        let gx = g
                            .iter()
                            .zip(xs)
                            .map(|(gv, &xv)| {
                                if xv > 0.0 {
                                    *gv
                                } else if xv < 0.0 {
                                    -gv
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        accumulate(&mut grads, x, gx);
                    }
                }
                Op::Sum(x) => {
                    if self.nodes[x].tracked {
                        let n = self.nodes[x].value.len();
                        accumulate(&mut grads, x, vec![g[0]; n]);
                    }
                }
                Op::Mean(x) => {
                    if self.nodes[x].tracked {
                        let n = self.nodes[x].value.len();
                        accumulate(&mut grads, x, vec![g[0] / n as f64; n]);
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let leaf = matches!(node.op, Op::Leaf);
            let g = match grads.get_mut(i).and_then(Option::take) {
                Some(g) if leaf => Some(g),
                None if leaf && node.tracked => Some(vec![0.0; node.value.len()]),
                _ => None,
            };
            let g = match g {
                Some(g) => {
                    check_finite("backward", &g)?;
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                None => None,
            };
            out.push(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads: out,
        })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], i: usize, g: Vec<f64>) {
    match &mut grads[i] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of one loss with respect to the leaves of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for constants and interior nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = tape.matmul(i2, a).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
        let e = tape.constant(t(&[2, 1], &[0.0, 1.0]));
        let d = tape.matmul(a, e).unwrap();
        assert_eq!(tape.value(d).shape(), &[2, 1]);
        assert_eq!(tape.value(d).data(), &[2.0, 4.0]);
        let bad = tape.constant(t(&[3, 1], &[0.0; 3]));
        assert!(matches!(tape.matmul(a, bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2], &[3.0, 4.0]));
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
        let z = tape.sub(a, a).unwrap();
        assert_eq!(tape.value(z).data(), &[0.0, 0.0]);
        let k = tape.constant(t(&[1], &[10.0]));
        let p = tape.mul(a, k).unwrap();
        assert_eq!(tape.value(p).data(), &[10.0, 20.0]);
        let c = tape.constant(t(&[3], &[0.0; 3]));
        assert!(tape.add(a, c).is_err());
        // only the right operand broadcasts
        assert!(tape.add(k, a).is_err());
    }

    #[test]
    fn activation_and_hinge_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 2.0]));
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y).data(), &[-0.2, 2.0]);
        let zero = tape.constant(t(&[1], &[0.0]));
        let th = tape.tanh(zero).unwrap();
        assert_eq!(tape.value(th).data(), &[0.0]);
        assert!(tape.leaky_relu(x, 1.5).is_err());

        let h = tape.constant(t(&[2], &[-3.0, 2.0]));
        let hh = tape.hinge(h).unwrap();
        assert_eq!(tape.value(hh).data(), &[0.0, 2.0]);
    }

    #[test]
    fn hinge_derivative_is_piecewise() {
        for (x, want) in [(0.5, 1.0), (-0.5, 0.0), (0.0, 0.0)] {
            let mut tape = Tape::new();
            let v = tape.leaf(t(&[1], &[x]));
            let h = tape.hinge(v).unwrap();
            let g = tape.backward(h).unwrap();
            assert_eq!(g.get(v).unwrap().data(), &[want]);
        }
    }

    #[test]
    fn mean_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let m = tape.mean(x).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0]);
        let c = tape.constant(t(&[4], &[0.3; 4]));
        let mc = tape.mean(c).unwrap();
        assert!((tape.value(mc).item().unwrap() - 0.3).abs() < 1e-15);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn linear_loss_gradient_is_exact() {
        // loss = mean(W·x), W: 1x3, x: 3x4 fixed.
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[1, 3], &[0.1, -0.2, 0.3]));
        let xs = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0, 1.0, 1.0, 1.0, 1.0];
        let x = tape.constant(t(&[3, 4], &xs));
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.mean(y).unwrap();
        let g = tape.backward(loss).unwrap();
        let gw = g.get(w).unwrap();
        for r in 0..3 {
            let want: f64 = xs[r * 4..r * 4 + 4].iter().map(|v| v * 0.25).sum();
            assert!((gw.data()[r] - want).abs() < 1e-15);
        }
        assert!(g.get(x).is_none());
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(t(&[2], &[1.0, 2.0]));
        let q = tape.leaf(t(&[2], &[3.0, 4.0]));
        let loss = tape.sum(q).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.get(q).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_foreign_or_non_scalar_loss() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.leaf(t(&[2], &[1.0, 2.0]));
        let s = a.sum(x).unwrap();
        let y = b.leaf(t(&[1], &[1.0]));
        assert!(matches!(b.backward(s), Err(Error::Usage(_))));
        assert!(matches!(a.backward(x), Err(Error::Usage(_))));
        let _ = y;
    }

    #[test]
    fn overflow_is_reported() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[1e300]));
        assert!(matches!(tape.scale(x, 1e300), Err(Error::NonFinite { .. })));
    }
}
