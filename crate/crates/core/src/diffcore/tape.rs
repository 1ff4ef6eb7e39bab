use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Matrix};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `x + b·1ᵀ` with `b` a column vector.
    AddCol(Var, Var),
    /// `diag(b)·x` with `b` a column vector.
    MulCol(Var, Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    SoftmaxCols(Var),
    SliceRows(Var, usize),
    VStack(Vec<Var>),
    Inverse(Var),
    Sum(Var),
    SquaredNorm(Var),
    ScalarFn(Vec<(Var, Matrix)>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records one forward pass. A fresh tape is built for every step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m[(0, 0)]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul: inner dimensions");
        let out = va * vb;
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add: shapes");
        let out = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub: shapes");
        let out = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul: shapes");
        let out = self.value(a).component_mul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a) * s;
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// Adds the column vector `b` to every column of `x`.
    pub fn add_col(&mut self, x: Var, b: Var) -> Var {
        let (vx, vb) = (self.value(x), self.value(b));
        assert_eq!(vb.shape(), (vx.nrows(), 1), "add_col: bias shape");
        let mut out = vx.clone();
        for mut col in out.column_iter_mut() {
            col += vb.column(0);
        }
        let ng = self.ng(x) || self.ng(b);
        self.push(out, Op::AddCol(x, b), ng)
    }

    /// Scales row `i` of `x` by `b[i]`.
    pub fn mul_col(&mut self, x: Var, b: Var) -> Var {
        let (vx, vb) = (self.value(x), self.value(b));
        assert_eq!(vb.shape(), (vx.nrows(), 1), "mul_col: scale shape");
        let mut out = vx.clone();
        for mut col in out.column_iter_mut() {
            col.component_mul_assign(&vb.column(0));
        }
        let ng = self.ng(x) || self.ng(b);
        self.push(out, Op::MulCol(x, b), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(x);
        self.push(out, Op::LeakyRelu(x, slope), ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::exp);
        let ng = self.ng(x);
        self.push(out, Op::Exp(x), ng)
    }

    /// Softmax down each column.
    pub fn softmax_cols(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for mut col in out.column_iter_mut() {
            let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in col.iter_mut() {
                *v = libm::exp(*v - mx);
                s += *v;
            }
            col /= s;
        }
        let ng = self.ng(x);
        self.push(out, Op::SoftmaxCols(x), ng)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let vx = self.value(x);
        assert!(start + len <= vx.nrows(), "slice_rows: out of range");
        let out = vx.rows(start, len).into_owned();
        let ng = self.ng(x);
        self.push(out, Op::SliceRows(x, start), ng)
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "vstack: no parts");
        let cols = self.value(parts[0]).ncols();
        let rows: usize = parts.iter().map(|p| self.value(*p).nrows()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut r = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.ncols(), cols, "vstack: column counts");
            out.rows_mut(r, v.nrows()).copy_from(v);
            r += v.nrows();
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(out, Op::VStack(parts.to_vec()), ng)
    }

    /// Matrix inverse. Callers are expected to guard conditioning first.
    pub fn inverse(&mut self, x: Var) -> Result<Var> {
        let out = self
            .value(x)
            .clone()
            .try_inverse()
            .ok_or(Error::Singular {
                condition: f64::INFINITY,
            })?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Inverse(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::from_element(1, 1, self.value(x).sum());
        let ng = self.ng(x);
        self.push(out, Op::Sum(x), ng)
    }

    pub fn squared_norm(&mut self, x: Var) -> Var {
        let out = Matrix::from_element(1, 1, self.value(x).norm_squared());
        let ng = self.ng(x);
        self.push(out, Op::SquaredNorm(x), ng)
    }

    /// Records a scalar whose gradients with respect to `inputs` were
    /// already computed by the caller. Each gradient must match the shape of
    /// its input.
    pub fn scalar_fn(&mut self, value: f64, inputs: Vec<(Var, Matrix)>) -> Var {
        for (v, g) in &inputs {
            assert_eq!(self.value(*v).shape(), g.shape(), "scalar_fn: gradient shape");
        }
        let ng = inputs.iter().any(|(v, _)| self.ng(*v));
        self.push(Matrix::from_element(1, 1, value), Op::ScalarFn(inputs), ng)
    }

    /// Gradient of the scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Vec<Option<Matrix>> {
        assert_eq!(self.value(loss).shape(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::from_element(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g * self.value(*b).transpose());
                }
                if self.ng(*b) {
                    acc(*b, self.value(*a).transpose() * g);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g.component_mul(self.value(*b)));
                acc(*b, g.component_mul(self.value(*a)));
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::AddCol(x, b) => {
                acc(*x, g.clone());
                acc(*b, Matrix::from_column_slice(g.nrows(), 1, g.column_sum().as_slice()));
            }
            Op::MulCol(x, b) => {
                let (vx, vb) = (self.value(*x), self.value(*b));
                if self.ng(*x) {
                    let mut gx = g.clone();
                    for mut col in gx.column_iter_mut() {
                        col.component_mul_assign(&vb.column(0));
                    }
                    acc(*x, gx);
                }
                if self.ng(*b) {
                    acc(*b, Matrix::from_column_slice(g.nrows(), 1, g.component_mul(vx).column_sum().as_slice()));
                }
            }
            Op::LeakyRelu(x, slope) => {
                let vx = self.value(*x);
                let gx = Matrix::from_fn(g.nrows(), g.ncols(), |i, j| {
                    if vx[(i, j)] > 0.0 {
                        g[(i, j)]
                    } else {
                        slope * g[(i, j)]
                    }
                });
                acc(*x, gx);
            }
            Op::Exp(x) => acc(*x, g.component_mul(&node.value)),
            Op::SoftmaxCols(x) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.nrows(), y.ncols());
                for j in 0..y.ncols() {
                    let dot = y.column(j).dot(&g.column(j));
                    for i in 0..y.nrows() {
                        gx[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                    }
                }
                acc(*x, gx);
            }
            Op::SliceRows(x, start) => {
                let vx = self.value(*x);
                let mut gx = Matrix::zeros(vx.nrows(), vx.ncols());
                gx.rows_mut(*start, g.nrows()).copy_from(g);
                acc(*x, gx);
            }
            Op::VStack(parts) => {
                let mut r = 0;
                for p in parts {
                    let rows = self.value(*p).nrows();
                    acc(*p, g.rows(r, rows).into_owned());
                    r += rows;
                }
            }
            Op::Inverse(x) => {
                let inv_t = node.value.transpose();
                acc(*x, -(&inv_t * g * &inv_t));
            }
            Op::Sum(x) => {
                let vx = self.value(*x);
                acc(*x, Matrix::from_element(vx.nrows(), vx.ncols(), g[(0, 0)]));
            }
            Op::SquaredNorm(x) => acc(*x, self.value(*x) * (2.0 * g[(0, 0)])),
            Op::ScalarFn(inputs) => {
                for (v, local) in inputs {
                    acc(*v, local * g[(0, 0)]);
                }
            }
        }
    }

    /// Back-propagates from `loss` and adds the result into the gradient
    /// accumulator of every participating parameter.
    ///
    /// Fails with [`Error::Divergence`] naming the offending parameter when
    /// the loss or any parameter gradient is not finite.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let lv = self.scalar(loss);
        if !lv.is_finite() {
            return Err(Error::Divergence {
                param: String::from("loss"),
                iteration: None,
            });
        }
        let grads = self.gradients(loss);
        for (node, g) in self.nodes.iter().zip(grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                let p = &mut store.params_mut()[id.index()];
                if !all_finite(&g) {
                    return Err(Error::Divergence {
                        param: p.name.clone(),
                        iteration: None,
                    });
                }
                p.grad += g;
            }
        }
        for (_, p) in store.iter() {
            if !all_finite(&p.grad) {
                return Err(Error::Divergence {
                    param: format!("{} (accumulated)", p.name),
                    iteration: None,
                });
            }
        }
        Ok(())
    }
}
