use super::ops::{self, BinaryKind, OpKind, Operand, UnaryKind};
use super::{numel, Result, Tensor, TensorError};
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        ia: Operand,
        ib: Operand,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Unary {
        kind: UnaryKind,
        a: Var,
    },
    Scale {
        a: Var,
        c: f64,
    },
    Shift {
        a: Var,
    },
    ClampMin {
        a: Var,
        floor: f64,
    },
    Reduce {
        a: Var,
        axes: Vec<usize>,
        mean: bool,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Softmax {
        a: Var,
        axis: usize,
        log: bool,
    },
    Transpose {
        a: Var,
    },
    Reshape {
        a: Var,
    },
    AvgPool2 {
        a: Var,
    },
    Upsample2 {
        a: Var,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Define-by-run computation graph. Nodes are stored in execution order, so
/// every operation's inputs precede it.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`]: one optional gradient buffer per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    detached: bool,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` lies on a differentiable path.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Set when the loss had no path to any `requires_grad` leaf; every
    /// gradient is then reported as zeros.
    pub fn detached(&self) -> bool {
        self.detached
    }
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

    /// Adds a leaf; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let tracked = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        op: Op,
    ) -> Result<Var> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: name, index });
        }
        let tracked = self.inputs_of(&op).iter().any(|v| self.nodes[v.0].tracked);
        let value = Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        };
        // Untracked results are stored as constants: nothing to replay.
        let op = if tracked { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs_of(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => Vec::new(),
            Op::Binary { a, b, .. } | Op::MatMul { a, b } => vec![*a, *b],
            Op::Conv2d {
                input,
                weight,
                bias,
            } => vec![*input, *weight, *bias],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Unary { a, .. }
            | Op::Scale { a, .. }
            | Op::Shift { a }
            | Op::ClampMin { a, .. }
            | Op::Reduce { a, .. }
            | Op::Softmax { a, .. }
            | Op::Transpose { a }
            | Op::Reshape { a }
            | Op::AvgPool2 { a }
            | Op::Upsample2 { a } => vec![*a],
        }
    }

    /// Applies the op named `name` (see [`OpKind`]) with default attributes.
    pub fn apply(&mut self, name: &str, inputs: &[Var]) -> Result<Var> {
        let kind = OpKind::from_name(name)?;
        self.forward_op(kind, inputs)
    }

    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::MatMul => 2,
            OpKind::Conv2d => 3,
            OpKind::Concat => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(TensorError::Arity {
                op: kind.name(),
                expected: arity,
                got: inputs.len(),
            });
        }
        let x = inputs[0];
        match kind {
            OpKind::Add => self.add(x, inputs[1]),
            OpKind::Sub => self.sub(x, inputs[1]),
            OpKind::Mul => self.mul(x, inputs[1]),
            OpKind::Div => self.div(x, inputs[1]),
            OpKind::MatMul => self.matmul(x, inputs[1]),
            OpKind::Conv2d => self.conv2d(x, inputs[1], inputs[2]),
            OpKind::Relu => self.relu(x),
            OpKind::Exp => self.exp(x),
            OpKind::Sqrt => self.sqrt(x),
            OpKind::Log => self.log(x),
            OpKind::Softplus => self.softplus(x),
            OpKind::Mean => self.mean(x),
            OpKind::Sum => self.sum(x),
            OpKind::Concat => self.concat(inputs, 0),
            OpKind::Softmax => self.softmax(x, 0),
            OpKind::LogSoftmax => self.log_softmax(x, 0),
            OpKind::Transpose => self.transpose(x),
            OpKind::AvgPool2 => self.avg_pool2(x),
            OpKind::Upsample2 => self.upsample2(x),
        }
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (shape, ia, ib) = ops::broadcast(kind.name(), self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let data = (0..numel(&shape))
            .map(|i| kind.apply(av[ia.index(i)], bv[ib.index(i)]))
            .collect();
        self.push(kind.name(), shape, data, Op::Binary { kind, a, b, ia, ib })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|v| v * c).collect();
        let shape = self.shape(a).to_vec();
        self.push("scale", shape, data, Op::Scale { a, c })
    }

    /// `a + c` for a constant `c`.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|v| v + c).collect();
        let shape = self.shape(a).to_vec();
        self.push("add_scalar", shape, data, Op::Shift { a })
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|v| v.max(floor)).collect();
        let shape = self.shape(a).to_vec();
        self.push("clamp_min", shape, data, Op::ClampMin { a, floor })
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var> {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&v| kind.apply(v))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(kind.name(), shape, data, Op::Unary { kind, a })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Invalid {
                op: "sqrt",
                reason: "input must be strictly positive",
            });
        }
        self.unary(UnaryKind::Sqrt, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Invalid {
                op: "log",
                reason: "input must be strictly positive",
            });
        }
        self.unary(UnaryKind::Log, a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Softplus, a)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = ops::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", vec![m, n], data, Op::MatMul { a, b })
    }

    /// 3×3 convolution, stride 1, zero padding 1 on a single `cin×h×w` map.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (si, sw, sb) = (self.shape(input), self.shape(weight), self.shape(bias));
        let ok = si.len() == 3
            && sw.len() == 4
            && sw[1] == si[0]
            && sw[2] == 3
            && sw[3] == 3
            && sb == [sw[0]];
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: si.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let (cin, h, w, cout) = (si[0], si[1], si[2], sw[0]);
        let data = ops::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            cin,
            cout,
            h,
            w,
        );
        self.push(
            "conv2d",
            vec![cout, h, w],
            data,
            Op::Conv2d {
                input,
                weight,
                bias,
            },
        )
    }

    fn reduce(&mut self, a: Var, axes: &[usize], mean: bool) -> Result<Var> {
        let name = if mean { "mean" } else { "sum" };
        let shape = self.shape(a).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.iter().any(|&ax| ax >= shape.len()) {
            return Err(TensorError::Invalid {
                op: name,
                reason: "reduction axis out of range",
            });
        }
        let (out_shape, map) = ops::reduction_map(&shape, &axes);
        let count = (numel(&shape) / numel(&out_shape)) as f64;
        let mut data = vec![0.0; numel(&out_shape)];
        for (v, &o) in self.value(a).data().iter().zip(&map) {
            data[o] += v;
        }
        if mean {
            data.iter_mut().for_each(|v| *v /= count);
        }
        self.push(name, out_shape, data, Op::Reduce { a, axes, mean })
    }

    /// Sum of every element, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let all: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce(a, &all, false)
    }

    pub fn sum_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(a, axes, false)
    }

    /// Mean of every element, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let all: Vec<usize> = (0..self.shape(a).len()).collect();
        self.reduce(a, &all, true)
    }

    pub fn mean_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(a, axes, true)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::Arity {
            op: "concat",
            expected: 1,
            got: 0,
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::Invalid {
                op: "concat",
                reason: "axis out of range",
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = ops::split_axis(&out_shape, axis);
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                let src = self.value(*v).data();
                data.extend_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
            }
        }
        self.push(
            "concat",
            out_shape,
            data,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    fn softmax_impl(&mut self, a: Var, axis: usize, log: bool) -> Result<Var> {
        let name = if log { "log_softmax" } else { "softmax" };
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Invalid {
                op: name,
                reason: "axis out of range",
            });
        }
        let (outer, len, inner) = ops::split_axis(&shape, axis);
        let data = ops::softmax_forward(self.value(a).data(), outer, len, inner, log);
        self.push(name, shape, data, Op::Softmax { a, axis, log })
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, false)
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, true)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Invalid {
                op: "transpose",
                reason: "expects a rank-2 tensor",
            });
        }
        let (m, n) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        self.push("transpose", vec![n, m], data, Op::Transpose { a })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).numel() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.value(a).data().to_vec();
        self.push("reshape", shape.to_vec(), data, Op::Reshape { a })
    }

    fn chw(&self, a: Var, op: &'static str, even: bool) -> Result<(usize, usize, usize)> {
        let s = self.shape(a);
        if s.len() != 3 || (even && (s[1] % 2 != 0 || s[2] % 2 != 0)) {
            return Err(TensorError::Invalid {
                op,
                reason: "expects a c×h×w tensor (even h, w for pooling)",
            });
        }
        Ok((s[0], s[1], s[2]))
    }

    /// 2×2 average pooling, stride 2.
    pub fn avg_pool2(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = self.chw(a, "avg_pool2", true)?;
        let data = ops::avg_pool2_forward(self.value(a).data(), c, h, w);
        self.push("avg_pool2", vec![c, h / 2, w / 2], data, Op::AvgPool2 { a })
    }

    /// Bilinear ×2 upsampling (half-pixel centres, clamped edges).
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let (c, h, w) = self.chw(a, "upsample2", false)?;
        let data = ops::upsample2_forward(self.value(a).data(), c, h, w);
        self.push(
            "upsample2",
            vec![c, 2 * h, 2 * w],
            data,
            Op::Upsample2 { a },
        )
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every tracked node is visited once, in reverse order of creation.
    /// Gradients of `requires_grad` leaves are also written into the leaf
    /// tensors (see [`Tensor::grad`]).
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let ls = self.shape(loss);
        if numel(ls) != 1 {
            return Err(TensorError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let detached = !self.nodes[loss.0].tracked;
        if !detached {
            grads[loss.0] = Some(vec![1.0]);
            for idx in (0..=loss.0).rev() {
                if !self.nodes[idx].tracked {
                    continue;
                }
                let (lower, upper) = grads.split_at_mut(idx);
                let Some(g) = upper[0].as_deref() else {
                    continue;
                };
                self.propagate(idx, g, lower);
            }
        }
        for (node, g) in self.nodes.iter_mut().zip(grads.iter_mut()) {
            if node.value.requires_grad {
                if g.is_none() {
                    *g = Some(vec![0.0; node.value.numel()]);
                }
                node.value.grad = g.clone();
            }
        }
        Ok(Gradients { grads, detached })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let tracked = |v: Var| self.nodes[v.0].tracked;
        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, n: usize, contrib: &[f64]) {
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            for (b, c) in buf.iter_mut().zip(contrib) {
                *b += c;
            }
        }
        let numel_of = |v: Var| self.nodes[v.0].value.numel();
        let data_of = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b, ia, ib } => {
                let (av, bv) = (data_of(*a), data_of(*b));
                if tracked(*a) {
                    let mut ga = vec![0.0; numel_of(*a)];
                    for (i, &gi) in g.iter().enumerate() {
                        let y = bv[ib.index(i)];
                        let d = match kind {
                            BinaryKind::Add | BinaryKind::Sub => 1.0,
                            BinaryKind::Mul => y,
                            BinaryKind::Div => 1.0 / y,
                        };
                        ga[ia.index(i)] += gi * d;
                    }
                    acc(grads, *a, ga.len(), &ga);
                }
                if tracked(*b) {
                    let mut gb = vec![0.0; numel_of(*b)];
                    for (i, &gi) in g.iter().enumerate() {
                        let (x, y) = (av[ia.index(i)], bv[ib.index(i)]);
                        let d = match kind {
                            BinaryKind::Add => 1.0,
                            BinaryKind::Sub => -1.0,
                            BinaryKind::Mul => x,
                            BinaryKind::Div => -x / (y * y),
                        };
                        gb[ib.index(i)] += gi * d;
                    }
                    acc(grads, *b, gb.len(), &gb);
                }
            }
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if tracked(*a) {
                    let ga = ops::matmul_nt(g, data_of(*b), m, k, n);
                    acc(grads, *a, ga.len(), &ga);
                }
                if tracked(*b) {
                    let gb = ops::matmul_tn(data_of(*a), g, m, k, n);
                    acc(grads, *b, gb.len(), &gb);
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
            } => {
                let si = self.nodes[input.0].value.shape();
                let cout = self.nodes[weight.0].value.shape()[0];
                let (gin, gw, gb) = ops::conv2d_backward(
                    g,
                    data_of(*input),
                    data_of(*weight),
                    si[0],
                    cout,
                    si[1],
                    si[2],
                    tracked(*input),
                );
                if let Some(gin) = gin {
                    acc(grads, *input, gin.len(), &gin);
                }
                if tracked(*weight) {
                    acc(grads, *weight, gw.len(), &gw);
                }
                if tracked(*bias) {
                    acc(grads, *bias, gb.len(), &gb);
                }
            }
            Op::Unary { kind, a } => {
                let x = data_of(*a);
                let y = node.value.data();
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                    .collect();
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Scale { a, c } => {
                let contrib: Vec<f64> = g.iter().map(|v| v * c).collect();
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Shift { a } | Op::Reshape { a } => acc(grads, *a, g.len(), g),
            Op::ClampMin { a, floor } => {
                let x = data_of(*a);
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, &xi)| if xi > *floor { *gi } else { 0.0 })
                    .collect();
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Reduce { a, axes, mean } => {
                let shape = self.nodes[a.0].value.shape();
                let (out_shape, map) = ops::reduction_map(shape, axes);
                let scale = if *mean {
                    1.0 / (numel(shape) / numel(&out_shape)) as f64
                } else {
                    1.0
                };
                let contrib: Vec<f64> = map.iter().map(|&o| g[o] * scale).collect();
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Concat { inputs, axis } => {
                let out_shape = node.value.shape();
                let (outer, _, inner) = ops::split_axis(out_shape, *axis);
                let total = out_shape[*axis];
                let mut offset = 0;
                for v in inputs {
                    let len = self.nodes[v.0].value.shape()[*axis];
                    if tracked(*v) {
                        let mut contrib = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            contrib.extend_from_slice(&g[start..start + len * inner]);
                        }
                        acc(grads, *v, contrib.len(), &contrib);
                    }
                    offset += len;
                }
            }
            Op::Softmax { a, axis, log } => {
                let (outer, len, inner) = ops::split_axis(node.value.shape(), *axis);
                let contrib = ops::softmax_backward(g, node.value.data(), outer, len, inner, *log);
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Transpose { a } => {
                let s = node.value.shape();
                let (n, m) = (s[0], s[1]);
                let mut contrib = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        contrib[i * n + j] = g[j * m + i];
                    }
                }
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::AvgPool2 { a } => {
                let s = self.nodes[a.0].value.shape();
                let contrib = ops::avg_pool2_backward(g, s[0], s[1], s[2]);
                acc(grads, *a, contrib.len(), &contrib);
            }
            Op::Upsample2 { a } => {
                let s = self.nodes[a.0].value.shape();
                let contrib = ops::upsample2_backward(g, s[0], s[1], s[2]);
                acc(grads, *a, contrib.len(), &contrib);
            }
        }
    }
}
