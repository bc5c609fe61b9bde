use super::kernels::{self, ConvGrads, Window};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2`, so the output extent is `ceil(extent / stride)`.
    Same,
    Valid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, bias: Var },
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Abs(Var),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    Softmax { x: Var, axis: usize },
    Reshape(Var),
    Transpose(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Gather { table: Var, ids: Vec<usize> },
    Tile { x: Var, reps: usize },
    Correlate { sel: Var, cells: Vec<Option<usize>> },
    SoftArgmax(Var),
    Conv { input: Var, weight: Var, bias: Option<Var>, win: Window, cols: Vec<f64> },
    ConvTranspose { input: Var, weight: Var, bias: Option<Var>, win: Window },
    ConvConst { ctx: Var, weight: Var, win: Window },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias { .. } => "add_bias",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Abs(_) => "abs",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Elu(_) => "elu",
            Op::Softmax { .. } => "softmax",
            Op::Reshape(_) => "reshape",
            Op::Transpose(_) => "transpose",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Gather { .. } => "gather",
            Op::Tile { .. } => "tile",
            Op::Correlate { .. } => "correlate",
            Op::SoftArgmax(_) => "soft_argmax",
            Op::Conv { .. } => "conv",
            Op::ConvTranspose { .. } => "conv_transpose",
            Op::ConvConst { .. } => "conv_const",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape of tensor operations.
///
/// Nodes are pushed in evaluation order, so node ids are a topological order
/// and the backward sweep is a plain reverse iteration. Leaf gradients
/// persist across [`Graph::backward`] calls and accumulate until
/// [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
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

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a differentiable leaf, if any backward pass
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op.name().into()));
        }
        let requires_grad = inputs.iter().any(|&v| self.requires(v));
        self.nodes.push(Node {
            value: Tensor::from_raw(shape, data),
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [m, n] => Ok((m, n)),
            ref s => Err(shape_err!("{what}: expected a matrix, got shape {s:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, n) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(shape_err!("matmul: inner dimensions {k} and {k2} differ"));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.data(a), false, self.data(b), false, 0.0, &mut out);
        self.push(Op::MatMul(a, b), vec![m, n], out, &[a, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, op.name())?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a vector along the trailing axis (a row bias for matrices).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().expect("tensors have rank >= 1");
        if self.value(bias).len() != n {
            return Err(shape_err!(
                "add_bias: bias of {} values for trailing extent {n}",
                self.value(bias).len()
            ));
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(b).map(|(r, b)| r + b))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::AddBias { x, bias }, shape, out, &[x, bias])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(op, shape, out, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        self.push(Op::Sum(x), vec![1], vec![s], &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Op::Mean(x), vec![1], vec![s], &[x])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Abs(x), f64::abs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Sigmoid(x), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Elu(x), |v| if v >= 0.0 { v } else { v.exp_m1() })
    }

    /// Softmax along `axis`, stabilized by subtracting the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(shape_err!("softmax: axis {axis} out of range for {shape:?}"));
        }
        let (outer, len, inner) = outer_inner(&shape, axis);
        let src = self.data(x);
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| src[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..len {
                    let e = (src[at(a)] - max).exp();
                    out[at(a)] = e;
                    z += e;
                }
                for a in 0..len {
                    out[at(a)] /= z;
                }
            }
        }
        self.push(Op::Softmax { x, axis }, shape, out, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() || shape.contains(&0) {
            return Err(shape_err!("reshape: {:?} into {shape:?}", self.shape(x)));
        }
        let out = self.data(x).to_vec();
        self.push(Op::Reshape(x), shape.to_vec(), out, &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "transpose")?;
        let src = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(Op::Transpose(x), vec![n, m], out, &[x])
    }

    /// Concatenates tensors whose shapes agree except along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::EmptyInput("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err!("concat: axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(shape_err!("concat: {s:?} incompatible with {base:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let (outer, _, inner) = outer_inner(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.data(p)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(Op::Concat { parts: parts.to_vec(), axis }, shape, out, parts)
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err!("slice [{start}, {}) on axis {axis} of {shape:?}", start + len));
        }
        let (outer, full, inner) = outer_inner(&shape, axis);
        let src = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * full + start) * inner;
            out.extend_from_slice(&src[off..off + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        self.push(Op::Slice { x, axis, start }, new_shape, out, &[x])
    }

    /// Rows of a V×D table selected by `ids`, giving a len(ids)×D matrix.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.matrix_dims(table, "gather")?;
        if ids.is_empty() {
            return Err(Error::EmptyInput("gather with no ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Range(format!("id {bad} outside table of {rows} rows")));
        }
        let src = self.data(table);
        let out = ids.iter().flat_map(|&i| src[i * d..(i + 1) * d].iter().copied()).collect();
        self.push(Op::Gather { table, ids: ids.to_vec() }, vec![ids.len(), d], out, &[table])
    }

    /// Repeats each entry of a length-C vector over an h×w plane: C×h×w.
    pub fn tile(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let c = self.value(x).len();
        let reps = h * w;
        if reps == 0 {
            return Err(shape_err!("tile: empty plane"));
        }
        let out = self
            .data(x)
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(reps))
            .collect();
        self.push(Op::Tile { x, reps }, vec![c, h, w], out, &[x])
    }

    /// Per-cell selection from a one-hot grid: cell `p` with an object of
    /// type `l` yields `sel[l]`, empty cells yield 0. Output shape is
    /// `plane_shape`. Each output is a single copied value, so the result is
    /// independent of how type channels are numbered.
    pub fn correlate(&mut self, sel: Var, cells: &[Option<usize>], plane_shape: &[usize]) -> Result<Var> {
        let n_types = self.value(sel).len();
        if cells.len() != plane_shape.iter().product::<usize>() {
            return Err(shape_err!("correlate: {} cells for plane {plane_shape:?}", cells.len()));
        }
        if let Some(bad) = cells.iter().flatten().find(|&&l| l >= n_types) {
            return Err(shape_err!("correlate: type {bad} but selector has {n_types} entries"));
        }
        let s = self.data(sel);
        let out = cells.iter().map(|c| c.map_or(0.0, |l| s[l])).collect();
        self.push(
            Op::Correlate { sel, cells: cells.to_vec() },
            plane_shape.to_vec(),
            out,
            &[sel],
        )
    }

    /// Expected 1-based (i, j) index under each K×W×H heatmap: K×2.
    pub fn soft_argmax(&mut self, x: Var) -> Result<Var> {
        let [k, w, h] = *self.shape(x) else {
            return Err(shape_err!("soft_argmax: expected K×W×H, got {:?}", self.shape(x)));
        };
        let src = self.data(x);
        let mut out = vec![0.0; k * 2];
        for c in 0..k {
            for i in 0..w {
                for j in 0..h {
                    let p = src[(c * w + i) * h + j];
                    out[c * 2] += p * (i + 1) as f64;
                    out[c * 2 + 1] += p * (j + 1) as f64;
                }
            }
        }
        self.push(Op::SoftArgmax(x), vec![k, 2], out, &[x])
    }

    /// 2-D cross-correlation. `input` is C×H×W, `weight` is C_out×C×k×k with
    /// odd `k`, `bias` has C_out entries.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let [c, h, w] = *self.shape(input) else {
            return Err(shape_err!("conv2d: input must be C×H×W, got {:?}", self.shape(input)));
        };
        let [c_out, c_in, kh, kw] = *self.shape(weight) else {
            return Err(shape_err!("conv2d: kernels must be rank 4, got {:?}", self.shape(weight)));
        };
        if c_in != c || kh != kw || kh % 2 == 0 {
            return Err(shape_err!(
                "conv2d: kernels {:?} do not fit input {:?} (need odd square kernels)",
                self.shape(weight),
                self.shape(input)
            ));
        }
        let win = self.window(c, h, w, kh, kw, stride, padding)?;
        self.conv_with(input, weight, bias, c_out, win)
    }

    /// 1-D cross-correlation over a C×L sequence with same padding.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let [c, l] = *self.shape(input) else {
            return Err(shape_err!("conv1d: input must be C×L, got {:?}", self.shape(input)));
        };
        let [c_out, c_in, k] = *self.shape(weight) else {
            return Err(shape_err!("conv1d: kernels must be rank 3, got {:?}", self.shape(weight)));
        };
        if c_in != c || k % 2 == 0 {
            return Err(shape_err!("conv1d: kernels {:?} do not fit input {:?}", self.shape(weight), self.shape(input)));
        }
        let win = self.window(c, 1, l, 1, k, 1, Padding::Same)?;
        let out = self.conv_with(input, weight, bias, c_out, win)?;
        // conv_with produced C_out×1×L; drop the unit axis in place.
        let node = &mut self.nodes[out.0];
        node.value = Tensor::from_raw(vec![c_out, l], std::mem::take(node.value.data_mut_vec()));
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn window(
        &self,
        c: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Window> {
        if stride == 0 {
            return Err(shape_err!("stride must be at least 1"));
        }
        let (pad_h, pad_w) = match padding {
            Padding::Same => (kh / 2, kw / 2),
            Padding::Valid => (0, 0),
        };
        let out_h = kernels::conv_out_extent(h, kh, stride, pad_h);
        let out_w = kernels::conv_out_extent(w, kw, stride, pad_w);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(shape_err!("kernel {kh}×{kw} larger than padded input {h}×{w}"));
        };
        Ok(Window {
            channels: c,
            in_h: h,
            in_w: w,
            kh,
            kw,
            stride,
            pad_h,
            pad_w,
            out_h,
            out_w,
        })
    }

    fn conv_with(&mut self, input: Var, weight: Var, bias: Option<Var>, c_out: usize, win: Window) -> Result<Var> {
        if let Some(b) = bias {
            if self.value(b).len() != c_out {
                return Err(shape_err!("conv bias has {} entries for {c_out} channels", self.value(b).len()));
            }
        }
        let (out, cols) = kernels::conv_forward(
            self.data(input),
            self.data(weight),
            bias.map(|b| self.data(b)),
            c_out,
            &win,
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(
            Op::Conv { input, weight, bias, win, cols },
            vec![c_out, win.out_h, win.out_w],
            out,
            &inputs,
        )
    }

    /// Transposed 2-D convolution with padding `(k-1)/2` and output padding
    /// `stride-1`, so the output extent is exactly `stride ×` the input
    /// extent. `weight` is C_in×C_out×k×k.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let [c_in, h, w] = *self.shape(input) else {
            return Err(shape_err!("conv_transpose2d: input must be C×H×W, got {:?}", self.shape(input)));
        };
        let [wc_in, c_out, kh, kw] = *self.shape(weight) else {
            return Err(shape_err!("conv_transpose2d: kernels must be rank 4"));
        };
        if wc_in != c_in || kh != kw || kh % 2 == 0 {
            return Err(shape_err!(
                "conv_transpose2d: kernels {:?} do not fit input {:?}",
                self.shape(weight),
                self.shape(input)
            ));
        }
        if stride == 0 {
            return Err(shape_err!("stride must be at least 1"));
        }
        let pad = (kh - 1) / 2;
        let (oh, ow) = (h * stride, w * stride);
        let win = Window {
            channels: c_out,
            in_h: oh,
            in_w: ow,
            kh,
            kw,
            stride,
            pad_h: pad,
            pad_w: pad,
            out_h: h,
            out_w: w,
        };
        // The adjoint convolution must map the output extent back onto the input.
        if kernels::conv_out_extent(oh, kh, stride, pad) != Some(h)
            || kernels::conv_out_extent(ow, kw, stride, pad) != Some(w)
        {
            return Err(shape_err!(
                "conv_transpose2d: stride {stride} with kernel {kh} cannot map {h}×{w} onto {oh}×{ow}"
            ));
        }
        if let Some(b) = bias {
            if self.value(b).len() != c_out {
                return Err(shape_err!("conv_transpose2d bias has {} entries for {c_out} channels", self.value(b).len()));
            }
        }
        let out = kernels::conv_transpose_forward(
            self.data(input),
            self.data(weight),
            bias.map(|b| self.data(b)),
            c_in,
            &win,
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(Op::ConvTranspose { input, weight, bias, win }, vec![c_out, oh, ow], out, &inputs)
    }

    /// Convolution of the vector `ctx` tiled over an h×w plane, without
    /// materializing the tile. Same contract as `conv2d(tile(ctx, h, w), ..)`
    /// (no bias).
    pub fn conv2d_tiled(
        &mut self,
        ctx: Var,
        weight: Var,
        h: usize,
        w: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let c = self.value(ctx).len();
        let [c_out, c_in, kh, kw] = *self.shape(weight) else {
            return Err(shape_err!("conv2d_tiled: kernels must be rank 4"));
        };
        if c_in != c || kh != kw || kh % 2 == 0 {
            return Err(shape_err!("conv2d_tiled: kernels {:?} do not fit {c} channels", self.shape(weight)));
        }
        let win = self.window(c, h, w, kh, kw, stride, padding)?;
        let out = kernels::conv_const_forward(self.data(ctx), self.data(weight), c_out, &win);
        self.push(
            Op::ConvConst { ctx, weight, win },
            vec![c_out, win.out_h, win.out_w],
            out,
            &[ctx, weight],
        )
    }

    /// Reverse sweep from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[id] {
                    Some(acc) => add_into(acc, &g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(id, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let y = nodes[id].value.data();
        let val = |v: Var| nodes[v.0].value.data();
        match &nodes[id].op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                let (av, bv) = (val(*a), val(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    kernels::gemm(m, n, k, g, false, bv, true, 1.0, ga);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    kernels::gemm(k, m, n, av, true, g, false, 1.0, gb);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((d, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks_exact(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, s)| *d += f * s);
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let s = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::Abs(x) => {
                let xv = val(*x);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((d, gi), xi) in gx.iter_mut().zip(g).zip(xv) {
                        *d += gi * if *xi > 0.0 { 1.0 } else if *xi < 0.0 { -1.0 } else { 0.0 };
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((d, gi), yi) in gx.iter_mut().zip(g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Elu(x) => {
                let xv = val(*x);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (((d, gi), yi), xi) in gx.iter_mut().zip(g).zip(y).zip(xv) {
                        *d += if *xi >= 0.0 { *gi } else { gi * (yi + 1.0) };
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = outer_inner(nodes[id].value.shape(), *axis);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |a: usize| (o * len + a) * inner + i;
                            let dot: f64 = (0..len).map(|a| g[at(a)] * y[at(a)]).sum();
                            for a in 0..len {
                                gx[at(a)] += y[at(a)] * (g[at(a)] - dot);
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (nodes[x.0].value.shape()[0], nodes[x.0].value.shape()[1]);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = outer_inner(nodes[id].value.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let block = nodes[p.0].value.shape()[*axis] * inner;
                    if let Some(gp) = slot(nodes, grads, p) {
                        for o in 0..outer {
                            let src = o * total * inner + offset;
                            add_into(&mut gp[o * block..(o + 1) * block], &g[src..src + block]);
                        }
                    }
                    offset += block;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, full, inner) = outer_inner(nodes[x.0].value.shape(), *axis);
                let len = nodes[id].value.shape()[*axis];
                if let Some(gx) = slot(nodes, grads, *x) {
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let src = o * len * inner;
                        add_into(&mut gx[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                }
            }
            Op::Gather { table, ids } => {
                let d = nodes[table.0].value.shape()[1];
                if let Some(gt) = slot(nodes, grads, *table) {
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut gt[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::Tile { x, reps } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (c, d) in gx.iter_mut().enumerate() {
                        *d += g[c * reps..(c + 1) * reps].iter().sum::<f64>();
                    }
                }
            }
            Op::Correlate { sel, cells } => {
                if let Some(gs) = slot(nodes, grads, *sel) {
                    for (p, c) in cells.iter().enumerate() {
                        if let Some(l) = c {
                            gs[*l] += g[p];
                        }
                    }
                }
            }
            Op::SoftArgmax(x) => {
                let [k, w, h] = *nodes[x.0].value.shape() else { unreachable!() };
                if let Some(gx) = slot(nodes, grads, *x) {
                    for c in 0..k {
                        for i in 0..w {
                            for j in 0..h {
                                gx[(c * w + i) * h + j] +=
                                    g[c * 2] * (i + 1) as f64 + g[c * 2 + 1] * (j + 1) as f64;
                            }
                        }
                    }
                }
            }
            Op::Conv { input, weight, bias, win, cols } => {
                let c_out = nodes[id].value.shape()[0];
                let wv = val(*weight);
                // Distinct nodes, so the three buffers never alias; take them
                // out of the table to hold them simultaneously.
                let mut gi = slot(nodes, grads, *input).map(std::mem::take);
                let mut gw = slot(nodes, grads, *weight).map(std::mem::take);
                let mut gb = bias.and_then(|b| slot(nodes, grads, b).map(std::mem::take));
                kernels::conv_backward(
                    g,
                    cols,
                    wv,
                    c_out,
                    win,
                    ConvGrads {
                        input: gi.as_deref_mut(),
                        weight: gw.as_deref_mut(),
                        bias: gb.as_deref_mut(),
                    },
                );
                restore(grads, *input, gi);
                restore(grads, *weight, gw);
                if let Some(b) = bias {
                    restore(grads, *b, gb);
                }
            }
            Op::ConvTranspose { input, weight, bias, win } => {
                let c_in = nodes[input.0].value.shape()[0];
                let (xv, wv) = (val(*input), val(*weight));
                let mut gi = slot(nodes, grads, *input).map(std::mem::take);
                let mut gw = slot(nodes, grads, *weight).map(std::mem::take);
                let mut gb = bias.and_then(|b| slot(nodes, grads, b).map(std::mem::take));
                kernels::conv_transpose_backward(
                    g,
                    xv,
                    wv,
                    c_in,
                    win,
                    ConvGrads {
                        input: gi.as_deref_mut(),
                        weight: gw.as_deref_mut(),
                        bias: gb.as_deref_mut(),
                    },
                );
                restore(grads, *input, gi);
                restore(grads, *weight, gw);
                if let Some(b) = bias {
                    restore(grads, *b, gb);
                }
            }
            Op::ConvConst { ctx, weight, win } => {
                let c_out = nodes[id].value.shape()[0];
                let (cv, wv) = (val(*ctx), val(*weight));
                let mut gc = slot(nodes, grads, *ctx).map(std::mem::take);
                let mut gw = slot(nodes, grads, *weight).map(std::mem::take);
                kernels::conv_const_backward(g, cv, wv, c_out, win, gc.as_deref_mut(), gw.as_deref_mut());
                restore(grads, *ctx, gc);
                restore(grads, *weight, gw);
            }
        }
    }
}

/// Gradient buffer for input `v`, or None when it needs no gradient.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn restore(grads: &mut [Option<Vec<f64>>], v: Var, buf: Option<Vec<f64>>) {
    if let Some(b) = buf {
        grads[v.0] = Some(b);
    }
}

impl Tensor {
    fn data_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.data
    }
}
