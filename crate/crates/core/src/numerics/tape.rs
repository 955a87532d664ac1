use rand::Rng;

use super::tensor::numel;
use super::{Gradients, NumericsError, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A row of an embedding lookup: either a parameter row or a fixed vector
/// (for tokens outside the trained vocabulary).
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Row(usize),
    Fixed(Vec<f64>),
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup { param: ParamId, rows: Vec<Option<usize>> },
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Slice { x: Var, start: usize },
    Row { x: Var, row: usize },
    Column { x: Var, col: usize },
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    PadRows(Var),
    Mean { x: Var, axis: usize },
    Sum(Var),
    Conv1d { x: Var, w: Var, b: Var },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    Softmax(Var),
    Dropout { x: Var, mask: Vec<f64> },
    L2Normalize { x: Var, norm: f64 },
    WeightedNll { p: Var, labels: Vec<u8>, w0: f64, w1: f64 },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    /// Empty for `Param` nodes, whose values live in the store.
    data: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Lower/upper clamp applied to probabilities inside the log-likelihood.
pub const PROB_CLAMP: f64 = 1e-12;

/// Records one forward computation for reverse-mode differentiation.
///
/// A tape borrows the parameter store immutably; several tapes over the same
/// store may run concurrently. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted for the backward sweep.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || numel(&shape) == data.len());
        self.nodes.push(Node { shape, data, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.get(id).data(),
            _ => &self.nodes[v.0].data,
        }
    }

    pub fn value(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.data(v).to_vec()).expect("recorded shapes are consistent")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.data(v)[0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.store.get(id);
        self.push(t.shape().to_vec(), Vec::new(), Op::Param(id), t.requires_grad())
    }

    /// Gathers rows of a 2-D parameter (an embedding table) into `[rows, d]`.
    pub fn lookup(&mut self, id: ParamId, rows: &[Lookup]) -> Result<Var, NumericsError> {
        let table = self.store.get(id);
        let [n_rows, d] = table.shape() else {
            return Err(shape_err("lookup", format!("table must be 2-D, got {:?}", table.shape())));
        };
        let (n_rows, d) = (*n_rows, *d);
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut indices = Vec::with_capacity(rows.len());
        for r in rows {
            match r {
                Lookup::Row(i) if *i < n_rows => {
                    data.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
                    indices.push(Some(*i));
                }
                Lookup::Row(i) => {
                    return Err(shape_err("lookup", format!("row {i} out of range for table {:?}", table.shape())))
                }
                Lookup::Fixed(v) if v.len() == d => {
                    data.extend_from_slice(v);
                    indices.push(None);
                }
                Lookup::Fixed(v) => {
                    return Err(shape_err("lookup", format!("fixed row of length {} for width {d}", v.len())))
                }
            }
        }
        let needs = table.requires_grad() && indices.iter().any(Option::is_some);
        Ok(self.push(vec![rows.len(), d], data, Op::Lookup { param: id, rows: indices }, needs))
    }

    /// `[k]·[k,n] → [n]`, `[m,k]·[k,n] → [m,n]`, `[m,k]·[k] → [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, n, out_shape) = match (sa.as_slice(), sb.as_slice()) {
            ([k], [k2, n]) if k == k2 => (1, *k, *n, vec![*n]),
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n, vec![*m, *n]),
            ([m, k], [k2]) if k == k2 => (*m, *k, 1, vec![*m]),
            _ => return Err(shape_err("matmul", format!("{sa:?} x {sb:?}"))),
        };
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out_shape, out, Op::MatMul(a, b), needs))
    }

    /// Element-wise sum; `b` may also be a vector broadcast over the rows of a matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let broadcast = sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0];
        if sa != sb && !broadcast {
            return Err(shape_err("add", format!("{sa:?} + {sb:?}")));
        }
        let bd = self.data(b);
        let out: Vec<f64> = if broadcast {
            let n = sb[0];
            self.data(a).iter().enumerate().map(|(i, x)| x + bd[i % n]).collect()
        } else {
            self.data(a).iter().zip(bd).map(|(x, y)| x + y).collect()
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(sa, out, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(shape_err("mul", format!("{sa:?} * {sb:?}")));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(sa, out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.data(x).iter().map(|v| v * factor).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, factor), needs)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), out, op, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    /// `x[start..start+len]` of a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        match self.shape(x) {
            [n] if start + len <= *n => {}
            s => return Err(shape_err("slice", format!("[{start}..{}] of {s:?}", start + len))),
        }
        let out = self.data(x)[start..start + len].to_vec();
        let needs = self.needs(x);
        Ok(self.push(vec![len], out, Op::Slice { x, start }, needs))
    }

    pub fn row(&mut self, x: Var, row: usize) -> Result<Var, NumericsError> {
        let d = match self.shape(x) {
            [n, d] if row < *n => *d,
            s => return Err(shape_err("row", format!("row {row} of {s:?}"))),
        };
        let out = self.data(x)[row * d..(row + 1) * d].to_vec();
        let needs = self.needs(x);
        Ok(self.push(vec![d], out, Op::Row { x, row }, needs))
    }

    pub fn column(&mut self, x: Var, col: usize) -> Result<Var, NumericsError> {
        let (n, m) = match self.shape(x) {
            [n, m] if col < *m => (*n, *m),
            s => return Err(shape_err("column", format!("column {col} of {s:?}"))),
        };
        let xd = self.data(x);
        let out = (0..n).map(|i| xd[i * m + col]).collect();
        let needs = self.needs(x);
        Ok(self.push(vec![n], out, Op::Column { x, col }, needs))
    }

    /// Stacks equal-length vectors into a `[n, d]` matrix.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var, NumericsError> {
        let Some(&first) = xs.first() else {
            return Err(shape_err("stack", "no inputs".into()));
        };
        let d = match self.shape(first) {
            [d] => *d,
            s => return Err(shape_err("stack", format!("inputs must be vectors, got {s:?}"))),
        };
        let mut out = Vec::with_capacity(xs.len() * d);
        for &x in xs {
            if self.shape(x) != [d] {
                return Err(shape_err("stack", format!("{:?} vs [{d}]", self.shape(x))));
            }
            out.extend_from_slice(self.data(x));
        }
        let needs = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(vec![xs.len(), d], out, Op::Stack(xs.to_vec()), needs))
    }

    /// Concatenates along the last axis: vectors end to end, or matrices with
    /// equal row counts side by side.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, NumericsError> {
        let Some(&first) = xs.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let shapes: Vec<Vec<usize>> = xs.iter().map(|&x| self.shape(x).to_vec()).collect();
        let rows = match shapes[0].as_slice() {
            [_] => None,
            [n, _] => Some(*n),
            s => return Err(shape_err("concat", format!("unsupported rank {s:?}"))),
        };
        let ok = shapes.iter().all(|s| match rows {
            None => s.len() == 1,
            Some(n) => s.len() == 2 && s[0] == n,
        });
        if !ok {
            return Err(shape_err("concat", format!("{shapes:?}")));
        }
        let width: usize = shapes.iter().map(|s| *s.last().expect("rank >= 1")).sum();
        let out = match rows {
            None => xs.iter().flat_map(|&x| self.data(x).iter().copied()).collect(),
            Some(n) => {
                let mut out = Vec::with_capacity(n * width);
                for i in 0..n {
                    for (&x, s) in xs.iter().zip(&shapes) {
                        out.extend_from_slice(&self.data(x)[i * s[1]..(i + 1) * s[1]]);
                    }
                }
                out
            }
        };
        let shape = match rows {
            None => vec![width],
            Some(n) => vec![n, width],
        };
        let needs = xs.iter().any(|&x| self.needs(x));
        let _ = first;
        Ok(self.push(shape, out, Op::Concat(xs.to_vec()), needs))
    }

    /// Appends zero rows to a `[t, d]` matrix until it has at least `min_rows` rows.
    pub fn pad_rows(&mut self, x: Var, min_rows: usize) -> Result<Var, NumericsError> {
        let (t, d) = match self.shape(x) {
            [t, d] => (*t, *d),
            s => return Err(shape_err("pad_rows", format!("{s:?}"))),
        };
        if t >= min_rows {
            return Ok(x);
        }
        let mut out = self.data(x).to_vec();
        out.resize(min_rows * d, 0.0);
        let needs = self.needs(x);
        Ok(self.push(vec![min_rows, d], out, Op::PadRows(x), needs))
    }

    /// Mean of a matrix over `axis` (0: over rows, giving `[d]`; 1: over columns, giving `[n]`).
    pub fn mean_over_axis(&mut self, x: Var, axis: usize) -> Result<Var, NumericsError> {
        let (n, d) = match self.shape(x) {
            [n, d] if *n > 0 && *d > 0 && axis < 2 => (*n, *d),
            s => return Err(shape_err("mean_over_axis", format!("axis {axis} of {s:?}"))),
        };
        let xd = self.data(x);
        let out: Vec<f64> = if axis == 0 {
            let mut acc = vec![0.0; d];
            for i in 0..n {
                for (a, v) in acc.iter_mut().zip(&xd[i * d..(i + 1) * d]) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / n as f64).collect()
        } else {
            (0..n).map(|i| xd[i * d..(i + 1) * d].iter().sum::<f64>() / d as f64).collect()
        };
        let shape = if axis == 0 { vec![d] } else { vec![n] };
        let needs = self.needs(x);
        Ok(self.push(shape, out, Op::Mean { x, axis }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        let needs = self.needs(x);
        self.push(Vec::new(), vec![s], Op::Sum(x), needs)
    }

    /// Valid 1-D convolution of `x: [t, d]` with `w: [filters, width, d]` and
    /// bias `b: [filters]`, giving `[t - width + 1, filters]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let (sx, sw, sb) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        let (t, d, f, width) = match (sx.as_slice(), sw.as_slice(), sb.as_slice()) {
            ([t, d], [f, width, d2], [f2]) if d == d2 && f == f2 && *width >= 1 && t >= width => (*t, *d, *f, *width),
            _ => return Err(shape_err("conv1d", format!("input {sx:?}, filters {sw:?}, bias {sb:?}"))),
        };
        let steps = t - width + 1;
        let (xd, wd, bd) = (self.data(x), self.data(w), self.data(b));
        let span = width * d;
        let mut out = vec![0.0; steps * f];
        for s in 0..steps {
            let window = &xd[s * d..s * d + span];
            for fi in 0..f {
                let filter = &wd[fi * span..(fi + 1) * span];
                out[s * f + fi] = bd[fi] + window.iter().zip(filter).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(vec![steps, f], out, Op::Conv1d { x, w, b }, needs))
    }

    /// Column-wise max of `[t, f]`, giving `[f]`. Ties resolve to the first row.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var, NumericsError> {
        let (t, f) = match self.shape(x) {
            [t, f] if *t > 0 => (*t, *f),
            s => return Err(shape_err("max_over_time", format!("{s:?}"))),
        };
        let xd = self.data(x);
        let mut argmax = vec![0usize; f];
        let mut out = xd[..f].to_vec();
        for s in 1..t {
            for j in 0..f {
                if xd[s * f + j] > out[j] {
                    out[j] = xd[s * f + j];
                    argmax[j] = s;
                }
            }
        }
        let needs = self.needs(x);
        Ok(self.push(vec![f], out, Op::MaxOverTime { x, argmax }, needs))
    }

    /// Softmax of a vector, or of each row of a matrix.
    pub fn softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let (rows, width) = match self.shape(x) {
            [d] if *d > 0 => (1, *d),
            [n, d] if *d > 0 => (*n, *d),
            s => return Err(shape_err("softmax", format!("{s:?}"))),
        };
        let xd = self.data(x);
        let mut out = vec![0.0; rows * width];
        for r in 0..rows {
            let src = &xd[r * width..(r + 1) * width];
            let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * width..(r + 1) * width];
            let mut total = 0.0;
            for (o, v) in dst.iter_mut().zip(src) {
                *o = (v - max).exp();
                total += *o;
            }
            dst.iter_mut().for_each(|o| *o /= total);
        }
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Softmax(x), needs))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`. Rate 0 is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(shape_err("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.data(x).len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        let out = self.data(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask }, needs))
    }

    /// Scales a vector to unit L2 norm; the zero vector maps to itself.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var, NumericsError> {
        if self.shape(x).len() != 1 {
            return Err(shape_err("l2_normalize", format!("{:?}", self.shape(x))));
        }
        let norm = self.data(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let out = if norm > 0.0 { self.data(x).iter().map(|v| v / norm).collect() } else { vec![0.0; self.data(x).len()] };
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::L2Normalize { x, norm }, needs))
    }

    /// `-Σ w(y_i) · ln p(y_i)` for positive-class probabilities `p: [n]`,
    /// with `p(1) = p_i`, `p(0) = 1 - p_i`, clamped to `[1e-12, 1 - 1e-12]`.
    pub fn weighted_nll(&mut self, p: Var, labels: &[u8], w0: f64, w1: f64) -> Result<Var, NumericsError> {
        if self.shape(p) != [labels.len()] {
            return Err(shape_err("weighted_nll", format!("probabilities {:?} vs {} labels", self.shape(p), labels.len())));
        }
        let loss = weighted_nll_value(self.data(p), labels, w0, w1);
        let needs = self.needs(p);
        Ok(self.push(Vec::new(), vec![loss], Op::WeightedNll { p, labels: labels.to_vec(), w0, w1 }, needs))
    }

    /// Which side of every kink the recorded values sit on: ReLU input
    /// signs, max-over-time winners and probability clamps. Two evaluations
    /// with equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.data(*x).iter().map(|&v| usize::from(v > 0.0))),
                Op::MaxOverTime { argmax, .. } => out.extend_from_slice(argmax),
                Op::WeightedNll { p, .. } => {
                    out.extend(self.data(*p).iter().map(|&v| usize::from(v < PROB_CLAMP) + 2 * usize::from(v > 1.0 - PROB_CLAMP)))
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every
    /// parameter that requires one and influenced the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.data(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut out = Gradients::empty(self.store.len());
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                if self.nodes[v.0].needs_grad {
                    let len = numel(&self.nodes[v.0].shape);
                    f(grads[v.0].get_or_insert_with(|| vec![0.0; len]));
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let slot = out.slot(*id, g.len());
                    slot.iter_mut().zip(&g).for_each(|(s, x)| *s += x);
                }
                Op::Lookup { param, rows } => {
                    let d = node.shape[1];
                    let len = self.store.get(*param).numel();
                    let slot = out.slot(*param, len);
                    for (r, row) in rows.iter().enumerate() {
                        if let Some(row) = row {
                            for (s, x) in slot[row * d..(row + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                                *s += x;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
                    let (m, k, n) = match (sa.as_slice(), sb.as_slice()) {
                        ([k], [_, n]) => (1, *k, *n),
                        ([m, k], [_, n]) => (*m, *k, *n),
                        ([m, k], [_]) => (*m, *k, 1),
                        _ => unreachable!("validated in forward"),
                    };
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    acc(*a, &mut |ga| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                ga[i * k + p] += grow.iter().zip(&bd[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    });
                    acc(*b, &mut |gb| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let x = ad[i * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += x * y;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |ga| ga.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                    acc(*b, &mut |gb| {
                        let n = gb.len();
                        for (i, x) in g.iter().enumerate() {
                            gb[i % n] += x;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    acc(*a, &mut |ga| {
                        for ((s, x), y) in ga.iter_mut().zip(&g).zip(bd) {
                            *s += x * y;
                        }
                    });
                    acc(*b, &mut |gb| {
                        for ((s, x), y) in gb.iter_mut().zip(&g).zip(ad) {
                            *s += x * y;
                        }
                    });
                }
                Op::Scale(x, k) => acc(*x, &mut |gx| gx.iter_mut().zip(&g).for_each(|(s, v)| *s += v * k)),
                Op::Tanh(x) => acc(*x, &mut |gx| {
                    for ((s, v), y) in gx.iter_mut().zip(&g).zip(&node.data) {
                        *s += v * (1.0 - y * y);
                    }
                }),
                Op::Sigmoid(x) => acc(*x, &mut |gx| {
                    for ((s, v), y) in gx.iter_mut().zip(&g).zip(&node.data) {
                        *s += v * y * (1.0 - y);
                    }
                }),
                Op::Relu(x) => acc(*x, &mut |gx| {
                    for ((s, v), y) in gx.iter_mut().zip(&g).zip(&node.data) {
                        if *y > 0.0 {
                            *s += v;
                        }
                    }
                }),
                Op::Exp(x) => acc(*x, &mut |gx| {
                    for ((s, v), y) in gx.iter_mut().zip(&g).zip(&node.data) {
                        *s += v * y;
                    }
                }),
                Op::Slice { x, start } => acc(*x, &mut |gx| {
                    for (s, v) in gx[*start..*start + g.len()].iter_mut().zip(&g) {
                        *s += v;
                    }
                }),
                Op::Row { x, row } => acc(*x, &mut |gx| {
                    let d = g.len();
                    for (s, v) in gx[row * d..(row + 1) * d].iter_mut().zip(&g) {
                        *s += v;
                    }
                }),
                Op::Column { x, col } => acc(*x, &mut |gx| {
                    let m = gx.len() / g.len();
                    for (i, v) in g.iter().enumerate() {
                        gx[i * m + col] += v;
                    }
                }),
                Op::Stack(xs) => {
                    let d = node.shape[1];
                    for (r, x) in xs.iter().enumerate() {
                        acc(*x, &mut |gx| {
                            for (s, v) in gx.iter_mut().zip(&g[r * d..(r + 1) * d]) {
                                *s += v;
                            }
                        });
                    }
                }
                Op::Concat(xs) => {
                    let width = *node.shape.last().expect("rank >= 1");
                    let rows = if node.shape.len() == 2 { node.shape[0] } else { 1 };
                    let mut offset = 0;
                    for x in xs {
                        let w = *self.nodes[x.0].shape.last().expect("rank >= 1");
                        acc(*x, &mut |gx| {
                            for r in 0..rows {
                                for (s, v) in gx[r * w..(r + 1) * w].iter_mut().zip(&g[r * width + offset..r * width + offset + w]) {
                                    *s += v;
                                }
                            }
                        });
                        offset += w;
                    }
                }
                Op::PadRows(x) => acc(*x, &mut |gx| {
                    let n = gx.len();
                    gx.iter_mut().zip(&g[..n]).for_each(|(s, v)| *s += v);
                }),
                Op::Mean { x, axis } => {
                    let (n, d) = (self.nodes[x.0].shape[0], self.nodes[x.0].shape[1]);
                    acc(*x, &mut |gx| {
                        for i in 0..n {
                            for j in 0..d {
                                gx[i * d + j] += if *axis == 0 { g[j] / n as f64 } else { g[i] / d as f64 };
                            }
                        }
                    });
                }
                Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|s| *s += g[0])),
                Op::Conv1d { x, w, b } => {
                    let d = self.nodes[x.0].shape[1];
                    let (f, width) = (self.nodes[w.0].shape[0], self.nodes[w.0].shape[1]);
                    let steps = node.shape[0];
                    let span = width * d;
                    let (xd, wd) = (self.data(*x), self.data(*w));
                    acc(*b, &mut |gb| {
                        for s in 0..steps {
                            for fi in 0..f {
                                gb[fi] += g[s * f + fi];
                            }
                        }
                    });
                    acc(*w, &mut |gw| {
                        for s in 0..steps {
                            let window = &xd[s * d..s * d + span];
                            for fi in 0..f {
                                let go = g[s * f + fi];
                                if go == 0.0 {
                                    continue;
                                }
                                for (o, v) in gw[fi * span..(fi + 1) * span].iter_mut().zip(window) {
                                    *o += go * v;
                                }
                            }
                        }
                    });
                    acc(*x, &mut |gx| {
                        for s in 0..steps {
                            for fi in 0..f {
                                let go = g[s * f + fi];
                                if go == 0.0 {
                                    continue;
                                }
                                for (o, v) in gx[s * d..s * d + span].iter_mut().zip(&wd[fi * span..(fi + 1) * span]) {
                                    *o += go * v;
                                }
                            }
                        }
                    });
                }
                Op::MaxOverTime { x, argmax } => acc(*x, &mut |gx| {
                    let f = g.len();
                    for (j, &s) in argmax.iter().enumerate() {
                        gx[s * f + j] += g[j];
                    }
                }),
                Op::Softmax(x) => {
                    let width = *node.shape.last().expect("rank >= 1");
                    acc(*x, &mut |gx| {
                        for r in 0..g.len() / width {
                            let y = &node.data[r * width..(r + 1) * width];
                            let gr = &g[r * width..(r + 1) * width];
                            let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                            for j in 0..width {
                                gx[r * width + j] += y[j] * (gr[j] - dot);
                            }
                        }
                    });
                }
                Op::Dropout { x, mask } => acc(*x, &mut |gx| {
                    for ((s, v), m) in gx.iter_mut().zip(&g).zip(mask) {
                        *s += v * m;
                    }
                }),
                Op::L2Normalize { x, norm } => {
                    if *norm > 0.0 {
                        let y = &node.data;
                        let dot: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                        acc(*x, &mut |gx| {
                            for j in 0..gx.len() {
                                gx[j] += (g[j] - y[j] * dot) / norm;
                            }
                        });
                    }
                }
                Op::WeightedNll { p, labels, w0, w1 } => {
                    let pd = self.data(*p);
                    acc(*p, &mut |gp| {
                        for ((s, &pi), &y) in gp.iter_mut().zip(pd).zip(labels) {
                            let (q, w, sign) = if y == 1 { (pi, *w1, -1.0) } else { (1.0 - pi, *w0, 1.0) };
                            if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&q) {
                                *s += g[0] * sign * w / q;
                            }
                        }
                    });
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn weighted_nll_value(p: &[f64], labels: &[u8], w0: f64, w1: f64) -> f64 {
    -p.iter()
        .zip(labels)
        .map(|(&pi, &y)| {
            let (q, w) = if y == 1 { (pi, w1) } else { (1.0 - pi, w0) };
            w * q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
        })
        .sum::<f64>()
}

/// Weights of one LSTM direction: input `[in, 4h]`, recurrent `[h, 4h]`,
/// bias `[4h]`, gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

/// One LSTM step: `i, f, o = σ(·)`, `g = tanh(·)`, `c = f⊙c' + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_cell(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, w: &LstmWeights) -> Result<(Var, Var), NumericsError> {
    let xi = tape.matmul(x, w.w_ih)?;
    let xi = tape.add(xi, w.bias)?;
    lstm_step(tape, xi, h_prev, c_prev, w.w_hh)
}

/// LSTM step from a precomputed input projection `x·W_ih + b`.
pub(crate) fn lstm_step(tape: &mut Tape, x_proj: Var, h_prev: Var, c_prev: Var, w_hh: Var) -> Result<(Var, Var), NumericsError> {
    let hidden = tape.shape(h_prev)[0];
    let hh = tape.matmul(h_prev, w_hh)?;
    let gates = tape.add(x_proj, hh)?;
    let i = tape.slice(gates, 0, hidden)?;
    let f = tape.slice(gates, hidden, hidden)?;
    let g = tape.slice(gates, 2 * hidden, hidden)?;
    let o = tape.slice(gates, 3 * hidden, hidden)?;
    let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Runs an LSTM over the rows of `xs: [n, in]`, forwards or reversed.
/// Returns the hidden state after each row, in row order, and the final `(h, c)`.
pub fn lstm_sequence(
    tape: &mut Tape,
    xs: Var,
    h0: Var,
    c0: Var,
    w: &LstmWeights,
    reverse: bool,
) -> Result<(Vec<Var>, Var, Var), NumericsError> {
    let n = match tape.shape(xs) {
        [n, _] => *n,
        s => return Err(shape_err("lstm_sequence", format!("inputs must be [n, in], got {s:?}"))),
    };
    let proj = tape.matmul(xs, w.w_ih)?;
    let proj = tape.add(proj, w.bias)?;
    let mut states = vec![h0; n];
    let (mut h, mut c) = (h0, c0);
    let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..n).rev()) } else { Box::new(0..n) };
    for t in order {
        let xt = tape.row(proj, t)?;
        (h, c) = lstm_step(tape, xt, h, c, w.w_hh)?;
        states[t] = h;
    }
    Ok((states, h, c))
}
