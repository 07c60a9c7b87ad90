//! Layered affine + ReLU networks with sparse weights.
//!
//! A layer is `x -> act(W x + b)` with `act` either ReLU or the identity.
//! Identity layers in the middle are linear bottlenecks: folding one into its
//! successor gives the same function and the same ReLU layers, so width and
//! depth count ReLU layers only. They exist because folding a one-dimensional
//! bottleneck between two wide layers would create a dense block.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparse {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Sparse {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Builds from per-row `(column, value)` lists; zeros are dropped and duplicates summed.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in rows {
            scratch.clear();
            scratch.extend_from_slice(r);
            scratch.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                assert!(c < cols, "column {c} out of range {cols}");
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    col.push(c as u32);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Self { rows: rows.len(), cols, row_ptr, col, val }
    }

    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols);
        let r: Vec<Vec<(usize, f64)>> =
            (0..rows).map(|i| (0..cols).map(|j| (j, data[i * cols + j])).filter(|e| e.1 != 0.0).collect()).collect();
        Self::from_rows(cols, &r)
    }

    pub fn identity(n: usize) -> Self {
        let r: Vec<Vec<(usize, f64)>> = (0..n).map(|i| alloc::vec![(i, 1.0)]).collect();
        Self::from_rows(n, &r)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col[a..b].iter().zip(&self.val[a..b]).map(|(c, v)| (*c as usize, *v))
    }

    pub fn row_vec(&self, i: usize) -> Vec<(usize, f64)> {
        self.row(i).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for (c, v) in self.row(i) {
                out[i * self.cols + c] = v;
            }
        }
        out
    }

    /// Nonzero entries as `(row, column, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            for (c, v) in self.row(i) {
                out.push((i, c, v));
            }
        }
        out
    }

    #[inline]
    fn mul_add(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            let mut acc = bias[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            out[i] = acc;
        }
    }

    /// Upper bound on `nnz(self * rhs)`.
    fn product_nnz_bound(&self, rhs: &Sparse) -> usize {
        self.col.iter().map(|&c| rhs.row_ptr[c as usize + 1] - rhs.row_ptr[c as usize]).sum()
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Sparse) -> Sparse {
        assert_eq!(self.cols, rhs.rows);
        let mut acc = alloc::vec![0.0; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = alloc::vec![false; rhs.cols];
        let mut rows = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            for (c, v) in self.row(i) {
                for (c2, v2) in rhs.row(c) {
                    if !mark[c2] {
                        mark[c2] = true;
                        touched.push(c2);
                    }
                    acc[c2] += v * v2;
                }
            }
            touched.sort_unstable();
            let r: Vec<(usize, f64)> = touched.iter().map(|&c| (c, acc[c])).collect();
            for &c in &touched {
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
            rows.push(r);
        }
        Sparse::from_rows(rhs.cols, &rows)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.rows];
        self.mul_add(x, &alloc::vec![0.0; self.rows], &mut out);
        out
    }

    fn block_diag(blocks: &[&Sparse]) -> Sparse {
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut rows = Vec::new();
        let mut off = 0;
        for b in blocks {
            for i in 0..b.rows {
                rows.push(b.row(i).map(|(c, v)| (c + off, v)).collect());
            }
            off += b.cols;
        }
        Sparse::from_rows(cols, &rows)
    }

    /// Rows stacked, columns shared.
    fn vstack_all(blocks: &[&Sparse]) -> Sparse {
        let cols = blocks[0].cols;
        let mut rows = Vec::new();
        for b in blocks {
            assert_eq!(b.cols, cols);
            for i in 0..b.rows {
                rows.push(b.row_vec(i));
            }
        }
        Sparse::from_rows(cols, &rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Sparse,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl Layer {
    pub fn new(weights: Sparse, bias: Vec<f64>, relu: bool) -> Self {
        assert_eq!(weights.rows(), bias.len());
        Self { weights, bias, relu }
    }

    /// Layer from `(row entries, bias)` pairs.
    pub fn from_rows(cols: usize, rows: Vec<(Vec<(usize, f64)>, f64)>, relu: bool) -> Self {
        let (entries, bias): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Self::new(Sparse::from_rows(cols, &entries), bias, relu)
    }

    fn passthrough(n: usize) -> Self {
        Self::new(Sparse::identity(n), alloc::vec![0.0; n], false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl ReluNetwork {
    /// Layers must chain, and the last one must be an identity (output) layer.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layers"));
        }
        let mut dim = input_dim;
        for l in &layers {
            if l.weights.cols() != dim {
                return Err(Error::Dimension { expected: dim, found: l.weights.cols() });
            }
            dim = l.weights.rows();
        }
        if layers.last().map(|l| l.relu) == Some(true) {
            return Err(Error::Construction("the output layer must be affine".into()));
        }
        Ok(Self { input_dim, layers })
    }

    pub(crate) fn from_parts(input_dim: usize, layers: Vec<Layer>) -> Self {
        Self::new(input_dim, layers).expect("internally built network chains")
    }

    /// `x -> A x + b` with no hidden layers.
    pub fn affine(rows: &[Vec<(usize, f64)>], bias: Vec<f64>, input_dim: usize) -> Self {
        Self::from_parts(input_dim, alloc::vec![Layer::new(Sparse::from_rows(input_dim, rows), bias, false)])
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_parts(dim, alloc::vec![Layer::passthrough(dim)])
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.rows()).unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Largest ReLU layer.
    pub fn width(&self) -> usize {
        self.layers.iter().filter(|l| l.relu).map(|l| l.weights.rows()).max().unwrap_or(0)
    }

    /// Number of ReLU layers.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.relu).count()
    }

    /// Nonzero weights plus nonzero biases.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.nnz() + l.bias.iter().filter(|b| **b != 0.0).count()).sum()
    }

    pub fn check_cap(&self, cap: usize) -> Result<()> {
        let params = self.param_count();
        if params > cap {
            Err(Error::ParamCap { params, cap })
        } else {
            Ok(())
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        self.eval_with(x, &mut scratch).to_vec()
    }

    /// Evaluation reusing buffers; the returned slice lives in `scratch`.
    pub fn eval_with<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        assert_eq!(x.len(), self.input_dim, "input dimension");
        let Scratch { a, b } = scratch;
        a.clear();
        a.extend_from_slice(x);
        for l in &self.layers {
            b.resize(l.weights.rows(), 0.0);
            l.weights.mul_add(a, &l.bias, b);
            if l.relu {
                for v in b.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            core::mem::swap(a, b);
        }
        a
    }

    /// `f(g(x))`.
    pub fn compose(f: &ReluNetwork, g: &ReluNetwork) -> Result<ReluNetwork> {
        if f.input_dim != g.output_dim() {
            return Err(Error::Dimension { expected: f.input_dim, found: g.output_dim() });
        }
        let mut layers = g.layers.clone();
        layers.extend(f.layers.iter().cloned());
        let mut net = ReluNetwork { input_dim: g.input_dim, layers };
        net.simplify();
        Ok(net)
    }

    /// `f(A x + b)`.
    pub fn affine_wrap(rows: &[Vec<(usize, f64)>], bias: Vec<f64>, input_dim: usize, f: &ReluNetwork) -> Result<ReluNetwork> {
        Self::compose(f, &Self::affine(rows, bias, input_dim))
    }

    /// `A f(x) + b`.
    pub fn then_affine(f: &ReluNetwork, rows: &[Vec<(usize, f64)>], bias: Vec<f64>) -> Result<ReluNetwork> {
        Self::compose(&Self::affine(rows, bias, f.output_dim()), f)
    }

    /// `x -> (f(x), g(x))`.
    pub fn parallel(f: &ReluNetwork, g: &ReluNetwork) -> Result<ReluNetwork> {
        Self::parallel_all(&[f, g])
    }

    /// `x -> (f_1(x), ..., f_k(x))` on a shared input.
    pub fn parallel_all(nets: &[&ReluNetwork]) -> Result<ReluNetwork> {
        Self::combine(nets, true)
    }

    /// `(x_1, ..., x_k) -> (f_1(x_1), ..., f_k(x_k))` on concatenated inputs.
    pub fn stack_all(nets: &[&ReluNetwork]) -> Result<ReluNetwork> {
        Self::combine(nets, false)
    }

    fn combine(nets: &[&ReluNetwork], shared_input: bool) -> Result<ReluNetwork> {
        if nets.is_empty() {
            return Err(Error::Empty("networks"));
        }
        if shared_input {
            let d = nets[0].input_dim;
            if let Some(bad) = nets.iter().find(|n| n.input_dim != d) {
                return Err(Error::Dimension { expected: d, found: bad.input_dim });
            }
        }
        let depth = nets.iter().map(|n| n.depth()).max().unwrap_or(0);
        let padded: Vec<ReluNetwork> = nets.iter().map(|n| n.padded_to_depth(depth)).collect();
        let aligned = align(&padded);
        let count = aligned[0].len();
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let ws: Vec<&Sparse> = aligned.iter().map(|a| &a[i].weights).collect();
            let weights = if i == 0 && shared_input { Sparse::vstack_all(&ws) } else { Sparse::block_diag(&ws) };
            let bias: Vec<f64> = aligned.iter().flat_map(|a| a[i].bias.iter().copied()).collect();
            layers.push(Layer::new(weights, bias, aligned[0][i].relu));
        }
        let input_dim = if shared_input { nets[0].input_dim } else { nets.iter().map(|n| n.input_dim).sum() };
        let mut net = ReluNetwork { input_dim, layers };
        net.simplify();
        Ok(net)
    }

    /// Appends exact `ReLU(v) - ReLU(-v)` pass-through layers up to `depth` ReLU layers.
    pub fn padded_to_depth(&self, depth: usize) -> ReluNetwork {
        let extra = depth.saturating_sub(self.depth());
        if extra == 0 {
            return self.clone();
        }
        let p = self.output_dim();
        let mut layers = self.layers.clone();
        let split: Vec<Vec<(usize, f64)>> =
            (0..p).map(|i| alloc::vec![(i, 1.0)]).chain((0..p).map(|i| alloc::vec![(i, -1.0)])).collect();
        layers.push(Layer::new(Sparse::from_rows(p, &split), alloc::vec![0.0; 2 * p], true));
        for _ in 1..extra {
            layers.push(Layer::new(Sparse::identity(2 * p), alloc::vec![0.0; 2 * p], true));
        }
        let join: Vec<Vec<(usize, f64)>> = (0..p).map(|i| alloc::vec![(i, 1.0), (p + i, -1.0)]).collect();
        layers.push(Layer::new(Sparse::from_rows(2 * p, &join), alloc::vec![0.0; p], false));
        let mut net = ReluNetwork { input_dim: self.input_dim, layers };
        net.simplify();
        net
    }

    /// Folds identity layers into their successors wherever that does not add nonzeros.
    pub fn simplify(&mut self) {
        let mut i = 0;
        while i + 1 < self.layers.len() {
            if self.layers[i].relu {
                i += 1;
                continue;
            }
            let (cur, next) = (&self.layers[i], &self.layers[i + 1]);
            let bound = next.weights.product_nnz_bound(&cur.weights);
            if bound <= next.weights.nnz() + cur.weights.nnz() {
                let weights = next.weights.matmul(&cur.weights);
                let shifted = next.weights.apply(&cur.bias);
                let bias: Vec<f64> = shifted.iter().zip(&next.bias).map(|(a, b)| a + b).collect();
                let relu = next.relu;
                self.layers[i + 1] = Layer::new(weights, bias, relu);
                self.layers.remove(i);
                i = i.saturating_sub(1);
            } else {
                i += 1;
            }
        }
    }
}

/// Splits layers into segments that each end with a ReLU layer, plus a final
/// affine tail, and pads every segment with identity layers so all networks
/// share one layer pattern. Inputs must have equal depth.
fn align(nets: &[ReluNetwork]) -> Vec<Vec<Layer>> {
    let segments: Vec<Vec<Vec<Layer>>> = nets
        .iter()
        .map(|n| {
            let mut segs = alloc::vec![Vec::new()];
            for l in &n.layers {
                segs.last_mut().unwrap().push(l.clone());
                if l.relu {
                    segs.push(Vec::new());
                }
            }
            segs
        })
        .collect();
    let nseg = segments[0].len();
    let mut out: Vec<Vec<Layer>> = alloc::vec![Vec::new(); nets.len()];
    for k in 0..nseg {
        let len = segments.iter().map(|s| s[k].len()).max().unwrap();
        for (j, segs) in segments.iter().enumerate() {
            let seg = &segs[k];
            let dim_in = out[j].last().map(|l: &Layer| l.weights.rows()).unwrap_or(nets[j].input_dim);
            for _ in seg.len()..len {
                out[j].push(Layer::passthrough(dim_in));
            }
            out[j].extend(seg.iter().cloned());
        }
    }
    out
}

/// Reusable evaluation buffers.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}
