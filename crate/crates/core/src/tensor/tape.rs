use super::Tensor;
use crate::error::{BianError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Elu(Var),
    LeakyRelu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    RowSoftmax(Var),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<Vec<usize>>),
    PairDot { q: Var, k: Var, dst: Vec<usize>, src: Vec<usize>, scale: f64 },
    SegmentSoftmax { scores: Var, offsets: Vec<usize> },
    PairAggregate { weights: Var, values: Var, src: Vec<usize>, dst: Vec<usize> },
    SelectCol(Var, usize),
    MulCol(Var, Var),
    RowDot(Var, Var),
    Sum(Var),
    Mean(Var),
    SinCos { w: Var, times: Vec<f64> },
    FreqRotate { phi: Var, coeffs: Var },
    BceWithLogits { logits: Var, targets: Vec<f64>, weights: Vec<f64>, denom: f64 },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Output of [`Tape::row_softmax`].
#[derive(Debug, Clone)]
pub struct Softmax {
    pub out: Var,
    /// Rows whose mask excluded every entry; these rows are all zero.
    pub degenerate_rows: Vec<usize>,
}

/// Record of a forward computation, replayed in reverse by [`Tape::backward`].
///
/// A tape is confined to a single thread; independent batches use
/// independent tapes.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A learnable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(BianError::shape("matmul", va.shape(), vb.shape()));
        }
        let mut out = Tensor::zeros(va.rows(), vb.cols());
        Tensor::matmul_into(va, vb, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(BianError::shape("add", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1×n` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(BianError::shape("add_row", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(BianError::shape("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.rows(), va.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x * s).collect();
        let out = Tensor::new(va.rows(), va.cols(), data).expect("shape preserved");
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(va.rows(), va.cols(), data).expect("shape preserved");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.map(a, elu, Op::Elu(a))
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { LEAKY_RELU_SLOPE * x }, Op::LeakyRelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Stacks operands along the feature axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(BianError::Config("concat_cols of nothing".into())),
        };
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(BianError::shape("concat_cols", self.value(parts[0]).shape(), self.value(p).shape()));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row-wise softmax with optional mask (`true` = kept). Masked entries are
    /// exactly zero; a row with no kept entry comes back all-zero and is
    /// reported in [`Softmax::degenerate_rows`].
    pub fn row_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Softmax> {
        let vx = self.value(x);
        if let Some(m) = mask {
            if m.len() != vx.len() {
                return Err(BianError::shape("row_softmax mask", vx.shape(), (m.len(), 1)));
            }
        }
        let (rows, cols) = vx.shape();
        let mut out = Tensor::zeros(rows, cols);
        let mut degenerate = Vec::new();
        for r in 0..rows {
            let keep = |c: usize| mask.is_none_or(|m| m[r * cols + c]);
            let row = vx.row(r);
            let mx = (0..cols).filter(|&c| keep(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                degenerate.push(r);
                continue;
            }
            let orow = out.row_mut(r);
            let mut z = 0.0;
            for c in 0..cols {
                if keep(c) {
                    let e = (row[c] - mx).exp();
                    orow[c] = e;
                    z += e;
                }
            }
            for v in orow.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(x);
        let out = self.push(out, Op::RowSoftmax(x), rg);
        Ok(Softmax { out, degenerate_rows: degenerate })
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let mut out = Tensor::zeros(idx.len(), vx.cols());
        for (r, &i) in idx.iter().enumerate() {
            if i >= vx.rows() {
                return Err(BianError::shape("gather_rows", vx.shape(), (i, 0)));
            }
            out.row_mut(r).copy_from_slice(vx.row(i));
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec()), rg))
    }

    /// Row `g` of the output is the mean of the rows of `x` listed in
    /// `groups[g]`; an empty group yields a zero row.
    pub fn segment_mean(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&i) = groups.iter().flatten().find(|&&i| i >= vx.rows()) {
            return Err(BianError::shape("segment_mean", vx.shape(), (i, 0)));
        }
        let mut out = Tensor::zeros(groups.len(), vx.cols());
        let mut terms = Vec::new();
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let len = members.len() as f64;
            for c in 0..vx.cols() {
                terms.clear();
                terms.extend(members.iter().map(|&i| vx.get(i, c)));
                out.set(g, c, canonical_sum(&mut terms) / len);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::SegmentMean(x, groups.to_vec()), rg))
    }

    /// `scores[p] = scale · q[dst[p]] · k[src[p]]`, a `P×1` column.
    pub fn pair_dot(&mut self, q: Var, k: Var, dst: &[usize], src: &[usize], scale: f64) -> Result<Var> {
        let (vq, vk) = (self.value(q), self.value(k));
        if vq.cols() != vk.cols() || dst.len() != src.len() {
            return Err(BianError::shape("pair_dot", vq.shape(), vk.shape()));
        }
        let mut out = Vec::with_capacity(dst.len());
        for (&i, &j) in dst.iter().zip(src) {
            if i >= vq.rows() || j >= vk.rows() {
                return Err(BianError::shape("pair_dot index", vq.shape(), (i, j)));
            }
            out.push(scale * dot(vq.row(i), vk.row(j)));
        }
        let rg = self.rg(q) || self.rg(k);
        Ok(self.push(Tensor::column(out), Op::PairDot { q, k, dst: dst.to_vec(), src: src.to_vec(), scale }, rg))
    }

    /// Softmax over contiguous segments of a `P×1` score column.
    /// Segment `s` covers entries `offsets[s]..offsets[s + 1]`.
    pub fn segment_softmax(&mut self, scores: Var, offsets: &[usize]) -> Result<Var> {
        let vs = self.value(scores);
        if vs.cols() != 1 || offsets.last().copied().unwrap_or(0) != vs.rows() {
            return Err(BianError::shape("segment_softmax", vs.shape(), (offsets.last().copied().unwrap_or(0), 1)));
        }
        let s = vs.data();
        let mut out = vec![0.0; s.len()];
        let mut terms = Vec::new();
        for w in offsets.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == b {
                continue;
            }
            let mx = s[a..b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for p in a..b {
                out[p] = (s[p] - mx).exp();
            }
            terms.clear();
            terms.extend_from_slice(&out[a..b]);
            let z = canonical_sum(&mut terms);
            for o in &mut out[a..b] {
                *o /= z;
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(Tensor::column(out), Op::SegmentSoftmax { scores, offsets: offsets.to_vec() }, rg))
    }

    /// `out[dst[p]] += weights[p] · values[src[p]]` over all pairs, with
    /// `n_out` output rows.
    pub fn pair_aggregate(
        &mut self,
        weights: Var,
        values: Var,
        src: &[usize],
        dst: &[usize],
        n_out: usize,
    ) -> Result<Var> {
        let (vw, vv) = (self.value(weights), self.value(values));
        if vw.cols() != 1 || vw.rows() != src.len() || src.len() != dst.len() {
            return Err(BianError::shape("pair_aggregate", vw.shape(), (src.len(), 1)));
        }
        if let Some(p) = (0..src.len()).find(|&p| dst[p] >= n_out || src[p] >= vv.rows()) {
            return Err(BianError::shape("pair_aggregate index", vv.shape(), (dst[p], src[p])));
        }
        let mut by_dst: Vec<Vec<usize>> = vec![Vec::new(); n_out];
        for (p, &i) in dst.iter().enumerate() {
            by_dst[i].push(p);
        }
        let mut out = Tensor::zeros(n_out, vv.cols());
        let mut terms = Vec::new();
        for (i, pairs) in by_dst.iter().enumerate() {
            if pairs.is_empty() {
                continue;
            }
            for c in 0..vv.cols() {
                terms.clear();
                terms.extend(pairs.iter().map(|&p| vw.data()[p] * vv.get(src[p], c)));
                out.set(i, c, canonical_sum(&mut terms));
            }
        }
        let rg = self.rg(weights) || self.rg(values);
        Ok(self.push(out, Op::PairAggregate { weights, values, src: src.to_vec(), dst: dst.to_vec() }, rg))
    }

    pub fn select_col(&mut self, x: Var, c: usize) -> Result<Var> {
        let vx = self.value(x);
        if c >= vx.cols() {
            return Err(BianError::shape("select_col", vx.shape(), (0, c)));
        }
        let out = Tensor::column((0..vx.rows()).map(|r| vx.get(r, c)).collect());
        let rg = self.rg(x);
        Ok(self.push(out, Op::SelectCol(x, c), rg))
    }

    /// Scales row `i` of `x` by `col[i]`.
    pub fn mul_col(&mut self, col: Var, x: Var) -> Result<Var> {
        let (vc, vx) = (self.value(col), self.value(x));
        if vc.cols() != 1 || vc.rows() != vx.rows() {
            return Err(BianError::shape("mul_col", vc.shape(), vx.shape()));
        }
        let mut out = vx.clone();
        for r in 0..out.rows() {
            let s = vc.data()[r];
            for v in out.row_mut(r) {
                *v *= s;
            }
        }
        let rg = self.rg(col) || self.rg(x);
        Ok(self.push(out, Op::MulCol(col, x), rg))
    }

    /// Per-row inner product, an `n×1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(BianError::shape("row_dot", va.shape(), vb.shape()));
        }
        let out = Tensor::column((0..va.rows()).map(|r| dot(va.row(r), vb.row(r))).collect());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::RowDot(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s = vx.data().iter().sum::<f64>() / vx.len().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Sinusoidal encoding of `times` at the frequencies held in the `1×d`
    /// row `w`: row `p` is `√(1/d)·[cos(w₁t), sin(w₁t), …, cos(w_d t), sin(w_d t)]`.
    pub fn sincos_encode(&mut self, w: Var, times: &[f64]) -> Result<Var> {
        let vw = self.value(w);
        if vw.rows() != 1 || vw.cols() == 0 {
            return Err(BianError::shape("sincos_encode", vw.shape(), (1, 0)));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(BianError::NonFinite(format!("timestamp {t}")));
        }
        let d = vw.cols();
        let amp = (1.0 / d as f64).sqrt();
        let mut out = Tensor::zeros(times.len(), 2 * d);
        for (p, &t) in times.iter().enumerate() {
            let row = out.row_mut(p);
            for (k, &wk) in vw.data().iter().enumerate() {
                let (s, c) = (wk * t).sin_cos();
                row[2 * k] = amp * c;
                row[2 * k + 1] = amp * s;
            }
        }
        let rg = self.rg(w);
        Ok(self.push(out, Op::SinCos { w, times: times.to_vec() }, rg))
    }

    /// Applies a 2×2 rotation-scaling block per frequency pair of columns:
    /// `(c, s) ↦ (a·c − b·s, b·c + a·s)` with `(a, b) = coeffs[k]`.
    pub fn freq_rotate(&mut self, phi: Var, coeffs: Var) -> Result<Var> {
        let (vp, vc) = (self.value(phi), self.value(coeffs));
        if vc.cols() != 2 || vp.cols() != 2 * vc.rows() {
            return Err(BianError::shape("freq_rotate", vp.shape(), vc.shape()));
        }
        let mut out = Tensor::zeros(vp.rows(), vp.cols());
        for r in 0..vp.rows() {
            let src = vp.row(r);
            let dst = out.row_mut(r);
            for k in 0..vc.rows() {
                let (a, b) = (vc.get(k, 0), vc.get(k, 1));
                let (c, s) = (src[2 * k], src[2 * k + 1]);
                dst[2 * k] = a * c - b * s;
                dst[2 * k + 1] = b * c + a * s;
            }
        }
        let rg = self.rg(phi) || self.rg(coeffs);
        Ok(self.push(out, Op::FreqRotate { phi, coeffs }, rg))
    }

    /// Weighted binary cross-entropy on logits:
    /// `Σ_i w_i·[y_i·softplus(−z_i) + (1−y_i)·softplus(z_i)] / denom`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64], denom: f64) -> Result<Var> {
        let vl = self.value(logits);
        if vl.cols() != 1 || vl.rows() != targets.len() || targets.len() != weights.len() {
            return Err(BianError::shape("bce_with_logits", vl.shape(), (targets.len(), 1)));
        }
        if denom.is_nan() || denom <= 0.0 {
            return Err(BianError::Training("empty batch".into()));
        }
        let mut total = 0.0;
        for ((&z, &y), &w) in vl.data().iter().zip(targets).zip(weights) {
            if w != 0.0 {
                total += w * (y * softplus(-z) + (1.0 - y) * softplus(z));
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / denom),
            Op::BceWithLogits { logits, targets: targets.to_vec(), weights: weights.to_vec(), denom },
            rg,
        ))
    }

    /// Reverse pass from a `1×1` output. Gradients accumulate into every
    /// node that requires them; calling twice without a fresh tape sums.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(BianError::shape("backward (scalar output)", shape, (1, 1)));
        }
        self.nodes[output.0].grad = Some(Tensor::scalar(1.0));
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(idx, &g);
            self.nodes[idx].grad = Some(g);
            for (v, dg) in contributions {
                let node = &mut self.nodes[v.0];
                if !node.requires_grad {
                    continue;
                }
                match node.grad.as_mut() {
                    Some(acc) => acc.add_assign(&dg),
                    None => node.grad = Some(dg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if wants(a) {
                    let bt = val(b).transpose();
                    let mut da = Tensor::zeros(val(a).rows(), val(a).cols());
                    Tensor::matmul_into(g, &bt, &mut da);
                    out.push((a, da));
                }
                if wants(b) {
                    let at = val(a).transpose();
                    let mut db = Tensor::zeros(val(b).rows(), val(b).cols());
                    Tensor::matmul_into(&at, g, &mut db);
                    out.push((b, db));
                }
            }
            &Op::Add(a, b) => {
                out.push((a, g.clone()));
                out.push((b, g.clone()));
            }
            &Op::AddRow(a, bias) => {
                out.push((a, g.clone()));
                if wants(bias) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    out.push((bias, db));
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    out.push((a, zip_map(g, val(b), |x, y| x * y)));
                }
                if wants(b) {
                    out.push((b, zip_map(g, val(a), |x, y| x * y)));
                }
            }
            &Op::Scale(a, s) => {
                out.push((a, map_t(g, |x| x * s)));
            }
            &Op::Elu(a) => {
                out.push((a, zip_map(g, val(a), |d, x| if x > 0.0 { d } else { d * x.exp() })));
            }
            &Op::LeakyRelu(a) => {
                out.push((a, zip_map(g, val(a), |d, x| if x > 0.0 { d } else { d * LEAKY_RELU_SLOPE })));
            }
            &Op::Sigmoid(a) => {
                out.push((a, zip_map(g, &node.value, |d, y| d * y * (1.0 - y))));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if wants(p) {
                        let mut dp = Tensor::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        out.push((p, dp));
                    }
                    off += c;
                }
            }
            &Op::RowSoftmax(x) => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = dot(yr, gr);
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = yr[c] * (gr[c] - inner);
                    }
                }
                out.push((x, dx));
            }
            Op::GatherRows(x, idx) => {
                let vx = val(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                out.push((*x, dx));
            }
            Op::SegmentMean(x, groups) => {
                let vx = val(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (gi, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / members.len() as f64;
                    for &i in members {
                        for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(gi)) {
                            *d += v * inv;
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::PairDot { q, k, dst, src, scale } => {
                let (vq, vk) = (val(*q), val(*k));
                let gd = g.data();
                if wants(*q) {
                    let mut dq = Tensor::zeros(vq.rows(), vq.cols());
                    for p in 0..dst.len() {
                        let s = scale * gd[p];
                        for (d, kv) in dq.row_mut(dst[p]).iter_mut().zip(vk.row(src[p])) {
                            *d += s * kv;
                        }
                    }
                    out.push((*q, dq));
                }
                if wants(*k) {
                    let mut dk = Tensor::zeros(vk.rows(), vk.cols());
                    for p in 0..dst.len() {
                        let s = scale * gd[p];
                        for (d, qv) in dk.row_mut(src[p]).iter_mut().zip(vq.row(dst[p])) {
                            *d += s * qv;
                        }
                    }
                    out.push((*k, dk));
                }
            }
            Op::SegmentSoftmax { scores, offsets } => {
                let y = node.value.data();
                let gd = g.data();
                let mut dx = vec![0.0; y.len()];
                for w in offsets.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let inner: f64 = (a..b).map(|p| y[p] * gd[p]).sum();
                    for p in a..b {
                        dx[p] = y[p] * (gd[p] - inner);
                    }
                }
                out.push((*scores, Tensor::column(dx)));
            }
            Op::PairAggregate { weights, values, src, dst } => {
                let (vw, vv) = (val(*weights), val(*values));
                if wants(*weights) {
                    let dw = (0..src.len()).map(|p| dot(g.row(dst[p]), vv.row(src[p]))).collect();
                    out.push((*weights, Tensor::column(dw)));
                }
                if wants(*values) {
                    let mut dv = Tensor::zeros(vv.rows(), vv.cols());
                    for p in 0..src.len() {
                        let w = vw.data()[p];
                        for (d, x) in dv.row_mut(src[p]).iter_mut().zip(g.row(dst[p])) {
                            *d += w * x;
                        }
                    }
                    out.push((*values, dv));
                }
            }
            &Op::SelectCol(x, c) => {
                let vx = val(x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for r in 0..vx.rows() {
                    dx.set(r, c, g.data()[r]);
                }
                out.push((x, dx));
            }
            &Op::MulCol(col, x) => {
                let (vc, vx) = (val(col), val(x));
                if wants(col) {
                    let dc = (0..vx.rows()).map(|r| dot(g.row(r), vx.row(r))).collect();
                    out.push((col, Tensor::column(dc)));
                }
                if wants(x) {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        let s = vc.data()[r];
                        for v in dx.row_mut(r) {
                            *v *= s;
                        }
                    }
                    out.push((x, dx));
                }
            }
            &Op::RowDot(a, b) => {
                let (va, vb) = (val(a), val(b));
                let scale_rows = |t: &Tensor| {
                    let mut d = t.clone();
                    for r in 0..d.rows() {
                        let s = g.data()[r];
                        for v in d.row_mut(r) {
                            *v *= s;
                        }
                    }
                    d
                };
                if wants(a) {
                    out.push((a, scale_rows(vb)));
                }
                if wants(b) {
                    out.push((b, scale_rows(va)));
                }
            }
            &Op::Sum(x) => {
                let (r, c) = val(x).shape();
                out.push((x, Tensor::filled(r, c, g.data()[0])));
            }
            &Op::Mean(x) => {
                let (r, c) = val(x).shape();
                out.push((x, Tensor::filled(r, c, g.data()[0] / (r * c).max(1) as f64)));
            }
            Op::SinCos { w, times } => {
                let vw = val(*w);
                let d = vw.cols();
                let amp = (1.0 / d as f64).sqrt();
                let mut dw = Tensor::zeros(1, d);
                for (p, &t) in times.iter().enumerate() {
                    let gr = g.row(p);
                    for k in 0..d {
                        let (s, c) = (vw.data()[k] * t).sin_cos();
                        dw.data_mut()[k] += amp * t * (-s * gr[2 * k] + c * gr[2 * k + 1]);
                    }
                }
                out.push((*w, dw));
            }
            &Op::FreqRotate { phi, coeffs } => {
                let (vp, vc) = (val(phi), val(coeffs));
                let d = vc.rows();
                if wants(phi) {
                    let mut dp = Tensor::zeros(vp.rows(), vp.cols());
                    for r in 0..vp.rows() {
                        let gr = g.row(r);
                        let row = dp.row_mut(r);
                        for k in 0..d {
                            let (a, b) = (vc.get(k, 0), vc.get(k, 1));
                            let (g0, g1) = (gr[2 * k], gr[2 * k + 1]);
                            row[2 * k] = a * g0 + b * g1;
                            row[2 * k + 1] = -b * g0 + a * g1;
                        }
                    }
                    out.push((phi, dp));
                }
                if wants(coeffs) {
                    let mut dc = Tensor::zeros(d, 2);
                    for r in 0..vp.rows() {
                        let (gr, pr) = (g.row(r), vp.row(r));
                        for k in 0..d {
                            let (c, s) = (pr[2 * k], pr[2 * k + 1]);
                            let (g0, g1) = (gr[2 * k], gr[2 * k + 1]);
                            dc.data_mut()[2 * k] += c * g0 + s * g1;
                            dc.data_mut()[2 * k + 1] += -s * g0 + c * g1;
                        }
                    }
                    out.push((coeffs, dc));
                }
            }
            Op::BceWithLogits { logits, targets, weights, denom } => {
                let vl = val(*logits);
                let scale = g.data()[0] / denom;
                let dl = vl
                    .data()
                    .iter()
                    .zip(targets)
                    .zip(weights)
                    .map(|((&z, &y), &w)| {
                        if w == 0.0 {
                            0.0
                        } else {
                            let p = sigmoid(z);
                            scale * w * (y * (p - 1.0) + (1.0 - y) * p)
                        }
                    })
                    .collect();
                out.push((*logits, Tensor::column(dl)));
            }
        }
        out
    }
}

/// Sums `terms` in ascending order, so the result depends only on the
/// multiset of values. Neighborhood reductions use this to make layer
/// outputs exactly independent of how vertices are numbered.
pub(crate) fn canonical_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn map_t(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::new(t.rows(), t.cols(), data).expect("shape preserved")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("shape preserved")
}
