//! Minimal reverse-mode differentiation over whole-array operations.
//!
//! A [`Graph`] records every operation as it executes the forward pass;
//! [`Graph::backward`] then walks the tape once in reverse. Operations are
//! pure given their inputs, values are stored per node, and every output is
//! checked finite so numeric blowups surface at the op that produced them
//! rather than as a NaN loss epochs later.

use super::array::{cast, matmul, transpose, Array, Scalar};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that
/// issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Broadcast add of a `(1,n)` row vector to every row of a `(m,n)` array.
    AddRow(Var, Var),
    Scale(Var, F),
    AddConst(Var, F),
    Abs(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Ln(Var),
    Clamp(Var, F, F),
    /// Elementwise product with a constant array (dropout masks).
    MulConst(Var, Array<F>),
    /// Row lookup: output row r is `table[ids[r]]`.
    Gather(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    /// Stable softmax along each row, restricted to columns where the mask
    /// is true; masked columns get exactly zero.
    MaskedSoftmaxRows(Var, Vec<bool>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        eps: F,
    },
    /// Mean over the rows where the mask is true, producing a `(1,n)` row.
    MaskedMeanRows(Var, Vec<bool>),
    /// Squared L2 distance between two same-shape arrays, as a `(1,1)` scalar.
    SqDist(Var, Var),
    /// Elementwise sum of several same-shape arrays.
    SumVars(Vec<Var>),
}

struct Node<F: Scalar> {
    value: Array<F>,
    op: Op<F>,
}

/// Gradients of one scalar output with respect to every node, indexed by
/// [`Var`]. Nodes the output does not depend on have no entry.
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Array<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Array<F>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros of the given shape when the output did
    /// not depend on it (an unused vocabulary row, for instance).
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Array<F> {
        self.grads[v.0].take().unwrap_or_else(|| Array::zeros(shape))
    }
}

pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array<F> {
        &self.nodes[v.0].value
    }

    /// Inserts an input node. Parameters and constants alike enter here;
    /// what distinguishes a parameter is only that the caller asks for its
    /// gradient afterwards.
    pub fn leaf(&mut self, value: Array<F>) -> Result<Var> {
        self.push("leaf", value, Op::Leaf)
    }

    fn push(&mut self, what: &str, value: Array<F>, op: Op<F>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{what} output")));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = transpose(self.value(a))?;
        self.push("transpose", value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip(a, b, "add", |x, y| x + y)?;
        self.push("add", value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip(a, b, "sub", |x, y| x - y)?;
        self.push("sub", value, Op::Sub(a, b))
    }

    fn zip(&self, a: Var, b: Var, what: &str, f: impl Fn(F, F) -> F) -> Result<Array<F>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "{what} on shapes {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Array::from_vec(av.shape().to_vec(), data)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let (rm, rn) = self.value(row).dims2()?;
        if rm != 1 || rn != n {
            return Err(Error::Shape(format!("add_row (1,{n}) wanted, got ({rm},{rn})")));
        }
        let mut value = self.value(a).clone();
        for i in 0..m {
            for j in 0..n {
                let r = self.value(row).data()[j];
                value.data_mut()[i * n + j] += r;
            }
        }
        self.push("add_row", value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Result<Var> {
        let value = self.map(a, |x| x * c);
        self.push("scale", value, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: F) -> Result<Var> {
        let value = self.map(a, |x| x + c);
        self.push("add_const", value, Op::AddConst(a, c))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| x.abs());
        self.push("abs", value, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| x.max(F::zero()));
        self.push("relu", value, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, gelu_value);
        self.push("gelu", value, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, sigmoid_value);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| x.ln());
        self.push("ln", value, Op::Ln(a))
    }

    pub fn clamp(&mut self, a: Var, lo: F, hi: F) -> Result<Var> {
        let value = self.map(a, |x| x.max(lo).min(hi));
        self.push("clamp", value, Op::Clamp(a, lo, hi))
    }

    pub fn mul_const(&mut self, a: Var, mask: Array<F>) -> Result<Var> {
        if mask.shape() != self.value(a).shape() {
            return Err(Error::Shape("mul_const mask shape".into()));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&x, &m)| x * m)
            .collect();
        let value = Array::from_vec(mask.shape().to_vec(), data)?;
        self.push("mul_const", value, Op::MulConst(a, mask))
    }

    fn map(&self, a: Var, f: impl Fn(F) -> F) -> Array<F> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        Array::from_vec(av.shape().to_vec(), data).expect("same shape")
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, n) = self.value(table).dims2()?;
        if ids.is_empty() {
            return Err(Error::Shape("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= rows {
                return Err(Error::Shape(format!("gather id {id} out of {rows} rows")));
            }
            data.extend_from_slice(self.value(table).row(id));
        }
        let value = Array::from_vec(vec![ids.len(), n], data)?;
        self.push("gather", value, Op::Gather(table, ids.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if len == 0 || start + len > n {
            return Err(Error::Shape(format!("slice_cols {start}..{} of {n}", start + len)));
        }
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&self.value(a).row(i)[start..start + len]);
        }
        let value = Array::from_vec(vec![m, len], data)?;
        self.push("slice_cols", value, Op::SliceCols(a, start, len))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of nothing".into()));
        }
        let (m, _) = self.value(parts[0]).dims2()?;
        let mut total = 0usize;
        for &p in parts {
            let (pm, pn) = self.value(p).dims2()?;
            if pm != m {
                return Err(Error::Shape("concat_cols row count mismatch".into()));
            }
            total += pn;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Array::from_vec(vec![m, total], data)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()))
    }

    /// Softmax along each row over the columns where `mask` is true. Masked
    /// columns receive exactly zero, which is the `-inf` pre-softmax logit
    /// convention without the non-finite arithmetic.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if mask.len() != n {
            return Err(Error::Shape(format!("softmax mask len {} over {n} columns", mask.len())));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::Shape("softmax with every column masked".into()));
        }
        let mut value = Array::zeros(&[m, n]);
        for i in 0..m {
            let row = self.value(a).row(i);
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    max = max.max(v);
                }
            }
            let mut sum = F::zero();
            let mut exps = vec![F::zero(); n];
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    let e = (v - max).exp();
                    exps[j] = e;
                    sum += e;
                }
            }
            for j in 0..n {
                if mask[j] {
                    value.data_mut()[i * n + j] = exps[j] / sum;
                }
            }
        }
        self.push("masked_softmax_rows", value, Op::MaskedSoftmaxRows(a, mask.to_vec()))
    }

    /// Per-row layer normalization; `gain` and `bias` are `(1,n)` parameter rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let (_, n) = self.value(x).dims2()?;
        let gv = self.value(gain);
        let bv = self.value(bias);
        if gv.shape() != [1, n] || bv.shape() != [1, n] {
            return Err(Error::Shape(format!(
                "layer_norm gain {:?} bias {:?} over {n} columns",
                gv.shape(),
                bv.shape()
            )));
        }
        let value = super::array::layer_norm(self.value(x), gv.data(), bv.data(), eps)?;
        self.push("layer_norm", value, Op::LayerNorm { x, gain, bias, eps })
    }

    pub fn masked_mean_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if mask.len() != m {
            return Err(Error::Shape(format!("mean mask len {} over {m} rows", mask.len())));
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Shape("mean over zero rows".into()));
        }
        let mut acc = vec![F::zero(); n];
        for (i, &mi) in mask.iter().enumerate().take(m) {
            if mi {
                for (j, &v) in self.value(a).row(i).iter().enumerate() {
                    acc[j] += v;
                }
            }
        }
        let cf = cast::<F>(count as f64);
        for v in acc.iter_mut() {
            *v /= cf;
        }
        let value = Array::from_vec(vec![1, n], acc)?;
        self.push("masked_mean_rows", value, Op::MaskedMeanRows(a, mask.to_vec()))
    }

    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.zip(a, b, "sq_dist", |x, y| x - y)?;
        let mut acc = F::zero();
        for &d in diff.data() {
            acc += d * d;
        }
        self.push("sq_dist", Array::scalar(acc), Op::SqDist(a, b))
    }

    pub fn sum_vars(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("sum of nothing".into()));
        }
        let shape = self.value(parts[0]).shape().to_vec();
        let mut acc = Array::zeros(&shape);
        for &p in parts {
            if self.value(p).shape() != shape.as_slice() {
                return Err(Error::Shape("sum_vars shape mismatch".into()));
            }
            for (o, &v) in acc.data_mut().iter_mut().zip(self.value(p).data()) {
                *o += v;
            }
        }
        self.push("sum_vars", acc, Op::SumVars(parts.to_vec()))
    }

    /// Reverse pass from a scalar node. Returns one gradient per reachable
    /// node; the seed is 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Array<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::scalar(F::one()));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (idx, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of node {idx}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Array<F>, grads: &mut [Option<Array<F>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let bt = transpose(self.value(*b))?;
                accum(grads, *a, &matmul(g, &bt)?);
                let at = transpose(self.value(*a))?;
                accum(grads, *b, &matmul(&at, g)?);
            }
            Op::Transpose(a) => {
                accum(grads, *a, &transpose(g)?);
            }
            Op::Add(a, b) => {
                accum(grads, *a, g);
                accum(grads, *b, g);
            }
            Op::Sub(a, b) => {
                accum(grads, *a, g);
                let mut neg = g.clone();
                for v in neg.data_mut() {
                    *v = -*v;
                }
                accum(grads, *b, &neg);
            }
            Op::AddRow(a, row) => {
                accum(grads, *a, g);
                let (m, n) = g.dims2()?;
                let mut rg = Array::zeros(&[1, n]);
                for i in 0..m {
                    for j in 0..n {
                        rg.data_mut()[j] += g.at(i, j);
                    }
                }
                accum(grads, *row, &rg);
            }
            Op::Scale(a, c) => {
                let mut ga = g.clone();
                for v in ga.data_mut() {
                    *v *= *c;
                }
                accum(grads, *a, &ga);
            }
            Op::AddConst(a, _) => {
                accum(grads, *a, g);
            }
            Op::Abs(a) => {
                // Subgradient 0 at the kink.
                let ga = self.unary_grad(*a, g, |x| {
                    if x > F::zero() {
                        F::one()
                    } else if x < F::zero() {
                        -F::one()
                    } else {
                        F::zero()
                    }
                });
                accum(grads, *a, &ga);
            }
            Op::Relu(a) => {
                let ga = self.unary_grad(*a, g, |x| if x > F::zero() { F::one() } else { F::zero() });
                accum(grads, *a, &ga);
            }
            Op::Gelu(a) => {
                let ga = self.unary_grad(*a, g, gelu_derivative);
                accum(grads, *a, &ga);
            }
            Op::Sigmoid(a) => {
                let ga = self.unary_grad_from_output(idx, g, |y| y * (F::one() - y));
                accum(grads, *a, &ga);
            }
            Op::Ln(a) => {
                let ga = self.unary_grad(*a, g, |x| x.recip());
                accum(grads, *a, &ga);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let ga = self.unary_grad(*a, g, |x| {
                    if x > lo && x < hi {
                        F::one()
                    } else {
                        F::zero()
                    }
                });
                accum(grads, *a, &ga);
            }
            Op::MulConst(a, mask) => {
                let mut ga = g.clone();
                for (v, &m) in ga.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                accum(grads, *a, &ga);
            }
            Op::Gather(table, ids) => {
                let mut gt = Array::zeros(self.value(*table).shape());
                let (_, n) = self.value(*table).dims2()?;
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        gt.data_mut()[id * n + j] += g.at(r, j);
                    }
                }
                accum(grads, *table, &gt);
            }
            Op::SliceCols(a, start, len) => {
                let mut ga = Array::zeros(self.value(*a).shape());
                let (m, n) = self.value(*a).dims2()?;
                for i in 0..m {
                    for j in 0..*len {
                        ga.data_mut()[i * n + start + j] += g.at(i, j);
                    }
                }
                accum(grads, *a, &ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0usize;
                for &p in parts {
                    let (m, pn) = self.value(p).dims2()?;
                    let mut gp = Array::zeros(&[m, pn]);
                    for i in 0..m {
                        for j in 0..pn {
                            gp.data_mut()[i * pn + j] = g.at(i, offset + j);
                        }
                    }
                    accum(grads, p, &gp);
                    offset += pn;
                }
            }
            Op::MaskedSoftmaxRows(a, mask) => {
                let p = &node.value;
                let (m, n) = p.dims2()?;
                let mut ga = Array::zeros(&[m, n]);
                for i in 0..m {
                    let mut dot = F::zero();
                    for (j, &mj) in mask.iter().enumerate().take(n) {
                        if mj {
                            dot += p.at(i, j) * g.at(i, j);
                        }
                    }
                    for (j, &mj) in mask.iter().enumerate().take(n) {
                        if mj {
                            ga.data_mut()[i * n + j] = p.at(i, j) * (g.at(i, j) - dot);
                        }
                    }
                }
                accum(grads, *a, &ga);
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let (m, n) = xv.dims2()?;
                let nf = cast::<F>(n as f64);
                let mut gx = Array::zeros(&[m, n]);
                let mut gg = Array::zeros(&[1, n]);
                let mut gb = Array::zeros(&[1, n]);
                for i in 0..m {
                    let row = xv.row(i);
                    let mut mean = F::zero();
                    for &v in row {
                        mean += v;
                    }
                    mean /= nf;
                    let mut var = F::zero();
                    for &v in row {
                        let d = v - mean;
                        var += d * d;
                    }
                    var /= nf;
                    let inv = (var + *eps).sqrt().recip();
                    // dy flows through xhat = (x - mean) * inv:
                    // dx = inv * (dxh - mean(dxh) - xhat * mean(dxh * xhat))
                    let mut sum_dxh = F::zero();
                    let mut sum_dxh_xh = F::zero();
                    let mut xhat = vec![F::zero(); n];
                    let mut dxh = vec![F::zero(); n];
                    for j in 0..n {
                        xhat[j] = (row[j] - mean) * inv;
                        dxh[j] = g.at(i, j) * gv.data()[j];
                        sum_dxh += dxh[j];
                        sum_dxh_xh += dxh[j] * xhat[j];
                        gg.data_mut()[j] += g.at(i, j) * xhat[j];
                        gb.data_mut()[j] += g.at(i, j);
                    }
                    let mean_dxh = sum_dxh / nf;
                    let mean_dxh_xh = sum_dxh_xh / nf;
                    for j in 0..n {
                        gx.data_mut()[i * n + j] = inv * (dxh[j] - mean_dxh - xhat[j] * mean_dxh_xh);
                    }
                }
                accum(grads, *x, &gx);
                accum(grads, *gain, &gg);
                accum(grads, *bias, &gb);
            }
            Op::MaskedMeanRows(a, mask) => {
                let (m, n) = self.value(*a).dims2()?;
                let count = mask.iter().filter(|&&b| b).count();
                let cf = cast::<F>(count as f64);
                let mut ga = Array::zeros(&[m, n]);
                for (i, &mi) in mask.iter().enumerate().take(m) {
                    if mi {
                        for j in 0..n {
                            ga.data_mut()[i * n + j] = g.at(0, j) / cf;
                        }
                    }
                }
                accum(grads, *a, &ga);
            }
            Op::SqDist(a, b) => {
                let s = g.data()[0];
                let av = self.value(*a);
                let bv = self.value(*b);
                let two = cast::<F>(2.0);
                let mut ga = Array::zeros(av.shape());
                let mut gb = Array::zeros(bv.shape());
                for ((ga_v, gb_v), (&x, &y)) in ga
                    .data_mut()
                    .iter_mut()
                    .zip(gb.data_mut().iter_mut())
                    .zip(av.data().iter().zip(bv.data()))
                {
                    let d = two * (x - y) * s;
                    *ga_v = d;
                    *gb_v = -d;
                }
                accum(grads, *a, &ga);
                accum(grads, *b, &gb);
            }
            Op::SumVars(parts) => {
                for &p in parts {
                    accum(grads, p, g);
                }
            }
        }
        Ok(())
    }

    fn unary_grad(&self, input: Var, g: &Array<F>, df: impl Fn(F) -> F) -> Array<F> {
        let xv = self.value(input);
        let data = xv
            .data()
            .iter()
            .zip(g.data())
            .map(|(&x, &gv)| df(x) * gv)
            .collect();
        Array::from_vec(xv.shape().to_vec(), data).expect("same shape")
    }

    fn unary_grad_from_output(&self, node_idx: usize, g: &Array<F>, df: impl Fn(F) -> F) -> Array<F> {
        let yv = &self.nodes[node_idx].value;
        let data = yv
            .data()
            .iter()
            .zip(g.data())
            .map(|(&y, &gv)| df(y) * gv)
            .collect();
        Array::from_vec(yv.shape().to_vec(), data).expect("same shape")
    }
}

fn accum<F: Scalar>(grads: &mut [Option<Array<F>>], v: Var, delta: &Array<F>) {
    match &mut grads[v.0] {
        Some(g) => {
            for (o, &d) in g.data_mut().iter_mut().zip(delta.data()) {
                *o += d;
            }
        }
        slot => *slot = Some(delta.clone()),
    }
}

/// GELU in its tanh form: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
fn gelu_value<F: Scalar>(x: F) -> F {
    let c1 = cast::<F>(0.797_884_560_802_865_4);
    let c2 = cast::<F>(0.044_715);
    let half = cast::<F>(0.5);
    let u = c1 * (x + c2 * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_derivative<F: Scalar>(x: F) -> F {
    let c1 = cast::<F>(0.797_884_560_802_865_4);
    let c2 = cast::<F>(0.044_715);
    let half = cast::<F>(0.5);
    let three = cast::<F>(3.0);
    let u = c1 * (x + c2 * x * x * x);
    let t = u.tanh();
    let du = c1 * (F::one() + three * c2 * x * x);
    half * (F::one() + t) + half * x * (F::one() - t * t) * du
}

fn sigmoid_value<F: Scalar>(x: F) -> F {
    // Split on sign so exp never overflows.
    if x >= F::zero() {
        (F::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> Array<f64> {
        Array::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_backward_known_gradients() {
        // loss = sum(a @ b) with a = [[1, 2]], b = [[3], [4]]
        let mut g = Graph::new();
        let a = g.leaf(arr(&[1, 2], &[1.0, 2.0])).unwrap();
        let b = g.leaf(arr(&[2, 1], &[3.0, 4.0])).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).item().unwrap(), 11.0);
        let grads = g.backward(c).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn gradient_accumulates_over_shared_input() {
        // loss = sum(x) + sum(x) should give gradient 2 everywhere.
        let mut g = Graph::new();
        let x = g.leaf(Array::scalar(5.0_f64)).unwrap();
        let s = g.sum_vars(&[x, x]).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn masked_softmax_zeroes_masked_columns_and_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(arr(&[2, 3], &[1.0, 2.0, 99.0, -1.0, 0.5, 99.0])).unwrap();
        let p = g.masked_softmax_rows(x, &[true, true, false]).unwrap();
        for i in 0..2 {
            let row = g.value(p).row(i);
            assert_eq!(row[2], 0.0, "masked column must be exactly zero");
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn masked_softmax_rejects_fully_masked_row() {
        let mut g = Graph::new();
        let x = g.leaf(arr(&[1, 2], &[1.0, 2.0])).unwrap();
        assert!(g.masked_softmax_rows(x, &[false, false]).is_err());
    }

    #[test]
    fn gather_backward_scatter_adds_repeated_rows() {
        let mut g = Graph::new();
        let table = g.leaf(arr(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let picked = g.gather(table, &[1, 1, 0]).unwrap();
        let mask = vec![true, true, true];
        let pooled = g.masked_mean_rows(picked, &mask).unwrap();
        let total = g.sq_dist(pooled, pooled).unwrap(); // zero, but exercises shape
        assert_eq!(g.value(total).item().unwrap(), 0.0);
        assert_eq!(g.value(picked).row(2), &[1.0, 2.0]);
    }

    #[test]
    fn sq_dist_forward_value() {
        let mut g = Graph::new();
        let a = g.leaf(arr(&[1, 3], &[1.0, 2.0, 3.0])).unwrap();
        let b = g.leaf(arr(&[1, 3], &[0.0, 0.0, 0.0])).unwrap();
        let d = g.sq_dist(a, b).unwrap();
        assert_eq!(g.value(d).item().unwrap(), 14.0);
        let grads = g.backward(d).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[2.0, 4.0, 6.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[-2.0, -4.0, -6.0]);
    }

    #[test]
    fn leaf_rejects_non_finite_input() {
        let mut g = Graph::<f64>::new();
        let bad = Array::from_vec(vec![1, 1], vec![f64::NAN]).unwrap();
        assert!(matches!(g.leaf(bad), Err(crate::Error::NonFinite(_))));
    }

    #[test]
    fn backward_requires_scalar_output() {
        let mut g = Graph::new();
        let x = g.leaf(arr(&[1, 2], &[1.0, 2.0])).unwrap();
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn concat_and_slice_round_trip_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(arr(&[1, 2], &[1.0, 2.0])).unwrap();
        let b = g.leaf(arr(&[1, 1], &[3.0])).unwrap();
        let cat = g.concat_cols(&[a, b]).unwrap();
        assert_eq!(g.value(cat).data(), &[1.0, 2.0, 3.0]);
        let back = g.slice_cols(cat, 2, 1).unwrap();
        let zero = g.leaf(arr(&[1, 1], &[0.0])).unwrap();
        let d = g.sq_dist(back, zero).unwrap();
        let grads = g.backward(d).unwrap();
        // d = b^2, so db = 2b = 6 and a gets zeros.
        assert_eq!(grads.get(b).unwrap().item().unwrap(), 6.0);
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 0.0]);
    }
}
