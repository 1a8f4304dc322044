//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! Every operation appends a node holding its forward value. Because inputs
//! always precede outputs, walking the node list backwards is a valid
//! topological order for the chain rule.

use std::collections::BTreeMap;

use super::tensor::{gemm, Op as MatOp, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Stable identifier of a trainable parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reparameterize { mean: Var, log_var: Var, eps: Tensor },
    GaussianKl { mean: Var, log_var: Var },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    SquaredError { pred: Var, target: Tensor },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation graph plus the parameters registered on it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients keyed by parameter. Every parameter registered on the tape has
/// an entry, zero-filled when the loss does not depend on it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Registers a parameter. Its value is copied onto the tape so later
    /// optimizer updates cannot disturb a pending backward pass.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `[m]` bias to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.shape().len() != 2 || bv.len() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let m = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s))
    }

    /// Element-wise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let av = self.value(a);
        if av.shape() != c.shape() {
            return Err(shape_err("mul_const", av.shape(), c.shape()));
        }
        let data = av.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MulConst(a, c)))
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { alpha * v });
        self.push(out, Op::LeakyRelu(x, alpha))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(x, lo, hi))
    }

    /// Columns `start..start + len` of an `[n, m]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let m = xv.cols();
        if xv.shape().len() != 2 || start + len > m {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{} of {:?}",
                start + len,
                xv.shape()
            )));
        }
        let n = xv.rows();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(n, len, data)?;
        Ok(self.push(out, Op::SliceCols(x, start)))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::Shape("concat_cols of nothing".into()));
        };
        let n = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.value(p);
            if pv.shape().len() != 2 || pv.rows() != n {
                return Err(shape_err("concat_cols", self.value(*first).shape(), pv.shape()));
            }
            widths.push(pv.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(n, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// `mean + exp(log_var / 2) * eps`, batched over rows.
    pub fn reparameterize(&mut self, mean: Var, log_var: Var, eps: Tensor) -> Result<Var> {
        let (mv, lv) = (self.value(mean), self.value(log_var));
        if mv.shape() != lv.shape() || mv.shape() != eps.shape() {
            return Err(shape_err("reparameterize", mv.shape(), eps.shape()));
        }
        let data = mv
            .data()
            .iter()
            .zip(lv.data())
            .zip(eps.data())
            .map(|((m, l), e)| m + (0.5 * l).exp() * e)
            .collect();
        let out = Tensor::new(mv.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Reparameterize { mean, log_var, eps }))
    }

    /// Per-row KL divergence (nats) from `N(mean, exp(log_var))` to the
    /// standard normal. Output shape `[n]`.
    pub fn gaussian_kl(&mut self, mean: Var, log_var: Var) -> Result<Var> {
        let (mv, lv) = (self.value(mean), self.value(log_var));
        if mv.shape() != lv.shape() || mv.shape().len() != 2 {
            return Err(shape_err("gaussian_kl", mv.shape(), lv.shape()));
        }
        let d = mv.cols();
        let data = mv
            .data()
            .chunks(d)
            .zip(lv.data().chunks(d))
            .map(|(m, l)| super::gaussian::kl_terms(m, l))
            .collect();
        Ok(self.push(Tensor::vector(data), Op::GaussianKl { mean, log_var }))
    }

    /// Per-row softmax cross entropy (nats). Output shape `[n]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 || lv.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: logits {:?} for {} targets",
                lv.shape(),
                targets.len()
            )));
        }
        let k = lv.cols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Contract(format!(
                "target class {bad} out of range for {k} classes"
            )));
        }
        let mut probs = Vec::with_capacity(lv.len());
        let mut losses = Vec::with_capacity(targets.len());
        for (row, &t) in lv.data().chunks(k).zip(targets) {
            let lse = super::loss::log_sum_exp(row);
            losses.push(lse - row[t]);
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        let probs = Tensor::new(lv.shape().to_vec(), probs)?;
        Ok(self.push(
            Tensor::vector(losses),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Per-row mean squared difference to a constant target. Output `[n]`.
    pub fn squared_error(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != target.len() || pv.rows() != target.rows() {
            return Err(shape_err("squared_error", pv.shape(), target.shape()));
        }
        let c = pv.cols();
        let data = pv
            .data()
            .chunks(c)
            .zip(target.data().chunks(c))
            .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c as f64)
            .collect();
        Ok(self.push(Tensor::vector(data), Op::SquaredError { pred, target }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.sum() / v.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = Tensor::zeros(av.shape());
                    gemm(MatOp::N, MatOp::T, n, m, k, g.data(), bv.data(), ga.data_mut(), 0.0);
                    let mut gb = Tensor::zeros(bv.shape());
                    gemm(MatOp::T, MatOp::N, k, n, m, av.data(), g.data(), gb.data_mut(), 0.0);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let m = g.cols();
                    let mut gb = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    let gb = Tensor::new(self.value(*b).shape().to_vec(), gb)?;
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, bv, |gi, bi| gi * bi);
                    let gb = zip_map(&g, av, |gi, ai| gi * ai);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, g.map(|v| v * s));
                }
                Op::MulConst(a, c) => {
                    accumulate(&mut grads, *a, zip_map(&g, c, |gi, ci| gi * ci));
                }
                Op::LeakyRelu(x, alpha) => {
                    let alpha = *alpha;
                    let gx = zip_map(&g, self.value(*x), |gi, xi| if xi > 0.0 { gi } else { alpha * gi });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Clamp(x, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let gx = zip_map(&g, self.value(*x), |gi, xi| if xi >= lo && xi <= hi { gi } else { 0.0 });
                    accumulate(&mut grads, *x, gx);
                }
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let (n, m, len) = (xv.rows(), xv.cols(), g.cols());
                    let mut gx = Tensor::zeros(xv.shape());
                    for r in 0..n {
                        gx.data_mut()[r * m + start..r * m + start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let n = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut data = Vec::with_capacity(n * w);
                        for r in 0..n {
                            data.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, Tensor::matrix(n, w, data)?);
                    }
                }
                Op::Reparameterize { mean, log_var, eps } => {
                    let lv = self.value(*log_var);
                    let data = g
                        .data()
                        .iter()
                        .zip(lv.data())
                        .zip(eps.data())
                        .map(|((gi, l), e)| gi * 0.5 * (0.5 * l).exp() * e)
                        .collect();
                    accumulate(&mut grads, *log_var, Tensor::new(lv.shape().to_vec(), data)?);
                    accumulate(&mut grads, *mean, g);
                }
                Op::GaussianKl { mean, log_var } => {
                    let (mv, lv) = (self.value(*mean), self.value(*log_var));
                    let d = mv.cols();
                    let mut gm = Tensor::zeros(mv.shape());
                    let mut gl = Tensor::zeros(lv.shape());
                    for (r, &gr) in g.data().iter().enumerate() {
                        for j in 0..d {
                            let i = r * d + j;
                            gm.data_mut()[i] = gr * mv.data()[i];
                            gl.data_mut()[i] = gr * 0.5 * (lv.data()[i].exp() - 1.0);
                        }
                    }
                    accumulate(&mut grads, *mean, gm);
                    accumulate(&mut grads, *log_var, gl);
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let k = probs.cols();
                    let mut gl = probs.clone();
                    for (r, (&gr, &t)) in g.data().iter().zip(targets).enumerate() {
                        let row = &mut gl.data_mut()[r * k..(r + 1) * k];
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= gr);
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::SquaredError { pred, target } => {
                    let pv = self.value(*pred);
                    let c = pv.cols();
                    let mut gp = Tensor::zeros(pv.shape());
                    for (r, &gr) in g.data().iter().enumerate() {
                        for j in 0..c {
                            let i = r * c + j;
                            gp.data_mut()[i] = gr * 2.0 * (pv.data()[i] - target.data()[i]) / c as f64;
                        }
                    }
                    accumulate(&mut grads, *pred, gp);
                }
                Op::Sum(x) => {
                    let gx = Tensor::full(self.value(*x).shape(), g.item());
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let gx = Tensor::full(xv.shape(), g.item() / xv.len().max(1) as f64);
                    accumulate(&mut grads, *x, gx);
                }
            }
        }

        let mut by_param = BTreeMap::new();
        for &(id, v) in &self.params {
            let g = grads
                .get_mut(v.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            match by_param.get_mut(&id) {
                // A parameter registered twice collects both contributions.
                Some(existing) => Tensor::add_assign(existing, &g),
                None => {
                    by_param.insert(id, g);
                }
            }
        }
        Ok(Gradients { by_param })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("operands share a shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), &Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), &Tensor::vector(vec![1.0, 2.0]));
        let _unused = tape.param(ParamId(1), &Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        let g1 = grads.get(ParamId(1)).unwrap();
        assert_eq!(g1.shape(), &[2, 2]);
        assert!(g1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), &Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn clamp_blocks_gradient_outside_range() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), &Tensor::vector(vec![-20.0, 0.5, 20.0]));
        let c = tape.clamp(x, -10.0, 10.0);
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn slice_and_concat_route_gradients_to_their_columns() {
        let mut tape = Tape::new();
        let x = tape.param(ParamId(0), &Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let left = tape.slice_cols(x, 0, 1).unwrap();
        let right = tape.slice_cols(x, 1, 2).unwrap();
        let right2 = tape.scale(right, 2.0);
        let joined = tape.concat_cols(&[right2, left]).unwrap();
        assert_eq!(tape.value(joined).data(), &[4., 6., 1., 10., 12., 4.]);
        let loss = tape.sum(joined);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(ParamId(0)).unwrap().data(), &[1., 2., 2., 1., 2., 2.]);
    }
}
