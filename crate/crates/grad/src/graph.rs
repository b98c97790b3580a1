//! Define-by-run tape. Every op computes its value eagerly and records what
//! the backward pass needs.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{GradError, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean attention mask of shape `[queries, keys]`; `true` means visible.
pub type Mask = Arc<[bool]>;

#[derive(Debug, Clone)]
pub(crate) enum Op<S> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Minimum(Var, Var),
    Maximum(Var, Var),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Sqrt(Var),
    Scale(Var, S),
    AddScalar(Var, S),
    Clamp(Var, S, S),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm(Var, S),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<S>,
    },
    Blur {
        x: Var,
        kernel: Vec<S>,
    },
    AvgPool {
        x: Var,
        factor: usize,
    },
    Pick(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
pub(crate) struct Node<S> {
    pub(crate) value: Tensor<S>,
    pub(crate) op: Op<S>,
    pub(crate) requires_grad: bool,
}

/// Computation graph over parameters from an optional [`ParamStore`].
pub struct Graph<'p, S: Scalar = f32> {
    params: Option<&'p ParamStore<S>>,
    pub(crate) nodes: Vec<Node<S>>,
    param_vars: HashMap<ParamId, Var>,
}

/// How an operand of a broadcasting binary op maps onto the output.
pub(crate) enum IndexMap {
    Same,
    Suffix(usize),
    General(Vec<usize>),
}

impl IndexMap {
    #[inline]
    pub(crate) fn get(&self, i: usize) -> usize {
        match self {
            IndexMap::Same => i,
            IndexMap::Suffix(n) => i % n,
            IndexMap::General(v) => v[i],
        }
    }
}

pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(GradError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

pub(crate) fn index_map(out: &[usize], inp: &[usize]) -> IndexMap {
    if out == inp {
        return IndexMap::Same;
    }
    let n_in = numel(inp);
    let n_out = numel(out);
    // operand equals a trailing block of the output
    let lead = out.len() - inp.len();
    if out[lead..] == *inp {
        return IndexMap::Suffix(n_in.max(1));
    }
    let mut strides = vec![0usize; out.len()];
    let mut s = 1;
    for i in (0..inp.len()).rev() {
        if inp[i] != 1 {
            strides[lead + i] = s;
        }
        s *= inp[i];
    }
    let mut idx = vec![0usize; out.len()];
    let mut map = Vec::with_capacity(n_out);
    let mut off = 0usize;
    for _ in 0..n_out {
        map.push(off);
        for d in (0..out.len()).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    IndexMap::General(map)
}

pub(crate) fn softmax_row<S: Scalar>(row: &[S], out: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// 1-D normalised Gaussian taps.
pub fn gaussian_kernel<S: Scalar>(size: usize, sigma: f64) -> Vec<S> {
    let r = (size / 2) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| S::from_f64(w / total)).collect()
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    /// Graph without parameters (constants and inputs only).
    pub fn detached() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[S] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input leaf whose gradient is reported by backward.
    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant_from(&mut self, shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Var> {
        Ok(self.constant(Tensor::new(shape, data)?))
    }

    pub fn scalar(&mut self, x: S) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// Copy of `x` cut out of the tape.
    pub fn detach(&mut self, x: Var) -> Var {
        let t = self.nodes[x.0].value.clone();
        self.constant(t)
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(&id) {
            return Ok(v);
        }
        let store = self.params.ok_or(GradError::NoParams)?;
        let t = store.get(id).clone();
        let v = self.push(t, Op::Param, true);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<Var> {
        let store = self.params.ok_or(GradError::NoParams)?;
        let id = store.id(name)?;
        self.param(id)
    }

    pub(crate) fn param_vars(&self) -> &HashMap<ParamId, Var> {
        &self.param_vars
    }

    pub(crate) fn store(&self) -> Option<&'p ParamStore<S>> {
        self.params
    }

    // ---- elementwise binary -------------------------------------------

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: fn(Var, Var) -> Op<S>,
    ) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(name, &sa, &sb)?;
        let ma = index_map(&out_shape, &sa);
        let mb = index_map(&out_shape, &sb);
        let da = self.data(a);
        let db = self.data(b);
        let n = numel(&out_shape);
        let data: Vec<S> = (0..n).map(|i| f(da[ma.get(i)], db[mb.get(i)])).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(out_shape, data)?, op(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, |x, y| if y < x { y } else { x }, Op::Minimum)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, |x, y| if y > x { y } else { x }, Op::Maximum)
    }

    // ---- elementwise unary --------------------------------------------

    fn unary(&mut self, x: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, S::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, S::ln, Op::Log(x))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > S::zero() { v } else { v.exp_m1() },
            Op::Elu(x),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| S::one() / (S::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, S::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(S::zero()), Op::Relu(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, S::sqrt, Op::Sqrt(x))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x, c))
    }

    /// Clamp into `[lo, hi]`; gradient is zero where clamped.
    pub fn clamp(&mut self, x: Var, lo: S, hi: S) -> Var {
        self.unary(x, |v| v.max(lo).min(hi), Op::Clamp(x, lo, hi))
    }

    // ---- linear algebra / layout --------------------------------------

    /// `[.., k] x [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(GradError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let k = sb[0];
        let n = sb[1];
        let m = numel(&sa) / k.max(1);
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            S::one(),
            self.data(a),
            (k, 1),
            self.data(b),
            (n, 1),
            S::zero(),
            &mut out,
        );
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(GradError::InvalidArgument {
                op: "transpose",
                reason: format!("expected rank 2, got {s:?}"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let d = self.data(x);
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.nodes[x.0].value.clone().reshape(shape)?;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or(GradError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(GradError::InvalidArgument {
                op: "concat",
                reason: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(GradError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let w = self.shape(x)[axis] * inner;
                out.extend_from_slice(&self.data(x)[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.any_grad(xs);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(xs.to_vec(), axis), rg))
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start > end || end > s[axis] {
            return Err(GradError::InvalidArgument {
                op: "slice",
                reason: format!("range {start}..{end} on axis {axis} of {s:?}"),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let d = self.data(x);
        let w_in = s[axis] * inner;
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[o * w_in + start * inner..o * w_in + end * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    // ---- reductions ---------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s: S = self.data(x).iter().copied().sum();
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s: S = d.iter().copied().sum::<S>() / S::from_f64(d.len() as f64);
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Sum over the last axis, dropping it.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(GradError::InvalidArgument {
            op: "sum_last",
            reason: "scalar input".into(),
        })?;
        let out: Vec<S> = self
            .data(x)
            .chunks(d.max(1))
            .map(|c| c.iter().copied().sum())
            .collect();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(s[..s.len() - 1].to_vec(), out)?, Op::SumLast(x), rg))
    }

    // ---- normalisation ------------------------------------------------

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(GradError::InvalidArgument {
            op: "softmax",
            reason: "scalar input".into(),
        })?;
        let src = self.data(x);
        let mut out = vec![S::zero(); src.len()];
        for (o, r) in out.chunks_mut(d).zip(src.chunks(d)) {
            softmax_row(r, o);
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(s, out)?, Op::Softmax(x), rg))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(GradError::InvalidArgument {
            op: "log_softmax",
            reason: "scalar input".into(),
        })?;
        let src = self.data(x);
        let mut out = vec![S::zero(); src.len()];
        for (o, r) in out.chunks_mut(d).zip(src.chunks(d)) {
            let max = r.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
            for (oo, &v) in o.iter_mut().zip(r) {
                *oo = v - lse;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(s, out)?, Op::LogSoftmax(x), rg))
    }

    /// Normalise each last-axis vector to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var, eps: S) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(GradError::InvalidArgument {
            op: "layer_norm",
            reason: "scalar input".into(),
        })?;
        let src = self.data(x);
        let mut out = vec![S::zero(); src.len()];
        let dn = S::from_f64(d as f64);
        for (o, r) in out.chunks_mut(d).zip(src.chunks(d)) {
            let mean = r.iter().copied().sum::<S>() / dn;
            let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
            let inv = S::one() / (var + eps).sqrt();
            for (oo, &v) in o.iter_mut().zip(r) {
                *oo = (v - mean) * inv;
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(s, out)?, Op::LayerNorm(x, eps), rg))
    }

    // ---- attention ----------------------------------------------------

    /// Multi-head scaled dot-product attention.
    ///
    /// `q: [n, h*dk]`, `k: [m, h*dk]`, `v: [m, h*dv]`, optional `mask` of
    /// `[n, m]`. Masked keys get exactly zero weight; a row with no visible
    /// key outputs zeros.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        mask: Option<&Mask>,
    ) -> Result<Var> {
        let (sq, sk, sv) = (
            self.shape(q).to_vec(),
            self.shape(k).to_vec(),
            self.shape(v).to_vec(),
        );
        let bad = sq.len() != 2
            || sk.len() != 2
            || sv.len() != 2
            || sq[1] != sk[1]
            || sk[0] != sv[0]
            || heads == 0
            || sq[1] % heads != 0
            || sv[1] % heads != 0;
        if bad {
            return Err(GradError::ShapeMismatch {
                op: "attention",
                lhs: sq,
                rhs: sk,
            });
        }
        let (n, m) = (sq[0], sk[0]);
        if let Some(mask) = mask {
            if mask.len() != n * m {
                return Err(GradError::ShapeMismatch {
                    op: "attention(mask)",
                    lhs: vec![n, m],
                    rhs: vec![mask.len()],
                });
            }
        }
        let dk = sq[1] / heads;
        let dv = sv[1] / heads;
        let scale = S::one() / S::from_f64(dk as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut probs = vec![S::zero(); heads * n * m];
        let mut out = vec![S::zero(); n * heads * dv];
        let mut scores = vec![S::zero(); n * m];
        for h in 0..heads {
            S::gemm(
                n,
                dk,
                m,
                scale,
                &qd[h * dk..],
                (sq[1], 1),
                &kd[h * dk..],
                (1, sk[1]),
                S::zero(),
                &mut scores,
            );
            let p = &mut probs[h * n * m..(h + 1) * n * m];
            for i in 0..n {
                let row = &scores[i * m..(i + 1) * m];
                let prow = &mut p[i * m..(i + 1) * m];
                let visible = |j: usize| mask.is_none_or(|mk| mk[i * m + j]);
                let mut max = S::neg_infinity();
                for (j, &s) in row.iter().enumerate() {
                    if visible(j) && s > max {
                        max = s;
                    }
                }
                if max == S::neg_infinity() {
                    continue;
                }
                let mut sum = S::zero();
                for j in 0..m {
                    if visible(j) {
                        prow[j] = (row[j] - max).exp();
                        sum += prow[j];
                    }
                }
                for x in prow.iter_mut() {
                    *x /= sum;
                }
            }
            // out[:, h] = P_h V_h, written through a strided view
            let mut oh = vec![S::zero(); n * dv];
            S::gemm(
                n,
                m,
                dv,
                S::one(),
                p,
                (m, 1),
                &vd[h * dv..],
                (sv[1], 1),
                S::zero(),
                &mut oh,
            );
            for i in 0..n {
                out[i * heads * dv + h * dv..i * heads * dv + (h + 1) * dv]
                    .copy_from_slice(&oh[i * dv..(i + 1) * dv]);
            }
        }
        let rg = self.any_grad(&[q, k, v]);
        Ok(self.push(
            Tensor::new(vec![n, heads * dv], out)?,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            rg,
        ))
    }

    // ---- image ops ----------------------------------------------------

    /// Separable Gaussian blur of an `[h, w, c]` image with edge clamping.
    pub fn gaussian_blur(&mut self, x: Var, size: usize, sigma: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || size % 2 == 0 || sigma <= 0.0 {
            return Err(GradError::InvalidArgument {
                op: "gaussian_blur",
                reason: format!("image {s:?}, kernel {size}, sigma {sigma}"),
            });
        }
        let kernel = gaussian_kernel::<S>(size, sigma);
        let out = blur_forward(self.data(x), s[0], s[1], s[2], &kernel);
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(s, out)?, Op::Blur { x, kernel }, rg))
    }

    /// Average-pool an `[h, w, c]` image by `factor` in both directions.
    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || factor == 0 || s[0] % factor != 0 || s[1] % factor != 0 {
            return Err(GradError::InvalidArgument {
                op: "avg_pool",
                reason: format!("image {s:?} not divisible by {factor}"),
            });
        }
        let out = pool_forward(self.data(x), s[0], s[1], s[2], factor);
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(
            Tensor::new(vec![s[0] / factor, s[1] / factor, s[2]], out)?,
            Op::AvgPool { x, factor },
            rg,
        ))
    }

    /// `out[i] = x[i, idx[i]]` for `x: [n, c]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != idx.len() || idx.iter().any(|&i| i >= s[1]) {
            return Err(GradError::ShapeMismatch {
                op: "pick",
                lhs: s,
                rhs: vec![idx.len()],
            });
        }
        let c = s[1];
        let d = self.data(x);
        let out = idx.iter().enumerate().map(|(i, &j)| d[i * c + j]).collect();
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(Tensor::new(vec![s[0]], out)?, Op::Pick(x, idx.to_vec()), rg))
    }

    // ---- composites ---------------------------------------------------

    /// `x W + b` with `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }
}

pub(crate) fn blur_forward<S: Scalar>(
    src: &[S],
    h: usize,
    w: usize,
    c: usize,
    kernel: &[S],
) -> Vec<S> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![S::zero(); src.len()];
    for y in 0..h {
        for x in 0..w {
            for (t, &kw) in kernel.iter().enumerate() {
                let xs = clamp(x as isize + t as isize - r, w);
                for ch in 0..c {
                    tmp[(y * w + x) * c + ch] += kw * src[(y * w + xs) * c + ch];
                }
            }
        }
    }
    let mut out = vec![S::zero(); src.len()];
    for y in 0..h {
        for (t, &kw) in kernel.iter().enumerate() {
            let ys = clamp(y as isize + t as isize - r, h);
            for x in 0..w {
                for ch in 0..c {
                    out[(y * w + x) * c + ch] += kw * tmp[(ys * w + x) * c + ch];
                }
            }
        }
    }
    out
}

pub(crate) fn blur_backward<S: Scalar>(
    g: &[S],
    h: usize,
    w: usize,
    c: usize,
    kernel: &[S],
) -> Vec<S> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut gtmp = vec![S::zero(); g.len()];
    for y in 0..h {
        for (t, &kw) in kernel.iter().enumerate() {
            let ys = clamp(y as isize + t as isize - r, h);
            for x in 0..w {
                for ch in 0..c {
                    gtmp[(ys * w + x) * c + ch] += kw * g[(y * w + x) * c + ch];
                }
            }
        }
    }
    let mut gin = vec![S::zero(); g.len()];
    for y in 0..h {
        for x in 0..w {
            for (t, &kw) in kernel.iter().enumerate() {
                let xs = clamp(x as isize + t as isize - r, w);
                for ch in 0..c {
                    gin[(y * w + xs) * c + ch] += kw * gtmp[(y * w + x) * c + ch];
                }
            }
        }
    }
    gin
}

pub(crate) fn pool_forward<S: Scalar>(
    src: &[S],
    h: usize,
    w: usize,
    c: usize,
    f: usize,
) -> Vec<S> {
    let (oh, ow) = (h / f, w / f);
    let inv = S::one() / S::from_f64((f * f) as f64);
    let mut out = vec![S::zero(); oh * ow * c];
    for y in 0..h {
        for x in 0..w {
            let o = ((y / f) * ow + x / f) * c;
            for ch in 0..c {
                out[o + ch] += src[(y * w + x) * c + ch] * inv;
            }
        }
    }
    out
}

/// Plain-array versions of the image primitives for no-grad callers.
pub mod image {
    use super::*;

    pub fn blur<S: Scalar>(src: &[S], h: usize, w: usize, c: usize, size: usize, sigma: f64) -> Vec<S> {
        blur_forward(src, h, w, c, &gaussian_kernel::<S>(size, sigma))
    }

    pub fn avg_pool<S: Scalar>(src: &[S], h: usize, w: usize, c: usize, factor: usize) -> Vec<S> {
        pool_forward(src, h, w, c, factor)
    }
}
