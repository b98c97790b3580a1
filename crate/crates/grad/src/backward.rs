use std::collections::HashMap;

use crate::error::{GradError, Result};
use crate::graph::{blur_backward, index_map, Graph, Op, Var};
use crate::params::ParamId;
use crate::scalar::Scalar;

/// Gradients produced by [`Graph::backward`].
///
/// Every parameter of the attached store has an entry; parameters that did
/// not participate in the loss hold zeros.
#[derive(Debug, Clone)]
pub struct Gradients<S = f32> {
    params: Vec<Vec<S>>,
    inputs: HashMap<Var, Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(store: &crate::ParamStore<S>) -> Self {
        Self {
            params: store.iter().map(|(_, _, t)| vec![S::zero(); t.len()]).collect(),
            inputs: HashMap::new(),
        }
    }

    pub fn param(&self, id: ParamId) -> &[S] {
        &self.params[id.index()]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut [S] {
        &mut self.params[id.index()]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Gradient of an [`input`](Graph::input) leaf.
    pub fn input(&self, v: Var) -> Option<&[S]> {
        self.inputs.get(&v).map(Vec::as_slice)
    }

    /// Accumulate `other` into `self`.
    pub fn add_assign(&mut self, other: &Gradients<S>) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, c: S) {
        for p in &mut self.params {
            for x in p.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(S::from_f64(max_norm / norm));
        }
        norm
    }

    pub fn cast<T: Scalar>(&self) -> Gradients<T> {
        let conv = |v: &Vec<S>| v.iter().map(|x| T::from_f64(x.as_f64())).collect();
        Gradients {
            params: self.params.iter().map(conv).collect(),
            inputs: self.inputs.iter().map(|(k, v)| (*k, conv(v))).collect(),
        }
    }
}

fn acc<S: Scalar>(slot: &mut Option<Vec<S>>, len: usize) -> &mut Vec<S> {
    slot.get_or_insert_with(|| vec![S::zero(); len])
}

impl<S: Scalar> Graph<'_, S> {
    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let ls = self.value(loss);
        if ls.len() != 1 {
            return Err(GradError::NonScalarLoss(ls.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let mut out = match self.store() {
            Some(store) => Gradients::zeros_like(store),
            None => Gradients {
                params: Vec::new(),
                inputs: HashMap::new(),
            },
        };
        for (&id, &v) in self.param_vars() {
            if let Some(g) = grads.get_mut(v.0).and_then(Option::take) {
                out.params[id.index()] = g;
            }
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| vec![S::zero(); node.value.len()]);
                out.inputs.insert(Var(i), g);
            }
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = node.value.data();
        let out_shape = node.value.shape();
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let len = |v: Var| self.nodes[v.0].value.len();
        let val = |v: Var| self.nodes[v.0].value.data();

        macro_rules! binary {
            ($a:expr, $b:expr, |$x:ident, $y:ident, $gi:ident| $da:expr, $db:expr) => {{
                let (a, b) = ($a, $b);
                let ma = index_map(out_shape, self.shape(a));
                let mb = index_map(out_shape, self.shape(b));
                let (va, vb) = (val(a), val(b));
                if rg(a) {
                    let mut ga = grads[a.0].take().unwrap_or_else(|| vec![S::zero(); len(a)]);
                    for (i, &$gi) in g.iter().enumerate() {
                        #[allow(unused_variables)]
                        let ($x, $y) = (va[ma.get(i)], vb[mb.get(i)]);
                        ga[ma.get(i)] += $da;
                    }
                    grads[a.0] = Some(ga);
                }
                if rg(b) {
                    let mut gb = grads[b.0].take().unwrap_or_else(|| vec![S::zero(); len(b)]);
                    for (i, &$gi) in g.iter().enumerate() {
                        #[allow(unused_variables)]
                        let ($x, $y) = (va[ma.get(i)], vb[mb.get(i)]);
                        gb[mb.get(i)] += $db;
                    }
                    grads[b.0] = Some(gb);
                }
            }};
        }

        macro_rules! unary {
            ($x:expr, |$xi:ident, $yi:ident, $gi:ident| $d:expr) => {{
                let x = $x;
                if rg(x) {
                    let xv = val(x);
                    let gx = acc(&mut grads[x.0], xv.len());
                    for (k, (&$gi, (&$xi, &$yi))) in g.iter().zip(xv.iter().zip(out)).enumerate() {
                        gx[k] += $d;
                    }
                }
            }};
        }

        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => binary!(*a, *b, |_x, _y, gi| gi, gi),
            Op::Sub(a, b) => binary!(*a, *b, |_x, _y, gi| gi, -gi),
            Op::Mul(a, b) => binary!(*a, *b, |x, y, gi| gi * y, gi * x),
            Op::Div(a, b) => binary!(*a, *b, |x, y, gi| gi / y, -gi * x / (y * y)),
            Op::Minimum(a, b) => binary!(
                *a,
                *b,
                |x, y, gi| if y < x { S::zero() } else { gi },
                if y < x { gi } else { S::zero() }
            ),
            Op::Maximum(a, b) => binary!(
                *a,
                *b,
                |x, y, gi| if y > x { S::zero() } else { gi },
                if y > x { gi } else { S::zero() }
            ),
            Op::Neg(x) => unary!(*x, |_x, _y, gi| -gi),
            Op::Exp(x) => unary!(*x, |_x, y, gi| gi * y),
            Op::Log(x) => unary!(*x, |x, _y, gi| gi / x),
            Op::Elu(x) => unary!(*x, |x, y, gi| if x > S::zero() {
                gi
            } else {
                gi * (y + S::one())
            }),
            Op::Sigmoid(x) => unary!(*x, |_x, y, gi| gi * y * (S::one() - y)),
            Op::Tanh(x) => unary!(*x, |_x, y, gi| gi * (S::one() - y * y)),
            Op::Relu(x) => unary!(*x, |x, _y, gi| if x > S::zero() { gi } else { S::zero() }),
            Op::Square(x) => unary!(*x, |x, _y, gi| gi * (x + x)),
            Op::Sqrt(x) => unary!(*x, |_x, y, gi| gi / (y + y)),
            Op::Scale(x, c) => unary!(*x, |_x, _y, gi| gi * *c),
            Op::AddScalar(x, _) => unary!(*x, |_x, _y, gi| gi),
            Op::Clamp(x, lo, hi) => unary!(*x, |x, _y, gi| if x < *lo || x > *hi {
                S::zero()
            } else {
                gi
            }),
            Op::Reshape(x) => {
                if rg(*x) {
                    let gx = acc(&mut grads[x.0], len(*x));
                    for (a, &b) in gx.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let sb = self.shape(*b);
                let (k, n) = (sb[0], sb[1]);
                let m = len(*a) / k.max(1);
                if rg(*a) {
                    let ga = acc(&mut grads[a.0], m * k);
                    // dA = G B^T
                    S::gemm(m, n, k, S::one(), g, (n, 1), val(*b), (1, n), S::one(), ga);
                }
                if rg(*b) {
                    let gb = acc(&mut grads[b.0], k * n);
                    // dB = A^T G
                    S::gemm(k, m, n, S::one(), val(*a), (1, k), g, (n, 1), S::one(), gb);
                }
            }
            Op::Transpose(x) => {
                if rg(*x) {
                    let (c, r) = (out_shape[0], out_shape[1]);
                    let gx = acc(&mut grads[x.0], r * c);
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Concat(xs, axis) => {
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[*axis] * inner;
                let mut off = 0;
                for &x in xs {
                    let w = self.shape(x)[*axis] * inner;
                    if rg(x) {
                        let gx = acc(&mut grads[x.0], outer * w);
                        for o in 0..outer {
                            for t in 0..w {
                                gx[o * w + t] += g[o * total + off + t];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Slice { x, axis, start } => {
                if rg(*x) {
                    let s = self.shape(*x);
                    let outer: usize = s[..*axis].iter().product();
                    let inner: usize = s[axis + 1..].iter().product();
                    let w_in = s[*axis] * inner;
                    let w_out = out_shape[*axis] * inner;
                    let gx = acc(&mut grads[x.0], outer * w_in);
                    for o in 0..outer {
                        for t in 0..w_out {
                            gx[o * w_in + start * inner + t] += g[o * w_out + t];
                        }
                    }
                }
            }
            Op::Sum(x) => unary_fill(grads, *x, len(*x), g[0], rg(*x)),
            Op::Mean(x) => {
                let n = len(*x);
                unary_fill(grads, *x, n, g[0] / S::from_f64(n as f64), rg(*x));
            }
            Op::SumLast(x) => {
                if rg(*x) {
                    let d = *self.shape(*x).last().unwrap_or(&1);
                    let gx = acc(&mut grads[x.0], len(*x));
                    for (k, v) in gx.iter_mut().enumerate() {
                        *v += g[k / d];
                    }
                }
            }
            Op::Softmax(x) => {
                if rg(*x) {
                    let d = *out_shape.last().unwrap_or(&1);
                    let gx = acc(&mut grads[x.0], out.len());
                    for ((gr, yr), dx) in g.chunks(d).zip(out.chunks(d)).zip(gx.chunks_mut(d)) {
                        let dot: S = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for ((dd, &gg), &yy) in dx.iter_mut().zip(gr).zip(yr) {
                            *dd += yy * (gg - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(x) => {
                if rg(*x) {
                    let d = *out_shape.last().unwrap_or(&1);
                    let gx = acc(&mut grads[x.0], out.len());
                    for ((gr, yr), dx) in g.chunks(d).zip(out.chunks(d)).zip(gx.chunks_mut(d)) {
                        let total: S = gr.iter().copied().sum();
                        for ((dd, &gg), &yy) in dx.iter_mut().zip(gr).zip(yr) {
                            *dd += gg - yy.exp() * total;
                        }
                    }
                }
            }
            Op::LayerNorm(x, eps) => {
                if rg(*x) {
                    let d = *out_shape.last().unwrap_or(&1);
                    let dn = S::from_f64(d as f64);
                    let xv = val(*x);
                    let gx = acc(&mut grads[x.0], out.len());
                    for (((gr, yr), xr), dx) in g
                        .chunks(d)
                        .zip(out.chunks(d))
                        .zip(xv.chunks(d))
                        .zip(gx.chunks_mut(d))
                    {
                        let mean = xr.iter().copied().sum::<S>() / dn;
                        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / dn;
                        let inv = S::one() / (var + *eps).sqrt();
                        let mg = gr.iter().copied().sum::<S>() / dn;
                        let mgy = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<S>() / dn;
                        for ((dd, &gg), &yy) in dx.iter_mut().zip(gr).zip(yr) {
                            *dd += inv * (gg - mg - yy * mgy);
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *heads, probs, g, grads),
            Op::Blur { x, kernel } => {
                if rg(*x) {
                    let s = self.shape(*x);
                    let gin = blur_backward(g, s[0], s[1], s[2], kernel);
                    let gx = acc(&mut grads[x.0], gin.len());
                    for (a, b) in gx.iter_mut().zip(gin) {
                        *a += b;
                    }
                }
            }
            Op::AvgPool { x, factor } => {
                if rg(*x) {
                    let s = self.shape(*x);
                    let (w, c) = (s[1], s[2]);
                    let ow = w / factor;
                    let inv = S::one() / S::from_f64((factor * factor) as f64);
                    let gx = acc(&mut grads[x.0], len(*x));
                    for (idx, gv) in gx.iter_mut().enumerate() {
                        let ch = idx % c;
                        let px = (idx / c) % w;
                        let py = idx / (c * w);
                        *gv += g[((py / factor) * ow + px / factor) * c + ch] * inv;
                    }
                }
            }
            Op::Pick(x, idx) => {
                if rg(*x) {
                    let c = self.shape(*x)[1];
                    let gx = acc(&mut grads[x.0], len(*x));
                    for (i, &j) in idx.iter().enumerate() {
                        gx[i * c + j] += g[i];
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: &[S],
        g: &[S],
        grads: &mut [Option<Vec<S>>],
    ) {
        let (sq, sk, sv) = (self.shape(q), self.shape(k), self.shape(v));
        let (n, m) = (sq[0], sk[0]);
        let (dq_w, dv_w) = (sq[1], sv[1]);
        let dk = dq_w / heads;
        let dv = dv_w / heads;
        let scale = S::one() / S::from_f64(dk as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let (rq, rk, rv) = (
            self.requires_grad(q),
            self.requires_grad(k),
            self.requires_grad(v),
        );
        // fresh buffers: q, k and v may alias the same node
        let mut gq = rq.then(|| vec![S::zero(); n * dq_w]);
        let mut gk = rk.then(|| vec![S::zero(); m * dq_w]);
        let mut gv = rv.then(|| vec![S::zero(); m * dv_w]);
        let mut dp = vec![S::zero(); n * m];
        for h in 0..heads {
            let p = &probs[h * n * m..(h + 1) * n * m];
            let go = &g[h * dv..];
            if let Some(gv) = gv.as_mut() {
                // dV_h = P^T dO_h, accumulated into a strided column block
                let mut tmp = vec![S::zero(); m * dv];
                S::gemm(m, n, dv, S::one(), p, (1, m), go, (dv_w, 1), S::zero(), &mut tmp);
                for j in 0..m {
                    for c in 0..dv {
                        gv[j * dv_w + h * dv + c] += tmp[j * dv + c];
                    }
                }
            }
            if !(rq || rk) {
                continue;
            }
            // dP = dO_h V_h^T
            S::gemm(n, dv, m, S::one(), go, (dv_w, 1), &vd[h * dv..], (1, dv_w), S::zero(), &mut dp);
            // dS = P * (dP - rowsum(dP * P)), folded with the score scale
            for i in 0..n {
                let pr = &p[i * m..(i + 1) * m];
                let dr = &mut dp[i * m..(i + 1) * m];
                let dot: S = pr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum();
                for (d, &pp) in dr.iter_mut().zip(pr) {
                    *d = pp * (*d - dot) * scale;
                }
            }
            if let Some(gq) = gq.as_mut() {
                let mut tmp = vec![S::zero(); n * dk];
                S::gemm(n, m, dk, S::one(), &dp, (m, 1), &kd[h * dk..], (dq_w, 1), S::zero(), &mut tmp);
                for i in 0..n {
                    for c in 0..dk {
                        gq[i * dq_w + h * dk + c] += tmp[i * dk + c];
                    }
                }
            }
            if let Some(gk) = gk.as_mut() {
                let mut tmp = vec![S::zero(); m * dk];
                S::gemm(m, n, dk, S::one(), &dp, (1, m), &qd[h * dk..], (dq_w, 1), S::zero(), &mut tmp);
                for j in 0..m {
                    for c in 0..dk {
                        gk[j * dq_w + h * dk + c] += tmp[j * dk + c];
                    }
                }
            }
        }
        for (var, buf) in [(q, gq), (k, gk), (v, gv)] {
            if let Some(buf) = buf {
                let slot = acc(&mut grads[var.0], buf.len());
                for (a, b) in slot.iter_mut().zip(buf) {
                    *a += b;
                }
            }
        }
    }
}

fn unary_fill<S: Scalar>(grads: &mut [Option<Vec<S>>], x: Var, n: usize, value: S, rg: bool) {
    if rg {
        for v in acc(&mut grads[x.0], n).iter_mut() {
            *v += value;
        }
    }
}
