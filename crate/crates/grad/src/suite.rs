//! Gradient-check cases covering every graph primitive.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::check::{check_gradients, GradCheckConfig, GradCheckReport, GraphLoss};
use crate::graph::{Graph, Mask, Var};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub enum Prim {
    Add,
    Sub,
    Mul,
    Div,
    BroadcastAdd,
    ColumnDiv,
    Minimum,
    Maximum,
    MatMul,
    Exp,
    Log,
    Elu,
    Sigmoid,
    Tanh,
    Relu,
    Square,
    Sqrt,
    Clamp,
    Softmax,
    LogSoftmax,
    LayerNorm,
    Concat,
    Slice,
    Reshape,
    Transpose,
    Sum,
    Mean,
    SumLast,
    Attention,
    MaskedAttention,
    SelfAttention,
    Blur,
    AvgPool,
    Pick,
}

pub const PRIMITIVES: &[Prim] = &[
    Prim::Add,
    Prim::Sub,
    Prim::Mul,
    Prim::Div,
    Prim::BroadcastAdd,
    Prim::ColumnDiv,
    Prim::Minimum,
    Prim::Maximum,
    Prim::MatMul,
    Prim::Exp,
    Prim::Log,
    Prim::Elu,
    Prim::Sigmoid,
    Prim::Tanh,
    Prim::Relu,
    Prim::Square,
    Prim::Sqrt,
    Prim::Clamp,
    Prim::Softmax,
    Prim::LogSoftmax,
    Prim::LayerNorm,
    Prim::Concat,
    Prim::Slice,
    Prim::Reshape,
    Prim::Transpose,
    Prim::Sum,
    Prim::Mean,
    Prim::SumLast,
    Prim::Attention,
    Prim::MaskedAttention,
    Prim::SelfAttention,
    Prim::Blur,
    Prim::AvgPool,
    Prim::Pick,
];

/// Loss for one primitive: its output under a fixed random projection.
pub struct Case {
    pub prim: Prim,
    pub weights_seed: u64,
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Inputs for `prim`, kept inside each primitive's smooth domain.
pub fn params_for(prim: Prim, seed: u64) -> ParamStore<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    let mut add = |name: &str, t: Tensor<f32>| {
        p.add(name, t).unwrap();
    };
    match prim {
        Prim::Log | Prim::Sqrt | Prim::Div => {
            add("a", uniform(&mut rng, &[3, 4], 0.5, 2.0));
            add("b", uniform(&mut rng, &[3, 4], 0.5, 2.0));
        }
        Prim::ColumnDiv => {
            add("a", uniform(&mut rng, &[3, 4], -1.0, 1.0));
            add("b", uniform(&mut rng, &[3, 1], 0.5, 2.0));
        }
        Prim::BroadcastAdd => {
            add("a", uniform(&mut rng, &[3, 4], -1.0, 1.0));
            add("b", uniform(&mut rng, &[4], -1.0, 1.0));
        }
        Prim::MatMul => {
            add("a", uniform(&mut rng, &[2, 3, 4], -1.0, 1.0));
            add("b", uniform(&mut rng, &[4, 5], -1.0, 1.0));
        }
        Prim::Attention | Prim::MaskedAttention => {
            add("q", uniform(&mut rng, &[3, 8], -1.0, 1.0));
            add("k", uniform(&mut rng, &[5, 8], -1.0, 1.0));
            add("v", uniform(&mut rng, &[5, 6], -1.0, 1.0));
        }
        Prim::SelfAttention => add("x", uniform(&mut rng, &[4, 8], -1.0, 1.0)),
        Prim::Blur | Prim::AvgPool => add("a", uniform(&mut rng, &[8, 8, 3], 0.0, 1.0)),
        _ => {
            add("a", uniform(&mut rng, &[3, 4], -2.0, 2.0));
            add("b", uniform(&mut rng, &[3, 4], -2.0, 2.0));
        }
    }
    p
}

impl GraphLoss for Case {
    fn build<S: Scalar>(&self, g: &mut Graph<'_, S>) -> crate::Result<Var> {
        let p = |g: &mut Graph<'_, S>, n: &str| g.param_by_name(n);
        let out = match self.prim {
            Prim::Add => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.add(a, b)?
            }
            Prim::Sub => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.sub(a, b)?
            }
            Prim::Mul => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.mul(a, b)?
            }
            Prim::Div | Prim::ColumnDiv => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.div(a, b)?
            }
            Prim::BroadcastAdd => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.add(a, b)?
            }
            Prim::Minimum => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.minimum(a, b)?
            }
            Prim::Maximum => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.maximum(a, b)?
            }
            Prim::MatMul => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                g.matmul(a, b)?
            }
            Prim::Exp => {
                let a = p(g, "a")?;
                g.exp(a)
            }
            Prim::Log => {
                let a = p(g, "a")?;
                g.log(a)
            }
            Prim::Elu => {
                let a = p(g, "a")?;
                g.elu(a)
            }
            Prim::Sigmoid => {
                let a = p(g, "a")?;
                g.sigmoid(a)
            }
            Prim::Tanh => {
                let a = p(g, "a")?;
                g.tanh(a)
            }
            Prim::Relu => {
                let a = p(g, "a")?;
                g.relu(a)
            }
            Prim::Square => {
                let a = p(g, "a")?;
                g.square(a)
            }
            Prim::Sqrt => {
                let a = p(g, "a")?;
                g.sqrt(a)
            }
            Prim::Clamp => {
                let a = p(g, "a")?;
                g.clamp(a, S::lit(-1.0), S::lit(1.0))
            }
            Prim::Softmax => {
                let a = p(g, "a")?;
                g.softmax(a)?
            }
            Prim::LogSoftmax => {
                let a = p(g, "a")?;
                g.log_softmax(a)?
            }
            Prim::LayerNorm => {
                let a = p(g, "a")?;
                g.layer_norm(a, S::lit(1e-5))?
            }
            Prim::Concat => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                let c0 = g.concat(&[a, b], 0)?;
                let c1 = g.concat(&[b, a], 1)?;
                let c1 = g.reshape(c1, vec![6, 4])?;
                g.mul(c0, c1)?
            }
            Prim::Slice => {
                let a = p(g, "a")?;
                let s = g.slice(a, 1, 1, 3)?;
                g.square(s)
            }
            Prim::Reshape => {
                let a = p(g, "a")?;
                let r = g.reshape(a, vec![4, 3])?;
                g.square(r)
            }
            Prim::Transpose => {
                let (a, b) = (p(g, "a")?, p(g, "b")?);
                let t = g.transpose(a)?;
                g.matmul(t, b)?
            }
            Prim::Sum => {
                let a = p(g, "a")?;
                let s = g.square(a);
                let s = g.sum(s);
                g.square(s)
            }
            Prim::Mean => {
                let a = p(g, "a")?;
                let s = g.square(a);
                let s = g.mean(s);
                g.square(s)
            }
            Prim::SumLast => {
                let a = p(g, "a")?;
                let s = g.square(a);
                g.sum_last(s)?
            }
            Prim::Attention => {
                let (q, k, v) = (p(g, "q")?, p(g, "k")?, p(g, "v")?);
                g.attention(q, k, v, 2, None)?
            }
            Prim::MaskedAttention => {
                let (q, k, v) = (p(g, "q")?, p(g, "k")?, p(g, "v")?);
                let mask: Mask = Arc::from(
                    (0..15).map(|i| (i % 5) <= (i / 5) + 1).collect::<Vec<_>>(),
                );
                g.attention(q, k, v, 2, Some(&mask))?
            }
            Prim::SelfAttention => {
                let x = p(g, "x")?;
                g.attention(x, x, x, 2, None)?
            }
            Prim::Blur => {
                let a = p(g, "a")?;
                g.gaussian_blur(a, 5, 1.0)?
            }
            Prim::AvgPool => {
                let a = p(g, "a")?;
                let s = g.square(a);
                g.avg_pool(s, 4)?
            }
            Prim::Pick => {
                let a = p(g, "a")?;
                let l = g.log_softmax(a)?;
                g.pick(l, &[0, 3, 2])?
            }
        };
        // random projection so every output coordinate matters
        let n = g.value(out).len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.weights_seed);
        let w: Vec<S> = (0..n).map(|_| S::lit(rng.random_range(-1.0..1.0))).collect();
        let w = g.constant_from(g.shape(out).to_vec(), w)?;
        let prod = g.mul(out, w)?;
        Ok(g.sum(prod))
    }
}

/// Check one primitive at `seed`: random inputs, then a random projection
/// of its output as the loss.
pub fn check_primitive<S: Scalar>(prim: Prim, seed: u64) -> crate::Result<GradCheckReport> {
    let params = params_for(prim, seed);
    let case = Case {
        prim,
        weights_seed: 1000 + seed,
    };
    let cfg = GradCheckConfig {
        delta: 1e-4,
        samples_per_param: 64,
        seed,
        floor: 1e-5,
    };
    check_gradients::<S, _>(&case, &params, cfg)
}
