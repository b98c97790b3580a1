use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbc_grad::{init, Graph, Mask, ParamStore, Scalar, Tensor, Var};

use crate::camera::{Action, Intrinsics};
use crate::error::{CoreError, Result};
use crate::image::Image;

use super::config::{ContextMode, PolicyConfig};
use super::memory::{tail_rows, EpisodeMemory, LinearState};
use super::pluecker::{encode_action_pluecker, ActionImage};
use super::sample::PolicyOutput;

pub const PREFIX: &str = "policy/";

/// Frame token `z`, one per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameToken(pub Vec<f32>);

/// Patch features of a run of consecutive frames from one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkInput {
    /// `[steps, patches, patch_dim]`, row-major.
    pub patches: Vec<f32>,
    pub steps: usize,
    /// `[patches, patch_dim]` of the goal image, when the task has one.
    pub goal: Option<Vec<f32>>,
}

/// Graph nodes produced for a chunk.
#[derive(Debug, Clone, Copy)]
pub struct ChunkVars {
    /// `[steps, 4]`
    pub logits: Var,
    /// `[steps]`
    pub values: Var,
}

/// Position of a row in the temporal stack: its timestep, the independent
/// window it belongs to, and whether it is a goal copy.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    t: usize,
    group: usize,
    goal: bool,
}

impl Slot {
    fn frame(t: usize, group: usize) -> Self {
        Slot { t, group, goal: false }
    }

    /// Attention visibility. A goal copy is visible only at its own step.
    fn sees(&self, key: &Slot, window: usize) -> bool {
        if self.group != key.group {
            return false;
        }
        if key.goal {
            key.t == self.t
        } else {
            key.t <= self.t && self.t - key.t < window
        }
    }

    /// Memory reads cover strictly earlier frames.
    fn remembers(&self, key: &Slot) -> bool {
        self.group == key.group && key.t < self.t
    }
}

/// Cut rgb plus action rays into `patch x patch` squares of 9 channels.
pub fn patchify(rgb: &Image, rays: &ActionImage, patch: usize) -> Result<Vec<f32>> {
    let [h, w, c] = rgb.shape();
    if c != 3 || rays.height != h || rays.width != w {
        return Err(CoreError::ShapeMismatch {
            op: "patchify",
            lhs: vec![h, w, c],
            rhs: vec![rays.height, rays.width, ActionImage::CHANNELS],
        });
    }
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "resolution {h}x{w} is not divisible by patch {patch}"
        )));
    }
    let mut out = Vec::with_capacity(h * w * 9);
    for pr in 0..h / patch {
        for pc in 0..w / patch {
            for r in pr * patch..(pr + 1) * patch {
                for col in pc * patch..(pc + 1) * patch {
                    out.extend_from_slice(rgb.pixel(r, col));
                    let i = (r * w + col) * ActionImage::CHANNELS;
                    out.extend_from_slice(&rays.data[i..i + ActionImage::CHANNELS]);
                }
            }
        }
    }
    Ok(out)
}

/// Architecture of the policy, detached from its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    cfg: PolicyConfig,
    gru_hidden: usize,
    rays: Vec<ActionImage>,
}

impl PolicyNet {
    pub fn new(cfg: PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        let gru_hidden = match cfg.mode {
            ContextMode::RnnLike => matched_gru_hidden(&cfg),
            _ => 0,
        };
        let intr = Intrinsics::new(cfg.width, cfg.height);
        let rays = Action::ALL.iter().map(|&a| encode_action_pluecker(a, &intr)).collect();
        Ok(Self { cfg, gru_hidden, rays })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn gru_hidden(&self) -> usize {
        self.gru_hidden
    }

    pub fn action_rays(&self, action: Action) -> &ActionImage {
        &self.rays[action.index()]
    }

    /// Patch features of an observation and the action that produced it.
    pub fn frame_patches(&self, rgb: &Image, prev_action: Action) -> Result<Vec<f32>> {
        patchify(rgb, self.action_rays(prev_action), self.cfg.patch)
    }

    /// Goal images carry the identity motion.
    pub fn goal_patches(&self, rgb: &Image) -> Result<Vec<f32>> {
        patchify(rgb, self.action_rays(Action::Pause), self.cfg.patch)
    }

    pub fn new_memory(&self) -> EpisodeMemory {
        let cfg = &self.cfg;
        let d = cfg.d_model;
        match cfg.mode {
            ContextMode::RnnLike => EpisodeMemory::new(d, 0, 0, 0, self.gru_hidden),
            ContextMode::Ctx(k) => EpisodeMemory::new(d, k, 1, 0, 0),
            _ => EpisodeMemory::new(d, cfg.window, cfg.layers, cfg.memory_after.len(), 0),
        }
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore<f32>> {
        let cfg = &self.cfg;
        let d = cfg.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let add = |p: &mut ParamStore<f32>, name: String, t: Tensor<f32>| -> Result<()> {
            p.add(format!("{PREFIX}{name}"), t)?;
            Ok(())
        };
        add(&mut p, "tok/patch/w".into(), init::xavier(&mut rng, cfg.patch_dim(), d))?;
        add(&mut p, "tok/patch/b".into(), init::zeros(&[d]))?;
        if cfg.patch_positions {
            add(&mut p, "tok/pos".into(), init::normal(&mut rng, &[cfg.patches(), d], 0.02))?;
        }
        add(&mut p, "tok/query".into(), init::normal(&mut rng, &[1, d], 0.02))?;
        for m in ["q", "k", "v"] {
            add(&mut p, format!("tok/{m}"), init::xavier(&mut rng, d, d))?;
        }
        add(&mut p, "tok/out/w".into(), init::xavier(&mut rng, d, d))?;
        add(&mut p, "tok/out/b".into(), init::zeros(&[d]))?;

        if let ContextMode::RnnLike = cfg.mode {
            let h = self.gru_hidden;
            add(&mut p, "gru/wx".into(), init::xavier(&mut rng, d, 3 * h))?;
            add(&mut p, "gru/wh".into(), init::xavier(&mut rng, h, 3 * h))?;
            add(&mut p, "gru/bx".into(), init::zeros(&[3 * h]))?;
            add(&mut p, "gru/bh".into(), init::zeros(&[3 * h]))?;
            add(&mut p, "gru/proj/w".into(), init::xavier(&mut rng, h, d))?;
            add(&mut p, "gru/proj/b".into(), init::zeros(&[d]))?;
        } else {
            let hid = cfg.mlp_hidden();
            for l in 0..cfg.layers {
                for ln in ["ln1", "ln2"] {
                    add(&mut p, format!("block{l}/{ln}/g"), init::ones(&[d]))?;
                    add(&mut p, format!("block{l}/{ln}/b"), init::zeros(&[d]))?;
                }
                add(&mut p, format!("block{l}/qkv/w"), init::xavier(&mut rng, d, 3 * d))?;
                add(&mut p, format!("block{l}/qkv/b"), init::zeros(&[3 * d]))?;
                add(&mut p, format!("block{l}/attn_out/w"), init::xavier(&mut rng, d, d))?;
                add(&mut p, format!("block{l}/attn_out/b"), init::zeros(&[d]))?;
                add(&mut p, format!("block{l}/mlp1/w"), init::xavier(&mut rng, d, hid))?;
                add(&mut p, format!("block{l}/mlp1/b"), init::zeros(&[hid]))?;
                add(&mut p, format!("block{l}/mlp2/w"), init::xavier(&mut rng, hid, d))?;
                add(&mut p, format!("block{l}/mlp2/b"), init::zeros(&[d]))?;
            }
            for m in 0..cfg.memory_after.len() {
                add(&mut p, format!("mem{m}/ln/g"), init::ones(&[d]))?;
                add(&mut p, format!("mem{m}/ln/b"), init::zeros(&[d]))?;
                for w in ["q", "k", "v", "out"] {
                    add(&mut p, format!("mem{m}/{w}"), init::xavier(&mut rng, d, d))?;
                }
            }
        }
        add(&mut p, "head/ln/g".into(), init::ones(&[d]))?;
        add(&mut p, "head/ln/b".into(), init::zeros(&[d]))?;
        add(&mut p, "actor/w".into(), init::xavier_scaled(&mut rng, d, 4, 0.01))?;
        add(&mut p, "actor/b".into(), init::zeros(&[4]))?;
        add(&mut p, "critic/w".into(), init::xavier(&mut rng, d, 1))?;
        add(&mut p, "critic/b".into(), init::zeros(&[1]))?;
        Ok(p)
    }

    // ---- graph helpers -------------------------------------------------

    fn param<S: Scalar>(g: &mut Graph<'_, S>, name: &str) -> Result<Var> {
        Ok(g.param_by_name(&format!("{PREFIX}{name}"))?)
    }

    fn dense<S: Scalar>(g: &mut Graph<'_, S>, x: Var, name: &str) -> Result<Var> {
        let w = Self::param(g, &format!("{name}/w"))?;
        let b = Self::param(g, &format!("{name}/b"))?;
        Ok(g.linear(x, w, Some(b))?)
    }

    fn norm<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var, name: &str) -> Result<Var> {
        let y = g.layer_norm(x, S::from_f64(self.cfg.layer_norm_eps))?;
        let gain = Self::param(g, &format!("{name}/g"))?;
        let bias = Self::param(g, &format!("{name}/b"))?;
        let y = g.mul(y, gain)?;
        Ok(g.add(y, bias)?)
    }

    fn rows<S: Scalar>(g: &mut Graph<'_, S>, data: &[f32], d: usize) -> Result<Var> {
        Ok(g.constant(Tensor::from_f32(vec![data.len() / d, d], data)?))
    }

    fn read_f32<S: Scalar>(g: &Graph<'_, S>, v: Var) -> Vec<f32> {
        g.data(v).iter().map(|x| x.as_f64() as f32).collect()
    }

    /// `phi(x) = elu(x) + 1`, strictly positive.
    fn phi<S: Scalar>(g: &mut Graph<'_, S>, x: Var) -> Var {
        let e = g.elu(x);
        g.add_scalar(e, S::one())
    }

    /// One token per frame: a shared learned query cross-attends over the
    /// frame's patch embeddings. `patches` holds `frames` consecutive
    /// `[patches, patch_dim]` blocks.
    pub fn tokenize<S: Scalar>(&self, g: &mut Graph<'_, S>, patches: &[f32], frames: usize) -> Result<Var> {
        let cfg = &self.cfg;
        let (np, pd, d) = (cfg.patches(), cfg.patch_dim(), cfg.d_model);
        if frames == 0 || patches.len() != frames * np * pd {
            return Err(CoreError::ShapeMismatch {
                op: "tokenize",
                lhs: vec![frames, np, pd],
                rhs: vec![patches.len()],
            });
        }
        let x = g.constant(Tensor::from_f32(vec![frames * np, pd], patches)?);
        let mut u = Self::dense(g, x, "tok/patch")?;
        if cfg.patch_positions {
            let pos = Self::param(g, "tok/pos")?;
            let u3 = g.reshape(u, vec![frames, np, d])?;
            let u3 = g.add(u3, pos)?;
            u = g.reshape(u3, vec![frames * np, d])?;
        }
        let query = Self::param(g, "tok/query")?;
        let wq = Self::param(g, "tok/q")?;
        let q1 = g.matmul(query, wq)?;
        let ones = g.constant(Tensor::full(vec![frames, 1], S::one()));
        let q = g.matmul(ones, q1)?;
        let wk = Self::param(g, "tok/k")?;
        let wv = Self::param(g, "tok/v")?;
        let k = g.matmul(u, wk)?;
        let v = g.matmul(u, wv)?;
        let mask: Mask = (0..frames)
            .flat_map(|i| (0..frames * np).map(move |j| j / np == i))
            .collect::<Vec<_>>()
            .into();
        let a = g.attention(q, k, v, cfg.heads, Some(&mask))?;
        let z = Self::dense(g, a, "tok/out")?;
        Ok(g.add(z, query)?)
    }

    /// Standalone tokenizer pass for one frame.
    pub fn encode_frame(&self, params: &ParamStore<f32>, rgb: &Image, rays: &ActionImage) -> Result<FrameToken> {
        let patches = patchify(rgb, rays, self.cfg.patch)?;
        let mut g = Graph::new(params);
        let z = self.tokenize(&mut g, &patches, 1)?;
        Ok(FrameToken(g.data(z).to_vec()))
    }

    /// Pre-norm causal self-attention block. Rows of `x` are queries; keys
    /// are `[cache; x]`, where `cache` holds earlier frames of group 0.
    fn temporal_block<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        l: usize,
        x: Var,
        slots: &[Slot],
        cache: &[f32],
        window: usize,
    ) -> Result<Var> {
        let d = self.cfg.d_model;
        let c = cache.len() / d;
        let all = if c > 0 {
            let old = Self::rows(g, cache, d)?;
            g.concat(&[old, x], 0)?
        } else {
            x
        };
        let n_rows = c + slots.len();
        let t0 = slots.first().map_or(0, |s| s.t);
        let key_slot = |j: usize| if j < c { Slot::frame(t0 + j - c, 0) } else { slots[j - c] };
        let mut mask = Vec::with_capacity(slots.len() * n_rows);
        for q in slots {
            mask.extend((0..n_rows).map(|j| q.sees(&key_slot(j), window)));
        }
        let mask: Mask = Arc::from(mask);

        let h = self.norm(g, all, &format!("block{l}/ln1"))?;
        let qkv = Self::dense(g, h, &format!("block{l}/qkv"))?;
        let q = g.slice(qkv, 1, 0, d)?;
        let q = if c > 0 { g.slice(q, 0, c, n_rows)? } else { q };
        let k = g.slice(qkv, 1, d, 2 * d)?;
        let v = g.slice(qkv, 1, 2 * d, 3 * d)?;
        let a = g.attention(q, k, v, self.cfg.heads, Some(&mask))?;
        let o = Self::dense(g, a, &format!("block{l}/attn_out"))?;
        let x = g.add(x, o)?;
        let h2 = self.norm(g, x, &format!("block{l}/ln2"))?;
        let m = Self::dense(g, h2, &format!("block{l}/mlp1"))?;
        let m = g.elu(m);
        let m = Self::dense(g, m, &format!("block{l}/mlp2"))?;
        Ok(g.add(x, m)?)
    }

    /// Linear-attention memory over frame rows: each frame reads the state
    /// built from strictly earlier frames of its group, on top of `state`.
    /// Returns the updated rows and the rows' `phi(k)` and `v`.
    fn memory_layer<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        m: usize,
        frames: Var,
        slots: &[Slot],
        state: Option<&LinearState>,
    ) -> Result<(Var, Var, Var)> {
        let d = self.cfg.d_model;
        let n = slots.len();
        let name = format!("mem{m}");
        let h = self.norm(g, frames, &format!("{name}/ln"))?;
        let wq = Self::param(g, &format!("{name}/q"))?;
        let wk = Self::param(g, &format!("{name}/k"))?;
        let wv = Self::param(g, &format!("{name}/v"))?;
        let q = g.matmul(h, wq)?;
        let q = Self::phi(g, q);
        let k = g.matmul(h, wk)?;
        let k = Self::phi(g, k);
        let v = g.matmul(h, wv)?;

        let mask: Vec<S> = slots
            .iter()
            .flat_map(|a| slots.iter().map(move |b| if a.remembers(b) { S::one() } else { S::zero() }))
            .collect();
        let mask = g.constant(Tensor::new(vec![n, n], mask)?);
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scores = g.mul(scores, mask)?;
        let mut num = g.matmul(scores, v)?;
        let den = g.sum_last(scores)?;
        let mut den = g.reshape(den, vec![n, 1])?;
        if let Some(st) = state.filter(|st| st.n.iter().any(|&x| x != 0.0)) {
            let s = g.constant(Tensor::from_f32(vec![d, d], &st.s)?);
            let nv = g.constant(Tensor::from_f32(vec![d, 1], &st.n)?);
            let qs = g.matmul(q, s)?;
            num = g.add(num, qs)?;
            let qn = g.matmul(q, nv)?;
            den = g.add(den, qn)?;
        }
        let den = g.add_scalar(den, S::from_f64(self.cfg.memory_eps));
        let read = g.div(num, den)?;
        let wo = Self::param(g, &format!("{name}/out"))?;
        let out = g.matmul(read, wo)?;
        Ok((g.add(frames, out)?, k, v))
    }

    /// Blocks and memory layers over `x`, whose first `nf` rows are frames
    /// and the rest goal copies. With `mem`, block `l` also attends to the
    /// cached inputs of earlier frames and memory layers start from the
    /// running state; `next` receives the updated caches and states.
    #[allow(clippy::too_many_arguments)]
    fn run_stack<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        mut x: Var,
        slots: &[Slot],
        nf: usize,
        window: usize,
        mem: Option<&EpisodeMemory>,
        mut next: Option<&mut EpisodeMemory>,
    ) -> Result<Var> {
        let d = self.cfg.d_model;
        let n_rows = slots.len();
        for l in 0..self.cfg.layers {
            let cache = match mem {
                Some(m) => tail_rows(&m.blocks[l], window - 1),
                None => Vec::new(),
            };
            if let Some(nx) = next.as_deref_mut() {
                let rows = Self::read_f32(g, x);
                nx.push_block(l, &rows[..nf * d]);
            }
            x = self.temporal_block(g, l, x, slots, &cache, window)?;
            let Some(mi) = self.cfg.memory_after.iter().position(|&b| b == l + 1) else {
                continue;
            };
            let frames = if nf < n_rows { g.slice(x, 0, 0, nf)? } else { x };
            let state = mem.map(|m| &m.layers[mi]);
            let (y, k, v) = self.memory_layer(g, mi, frames, &slots[..nf], state)?;
            if let Some(nx) = next.as_deref_mut() {
                let (kd, vd) = (Self::read_f32(g, k), Self::read_f32(g, v));
                let st = &mut nx.layers[mi];
                for (kr, vr) in kd.chunks(d).zip(vd.chunks(d)) {
                    for i in 0..d {
                        st.n[i] += kr[i];
                        for (sj, &vj) in st.s[i * d..(i + 1) * d].iter_mut().zip(vr) {
                            *sj += kr[i] * vj;
                        }
                    }
                }
            }
            x = if nf < n_rows {
                let goals = g.slice(x, 0, nf, n_rows)?;
                g.concat(&[y, goals], 0)?
            } else {
                y
            };
        }
        Ok(x)
    }

    fn goal_copies<S: Scalar>(g: &mut Graph<'_, S>, goal: Var, n: usize) -> Result<Var> {
        let ones = g.constant(Tensor::full(vec![n, 1], S::one()));
        Ok(g.matmul(ones, goal)?)
    }

    /// Full-episode stack: banded window over cached block inputs plus the
    /// running linear-attention memory.
    fn banded<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        tokens: Var,
        goal: Option<Var>,
        mem: &EpisodeMemory,
        next: &mut EpisodeMemory,
    ) -> Result<Var> {
        let steps = g.shape(tokens)[0];
        let mut slots: Vec<Slot> = (0..steps).map(|i| Slot::frame(mem.t + i, 0)).collect();
        let x = match goal {
            Some(gv) => {
                slots.extend((0..steps).map(|i| Slot {
                    t: mem.t + i,
                    group: 0,
                    goal: true,
                }));
                let copies = Self::goal_copies(g, gv, steps)?;
                g.concat(&[tokens, copies], 0)?
            }
            None => tokens,
        };
        let y = self.run_stack(g, x, &slots, steps, self.cfg.window, Some(mem), Some(next))?;
        Ok(if goal.is_some() { g.slice(y, 0, 0, steps)? } else { y })
    }

    /// Limited-context stack: every step runs on its own window of the last
    /// `k` frame tokens, so nothing older than `k` frames reaches it.
    fn isolated<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        tokens: Var,
        goal: Option<Var>,
        k: usize,
        past: &[f32],
    ) -> Result<Var> {
        let d = self.cfg.d_model;
        let steps = g.shape(tokens)[0];
        let c = past.len() / d;
        let all = if c > 0 {
            let old = Self::rows(g, past, d)?;
            g.concat(&[old, tokens], 0)?
        } else {
            tokens
        };
        // slot times are row indices of `all`; only order within a group matters
        let mut pieces = Vec::with_capacity(steps + 1);
        let mut slots = Vec::new();
        let mut ends = Vec::with_capacity(steps);
        for i in 0..steps {
            let hi = c + i + 1;
            let lo = hi.saturating_sub(k);
            pieces.push(if lo == 0 && hi == g.shape(all)[0] { all } else { g.slice(all, 0, lo, hi)? });
            slots.extend((lo..hi).map(|r| Slot::frame(r, i)));
            ends.push(slots.len());
        }
        let nf = slots.len();
        if let Some(gv) = goal {
            pieces.push(Self::goal_copies(g, gv, steps)?);
            slots.extend((0..steps).map(|i| Slot {
                t: c + i,
                group: i,
                goal: true,
            }));
        }
        let x = if pieces.len() == 1 { pieces[0] } else { g.concat(&pieces, 0)? };
        let y = self.run_stack(g, x, &slots, nf, k, None, None)?;
        let lasts = ends
            .iter()
            .map(|&e| g.slice(y, 0, e - 1, e))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(if lasts.len() == 1 { lasts[0] } else { g.concat(&lasts, 0)? })
    }

    /// Gated recurrent stack used by the `rnn_like` variant.
    fn recurrent<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        tokens: Var,
        goal: Option<Var>,
        mem: &EpisodeMemory,
        next: &mut EpisodeMemory,
    ) -> Result<Var> {
        let hsz = self.gru_hidden;
        let steps = g.shape(tokens)[0];
        let x = match goal {
            Some(gv) => g.add(tokens, gv)?,
            None => tokens,
        };
        let wx = Self::param(g, "gru/wx")?;
        let bx = Self::param(g, "gru/bx")?;
        let wh = Self::param(g, "gru/wh")?;
        let bh = Self::param(g, "gru/bh")?;
        let gx_all = g.linear(x, wx, Some(bx))?;
        let mut h = g.constant(Tensor::from_f32(vec![1, hsz], &mem.gru)?);
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let gx = g.slice(gx_all, 0, t, t + 1)?;
            let gh = g.linear(h, wh, Some(bh))?;
            let sx = |g: &mut Graph<'_, S>, v: Var, i: usize| g.slice(v, 1, i * hsz, (i + 1) * hsz);
            let (xr, xz, xn) = (sx(g, gx, 0)?, sx(g, gx, 1)?, sx(g, gx, 2)?);
            let (hr, hz, hn) = (sx(g, gh, 0)?, sx(g, gh, 1)?, sx(g, gh, 2)?);
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r);
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z);
            let rn = g.mul(r, hn)?;
            let n = g.add(xn, rn)?;
            let n = g.tanh(n);
            let diff = g.sub(h, n)?;
            let zd = g.mul(z, diff)?;
            h = g.add(n, zd)?;
            outs.push(h);
        }
        next.gru = Self::read_f32(g, h);
        let hs = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 0)? };
        Self::dense(g, hs, "gru/proj")
    }

    fn heads<S: Scalar>(&self, g: &mut Graph<'_, S>, actor_in: Var, critic_in: Var) -> Result<ChunkVars> {
        let a = self.norm(g, actor_in, "head/ln")?;
        let logits = Self::dense(g, a, "actor")?;
        let c = if critic_in == actor_in { a } else { self.norm(g, critic_in, "head/ln")? };
        let v = Self::dense(g, c, "critic")?;
        let steps = g.shape(v)[0];
        let values = g.reshape(v, vec![steps])?;
        Ok(ChunkVars { logits, values })
    }

    /// Forward over `input.steps` consecutive frames that follow `mem`.
    ///
    /// Parameters are read from the graph's store, so the same code runs
    /// at any precision. Returns the head outputs and the memory after the
    /// chunk.
    pub fn forward_chunk<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        mem: &EpisodeMemory,
        input: &ChunkInput,
    ) -> Result<(ChunkVars, EpisodeMemory)> {
        let steps = input.steps;
        let tokens = self.tokenize(g, &input.patches, steps)?;
        let goal = match &input.goal {
            Some(gp) => Some(self.tokenize(g, gp, 1)?),
            None => None,
        };
        let mut next = mem.clone();
        let vars = match self.cfg.mode {
            ContextMode::RnnLike => {
                let y = self.recurrent(g, tokens, goal, mem, &mut next)?;
                self.heads(g, y, y)?
            }
            ContextMode::Ctx(k) => {
                let past = tail_rows(&mem.blocks[0], k - 1);
                let y = self.isolated(g, tokens, goal, k, &past)?;
                let rows = Self::read_f32(g, tokens);
                next.push_block(0, &rows);
                self.heads(g, y, y)?
            }
            ContextMode::Full => {
                let y = self.banded(g, tokens, goal, mem, &mut next)?;
                self.heads(g, y, y)?
            }
            ContextMode::ActorCtx1 | ContextMode::CriticCtx1 => {
                let full = self.banded(g, tokens, goal, mem, &mut next)?;
                let single = self.isolated(g, tokens, goal, 1, &[])?;
                if self.cfg.mode == ContextMode::ActorCtx1 {
                    self.heads(g, single, full)?
                } else {
                    self.heads(g, full, single)?
                }
            }
        };
        next.t = mem.t + steps;
        Ok((vars, next))
    }

    /// Incremental forward for one new frame.
    pub fn step(
        &self,
        params: &ParamStore<f32>,
        mem: &mut EpisodeMemory,
        rgb: &Image,
        prev_action: Action,
        goal: Option<&Image>,
    ) -> Result<PolicyOutput> {
        let input = ChunkInput {
            patches: self.frame_patches(rgb, prev_action)?,
            steps: 1,
            goal: goal.map(|im| self.goal_patches(im)).transpose()?,
        };
        let mut g = Graph::new(params);
        let (vars, next) = self.forward_chunk(&mut g, mem, &input)?;
        *mem = next;
        let l = g.data(vars.logits);
        Ok(PolicyOutput {
            logits: [l[0], l[1], l[2], l[3]],
            value: g.data(vars.values)[0],
        })
    }
}

/// Parameters of the temporal stack this variant replaces.
fn temporal_param_count(cfg: &PolicyConfig) -> usize {
    let (d, hid) = (cfg.d_model, cfg.mlp_hidden());
    let block = 4 * d + (3 * d * d + 3 * d) + (d * d + d) + (d * hid + hid) + (hid * d + d);
    let memory = 2 * d + 4 * d * d;
    cfg.layers * block + cfg.memory_after.len() * memory
}

/// Hidden size whose GRU plus output projection matches the temporal stack.
fn matched_gru_hidden(cfg: &PolicyConfig) -> usize {
    let d = cfg.d_model as f64;
    let target = temporal_param_count(cfg) as f64;
    // 3h^2 + (4d + 6)h + d = target
    let (a, b, c) = (3.0, 4.0 * d + 6.0, d - target);
    let h = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    (h.round() as usize).max(1)
}
