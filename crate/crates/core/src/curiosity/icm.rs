use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbc_grad::{init, image::avg_pool, Adam, AdamConfig, Graph, ParamStore, Tensor, Var};

use crate::camera::Action;
use crate::error::{CoreError, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcmConfig {
    pub latent: usize,
    pub hidden: usize,
    /// Observations are average-pooled to `input_side x input_side`.
    pub input_side: usize,
    pub reward_scale: f64,
    pub reward_clip: f64,
    pub lr: f32,
}

impl Default for IcmConfig {
    fn default() -> Self {
        Self {
            latent: 128,
            hidden: 256,
            input_side: 16,
            reward_scale: 0.5,
            reward_clip: 0.5,
            lr: 1e-3,
        }
    }
}

/// Pooled observation pair with the action taken between them.
#[derive(Debug, Clone, PartialEq)]
pub struct IcmTransition {
    pub obs: Vec<f32>,
    pub action: Action,
    pub next_obs: Vec<f32>,
}

/// Latent forward/inverse dynamics model.
///
/// The encoder is trained only through the inverse head; the forward head
/// sees detached latents, so its loss never reaches the encoder.
#[derive(Debug, Clone)]
pub struct IcmModel {
    cfg: IcmConfig,
    params: ParamStore<f32>,
    adam: Adam,
}

fn dense(p: &mut ParamStore<f32>, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize, zero: bool) {
    let w = if zero {
        init::zeros(&[fan_in, fan_out])
    } else {
        init::xavier(rng, fan_in, fan_out)
    };
    p.add(format!("{name}/w"), w).expect("unique name");
    p.add(format!("{name}/b"), init::zeros(&[fan_out])).expect("unique name");
}

impl IcmModel {
    pub fn new(cfg: IcmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let input = cfg.input_side * cfg.input_side * 3;
        dense(&mut p, &mut rng, "icm/enc1", input, cfg.hidden, false);
        dense(&mut p, &mut rng, "icm/enc2", cfg.hidden, cfg.latent, false);
        dense(&mut p, &mut rng, "icm/fwd1", cfg.latent + Action::COUNT, cfg.hidden, false);
        dense(&mut p, &mut rng, "icm/fwd2", cfg.hidden, cfg.latent, false);
        dense(&mut p, &mut rng, "icm/inv1", 2 * cfg.latent, cfg.hidden, false);
        // zero output layer: uniform action logits at initialization
        dense(&mut p, &mut rng, "icm/inv2", cfg.hidden, Action::COUNT, true);
        let adam = Adam::new(AdamConfig::with_lr(cfg.lr), &p);
        Self { cfg, params: p, adam }
    }

    /// Rebuild from saved weights and optimizer state.
    pub fn from_parts(cfg: IcmConfig, params: ParamStore<f32>, adam: Adam) -> Self {
        Self { cfg, params, adam }
    }

    pub fn config(&self) -> &IcmConfig {
        &self.cfg
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    /// Average-pool an RGB observation to the encoder's input grid.
    pub fn featurize(&self, img: &Image) -> Result<Vec<f32>> {
        let side = self.cfg.input_side;
        if img.channels != 3 || img.height % side != 0 || img.width != img.height {
            return Err(CoreError::InvalidArgument(format!(
                "icm input {:?} must be square RGB divisible by {side}",
                img.shape()
            )));
        }
        Ok(avg_pool(&img.data, img.height, img.width, 3, img.height / side))
    }

    fn layer(&self, g: &mut Graph<'_, f32>, name: &str, x: Var) -> Result<Var> {
        let w = g.param_by_name(&format!("{name}/w"))?;
        let b = g.param_by_name(&format!("{name}/b"))?;
        Ok(g.linear(x, w, Some(b))?)
    }

    fn encode(&self, g: &mut Graph<'_, f32>, x: Var) -> Result<Var> {
        let h = self.layer(g, "icm/enc1", x)?;
        let h = g.elu(h);
        self.layer(g, "icm/enc2", h)
    }

    fn stack(&self, g: &mut Graph<'_, f32>, rows: &[&[f32]]) -> Result<Var> {
        let dim = self.cfg.input_side * self.cfg.input_side * 3;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(CoreError::ShapeMismatch {
                    op: "icm input",
                    lhs: vec![dim],
                    rhs: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Ok(g.constant(Tensor::new(vec![rows.len(), dim], data)?))
    }

    /// Forward (`0.5 |phi_hat - phi'|^2`, batch mean) and inverse
    /// (cross-entropy) losses, plus per-sample squared prediction errors.
    pub fn losses(&self, g: &mut Graph<'_, f32>, batch: &[IcmTransition]) -> Result<(Var, Var, Vec<f64>)> {
        if batch.is_empty() {
            return Err(CoreError::InvalidArgument("empty icm batch".into()));
        }
        let n = batch.len();
        let x0 = self.stack(g, &batch.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>())?;
        let x1 = self.stack(g, &batch.iter().map(|t| t.next_obs.as_slice()).collect::<Vec<_>>())?;
        let phi0 = self.encode(g, x0)?;
        let phi1 = self.encode(g, x1)?;

        let mut onehot = vec![0.0f32; n * Action::COUNT];
        for (i, t) in batch.iter().enumerate() {
            onehot[i * Action::COUNT + t.action.index()] = 1.0;
        }
        let a = g.constant(Tensor::new(vec![n, Action::COUNT], onehot)?);
        let phi0_d = g.detach(phi0);
        let phi1_d = g.detach(phi1);
        let fin = g.concat(&[phi0_d, a], 1)?;
        let h = self.layer(g, "icm/fwd1", fin)?;
        let h = g.elu(h);
        let pred = self.layer(g, "icm/fwd2", h)?;
        let diff = g.sub(pred, phi1_d)?;
        let sq = g.square(diff);
        let per = g.sum_last(sq)?;
        let per_sample: Vec<f64> = g.data(per).iter().map(|&v| v as f64).collect();
        let fwd = g.mean(per);
        let fwd = g.scale(fwd, 0.5);

        let iin = g.concat(&[phi0, phi1], 1)?;
        let h = self.layer(g, "icm/inv1", iin)?;
        let h = g.elu(h);
        let logits = self.layer(g, "icm/inv2", h)?;
        let logp = g.log_softmax(logits)?;
        let idx: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
        let picked = g.pick(logp, &idx)?;
        let nll = g.mean(picked);
        let inv = g.neg(nll);
        Ok((fwd, inv, per_sample))
    }

    /// Scaled, clipped latent prediction error of one transition.
    pub fn reward(&self, t: &IcmTransition) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let (_, _, per) = self.losses(&mut g, std::slice::from_ref(t))?;
        Ok((self.cfg.reward_scale * per[0]).min(self.cfg.reward_clip))
    }

    /// One optimizer step on the sum of both losses; returns
    /// `(forward_loss, inverse_loss)` before the step.
    pub fn update(&mut self, batch: &[IcmTransition]) -> Result<(f64, f64)> {
        let (fwd, inv, grads) = {
            let mut g = Graph::new(&self.params);
            let (f, i, _) = self.losses(&mut g, batch)?;
            let total = g.add(f, i)?;
            let grads = g.backward(total)?;
            (g.value(f).item() as f64, g.value(i).item() as f64, grads)
        };
        self.adam.step(&mut self.params, &grads)?;
        Ok((fwd, inv))
    }
}
