//! Episodic actor-critic: Plücker action rays, a learned-query frame
//! tokenizer, windowed causal attention interleaved with linear-attention
//! memory, and the sampling mixture used during training.

mod config;
mod memory;
mod net;
mod pluecker;
mod sample;

pub use config::{ContextMode, PolicyConfig};
pub use memory::{EpisodeMemory, LinearState};
pub use net::{patchify, ChunkInput, ChunkVars, FrameToken, PolicyNet, PREFIX};
pub use pluecker::{encode_action_pluecker, ActionImage};
pub use sample::{behavior_prob, sample_action, softmax, PolicyOutput};

use rbc_grad::ParamStore;

use crate::camera::Action;
use crate::error::Result;
use crate::image::Image;

/// Architecture plus weights.
#[derive(Debug, Clone)]
pub struct Policy {
    net: PolicyNet,
    params: ParamStore<f32>,
}

impl Policy {
    pub fn new(cfg: PolicyConfig, seed: u64) -> Result<Self> {
        let net = PolicyNet::new(cfg)?;
        let params = net.init_params(seed)?;
        Ok(Self { net, params })
    }

    pub fn from_parts(net: PolicyNet, params: ParamStore<f32>) -> Self {
        Self { net, params }
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn config(&self) -> &PolicyConfig {
        self.net.config()
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn new_memory(&self) -> EpisodeMemory {
        self.net.new_memory()
    }

    pub fn encode_frame(&self, rgb: &Image, rays: &ActionImage) -> Result<FrameToken> {
        self.net.encode_frame(&self.params, rgb, rays)
    }

    pub fn step(
        &self,
        mem: &mut EpisodeMemory,
        rgb: &Image,
        prev_action: Action,
        goal: Option<&Image>,
    ) -> Result<PolicyOutput> {
        self.net.step(&self.params, mem, rgb, prev_action, goal)
    }
}
