use crate::error::{CoreError, Result};

/// Temporal context available to the heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextMode {
    Full,
    /// Window and memory limited to the last `k` frames, current included.
    Ctx(usize),
    /// Actor reads a 1-frame stream, critic the full one.
    ActorCtx1,
    /// Critic reads a 1-frame stream, actor the full one.
    CriticCtx1,
    /// A single gated recurrent layer replaces the temporal stack.
    RnnLike,
}

impl ContextMode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => ContextMode::Full,
            "ctx1" => ContextMode::Ctx(1),
            "ctx4" => ContextMode::Ctx(4),
            "ctx16" => ContextMode::Ctx(16),
            "actor_ctx1" => ContextMode::ActorCtx1,
            "critic_ctx1" => ContextMode::CriticCtx1,
            "rnn_like" => ContextMode::RnnLike,
            other => return Err(CoreError::UnknownVariant(format!("context mode {other:?}"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            ContextMode::Full => "full".into(),
            ContextMode::Ctx(k) => format!("ctx{k}"),
            ContextMode::ActorCtx1 => "actor_ctx1".into(),
            ContextMode::CriticCtx1 => "critic_ctx1".into(),
            ContextMode::RnnLike => "rnn_like".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// Temporal attention window, current frame included.
    pub window: usize,
    /// 1-based block indices followed by a linear-attention memory layer.
    pub memory_after: Vec<usize>,
    pub mlp_ratio: usize,
    pub memory_eps: f64,
    pub layer_norm_eps: f64,
    /// Learned 2D positional encodings on patch tokens.
    pub patch_positions: bool,
    pub mode: ContextMode,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            patch: 8,
            d_model: 128,
            heads: 4,
            layers: 4,
            window: 64,
            memory_after: vec![2, 4],
            mlp_ratio: 4,
            memory_eps: 1e-6,
            layer_norm_eps: 1e-5,
            patch_positions: true,
            mode: ContextMode::Full,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidArgument(format!("policy config: {m}")));
        if self.patch == 0 || self.height % self.patch != 0 || self.width % self.patch != 0 {
            return bad(format!(
                "resolution {}x{} is not divisible by patch {}",
                self.height, self.width, self.patch
            ));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.heads));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if let Some(&b) = self.memory_after.iter().find(|&&b| b == 0 || b > self.layers) {
            return bad(format!("memory layer after block {b} of {}", self.layers));
        }
        if let ContextMode::Ctx(0) = self.mode {
            return bad("ctx0 is not a context".into());
        }
        Ok(())
    }

    pub fn patches(&self) -> usize {
        (self.height / self.patch) * (self.width / self.patch)
    }

    /// Features per patch: RGB plus the six ray channels.
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 9
    }

    pub fn mlp_hidden(&self) -> usize {
        self.d_model * self.mlp_ratio
    }
}
