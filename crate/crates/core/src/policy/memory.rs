use std::collections::VecDeque;

/// Running sums of one linear-attention memory layer: `s` is `d x d`
/// row-major, `n` has `d` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub s: Vec<f32>,
    pub n: Vec<f32>,
}

/// Per-episode recurrent state of the policy.
///
/// Each entry of `blocks` keeps the inputs of one temporal block for the
/// last `window` frames, so the next step attends over them without
/// replaying the episode. Limited-context variants keep only the frame
/// tokens and rebuild every window from them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMemory {
    pub(crate) t: usize,
    pub(crate) d_model: usize,
    pub(crate) window: usize,
    pub(crate) blocks: Vec<VecDeque<Vec<f32>>>,
    pub(crate) layers: Vec<LinearState>,
    pub(crate) gru: Vec<f32>,
}

impl EpisodeMemory {
    pub(crate) fn new(d_model: usize, window: usize, blocks: usize, layers: usize, gru_hidden: usize) -> Self {
        let zero = LinearState {
            s: vec![0.0; d_model * d_model],
            n: vec![0.0; d_model],
        };
        Self {
            t: 0,
            d_model,
            window,
            blocks: vec![VecDeque::new(); blocks],
            layers: vec![zero; layers],
            gru: vec![0.0; gru_hidden],
        }
    }

    /// Frames consumed so far in this episode.
    pub fn timestep(&self) -> usize {
        self.t
    }

    /// Frames currently held by the window buffer.
    pub fn tokens_held(&self) -> usize {
        self.blocks.first().map_or(0, VecDeque::len)
    }

    pub fn linear_states(&self) -> &[LinearState] {
        &self.layers
    }

    pub fn recurrent_state(&self) -> &[f32] {
        &self.gru
    }

    /// Number of f32 values held.
    pub fn footprint(&self) -> usize {
        let blocks: usize = self.blocks.iter().map(|b| b.len() * self.d_model).sum();
        let layers: usize = self.layers.iter().map(|l| l.s.len() + l.n.len()).sum();
        blocks + layers + self.gru.len()
    }

    pub(crate) fn push_block(&mut self, block: usize, rows: &[f32]) {
        let (d, cap) = (self.d_model, self.window);
        let buf = &mut self.blocks[block];
        for r in rows.chunks(d) {
            buf.push_back(r.to_vec());
            if buf.len() > cap {
                buf.pop_front();
            }
        }
    }
}

/// The last `keep` rows of a frame buffer, flattened.
pub(crate) fn tail_rows(buf: &VecDeque<Vec<f32>>, keep: usize) -> Vec<f32> {
    let skip = buf.len().saturating_sub(keep);
    buf.iter().skip(skip).flatten().copied().collect()
}
