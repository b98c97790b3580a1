use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rbc_grad::{image::blur, AdamConfig};

use crate::camera::{Intrinsics, Pose};
use crate::error::{io_err, CoreError, Result};
use crate::image::Image;
use crate::worldsim::Frame;

use super::raster::{RasterConfig, SplatView};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"RBCG";

#[derive(Debug, Clone, PartialEq)]
pub struct SplatConfig {
    /// Candidate pixels are every `insert_stride`-th row and column.
    pub insert_stride: usize,
    pub opacity_init: f32,
    /// World scale as a multiple of the pixel footprint times the stride.
    pub scale_factor: f64,
    /// Upper bound on world scale in meters. Surfaces first seen from far
    /// away would otherwise keep coarse primitives that blur later
    /// close-up views of the same surface.
    pub max_scale: f64,
    /// Keep only the most recent frames (and their primitives).
    pub memory_window: Option<usize>,
    /// Insertion gate enabled.
    pub gate: bool,
    /// Squared color error (of the low-passed difference image) above
    /// which a pixel is inserted.
    pub insert_error: f64,
    /// Gaussian low-pass applied to the gate's difference image.
    pub gate_blur_kernel: usize,
    pub gate_blur_sigma: f64,
    /// The low-passed difference is average-pooled by this factor before
    /// thresholding, matching the resolution the curiosity error uses.
    pub gate_downsample: usize,
    /// Predicted transmittance above which a pixel is inserted.
    pub insert_transmittance: f64,
    pub lr_color: f32,
    pub lr_opacity: f32,
    pub refine_views: usize,
    pub refine_every: usize,
    pub opacity_floor: f32,
    pub raster: RasterConfig,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            insert_stride: 2,
            opacity_init: 0.9,
            scale_factor: 0.25,
            max_scale: 0.01,
            memory_window: None,
            gate: true,
            insert_error: 0.005,
            gate_blur_kernel: 5,
            gate_blur_sigma: 1.0,
            gate_downsample: 4,
            insert_transmittance: 0.5,
            lr_color: 0.01,
            lr_opacity: 0.05,
            refine_views: 10,
            refine_every: 16,
            opacity_floor: 0.01,
            raster: RasterConfig::default(),
        }
    }
}

/// Render of the cloud from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub rgb: Image,
    /// Single channel residual transmittance.
    pub transmittance: Image,
    pub depth: Option<Image>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub added: usize,
    pub skipped_nonfinite: usize,
    pub evicted_frames: usize,
    pub evicted_primitives: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct StoredView {
    id: u64,
    pose: Pose,
    rgb: Image,
}

/// Persistent splat reconstruction: frozen isotropic geometry from depth
/// unprojection, learnable colors and opacities.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatCloud {
    cfg: SplatConfig,
    intr: Intrinsics,
    means: Vec<[f32; 3]>,
    scales: Vec<f32>,
    colors: Vec<f32>,
    opacities: Vec<f32>,
    source: Vec<u64>,
    // per-primitive Adam state: 3 color + 1 opacity coordinates
    m: Vec<[f32; 4]>,
    v: Vec<[f32; 4]>,
    steps: Vec<u32>,
    frames: VecDeque<StoredView>,
    next_id: u64,
}

fn mse(a: &Image, b: &Image) -> f64 {
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum();
    s / a.data.len().max(1) as f64
}

impl SplatCloud {
    pub fn new(cfg: SplatConfig, intr: Intrinsics) -> Self {
        Self {
            cfg,
            intr,
            means: Vec::new(),
            scales: Vec::new(),
            colors: Vec::new(),
            opacities: Vec::new(),
            source: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            steps: Vec::new(),
            frames: VecDeque::new(),
            next_id: 0,
        }
    }

    pub fn config(&self) -> &SplatConfig {
        &self.cfg
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intr
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[[f32; 3]] {
        &self.means
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn colors(&self) -> &[f32] {
        &self.colors
    }

    pub fn opacities(&self) -> &[f32] {
        &self.opacities
    }

    pub fn opacities_mut(&mut self) -> &mut [f32] {
        &mut self.opacities
    }

    pub fn colors_mut(&mut self) -> &mut [f32] {
        &mut self.colors
    }

    /// Frame id each primitive was inserted from.
    pub fn sources(&self) -> &[u64] {
        &self.source
    }

    /// Ids of the stored frames, oldest first.
    pub fn stored_frames(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.id).collect()
    }

    pub fn clear(&mut self) {
        *self = SplatCloud::new(self.cfg.clone(), self.intr);
    }

    /// Add one primitive directly (tests and tools).
    pub fn push(&mut self, mean: [f32; 3], scale: f32, color: [f32; 3], opacity: f32, source: u64) {
        self.means.push(mean);
        self.scales.push(scale);
        self.colors.extend_from_slice(&color);
        self.opacities.push(opacity.clamp(0.0, 1.0));
        self.source.push(source);
        self.m.push([0.0; 4]);
        self.v.push([0.0; 4]);
        self.steps.push(0);
    }

    fn retain(&mut self, keep: &[bool]) -> usize {
        let before = self.len();
        let mut w = 0;
        for r in 0..before {
            if !keep[r] {
                continue;
            }
            self.means[w] = self.means[r];
            self.scales[w] = self.scales[r];
            self.colors.copy_within(r * 3..r * 3 + 3, w * 3);
            self.opacities[w] = self.opacities[r];
            self.source[w] = self.source[r];
            self.m[w] = self.m[r];
            self.v[w] = self.v[r];
            self.steps[w] = self.steps[r];
            w += 1;
        }
        self.means.truncate(w);
        self.scales.truncate(w);
        self.colors.truncate(w * 3);
        self.opacities.truncate(w);
        self.source.truncate(w);
        self.m.truncate(w);
        self.v.truncate(w);
        self.steps.truncate(w);
        before - w
    }

    pub fn view(&self, pose: &Pose) -> SplatView {
        SplatView::new(&self.means, &self.scales, pose, &self.intr, &self.cfg.raster)
    }

    pub fn render_view(&self, pose: &Pose) -> RenderResult {
        let (h, w) = (self.intr.height, self.intr.width);
        let comp = self.view(pose).composite::<f32>(&self.colors, &self.opacities);
        RenderResult {
            rgb: Image::from_data(h, w, 3, comp.rgb).expect("render size"),
            transmittance: Image::from_data(h, w, 1, comp.transmittance).expect("render size"),
            depth: Some(Image::from_data(h, w, 1, comp.depth).expect("render size")),
        }
    }

    /// Render at the pose the next observation will be taken from. Reads
    /// only the current state; see the curiosity driver for ordering.
    pub fn predict(&self, next_pose: &Pose) -> RenderResult {
        self.render_view(next_pose)
    }

    /// Unproject gated pixels of `frame` into new primitives. `prediction`
    /// is the render of the current cloud at `frame.pose` and is computed
    /// here when absent.
    pub fn insert_frame(&mut self, frame: &Frame, prediction: Option<&RenderResult>) -> InsertStats {
        let mut stats = InsertStats::default();
        let owned;
        let pred = if self.cfg.gate {
            match prediction {
                Some(p) => Some(p),
                None => {
                    owned = self.render_view(&frame.pose);
                    Some(&owned)
                }
            }
        } else {
            None
        };
        let id = self.next_id;
        self.next_id += 1;
        let rot = frame.pose.rotation();
        let origin = frame.pose.position();
        let stride = self.cfg.insert_stride.max(1);
        let footprint = self.cfg.scale_factor * stride as f64 / self.intr.f;
        let offset = stride / 2;
        let (h, w) = (frame.rgb.height, frame.rgb.width);
        let ds = self.cfg.gate_downsample.max(1);
        let (gh, gw) = (h.div_ceil(ds), w.div_ceil(ds));
        let gate_err = pred.map(|p| {
            let diff: Vec<f32> = p.rgb.data.iter().zip(&frame.rgb.data).map(|(a, b)| a - b).collect();
            let k = self.cfg.gate_blur_kernel;
            let low = if k > 1 {
                blur(&diff, h, w, 3, k, self.cfg.gate_blur_sigma)
            } else {
                diff
            };
            // squared norm of the mean difference over each ds x ds cell
            let mut acc = vec![[0f64; 3]; gh * gw];
            let mut cnt = vec![0usize; gh * gw];
            for r in 0..h {
                for c in 0..w {
                    let cell = (r / ds) * gw + c / ds;
                    cnt[cell] += 1;
                    for ch in 0..3 {
                        acc[cell][ch] += low[(r * w + c) * 3 + ch] as f64;
                    }
                }
            }
            acc.iter()
                .zip(&cnt)
                .map(|(a, &n)| a.iter().map(|x| (x / n as f64).powi(2)).sum::<f64>())
                .collect::<Vec<f64>>()
        });
        for row in (offset..frame.rgb.height).step_by(stride) {
            for col in (offset..frame.rgb.width).step_by(stride) {
                let obs = frame.rgb.pixel(row, col);
                if let (Some(p), Some(d)) = (pred, gate_err.as_ref()) {
                    let err = d[(row / ds) * gw + col / ds];
                    let t = p.transmittance.pixel(row, col)[0] as f64;
                    if err <= self.cfg.insert_error && t <= self.cfg.insert_transmittance {
                        continue;
                    }
                }
                let d = frame.depth.pixel(row, col)[0] as f64;
                if !d.is_finite() || d <= 0.0 {
                    stats.skipped_nonfinite += 1;
                    continue;
                }
                let dir = (rot * self.intr.pixel_ray(row, col)).normalize();
                let mean = origin + dir * d;
                // pixel footprint grows with distance along the optical axis
                let z = d / self.intr.pixel_ray(row, col).norm();
                self.push(
                    [mean.x as f32, mean.y as f32, mean.z as f32],
                    (footprint * z).min(self.cfg.max_scale) as f32,
                    [obs[0], obs[1], obs[2]],
                    self.cfg.opacity_init,
                    id,
                );
                stats.added += 1;
            }
        }
        self.frames.push_back(StoredView {
            id,
            pose: frame.pose,
            rgb: frame.rgb.clone(),
        });
        if let Some(w) = self.cfg.memory_window {
            while self.frames.len() > w.max(1) {
                let old = self.frames.pop_front().expect("non-empty");
                let keep: Vec<bool> = self.source.iter().map(|&s| s != old.id).collect();
                stats.evicted_primitives += self.retain(&keep);
                stats.evicted_frames += 1;
            }
        }
        stats
    }

    /// Reconstruction MSE of a stored view.
    pub fn view_loss(&self, pose: &Pose, target: &Image) -> f64 {
        mse(&self.render_view(pose).rgb, target)
    }

    /// One Adam step on colors and opacities against a single view;
    /// returns the pre-step loss.
    pub fn fit_view(&mut self, pose: &Pose, target: &Image) -> f64 {
        let view = self.view(pose);
        let (loss, g_col, g_op) = view.mse_backward::<f32>(&self.colors, &self.opacities, &target.data);
        let color_adam = AdamConfig::with_lr(self.cfg.lr_color);
        let opacity_adam = AdamConfig::with_lr(self.cfg.lr_opacity);
        for i in 0..self.len() {
            let g = [g_col[i * 3], g_col[i * 3 + 1], g_col[i * 3 + 2], g_op[i]];
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            self.steps[i] += 1;
            let step = self.steps[i] as u64;
            for ch in 0..3 {
                let c = &mut self.colors[i * 3 + ch];
                color_adam.update(c, g[ch], &mut self.m[i][ch], &mut self.v[i][ch], step);
                *c = c.clamp(0.0, 1.0);
            }
            let o = &mut self.opacities[i];
            opacity_adam.update(o, g[3], &mut self.m[i][3], &mut self.v[i][3], step);
            *o = o.clamp(0.0, 1.0);
        }
        loss as f64
    }

    /// Sample `n_views` stored frames uniformly and take one step on each.
    /// Returns the mean pre-step loss.
    pub fn refine(&mut self, n_views: usize, rng: &mut impl Rng) -> Result<f64> {
        if self.frames.is_empty() {
            return Err(CoreError::EmptyFrameStore);
        }
        let mut total = 0.0;
        for _ in 0..n_views {
            let k = rng.random_range(0..self.frames.len());
            let (pose, rgb) = {
                let f = &self.frames[k];
                (f.pose, f.rgb.clone())
            };
            total += self.fit_view(&pose, &rgb);
        }
        Ok(total / n_views.max(1) as f64)
    }

    /// Drop primitives whose opacity is below `floor`.
    pub fn prune(&mut self, floor: f32) -> usize {
        let keep: Vec<bool> = self.opacities.iter().map(|&o| o >= floor).collect();
        self.retain(&keep)
    }

    /// Binary snapshot: magic, u32 count, then per primitive mean (3 f32),
    /// scale, color (3 f32), opacity; all little-endian.
    pub fn write_snapshot(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(self.len() as u32).to_le_bytes())?;
        for i in 0..self.len() {
            let mut rec = [0f32; 8];
            rec[..3].copy_from_slice(&self.means[i]);
            rec[3] = self.scales[i];
            rec[4..7].copy_from_slice(&self.colors[i * 3..i * 3 + 3]);
            rec[7] = self.opacities[i];
            for x in rec {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(8 + self.len() * 32);
        self.write_snapshot(&mut buf).map_err(io_err(path))?;
        std::fs::write(path, buf).map_err(io_err(path))
    }

    /// Read a snapshot into a cloud with no stored frames.
    pub fn read_snapshot(input: &mut impl Read, cfg: SplatConfig, intr: Intrinsics) -> Result<SplatCloud> {
        let bad = |m: &str| CoreError::InvalidArgument(format!("splat snapshot: {m}"));
        let mut head = [0u8; 8];
        input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if &head[..4] != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let n = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let mut cloud = SplatCloud::new(cfg, intr);
        let mut rec = [0u8; 32];
        for _ in 0..n {
            input.read_exact(&mut rec).map_err(|_| bad("truncated body"))?;
            let f = |k: usize| f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().expect("4 bytes"));
            cloud.push([f(0), f(1), f(2)], f(3), [f(4), f(5), f(6)], f(7), 0);
        }
        Ok(cloud)
    }
}
