//! Tile-binned rasterizer for isotropic splats.
//!
//! Geometry (means, scales) is fixed once projected, so footprints are
//! constants and only colors and opacities carry gradients.

use rbc_grad::Scalar;

use crate::camera::{Intrinsics, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    pub tile: usize,
    /// Footprint support radius in standard deviations.
    pub cutoff_sigma: f64,
    /// Screen-space variance added to every footprint (pixels squared).
    pub dilation: f64,
    pub near: f64,
    /// Compositing stops once transmittance drops below this.
    pub min_transmittance: f64,
    pub background: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile: 8,
            cutoff_sigma: 3.0,
            dilation: 0.3,
            near: 0.05,
            min_transmittance: 1e-3,
            background: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Footprint {
    index: u32,
    u: f64,
    v: f64,
    /// `1 / (2 sigma^2)` in pixels.
    inv_two_var: f64,
    radius2: f64,
    depth: f64,
}

/// One primitive's contribution to a pixel, in compositing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub index: usize,
    pub footprint: f64,
    pub alpha: f64,
    /// Transmittance in front of this primitive.
    pub transmittance: f64,
    pub weight: f64,
}

/// Result of compositing at precision `S`.
#[derive(Debug, Clone)]
pub struct Composite<S> {
    /// `[h, w, 3]`
    pub rgb: Vec<S>,
    /// Residual transmittance per pixel.
    pub transmittance: Vec<S>,
    /// Weight-normalized expected depth (0 where nothing is hit).
    pub depth: Vec<S>,
}

/// Splats projected into one camera and binned into screen tiles sorted
/// front to back.
#[derive(Debug, Clone)]
pub struct SplatView {
    intr: Intrinsics,
    cfg: RasterConfig,
    prims: Vec<Footprint>,
    tiles_x: usize,
    tiles_y: usize,
    bins: Vec<Vec<u32>>,
}

impl SplatView {
    pub fn new(
        means: &[[f32; 3]],
        scales: &[f32],
        pose: &Pose,
        intr: &Intrinsics,
        cfg: &RasterConfig,
    ) -> Self {
        let rt = pose.rotation().transpose();
        let origin = pose.position();
        let mut prims = Vec::new();
        for (i, (m, &s)) in means.iter().zip(scales).enumerate() {
            let p = rt * (Vec3::new(m[0] as f64, m[1] as f64, m[2] as f64) - origin);
            if p.z <= cfg.near {
                continue;
            }
            let u = intr.f * p.x / p.z + intr.cx;
            let v = intr.f * p.y / p.z + intr.cy;
            let sigma_px = intr.f * s as f64 / p.z;
            let var = sigma_px * sigma_px + cfg.dilation;
            let radius2 = cfg.cutoff_sigma * cfg.cutoff_sigma * var;
            let r = radius2.sqrt();
            if u + r < 0.0 || v + r < 0.0 || u - r > intr.width as f64 || v - r > intr.height as f64 {
                continue;
            }
            prims.push(Footprint {
                index: i as u32,
                u,
                v,
                inv_two_var: 0.5 / var,
                radius2,
                depth: p.z,
            });
        }
        prims.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

        let t = cfg.tile.max(1);
        let tiles_x = intr.width.div_ceil(t);
        let tiles_y = intr.height.div_ceil(t);
        let mut bins = vec![Vec::new(); tiles_x * tiles_y];
        for (k, p) in prims.iter().enumerate() {
            let r = p.radius2.sqrt();
            let clamp_tile = |x: f64, n: usize| ((x / t as f64).floor().max(0.0) as usize).min(n - 1);
            let (tx0, tx1) = (clamp_tile(p.u - r, tiles_x), clamp_tile(p.u + r, tiles_x));
            let (ty0, ty1) = (clamp_tile(p.v - r, tiles_y), clamp_tile(p.v + r, tiles_y));
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    bins[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self {
            intr: *intr,
            cfg: *cfg,
            prims,
            tiles_x,
            tiles_y,
            bins,
        }
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intr
    }

    /// Number of primitives in front of the camera and overlapping the image.
    pub fn visible(&self) -> usize {
        self.prims.len()
    }

    /// Indices (into the cloud) of primitives overlapping the image.
    pub fn visible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.prims.iter().map(|p| p.index as usize)
    }

    fn bin(&self, row: usize, col: usize) -> &[u32] {
        let t = self.cfg.tile.max(1);
        &self.bins[(row / t) * self.tiles_x + col / t]
    }

    #[inline]
    fn footprint(&self, p: &Footprint, row: usize, col: usize) -> Option<f64> {
        let du = col as f64 + 0.5 - p.u;
        let dv = row as f64 + 0.5 - p.v;
        let d2 = du * du + dv * dv;
        (d2 <= p.radius2).then(|| (-d2 * p.inv_two_var).exp())
    }

    /// Visit the contributions of one pixel front to back.
    fn walk<S: Scalar>(&self, opacities: &[S], row: usize, col: usize, mut f: impl FnMut(usize, S, S, S)) -> S {
        let t_min = S::from_f64(self.cfg.min_transmittance);
        let mut trans = S::one();
        for &k in self.bin(row, col) {
            let p = &self.prims[k as usize];
            let Some(g) = self.footprint(p, row, col) else {
                continue;
            };
            let g = S::from_f64(g);
            let i = p.index as usize;
            let a = opacities[i] * g;
            f(k as usize, g, a, trans);
            trans *= S::one() - a;
            if trans < t_min {
                break;
            }
        }
        trans
    }

    /// Contributions to pixel `(row, col)` in compositing order.
    pub fn trace(&self, opacities: &[f32], row: usize, col: usize) -> (Vec<Contribution>, f64) {
        let op: Vec<f64> = opacities.iter().map(|&o| o as f64).collect();
        let mut out = Vec::new();
        let t = self.walk(&op, row, col, |k, g, a, trans| {
            out.push(Contribution {
                index: self.prims[k].index as usize,
                footprint: g,
                alpha: a,
                transmittance: trans,
                weight: trans * a,
            })
        });
        (out, t)
    }

    pub fn composite<S: Scalar>(&self, colors: &[S], opacities: &[S]) -> Composite<S> {
        let (h, w) = (self.intr.height, self.intr.width);
        let bg = S::from_f64(self.cfg.background);
        let mut rgb = vec![S::zero(); h * w * 3];
        let mut transmittance = vec![S::one(); h * w];
        let mut depth = vec![S::zero(); h * w];
        for ty in 0..self.tiles_y {
            for tx in 0..self.tiles_x {
                let t = self.cfg.tile.max(1);
                for row in ty * t..((ty + 1) * t).min(h) {
                    for col in tx * t..((tx + 1) * t).min(w) {
                        let mut c = [S::zero(); 3];
                        let mut z = S::zero();
                        let trans = self.walk(opacities, row, col, |k, _, a, trans| {
                            let wgt = trans * a;
                            let i = self.prims[k].index as usize;
                            for ch in 0..3 {
                                c[ch] += wgt * colors[i * 3 + ch];
                            }
                            z += wgt * S::from_f64(self.prims[k].depth);
                        });
                        let px = row * w + col;
                        for ch in 0..3 {
                            rgb[px * 3 + ch] = c[ch] + trans * bg;
                        }
                        transmittance[px] = trans;
                        let covered = S::one() - trans;
                        if covered > S::zero() {
                            depth[px] = z / covered;
                        }
                    }
                }
            }
        }
        Composite {
            rgb,
            transmittance,
            depth,
        }
    }

    /// Mean squared error against `target` (`[h, w, 3]`) and its gradient
    /// with respect to colors (`[n, 3]`) and opacities (`[n]`).
    ///
    /// Uses the back-to-front recurrence `B <- a c + (1 - a) B` for the
    /// color composited behind each primitive, so no division by
    /// `1 - a` is needed.
    pub fn mse_backward<S: Scalar>(
        &self,
        colors: &[S],
        opacities: &[S],
        target: &[S],
    ) -> (S, Vec<S>, Vec<S>) {
        let (h, w) = (self.intr.height, self.intr.width);
        let n = opacities.len();
        let bg = S::from_f64(self.cfg.background);
        let norm = S::from_f64(1.0 / (h * w * 3) as f64);
        let two_norm = norm + norm;
        let mut g_col = vec![S::zero(); n * 3];
        let mut g_op = vec![S::zero(); n];
        let mut loss = S::zero();
        let mut trail: Vec<(usize, S, S, S)> = Vec::new();
        for row in 0..h {
            for col in 0..w {
                trail.clear();
                let mut c = [S::zero(); 3];
                let trans = self.walk(opacities, row, col, |k, g, a, t| {
                    let i = self.prims[k].index as usize;
                    for ch in 0..3 {
                        c[ch] += t * a * colors[i * 3 + ch];
                    }
                    trail.push((i, g, a, t));
                });
                let px = row * w + col;
                let mut dc = [S::zero(); 3];
                for ch in 0..3 {
                    let r = c[ch] + trans * bg - target[px * 3 + ch];
                    loss += r * r * norm;
                    dc[ch] = r * two_norm;
                }
                let mut behind = [bg; 3];
                for &(i, g, a, t) in trail.iter().rev() {
                    let wgt = t * a;
                    let mut da = S::zero();
                    for ch in 0..3 {
                        let ci = colors[i * 3 + ch];
                        g_col[i * 3 + ch] += dc[ch] * wgt;
                        da += dc[ch] * t * (ci - behind[ch]);
                        behind[ch] = a * ci + (S::one() - a) * behind[ch];
                    }
                    g_op[i] += da * g;
                }
            }
        }
        (loss, g_col, g_op)
    }
}
