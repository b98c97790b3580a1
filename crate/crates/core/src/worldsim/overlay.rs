use crate::camera::{Pose, Vec3};
use crate::image::Image;

use super::scene::Scene;

const WALL: [f32; 3] = [0.15, 0.15, 0.17];
const FREE: [f32; 3] = [0.88, 0.88, 0.86];
const SEEN: [f32; 3] = [0.45, 0.8, 0.45];
const UNSEEN: [f32; 3] = [0.9, 0.55, 0.55];
const PATH: [f32; 3] = [0.85, 0.1, 0.1];
const START: [f32; 3] = [0.1, 0.2, 0.9];

/// Top-down map with optional seen/unseen surface points and a path.
#[derive(Debug, Clone)]
pub struct TopDown {
    pub image: Image,
    px_per_cell: usize,
    rows: usize,
}

impl TopDown {
    pub fn new(scene: &Scene, px_per_cell: usize) -> Self {
        let p = px_per_cell.max(1);
        let (h, w) = (scene.height() * p, scene.width() * p);
        let mut image = Image::new(h, w, 3);
        for r in 0..h {
            for c in 0..w {
                let (x, y) = (c / p, scene.height() - 1 - r / p);
                let color = if scene.is_wall(x as i64, y as i64) { WALL } else { FREE };
                image.pixel_mut(r, c).copy_from_slice(&color);
            }
        }
        Self {
            image,
            px_per_cell: p,
            rows: h,
        }
    }

    fn to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let p = self.px_per_cell as f64;
        let c = (x * p).floor();
        let r = self.rows as f64 - 1.0 - (y * p).floor();
        if c < 0.0 || r < 0.0 || c >= self.image.width as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    fn dot(&mut self, x: f64, y: f64, color: [f32; 3]) {
        if let Some((r, c)) = self.to_pixel(x, y) {
            self.image.pixel_mut(r, c).copy_from_slice(&color);
        }
    }

    /// Shade surface points green where observed and red elsewhere.
    pub fn points(&mut self, points: &[Vec3], seen: &[bool]) {
        for (p, &s) in points.iter().zip(seen) {
            self.dot(p.x, p.y, if s { SEEN } else { UNSEEN });
        }
    }

    pub fn path(&mut self, poses: &[Pose]) {
        let step = 0.5 / self.px_per_cell as f64;
        for w in poses.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = a.distance(&b);
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                self.dot(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), PATH);
            }
        }
        if let Some(first) = poses.first() {
            self.dot(first.x, first.y, START);
        }
    }
}
