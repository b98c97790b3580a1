use crate::camera::{Intrinsics, Pose, Vec3};
use crate::error::{CoreError, Result};
use crate::image::Image;

use super::scene::{Scene, Side, WALL_HEIGHT};

/// Distance falloff of the shading term.
const ATTENUATION: f64 = 0.02;
/// Checker square edge in meters.
const CHECKER: f64 = 0.5;
const DARK_SQUARE: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Wall { x: usize, y: usize, side: Side },
    Floor,
    Ceiling,
    Sphere(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the (unit) ray.
    pub t: f64,
    pub point: Vec3,
    pub surface: Surface,
}

/// Colored ball drawn on top of the maze (apples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub color: [f64; 3],
}

impl Scene {
    /// First intersection of the ray `origin + t * dir` (`dir` unit length)
    /// with walls, floor or ceiling, found by grid traversal in the plane.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Hit {
        let plane = if dir.z < -1e-12 {
            Some((-origin.z / dir.z, Surface::Floor))
        } else if dir.z > 1e-12 {
            Some(((WALL_HEIGHT - origin.z) / dir.z, Surface::Ceiling))
        } else {
            None
        };
        let plane_t = plane.map_or(f64::INFINITY, |p| p.0);

        let mut cx = origin.x.floor() as i64;
        let mut cy = origin.y.floor() as i64;
        let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
        let (mut t_max_x, dt_x) = if dir.x.abs() < 1e-15 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let edge = if step_x > 0 { cx as f64 + 1.0 } else { cx as f64 };
            ((edge - origin.x) / dir.x, (1.0 / dir.x).abs())
        };
        let (mut t_max_y, dt_y) = if dir.y.abs() < 1e-15 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let edge = if step_y > 0 { cy as f64 + 1.0 } else { cy as f64 };
            ((edge - origin.y) / dir.y, (1.0 / dir.y).abs())
        };
        let limit = (self.width() + self.height()) as i64 * 2 + 4;
        for _ in 0..limit {
            let (t, side) = if t_max_x < t_max_y {
                let t = t_max_x;
                t_max_x += dt_x;
                cx += step_x;
                (t, if step_x > 0 { Side::West } else { Side::East })
            } else {
                let t = t_max_y;
                t_max_y += dt_y;
                cy += step_y;
                (t, if step_y > 0 { Side::South } else { Side::North })
            };
            if plane_t <= t {
                break;
            }
            if self.is_wall(cx, cy) {
                return Hit {
                    t,
                    point: origin + dir * t,
                    surface: Surface::Wall {
                        x: cx as usize,
                        y: cy as usize,
                        side,
                    },
                };
            }
        }
        let (t, surface) = plane.expect("horizontal ray escaped a walled grid");
        let mut point = origin + dir * t;
        // snap onto the plane exactly
        point.z = if surface == Surface::Floor { 0.0 } else { WALL_HEIGHT };
        Hit { t, point, surface }
    }

    pub fn shade(&self, hit: &Hit) -> [f64; 3] {
        let p = hit.point;
        let checker = |u: f64, v: f64, phase: u8| {
            let k = (u / CHECKER).floor() as i64 + (v / CHECKER).floor() as i64 + phase as i64;
            if k.rem_euclid(2) == 0 {
                1.0
            } else {
                DARK_SQUARE
            }
        };
        let (albedo, tex) = match hit.surface {
            Surface::Wall { x, y, side } => {
                let (rgb, phase) = self.wall_albedo(x, y, side);
                let u = match side {
                    Side::East | Side::West => p.y,
                    Side::North | Side::South => p.x,
                };
                (rgb, checker(u, p.z, phase))
            }
            Surface::Floor => {
                let (x, y) = (p.x.floor().max(0.0) as usize, p.y.floor().max(0.0) as usize);
                (self.floor_albedo(x, y), checker(p.x, p.y, 0))
            }
            Surface::Ceiling => (self.ceiling_albedo(), 0.5 * (1.0 + checker(p.x, p.y, 1))),
            Surface::Sphere(_) => ([1.0; 3], 1.0),
        };
        let fall = (-ATTENUATION * hit.t).exp();
        albedo.map(|a| a * tex * fall)
    }
}

fn ray_sphere(origin: &Vec3, dir: &Vec3, s: &Sphere) -> Option<f64> {
    let oc = origin - s.center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - s.radius * s.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 1e-9).then_some(t)
}

/// RGB in `[0,1]` and Euclidean depth of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub rgb: Image,
    pub depth: Image,
}

pub fn render(scene: &Scene, pose: &Pose, intr: &Intrinsics) -> Result<View> {
    render_with(scene, pose, intr, &[])
}

/// Render with extra spheres composited by depth.
pub fn render_with(scene: &Scene, pose: &Pose, intr: &Intrinsics, spheres: &[Sphere]) -> Result<View> {
    if !scene.is_free_point(pose.x, pose.y) {
        return Err(CoreError::PoseInWall { x: pose.x, y: pose.y });
    }
    let (h, w) = (intr.height, intr.width);
    let mut rgb = Image::new(h, w, 3);
    let mut depth = Image::new(h, w, 1);
    let origin = pose.position();
    let rot = pose.rotation();
    for row in 0..h {
        for col in 0..w {
            let dir = (rot * intr.pixel_ray(row, col)).normalize();
            let mut hit = scene.raycast(&origin, &dir);
            let mut color = None;
            for s in spheres {
                if let Some(t) = ray_sphere(&origin, &dir, s) {
                    if t < hit.t {
                        hit = Hit {
                            t,
                            point: origin + dir * t,
                            surface: Surface::Sphere(0),
                        };
                        let fall = (-ATTENUATION * t).exp();
                        color = Some(s.color.map(|c| c * fall));
                    }
                }
            }
            let c = color.unwrap_or_else(|| scene.shade(&hit));
            let px = rgb.pixel_mut(row, col);
            for k in 0..3 {
                px[k] = c[k] as f32;
            }
            depth.pixel_mut(row, col)[0] = hit.t as f32;
        }
    }
    Ok(View { rgb, depth })
}

/// World-space points of every depth pixel of a view.
pub fn back_project(depth: &Image, pose: &Pose, intr: &Intrinsics, stride: usize) -> Vec<Vec3> {
    let stride = stride.max(1);
    let rot = pose.rotation();
    let origin = pose.position();
    let mut pts = Vec::with_capacity(depth.height * depth.width / (stride * stride));
    for row in (0..depth.height).step_by(stride) {
        for col in (0..depth.width).step_by(stride) {
            let d = depth.pixel(row, col)[0] as f64;
            if !d.is_finite() || d <= 0.0 {
                continue;
            }
            let dir = (rot * intr.pixel_ray(row, col)).normalize();
            pts.push(origin + dir * d);
        }
    }
    pts
}
