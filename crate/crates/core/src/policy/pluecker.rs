use crate::camera::{Action, Intrinsics, Pose, Vec3};

/// Six-channel ray field of the post-action camera, in the pre-action
/// camera frame: unit direction `d` then moment `o x d`, per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ActionImage {
    pub const CHANNELS: usize = 6;

    pub fn direction(&self, row: usize, col: usize) -> Vec3 {
        let i = (row * self.width + col) * 6;
        Vec3::new(self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64)
    }

    pub fn moment(&self, row: usize, col: usize) -> Vec3 {
        let i = (row * self.width + col) * 6 + 3;
        Vec3::new(self.data[i] as f64, self.data[i + 1] as f64, self.data[i + 2] as f64)
    }
}

/// Encode the intended rigid motion of `action`, ignoring collisions.
pub fn encode_action_pluecker(action: Action, intr: &Intrinsics) -> ActionImage {
    // relative transform is heading independent; evaluate it at the origin
    let before = Pose::new(0.0, 0.0, 0);
    let after = before.intended(action);
    let rt = before.rotation().transpose();
    let rel_rot = rt * after.rotation();
    let origin = rt * (after.position() - before.position());
    let mut data = Vec::with_capacity(intr.height * intr.width * 6);
    for row in 0..intr.height {
        for col in 0..intr.width {
            let d = (rel_rot * intr.pixel_ray(row, col)).normalize();
            let m = origin.cross(&d);
            data.extend([d.x, d.y, d.z, m.x, m.y, m.z].map(|v| v as f32));
        }
    }
    ActionImage {
        height: intr.height,
        width: intr.width,
        data,
    }
}
