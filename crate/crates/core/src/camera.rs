//! Agent pose, discrete actions and the pinhole camera model.
//!
//! World frame: x east, y north, z up. Yaw is measured counter-clockwise
//! from +x. Camera frame: x right, y down, z forward.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Camera height above the floor.
pub const EYE_HEIGHT: f64 = 1.25;
/// Number of discrete headings (15 degree turns).
pub const HEADINGS: u8 = 24;
pub const TURN_RADIANS: f64 = 2.0 * PI / HEADINGS as f64;
pub const FORWARD_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Forward = 0,
    TurnRight = 1,
    TurnLeft = 2,
    Pause = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Forward,
        Action::TurnRight,
        Action::TurnLeft,
        Action::Pause,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Heading change in turn units (+1 is counter-clockwise).
    pub fn turn(self) -> i8 {
        match self {
            Action::TurnLeft => 1,
            Action::TurnRight => -1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnRight => "turn_right",
            Action::TurnLeft => "turn_left",
            Action::Pause => "pause",
        }
    }
}

/// Position in meters at fixed eye height, heading in 15 degree units.
///
/// Storing the heading as an index keeps 24 left turns an exact identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: u8,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: u8) -> Self {
        Self {
            x,
            y,
            heading: heading % HEADINGS,
        }
    }

    pub fn z(&self) -> f64 {
        EYE_HEIGHT
    }

    /// Yaw in `[0, 2*pi)`.
    pub fn yaw(&self) -> f64 {
        self.heading as f64 * TURN_RADIANS
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, EYE_HEIGHT)
    }

    pub fn turned(&self, units: i8) -> Pose {
        let h = (self.heading as i16 + units as i16).rem_euclid(HEADINGS as i16) as u8;
        Pose { heading: h, ..*self }
    }

    pub fn forward_dir(&self) -> (f64, f64) {
        let yaw = self.yaw();
        (yaw.cos(), yaw.sin())
    }

    /// Pose after applying `action` without any collision handling.
    pub fn intended(&self, action: Action) -> Pose {
        match action {
            Action::Forward => {
                let (c, s) = self.forward_dir();
                Pose {
                    x: self.x + FORWARD_STEP * c,
                    y: self.y + FORWARD_STEP * s,
                    heading: self.heading,
                }
            }
            Action::TurnLeft | Action::TurnRight => self.turned(action.turn()),
            Action::Pause => *self,
        }
    }

    /// Camera-to-world rotation; columns are the camera axes in world frame.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (c, s) = self.forward_dir();
        let right = Vec3::new(s, -c, 0.0);
        let down = Vec3::new(0.0, 0.0, -1.0);
        let fwd = Vec3::new(c, s, 0.0);
        Matrix3::from_columns(&[right, down, fwd])
    }

    pub fn cam_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.position()
    }

    pub fn world_to_cam(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.position())
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Pinhole intrinsics with a 90 degree horizontal field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(width: usize, height: usize) -> Self {
        let f = width as f64 / 2.0 / (PI / 4.0).tan();
        Self {
            width,
            height,
            f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Unnormalized camera-frame ray (z = 1) through the centre of pixel (row, col).
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3 {
        Vec3::new(
            (col as f64 + 0.5 - self.cx) / self.f,
            (row as f64 + 0.5 - self.cy) / self.f,
            1.0,
        )
    }

    /// Continuous pixel coordinates (u = column, v = row) of a camera-frame point.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 1e-9 {
            return None;
        }
        Some((self.f * p.x / p.z + self.cx, self.f * p.y / p.z + self.cy))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}
