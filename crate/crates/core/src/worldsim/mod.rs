//! Procedural maze worlds, the raycast RGB-D renderer, discrete dynamics
//! with collision halting, and the apple-picking / image-goal task layers.

mod env;
mod overlay;
mod render;
mod scene;
mod script;
mod task;

pub use env::{apply_action, collides, random_pose, Env, EnvConfig, Frame, StepResult, BODY_RADIUS};
pub use overlay::TopDown;
pub use render::{back_project, render, render_with, Hit, Sphere, Surface, View};
pub use script::{farthest_path, turn_actions, OutAndBack};
pub use scene::{Scene, SceneParams, Side, SurfaceFace, CELL, WALL_HEIGHT};
pub use task::{
    check_imagegoal_success, goal_rule, place_apples, task_reward, visible_fraction, Apple, Event, Goal,
    TaskMode, TaskRewards, TaskState, APPLE_HEIGHT, APPLE_RADIUS,
};
