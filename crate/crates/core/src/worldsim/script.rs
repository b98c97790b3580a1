use std::collections::VecDeque;

use crate::camera::{Action, Pose, FORWARD_STEP, HEADINGS};
use crate::error::{CoreError, Result};

use super::scene::Scene;

/// Cells on a shortest path from `start` to the free cell farthest from
/// it (breadth-first, ties broken by visit order).
pub fn farthest_path(scene: &Scene, start: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (scene.width(), scene.height());
    if scene.is_wall(start.0 as i64, start.1 as i64) {
        return Err(CoreError::InvalidArgument(format!("start cell {start:?} is a wall")));
    }
    let idx = |c: (usize, usize)| c.1 * w + c.0;
    let mut prev = vec![usize::MAX; w * h];
    prev[idx(start)] = idx(start);
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(c) = queue.pop_front() {
        last = c;
        for (dx, dy) in [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)] {
            let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
            if scene.is_wall(nx, ny) {
                continue;
            }
            let n = (nx as usize, ny as usize);
            if prev[idx(n)] == usize::MAX {
                prev[idx(n)] = idx(c);
                queue.push_back(n);
            }
        }
    }
    let mut path = vec![last];
    let mut i = idx(last);
    while prev[i] != i {
        i = prev[i];
        path.push((i % w, i / w));
    }
    path.reverse();
    Ok(path)
}

fn heading_between(a: (usize, usize), b: (usize, usize)) -> Result<u8> {
    let quarter = HEADINGS / 4;
    match (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64) {
        (1, 0) => Ok(0),
        (0, 1) => Ok(quarter),
        (-1, 0) => Ok(2 * quarter),
        (0, -1) => Ok(3 * quarter),
        d => Err(CoreError::InvalidArgument(format!("cells {a:?} and {b:?} are not adjacent ({d:?})"))),
    }
}

/// Shortest in-place turn sequence between two headings.
pub fn turn_actions(from: u8, to: u8) -> Vec<Action> {
    let n = HEADINGS as i32;
    let d = (to as i32 - from as i32).rem_euclid(n);
    if d <= n / 2 {
        vec![Action::TurnLeft; d as usize]
    } else {
        vec![Action::TurnRight; (n - d) as usize]
    }
}

/// A scripted trajectory that walks a cell path, spinning a full turn at
/// every cell, then walks straight back to the first cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OutAndBack {
    pub start: Pose,
    pub outbound: Vec<Action>,
    pub inbound: Vec<Action>,
}

impl OutAndBack {
    pub fn new(path: &[(usize, usize)]) -> Result<Self> {
        if path.len() < 2 {
            return Err(CoreError::InvalidArgument("path needs at least two cells".into()));
        }
        let steps_per_cell = (1.0 / FORWARD_STEP).round() as usize;
        let mut heading = heading_between(path[0], path[1])?;
        let start = Pose::new(path[0].0 as f64 + 0.5, path[0].1 as f64 + 0.5, heading);
        let spin = vec![Action::TurnLeft; HEADINGS as usize];
        let mut outbound = Vec::new();
        for k in 0..path.len() {
            outbound.extend_from_slice(&spin);
            if k + 1 < path.len() {
                let next = heading_between(path[k], path[k + 1])?;
                outbound.extend(turn_actions(heading, next));
                heading = next;
                outbound.extend(vec![Action::Forward; steps_per_cell]);
            }
        }
        let mut inbound = Vec::new();
        for k in (1..path.len()).rev() {
            let next = heading_between(path[k], path[k - 1])?;
            inbound.extend(turn_actions(heading, next));
            heading = next;
            inbound.extend(vec![Action::Forward; steps_per_cell]);
        }
        Ok(Self { start, outbound, inbound })
    }

    pub fn len(&self) -> usize {
        self.outbound.len() + self.inbound.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All actions in order, paired with whether they belong to the
    /// return leg.
    pub fn actions(&self) -> impl Iterator<Item = (Action, bool)> + '_ {
        self.outbound
            .iter()
            .map(|&a| (a, false))
            .chain(self.inbound.iter().map(|&a| (a, true)))
    }
}
