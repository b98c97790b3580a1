use crate::camera::{Intrinsics, Pose, Vec3};
use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::worldsim::{back_project, Frame};

/// Default coverage radius in meters.
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_HORIZONS: [usize; 3] = [256, 512, 1024];

/// Uniform grid over the x-y plane for exact nearest-neighbour queries.
///
/// Cells are columns (the scene is only a few meters tall), stored densely
/// over the bounding box of the inserted points.
#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    x0: f64,
    y0: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: points of cell `c` are `order[start[c]..start[c + 1]]`.
    start: Vec<usize>,
    order: Vec<usize>,
    points: Vec<Vec3>,
}

impl SpatialHash {
    pub fn build(points: Vec<Vec3>, cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(CoreError::InvalidArgument(format!("cell size {cell} must be positive")));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &points {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(CoreError::InvalidArgument("non-finite point".into()));
            }
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if points.is_empty() {
            (x0, y0, x1, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut hash = Self {
            cell,
            x0,
            y0,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            order: vec![0; points.len()],
            points,
        };
        let keys: Vec<usize> = hash.points.iter().map(|p| hash.key(p)).collect();
        for &k in &keys {
            hash.start[k + 1] += 1;
        }
        for c in 0..nx * ny {
            hash.start[c + 1] += hash.start[c];
        }
        let mut fill = hash.start.clone();
        for (i, &k) in keys.iter().enumerate() {
            hash.order[fill[k]] = i;
            fill[k] += 1;
        }
        Ok(hash)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn coord(&self, p: &Vec3) -> (i64, i64) {
        (
            ((p.x - self.x0) / self.cell).floor() as i64,
            ((p.y - self.y0) / self.cell).floor() as i64,
        )
    }

    fn key(&self, p: &Vec3) -> usize {
        let (cx, cy) = self.coord(p);
        let cx = cx.clamp(0, self.nx as i64 - 1) as usize;
        let cy = cy.clamp(0, self.ny as i64 - 1) as usize;
        cy * self.nx + cx
    }

    fn scan(&self, cx: i64, cy: i64, q: &Vec3, best: &mut Option<(usize, f64)>) {
        if cx < 0 || cy < 0 || cx >= self.nx as i64 || cy >= self.ny as i64 {
            return;
        }
        let c = cy as usize * self.nx + cx as usize;
        for &i in &self.order[self.start[c]..self.start[c + 1]] {
            let d = distance(q, &self.points[i]);
            let better = match *best {
                None => true,
                Some((j, bd)) => d < bd || (d == bd && i < j),
            };
            if better {
                *best = Some((i, d));
            }
        }
    }

    /// Nearest stored point as `(index, distance)`; ties go to the lowest
    /// index, matching [`brute_force_nearest`].
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (qx, qy) = self.coord(q);
        // rings of cells at Chebyshev distance r around the query cell;
        // anything in ring r+1 or beyond is at least r cells away in x-y
        let reach = (qx.abs().max((qx - self.nx as i64).abs()))
            .max(qy.abs().max((qy - self.ny as i64).abs()))
            + 1;
        let mut best = None;
        for r in 0..=reach {
            if r == 0 {
                self.scan(qx, qy, q, &mut best);
            } else {
                for dx in -r..=r {
                    self.scan(qx + dx, qy - r, q, &mut best);
                    self.scan(qx + dx, qy + r, q, &mut best);
                }
                for dy in -r + 1..r {
                    self.scan(qx - r, qy + dy, q, &mut best);
                    self.scan(qx + r, qy + dy, q, &mut best);
                }
            }
            if let Some((_, d)) = best {
                if d < r as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }
}

fn distance(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Exhaustive nearest neighbour; ties go to the lowest index.
pub fn brute_force_nearest(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = distance(q, p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Coverage of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeCoverage {
    pub horizons: Vec<usize>,
    /// Percent of ground-truth points within the threshold, per horizon.
    pub completeness: Vec<f64>,
    /// Mean nearest distance at the last horizon.
    pub avg_dist: f64,
    /// Per ground-truth point: covered at the last horizon.
    pub seen: Vec<bool>,
}

fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::InvalidArgument(format!(
            "horizons {horizons:?} must be non-empty and strictly increasing"
        )));
    }
    Ok(())
}

fn summarize(best: &[f64], threshold: f64, empty_dist: f64) -> (f64, f64, Vec<bool>) {
    if best.is_empty() {
        return (100.0, 0.0, Vec::new());
    }
    let seen: Vec<bool> = best.iter().map(|&d| d.is_finite() && d <= threshold).collect();
    let pct = 100.0 * seen.iter().filter(|&&s| s).count() as f64 / best.len() as f64;
    let avg = best
        .iter()
        .map(|&d| if d.is_finite() { d } else { empty_dist })
        .sum::<f64>()
        / best.len() as f64;
    (pct, avg, seen)
}

/// Completeness from per-step observed point sets; `observed[i]` holds the
/// points seen at step `i`, and horizon `h` covers steps `0..=h`.
///
/// With nothing observed the nearest distance is taken as `empty_dist`
/// (the scene diagonal).
pub fn coverage_from_points(
    gt: &[Vec3],
    observed: &[Vec<Vec3>],
    threshold: f64,
    horizons: &[usize],
    empty_dist: f64,
) -> Result<EpisodeCoverage> {
    check_horizons(horizons)?;
    let mut best = vec![f64::INFINITY; gt.len()];
    let mut completeness = Vec::with_capacity(horizons.len());
    let mut done = 0;
    let mut last = (0.0, empty_dist, vec![false; gt.len()]);
    for &h in horizons {
        let upto = (h + 1).min(observed.len());
        if upto > done {
            let pts: Vec<Vec3> = observed[done..upto].iter().flatten().copied().collect();
            if !pts.is_empty() {
                let index = SpatialHash::build(pts, 0.5)?;
                for (b, q) in best.iter_mut().zip(gt) {
                    if let Some((_, d)) = index.nearest(q) {
                        *b = b.min(d);
                    }
                }
            }
            done = upto;
        }
        last = summarize(&best, threshold, empty_dist);
        completeness.push(last.0);
    }
    Ok(EpisodeCoverage {
        horizons: horizons.to_vec(),
        completeness,
        avg_dist: last.1,
        seen: last.2,
    })
}

/// [`coverage_from_points`] by exhaustive search, as a test oracle.
pub fn coverage_brute_force(
    gt: &[Vec3],
    observed: &[Vec<Vec3>],
    threshold: f64,
    horizons: &[usize],
    empty_dist: f64,
) -> Result<EpisodeCoverage> {
    check_horizons(horizons)?;
    let mut completeness = Vec::new();
    let mut last = (0.0, empty_dist, vec![false; gt.len()]);
    for &h in horizons {
        let pts: Vec<Vec3> = observed[..(h + 1).min(observed.len())].iter().flatten().copied().collect();
        let best: Vec<f64> = gt
            .iter()
            .map(|q| brute_force_nearest(&pts, q).map_or(f64::INFINITY, |(_, d)| d))
            .collect();
        last = summarize(&best, threshold, empty_dist);
        completeness.push(last.0);
    }
    Ok(EpisodeCoverage {
        horizons: horizons.to_vec(),
        completeness,
        avg_dist: last.1,
        seen: last.2,
    })
}

/// Ground-truth depth and pose of one step, all the metric needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthView {
    pub depth: Image,
    pub pose: Pose,
    pub step: usize,
}

impl From<&Frame> for DepthView {
    fn from(f: &Frame) -> Self {
        Self {
            depth: f.depth.clone(),
            pose: f.pose,
            step: f.step,
        }
    }
}

/// Back-project every view's ground-truth depth and score coverage.
pub fn completeness(
    gt: &[Vec3],
    views: &[DepthView],
    intr: &Intrinsics,
    threshold: f64,
    horizons: &[usize],
    stride: usize,
    diagonal: f64,
) -> Result<EpisodeCoverage> {
    let mut observed: Vec<Vec<Vec3>> = Vec::new();
    for v in views {
        if v.step >= observed.len() {
            observed.resize(v.step + 1, Vec::new());
        }
        observed[v.step].extend(back_project(&v.depth, &v.pose, intr, stride));
    }
    coverage_from_points(gt, &observed, threshold, horizons, diagonal)
}
