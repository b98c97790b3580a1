use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Vec3;
use crate::error::{CoreError, Result};

/// Height of walls (and the ceiling plane) in meters.
pub const WALL_HEIGHT: f64 = 2.5;
/// Grid cell edge length in meters.
pub const CELL: f64 = 1.0;

/// Outward normal of a wall face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    East,
    West,
    North,
    South,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::East, Side::West, Side::North, Side::South];

    pub fn normal(self) -> (i32, i32) {
        match self {
            Side::East => (1, 0),
            Side::West => (-1, 0),
            Side::North => (0, 1),
            Side::South => (0, -1),
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Expected rooms per 16 interior cells.
    pub room_density: f64,
    /// Extra corridors per room beyond the spanning chain.
    pub corridor_density: f64,
    pub min_room: usize,
    pub max_room: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            room_density: 0.35,
            corridor_density: 0.5,
            min_room: 2,
            max_room: 4,
        }
    }
}

/// Surface patch used for ground-truth point sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceFace {
    /// Face of wall cell `(x, y)` with outward normal `side`.
    Wall { x: usize, y: usize, side: Side },
    Floor { x: usize, y: usize },
}

impl SurfaceFace {
    pub fn area(&self) -> f64 {
        match self {
            SurfaceFace::Wall { .. } => CELL * WALL_HEIGHT,
            SurfaceFace::Floor { .. } => CELL * CELL,
        }
    }

    /// Point at local coordinates `(a, b)` in `[0,1]^2` on the face.
    pub fn point(&self, a: f64, b: f64) -> Vec3 {
        match *self {
            SurfaceFace::Floor { x, y } => Vec3::new(x as f64 + a, y as f64 + b, 0.0),
            SurfaceFace::Wall { x, y, side } => {
                let (x, y) = (x as f64, y as f64);
                let z = b * WALL_HEIGHT;
                match side {
                    Side::East => Vec3::new(x + 1.0, y + a, z),
                    Side::West => Vec3::new(x, y + a, z),
                    Side::North => Vec3::new(x + a, y + 1.0, z),
                    Side::South => Vec3::new(x + a, y, z),
                }
            }
        }
    }
}

/// Extruded 2D maze: walls fill whole cells from floor to ceiling.
///
/// Every free cell belongs to a single 4-connected component and the
/// border is solid, so a ray cast from free space always terminates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    seed: u64,
    free_cells: Vec<(usize, usize)>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |h, &p| splitmix(h ^ p))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    match i as i32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

impl Scene {
    /// Procedural maze of `width x height` cells: random rectangular rooms
    /// joined by L-shaped corridors, reduced to its largest connected
    /// free component.
    pub fn generate(seed: u64, width: usize, height: usize, params: &SceneParams) -> Result<Scene> {
        if width < 8 || height < 8 {
            return Err(CoreError::Scene(format!(
                "size {width}x{height} is below the 8x8 minimum"
            )));
        }
        if params.min_room == 0 || params.max_room < params.min_room {
            return Err(CoreError::Scene(format!(
                "room size range {}..={} is empty",
                params.min_room, params.max_room
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hash(&[seed, 0x5CE4E]));
        let mut walls = vec![true; width * height];
        let interior = ((width - 2) * (height - 2)) as f64;
        let n_rooms = (params.room_density * interior / 16.0).round() as usize;
        let max_w = params.max_room.min(width - 2);
        let max_h = params.max_room.min(height - 2);
        let mut centers = Vec::with_capacity(n_rooms);
        for _ in 0..n_rooms {
            let w = rng.random_range(params.min_room.min(max_w)..=max_w);
            let h = rng.random_range(params.min_room.min(max_h)..=max_h);
            let x0 = rng.random_range(1..=width - 1 - w);
            let y0 = rng.random_range(1..=height - 1 - h);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    walls[y * width + x] = false;
                }
            }
            centers.push((x0 + w / 2, y0 + h / 2));
        }
        let mut carve = |a: (usize, usize), b: (usize, usize), horizontal_first: bool| {
            let corner = if horizontal_first { (b.0, a.1) } else { (a.0, b.1) };
            for (p, q) in [(a, corner), (corner, b)] {
                let (x0, x1) = (p.0.min(q.0), p.0.max(q.0));
                let (y0, y1) = (p.1.min(q.1), p.1.max(q.1));
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        walls[y * width + x] = false;
                    }
                }
            }
        };
        for i in 1..centers.len() {
            carve(centers[i - 1], centers[i], rng.random_bool(0.5));
        }
        let extra = (params.corridor_density * centers.len() as f64).round() as usize;
        if centers.len() >= 2 {
            for _ in 0..extra {
                let a = rng.random_range(0..centers.len());
                let b = rng.random_range(0..centers.len());
                if a != b {
                    carve(centers[a], centers[b], rng.random_bool(0.5));
                }
            }
        }
        let scene = Scene::from_walls(seed, width, height, walls, true)?;
        Ok(scene)
    }

    /// Parse a map with `#` for walls and `.` for free cells. The first
    /// text line is the northmost row.
    pub fn from_ascii(text: &str, seed: u64) -> Result<Scene> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("seed"))
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if height == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(CoreError::Scene("ragged or empty map".into()));
        }
        let mut walls = vec![true; width * height];
        for (i, row) in rows.iter().enumerate() {
            let y = height - 1 - i;
            for (x, ch) in row.chars().enumerate() {
                walls[y * width + x] = match ch {
                    '#' => true,
                    '.' => false,
                    c => return Err(CoreError::Scene(format!("unexpected map character {c:?}"))),
                };
            }
        }
        Scene::from_walls(seed, width, height, walls, false)
    }

    fn from_walls(
        seed: u64,
        width: usize,
        height: usize,
        mut walls: Vec<bool>,
        keep_largest: bool,
    ) -> Result<Scene> {
        for x in 0..width {
            for y in [0, height - 1] {
                if !walls[y * width + x] {
                    return Err(CoreError::Scene("border cell is not a wall".into()));
                }
            }
        }
        for y in 0..height {
            for x in [0, width - 1] {
                if !walls[y * width + x] {
                    return Err(CoreError::Scene("border cell is not a wall".into()));
                }
            }
        }
        let components = components(width, height, &walls);
        if components.is_empty() {
            return Err(CoreError::Scene("no free cells".into()));
        }
        if components.len() > 1 {
            if !keep_largest {
                return Err(CoreError::Scene(format!(
                    "free space has {} disconnected components",
                    components.len()
                )));
            }
            let largest = components
                .iter()
                .enumerate()
                .max_by_key(|(i, c)| (c.len(), std::cmp::Reverse(*i)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            for (i, comp) in components.iter().enumerate() {
                if i != largest {
                    for &(x, y) in comp {
                        walls[y * width + x] = true;
                    }
                }
            }
        }
        let free_cells = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .filter(|&(x, y)| !walls[y * width + x])
            .collect();
        Ok(Scene {
            width,
            height,
            walls,
            seed,
            free_cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Walls as a flat row-major array, row 0 southmost.
    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    /// Out-of-grid cells count as walls.
    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return true;
        }
        self.walls[y as usize * self.width + x as usize]
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        !self.is_wall(x.floor() as i64, y.floor() as i64)
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> &[(usize, usize)] {
        &self.free_cells
    }

    /// Length of the bounding-box diagonal including wall height.
    pub fn diagonal(&self) -> f64 {
        ((self.width as f64).powi(2) + (self.height as f64).powi(2) + WALL_HEIGHT.powi(2)).sqrt()
    }

    /// Albedo of one wall face and the phase bit of its checker texture.
    pub fn wall_albedo(&self, x: usize, y: usize, side: Side) -> ([f64; 3], u8) {
        let h = hash(&[self.seed, x as u64, y as u64, side.code(), 0xA1BED0]);
        let h2 = splitmix(h);
        let h3 = splitmix(h2);
        let rgb = hsv(unit(h), 0.45 + 0.3 * unit(h2), 0.6 + 0.3 * unit(h3));
        (rgb, (h3 & 1) as u8)
    }

    pub fn floor_albedo(&self, x: usize, y: usize) -> [f64; 3] {
        let t = 0.85 + 0.15 * unit(hash(&[self.seed, x as u64, y as u64, 0xF100]));
        [0.55 * t, 0.5 * t, 0.42 * t]
    }

    pub fn ceiling_albedo(&self) -> [f64; 3] {
        [0.82, 0.82, 0.86]
    }

    /// Wall faces bordering free space plus the floor of every free cell.
    pub fn surface_faces(&self) -> Vec<SurfaceFace> {
        let mut faces = Vec::new();
        for &(x, y) in &self.free_cells {
            faces.push(SurfaceFace::Floor { x, y });
        }
        for &(x, y) in &self.free_cells {
            for side in Side::ALL {
                let (dx, dy) = side.normal();
                let (wx, wy) = (x as i64 + dx as i64, y as i64 + dy as i64);
                if self.is_wall(wx, wy) {
                    // the wall cell's face points back towards (x, y)
                    let facing = match side {
                        Side::East => Side::West,
                        Side::West => Side::East,
                        Side::North => Side::South,
                        Side::South => Side::North,
                    };
                    faces.push(SurfaceFace::Wall {
                        x: wx as usize,
                        y: wy as usize,
                        side: facing,
                    });
                }
            }
        }
        faces
    }

    /// `n` points uniform over the reachable wall and floor surfaces.
    pub fn sample_surface_points(&self, n: usize, seed: u64) -> Vec<Vec3> {
        let faces = self.surface_faces();
        let mut cumulative = Vec::with_capacity(faces.len());
        let mut total = 0.0;
        for f in &faces {
            total += f.area();
            cumulative.push(total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hash(&[self.seed, seed, 0x5A3F]));
        (0..n)
            .map(|_| {
                let u = rng.random_range(0.0..total);
                let i = cumulative.partition_point(|&c| c <= u).min(faces.len() - 1);
                faces[i].point(rng.random(), rng.random())
            })
            .collect()
    }

    /// Text export: one character per cell (northmost row first) and a
    /// trailing seed line.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height + 16);
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                s.push(if self.walls[y * self.width + x] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s.push_str(&format!("seed {}\n", self.seed));
        s
    }
}

/// 4-connected components of free cells, in discovery order.
fn components(width: usize, height: usize, walls: &[bool]) -> Vec<Vec<(usize, usize)>> {
    let mut label = vec![false; walls.len()];
    let mut out = Vec::new();
    for start in 0..walls.len() {
        if walls[start] || label[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        label[start] = true;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            comp.push((x, y));
            let mut visit = |j: usize| {
                if !walls[j] && !label[j] {
                    label[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        out.push(comp);
    }
    out
}
