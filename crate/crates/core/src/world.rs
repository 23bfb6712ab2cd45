//! Deterministic 2D arena: unicycle kinematics, ray-cast lidar, collision and
//! goal tests, and seeded episode resets.

use std::path::Path;

use rand::Rng;

use crate::state::wrap_to_pi;
use crate::{Error, Result, SimRng};

/// Number of lidar beams in the standard configuration.
pub const LIDAR_BEAMS: usize = 24;

/// Rejections tolerated by [`reset_episode`] before giving up.
pub const MAX_GOAL_REJECTIONS: usize = 10_000;

const ARC_EPS: f64 = 1e-9;
// Range reported when the sensor origin is inside an obstacle or outside the walls.
const CONTACT_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians, kept in (-pi, pi].
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose {
            x,
            y,
            yaw: wrap_to_pi(yaw),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub x: f64,
    pub y: f64,
}

impl Goal {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        other.xmin >= self.xmin
            && other.xmax <= self.xmax
            && other.ymin >= self.ymin
            && other.ymax <= self.ymax
    }

    /// Distance from `p` to the rectangle (0 inside).
    fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.xmin - p.x).max(0.0).max(p.x - self.xmax);
        let dy = (self.ymin - p.y).max(0.0).max(p.y - self.ymax);
        dx.hypot(dy)
    }

    /// Distance from an interior point to the nearest wall.
    fn inner_clearance(&self, p: Point) -> f64 {
        (p.x - self.xmin)
            .min(self.xmax - p.x)
            .min(p.y - self.ymin)
            .min(self.ymax - p.y)
    }

    /// Entry/exit parameters of the ray `o + t*d` against the slab box.
    fn ray_interval(&self, o: Point, dx: f64, dy: f64) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (orig, dir, lo, hi) in [
            (o.x, dx, self.xmin, self.xmax),
            (o.y, dy, self.ymin, self.ymax),
        ] {
            if dir.abs() < 1e-15 {
                if orig < lo || orig > hi {
                    return None;
                }
            } else {
                let a = (lo - orig) / dir;
                let b = (hi - orig) / dir;
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Obstacle {
    Circle(Circle),
    Rect(Rect),
}

impl Obstacle {
    fn distance_to(&self, p: Point) -> f64 {
        match self {
            Obstacle::Circle(c) => (Point::new(c.cx, c.cy).distance(p) - c.r).max(0.0),
            Obstacle::Rect(r) => r.distance_to(p),
        }
    }

    /// Smallest non-negative hit parameter along a unit-direction ray, if any.
    fn ray_hit(&self, o: Point, dx: f64, dy: f64) -> Option<f64> {
        let (t0, t1) = match self {
            Obstacle::Circle(c) => {
                let fx = o.x - c.cx;
                let fy = o.y - c.cy;
                let b = fx * dx + fy * dy;
                let cc = fx * fx + fy * fy - c.r * c.r;
                let disc = b * b - cc;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                (-b - s, -b + s)
            }
            Obstacle::Rect(r) => r.ray_interval(o, dx, dy)?,
        };
        if t1 < 0.0 {
            None
        } else if t0 <= 0.0 {
            Some(CONTACT_RANGE)
        } else {
            Some(t0)
        }
    }
}

/// Arena geometry plus robot and sensor constants.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub bounds: Rect,
    pub obstacles: Vec<Obstacle>,
    pub start: Pose,
    pub robot_radius: f64,
    pub lidar_max_range: f64,
    pub lidar_beam_count: usize,
    pub collision_threshold: f64,
    pub goal_threshold: f64,
}

impl Default for WorldMap {
    /// 4 m x 4 m walled square, start at the centre facing +x.
    fn default() -> Self {
        WorldMap {
            bounds: Rect::new(-2.0, -2.0, 2.0, 2.0),
            obstacles: Vec::new(),
            start: Pose::new(0.0, 0.0, 0.0),
            robot_radius: 0.105,
            lidar_max_range: 3.5,
            lidar_beam_count: LIDAR_BEAMS,
            collision_threshold: 0.13,
            goal_threshold: 0.2,
        }
    }
}

impl WorldMap {
    /// Empty arena with the given bounds and default constants.
    pub fn empty(bounds: Rect) -> Self {
        WorldMap {
            bounds,
            start: Pose::new(
                0.5 * (bounds.xmin + bounds.xmax),
                0.5 * (bounds.ymin + bounds.ymax),
                0.0,
            ),
            ..WorldMap::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.xmin < b.xmax && b.ymin < b.ymax) {
            return Err(Error::InvalidMap(format!("degenerate bounds {b:?}")));
        }
        if !(self.robot_radius > 0.0) {
            return Err(Error::InvalidMap("robot_radius must be positive".into()));
        }
        if self.lidar_beam_count == 0 {
            return Err(Error::InvalidMap(
                "lidar_beam_count must be positive".into(),
            ));
        }
        if !(0.0 < self.collision_threshold && self.collision_threshold < self.lidar_max_range) {
            return Err(Error::InvalidMap(
                "need 0 < collision_threshold < lidar_max_range".into(),
            ));
        }
        if !(self.goal_threshold > self.collision_threshold) {
            return Err(Error::InvalidMap(
                "goal_threshold must exceed collision_threshold".into(),
            ));
        }
        for (i, obs) in self.obstacles.iter().enumerate() {
            let inside = match obs {
                Obstacle::Circle(c) => {
                    c.r > 0.0
                        && b.contains_rect(&Rect::new(
                            c.cx - c.r,
                            c.cy - c.r,
                            c.cx + c.r,
                            c.cy + c.r,
                        ))
                }
                Obstacle::Rect(r) => r.xmin < r.xmax && r.ymin < r.ymax && b.contains_rect(r),
            };
            if !inside {
                return Err(Error::InvalidMap(format!(
                    "obstacle {i} is degenerate or leaves the bounds"
                )));
            }
        }
        if !b.contains(self.start.position()) {
            return Err(Error::InvalidMap("start pose outside bounds".into()));
        }
        Ok(())
    }

    /// Clearance from `p` to the nearest obstacle surface or wall.
    pub fn clearance(&self, p: Point) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance_to(p))
            .fold(self.bounds.inner_clearance(p), f64::min)
    }

    /// Parses the line-oriented map format.
    ///
    /// ```text
    /// # comment
    /// bounds xmin ymin xmax ymax
    /// circle cx cy r
    /// rect xmin ymin xmax ymax
    /// start x y yaw
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = WorldMap::default();
        let mut have_bounds = false;
        let mut have_start = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next().unwrap_or_default();
            let nums: Vec<f64> = parts
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            Error::InvalidMap(format!("line {}: bad number {t:?}", lineno + 1))
                        })
                })
                .collect::<Result<_>>()?;
            let want = |n: usize| -> Result<()> {
                if nums.len() == n {
                    Ok(())
                } else {
                    Err(Error::InvalidMap(format!(
                        "line {}: `{kind}` takes {n} numbers, got {}",
                        lineno + 1,
                        nums.len()
                    )))
                }
            };
            match kind {
                "bounds" => {
                    want(4)?;
                    map.bounds = Rect::new(nums[0], nums[1], nums[2], nums[3]);
                    have_bounds = true;
                }
                "circle" => {
                    want(3)?;
                    map.obstacles.push(Obstacle::Circle(Circle {
                        cx: nums[0],
                        cy: nums[1],
                        r: nums[2],
                    }));
                }
                "rect" => {
                    want(4)?;
                    map.obstacles.push(Obstacle::Rect(Rect::new(
                        nums[0], nums[1], nums[2], nums[3],
                    )));
                }
                "start" => {
                    want(3)?;
                    map.start = Pose::new(nums[0], nums[1], nums[2]);
                    have_start = true;
                }
                other => {
                    return Err(Error::InvalidMap(format!(
                        "line {}: unknown record `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        if !have_bounds {
            return Err(Error::InvalidMap("missing `bounds` record".into()));
        }
        if !have_start {
            let b = map.bounds;
            map.start = Pose::new(0.5 * (b.xmin + b.xmax), 0.5 * (b.ymin + b.ymax), 0.0);
        }
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the map in the format accepted by [`WorldMap::parse`].
    pub fn to_text(&self) -> String {
        let b = self.bounds;
        let mut out = format!("bounds {} {} {} {}\n", b.xmin, b.ymin, b.xmax, b.ymax);
        for o in &self.obstacles {
            match o {
                Obstacle::Circle(c) => out += &format!("circle {} {} {}\n", c.cx, c.cy, c.r),
                Obstacle::Rect(r) => {
                    out += &format!("rect {} {} {} {}\n", r.xmin, r.ymin, r.xmax, r.ymax)
                }
            }
        }
        let s = self.start;
        out += &format!("start {} {} {}\n", s.x, s.y, s.yaw);
        out
    }
}

/// Velocity command held for one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCommand {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub dt: f64,
}

/// Exact unicycle integration over one control period.
///
/// Constant (v, w) traces a circular arc of radius v/w; for |w| <= 1e-9 the
/// motion is a straight segment.
pub fn integrate_motion(pose: Pose, cmd: StepCommand) -> Pose {
    let StepCommand {
        linear_velocity: v,
        angular_velocity: w,
        dt,
    } = cmd;
    let yaw_end = pose.yaw + w * dt;
    if w.abs() > ARC_EPS {
        let r = v / w;
        Pose::new(
            pose.x + r * (yaw_end.sin() - pose.yaw.sin()),
            pose.y - r * (yaw_end.cos() - pose.yaw.cos()),
            yaw_end,
        )
    } else {
        Pose::new(
            pose.x + v * dt * pose.yaw.cos(),
            pose.y + v * dt * pose.yaw.sin(),
            yaw_end,
        )
    }
}

/// Range along one ray to the first wall or obstacle surface, clamped to the
/// sensor's maximum range.
pub fn cast_ray(map: &WorldMap, origin: Point, angle: f64) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let wall = match map.bounds.ray_interval(origin, dx, dy) {
        Some((t0, t1)) if t0 <= 0.0 && t1 > 0.0 => t1,
        _ => CONTACT_RANGE,
    };
    map.obstacles
        .iter()
        .filter_map(|o| o.ray_hit(origin, dx, dy))
        .fold(wall, f64::min)
        .clamp(CONTACT_RANGE, map.lidar_max_range)
}

/// Full scan; beam `i` points at `yaw + i * 2pi / beam_count`.
pub fn scan_lidar(map: &WorldMap, pose: Pose) -> Vec<f64> {
    let n = map.lidar_beam_count;
    let step = std::f64::consts::TAU / n as f64;
    let origin = pose.position();
    (0..n)
        .map(|i| cast_ray(map, origin, pose.yaw + i as f64 * step))
        .collect()
}

/// True iff the closest return is strictly below `collision_threshold`.
pub fn check_collision(scan: &[f64], collision_threshold: f64) -> bool {
    scan.iter().any(|&r| r < collision_threshold)
}

/// True iff the robot centre is strictly within `goal_threshold` of the goal.
pub fn goal_reached(pose: Pose, goal: Goal, goal_threshold: f64) -> bool {
    pose.position().distance(goal.position()) < goal_threshold
}

/// Places the robot at the map's start pose and draws a goal uniformly over
/// admissible free space by rejection sampling.
///
/// Admissible goals keep `robot_radius + goal_threshold` clearance from every
/// obstacle and wall and lie at least `2 * goal_threshold` from the start.
pub fn reset_episode(map: &WorldMap, rng: &mut SimRng) -> Result<(Pose, Goal)> {
    let clearance = map.robot_radius + map.goal_threshold;
    let b = map.bounds;
    let (xlo, xhi) = (b.xmin + clearance, b.xmax - clearance);
    let (ylo, yhi) = (b.ymin + clearance, b.ymax - clearance);
    if !(xlo < xhi && ylo < yhi) {
        return Err(Error::SamplingExhausted(0));
    }
    let start = map.start.position();
    for _ in 0..MAX_GOAL_REJECTIONS {
        let p = Point::new(rng.gen_range(xlo..xhi), rng.gen_range(ylo..yhi));
        if p.distance(start) < 2.0 * map.goal_threshold {
            continue;
        }
        if map.obstacles.iter().all(|o| o.distance_to(p) >= clearance) {
            return Ok((map.start, Goal { x: p.x, y: p.y }));
        }
    }
    Err(Error::SamplingExhausted(MAX_GOAL_REJECTIONS))
}
