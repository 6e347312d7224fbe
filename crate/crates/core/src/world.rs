//! Deterministic 2D world model: robot kinematics, LiDAR and camera sensing,
//! obstacle dynamics, collision detection, and seeded scenario generation.
//!
//! The world is a value type. Given the same scenario kind, seed, config, and
//! signal sequence, every trajectory is bit-identical across runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, normalize_bearing_deg, normalize_heading_deg, Disk, Vec2, Wall};
use crate::prompt::{ControlSignal, TurnDirection};

/// Robot pose: position in millimetres, heading in degrees `[0, 360)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading_deg: f64) -> Self {
        Self {
            x,
            y,
            heading_deg: normalize_heading_deg(heading_deg),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// The four environment classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Obstacle free: a clear path to the target.
    #[serde(rename = "OF")]
    ObstacleFree,
    /// Static obstacles only.
    #[serde(rename = "SO")]
    StaticObstacles,
    /// Dynamic (moving) obstacles only.
    #[serde(rename = "DO")]
    DynamicObstacles,
    /// Both static and dynamic obstacles.
    #[serde(rename = "MO")]
    MixedObstacles,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::ObstacleFree,
        ScenarioKind::StaticObstacles,
        ScenarioKind::DynamicObstacles,
        ScenarioKind::MixedObstacles,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            ScenarioKind::ObstacleFree => "OF",
            ScenarioKind::StaticObstacles => "SO",
            ScenarioKind::DynamicObstacles => "DO",
            ScenarioKind::MixedObstacles => "MO",
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "OF" => Ok(ScenarioKind::ObstacleFree),
            "SO" => Ok(ScenarioKind::StaticObstacles),
            "DO" => Ok(ScenarioKind::DynamicObstacles),
            "MO" => Ok(ScenarioKind::MixedObstacles),
            other => Err(format!("unknown scenario kind: {other}")),
        }
    }
}

/// World geometry and sensing configuration. All fields have defaults and are
/// overridable from the run configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Arena width in millimetres.
    pub arena_width_mm: f64,
    /// Arena height in millimetres.
    pub arena_height_mm: f64,
    /// Robot body radius in millimetres.
    pub robot_radius_mm: f64,
    /// Target ("red can") radius in millimetres.
    pub target_radius_mm: f64,
    /// Number of LiDAR beams over the full circle.
    pub lidar_beams: u32,
    /// LiDAR maximum range; readings clamp here.
    pub lidar_max_range_mm: f64,
    /// Camera half field of view in degrees.
    pub camera_fov_half_deg: f64,
    /// Static obstacle count for SO/MO scenarios.
    pub static_obstacle_count: u32,
    /// Dynamic obstacle count for DO/MO scenarios.
    pub dynamic_obstacle_count: u32,
    /// Obstacle disk radius in millimetres.
    pub obstacle_radius_mm: f64,
    /// Dynamic obstacle speed in millimetres per pipeline step.
    pub dynamic_speed_mm_per_step: f64,
    /// Completion margin beyond summed robot and target radii.
    pub approach_margin_mm: f64,
    /// Total rejection-sampling attempts allowed during spawn.
    pub spawn_attempt_cap: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena_width_mm: 4000.0,
            arena_height_mm: 4000.0,
            robot_radius_mm: 180.0,
            target_radius_mm: 35.0,
            lidar_beams: 360,
            lidar_max_range_mm: 9999.0,
            camera_fov_half_deg: 30.0,
            static_obstacle_count: 3,
            dynamic_obstacle_count: 2,
            obstacle_radius_mm: 100.0,
            dynamic_speed_mm_per_step: 150.0,
            approach_margin_mm: 100.0,
            spawn_attempt_cap: 10_000,
        }
    }
}

impl WorldConfig {
    /// Basic sanity checks; returns a description of the first problem found.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.arena_width_mm > 0.0 && self.arena_height_mm > 0.0) {
            return Err("arena dimensions must be positive".into());
        }
        if !(self.robot_radius_mm > 0.0 && self.target_radius_mm > 0.0) {
            return Err("body radii must be positive".into());
        }
        if 2.0 * self.robot_radius_mm >= self.arena_width_mm.min(self.arena_height_mm) {
            return Err("robot does not fit inside the arena".into());
        }
        if self.lidar_beams == 0 {
            return Err("lidar_beams must be at least 1".into());
        }
        if !self.lidar_max_range_mm.is_finite() || self.lidar_max_range_mm <= 0.0 {
            return Err("lidar_max_range_mm must be positive".into());
        }
        if !(self.camera_fov_half_deg > 0.0 && self.camera_fov_half_deg < 180.0) {
            return Err("camera_fov_half_deg must lie in (0, 180)".into());
        }
        if self.dynamic_speed_mm_per_step < 0.0 {
            return Err("dynamic_speed_mm_per_step must be nonnegative".into());
        }
        if self.approach_margin_mm < 0.0 {
            return Err("approach_margin_mm must be nonnegative".into());
        }
        Ok(())
    }
}

/// A moving disk obstacle: position plus per-step velocity vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingDisk {
    pub disk: Disk,
    pub velocity_mm_per_step: Vec2,
}

/// Identifier of a body the robot or a sensor ray can touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyId {
    WallWest,
    WallEast,
    WallSouth,
    WallNorth,
    Target,
    StaticObstacle(usize),
    DynamicObstacle(usize),
}

impl BodyId {
    fn from_wall(w: Wall) -> Self {
        match w {
            Wall::West => BodyId::WallWest,
            Wall::East => BodyId::WallEast,
            Wall::South => BodyId::WallSouth,
            Wall::North => BodyId::WallNorth,
        }
    }

    /// True for bodies that never move during a trial (walls, target, static
    /// obstacles).
    pub fn is_static(&self) -> bool {
        !matches!(self, BodyId::DynamicObstacle(_))
    }
}

impl std::fmt::Display for BodyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BodyId::WallWest => write!(f, "wall-west"),
            BodyId::WallEast => write!(f, "wall-east"),
            BodyId::WallSouth => write!(f, "wall-south"),
            BodyId::WallNorth => write!(f, "wall-north"),
            BodyId::Target => write!(f, "target"),
            BodyId::StaticObstacle(i) => write!(f, "static-obstacle-{i}"),
            BodyId::DynamicObstacle(i) => write!(f, "dynamic-obstacle-{i}"),
        }
    }
}

/// The simulated ground truth for one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub robot: Pose,
    pub target: Disk,
    pub static_obstacles: Vec<Disk>,
    pub dynamic_obstacles: Vec<MovingDisk>,
    pub rng_seed: u64,
    /// Count of completed pipeline steps; advanced by the evaluation loop.
    pub step_index: u32,
}

impl World {
    pub fn robot_disk(&self) -> Disk {
        Disk::new(self.robot.position(), self.config.robot_radius_mm)
    }

    /// Centre-to-centre distance from the robot to the target.
    pub fn target_range_mm(&self) -> f64 {
        self.robot.position().distance(self.target.center)
    }
}

/// A full LiDAR sweep. Beam `k` points at `k * angular_resolution_deg`
/// counterclockwise from the robot's heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub distances: Vec<f64>,
    pub beam_count: u32,
    pub angular_resolution_deg: f64,
    pub max_range_mm: f64,
}

impl Scan {
    /// Relative angle of beam `k` in degrees.
    pub fn beam_angle_deg(&self, k: usize) -> f64 {
        k as f64 * self.angular_resolution_deg
    }

    /// Beams whose angle falls within `half_width_deg` of `center_deg`
    /// (inclusive bounds), in ascending angular order. Each entry is
    /// `(beam index, relative angle before normalization, reading)`.
    pub fn window_beams(&self, center_deg: f64, half_width_deg: f64) -> Vec<(usize, f64, f64)> {
        let res = self.angular_resolution_deg;
        let n = self.beam_count as i64;
        let k_lo = ((center_deg - half_width_deg) / res).ceil() as i64;
        let k_hi = ((center_deg + half_width_deg) / res).floor() as i64;
        let count = (k_hi - k_lo + 1).clamp(0, n);
        let mut out = Vec::with_capacity(count as usize);
        for k in k_lo..k_lo + count {
            let idx = k.rem_euclid(n) as usize;
            out.push((idx, k as f64 * res, self.distances[idx]));
        }
        out
    }

    /// Minimum reading over a window; `max_range_mm` when the window is empty.
    pub fn window_min(&self, center_deg: f64, half_width_deg: f64) -> f64 {
        self.window_beams(center_deg, half_width_deg)
            .iter()
            .map(|&(_, _, r)| r)
            .fold(self.max_range_mm, f64::min)
    }
}

/// Symbolic front-camera observation of the target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraObservation {
    pub target_visible: bool,
    /// Bearing to the target centre relative to the heading; present only
    /// when visible.
    pub bearing_deg: Option<f64>,
    /// Centre-to-centre range; present only when visible.
    pub range_mm: Option<f64>,
    /// Target within the field of view but behind an obstacle.
    pub occluded: bool,
}

/// How an executed signal ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok,
    Collision,
    /// Contact at zero travel: the robot was already flush against a body.
    Blocked,
}

/// Result of applying one control signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecutionStatus,
    /// Millimetres actually moved (magnitude; Straight only).
    pub traveled_mm: f64,
    /// Degrees actually rotated (Turn only).
    pub turned_deg: f64,
    pub collided_with: Option<BodyId>,
}

impl ExecutionResult {
    pub fn contact(&self) -> bool {
        !matches!(self.status, ExecutionStatus::Ok)
    }
}

/// Spawn failure.
#[derive(Debug, Error)]
pub enum SpawnError {
    #[error("could not place all bodies within {attempts} attempts; config likely overcrowded")]
    PlacementFailed { attempts: u32 },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
}

/// Outcome of one dynamics step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DynamicsReport {
    /// Index of the first dynamic obstacle that contacted the robot, if any.
    pub robot_contact: Option<usize>,
}

/// Build a world for the given scenario. Identical `(kind, seed, config)`
/// inputs yield an identical world.
pub fn spawn_scenario(
    kind: ScenarioKind,
    seed: u64,
    config: &WorldConfig,
) -> Result<World, SpawnError> {
    config.validate().map_err(SpawnError::InvalidConfig)?;
    let (static_count, dynamic_count) = match kind {
        ScenarioKind::ObstacleFree => (0, 0),
        ScenarioKind::StaticObstacles => (config.static_obstacle_count, 0),
        ScenarioKind::DynamicObstacles => (0, config.dynamic_obstacle_count),
        ScenarioKind::MixedObstacles => {
            (config.static_obstacle_count, config.dynamic_obstacle_count)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts: u32 = 0;
    let cap = config.spawn_attempt_cap;
    let w = config.arena_width_mm;
    let h = config.arena_height_mm;

    let sample_disk = |rng: &mut ChaCha8Rng,
                       radius: f64,
                       placed: &[Disk],
                       attempts: &mut u32|
     -> Result<Disk, SpawnError> {
        loop {
            *attempts += 1;
            if *attempts > cap {
                return Err(SpawnError::PlacementFailed { attempts: cap });
            }
            let c = Vec2::new(
                rng.gen_range(radius..w - radius),
                rng.gen_range(radius..h - radius),
            );
            let candidate = Disk::new(c, radius);
            if placed.iter().all(|d| !d.overlaps(&candidate)) {
                return Ok(candidate);
            }
        }
    };

    let mut placed: Vec<Disk> = Vec::new();
    let robot_disk = sample_disk(&mut rng, config.robot_radius_mm, &placed, &mut attempts)?;
    let heading = rng.gen_range(0.0..360.0);
    placed.push(robot_disk);

    let target = sample_disk(&mut rng, config.target_radius_mm, &placed, &mut attempts)?;
    placed.push(target);

    let mut static_obstacles = Vec::with_capacity(static_count as usize);
    for _ in 0..static_count {
        let d = sample_disk(&mut rng, config.obstacle_radius_mm, &placed, &mut attempts)?;
        placed.push(d);
        static_obstacles.push(d);
    }

    let mut dynamic_obstacles = Vec::with_capacity(dynamic_count as usize);
    for _ in 0..dynamic_count {
        let d = sample_disk(&mut rng, config.obstacle_radius_mm, &placed, &mut attempts)?;
        let dir_deg: f64 = rng.gen_range(0.0..360.0);
        placed.push(d);
        dynamic_obstacles.push(MovingDisk {
            disk: d,
            velocity_mm_per_step: Vec2::from_heading_deg(dir_deg)
                * config.dynamic_speed_mm_per_step,
        });
    }

    Ok(World {
        config: config.clone(),
        robot: Pose::new(robot_disk.center.x, robot_disk.center.y, heading),
        target,
        static_obstacles,
        dynamic_obstacles,
        rng_seed: seed,
        step_index: 0,
    })
}

fn beam_reading(world: &World, dir: Vec2) -> (f64, Option<BodyId>) {
    let origin = world.robot.position();
    let (wall_t, wall) = geom::ray_rect_exit(
        origin,
        dir,
        world.config.arena_width_mm,
        world.config.arena_height_mm,
    );
    let mut best = wall_t;
    let mut body = Some(BodyId::from_wall(wall));

    let mut consider = |t: Option<f64>, id: BodyId| {
        if let Some(t) = t {
            if t < best {
                best = t;
                body = Some(id);
            }
        }
    };

    consider(
        geom::ray_disk_first_hit(origin, dir, &world.target),
        BodyId::Target,
    );
    for (i, d) in world.static_obstacles.iter().enumerate() {
        consider(
            geom::ray_disk_first_hit(origin, dir, d),
            BodyId::StaticObstacle(i),
        );
    }
    for (i, m) in world.dynamic_obstacles.iter().enumerate() {
        consider(
            geom::ray_disk_first_hit(origin, dir, &m.disk),
            BodyId::DynamicObstacle(i),
        );
    }

    if best >= world.config.lidar_max_range_mm {
        (world.config.lidar_max_range_mm, None)
    } else {
        (best, body)
    }
}

/// Full LiDAR sweep from the robot centre. Every beam reads the distance to
/// the nearest obstacle disk, the target disk, or an arena wall, clamped to
/// the configured maximum range.
pub fn lidar_scan(world: &World) -> Scan {
    lidar_scan_with_hits(world).0
}

/// As [`lidar_scan`], also reporting which body each beam struck
/// (`None` when the reading clamped at maximum range).
pub fn lidar_scan_with_hits(world: &World) -> (Scan, Vec<Option<BodyId>>) {
    let n = world.config.lidar_beams;
    let res = 360.0 / n as f64;
    let mut distances = Vec::with_capacity(n as usize);
    let mut hits = Vec::with_capacity(n as usize);
    for k in 0..n {
        let angle = world.robot.heading_deg + k as f64 * res;
        let (r, hit) = beam_reading(world, Vec2::from_heading_deg(angle));
        distances.push(r);
        hits.push(hit);
    }
    (
        Scan {
            distances,
            beam_count: n,
            angular_resolution_deg: res,
            max_range_mm: world.config.lidar_max_range_mm,
        },
        hits,
    )
}

/// Symbolic camera: the target is visible when its centre bearing lies within
/// the field of view and no obstacle disk blocks the sight line. `occluded`
/// reports an in-view target hidden behind an obstacle.
pub fn camera_observe(world: &World, fov_half_deg: f64) -> CameraObservation {
    debug_assert!(fov_half_deg > 0.0 && fov_half_deg < 180.0);
    let origin = world.robot.position();
    let to_target = world.target.center - origin;
    let bearing = normalize_bearing_deg(
        to_target.y.atan2(to_target.x).to_degrees() - world.robot.heading_deg,
    );
    if bearing.abs() > fov_half_deg {
        return CameraObservation {
            target_visible: false,
            bearing_deg: None,
            range_mm: None,
            occluded: false,
        };
    }
    let blocked = world
        .static_obstacles
        .iter()
        .chain(world.dynamic_obstacles.iter().map(|m| &m.disk))
        .any(|d| geom::segment_hits_disk(origin, world.target.center, d));
    if blocked {
        CameraObservation {
            target_visible: false,
            bearing_deg: None,
            range_mm: None,
            occluded: true,
        }
    } else {
        CameraObservation {
            target_visible: true,
            bearing_deg: Some(bearing),
            range_mm: Some(to_target.length()),
            occluded: false,
        }
    }
}

/// Execute one control signal against the world.
///
/// Straight sweeps the robot disk along the heading (negative direction for
/// backward) and stops at first contact with any body or wall; the partial
/// travel is recorded. Turn rotates in place and is always `Ok`.
pub fn apply_signal(world: &mut World, signal: &ControlSignal) -> ExecutionResult {
    match signal {
        ControlSignal::Turn {
            direction,
            angle_deg,
        } => {
            let delta = match direction {
                TurnDirection::Left => *angle_deg,
                TurnDirection::Right => -angle_deg,
            };
            world.robot = Pose::new(
                world.robot.x,
                world.robot.y,
                world.robot.heading_deg + delta,
            );
            ExecutionResult {
                status: ExecutionStatus::Ok,
                traveled_mm: 0.0,
                turned_deg: *angle_deg,
                collided_with: None,
            }
        }
        ControlSignal::Straight { distance_mm, .. } => {
            let magnitude = *distance_mm;
            let dir = Vec2::from_heading_deg(world.robot.heading_deg) * signal.travel_sign();
            let origin = world.robot.position();
            let radius = world.config.robot_radius_mm;

            // Walls: the robot centre is confined to the arena inset by its
            // radius, so contact distance is the exit of that inner rectangle.
            let inset_origin = origin - Vec2::new(radius, radius);
            let (wall_t, wall) = geom::ray_rect_exit(
                inset_origin,
                dir,
                world.config.arena_width_mm - 2.0 * radius,
                world.config.arena_height_mm - 2.0 * radius,
            );
            let mut first_hit = wall_t;
            let mut body = BodyId::from_wall(wall);

            // Disk bodies: sweep contact equals a ray cast against the disk
            // inflated by the robot radius.
            let mut consider = |disk: &Disk, id: BodyId| {
                let inflated = Disk::new(disk.center, disk.radius + radius);
                if let Some(t) = geom::ray_disk_first_hit(origin, dir, &inflated) {
                    if t < first_hit {
                        first_hit = t;
                        body = id;
                    }
                }
            };
            consider(&world.target, BodyId::Target);
            for (i, d) in world.static_obstacles.iter().enumerate() {
                consider(d, BodyId::StaticObstacle(i));
            }
            for (i, m) in world.dynamic_obstacles.iter().enumerate() {
                consider(&m.disk, BodyId::DynamicObstacle(i));
            }

            if first_hit <= magnitude {
                let end = origin + dir * first_hit;
                world.robot = Pose::new(end.x, end.y, world.robot.heading_deg);
                ExecutionResult {
                    status: if first_hit < 1e-9 {
                        ExecutionStatus::Blocked
                    } else {
                        ExecutionStatus::Collision
                    },
                    traveled_mm: first_hit,
                    turned_deg: 0.0,
                    collided_with: Some(body),
                }
            } else {
                let end = origin + dir * magnitude;
                world.robot = Pose::new(end.x, end.y, world.robot.heading_deg);
                ExecutionResult {
                    status: ExecutionStatus::Ok,
                    traveled_mm: magnitude,
                    turned_deg: 0.0,
                    collided_with: None,
                }
            }
        }
    }
}

/// Advance each dynamic obstacle by its velocity once.
///
/// Obstacles reflect off walls and off static obstacles (elastic bounce of
/// the velocity component normal to contact). Dynamic obstacles pass through
/// each other. Contact with the robot raises a flag for the evaluation loop.
pub fn step_dynamics(world: &mut World) -> DynamicsReport {
    let w = world.config.arena_width_mm;
    let h = world.config.arena_height_mm;
    let robot = world.robot_disk();
    let mut report = DynamicsReport::default();

    for idx in 0..world.dynamic_obstacles.len() {
        let statics = &world.static_obstacles;
        let m = &mut world.dynamic_obstacles[idx];
        let r = m.disk.radius;
        let mut pos = m.disk.center + m.velocity_mm_per_step;
        let mut vel = m.velocity_mm_per_step;

        // Wall reflections, per axis.
        if pos.x < r {
            pos.x = 2.0 * r - pos.x;
            vel.x = -vel.x;
        } else if pos.x > w - r {
            pos.x = 2.0 * (w - r) - pos.x;
            vel.x = -vel.x;
        }
        if pos.y < r {
            pos.y = 2.0 * r - pos.y;
            vel.y = -vel.y;
        } else if pos.y > h - r {
            pos.y = 2.0 * (h - r) - pos.y;
            vel.y = -vel.y;
        }

        // Bounce off static obstacles.
        for s in statics {
            let min_d = r + s.radius;
            let delta = pos - s.center;
            let dist = delta.length();
            if dist < min_d && dist > 0.0 {
                let n = delta * (1.0 / dist);
                let inward = vel.dot(n);
                if inward < 0.0 {
                    vel = vel - n * (2.0 * inward);
                }
                pos = s.center + n * min_d;
            }
        }

        m.disk.center = pos;
        m.velocity_mm_per_step = vel;

        if report.robot_contact.is_none() && m.disk.overlaps(&robot) {
            report.robot_contact = Some(idx);
        }
    }
    report
}

/// Spawn-time invariants: all bodies fully inside the arena, no two bodies
/// overlapping. Used by tests and the replay checker.
pub fn check_spawn_invariants(world: &World) -> Result<(), String> {
    let w = world.config.arena_width_mm;
    let h = world.config.arena_height_mm;
    let inside = |d: &Disk, name: &str| -> Result<(), String> {
        if d.center.x < d.radius
            || d.center.x > w - d.radius
            || d.center.y < d.radius
            || d.center.y > h - d.radius
        {
            return Err(format!("{name} not fully inside the arena"));
        }
        Ok(())
    };
    let mut bodies: Vec<(Disk, String)> = vec![
        (world.robot_disk(), "robot".to_string()),
        (world.target, "target".to_string()),
    ];
    for (i, d) in world.static_obstacles.iter().enumerate() {
        bodies.push((*d, format!("static-obstacle-{i}")));
    }
    for (i, m) in world.dynamic_obstacles.iter().enumerate() {
        bodies.push((m.disk, format!("dynamic-obstacle-{i}")));
    }
    for (d, name) in &bodies {
        inside(d, name)?;
    }
    for i in 0..bodies.len() {
        for j in i + 1..bodies.len() {
            if bodies[i].0.overlaps(&bodies[j].0) {
                return Err(format!("{} overlaps {}", bodies[i].1, bodies[j].1));
            }
        }
    }
    Ok(())
}
