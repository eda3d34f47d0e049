//! Planar stand-ins for the four touch-manipulation tasks.
//!
//! Playing, Pushing and Opening are top-down scenes on a 0.7 m square table
//! with no in-plane gravity; Pick-up is a side view with gravity. A gripper
//! with two disk fingers is moved kinematically; the only dynamic body is
//! the task object (or the door). Each step integrates one physics step of
//! 1/60 s and reports a grayscale image plus a 10-dim touch vector:
//!
//! | index | content                                   |
//! |-------|-------------------------------------------|
//! | 0, 1  | gripper position (m)                      |
//! | 2, 3  | finger opening of left / right finger, 0..1 |
//! | 4..7  | left finger force x, y (N), torque (N m)  |
//! | 7..10 | right finger force x, y (N), torque (N m) |
//!
//! Actions are `[dx, dy, dz, finger]` in `[-1, 1]`, plus `yaw` for Opening.
//! Top-down scenes use `(dx, dy)`, the side view uses `(dx, dz)`.

pub mod geometry;
pub mod physics;
pub mod render;
pub mod shapes;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::Vec2;
pub use physics::{Body, ContactReport, Contactor, HalfPlane, KinematicDisk, PhysicsParams};
pub use render::{Camera, Canvas, Image};
pub use shapes::{bank_shape, sample_shape, ShapeDescriptor, ShapeSplit};

pub const TOUCH_DIM: usize = 10;
pub const FORCE_RANGE: std::ops::Range<usize> = 4..10;
pub const DEFAULT_HORIZON: usize = 200;
pub const SUCCESS_REWARD: f64 = 25.0;

pub const PUSH_SUCCESS_DISTANCE: f64 = 0.07;
pub const DOOR_SUCCESS_ANGLE: f64 = std::f64::consts::PI / 6.0;
pub const LIFT_SUCCESS_HEIGHT: f64 = 0.05;

/// Largest end-effector displacement per step (m).
pub const MAX_TRANSLATION: f64 = 0.01;
pub const MAX_YAW_STEP: f64 = 0.1;
pub const FINGER_RADIUS: f64 = 0.01;
/// Inner gap between the fingers at aperture 1.
pub const MAX_FINGER_GAP: f64 = 0.10;
pub const APERTURE_RATE: f64 = 0.2;
pub const GRIP_FORCE: f64 = 15.0;
pub const FINGER_FRICTION: f64 = 1.0;
/// Deepest a finger may sink into the object before the wrist gives way.
pub const MAX_FINGER_PENETRATION: f64 = 0.002;

pub const CUBE_SIDE: f64 = 0.05;
pub const CUBE_MASS: f64 = 0.2;
pub const OBJECT_FRICTION: f64 = 0.5;

const TABLE_HALF: f64 = 0.35;
const BOUNDS_HALF: f64 = 0.32;
/// Keeps both fingers inside the camera view at any aperture and yaw, so the
/// finger opening is always visible.
const GRIPPER_HALF: f64 = TABLE_HALF - MAX_FINGER_GAP / 2.0 - 2.0 * FINGER_RADIUS;
const DOOR_LENGTH: f64 = 0.15;
const DOOR_MASS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown task `{0}` (expected playing, pushing, opening or pickup)")]
    UnknownTask(String),
    #[error("action has {got} components, task expects {expected}")]
    ActionDim { got: usize, expected: usize },
    #[error("action component {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("episode already finished")]
    EpisodeOver,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("trace CSV: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Playing,
    Pushing,
    Opening,
    Pickup,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Playing, Task::Pushing, Task::Opening, Task::Pickup];

    pub fn name(self) -> &'static str {
        match self {
            Task::Playing => "playing",
            Task::Pushing => "pushing",
            Task::Opening => "opening",
            Task::Pickup => "pickup",
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            Task::Opening => 5,
            _ => 4,
        }
    }

    pub fn side_view(self) -> bool {
        self == Task::Pickup
    }

    /// Finger command is thresholded into open/closed.
    pub fn discrete_fingers(self) -> bool {
        matches!(self, Task::Opening | Task::Pickup)
    }

    pub fn has_goal(self) -> bool {
        self != Task::Playing
    }

    fn physics(self) -> PhysicsParams {
        if self.side_view() {
            PhysicsParams::side_view()
        } else {
            PhysicsParams::top_down()
        }
    }

    fn camera(self) -> Camera {
        if self.side_view() {
            Camera {
                min: Vec2::new(-TABLE_HALF, -0.1),
                max: Vec2::new(TABLE_HALF, 2.0 * TABLE_HALF - 0.1),
            }
        } else {
            Camera {
                min: Vec2::new(-TABLE_HALF, -TABLE_HALF),
                max: Vec2::new(TABLE_HALF, TABLE_HALF),
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "playing" => Ok(Task::Playing),
            "pushing" => Ok(Task::Pushing),
            "opening" => Ok(Task::Opening),
            "pickup" | "pick-up" => Ok(Task::Pickup),
            other => Err(EnvError::UnknownTask(other.to_string())),
        }
    }
}

/// Where the manipulated object comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectSource {
    Cube,
    /// Uniformly drawn from one split of the procedural shape bank.
    Bank { master_seed: u64, split: ShapeSplit },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task: Task,
    pub image_size: usize,
    pub horizon: usize,
    pub objects: ObjectSource,
}

impl EnvConfig {
    pub fn new(task: Task, image_size: usize) -> Self {
        Self {
            task,
            image_size,
            horizon: DEFAULT_HORIZON,
            objects: ObjectSource::Cube,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub position: Vec2,
    pub yaw: f64,
    /// Finger opening in `[0, 1]`.
    pub aperture: f64,
    pub grasping: bool,
}

impl Gripper {
    /// Left and right finger centres for a given pose.
    pub fn finger_centers_at(position: Vec2, yaw: f64, aperture: f64) -> [Vec2; 2] {
        let axis = Vec2::from_polar(1.0, yaw);
        let offset = aperture * MAX_FINGER_GAP / 2.0 + FINGER_RADIUS;
        [position - axis * offset, position + axis * offset]
    }

    pub fn finger_centers(&self) -> [Vec2; 2] {
        Self::finger_centers_at(self.position, self.yaw, self.aperture)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub image: Image,
    pub touch: [f64; TOUCH_DIM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub config: EnvConfig,
    pub seed: u64,
    pub gripper: Gripper,
    pub body: Body,
    pub walls: Vec<HalfPlane>,
    /// Pushing target.
    pub goal: Option<Vec2>,
    /// Cabinet hinge for Opening.
    pub hinge: Option<Vec2>,
    pub shape_index: Option<u64>,
    pub step: usize,
    /// Contacts solved in the most recent step.
    pub contacts: Vec<ContactReport>,
    /// Finger centres at which those contacts were solved.
    pub contact_fingers: [Vec2; 2],
    pub done: bool,
    pub succeeded: bool,
}

impl EnvState {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn object_position(&self) -> Vec2 {
        self.body.position
    }

    /// Door hinge angle (rad) for Opening, zero otherwise.
    pub fn door_angle(&self) -> f64 {
        if self.task() == Task::Opening {
            self.body.angle
        } else {
            0.0
        }
    }

    /// Clearance between the object's lowest point and the table (side view).
    pub fn lift_height(&self) -> f64 {
        self.body.min_y()
    }

    pub fn out_of_bounds(&self) -> bool {
        let p = self.body.position;
        match self.task() {
            Task::Opening => false,
            Task::Pickup => p.x.abs() > BOUNDS_HALF || p.y > 0.55 || p.y < -0.05,
            _ => p.x.abs() > BOUNDS_HALF || p.y.abs() > BOUNDS_HALF,
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            image: render(self),
            touch: sense_touch(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    pub out_of_bounds: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

fn cube_parts() -> Vec<Vec<Vec2>> {
    vec![ShapeDescriptor::cube(CUBE_SIDE, CUBE_MASS, OBJECT_FRICTION).vertices]
}

fn door_parts() -> Vec<Vec<Vec2>> {
    let rect = |x0: f64, y0: f64, x1: f64, y1: f64| {
        vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ]
    };
    vec![
        rect(0.0, -0.01, DOOR_LENGTH, 0.01),
        rect(DOOR_LENGTH - 0.04, -0.035, DOOR_LENGTH - 0.02, -0.01),
    ]
}

fn fingers_clear(body: &Body, gripper: &Gripper, clearance: f64) -> bool {
    let parts = body.world_parts();
    gripper.finger_centers().iter().all(|&c| {
        parts
            .iter()
            .all(|p| geometry::polygon_distance(p, c).0 - FINGER_RADIUS > clearance)
    })
}

fn object_for(config: &EnvConfig, rng: &mut ChaCha8Rng) -> (ShapeDescriptor, Option<u64>) {
    match config.objects {
        ObjectSource::Cube => (
            ShapeDescriptor::cube(CUBE_SIDE, CUBE_MASS, OBJECT_FRICTION),
            None,
        ),
        ObjectSource::Bank { master_seed, split } => {
            let idx = rng.random_range(split.range());
            (bank_shape(master_seed, idx), Some(idx))
        }
    }
}

/// Samples an initial state; a pure function of `(config, seed)`.
pub fn reset(config: &EnvConfig, seed: u64) -> (EnvState, Observation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = config.task;
    let mut goal = None;
    let mut hinge = None;
    let mut walls = Vec::new();
    let mut shape_index = None;
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.random_range(lo..hi);

    let (body, gripper) = loop {
        let (body, g) = match task {
            Task::Playing => {
                let (shape, idx) = object_for(config, &mut rng);
                shape_index = idx;
                let pos = Vec2::new(uniform(&mut rng, -0.2, 0.2), uniform(&mut rng, -0.2, 0.2));
                let angle = if idx.is_some() {
                    uniform(&mut rng, 0.0, std::f64::consts::TAU)
                } else {
                    0.0
                };
                let body = Body::free(vec![shape.vertices], shape.mass, shape.friction, pos, angle);
                let g = Vec2::new(uniform(&mut rng, -0.2, 0.2), uniform(&mut rng, -0.2, 0.2));
                (body, g)
            }
            Task::Pushing => {
                let target = Vec2::new(uniform(&mut rng, -0.1, 0.1), uniform(&mut rng, -0.1, 0.1));
                let dist = uniform(&mut rng, 0.10, 0.20);
                let theta = uniform(&mut rng, 0.0, std::f64::consts::TAU);
                goal = Some(target);
                let pos = target + Vec2::from_polar(dist, theta);
                let (shape, idx) = object_for(config, &mut rng);
                shape_index = idx;
                let angle = if idx.is_some() {
                    uniform(&mut rng, 0.0, std::f64::consts::TAU)
                } else {
                    0.0
                };
                let body = Body::free(vec![shape.vertices], shape.mass, shape.friction, pos, angle);
                let g = Vec2::new(uniform(&mut rng, -0.1, 0.1), uniform(&mut rng, -0.1, 0.1));
                (body, g)
            }
            Task::Opening => {
                let h = Vec2::new(uniform(&mut rng, -0.2, -0.05), uniform(&mut rng, 0.0, 0.1));
                hinge = Some(h);
                let body = Body::hinged(
                    door_parts(),
                    DOOR_MASS,
                    OBJECT_FRICTION,
                    h,
                    0.0,
                    (0.0, std::f64::consts::FRAC_PI_2),
                );
                let g = Vec2::new(
                    uniform(&mut rng, h.x, h.x + 0.2),
                    uniform(&mut rng, h.y - 0.2, h.y - 0.1),
                );
                (body, g)
            }
            Task::Pickup => {
                walls = vec![HalfPlane {
                    point: Vec2::ZERO,
                    normal: Vec2::new(0.0, 1.0),
                    friction: OBJECT_FRICTION,
                }];
                let x = uniform(&mut rng, -0.15, 0.15);
                let body = Body::free(
                    cube_parts(),
                    CUBE_MASS,
                    OBJECT_FRICTION,
                    Vec2::new(x, CUBE_SIDE / 2.0),
                    0.0,
                );
                let g = Vec2::new(uniform(&mut rng, -0.15, 0.15), uniform(&mut rng, 0.12, 0.25));
                (body, g)
            }
        };
        // Zero finger command holds the initial aperture.
        let gripper = Gripper {
            position: g,
            yaw: 0.0,
            aperture: if task.discrete_fingers() { 1.0 } else { 0.5 },
            grasping: false,
        };
        if fingers_clear(&body, &gripper, 0.01) {
            break (body, gripper);
        }
    };

    let state = EnvState {
        config: *config,
        seed,
        contact_fingers: gripper.finger_centers(),
        gripper,
        body,
        walls,
        goal,
        hinge,
        shape_index,
        step: 0,
        contacts: Vec::new(),
        done: false,
        succeeded: false,
    };
    let obs = state.observation();
    (state, obs)
}

fn finger_separation(parts: &[Vec<Vec2>], center: Vec2) -> f64 {
    parts
        .iter()
        .map(|p| geometry::polygon_distance(p, center).0 - FINGER_RADIUS)
        .fold(f64::INFINITY, f64::min)
}

fn both_fingers_touch(parts: &[Vec<Vec2>], position: Vec2, yaw: f64, aperture: f64) -> bool {
    Gripper::finger_centers_at(position, yaw, aperture)
        .iter()
        .all(|&c| finger_separation(parts, c) <= 0.0)
}

fn clamp_gripper(task: Task, p: Vec2) -> Vec2 {
    if task.side_view() {
        Vec2::new(
            p.x.clamp(-GRIPPER_HALF, GRIPPER_HALF),
            p.y.clamp(FINGER_RADIUS + 0.002, 0.45),
        )
    } else {
        Vec2::new(
            p.x.clamp(-GRIPPER_HALF, GRIPPER_HALF),
            p.y.clamp(-GRIPPER_HALF, GRIPPER_HALF),
        )
    }
}

/// Backs the gripper out along the contact normal wherever a finger ended up
/// deeper than `MAX_FINGER_PENETRATION` (object pinned against a wall, or a
/// finger driven into a door at its limit).
fn comply(task: Task, parts: &[Vec<Vec2>], mut position: Vec2, yaw: f64, aperture: f64) -> Vec2 {
    for _ in 0..4 {
        let mut moved = false;
        for c in Gripper::finger_centers_at(position, yaw, aperture) {
            for part in parts {
                let (d, _, n_out) = geometry::polygon_distance(part, c);
                let depth = FINGER_RADIUS - d;
                if depth > MAX_FINGER_PENETRATION {
                    position += n_out * (depth - MAX_FINGER_PENETRATION);
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    clamp_gripper(task, position)
}

/// Advances the episode by one physics step.
pub fn step(state: &mut EnvState, action: &[f64]) -> Result<StepOutcome, EnvError> {
    let task = state.task();
    if state.done {
        return Err(EnvError::EpisodeOver);
    }
    if action.len() != task.action_dim() {
        return Err(EnvError::ActionDim {
            got: action.len(),
            expected: task.action_dim(),
        });
    }
    if let Some(index) = action.iter().position(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction { index });
    }
    let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let params = task.physics();

    let delta = if task.side_view() {
        Vec2::new(a[0], a[2])
    } else {
        Vec2::new(a[0], a[1])
    } * MAX_TRANSLATION;
    let old = state.gripper;
    let position = clamp_gripper(task, old.position + delta);
    let yaw = if task == Task::Opening {
        (old.yaw + a[4] * MAX_YAW_STEP).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
    } else {
        old.yaw
    };

    let target = if task.discrete_fingers() {
        if a[3] < 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (a[3] + 1.0) / 2.0
    };
    let parts = state.body.world_parts();
    let mut aperture = if target >= old.aperture {
        (old.aperture + APERTURE_RATE).min(target)
    } else {
        (old.aperture - APERTURE_RATE).max(target)
    };
    let closing = target < old.aperture;
    if closing {
        if both_fingers_touch(&parts, position, yaw, old.aperture) {
            aperture = old.aperture;
        } else if both_fingers_touch(&parts, position, yaw, aperture) {
            let (mut lo, mut hi) = (aperture, old.aperture);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if both_fingers_touch(&parts, position, yaw, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            aperture = lo;
        }
    }
    let grasping = (closing || target < aperture) && both_fingers_touch(&parts, position, yaw, aperture);

    let start = old.finger_centers();
    let end = Gripper::finger_centers_at(position, yaw, aperture);
    let grip = if grasping { GRIP_FORCE * params.dt } else { 0.0 };
    let fingers: Vec<KinematicDisk> = (0..2)
        .map(|i| KinematicDisk {
            center: start[i],
            velocity: (end[i] - start[i]) * (1.0 / params.dt),
            radius: FINGER_RADIUS,
            friction: FINGER_FRICTION,
            min_normal_impulse: grip,
        })
        .collect();

    state.contacts = physics::step_body(&mut state.body, &fingers, &state.walls, &params);
    state.contact_fingers = start;
    let position = comply(task, &state.body.world_parts(), position, yaw, aperture);
    state.gripper = Gripper {
        position,
        yaw,
        aperture,
        grasping,
    };
    state.step += 1;

    let success = is_success(task, state);
    let out_of_bounds = state.out_of_bounds();
    let truncated = state.step >= state.config.horizon;
    let done = success || out_of_bounds || truncated;
    state.done = done;
    state.succeeded = success;
    Ok(StepOutcome {
        observation: state.observation(),
        reward: if success { SUCCESS_REWARD } else { 0.0 },
        done,
        info: StepInfo {
            success,
            out_of_bounds,
            truncated,
        },
    })
}

/// Task predicate: Pushing under 7 cm, Opening at or beyond 30 degrees,
/// Pick-up at 5 cm clearance; Playing has no goal.
pub fn is_success(task: Task, state: &EnvState) -> bool {
    match task {
        Task::Playing => false,
        Task::Pushing => state
            .goal
            .is_some_and(|g| (state.body.position - g).length() < PUSH_SUCCESS_DISTANCE),
        Task::Opening => state.body.angle >= DOOR_SUCCESS_ANGLE,
        Task::Pickup => state.lift_height() >= LIFT_SUCCESS_HEIGHT,
    }
}

/// Per-finger force on the finger and torque about the finger centre,
/// accumulated over the contacts of the last step.
pub fn finger_wrenches(state: &EnvState) -> [[f64; 3]; 2] {
    let dt = state.task().physics().dt;
    let mut out = [[0.0; 3]; 2];
    for c in &state.contacts {
        let Contactor::Finger(i) = c.with else {
            continue;
        };
        if c.normal_impulse == 0.0 && c.tangent_impulse == 0.0 {
            continue;
        }
        let force = c.impulse() * (-1.0 / dt);
        let lever = c.point - state.contact_fingers[i];
        out[i][0] += force.x;
        out[i][1] += force.y;
        out[i][2] += lever.cross(force);
    }
    out
}

pub fn sense_touch(state: &EnvState) -> [f64; TOUCH_DIM] {
    let g = &state.gripper;
    let w = finger_wrenches(state);
    [
        g.position.x,
        g.position.y,
        g.aperture,
        g.aperture,
        w[0][0],
        w[0][1],
        w[0][2],
        w[1][0],
        w[1][1],
        w[1][2],
    ]
}

pub fn render(state: &EnvState) -> Image {
    let task = state.task();
    let n = state.config.image_size;
    let mut canvas = Canvas::new(n, n, task.camera());
    use render::level;
    if task.side_view() {
        canvas.fill_rect(Vec2::new(-TABLE_HALF, -0.1), Vec2::new(TABLE_HALF, 0.0), level::FIXTURE);
    }
    if let Some(g) = state.goal {
        let h = CUBE_SIDE / 2.0;
        canvas.fill_rect(g - Vec2::new(h, h), g + Vec2::new(h, h), level::GOAL);
    }
    if let Some(h) = state.hinge {
        let l = DOOR_LENGTH;
        canvas.fill_rect(h + Vec2::new(-0.015, 0.0), h + Vec2::new(-0.005, l + 0.01), level::FIXTURE);
        canvas.fill_rect(h + Vec2::new(l + 0.005, 0.0), h + Vec2::new(l + 0.015, l + 0.01), level::FIXTURE);
        canvas.fill_rect(h + Vec2::new(-0.015, l + 0.01), h + Vec2::new(l + 0.015, l + 0.02), level::FIXTURE);
    }
    for part in state.body.world_parts() {
        canvas.fill_polygon(&part, level::OBJECT);
    }
    let fingers = state.gripper.finger_centers();
    if task.side_view() {
        let y = state.gripper.position.y + FINGER_RADIUS;
        canvas.fill_rect(
            Vec2::new(fingers[0].x, y),
            Vec2::new(fingers[1].x, y + 0.01),
            level::PALM,
        );
    } else {
        canvas.fill_disk(state.gripper.position, 0.006, level::PALM);
    }
    for c in fingers {
        canvas.fill_disk(c, FINGER_RADIUS, level::FINGER);
    }
    canvas.image
}

/// One row of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub object_x: f64,
    pub object_y: f64,
    pub object_angle: f64,
    pub gripper_x: f64,
    pub gripper_y: f64,
    pub gripper_yaw: f64,
    pub aperture: f64,
    pub touch: [f64; TOUCH_DIM],
    pub reward: f64,
    pub done: bool,
}

impl TraceStep {
    pub fn capture(state: &EnvState, touch: &[f64; TOUCH_DIM], reward: f64, done: bool) -> Self {
        Self {
            step: state.step,
            object_x: state.body.position.x,
            object_y: state.body.position.y,
            object_angle: state.body.angle,
            gripper_x: state.gripper.position.x,
            gripper_y: state.gripper.position.y,
            gripper_yaw: state.gripper.yaw,
            aperture: state.gripper.aperture,
            touch: *touch,
            reward,
            done,
        }
    }
}

fn trace_header() -> Vec<String> {
    let mut header: Vec<String> = [
        "step",
        "object_x",
        "object_y",
        "object_angle",
        "gripper_x",
        "gripper_y",
        "gripper_yaw",
        "aperture",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..TOUCH_DIM).map(|i| format!("touch_{i}")));
    header.push("reward".into());
    header.push("done".into());
    header
}

/// Writes an episode trace as CSV. Floats use their shortest round-trip
/// form, so `read_trace_csv` recovers them exactly.
pub fn write_trace_csv<W: Write>(out: W, steps: &[TraceStep]) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header())?;
    for s in steps {
        let mut rec = vec![
            s.step.to_string(),
            s.object_x.to_string(),
            s.object_y.to_string(),
            s.object_angle.to_string(),
            s.gripper_x.to_string(),
            s.gripper_y.to_string(),
            s.gripper_yaw.to_string(),
            s.aperture.to_string(),
        ];
        rec.extend(s.touch.iter().map(|v| v.to_string()));
        rec.push(s.reward.to_string());
        rec.push(s.done.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceStep>, EnvError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != trace_header() {
        return Err(EnvError::Trace("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize| EnvError::Trace(format!("row {}: bad value in column {col}", line + 1));
        let f = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let mut touch = [0.0; TOUCH_DIM];
        for (i, t) in touch.iter_mut().enumerate() {
            *t = f(8 + i)?;
        }
        out.push(TraceStep {
            step: rec[0].parse().map_err(|_| bad(0))?,
            object_x: f(1)?,
            object_y: f(2)?,
            object_angle: f(3)?,
            gripper_x: f(4)?,
            gripper_y: f(5)?,
            gripper_yaw: f(6)?,
            aperture: f(7)?,
            touch,
            reward: f(8 + TOUCH_DIM)?,
            done: rec[9 + TOUCH_DIM].parse().map_err(|_| bad(9 + TOUCH_DIM))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
