use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::{Cell, MapSpec};
use super::render::{depth_buffer, render_frame, DepthBuffer, FRAME_HEIGHT, FRAME_WIDTH};
use super::NavError;
use crate::raster::GrayImage;

pub const MAX_STEPS: usize = 210;
pub const STEP_PENALTY: f64 = 0.01;
pub const GOAL_BONUS: f64 = 1.0;
pub const DEATH_PENALTY: f64 = 1.0;
pub const ISLAND_SPAWN_PROBABILITY: f64 = 0.34;
/// Translation per movement action, as a fraction of the cell size.
pub const STEP_CELLS: f64 = 0.5;
pub const TURN_RADIANS: f64 = PI / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    MoveLeft30,
    MoveLeft45,
    MoveLeft90,
    MoveRight30,
    MoveRight45,
    MoveRight90,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const COUNT: usize = 9;
    pub const ALL: [Action; 9] = [
        Action::Forward,
        Action::MoveLeft30,
        Action::MoveLeft45,
        Action::MoveLeft90,
        Action::MoveRight30,
        Action::MoveRight45,
        Action::MoveRight90,
        Action::TurnLeft,
        Action::TurnRight,
    ];

    pub fn index(self) -> usize {
        Action::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Bearing of the translation relative to heading (left is positive);
    /// `None` for turns in place.
    pub fn bearing_offset(self) -> Option<f64> {
        let deg = match self {
            Action::Forward => 0.0,
            Action::MoveLeft30 => 30.0,
            Action::MoveLeft45 => 45.0,
            Action::MoveLeft90 => 90.0,
            Action::MoveRight30 => -30.0,
            Action::MoveRight45 => -45.0,
            Action::MoveRight90 => -90.0,
            Action::TurnLeft | Action::TurnRight => return None,
        };
        Some(f64::to_radians(deg))
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

/// Signed difference `a - b` folded into `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Radians in `[0, 2pi)`, counter-clockwise from +x.
    pub heading: f64,
}

impl AgentPose {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn planar_distance(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnMode {
    Train,
    Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    Death,
    Timeout,
    Running,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminated: bool,
    pub reason: Termination,
    pub next_pose: AgentPose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Goal bearing relative to heading, in `(-pi, pi]`.
    pub rel_goal_angle: f64,
    pub rel_goal_distance: f64,
    pub position: [f64; 3],
    pub avg_frame_depth: f64,
    pub depth_buffer: DepthBuffer,
    pub frame: Option<GrayImage>,
}

/// Draws a spawn index: island points share `ISLAND_SPAWN_PROBABILITY` in training,
/// and are the only candidates in evaluation.
pub fn sample_spawn(map: &MapSpec, mode: SpawnMode, rng: &mut impl Rng) -> usize {
    let island: Vec<usize> = map.island_spawns().map(|(i, _)| i).collect();
    let main: Vec<usize> = (0..map.spawns.len()).filter(|i| !map.spawns[*i].island).collect();
    let use_island = match mode {
        SpawnMode::Evaluation => true,
        SpawnMode::Train => rng.gen_bool(ISLAND_SPAWN_PROBABILITY),
    };
    let pool = if use_island { &island } else { &main };
    pool[rng.gen_range(0..pool.len())]
}

/// One navigation episode on a shared map.
#[derive(Clone, Debug)]
pub struct Episode {
    map: Arc<MapSpec>,
    pose: AgentPose,
    goal_index: usize,
    spawn_index: Option<usize>,
    steps: usize,
    done: bool,
    shaping: f64,
    initial_distance: f64,
}

impl Episode {
    /// Uniform goal, spawn per `mode`, uniform heading. Connectivity is
    /// checked when a map is loaded; here only the layout is re-checked.
    pub fn reset(map: Arc<MapSpec>, mode: SpawnMode, rng: &mut impl Rng) -> Result<Self, NavError> {
        map.validate_layout()?;
        let goal_index = rng.gen_range(0..map.goals.len());
        let spawn = sample_spawn(&map, mode, rng);
        let heading = rng.gen_range(0.0..TAU);
        let mut ep = Self::start_unchecked(map, spawn, goal_index, heading);
        ep.spawn_index = Some(spawn);
        Ok(ep)
    }

    pub fn reset_seeded(map: Arc<MapSpec>, mode: SpawnMode, seed: u64) -> Result<Self, NavError> {
        Self::reset(map, mode, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Starts at a given spawn point and goal.
    pub fn start(map: Arc<MapSpec>, spawn_index: usize, goal_index: usize, heading: f64) -> Result<Self, NavError> {
        if spawn_index >= map.spawns.len() || goal_index >= map.goals.len() {
            return Err(NavError::Config(format!("spawn {spawn_index} / goal {goal_index} out of range")));
        }
        Ok(Self::start_unchecked(map, spawn_index, goal_index, heading))
    }

    fn start_unchecked(map: Arc<MapSpec>, spawn_index: usize, goal_index: usize, heading: f64) -> Self {
        let s = map.spawns[spawn_index];
        let pose = AgentPose {
            x: s.x,
            y: s.y,
            z: map.elevation_at(s.x, s.y),
            heading: wrap_angle(heading),
        };
        let mut ep = Self::from_pose(map, pose, goal_index);
        ep.spawn_index = Some(spawn_index);
        ep
    }

    /// Starts from an arbitrary pose (used for replays and tests).
    pub fn from_pose(map: Arc<MapSpec>, pose: AgentPose, goal_index: usize) -> Self {
        let goal = map.goals[goal_index];
        let d0 = pose.planar_distance(goal);
        Self {
            map,
            pose,
            goal_index,
            spawn_index: None,
            steps: 0,
            done: false,
            shaping: if d0 > 1e-12 { 1.0 / d0 } else { 0.0 },
            initial_distance: d0,
        }
    }

    pub fn map(&self) -> &Arc<MapSpec> {
        &self.map
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn goal(&self) -> [f64; 2] {
        self.map.goals[self.goal_index]
    }

    pub fn spawn_index(&self) -> Option<usize> {
        self.spawn_index
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Dense reward coefficient `1 / d_0`.
    pub fn shaping_coefficient(&self) -> f64 {
        self.shaping
    }

    pub fn initial_distance(&self) -> f64 {
        self.initial_distance
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, NavError> {
        if self.done {
            return Err(NavError::State("step called after the episode terminated".into()));
        }
        let goal = self.goal();
        let d_prev = self.pose.planar_distance(goal);
        let mut next = self.pose;
        let mut died = false;
        match action.bearing_offset() {
            None => {
                let delta = if action == Action::TurnLeft { TURN_RADIANS } else { -TURN_RADIANS };
                next.heading = wrap_angle(self.pose.heading + delta);
            }
            Some(offset) => {
                let bearing = self.pose.heading + offset;
                let dist = STEP_CELLS * self.map.cell_size;
                let (nx, ny) = (self.pose.x + dist * bearing.cos(), self.pose.y + dist * bearing.sin());
                match self.map.cell_at(nx, ny) {
                    Some(Cell::Obstacle) => {}
                    Some(Cell::Walkable { elevation, .. }) => {
                        next.x = nx;
                        next.y = ny;
                        next.z = elevation;
                    }
                    Some(Cell::Void) | None => {
                        next.x = nx;
                        next.y = ny;
                        next.z = 0.0;
                        died = true;
                    }
                }
            }
        }
        self.steps += 1;
        let d_next = next.planar_distance(goal);
        let mut reward = self.shaping * (d_prev - d_next) - STEP_PENALTY;
        let reason = if died {
            reward -= DEATH_PENALTY;
            Termination::Death
        } else if d_next <= self.map.goal_radius {
            reward += GOAL_BONUS;
            Termination::Goal
        } else if self.steps >= MAX_STEPS {
            Termination::Timeout
        } else {
            Termination::Running
        };
        self.pose = next;
        self.done = reason != Termination::Running;
        Ok(StepOutcome {
            reward,
            terminated: self.done,
            reason,
            next_pose: next,
        })
    }

    pub fn observe(&self, with_frame: bool) -> Observation {
        let goal = self.goal();
        let bearing = (goal[1] - self.pose.y).atan2(goal[0] - self.pose.x);
        let depth = depth_buffer(&self.map, &self.pose);
        Observation {
            rel_goal_angle: angle_diff(bearing, self.pose.heading),
            rel_goal_distance: self.pose.planar_distance(goal),
            position: self.pose.position(),
            avg_frame_depth: depth.mean(),
            depth_buffer: depth,
            frame: with_frame.then(|| render_frame(&self.map, &self.pose, Some(goal), FRAME_WIDTH, FRAME_HEIGHT)),
        }
    }
}
