//! Grid navigation environment: map, spawning, stepping/reward and raycast rendering.

mod env;
mod map;
pub mod pathfind;
mod render;

pub use env::{
    angle_diff, sample_spawn, wrap_angle, Action, AgentPose, Episode, Observation, SpawnMode, StepOutcome, Termination,
    DEATH_PENALTY, GOAL_BONUS, ISLAND_SPAWN_PROBABILITY, MAX_STEPS, STEP_CELLS, STEP_PENALTY, TURN_RADIANS,
};
pub use map::{Bounds, Cell, MapSpec, Region, SpawnPoint, GOAL_COUNT, SPAWN_COUNT};
pub use render::{
    cast_ray, column_angle, depth_buffer, depth_buffer_sized, render_frame, wall_intensity, DepthBuffer, DEPTH_SIZE,
    FIELD_OF_VIEW, FLOOR, FRAME_HEIGHT, FRAME_WIDTH, GOAL_MARKER, MAX_RANGE_CELLS, SKY,
};

#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("map parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}
