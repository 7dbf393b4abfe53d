//! Scripted stand-in for recorded human play.
//!
//! The player plans a shortest path, smooths it, then walks it the way a
//! keyboard-and-mouse player does: turn to face the next waypoint, walk
//! forward. Traits add pauses (looking around in place), turn overshoot with
//! a correction, side-steps, and noisy waypoints.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trajectory::{Recorder, Source, Trajectory};
use super::PolicyError;
use crate::navsim::pathfind::{segment_clear, shortest_path, smooth_path};
use crate::navsim::{angle_diff, Action, AgentPose, Cell, Episode, MapSpec, Termination, STEP_CELLS};

/// Behavioural knobs of a synthetic player.
///
/// Ranges: `pause_prob`, `overshoot_prob` and `speed_jitter` are per-step
/// probabilities in `[0, 1]`; `waypoint_noise` is a standard deviation in
/// cells, in `[0, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanTraits {
    pub waypoint_noise: f64,
    pub pause_prob: f64,
    pub overshoot_prob: f64,
    pub speed_jitter: f64,
}

impl Default for HumanTraits {
    fn default() -> Self {
        Self {
            waypoint_noise: 0.35,
            pause_prob: 0.03,
            overshoot_prob: 0.3,
            speed_jitter: 0.1,
        }
    }
}

impl HumanTraits {
    pub const ZERO: HumanTraits = HumanTraits {
        waypoint_noise: 0.0,
        pause_prob: 0.0,
        overshoot_prob: 0.0,
        speed_jitter: 0.0,
    };

    pub fn validate(&self) -> Result<(), PolicyError> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !(prob(self.pause_prob) && prob(self.overshoot_prob) && prob(self.speed_jitter) && (0.0..=2.0).contains(&self.waypoint_noise)) {
            return Err(PolicyError::Config(format!("human traits out of range: {self:?}")));
        }
        Ok(())
    }

    /// A player-specific style drawn around the defaults.
    pub fn for_player(player: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(player as u64 + 1)));
        Self {
            waypoint_noise: rng.gen_range(0.15..0.6),
            pause_prob: rng.gen_range(0.01..0.05),
            overshoot_prob: rng.gen_range(0.15..0.45),
            speed_jitter: rng.gen_range(0.05..0.15),
        }
    }
}

/// Facing error below which the player walks instead of turning.
const FACING_TOLERANCE: f64 = PI / 12.0 + 1e-9;
const WAYPOINT_REACHED_CELLS: f64 = 0.6;
const PATH_CLEARANCE_CELLS: f64 = 0.3;

fn predicted(map: &MapSpec, pose: &AgentPose, action: Action) -> Option<Cell> {
    let offset = action.bearing_offset()?;
    let d = STEP_CELLS * map.cell_size;
    let b = pose.heading + offset;
    Some(map.cell_at(pose.x + d * b.cos(), pose.y + d * b.sin()).unwrap_or(Cell::Void))
}

fn safe(map: &MapSpec, pose: &AgentPose, action: Action) -> bool {
    !matches!(predicted(map, pose, action), Some(Cell::Void))
}

fn progresses(map: &MapSpec, pose: &AgentPose, action: Action) -> bool {
    matches!(predicted(map, pose, action), Some(Cell::Walkable { .. }))
}

/// Movement action whose bearing is closest to `desired`, among those that
/// neither leave walkable ground nor bump into an obstacle.
fn best_move(map: &MapSpec, pose: &AgentPose, desired: f64) -> Option<Action> {
    Action::ALL
        .iter()
        .copied()
        .filter(|a| !a.is_turn() && progresses(map, pose, *a))
        .min_by(|a, b| {
            let ea = angle_diff(pose.heading + a.bearing_offset().unwrap(), desired).abs();
            let eb = angle_diff(pose.heading + b.bearing_offset().unwrap(), desired).abs();
            ea.partial_cmp(&eb).unwrap()
        })
}

fn plan(map: &MapSpec, start: AgentPose, goal: [f64; 2]) -> Result<Vec<[f64; 2]>, PolicyError> {
    let from = map
        .cell_coords(start.x, start.y)
        .ok_or_else(|| PolicyError::Generation("start outside the map".into()))?;
    let to = map
        .cell_coords(goal[0], goal[1])
        .ok_or_else(|| PolicyError::Generation("goal outside the map".into()))?;
    let cells = shortest_path(map, from, to).ok_or_else(|| PolicyError::Generation("goal unreachable from spawn".into()))?;
    let mut points: Vec<[f64; 2]> = cells.iter().map(|&(c, r)| map.cell_center(c, r)).collect();
    points[0] = [start.x, start.y];
    *points.last_mut().unwrap() = goal;
    Ok(smooth_path(map, &points, PATH_CLEARANCE_CELLS * map.cell_size))
}

fn perturb(map: &MapSpec, path: &[[f64; 2]], noise_cells: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    if noise_cells <= 0.0 || path.len() < 3 {
        return path.to_vec();
    }
    let normal = Normal::new(0.0, noise_cells * map.cell_size).expect("positive std");
    let mut out = path.to_vec();
    for i in 1..out.len() - 1 {
        let cand = [out[i][0] + normal.sample(rng), out[i][1] + normal.sample(rng)];
        let clear = PATH_CLEARANCE_CELLS * map.cell_size;
        if segment_clear(map, out[i - 1], cand, clear) && segment_clear(map, cand, out[i + 1], clear) {
            out[i] = cand;
        }
    }
    out
}

/// Where the player is looking at spawn: towards the main map (-y), with jitter.
fn spawn_heading(rng: &mut impl Rng) -> f64 {
    1.5 * PI + rng.gen_range(-FRAC_PI_2 / 3.0..FRAC_PI_2 / 3.0)
}

/// Generates one synthetic-human trajectory from a random island spawn.
pub fn scripted_human_policy(
    map: Arc<MapSpec>,
    goal_index: usize,
    traits: HumanTraits,
    seed: u64,
    generator_id: &str,
) -> Result<Trajectory, PolicyError> {
    traits.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let island: Vec<usize> = map.island_spawns().map(|(i, _)| i).collect();
    if island.is_empty() {
        return Err(PolicyError::Generation("map has no island spawn".into()));
    }
    let spawn = island[rng.gen_range(0..island.len())];
    let heading = spawn_heading(&mut rng);
    let ep = Episode::start(map.clone(), spawn, goal_index, heading).map_err(|e| PolicyError::Generation(e.to_string()))?;
    let id = format!("{generator_id}-s{seed}-g{goal_index}");
    walk(ep, traits, &mut rng, id, generator_id)
}

/// Same walker with every perturbation disabled.
pub fn shortest_path_follower(map: Arc<MapSpec>, spawn_index: usize, goal_index: usize, heading: f64) -> Result<Trajectory, PolicyError> {
    let ep = Episode::start(map, spawn_index, goal_index, heading).map_err(|e| PolicyError::Generation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    walk(ep, HumanTraits::ZERO, &mut rng, format!("follower-{spawn_index}-{goal_index}"), "follower")
}

fn walk(mut ep: Episode, traits: HumanTraits, rng: &mut ChaCha8Rng, id: String, generator_id: &str) -> Result<Trajectory, PolicyError> {
    let map = ep.map().clone();
    let goal = ep.goal();
    let path = perturb(&map, &plan(&map, ep.pose(), goal)?, traits.waypoint_noise, rng);
    let mut next_wp = 1.min(path.len() - 1);
    let mut rec = Recorder::new(ep.pose());
    let mut queued: Vec<Action> = Vec::new();
    let mut outcome = Termination::Running;

    while !ep.is_done() {
        let pose = ep.pose();
        while next_wp < path.len() - 1 && pose.planar_distance(path[next_wp]) < WAYPOINT_REACHED_CELLS * map.cell_size {
            next_wp += 1;
        }
        let target = path[next_wp];
        let desired = (target[1] - pose.y).atan2(target[0] - pose.x);
        let err = angle_diff(desired, pose.heading);

        let action = if let Some(a) = queued.pop() {
            a
        } else if traits.pause_prob > 0.0 && rng.gen_bool(traits.pause_prob) {
            // look around without moving: left/right pairs leave the heading unchanged
            let pairs = rng.gen_range(1..=2);
            let first = if rng.gen_bool(0.5) { Action::TurnLeft } else { Action::TurnRight };
            let second = if first == Action::TurnLeft { Action::TurnRight } else { Action::TurnLeft };
            for _ in 0..pairs {
                queued.push(second);
                queued.push(first);
            }
            queued.pop().unwrap()
        } else if err.abs() > FACING_TOLERANCE {
            let turn = if err > 0.0 { Action::TurnLeft } else { Action::TurnRight };
            if err.abs() < PI / 4.0 && traits.overshoot_prob > 0.0 && rng.gen_bool(traits.overshoot_prob) {
                // one turn too many, then turn back
                let back = if turn == Action::TurnLeft { Action::TurnRight } else { Action::TurnLeft };
                queued.push(back);
                queued.push(turn);
            }
            turn
        } else if traits.speed_jitter > 0.0 && rng.gen_bool(traits.speed_jitter) {
            let side = if rng.gen_bool(0.5) { Action::MoveLeft30 } else { Action::MoveRight30 };
            if progresses(&map, &pose, side) {
                side
            } else {
                Action::Forward
            }
        } else {
            Action::Forward
        };

        let action = if action.is_turn() || progresses(&map, &pose, action) {
            action
        } else {
            queued.clear();
            match best_move(&map, &pose, desired) {
                Some(a) => a,
                None => {
                    if err >= 0.0 {
                        Action::TurnLeft
                    } else {
                        Action::TurnRight
                    }
                }
            }
        };
        debug_assert!(action.is_turn() || safe(&map, &pose, action));
        let out = ep.step(action).map_err(|e| PolicyError::Generation(e.to_string()))?;
        rec.record(action, &out);
        outcome = out.reason;
    }
    Ok(rec.finish(id, Source::Human, generator_id.to_string(), ep.goal_index(), outcome))
}
