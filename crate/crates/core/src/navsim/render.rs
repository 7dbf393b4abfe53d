//! Column raycaster: one ray per image column across a 90 degree field of view.

use std::f64::consts::FRAC_PI_2;

use super::env::AgentPose;
use super::map::{Cell, MapSpec};
use crate::raster::GrayImage;

pub const FIELD_OF_VIEW: f64 = FRAC_PI_2;
/// Rays stop after this many cells; depths are normalised by it.
pub const MAX_RANGE_CELLS: f64 = 24.0;
pub const FRAME_WIDTH: usize = 320;
pub const FRAME_HEIGHT: usize = 200;
pub const DEPTH_SIZE: usize = 32;

pub const SKY: u8 = 150;
pub const FLOOR: u8 = 80;
pub const GOAL_MARKER: u8 = 255;
const GOAL_MARKER_RADIUS_CELLS: f64 = 0.5;
const GOAL_MARKER_SCALE: f64 = 0.7;

/// Angle of the ray through the centre of column `u`; column 0 is the left edge.
pub fn column_angle(heading: f64, u: usize, width: usize) -> f64 {
    heading + FIELD_OF_VIEW / 2.0 - FIELD_OF_VIEW * (u as f64 + 0.5) / width as f64
}

/// Euclidean distance in cells from `(ox, oy)` (cell units) to the first obstacle along `angle`.
pub fn cast_ray(map: &MapSpec, ox: f64, oy: f64, angle: f64) -> Option<f64> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let delta_x = if dx == 0.0 { f64::INFINITY } else { (1.0 / dx).abs() };
    let delta_y = if dy == 0.0 { f64::INFINITY } else { (1.0 / dy).abs() };
    let mut cx = ox.floor() as i64;
    let mut cy = oy.floor() as i64;
    let (step_x, mut side_x) = if dx < 0.0 {
        (-1, (ox - cx as f64) * delta_x)
    } else {
        (1, (cx as f64 + 1.0 - ox) * delta_x)
    };
    let (step_y, mut side_y) = if dy < 0.0 {
        (-1, (oy - cy as f64) * delta_y)
    } else {
        (1, (cy as f64 + 1.0 - oy) * delta_y)
    };
    loop {
        let dist = if side_x < side_y {
            let d = side_x;
            side_x += delta_x;
            cx += step_x;
            d
        } else {
            let d = side_y;
            side_y += delta_y;
            cy += step_y;
            d
        };
        if dist > MAX_RANGE_CELLS {
            return None;
        }
        if cx >= 0 && cy >= 0 && (cx as usize) < map.cols && (cy as usize) < map.rows && map.cell(cx as usize, cy as usize) == Cell::Obstacle {
            return Some(dist);
        }
    }
}

/// Nearest positive intersection of a ray with a circle, all in cell units.
fn ray_circle(ox: f64, oy: f64, angle: f64, cx: f64, cy: f64, radius: f64) -> Option<f64> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (fx, fy) = (cx - ox, cy - oy);
    let along = fx * dx + fy * dy;
    let perp_sq = fx * fx + fy * fy - along * along;
    let r2 = radius * radius;
    if perp_sq > r2 || fx * fx + fy * fy <= r2 {
        return None;
    }
    let t = along - (r2 - perp_sq).sqrt();
    (t > 0.0).then_some(t)
}

pub fn wall_intensity(perp_cells: f64) -> u8 {
    (230.0 - 170.0 * (perp_cells / MAX_RANGE_CELLS).min(1.0)).round() as u8
}

struct ColumnHit {
    wall: Option<f64>,
    goal: Option<f64>,
}

fn trace_column(map: &MapSpec, pose: &AgentPose, goal: Option<[f64; 2]>, u: usize, width: usize) -> ColumnHit {
    let (ox, oy) = (pose.x / map.cell_size, pose.y / map.cell_size);
    let angle = column_angle(pose.heading, u, width);
    let cos = (angle - pose.heading).cos();
    let wall = cast_ray(map, ox, oy, angle).map(|d| d * cos);
    let goal = goal.and_then(|g| {
        let t = ray_circle(ox, oy, angle, g[0] / map.cell_size, g[1] / map.cell_size, GOAL_MARKER_RADIUS_CELLS)?;
        let perp = t * cos;
        (perp <= MAX_RANGE_CELLS && wall.is_none_or(|w| perp < w)).then_some(perp)
    });
    ColumnHit { wall, goal }
}

fn covers(v: usize, height: usize, span: f64) -> bool {
    (v as f64 + 0.5 - height as f64 / 2.0).abs() <= span / 2.0
}

/// Renders a grayscale first-person view. Walls get brighter the closer they
/// are; the goal marker (when visible and not occluded) is drawn at [`GOAL_MARKER`].
pub fn render_frame(map: &MapSpec, pose: &AgentPose, goal: Option<[f64; 2]>, width: usize, height: usize) -> GrayImage {
    let mut img = GrayImage::new(width, height, FLOOR);
    for v in 0..height / 2 {
        img.pixels[v * width..(v + 1) * width].fill(SKY);
    }
    for u in 0..width {
        let hit = trace_column(map, pose, goal, u, width);
        if let Some(perp) = hit.wall {
            let span = height as f64 / perp.max(1e-6);
            let shade = wall_intensity(perp);
            for v in 0..height {
                if covers(v, height, span) {
                    img.set(u, v, shade);
                }
            }
        }
        if let Some(perp) = hit.goal {
            let span = GOAL_MARKER_SCALE * height as f64 / perp.max(1e-6);
            for v in 0..height {
                if covers(v, height, span) {
                    img.set(u, v, GOAL_MARKER);
                }
            }
        }
    }
    img
}

/// Square depth image; entries are wall distance over [`MAX_RANGE_CELLS`], 1.0 where nothing is hit.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    pub size: usize,
    pub values: Vec<f64>,
}

impl DepthBuffer {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn depth_buffer(map: &MapSpec, pose: &AgentPose) -> DepthBuffer {
    depth_buffer_sized(map, pose, DEPTH_SIZE)
}

pub fn depth_buffer_sized(map: &MapSpec, pose: &AgentPose, size: usize) -> DepthBuffer {
    let mut values = vec![1.0; size * size];
    for u in 0..size {
        let hit = trace_column(map, pose, None, u, size);
        if let Some(perp) = hit.wall {
            let span = size as f64 / perp.max(1e-6);
            let depth = (perp / MAX_RANGE_CELLS).min(1.0);
            for v in 0..size {
                if covers(v, size, span) {
                    values[v * size + u] = depth;
                }
            }
        }
    }
    DepthBuffer { size, values }
}
