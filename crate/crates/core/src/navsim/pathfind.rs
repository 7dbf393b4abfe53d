//! Grid shortest paths and straight-line walkability, used by the scripted
//! player and by reachability checks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::map::{Cell, MapSpec};

#[derive(Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.partial_cmp(&self.f).unwrap_or(Ordering::Equal).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

/// A* over walkable cells with 8-connectivity and no corner cutting.
/// Returns the cell sequence from `from` to `to` inclusive.
pub fn shortest_path(map: &MapSpec, from: (usize, usize), to: (usize, usize)) -> Option<Vec<(usize, usize)>> {
    if !map.cell(from.0, from.1).is_walkable() || !map.cell(to.0, to.1).is_walkable() {
        return None;
    }
    let n = map.cols * map.rows;
    let idx = |c: (usize, usize)| c.1 * map.cols + c.0;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[idx(from)] = 0.0;
    open.push(Node {
        f: octile(from, to),
        idx: idx(from),
    });
    while let Some(Node { idx: cur, .. }) = open.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        if cur == idx(to) {
            let mut path = vec![to];
            let mut p = cur;
            while parent[p] != usize::MAX {
                p = parent[p];
                path.push((p % map.cols, p / map.cols));
            }
            path.reverse();
            return Some(path);
        }
        let (c, r) = (cur % map.cols, cur / map.cols);
        for (nc, nr, cost) in map.neighbours(c, r) {
            let ni = idx((nc, nr));
            let cand = g[cur] + cost;
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = cur;
                open.push(Node {
                    f: cand + octile((nc, nr), to),
                    idx: ni,
                });
            }
        }
    }
    None
}

/// True when the straight segment between two world points keeps at least
/// `clearance` (world units) from obstacle, void and out-of-bounds cells.
pub fn segment_clear(map: &MapSpec, a: [f64; 2], b: [f64; 2], clearance: f64) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let samples = ((len / (0.1 * map.cell_size)).ceil() as usize).max(1);
    let (nx, ny) = if len > 0.0 { (-dy / len, dx / len) } else { (0.0, 0.0) };
    let ok = |x: f64, y: f64| matches!(map.cell_at(x, y), Some(Cell::Walkable { .. }));
    (0..=samples).all(|i| {
        let t = i as f64 / samples as f64;
        let (x, y) = (a[0] + t * dx, a[1] + t * dy);
        ok(x, y) && ok(x + clearance * nx, y + clearance * ny) && ok(x - clearance * nx, y - clearance * ny)
    })
}

/// Greedy string-pulling: keeps only the waypoints needed for clear straight segments.
pub fn smooth_path(map: &MapSpec, points: &[[f64; 2]], clearance: f64) -> Vec<[f64; 2]> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut anchor = 0;
    while anchor < points.len() - 1 {
        let mut next = anchor + 1;
        for j in (anchor + 2..points.len()).rev() {
            if segment_clear(map, points[anchor], points[j], clearance) {
                next = j;
                break;
            }
        }
        out.push(points[next]);
        anchor = next;
    }
    out
}
