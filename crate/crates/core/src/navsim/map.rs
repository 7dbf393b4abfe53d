use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NavError;

pub const GOAL_COUNT: usize = 16;
pub const SPAWN_COUNT: usize = 26;
const MAP_MAGIC: &str = "ntt-map 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Main,
    Island,
    /// Walkable link between the spawn island and the main map.
    Connector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Walkable { region: Region, elevation: f64 },
    Obstacle,
    Void,
}

impl Cell {
    pub const MAIN: Cell = Cell::Walkable {
        region: Region::Main,
        elevation: 0.0,
    };

    pub fn is_walkable(&self) -> bool {
        matches!(self, Cell::Walkable { .. })
    }

    fn code(&self) -> char {
        match *self {
            Cell::Obstacle => '#',
            Cell::Void => '~',
            Cell::Walkable { region: Region::Island, .. } => ',',
            Cell::Walkable { region: Region::Connector, .. } => '=',
            Cell::Walkable { region: Region::Main, elevation } => {
                let e = elevation.round();
                if e >= 1.0 && e <= 9.0 && (elevation - e).abs() < 1e-9 {
                    char::from_digit(e as u32, 10).unwrap()
                } else {
                    '.'
                }
            }
        }
    }

    fn from_code(c: char) -> Option<Cell> {
        Some(match c {
            '#' => Cell::Obstacle,
            '~' => Cell::Void,
            ',' => Cell::Walkable {
                region: Region::Island,
                elevation: 0.0,
            },
            '=' => Cell::Walkable {
                region: Region::Connector,
                elevation: 0.0,
            },
            '.' => Cell::MAIN,
            '1'..='9' => Cell::Walkable {
                region: Region::Main,
                elevation: c.to_digit(10).unwrap() as f64,
            },
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnPoint {
    pub x: f64,
    pub y: f64,
    pub island: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x < self.max_x && y >= self.min_y && y < self.max_y
    }
}

/// Grid world. Cell `(col, row)` covers `[col*cell_size, (col+1)*cell_size) x [row*cell_size, (row+1)*cell_size)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub name: String,
    pub cols: usize,
    pub rows: usize,
    pub cell_size: f64,
    pub goal_radius: f64,
    pub cells: Vec<Cell>,
    pub goals: Vec<[f64; 2]>,
    pub spawns: Vec<SpawnPoint>,
}

impl MapSpec {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: self.cols as f64 * self.cell_size,
            max_y: self.rows as f64 * self.cell_size,
        }
    }

    pub fn cell(&self, col: usize, row: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn cell_coords(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.bounds().contains(x, y) {
            return None;
        }
        let col = ((x / self.cell_size) as usize).min(self.cols - 1);
        let row = ((y / self.cell_size) as usize).min(self.rows - 1);
        Some((col, row))
    }

    /// Cell under a world position; `None` outside the bounds.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        self.cell_coords(x, y).map(|(c, r)| self.cell(c, r))
    }

    pub fn elevation_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_at(x, y) {
            Some(Cell::Walkable { elevation, .. }) => elevation,
            _ => 0.0,
        }
    }

    pub fn region_at(&self, x: f64, y: f64) -> Option<Region> {
        match self.cell_at(x, y) {
            Some(Cell::Walkable { region, .. }) => Some(region),
            _ => None,
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [(col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size]
    }

    pub fn island_spawns(&self) -> impl Iterator<Item = (usize, &SpawnPoint)> {
        self.spawns.iter().enumerate().filter(|(_, s)| s.island)
    }

    /// Walkable 8-neighbours; diagonal moves need both orthogonal cells walkable.
    pub fn neighbours(&self, col: usize, row: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        const STEPS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let nc = col as isize + dc;
            let nr = row as isize + dr;
            if nc < 0 || nr < 0 || nc >= self.cols as isize || nr >= self.rows as isize {
                return None;
            }
            let (nc, nr) = (nc as usize, nr as usize);
            if !self.cell(nc, nr).is_walkable() {
                return None;
            }
            if dc != 0 && dr != 0 && !(self.cell(nc, row).is_walkable() && self.cell(col, nr).is_walkable()) {
                return None;
            }
            let cost = if dc != 0 && dr != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            Some((nc, nr, cost))
        })
    }

    fn reachable_from(&self, col: usize, row: usize) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([(col, row)]);
        seen[row * self.cols + col] = true;
        while let Some((c, r)) = queue.pop_front() {
            for (nc, nr, _) in self.neighbours(c, r) {
                let idx = nr * self.cols + nc;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back((nc, nr));
                }
            }
        }
        seen
    }

    /// Checks counts, placement on walkable cells and spawn-to-goal connectivity.
    pub fn validate(&self) -> Result<(), NavError> {
        self.validate_layout()?;
        for (i, s) in self.spawns.iter().enumerate() {
            let (c, r) = self.cell_coords(s.x, s.y).unwrap();
            let seen = self.reachable_from(c, r);
            for (gi, g) in self.goals.iter().enumerate() {
                let (gc, gr) = self.cell_coords(g[0], g[1]).unwrap();
                if !seen[gr * self.cols + gc] {
                    return Err(NavError::Config(format!("goal {gi} unreachable from spawn {i}")));
                }
            }
        }
        Ok(())
    }

    /// The cheap part of [`MapSpec::validate`]: counts and placement, no connectivity search.
    pub fn validate_layout(&self) -> Result<(), NavError> {
        let err = |m: String| Err(NavError::Config(m));
        if self.cols == 0 || self.rows == 0 || self.cells.len() != self.cols * self.rows {
            return err(format!("grid {}x{} holds {} cells", self.cols, self.rows, self.cells.len()));
        }
        if !(self.cell_size > 0.0) || !(self.goal_radius > 0.0) {
            return err("cell_size and goal_radius must be positive".into());
        }
        if self.goals.len() != GOAL_COUNT {
            return err(format!("expected {GOAL_COUNT} goals, found {}", self.goals.len()));
        }
        if self.spawns.len() != SPAWN_COUNT {
            return err(format!("expected {SPAWN_COUNT} spawn points, found {}", self.spawns.len()));
        }
        if !self.spawns.iter().any(|s| s.island) {
            return err("no island spawn point".into());
        }
        if self.spawns.iter().all(|s| s.island) {
            return err("no main-map spawn point".into());
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !self.cell_at(g[0], g[1]).is_some_and(|c| c.is_walkable()) {
                return err(format!("goal {i} at ({}, {}) is not on a walkable cell", g[0], g[1]));
            }
        }
        for (i, s) in self.spawns.iter().enumerate() {
            if !self.cell_at(s.x, s.y).is_some_and(|c| c.is_walkable()) {
                return err(format!("spawn {i} at ({}, {}) is not on a walkable cell", s.x, s.y));
            }
            if s.island && self.region_at(s.x, s.y) != Some(Region::Island) {
                return err(format!("spawn {i} is flagged island but lies outside the island"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAP_MAGIC}");
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "cell_size {}", self.cell_size);
        let _ = writeln!(out, "goal_radius {}", self.goal_radius);
        for g in &self.goals {
            let _ = writeln!(out, "goal {} {}", g[0], g[1]);
        }
        for s in &self.spawns {
            let _ = writeln!(out, "spawn {} {} {}", s.x, s.y, if s.island { "island" } else { "main" });
        }
        let _ = writeln!(out, "grid {} {}", self.cols, self.rows);
        for r in 0..self.rows {
            let line: String = (0..self.cols).map(|c| self.cell(c, r).code()).collect();
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, NavError> {
        let mut lines = text.lines().enumerate();
        let perr = |line: usize, msg: &str| NavError::Parse {
            line: line + 1,
            message: msg.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l.trim() == MAP_MAGIC => {}
            _ => return Err(perr(0, "missing `ntt-map 1` header")),
        }
        let mut map = MapSpec {
            name: String::new(),
            cols: 0,
            rows: 0,
            cell_size: 0.0,
            goal_radius: 0.0,
            cells: Vec::new(),
            goals: Vec::new(),
            spawns: Vec::new(),
        };
        let num = |i: usize, s: Option<&str>| -> Result<f64, NavError> {
            s.and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| perr(i, "expected a number"))
        };
        for (i, line) in lines.by_ref() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with(';') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("name") => map.name = parts.collect::<Vec<_>>().join(" "),
                Some("cell_size") => map.cell_size = num(i, parts.next())?,
                Some("goal_radius") => map.goal_radius = num(i, parts.next())?,
                Some("goal") => map.goals.push([num(i, parts.next())?, num(i, parts.next())?]),
                Some("spawn") => {
                    let x = num(i, parts.next())?;
                    let y = num(i, parts.next())?;
                    let island = match parts.next() {
                        Some("island") => true,
                        Some("main") => false,
                        _ => return Err(perr(i, "spawn flag must be `island` or `main`")),
                    };
                    map.spawns.push(SpawnPoint { x, y, island });
                }
                Some("grid") => {
                    map.cols = num(i, parts.next())? as usize;
                    map.rows = num(i, parts.next())? as usize;
                    break;
                }
                _ => return Err(perr(i, "unknown header record")),
            }
        }
        for r in 0..map.rows {
            let (i, line) = lines.next().ok_or_else(|| perr(usize::MAX - 1, &format!("grid ends before row {r}")))?;
            let row: Vec<char> = line.trim_end_matches(['\r', '\n']).chars().collect();
            if row.len() != map.cols {
                return Err(perr(i, &format!("row has {} cells, expected {}", row.len(), map.cols)));
            }
            for c in row {
                map.cells.push(Cell::from_code(c).ok_or_else(|| perr(i, &format!("unknown cell code `{c}`")))?);
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, NavError> {
        let text = std::fs::read_to_string(path).map_err(|e| NavError::Io(format!("{}: {e}", path.display())))?;
        let map = Self::parse(&text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<(), NavError> {
        std::fs::write(path, self.to_text()).map_err(|e| NavError::Io(format!("{}: {e}", path.display())))
    }

    /// Open walkable field with no obstacles, goals or spawns. Used for renderer checks.
    pub fn empty_arena(cols: usize, rows: usize, cell_size: f64) -> Self {
        MapSpec {
            name: "arena".into(),
            cols,
            rows,
            cell_size,
            goal_radius: 2.0 * cell_size,
            cells: vec![Cell::MAIN; cols * rows],
            goals: Vec::new(),
            spawns: Vec::new(),
        }
    }

    /// The reference 50x32 map (500 m x 320 m at 10 m cells): a main map with
    /// obstacles and a raised plateau, and a spawn island joined to it by a connector strip.
    pub fn default_map() -> Self {
        let (cols, rows) = (50usize, 32usize);
        let mut cells = vec![Cell::Void; cols * rows];
        let mut fill = |r0: usize, r1: usize, c0: usize, c1: usize, cell: Cell| {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * cols + c] = cell;
                }
            }
        };
        fill(1, 22, 1, 48, Cell::MAIN);
        fill(
            2,
            5,
            20,
            29,
            Cell::Walkable {
                region: Region::Main,
                elevation: 2.0,
            },
        );
        for (r0, r1, c0, c1) in [(4, 7, 8, 13), (10, 14, 21, 27), (3, 6, 34, 39), (14, 18, 38, 42), (15, 18, 6, 10), (9, 10, 40, 46)] {
            fill(r0, r1, c0, c1, Cell::Obstacle);
        }
        let connector = Cell::Walkable {
            region: Region::Connector,
            elevation: 0.0,
        };
        fill(23, 24, 5, 44, connector);
        fill(
            25,
            30,
            5,
            44,
            Cell::Walkable {
                region: Region::Island,
                elevation: 0.0,
            },
        );
        let cs = 10.0;
        let at = |c: usize, r: usize| [(c as f64 + 0.5) * cs, (r as f64 + 0.5) * cs];
        let goals = [
            (3, 2),
            (16, 2),
            (26, 3),
            (45, 2),
            (3, 9),
            (17, 8),
            (30, 8),
            (46, 6),
            (14, 12),
            (33, 12),
            (46, 13),
            (4, 20),
            (16, 19),
            (28, 18),
            (35, 20),
            (46, 20),
        ]
        .iter()
        .map(|&(c, r)| at(c, r))
        .collect();
        let main_spawns = [
            (6, 2),
            (22, 7),
            (40, 2),
            (47, 4),
            (2, 12),
            (10, 10),
            (18, 15),
            (30, 15),
            (44, 16),
            (25, 21),
            (8, 21),
            (40, 21),
            (33, 5),
            (15, 5),
            (2, 17),
            (47, 11),
            (36, 9),
            (11, 14),
            (29, 7),
            (20, 2),
        ];
        let island_spawns = [(10, 27), (17, 28), (24, 27), (31, 28), (38, 27), (25, 29)];
        let spawns = island_spawns
            .iter()
            .map(|&(c, r)| (c, r, true))
            .chain(main_spawns.iter().map(|&(c, r)| (c, r, false)))
            .map(|(c, r, island)| {
                let [x, y] = at(c, r);
                SpawnPoint { x, y, island }
            })
            .collect();
        MapSpec {
            name: "default".into(),
            cols,
            rows,
            cell_size: cs,
            goal_radius: 2.0 * cs,
            cells,
            goals,
            spawns,
        }
    }
}
