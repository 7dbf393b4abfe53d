use std::collections::BTreeMap;

use ntt_core::encoders::{encode_barcode, encode_topdown, END_MARK, START_MARK, TOPDOWN_HEIGHT, TOPDOWN_WIDTH, TRACE};
use ntt_core::navsim::{AgentPose, MapSpec, Termination};
use ntt_core::policies::{Source, Trajectory, TrajectoryStep};
use ntt_core::raster::GrayImage;

pub fn trajectory(points: &[(f64, f64)]) -> Trajectory {
    Trajectory {
        id: "crafted".into(),
        source: Source::Human,
        generator_id: "crafted".into(),
        goal_index: 0,
        outcome: Termination::Goal,
        steps: points
            .iter()
            .enumerate()
            .map(|(t, &(x, y))| TrajectoryStep::from_pose(t, AgentPose { x, y, z: 0.0, heading: 0.0 }))
            .collect(),
    }
}

/// Pixels of an axis-aligned or exactly diagonal run, endpoints included.
fn run(a: (i64, i64), b: (i64, i64)) -> Vec<(usize, usize)> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    assert!(dx == 0 || dy == 0 || dx.abs() == dy.abs(), "oracle only covers straight runs");
    let n = dx.abs().max(dy.abs());
    (0..=n)
        .map(|k| ((a.0 + dx.signum() * k) as usize, (a.1 + dy.signum() * k) as usize))
        .collect()
}

/// Hand-built expectation: pixel corners listed in raster coordinates.
fn expected(corners: &[(i64, i64)]) -> BTreeMap<(usize, usize), u8> {
    let mut m = BTreeMap::new();
    for w in corners.windows(2) {
        for p in run(w[0], w[1]) {
            m.insert(p, TRACE);
        }
    }
    if corners.len() == 1 {
        m.insert((corners[0].0 as usize, corners[0].1 as usize), TRACE);
    }
    let s = corners[0];
    let e = *corners.last().unwrap();
    m.insert((s.0 as usize, s.1 as usize), START_MARK);
    m.insert((e.0 as usize, e.1 as usize), END_MARK);
    m
}

fn marked(img: &GrayImage) -> BTreeMap<(usize, usize), u8> {
    let mut m = BTreeMap::new();
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(c, r) != 0 {
                m.insert((c, r), img.get(c, r));
            }
        }
    }
    m
}

/// Ten crafted trajectories on the default 500 x 320 map. World x maps to
/// column `floor(0.64 x)` and y to row `floor(0.625 y)`, so multiples of 25 m
/// and 16 m land on pixel multiples of 16 and 10.
pub fn topdown_cases() -> Vec<(&'static str, Vec<(f64, f64)>, Vec<(i64, i64)>)> {
    vec![
        ("stationary centre", vec![(250.0, 160.0)], vec![(160, 100)]),
        ("west to east at mid height", vec![(25.0, 160.0), (475.0, 160.0)], vec![(16, 100), (304, 100)]),
        ("north to south through centre", vec![(250.0, 16.0), (250.0, 304.0)], vec![(160, 10), (160, 190)]),
        ("diagonal from origin", vec![(0.0, 0.0), (125.0, 128.0)], vec![(0, 0), (80, 80)]),
        ("L shape", vec![(25.0, 16.0), (250.0, 16.0), (250.0, 160.0)], vec![(16, 10), (160, 10), (160, 100)]),
        (
            "closed square",
            vec![(100.0, 80.0), (200.0, 80.0), (200.0, 240.0), (100.0, 240.0), (100.0, 80.0)],
            vec![(64, 50), (128, 50), (128, 150), (64, 150), (64, 50)],
        ),
        ("pause then walk", vec![(50.0, 32.0), (50.0, 32.0), (50.0, 32.0), (50.0, 128.0)], vec![(32, 20), (32, 20), (32, 20), (32, 80)]),
        ("anti-diagonal", vec![(375.0, 32.0), (250.0, 160.0)], vec![(240, 20), (160, 100)]),
        ("out and back", vec![(100.0, 200.0), (300.0, 200.0), (200.0, 200.0)], vec![(64, 125), (192, 125), (128, 125)]),
        ("clamped past the east edge", vec![(400.0, 304.0), (600.0, 304.0)], vec![(256, 190), (319, 190)]),
    ]
}

/// Returns a description of the first mismatch, if any.
pub fn check_topdown_oracles() -> Result<usize, String> {
    let bounds = MapSpec::default_map().bounds();
    let cases = topdown_cases();
    for (name, points, corners) in &cases {
        let img = encode_topdown(&trajectory(points), &bounds).map_err(|e| e.to_string())?;
        if (img.width, img.height) != (TOPDOWN_WIDTH, TOPDOWN_HEIGHT) {
            return Err(format!("{name}: raster is {}x{}", img.width, img.height));
        }
        let got = marked(&img);
        let want = expected(corners);
        if got != want {
            let extra: Vec<_> = got.iter().filter(|(k, v)| want.get(k) != Some(v)).take(5).collect();
            let missing: Vec<_> = want.iter().filter(|(k, v)| got.get(k) != Some(v)).take(5).collect();
            return Err(format!("{name}: unexpected {extra:?}, missing {missing:?}"));
        }
    }
    Ok(cases.len())
}

fn pattern(t: usize, u: usize, v: usize) -> u8 {
    ((u * 7 + v * 13 + t * 29 + (u * v) % 11) % 256) as u8
}

/// Constructed frames against an independent floating-point oracle of the
/// half-up column mean, plus the 600-frame shape anchor.
pub fn check_barcode_exact() -> Result<(), String> {
    let (w, h, n) = (320, 200, 600);
    let frames: Vec<GrayImage> = (0..n)
        .map(|t| {
            let mut px = Vec::with_capacity(w * h);
            for v in 0..h {
                for u in 0..w {
                    px.push(pattern(t, u, v));
                }
            }
            GrayImage::from_pixels(w, h, px).unwrap()
        })
        .collect();
    let bc = encode_barcode(&frames).map_err(|e| e.to_string())?;
    if (bc.width, bc.height) != (320, 600) {
        return Err(format!("shape {}x{}, expected 320x600", bc.width, bc.height));
    }
    for t in 0..n {
        for u in 0..w {
            let mean = (0..h).map(|v| pattern(t, u, v) as f64).sum::<f64>() / h as f64;
            let want = (mean + 0.5).floor() as u8;
            if bc.get(u, t) != want {
                return Err(format!("entry (u={u}, t={t}) is {}, expected {want}", bc.get(u, t)));
            }
        }
    }
    let small = [GrayImage::new(4, 3, 10), GrayImage::new(4, 3, 20)];
    let bc = encode_barcode(&small).map_err(|e| e.to_string())?;
    if bc.row(0) != [10; 4] || bc.row(1) != [20; 4] {
        return Err("constant frames did not give constant rows".into());
    }
    let mut spike = GrayImage::new(1, 200, 0);
    spike.set(0, 57, 200);
    if encode_barcode(&[spike]).map_err(|e| e.to_string())?.get(0, 0) != 1 {
        return Err("single 200 pixel over height 200 should average to 1".into());
    }
    Ok(())
}
