//! Dataset assembly: post-processing rules, on-disk layout and
//! generator-disjoint splits.
//!
//! A corpus directory holds `manifest.json`, one JSON Lines file per
//! trajectory under `trajectories/`, and optionally a PNG sequence per
//! trajectory under `frames/<id>/` with an `index.json`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::navsim::{MapSpec, Region};
use crate::policies::{PolicyError, Source, Trajectory};
use crate::raster::{GrayImage, RasterError};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_IDLE_WINDOW: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("trajectory {id} rejected: {reason}")]
    Rejected { id: String, reason: String },
    #[error("generator {0} appears in both the test split and train/val")]
    Leakage(String),
    #[error("not enough generators: {0}")]
    InsufficientGenerators(String),
    #[error("invalid split policy: {0}")]
    Policy(String),
    #[error("duplicate trajectory id {0}")]
    Duplicate(String),
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("corpus entry missing: {0}")]
    Missing(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trajectory(#[from] PolicyError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Drops every step before the first one on the main map and re-indexes from zero.
pub fn trim_start(trajectory: &Trajectory, map: &MapSpec) -> Result<Trajectory, CorpusError> {
    let first = trajectory
        .steps
        .iter()
        .position(|s| map.region_at(s.x, s.y) == Some(Region::Main))
        .ok_or_else(|| CorpusError::Rejected {
            id: trajectory.id.clone(),
            reason: "never reaches the main map".into(),
        })?;
    let mut out = trajectory.clone();
    out.steps.drain(..first);
    out.reindex();
    Ok(out)
}

/// Removes up to `window` trailing steps that did not move; at least one step is kept.
pub fn trim_trailing_idle(trajectory: &Trajectory, window: usize) -> Trajectory {
    let mut out = trajectory.clone();
    let mut removed = 0;
    while removed < window && out.steps.len() > 1 {
        let n = out.steps.len();
        let (a, b) = (out.steps[n - 2].position(), out.steps[n - 1].position());
        if a != b {
            break;
        }
        out.steps.pop();
        removed += 1;
    }
    if removed > 0 {
        let last = out.steps.last_mut().expect("at least one step");
        last.action = None;
        last.reward = 0.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// How many of a source's generators a split takes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorShare {
    Count(usize),
    /// Rounded, and at least one generator whenever the fraction is positive.
    Fraction(f64),
}

impl GeneratorShare {
    fn resolve(self, available: usize) -> Result<usize, CorpusError> {
        match self {
            GeneratorShare::Count(n) => Ok(n),
            GeneratorShare::Fraction(f) if (0.0..=1.0).contains(&f) => {
                let n = (f * available as f64).round() as usize;
                Ok(if f > 0.0 { n.max(1) } else { n })
            }
            GeneratorShare::Fraction(f) => Err(CorpusError::Policy(format!("fraction {f} outside [0, 1]"))),
        }
    }
}

/// Split policy applied to each source separately. Test generators are
/// drawn first, then validation generators from the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub test: GeneratorShare,
    pub val: GeneratorShare,
}

impl Default for SplitPolicy {
    /// Four players train, three test.
    fn default() -> Self {
        Self {
            test: GeneratorShare::Count(3),
            val: GeneratorShare::Count(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trajectory_id: String,
    pub source: Source,
    pub generator_id: String,
    pub goal_index: usize,
    pub split: Split,
    /// Relative to the corpus root.
    pub trajectory_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<String>,
}

/// Test trajectories sharing a goal and source, for goal-matched pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalGroup {
    pub goal_index: usize,
    pub source: Source,
    pub trajectory_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub policy: SplitPolicy,
    pub entries: Vec<ManifestEntry>,
    pub test_goal_groups: Vec<GoalGroup>,
}

pub fn trajectory_path(id: &str) -> String {
    format!("trajectories/{id}.jsonl")
}

pub fn frames_dir(id: &str) -> String {
    format!("frames/{id}")
}

/// Assigns every trajectory to a split so that test generators are disjoint from the rest.
pub fn build_manifest(trajectories: &[Trajectory], policy: &SplitPolicy, seed: u64) -> Result<DatasetManifest, CorpusError> {
    let mut seen = HashSet::new();
    for t in trajectories {
        if !seen.insert(t.id.as_str()) {
            return Err(CorpusError::Duplicate(t.id.clone()));
        }
    }
    // A generator id belongs to exactly one source.
    let mut owner: HashMap<&str, Source> = HashMap::new();
    for t in trajectories {
        if let Some(prev) = owner.insert(&t.generator_id, t.source) {
            if prev != t.source {
                return Err(CorpusError::Policy(format!("generator {} produces more than one source", t.generator_id)));
            }
        }
    }
    let mut by_source: BTreeMap<Source, BTreeSet<&str>> = BTreeMap::new();
    for t in trajectories {
        by_source.entry(t.source).or_default().insert(&t.generator_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split_of: HashMap<&str, Split> = HashMap::new();
    for (source, gens) in &by_source {
        let mut gens: Vec<&str> = gens.iter().copied().collect();
        let n_test = policy.test.resolve(gens.len())?;
        let n_val = policy.val.resolve(gens.len().saturating_sub(n_test))?;
        if n_test + n_val >= gens.len() && (n_test > 0 || n_val > 0) {
            return Err(CorpusError::InsufficientGenerators(format!(
                "{} has {} generator(s); the policy needs {n_test} test and {n_val} validation plus at least one for training",
                source.as_str(),
                gens.len()
            )));
        }
        gens.shuffle(&mut rng);
        for (i, g) in gens.into_iter().enumerate() {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            split_of.insert(g, split);
        }
    }
    let entries: Vec<ManifestEntry> = trajectories
        .iter()
        .map(|t| ManifestEntry {
            trajectory_id: t.id.clone(),
            source: t.source,
            generator_id: t.generator_id.clone(),
            goal_index: t.goal_index,
            split: split_of[t.generator_id.as_str()],
            trajectory_path: trajectory_path(&t.id),
            frames_dir: None,
        })
        .collect();
    let mut groups: BTreeMap<(usize, Source), Vec<String>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.split == Split::Test) {
        groups.entry((e.goal_index, e.source)).or_default().push(e.trajectory_id.clone());
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed,
        policy: policy.clone(),
        entries,
        test_goal_groups: groups
            .into_iter()
            .map(|((goal_index, source), trajectory_ids)| GoalGroup {
                goal_index,
                source,
                trajectory_ids,
            })
            .collect(),
    };
    manifest.check_leakage()?;
    Ok(manifest)
}

impl DatasetManifest {
    /// Fails if any generator has trajectories both in test and in train or val.
    pub fn check_leakage(&self) -> Result<(), CorpusError> {
        let test: HashSet<&str> = self
            .entries
            .iter()
            .filter(|e| e.split == Split::Test)
            .map(|e| e.generator_id.as_str())
            .collect();
        match self.entries.iter().find(|e| e.split != Split::Test && test.contains(e.generator_id.as_str())) {
            Some(e) => Err(CorpusError::Leakage(e.generator_id.clone())),
            None => Ok(()),
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.trajectory_id == id)
    }

    /// Every goal-matched (a, b) pair of test trajectories with the given sources.
    pub fn matched_pairs(&self, a: Source, b: Source) -> Vec<(String, String)> {
        let group = |goal: usize, s: Source| {
            self.test_goal_groups
                .iter()
                .find(|g| g.goal_index == goal && g.source == s)
                .map(|g| g.trajectory_ids.as_slice())
                .unwrap_or(&[])
        };
        let goals: BTreeSet<usize> = self.test_goal_groups.iter().map(|g| g.goal_index).collect();
        let mut out = Vec::new();
        for goal in goals {
            for x in group(goal, a) {
                for y in group(goal, b) {
                    if x != y {
                        out.push((x.clone(), y.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let m: Self = serde_json::from_slice(&fs::read(path)?)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(CorpusError::Version(m.format_version));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub files: Vec<String>,
}

/// Writes frames as `00000.png`, `00001.png`, ... plus `index.json`.
pub fn write_frames(dir: &Path, frames: &[GrayImage]) -> Result<FrameIndex, CorpusError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        let name = format!("{t:05}.png");
        fs::write(dir.join(&name), f.to_png()?)?;
        files.push(name);
    }
    let index = FrameIndex {
        count: frames.len(),
        width: frames.first().map_or(0, |f| f.width),
        height: frames.first().map_or(0, |f| f.height),
        files,
    };
    fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    Ok(index)
}

pub fn read_frame_index(dir: &Path) -> Result<FrameIndex, CorpusError> {
    Ok(serde_json::from_slice(&fs::read(dir.join("index.json"))?)?)
}

pub fn read_frame(dir: &Path, t: usize) -> Result<GrayImage, CorpusError> {
    let index = read_frame_index(dir)?;
    let name = index.files.get(t).ok_or_else(|| CorpusError::Missing(format!("frame {t} in {}", dir.display())))?;
    Ok(GrayImage::from_png(&fs::read(dir.join(name))?)?)
}

pub fn read_frames(dir: &Path) -> Result<Vec<GrayImage>, CorpusError> {
    let index = read_frame_index(dir)?;
    index
        .files
        .iter()
        .map(|name| Ok(GrayImage::from_png(&fs::read(dir.join(name))?)?))
        .collect()
}

/// Writes the manifest and every trajectory it references. `frames` maps
/// trajectory ids to rendered frames; listed trajectories get a frames directory.
pub fn write_corpus(
    root: &Path,
    manifest: &DatasetManifest,
    trajectories: &[Trajectory],
    frames: &HashMap<String, Vec<GrayImage>>,
) -> Result<DatasetManifest, CorpusError> {
    fs::create_dir_all(root.join("trajectories"))?;
    let by_id: HashMap<&str, &Trajectory> = trajectories.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut manifest = manifest.clone();
    for e in &mut manifest.entries {
        let t = by_id
            .get(e.trajectory_id.as_str())
            .ok_or_else(|| CorpusError::Missing(e.trajectory_id.clone()))?;
        t.save(&root.join(&e.trajectory_path))?;
        if let Some(f) = frames.get(&e.trajectory_id) {
            let dir = frames_dir(&e.trajectory_id);
            write_frames(&root.join(&dir), f)?;
            e.frames_dir = Some(dir);
        }
    }
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Reads a corpus back; trajectories come in manifest order.
pub fn read_corpus(root: &Path) -> Result<(DatasetManifest, Vec<Trajectory>), CorpusError> {
    let manifest = DatasetManifest::load(&root.join(MANIFEST_FILE))?;
    let trajectories = manifest
        .entries
        .iter()
        .map(|e| Ok(Trajectory::load(&root.join(&e.trajectory_path))?))
        .collect::<Result<Vec<_>, CorpusError>>()?;
    Ok((manifest, trajectories))
}
