use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::navsim::{Action, AgentPose, Episode, MapSpec, StepOutcome, Termination};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    SymbolicAgent,
    HybridAgent,
}

impl Source {
    pub fn is_human(self) -> bool {
        self == Source::Human
    }

    /// Proxy label: 1 for human, 0 for any agent.
    pub fn proxy_label(self) -> f64 {
        if self.is_human() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "human",
            Source::SymbolicAgent => "symbolic_agent",
            Source::HybridAgent => "hybrid_agent",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Source::Human),
            "symbolic_agent" | "symbolic" => Ok(Source::SymbolicAgent),
            "hybrid_agent" | "hybrid" => Ok(Source::HybridAgent),
            other => Err(PolicyError::Format(format!("unknown source `{other}`"))),
        }
    }
}

/// Pose at time `t`, the action taken from it and the reward that action earned.
/// The final step of a trajectory is the terminal pose with no action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
    pub action: Option<Action>,
    pub reward: f64,
}

impl TrajectoryStep {
    pub fn pose(&self) -> AgentPose {
        AgentPose {
            x: self.x,
            y: self.y,
            z: self.z,
            heading: self.heading,
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_pose(t: usize, pose: AgentPose) -> Self {
        Self {
            t,
            x: pose.x,
            y: pose.y,
            z: pose.z,
            heading: pose.heading,
            action: None,
            reward: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub source: Source,
    /// Player or checkpoint identity; splits never share a generator.
    pub generator_id: String,
    pub goal_index: usize,
    pub outcome: Termination,
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    record: String,
    id: String,
    source: Source,
    generator_id: String,
    goal_index: usize,
    outcome: Termination,
    steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.steps.iter().map(TrajectoryStep::position).collect()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().filter_map(|s| s.action)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.steps.is_empty() {
            return Err(PolicyError::Format(format!("trajectory {} has no steps", self.id)));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.t != i {
                return Err(PolicyError::Format(format!(
                    "trajectory {}: step {i} has t = {} (t must count up from 0)",
                    self.id, s.t
                )));
            }
        }
        if self.outcome == Termination::Running {
            return Err(PolicyError::Format(format!("trajectory {} has no terminal outcome", self.id)));
        }
        Ok(())
    }

    /// Re-indexes `t` from zero after steps were removed.
    pub fn reindex(&mut self) {
        for (i, s) in self.steps.iter_mut().enumerate() {
            s.t = i;
        }
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), PolicyError> {
        let header = HeaderRecord {
            record: "header".into(),
            id: self.id.clone(),
            source: self.source,
            generator_id: self.generator_id.clone(),
            goal_index: self.goal_index,
            outcome: self.outcome,
            steps: self.steps.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for s in &self.steps {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, PolicyError> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| PolicyError::Format("empty trajectory file".into()))??;
        let header: HeaderRecord = serde_json::from_str(&first)?;
        if header.record != "header" {
            return Err(PolicyError::Format("first record must be the header".into()));
        }
        let mut steps = Vec::with_capacity(header.steps);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str::<TrajectoryStep>(&line)?);
        }
        if steps.len() != header.steps {
            return Err(PolicyError::Format(format!(
                "header announces {} steps, file holds {}",
                header.steps,
                steps.len()
            )));
        }
        let t = Trajectory {
            id: header.id,
            source: header.source,
            generator_id: header.generator_id,
            goal_index: header.goal_index,
            outcome: header.outcome,
            steps,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    /// Replays the recorded actions from the first pose and returns the
    /// recomputed outcome, failing if any pose diverges from the record.
    pub fn replay(&self, map: Arc<MapSpec>) -> Result<Termination, PolicyError> {
        self.validate()?;
        let mut ep = Episode::from_pose(map, self.steps[0].pose(), self.goal_index);
        let mut outcome = Termination::Running;
        for pair in self.steps.windows(2) {
            let action = pair[0]
                .action
                .ok_or_else(|| PolicyError::Format(format!("step {} lacks an action", pair[0].t)))?;
            let out = ep.step(action).map_err(|e| PolicyError::Format(e.to_string()))?;
            let want = pair[1].pose();
            let got = out.next_pose;
            let err = (got.x - want.x).abs() + (got.y - want.y).abs() + (got.z - want.z).abs() + (got.heading - want.heading).abs();
            if err > 1e-9 {
                return Err(PolicyError::Format(format!("replay diverges at step {}", pair[1].t)));
            }
            outcome = out.reason;
        }
        Ok(outcome)
    }
}

/// Accumulates steps while an [`Episode`] runs.
#[derive(Clone, Debug)]
pub struct Recorder {
    steps: Vec<TrajectoryStep>,
}

impl Recorder {
    pub fn new(initial: AgentPose) -> Self {
        Self {
            steps: vec![TrajectoryStep::from_pose(0, initial)],
        }
    }

    pub fn record(&mut self, action: Action, outcome: &StepOutcome) {
        let last = self.steps.last_mut().expect("recorder always holds the current pose");
        last.action = Some(action);
        last.reward = outcome.reward;
        let t = self.steps.len();
        self.steps.push(TrajectoryStep::from_pose(t, outcome.next_pose));
    }

    /// Number of actions recorded so far.
    pub fn actions_taken(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn finish(self, id: String, source: Source, generator_id: String, goal_index: usize, outcome: Termination) -> Trajectory {
        Trajectory {
            id,
            source,
            generator_id,
            goal_index,
            outcome,
            steps: self.steps,
        }
    }
}
