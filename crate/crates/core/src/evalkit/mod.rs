//! Metrics against true identities and human judgments: accuracies, rank
//! correlation, Mann-Whitney U and judgment aggregation.

mod report;
mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::classifiers::TrajectoryVerdict;
use crate::policies::Source;

pub use report::{render_table, summarize, MeanStd, MetricsReport, ModelMetrics, TABLE_COLUMNS};
pub use stats::{average_ranks, mann_whitney_u, spearman_rank, MannWhitney, PValueMethod, EXACT_LIMIT};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("no inputs to evaluate")]
    Empty,
    #[error("no verdict for video {0}")]
    MissingVerdict(String),
    #[error("no known source for trajectory {0}")]
    MissingSource(String),
    #[error("judgment references unknown trial {0}")]
    UnknownTrial(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority {
    A,
    B,
    Tie,
    NoJudgments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    HumanAgent,
    HybridSymbolic,
}

impl Condition {
    /// Any pair containing a human is a human-agent trial.
    pub fn of(a: Source, b: Source) -> Self {
        if a.is_human() || b.is_human() {
            Condition::HumanAgent
        } else {
            Condition::HybridSymbolic
        }
    }
}

/// A trial as defined by the study: two goal-matched videos and their sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialDef {
    pub trial_id: String,
    pub video_a: String,
    pub video_b: String,
    pub source_a: Source,
    pub source_b: Source,
    pub goal_index: usize,
}

impl TrialDef {
    pub fn condition(&self) -> Condition {
        Condition::of(self.source_a, self.source_b)
    }

    /// The side holding the human video, if exactly one side is human.
    pub fn human_side(&self) -> Option<Side> {
        match (self.source_a.is_human(), self.source_b.is_human()) {
            (true, false) => Some(Side::A),
            (false, true) => Some(Side::B),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub session_id: String,
    pub trial_id: String,
    pub choice: Side,
    /// 1 (extremely certain) to 5 (extremely uncertain).
    pub uncertainty: u8,
    pub rationale: String,
    pub submitted_at: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTruth {
    #[serde(flatten)]
    pub trial: TrialDef,
    pub judge_count: usize,
    /// Fraction of judges choosing A; `None` without judgments.
    pub proportion_a: Option<f64>,
    pub majority: Majority,
    pub mean_uncertainty: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAccuracy {
    pub session_id: String,
    /// Human-agent trials where the human video was chosen.
    pub correct: usize,
    pub answered: usize,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub study_id: String,
    pub trials: Vec<TrialTruth>,
    pub participants: Vec<ParticipantAccuracy>,
}

impl GroundTruth {
    /// Share of times each video was judged the more human-like of its pair.
    pub fn video_proportions(&self, condition: Option<Condition>) -> BTreeMap<String, f64> {
        let mut tally: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for t in &self.trials {
            if condition.is_some_and(|c| t.trial.condition() != c) {
                continue;
            }
            let Some(p) = t.proportion_a else { continue };
            let n = t.judge_count;
            let a = tally.entry(t.trial.video_a.clone()).or_default();
            a.0 += p * n as f64;
            a.1 += n;
            let b = tally.entry(t.trial.video_b.clone()).or_default();
            b.0 += (1.0 - p) * n as f64;
            b.1 += n;
        }
        tally.into_iter().map(|(k, (chosen, shown))| (k, chosen / shown as f64)).collect()
    }

    pub fn participant_accuracies(&self) -> Vec<f64> {
        self.participants.iter().filter_map(|p| p.accuracy).collect()
    }
}

fn majority_of(count_a: usize, total: usize) -> Majority {
    if total == 0 {
        Majority::NoJudgments
    } else if 2 * count_a > total {
        Majority::A
    } else if 2 * count_a < total {
        Majority::B
    } else {
        Majority::Tie
    }
}

/// Per-trial proportions, majorities and mean uncertainty, plus per-participant accuracy.
pub fn aggregate_judgments(study_id: &str, trials: &[TrialDef], records: &[JudgmentRecord]) -> Result<GroundTruth, EvalError> {
    let index: HashMap<&str, usize> = trials.iter().enumerate().map(|(i, t)| (t.trial_id.as_str(), i)).collect();
    let mut counts = vec![(0usize, 0usize, 0u64); trials.len()];
    let mut per_session: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let &i = index.get(r.trial_id.as_str()).ok_or_else(|| EvalError::UnknownTrial(r.trial_id.clone()))?;
        let c = &mut counts[i];
        c.0 += (r.choice == Side::A) as usize;
        c.1 += 1;
        c.2 += r.uncertainty as u64;
        let s = per_session.entry(r.session_id.clone()).or_default();
        if let Some(h) = trials[i].human_side() {
            s.0 += (r.choice == h) as usize;
            s.1 += 1;
        }
    }
    let trials = trials
        .iter()
        .zip(counts)
        .map(|(t, (a, n, u))| TrialTruth {
            trial: t.clone(),
            judge_count: n,
            proportion_a: (n > 0).then(|| a as f64 / n as f64),
            majority: majority_of(a, n),
            mean_uncertainty: (n > 0).then(|| u as f64 / n as f64),
        })
        .collect();
    let participants = per_session
        .into_iter()
        .map(|(session_id, (correct, answered))| ParticipantAccuracy {
            session_id,
            correct,
            answered,
            accuracy: (answered > 0).then(|| correct as f64 / answered as f64),
        })
        .collect();
    Ok(GroundTruth {
        study_id: study_id.to_string(),
        trials,
        participants,
    })
}

/// Fraction of trajectories whose majority label matches the true identity.
pub fn identity_accuracy(verdicts: &[TrajectoryVerdict], sources: &HashMap<String, Source>) -> Result<f64, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut correct = 0usize;
    for v in verdicts {
        let s = sources.get(&v.trajectory_id).ok_or_else(|| EvalError::MissingSource(v.trajectory_id.clone()))?;
        correct += (v.majority_human == s.is_human()) as usize;
    }
    Ok(correct as f64 / verdicts.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOutcome {
    /// `None` when every trial of the condition was a tie.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub counted: usize,
    pub ties_excluded: usize,
}

/// A trial is correct when the higher trajectory logit sits on the judges'
/// majority side. Equal logits earn no credit; tied majorities are skipped.
pub fn pairwise_accuracy(logits: &HashMap<String, f64>, truth: &GroundTruth, condition: Condition) -> Result<PairwiseOutcome, EvalError> {
    let mut out = PairwiseOutcome {
        accuracy: None,
        correct: 0,
        counted: 0,
        ties_excluded: 0,
    };
    for t in truth.trials.iter().filter(|t| t.trial.condition() == condition) {
        let la = *logits.get(&t.trial.video_a).ok_or_else(|| EvalError::MissingVerdict(t.trial.video_a.clone()))?;
        let lb = *logits.get(&t.trial.video_b).ok_or_else(|| EvalError::MissingVerdict(t.trial.video_b.clone()))?;
        let ok = match t.majority {
            Majority::A => la > lb,
            Majority::B => lb > la,
            Majority::Tie | Majority::NoJudgments => {
                out.ties_excluded += 1;
                continue;
            }
        };
        out.counted += 1;
        out.correct += ok as usize;
    }
    out.accuracy = (out.counted > 0).then(|| out.correct as f64 / out.counted as f64);
    Ok(out)
}

/// Spearman correlation between model logits and judge proportions over the
/// videos of one condition.
pub fn rank_correlation(logits: &HashMap<String, f64>, truth: &GroundTruth, condition: Condition) -> Result<f64, EvalError> {
    let props = truth.video_proportions(Some(condition));
    let mut x = Vec::with_capacity(props.len());
    let mut y = Vec::with_capacity(props.len());
    for (video, p) in &props {
        x.push(*logits.get(video).ok_or_else(|| EvalError::MissingVerdict(video.clone()))?);
        y.push(*p);
    }
    spearman_rank(&x, &y)
}

/// One report row from several independently trained repeats of a model.
/// Judgment-based cells are left empty without `truth`; a correlation that is
/// undefined for a repeat (constant inputs) is skipped for that repeat.
pub fn model_metrics(
    model: crate::classifiers::ModelKind,
    repeats: &[Vec<TrajectoryVerdict>],
    sources: &HashMap<String, Source>,
    truth: Option<&GroundTruth>,
) -> Result<ModelMetrics, EvalError> {
    if repeats.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cols: [Vec<Option<f64>>; 5] = Default::default();
    for verdicts in repeats {
        cols[0].push(Some(identity_accuracy(verdicts, sources)?));
        let Some(truth) = truth else { continue };
        let logits: HashMap<String, f64> = verdicts.iter().map(|v| (v.trajectory_id.clone(), v.logit)).collect();
        for (i, condition) in [(1, Condition::HumanAgent), (3, Condition::HybridSymbolic)] {
            if !truth.trials.iter().any(|t| t.trial.condition() == condition) {
                continue;
            }
            cols[i].push(pairwise_accuracy(&logits, truth, condition)?.accuracy);
            cols[i + 1].push(match rank_correlation(&logits, truth, condition) {
                Ok(r) => Some(r),
                Err(EvalError::Undefined(_)) | Err(EvalError::Empty) => None,
                Err(e) => return Err(e),
            });
        }
    }
    Ok(ModelMetrics {
        model,
        identity_accuracy: summarize(&cols[0]),
        human_agent_accuracy: summarize(&cols[1]),
        human_agent_rank: summarize(&cols[2]),
        hybrid_symbolic_accuracy: summarize(&cols[3]),
        hybrid_symbolic_rank: summarize(&cols[4]),
    })
}
