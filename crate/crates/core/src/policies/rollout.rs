use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::nets::{ActorCritic, PolicyKind};
use super::trajectory::{Recorder, Source, Trajectory};
use super::PolicyError;
use crate::navsim::{sample_spawn, Episode, MapSpec, SpawnMode, Termination, MAX_STEPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub n_episodes: usize,
    pub seed: u64,
    /// Cycle goals `0, 1, ..` instead of drawing them at random.
    pub goal_sweep: bool,
}

fn source_for(kind: PolicyKind) -> Source {
    match kind {
        PolicyKind::Symbolic => Source::SymbolicAgent,
        PolicyKind::Hybrid => Source::HybridAgent,
    }
}

fn run_episode(model: &ActorCritic, mut ep: Episode, rng: &mut ChaCha8Rng) -> Result<(Recorder, Termination), PolicyError> {
    let map = ep.map().clone();
    let mut rec = Recorder::new(ep.pose());
    let mut outcome = Termination::Running;
    while !ep.is_done() {
        let input = model.input(&ep.observe(false), &map);
        let (action, _) = model.sample(&input, rng)?;
        let out = ep.step(action)?;
        rec.record(action, &out);
        outcome = out.reason;
    }
    Ok((rec, outcome))
}

fn eval_episode(map: &Arc<MapSpec>, goal: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Episode, PolicyError> {
    let goal = match goal {
        Some(g) => g % map.goals.len(),
        None => rng.gen_range(0..map.goals.len()),
    };
    let spawn = sample_spawn(map, SpawnMode::Evaluation, rng);
    let heading = rng.gen_range(0.0..TAU);
    Ok(Episode::start(map.clone(), spawn, goal, heading)?)
}

/// Samples actions from the checkpoint's policy, starting every episode on the spawn island.
pub fn rollout(checkpoint: &Checkpoint, map: Arc<MapSpec>, options: &RolloutOptions) -> Result<Vec<Trajectory>, PolicyError> {
    map.validate_layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let source = source_for(checkpoint.model.spec.kind);
    (0..options.n_episodes)
        .map(|i| {
            let ep = eval_episode(&map, options.goal_sweep.then_some(i), &mut rng)?;
            let goal = ep.goal_index();
            let (rec, outcome) = run_episode(&checkpoint.model, ep, &mut rng)?;
            Ok(rec.finish(
                format!("{}-r{}-{i}", checkpoint.id, options.seed),
                source,
                checkpoint.id.clone(),
                goal,
                outcome,
            ))
        })
        .collect()
}

/// Success rate and mean time-to-goal (failures count as the step limit)
/// over `episodes` sampled-policy runs from island spawns.
pub fn evaluate_success(model: &ActorCritic, map: Arc<MapSpec>, episodes: usize, seed: u64) -> Result<(f64, f64), PolicyError> {
    if episodes == 0 {
        return Ok((0.0, MAX_STEPS as f64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0usize;
    let mut ttg = 0usize;
    for _ in 0..episodes {
        let ep = eval_episode(&map, None, &mut rng)?;
        let (rec, outcome) = run_episode(model, ep, &mut rng)?;
        if outcome == Termination::Goal {
            wins += 1;
            ttg += rec.actions_taken();
        } else {
            ttg += MAX_STEPS;
        }
    }
    Ok((wins as f64 / episodes as f64, ttg as f64 / episodes as f64))
}
