use std::sync::Arc;

use ntt_core::navsim::{Action, Episode, MapSpec, SpawnMode, Termination, DEATH_PENALTY, GOAL_BONUS, MAX_STEPS, STEP_PENALTY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs a random episode and checks the return against the telescoped shaping sum
/// and the step limit.
pub fn telescoping_holds(map: &Arc<MapSpec>, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ep = Episode::reset(map.clone(), SpawnMode::Train, &mut rng).map_err(|e| e.to_string())?;
    let c = ep.shaping_coefficient();
    let d0 = ep.initial_distance();
    let mut total = 0.0;
    let mut last = Termination::Running;
    while !ep.is_done() {
        let out = ep.step(Action::from_index(rng.gen_range(0..Action::COUNT)).unwrap()).map_err(|e| e.to_string())?;
        total += out.reward;
        last = out.reason;
    }
    if ep.steps_taken() > MAX_STEPS {
        return Err(format!("seed {seed}: episode ran {} steps", ep.steps_taken()));
    }
    let d_t = ep.pose().planar_distance(ep.goal());
    let bonus = match last {
        Termination::Goal => GOAL_BONUS,
        Termination::Death => -DEATH_PENALTY,
        _ => 0.0,
    };
    let expected = c * (d0 - d_t) - STEP_PENALTY * ep.steps_taken() as f64 + bonus;
    if (total - expected).abs() > 1e-9 {
        return Err(format!("seed {seed}: return {total} vs telescoped {expected}"));
    }
    Ok(())
}

/// Island share of `n` training resets, plus per-goal frequencies.
pub fn spawn_statistics(map: &Arc<MapSpec>, n: usize, seed: u64) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut island = 0;
    let mut goals = vec![0usize; map.goals.len()];
    for _ in 0..n {
        let ep = Episode::reset(map.clone(), SpawnMode::Train, &mut rng).unwrap();
        if map.spawns[ep.spawn_index().unwrap()].island {
            island += 1;
        }
        goals[ep.goal_index()] += 1;
    }
    (island as f64 / n as f64, goals.iter().map(|c| *c as f64 / n as f64).collect())
}
