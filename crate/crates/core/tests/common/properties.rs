use std::collections::{HashMap, HashSet};

use ntt_core::classifiers::majority_vote;
use ntt_core::corpus::{build_manifest, CorpusError, GeneratorShare, Split, SplitPolicy};
use ntt_core::evalkit::{aggregate_judgments, pairwise_accuracy, rank_correlation, Condition, EvalError, GroundTruth, JudgmentRecord, Side, TrialDef};
use ntt_core::navsim::Termination;
use ntt_core::policies::{Source, Trajectory, TrajectoryStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOURCES: [Source; 3] = [Source::Human, Source::SymbolicAgent, Source::HybridAgent];

fn stub(id: String, source: Source, generator_id: String, goal_index: usize) -> Trajectory {
    Trajectory {
        id,
        source,
        generator_id,
        goal_index,
        outcome: Termination::Goal,
        steps: vec![TrajectoryStep {
            t: 0,
            x: 1.0,
            y: 1.0,
            z: 0.0,
            heading: 0.0,
            action: None,
            reward: 0.0,
        }],
    }
}

fn random_share(rng: &mut ChaCha8Rng) -> GeneratorShare {
    if rng.gen_bool(0.5) {
        GeneratorShare::Count(rng.gen_range(0..4))
    } else {
        GeneratorShare::Fraction(rng.gen_range(0.0..0.5))
    }
}

/// Draws a random corpus and split policy. The manifest must either be
/// generator-disjoint between test and train+val or be rejected for lack of
/// generators. Returns whether a manifest was built.
pub fn leakage_case(seed: u64) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = SplitPolicy {
        test: random_share(&mut rng),
        val: random_share(&mut rng),
    };
    let mut trajectories = Vec::new();
    for source in SOURCES.iter().take(rng.gen_range(1..=3)) {
        for g in 0..rng.gen_range(1..12) {
            for k in 0..rng.gen_range(1..6) {
                let gen = format!("{}-g{g}", source.as_str());
                trajectories.push(stub(format!("{gen}-t{k}"), *source, gen, rng.gen_range(0..16)));
            }
        }
    }
    let manifest = match build_manifest(&trajectories, &policy, seed) {
        Ok(m) => m,
        Err(CorpusError::InsufficientGenerators(_)) => return Ok(false),
        Err(e) => return Err(format!("seed {seed}: {policy:?} failed with {e}")),
    };
    let test: HashSet<&str> = manifest.split(Split::Test).map(|e| e.generator_id.as_str()).collect();
    let rest: HashSet<&str> = manifest
        .entries
        .iter()
        .filter(|e| e.split != Split::Test)
        .map(|e| e.generator_id.as_str())
        .collect();
    if let Some(g) = test.intersection(&rest).next() {
        return Err(format!("seed {seed}: generator {g} is in test and in train/val"));
    }
    if manifest.entries.len() != trajectories.len() {
        return Err(format!("seed {seed}: manifest lost entries"));
    }
    for source in SOURCES {
        let present = trajectories.iter().any(|t| t.source == source);
        if present && !manifest.split(Split::Train).any(|e| e.source == source) {
            return Err(format!("seed {seed}: {} has no training generator", source.as_str()));
        }
    }
    manifest.check_leakage().map_err(|e| e.to_string())?;
    Ok(true)
}

/// Strictly increasing on the logit scale and fixing zero, hence 0.5 in probability.
fn warp(z: f64, a: f64, b: f64) -> f64 {
    a * z + b * z * z * z
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Majority labels must survive every threshold-preserving monotone transform.
pub fn majority_vote_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..60);
    let logits: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.gen_range(0.01..4.0);
            if rng.gen_bool(0.5) {
                -z
            } else {
                z
            }
        })
        .collect();
    let (a, b) = (rng.gen_range(0.1..5.0), rng.gen_range(0.0..2.0));
    let p: Vec<f64> = logits.iter().map(|z| sigmoid(*z)).collect();
    let q: Vec<f64> = logits.iter().map(|z| sigmoid(warp(*z, a, b))).collect();
    if majority_vote(&p) != majority_vote(&q) {
        return Err(format!("seed {seed}: majority changed under warp a={a} b={b}"));
    }
    Ok(())
}

fn random_truth(rng: &mut ChaCha8Rng, videos: usize) -> (GroundTruth, Vec<String>) {
    let ids: Vec<String> = (0..videos).map(|i| format!("v{i}")).collect();
    let mut trials = Vec::new();
    for k in 0..videos / 2 {
        let (sa, sb) = if rng.gen_bool(0.5) {
            (Source::Human, Source::HybridAgent)
        } else {
            (Source::SymbolicAgent, Source::HybridAgent)
        };
        trials.push(TrialDef {
            trial_id: format!("t{k}"),
            video_a: ids[2 * k].clone(),
            video_b: ids[2 * k + 1].clone(),
            source_a: sa,
            source_b: sb,
            goal_index: k % 16,
        });
    }
    let mut records = Vec::new();
    for s in 0..rng.gen_range(1..7) {
        for t in &trials {
            records.push(JudgmentRecord {
                session_id: format!("s{s}"),
                trial_id: t.trial_id.clone(),
                choice: if rng.gen_bool(0.5) { Side::A } else { Side::B },
                uncertainty: rng.gen_range(1..=5),
                rationale: String::new(),
                submitted_at: String::new(),
            });
        }
    }
    (aggregate_judgments("prop", &trials, &records).unwrap(), ids)
}

fn same_result(x: &Result<f64, EvalError>, y: &Result<f64, EvalError>) -> bool {
    match (x, y) {
        (Ok(a), Ok(b)) => (a - b).abs() <= 1e-12,
        (Err(a), Err(b)) => std::mem::discriminant(a) == std::mem::discriminant(b),
        _ => false,
    }
}

/// Trajectory scores are means of per-sample logits. Adding a constant to, or
/// positively rescaling, every sample logit must leave pairwise accuracy and
/// rank correlation unchanged.
pub fn mean_logit_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos = 2 * rng.gen_range(1..12);
    let (truth, ids) = random_truth(&mut rng, videos);
    let samples: Vec<Vec<f64>> = ids
        .iter()
        .map(|_| (0..rng.gen_range(1..20)).map(|_| rng.gen_range(-6.0..6.0)).collect())
        .collect();
    let (scale, shift) = (rng.gen_range(0.2..4.0), rng.gen_range(-10.0..10.0));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let base: HashMap<String, f64> = ids.iter().zip(&samples).map(|(id, s)| (id.clone(), mean(s))).collect();
    let moved: HashMap<String, f64> = ids
        .iter()
        .zip(&samples)
        .map(|(id, s)| (id.clone(), mean(&s.iter().map(|z| scale * z + shift).collect::<Vec<_>>())))
        .collect();
    for condition in [Condition::HumanAgent, Condition::HybridSymbolic] {
        let pa = pairwise_accuracy(&base, &truth, condition).map_err(|e| e.to_string())?;
        let pb = pairwise_accuracy(&moved, &truth, condition).map_err(|e| e.to_string())?;
        if (pa.correct, pa.counted) != (pb.correct, pb.counted) {
            return Err(format!("seed {seed}: pairwise accuracy changed under {scale} z + {shift}"));
        }
        let (ra, rb) = (rank_correlation(&base, &truth, condition), rank_correlation(&moved, &truth, condition));
        if !same_result(&ra, &rb) {
            return Err(format!("seed {seed}: rank correlation {ra:?} became {rb:?}"));
        }
    }
    Ok(())
}
