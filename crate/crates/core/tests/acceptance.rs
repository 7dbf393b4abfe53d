//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ntt_core::classifiers::{
    encode_for, predict_trajectory, train_classifier, EncodedTrajectory, Hyperparams, ModelKind, Preprocess, TrainRun,
};
use ntt_core::corpus::{trim_start, trim_trailing_idle, DEFAULT_IDLE_WINDOW};
use ntt_core::encoders::render_frames;
use ntt_core::evalkit::{model_metrics, render_table, MetricsReport, ModelMetrics};
use ntt_core::navsim::MapSpec;
use ntt_core::policies::{
    ppo_train, rollout, scripted_human_policy, smoothed_time_to_goal, Checkpoint, HumanTraits, PolicyKind, PolicyNetSpec, PpoConfig,
    RolloutOptions, Source, Trajectory, TrainReport,
};

use common::encoder_oracles::{check_barcode_exact, check_topdown_oracles};
use common::env_checks::{spawn_statistics, telescoping_holds};
use common::gradients::{conv_case, dense_case, gru_case, pool_case};
use common::metric_oracles::{check_mann_whitney_exact, check_spearman_permutations, check_spearman_ties, check_u_sum_large};
use common::properties::{leakage_case, majority_vote_case, mean_logit_case};
use common::study::{run_lifecycle, spawn_service, synthetic_sources, write_study_corpus};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(detail.into())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= limit, format!("{what} took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        for (name, case) in [("dense", dense_case as fn(u64) -> f64), ("conv", conv_case), ("pool", pool_case), ("gru", gru_case)] {
            let err = case(seed);
            check(err < 1e-4, format!("{name} seed {seed}: max relative error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    within(start, Duration::from_secs(60), "gradient suite")?;
    Ok(format!("Dense/Conv2D/GRU/pooling over 20 seeds, worst relative error {worst:.1e}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn encoder_exactness() -> Outcome {
    check_barcode_exact()?;
    let n = check_topdown_oracles()?;
    Ok(format!("bar-code bit-exact, 600 frames -> 320x600, top-down matches {n} hand oracles"))
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let worst = check_spearman_permutations(3)?;
    check_spearman_ties()?;
    let cases = check_mann_whitney_exact(11)?;
    check_u_sum_large(12)?;
    within(start, Duration::from_secs(60), "metric oracles")?;
    Ok(format!(
        "Spearman within {worst:.0e} of the sum-of-d^2 formula on 100 permutations, ties ok; {cases} exact Mann-Whitney cases match enumeration; U1+U2 = n1 n2"
    ))
}

fn environment_invariants() -> Outcome {
    let map = Arc::new(MapSpec::default_map());
    for seed in 0..1000 {
        telescoping_holds(&map, seed)?;
    }
    let (frac, _) = spawn_statistics(&map, 10_000, 7);
    check((frac - 0.34).abs() <= 0.02, format!("island fraction {frac:.4}"))?;
    Ok(format!("telescoping on 1000 episodes, all within the step limit; island fraction {frac:.4} over 10000 resets"))
}

/// Time-to-goal trend over nine equal blocks covering 10% to 100% of training.
struct Trend {
    /// Block means of the window-50 smoothed curve.
    smoothed: Vec<f64>,
    /// Standard errors of the raw per-episode values in each block.
    stderr: Vec<f64>,
}

impl Trend {
    fn of(report: &TrainReport) -> Self {
        let curve = smoothed_time_to_goal(&report.episodes, 50);
        let raw: Vec<f64> = report.episodes.iter().map(|e| e.time_to_goal as f64).collect();
        let from = curve.len() / 10;
        let n = curve.len() - from;
        let (mut smoothed, mut stderr) = (Vec::new(), Vec::new());
        for b in 0..9 {
            let (lo, hi) = (from + b * n / 9, from + (b + 1) * n / 9);
            let k = (hi - lo).max(2) as f64;
            smoothed.push(curve[lo..hi].iter().sum::<f64>() / k);
            let m = raw[lo..hi].iter().sum::<f64>() / k;
            let var = raw[lo..hi].iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
            stderr.push((var / k).sqrt());
        }
        Self { smoothed, stderr }
    }

    fn strictly_non_increasing(&self) -> bool {
        self.smoothed.windows(2).all(|w| w[1] <= w[0])
    }

    /// No block rises above the lowest earlier block by more than two standard
    /// errors of the difference, and the last block is below the first.
    fn non_increasing_within_noise(&self) -> bool {
        let mut best = 0;
        for j in 1..self.smoothed.len() {
            let tol = 2.0 * (self.stderr[j].powi(2) + self.stderr[best].powi(2)).sqrt();
            if self.smoothed[j] > self.smoothed[best] + tol {
                return false;
            }
            if self.smoothed[j] < self.smoothed[best] {
                best = j;
            }
        }
        self.smoothed.last() < self.smoothed.first()
    }
}

struct Agents {
    symbolic: Vec<Checkpoint>,
    hybrid: Vec<Checkpoint>,
}

fn train_agent(map: &Arc<MapSpec>, kind: PolicyKind, seed: u64) -> Result<(TrainReport, Duration), String> {
    let cfg = PpoConfig {
        total_steps: 2_000_000,
        eval_interval: 25_000,
        eval_episodes: 100,
        target_success: Some(0.9),
        seed,
        ..PpoConfig::default()
    };
    let start = Instant::now();
    let report = ppo_train(map.clone(), PolicyNetSpec::for_kind(kind), &cfg, |_| Ok(())).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn agent_training(map: &Arc<MapSpec>, agents: &mut Option<Agents>) -> Outcome {
    let mut trained = Agents {
        symbolic: Vec::new(),
        hybrid: Vec::new(),
    };
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    let mut strict = 0;
    for (kind, name) in [(PolicyKind::Symbolic, "symbolic"), (PolicyKind::Hybrid, "hybrid")] {
        for seed in [1u64, 2] {
            let (report, took) = train_agent(map, kind, seed)?;
            let best = report.evaluations.iter().map(|e| e.success).fold(0.0, f64::max);
            let trend = Trend::of(&report);
            strict += trend.strictly_non_increasing() as usize;
            summary.push(format!("{name} seed {seed}: {best:.2} at {} steps in {:.0}s", report.env_steps, took.as_secs_f64()));
            if best < 0.9 || report.env_steps > 2_000_000 || took > Duration::from_secs(1800) {
                failures.push(format!("{name} seed {seed} reached {best:.2} after {} steps", report.env_steps));
            }
            if !trend.non_increasing_within_noise() {
                let shown: Vec<String> = trend.smoothed.iter().zip(&trend.stderr).map(|(m, s)| format!("{m:.1}+-{s:.1}")).collect();
                failures.push(format!("{name} seed {seed} time-to-goal blocks [{}]", shown.join(", ")));
            }
            let ck = report.final_checkpoint().clone();
            match kind {
                PolicyKind::Symbolic => trained.symbolic.push(ck),
                PolicyKind::Hybrid => trained.hybrid.push(ck),
            }
        }
    }
    *agents = Some(trained);
    check(failures.is_empty(), failures.join("; "))?;
    Ok(format!(
        "{}; smoothed time-to-goal over 10%..100% never rises beyond 2 standard errors ({strict}/4 runs strictly non-increasing)",
        summary.join(", ")
    ))
}

fn prepare(t: &Trajectory, map: &MapSpec) -> Option<Trajectory> {
    trim_start(t, map).ok().map(|t| trim_trailing_idle(&t, DEFAULT_IDLE_WINDOW))
}

fn humans(map: &Arc<MapSpec>, players: &[usize], reps: u64) -> Vec<Trajectory> {
    let mut out = Vec::new();
    for &p in players {
        for rep in 0..reps {
            for g in 0..map.goals.len() {
                let seed = 1000 * p as u64 + rep * 100 + g as u64;
                let t = scripted_human_policy(map.clone(), g, HumanTraits::for_player(p, 0), seed, &format!("player-{p}")).unwrap();
                out.extend(prepare(&t, map));
            }
        }
    }
    out
}

fn rollouts(map: &Arc<MapSpec>, ck: &Checkpoint, n: usize, seed: u64) -> Vec<Trajectory> {
    let opts = RolloutOptions {
        n_episodes: n,
        seed,
        goal_sweep: true,
    };
    rollout(ck, map.clone(), &opts).unwrap().iter().filter_map(|t| prepare(t, map)).collect()
}

struct Splits {
    train: Vec<Trajectory>,
    val: Vec<Trajectory>,
    test: Vec<Trajectory>,
}

impl Splits {
    fn generators(set: &[Trajectory]) -> HashSet<&str> {
        set.iter().map(|t| t.generator_id.as_str()).collect()
    }

    fn disjoint(&self) -> bool {
        let (a, b, c) = (Self::generators(&self.train), Self::generators(&self.val), Self::generators(&self.test));
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

fn encode_all(kind: ModelKind, set: &[Trajectory], map: &MapSpec, pre: &Preprocess) -> Vec<EncodedTrajectory> {
    set.iter()
        .map(|t| {
            let frames = (kind.is_image() || kind.input_space() == ntt_core::classifiers::InputSpace::Visual).then(|| render_frames(map, t));
            encode_for(kind, t, map, pre, frames.as_deref()).unwrap()
        })
        .collect()
}

fn held_out_accuracy(run: &TrainRun, test: &[EncodedTrajectory]) -> f64 {
    let correct = test
        .iter()
        .filter(|e| predict_trajectory(&run.model, e).unwrap().majority_human == e.source.is_human())
        .count();
    correct as f64 / test.len() as f64
}

fn diverged(run: &TrainRun) -> Option<String> {
    let bad = run.epochs.iter().find(|e| !e.loss.is_finite() || e.loss > 2.0 * std::f64::consts::LN_2);
    bad.map(|e| format!("epoch {} loss {}", e.epoch, e.loss))
}

fn classifier_end_to_end(map: &Arc<MapSpec>, agents: &Option<Agents>, table: &mut Option<String>) -> Outcome {
    let agents = agents.as_ref().ok_or("no trained agents")?;
    let (sym, hyb) = (&agents.symbolic, &agents.hybrid);
    let mut splits = Splits {
        train: humans(map, &[0, 1, 2, 3], 2),
        val: humans(map, &[7], 2),
        test: humans(map, &[4, 5, 6], 2),
    };
    splits.train.extend(rollouts(map, &sym[0], 128, 5));
    splits.val.extend(rollouts(map, &hyb[0], 32, 6));
    splits.test.extend(rollouts(map, &sym[1], 48, 7));
    splits.test.extend(rollouts(map, &hyb[1], 48, 8));
    check(splits.disjoint(), "generators shared between splits")?;
    let sources: HashMap<String, Source> = splits.test.iter().map(|t| (t.id.clone(), t.source)).collect();

    let pre = Preprocess::for_map(map);
    let mut rows: Vec<ModelMetrics> = Vec::new();
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for kind in [ModelKind::SymFf, ModelKind::SymGru] {
        let (train, val, test) = (
            encode_all(kind, &splits.train, map, &pre),
            encode_all(kind, &splits.val, map, &pre),
            encode_all(kind, &splits.test, map, &pre),
        );
        let hp = Hyperparams::for_kind(kind);
        let mut accs = Vec::new();
        let mut repeats = Vec::new();
        for seed in 0..5 {
            let run = train_classifier(kind, &train, &val, &pre, &hp, seed).map_err(|e| format!("{kind}: {e}"))?;
            if let Some(d) = diverged(&run) {
                failures.push(format!("{kind} seed {seed} diverged: {d}"));
            }
            accs.push(held_out_accuracy(&run, &test));
            repeats.push(test.iter().map(|e| predict_trajectory(&run.model, e).unwrap()).collect());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        notes.push(format!("{kind} {mean:.3}"));
        if mean < 0.85 {
            failures.push(format!("{kind} mean held-out accuracy {mean:.3}"));
        }
        rows.push(model_metrics(kind, &repeats, &sources, None).map_err(|e| e.to_string())?);
    }

    // Every other kind on a small slice, two repeats each, to check stability and the report shape.
    let slice = |set: &[Trajectory], n: usize| -> Vec<Trajectory> {
        let (h, a): (Vec<&Trajectory>, Vec<&Trajectory>) = set.iter().partition(|t| t.source.is_human());
        h.iter().step_by((h.len() / n).max(1)).take(n).chain(a.iter().step_by((a.len() / n).max(1)).take(n)).map(|t| (*t).clone()).collect()
    };
    let (small_train, small_val, small_test) = (slice(&splits.train, 12), slice(&splits.val, 4), slice(&splits.test, 8));
    let small_sources: HashMap<String, Source> = small_test.iter().map(|t| (t.id.clone(), t.source)).collect();
    for kind in [ModelKind::VisFf, ModelKind::VisGru, ModelKind::TdCnn, ModelKind::BcCnn] {
        let (train, val, test) = (
            encode_all(kind, &small_train, map, &pre),
            encode_all(kind, &small_val, map, &pre),
            encode_all(kind, &small_test, map, &pre),
        );
        let hp = Hyperparams {
            epochs: 3,
            batch_size: 8,
            batches_per_epoch: 6,
            val_samples: 32,
            hidden: 16,
            patience: 0,
            ..Hyperparams::for_kind(kind)
        };
        let mut repeats = Vec::new();
        for seed in 0..2 {
            let run = train_classifier(kind, &train, &val, &pre, &hp, seed).map_err(|e| format!("{kind}: {e}"))?;
            if let Some(d) = diverged(&run) {
                failures.push(format!("{kind} seed {seed} diverged: {d}"));
            }
            repeats.push(test.iter().map(|e| predict_trajectory(&run.model, e).unwrap()).collect());
        }
        rows.push(model_metrics(kind, &repeats, &small_sources, None).map_err(|e| e.to_string())?);
    }
    rows.sort_by_key(|r| ModelKind::ALL.iter().position(|k| *k == r.model));
    let report = MetricsReport { rows, notes: notes.clone() };
    report.validate()?;
    let rendered = render_table(&report);
    let shaped = report.rows.len() == 6 && report.rows.iter().all(|r| r.identity_accuracy.is_some()) && rendered.contains(" (");
    *table = Some(rendered);
    check(shaped, "report is missing rows or mean (std) cells")?;
    check(failures.is_empty(), failures.join("; "))?;
    Ok(format!(
        "mean held-out identity accuracy over 5 repeats: {}; all six kinds stable; report has six mean (std) rows",
        notes.join(", ")
    ))
}

fn leakage_and_aggregation() -> Outcome {
    let mut built = 0;
    for seed in 0..200 {
        built += leakage_case(seed)? as usize;
    }
    for seed in 0..500 {
        majority_vote_case(seed)?;
        mean_logit_case(seed)?;
    }
    Ok(format!(
        "leakage guard held on 200 random split policies ({built} built, the rest rejected for too few generators); majority vote and mean-logit metrics invariant on 500 cases each"
    ))
}

fn service_contract() -> Outcome {
    let map = MapSpec::default_map();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (corpus, data) = (dir.path().join("corpus"), dir.path().join("data"));
    let trajectories = synthetic_sources(&Arc::new(map.clone()), 3);
    write_study_corpus(&corpus, &map, &trajectories, 4);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let life = rt.block_on(async {
        let base = spawn_service(&corpus, &data, map).await;
        run_lifecycle(&base, &data, "acceptance").await
    })?;
    check(life.judgments >= 10, format!("only {} judgments", life.judgments))?;
    let gap = life.max_proportion_gap();
    check(gap <= 1e-12, format!("export differs from raw records by {gap}"))?;
    let leaks = life.leaks();
    check(leaks.is_empty(), format!("participant payloads contain {leaks:?}"))?;
    Ok(format!(
        "create -> session -> {} judgments -> export over HTTP; export equals raw recomputation; {} payloads free of source labels",
        life.judgments,
        life.participant_bodies.len()
    ))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS  {name} ({secs:.1}s): {detail}");
            true
        }
        Err(why) => {
            println!("FAIL  {name} ({secs:.1}s): {why}");
            false
        }
    }
}

fn main() {
    let map = Arc::new(MapSpec::default_map());
    let mut agents = None;
    let mut table = None;
    let results = [
        run("gradient suite", gradient_suite),
        run("encoder exactness", encoder_exactness),
        run("metric oracles", metric_oracles),
        run("environment invariants", environment_invariants),
        run("agent training", || agent_training(&map, &mut agents)),
        run("classifier end-to-end", || classifier_end_to_end(&map, &agents, &mut table)),
        run("leakage and aggregation", leakage_and_aggregation),
        run("service contract", service_contract),
    ];
    if let Some(t) = table {
        println!("\n{t}");
    }
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
