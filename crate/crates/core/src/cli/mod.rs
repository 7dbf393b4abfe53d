mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use ntt_core::classifiers::{
    encode_for, kfold_cv, predict_trajectory, train_classifier, train_unchecked, trajectory_accuracy, EncodedTrajectory,
    Hyperparams, ModelKind, Preprocess, TrainedModel,
};
use ntt_core::corpus::{
    build_manifest, frames_dir, read_corpus, read_frames, trim_start, trim_trailing_idle, write_corpus, write_frames,
    CorpusError, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE,
};
use ntt_core::encoders::{encode_barcode, encode_symbolic, encode_topdown, render_frames};
use ntt_core::evalkit::{model_metrics, render_table, summarize, GroundTruth, MetricsReport};
use ntt_core::navsim::MapSpec;
use ntt_core::policies::{
    ppo_train, rollout, scripted_human_policy, smoothed_time_to_goal, Checkpoint, HumanTraits, PolicyNetSpec, PolicyKind,
    RolloutOptions, Source, Trajectory,
};
use ntt_core::service::{build_study, serve, AppState, ServiceConfig, StudyConfig};
use serde_json::json;
use tracing::{info, warn};
use tracing_subscriber::layer::SubscriberExt;
use tracing_subscriber::util::SubscriberInitExt;
use tracing_subscriber::{fmt, EnvFilter};

use crate::{AgentKind, Cli, Command};
pub use config::RunConfig;

const SMOOTHING_WINDOW: usize = 50;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    apply_flags(&mut cfg, &cli.command);
    cfg.ppo.seed = cfg.seed;

    let root = match &cli.out {
        Some(p) => p.clone(),
        None => PathBuf::from("runs").join(timestamp()),
    };
    let dir = root.join(cli.command.name());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    init_logging(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    fs::write(dir.join("command.json"), serde_json::to_string_pretty(&cli.command)?)?;
    info!(command = cli.command.name(), dir = %dir.display(), seed = cfg.seed, "run started");

    let map = cfg.map()?;
    match &cli.command {
        Command::GenMap => gen_map(&map, &dir),
        Command::TrainAgent { kind, .. } => train_agent(&cfg, map, *kind, &dir),
        Command::Rollout { checkpoint, .. } => rollout_cmd(&cfg, map, checkpoint, &dir),
        Command::GenHuman { .. } => gen_human(&cfg, map, &dir),
        Command::Encode { trajectories } => encode_cmd(&cfg, &map, trajectories, &dir),
        Command::TrainClassifier { corpus, .. } => train_classifiers(&cfg, &map, corpus, &dir),
        Command::Evaluate { corpus, models, judgments } => evaluate(&cfg, &map, corpus, models, judgments.as_deref(), &dir),
        Command::Serve { corpus, data, addr } => serve_cmd(&cfg, map, corpus, data.as_deref(), addr.as_deref(), &dir),
        Command::Report { metrics } => report(metrics, &dir),
    }
}

/// Per-subcommand flags override the matching config fields, so the snapshot
/// written to the run directory reflects what actually ran.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::TrainAgent { total_steps: Some(n), .. } => cfg.ppo.total_steps = *n,
        Command::Rollout { episodes: Some(n), .. } => cfg.rollout.episodes = *n,
        Command::GenHuman { players, repetitions } => {
            cfg.human.players = players.unwrap_or(cfg.human.players);
            cfg.human.repetitions = repetitions.unwrap_or(cfg.human.repetitions);
        }
        Command::TrainClassifier { kinds, repeats, folds, .. } => {
            if !kinds.is_empty() {
                cfg.classifier.kinds = kinds.clone();
            }
            cfg.classifier.repeats = repeats.unwrap_or(cfg.classifier.repeats);
            cfg.classifier.folds = folds.unwrap_or(cfg.classifier.folds);
        }
        Command::Serve { addr: Some(a), .. } => cfg.study.addr = a.clone(),
        _ => {}
    }
}

fn timestamp() -> String {
    let now = time::OffsetDateTime::now_utc();
    format!(
        "{:04}{:02}{:02}T{:02}{:02}{:02}Z",
        now.year(),
        now.month() as u8,
        now.day(),
        now.hour(),
        now.minute(),
        now.second()
    )
}

fn init_logging(dir: &Path) -> Result<()> {
    let file = fs::File::create(dir.join("log.txt"))?;
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::registry()
        .with(filter)
        .with(fmt::layer().with_writer(std::io::stderr))
        .with(fmt::layer().with_ansi(false).with_writer(Mutex::new(file)))
        .try_init()
        .map_err(|e| anyhow!("logging already initialised: {e}"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn gen_map(map: &MapSpec, dir: &Path) -> Result<()> {
    map.save(&dir.join("map.txt"))?;
    println!(
        "{}: {}x{} cells, {} goals, {} spawns -> {}",
        map.name,
        map.cols,
        map.rows,
        map.goals.len(),
        map.spawns.len(),
        dir.join("map.txt").display()
    );
    Ok(())
}

fn train_agent(cfg: &RunConfig, map: MapSpec, kind: AgentKind, dir: &Path) -> Result<()> {
    let spec = PolicyNetSpec::for_kind(match kind {
        AgentKind::Symbolic => PolicyKind::Symbolic,
        AgentKind::Hybrid => PolicyKind::Hybrid,
    });
    cfg.ppo.validate()?;
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let report = ppo_train(Arc::new(map), spec, &cfg.ppo, |ck| {
        info!(steps = ck.env_steps, "checkpoint");
        ck.save(&ckpt_dir.join(format!("step-{:09}.ntt", ck.env_steps)))
    })?;
    let last = report.final_checkpoint();
    last.save(&dir.join("policy.ntt"))?;
    let mut episodes = String::new();
    for e in &report.episodes {
        episodes.push_str(&serde_json::to_string(e)?);
        episodes.push('\n');
    }
    fs::write(dir.join("episodes.jsonl"), episodes)?;
    let smoothed = smoothed_time_to_goal(&report.episodes, SMOOTHING_WINDOW);
    write_json(
        &dir.join("training.json"),
        &json!({
            "env_steps": report.env_steps,
            "updates": report.updates,
            "stopped_early": report.stopped_early,
            "evaluations": report.evaluations,
            "final_smoothed_time_to_goal": smoothed.last(),
        }),
    )?;
    let best = match report.evaluations.iter().map(|e| e.success).reduce(f64::max) {
        Some(b) => format!("{b:.3}"),
        None => "n/a".into(),
    };
    println!(
        "trained {} for {} steps ({} updates); best evaluated success {}; policy -> {}",
        last.id,
        report.env_steps,
        report.updates,
        best,
        dir.join("policy.ntt").display()
    );
    Ok(())
}

fn save_trajectories(trajectories: &[Trajectory], dir: &Path) -> Result<PathBuf> {
    let out = dir.join("trajectories");
    fs::create_dir_all(&out)?;
    for t in trajectories {
        t.save(&out.join(format!("{}.jsonl", t.id)))?;
    }
    Ok(out)
}

fn rollout_cmd(cfg: &RunConfig, map: MapSpec, checkpoint: &Path, dir: &Path) -> Result<()> {
    if !checkpoint.exists() {
        bail!("missing artifact: checkpoint {} does not exist", checkpoint.display());
    }
    let ck = Checkpoint::load(checkpoint, None)?;
    let options = RolloutOptions {
        n_episodes: cfg.rollout.episodes,
        seed: cfg.seed,
        goal_sweep: cfg.rollout.goal_sweep,
    };
    let trajectories = rollout(&ck, Arc::new(map), &options)?;
    let out = save_trajectories(&trajectories, dir)?;
    let successes = trajectories.iter().filter(|t| t.outcome == ntt_core::navsim::Termination::Goal).count();
    write_json(&dir.join("summary.json"), &json!({ "checkpoint": ck.id, "episodes": trajectories.len(), "successes": successes }))?;
    println!("{} trajectories ({} reached the goal) -> {}", trajectories.len(), successes, out.display());
    Ok(())
}

fn gen_human(cfg: &RunConfig, map: MapSpec, dir: &Path) -> Result<()> {
    let h = &cfg.human;
    if h.players == 0 || h.repetitions == 0 {
        bail!("human.players and human.repetitions must be positive");
    }
    let map = Arc::new(map);
    let mut trajectories = Vec::new();
    for p in 0..h.players {
        let traits = HumanTraits::for_player(p, cfg.seed);
        let generator = format!("player-{p}");
        for rep in 0..h.repetitions {
            for goal in 0..map.goals.len() {
                let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((rep * map.goals.len() + goal) as u64);
                trajectories.push(scripted_human_policy(map.clone(), goal, traits, seed, &generator)?);
            }
        }
    }
    let out = save_trajectories(&trajectories, dir)?;
    println!("{} human trajectories from {} players -> {}", trajectories.len(), h.players, out.display());
    Ok(())
}

fn load_trajectory_dir(dir: &Path) -> Result<Vec<Trajectory>> {
    let dir = if dir.join("trajectories").is_dir() { dir.join("trajectories") } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();
    if paths.is_empty() {
        bail!("missing artifact: no trajectory files in {}", dir.display());
    }
    paths.iter().map(|p| Trajectory::load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

fn encode_cmd(cfg: &RunConfig, map: &MapSpec, inputs: &[PathBuf], dir: &Path) -> Result<()> {
    let mut kept = Vec::new();
    let mut rejected = 0;
    for input in inputs {
        for t in load_trajectory_dir(input)? {
            match trim_start(&t, map) {
                Ok(t) => kept.push(trim_trailing_idle(&t, cfg.corpus.idle_window)),
                Err(CorpusError::Rejected { id, reason }) => {
                    warn!(%id, %reason, "trajectory rejected");
                    rejected += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let manifest = build_manifest(&kept, &cfg.corpus.split, cfg.seed)?;
    let mut manifest = write_corpus(dir, &manifest, &kept, &HashMap::new())?;
    let bounds = map.bounds();
    for sub in ["symbolic", "topdown", "barcode"] {
        fs::create_dir_all(dir.join("encodings").join(sub))?;
    }
    let by_id: HashMap<&str, &Trajectory> = kept.iter().map(|t| (t.id.as_str(), t)).collect();
    for entry in &mut manifest.entries {
        let t = by_id[entry.trajectory_id.as_str()];
        let enc = dir.join("encodings");
        write_json(&enc.join("symbolic").join(format!("{}.json", t.id)), &encode_symbolic(t)?)?;
        fs::write(enc.join("topdown").join(format!("{}.png", t.id)), encode_topdown(t, &bounds)?.to_png()?)?;
        let frames = render_frames(map, t);
        fs::write(enc.join("barcode").join(format!("{}.png", t.id)), encode_barcode(&frames)?.to_png()?)?;
        if cfg.corpus.frames {
            let rel = frames_dir(&t.id);
            write_frames(&dir.join(&rel), &frames)?;
            entry.frames_dir = Some(rel);
        }
    }
    manifest.save(&dir.join(MANIFEST_FILE))?;
    let mut counts: BTreeMap<(Split, &str), usize> = BTreeMap::new();
    for e in &manifest.entries {
        *counts.entry((e.split, e.source.as_str())).or_default() += 1;
    }
    for ((split, source), n) in &counts {
        println!("{split:?}/{source}: {n}");
    }
    println!("{} trajectories kept, {} rejected; corpus -> {}", kept.len(), rejected, dir.display());
    Ok(())
}

fn encode_entries(
    kind: ModelKind,
    entries: &[&ManifestEntry],
    trajectories: &HashMap<String, Trajectory>,
    map: &MapSpec,
    pre: &Preprocess,
    corpus: &Path,
) -> Result<Vec<EncodedTrajectory>> {
    entries
        .iter()
        .map(|e| {
            let t = &trajectories[&e.trajectory_id];
            let frames = match (&e.frames_dir, kind.input_space()) {
                (Some(d), ntt_core::classifiers::InputSpace::Visual) => Some(read_frames(&corpus.join(d))?),
                _ => None,
            };
            Ok(encode_for(kind, t, map, pre, frames.as_deref())?)
        })
        .collect()
}

fn load_corpus(corpus: &Path) -> Result<(DatasetManifest, HashMap<String, Trajectory>)> {
    if !corpus.join(MANIFEST_FILE).exists() {
        bail!("missing artifact: no {} in {}", MANIFEST_FILE, corpus.display());
    }
    let (manifest, trajectories) = read_corpus(corpus)?;
    Ok((manifest, trajectories.into_iter().map(|t| (t.id.clone(), t)).collect()))
}

fn train_classifiers(cfg: &RunConfig, map: &MapSpec, corpus: &Path, dir: &Path) -> Result<()> {
    let c = &cfg.classifier;
    c.validate(map)?;
    let (manifest, trajectories) = load_corpus(corpus)?;
    let pre = c.preprocess(map);
    let pick = |split: Split| manifest.split(split).collect::<Vec<_>>();
    let (train_e, val_e, test_e) = (pick(Split::Train), pick(Split::Val), pick(Split::Test));
    let mut table = Vec::new();
    for kind in c.kinds()? {
        let kdir = dir.join("models").join(kind.as_str());
        fs::create_dir_all(&kdir)?;
        let train = encode_entries(kind, &train_e, &trajectories, map, &pre, corpus)?;
        let val = encode_entries(kind, &val_e, &trajectories, map, &pre, corpus)?;
        let test = encode_entries(kind, &test_e, &trajectories, map, &pre, corpus)?;
        let dev: Vec<EncodedTrajectory> = train.iter().chain(&val).cloned().collect();
        info!(%kind, train = train.len(), val = val.len(), test = test.len(), "training");

        let cv = kfold_cv(kind, &dev, &pre, c.folds, &c.grid(kind)?, cfg.seed)?;
        write_json(
            &kdir.join("cv.json"),
            &json!({ "fold_accuracies": cv.fold_accuracies, "mean_accuracies": cv.mean_accuracies, "best": cv.best }),
        )?;
        let mut accs = Vec::new();
        for r in 0..c.repeats {
            let seed = cfg.seed.wrapping_add(1 + r as u64);
            let run = if val.is_empty() {
                let hp = Hyperparams { patience: 0, ..cv.best.clone() };
                train_unchecked(kind, &train, &train, &pre, &hp, seed)?
            } else {
                train_classifier(kind, &train, &val, &pre, &cv.best, seed)?
            };
            run.model.save(&kdir.join(format!("repeat-{r}.ntt")))?;
            write_json(&kdir.join(format!("repeat-{r}-epochs.json")), &run.epochs)?;
            let acc = if test.is_empty() { None } else { Some(trajectory_accuracy(&run.model, &test)?) };
            info!(%kind, repeat = r, test_accuracy = ?acc, "trained");
            accs.push(acc);
        }
        let s = summarize(&accs);
        write_json(&kdir.join("summary.json"), &json!({ "test_accuracy": s, "per_repeat": accs }))?;
        table.push(format!(
            "{kind}: held-out accuracy {}",
            s.map(|m| format!("{:.3} ({:.3})", m.mean, m.std)).unwrap_or_else(|| "n/a".into())
        ));
    }
    for line in &table {
        println!("{line}");
    }
    Ok(())
}

fn load_models(models: &Path, kind: ModelKind) -> Result<Vec<TrainedModel>> {
    let kdir = models.join("models").join(kind.as_str());
    let kdir = if kdir.is_dir() { kdir } else { models.join(kind.as_str()) };
    let mut paths: Vec<PathBuf> = match fs::read_dir(&kdir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    paths.retain(|p| p.extension().is_some_and(|e| e == "ntt"));
    paths.sort();
    if paths.is_empty() {
        bail!("missing artifact: no trained {kind} models under {}", models.display());
    }
    paths.iter().map(|p| TrainedModel::load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

fn evaluate(cfg: &RunConfig, map: &MapSpec, corpus: &Path, models: &Path, judgments: Option<&Path>, dir: &Path) -> Result<()> {
    let (manifest, trajectories) = load_corpus(corpus)?;
    let test_e: Vec<&ManifestEntry> = manifest.split(Split::Test).collect();
    if test_e.is_empty() {
        bail!("corpus has no test split");
    }
    let sources: HashMap<String, Source> = test_e.iter().map(|e| (e.trajectory_id.clone(), e.source)).collect();
    let truth: Option<GroundTruth> = match judgments {
        Some(p) => Some(serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    let mut rows = Vec::new();
    for kind in cfg.classifier.kinds()? {
        let trained = load_models(models, kind)?;
        let pre = &trained[0].preprocess;
        let test = encode_entries(kind, &test_e, &trajectories, map, pre, corpus)?;
        let repeats = trained
            .iter()
            .map(|m| test.iter().map(|e| predict_trajectory(m, e)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(model_metrics(kind, &repeats, &sources, truth.as_ref())?);
    }
    let report = MetricsReport {
        rows,
        notes: vec![
            format!("seed {}", cfg.seed),
            format!("{} test trajectories", test_e.len()),
            format!("judgments: {}", judgments.map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())),
        ],
    };
    report.validate().map_err(|e| anyhow!(e))?;
    write_json(&dir.join("metrics.json"), &report)?;
    let table = render_table(&report);
    fs::write(dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn serve_cmd(cfg: &RunConfig, map: MapSpec, corpus: &Path, data: Option<&Path>, addr: Option<&str>, dir: &Path) -> Result<()> {
    if !corpus.join(MANIFEST_FILE).exists() {
        bail!("missing artifact: no {} in {}", MANIFEST_FILE, corpus.display());
    }
    let state = AppState::open(ServiceConfig {
        data_dir: data.map(Path::to_path_buf).unwrap_or_else(|| dir.join("data")),
        corpus_dir: corpus.to_path_buf(),
        map,
        session_seed: None,
    })?;
    if let Some(preset) = &cfg.study.preset {
        let id = &cfg.study.study_id;
        let config = match preset.as_str() {
            "study1" => StudyConfig::study1(id),
            "study2" => StudyConfig::study2(id),
            other => bail!("unknown study preset {other:?}; expected study1 or study2"),
        };
        if state.store.study(id).is_none() {
            state.store.add_study(build_study(&config, &state.manifest, cfg.seed)?)?;
            info!(study = %id, "study created");
        }
    }
    let addr = addr.unwrap_or(&cfg.study.addr).to_string();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(state, &addr))?;
    Ok(())
}

fn report(metrics: &Path, dir: &Path) -> Result<()> {
    if !metrics.exists() {
        bail!("missing artifact: metrics file {} does not exist", metrics.display());
    }
    let report: MetricsReport = serde_json::from_slice(&fs::read(metrics)?)?;
    report.validate().map_err(|e| anyhow!(e))?;
    let table = render_table(&report);
    fs::write(dir.join("table.txt"), &table)?;
    print!("{table}");
    for note in &report.notes {
        println!("# {note}");
    }
    Ok(())
}
