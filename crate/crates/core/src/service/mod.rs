//! HTTP service that runs pairwise human-likeness studies.
//!
//! Participants only ever see opaque video ids; sources, generators and
//! trajectory ids stay server-side until an analyst calls the export
//! endpoint.

mod routes;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, DatasetManifest};
use crate::evalkit::TrialDef;
use crate::navsim::MapSpec;
use crate::policies::Source;

pub use routes::router;
pub use store::{Session, Store};

pub const DEFAULT_LIKERT_LEVELS: u8 = 5;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("internal: {0}")]
    Internal(String),
}

/// A block of trials comparing two sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBlock {
    pub source_a: Source,
    pub source_b: Source,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    pub blocks: Vec<ConditionBlock>,
    #[serde(default = "default_likert")]
    pub likert_levels: u8,
}

fn default_likert() -> u8 {
    DEFAULT_LIKERT_LEVELS
}

impl StudyConfig {
    /// Six human-hybrid trials and four symbolic-hybrid trials.
    pub fn study1(study_id: &str) -> Self {
        Self::with_blocks(study_id, Source::HybridAgent)
    }

    /// Six human-symbolic trials and four symbolic-hybrid trials.
    pub fn study2(study_id: &str) -> Self {
        Self::with_blocks(study_id, Source::SymbolicAgent)
    }

    fn with_blocks(study_id: &str, agent: Source) -> Self {
        Self {
            study_id: study_id.into(),
            blocks: vec![
                ConditionBlock {
                    source_a: Source::Human,
                    source_b: agent,
                    trials: 6,
                },
                ConditionBlock {
                    source_a: Source::SymbolicAgent,
                    source_b: Source::HybridAgent,
                    trials: 4,
                },
            ],
            likert_levels: DEFAULT_LIKERT_LEVELS,
        }
    }

    pub fn trial_count(&self) -> usize {
        self.blocks.iter().map(|b| b.trials).sum()
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let id_ok = !self.study_id.is_empty()
            && self.study_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return Err(ServiceError::Validation(format!("study id {:?} must be non-empty [A-Za-z0-9_-]", self.study_id)));
        }
        if self.blocks.is_empty() || self.blocks.iter().any(|b| b.trials == 0) {
            return Err(ServiceError::Validation("every block needs a positive trial count".into()));
        }
        if self.blocks.iter().any(|b| b.source_a == b.source_b) {
            return Err(ServiceError::Validation("a block must compare two different sources".into()));
        }
        if self.likert_levels < 2 {
            return Err(ServiceError::Validation("likert scale needs at least two levels".into()));
        }
        Ok(())
    }
}

/// A trial with its hidden source information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    #[serde(flatten)]
    pub def: TrialDef,
    /// Opaque ids shown to participants in place of trajectory ids.
    pub public_a: String,
    pub public_b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub seed: u64,
    pub trials: Vec<Trial>,
}

impl Study {
    pub fn trial(&self, trial_id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.def.trial_id == trial_id)
    }

    pub fn defs(&self) -> Vec<TrialDef> {
        self.trials.iter().map(|t| t.def.clone()).collect()
    }
}

/// Samples goal-matched test pairs for every block, without replacement, and
/// randomizes which source is shown as A.
pub fn build_study(config: &StudyConfig, manifest: &DatasetManifest, seed: u64) -> Result<Study, ServiceError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(config.trial_count());
    let mut used_public = HashSet::new();
    for block in &config.blocks {
        let mut pairs = manifest.matched_pairs(block.source_a, block.source_b);
        if pairs.len() < block.trials {
            return Err(ServiceError::Validation(format!(
                "block {} vs {} needs {} goal-matched test pairs, manifest has {}",
                block.source_a.as_str(),
                block.source_b.as_str(),
                block.trials,
                pairs.len()
            )));
        }
        pairs.shuffle(&mut rng);
        for (x, y) in pairs.into_iter().take(block.trials) {
            let goal_index = manifest.entry(&x).map(|e| e.goal_index).unwrap_or_default();
            let (video_a, video_b, source_a, source_b) = if rng.gen_bool(0.5) {
                (y, x, block.source_b, block.source_a)
            } else {
                (x, y, block.source_a, block.source_b)
            };
            let mut public = || loop {
                let id = format!("v{:016x}", rng.gen::<u64>());
                if used_public.insert(id.clone()) {
                    return id;
                }
            };
            let (public_a, public_b) = (public(), public());
            trials.push(Trial {
                def: TrialDef {
                    trial_id: format!("trial-{:02}", trials.len() + 1),
                    video_a,
                    video_b,
                    source_a,
                    source_b,
                    goal_index,
                },
                public_a,
                public_b,
            });
        }
    }
    Ok(Study {
        config: config.clone(),
        seed,
        trials,
    })
}

/// Everything the service needs: the map, the corpus and a data directory.
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub corpus_dir: PathBuf,
    pub map: MapSpec,
    /// Fixes session ids and orders, for tests; entropy-seeded otherwise.
    pub session_seed: Option<u64>,
}

pub struct AppState {
    pub map: Arc<MapSpec>,
    pub corpus_dir: PathBuf,
    pub manifest: DatasetManifest,
    pub store: Store,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn open(cfg: ServiceConfig) -> Result<SharedState, ServiceError> {
        let manifest = DatasetManifest::load(&cfg.corpus_dir.join(crate::corpus::MANIFEST_FILE))?;
        let store = Store::open(&cfg.data_dir, cfg.session_seed)?;
        Ok(Arc::new(Self {
            map: Arc::new(cfg.map),
            corpus_dir: cfg.corpus_dir,
            manifest,
            store,
        }))
    }

    /// Resolves a public video id to its study trial side and trajectory path.
    pub fn resolve_video(&self, public_id: &str) -> Option<(String, usize)> {
        self.store.resolve_video(public_id)
    }

    pub fn trajectory_file(&self, trajectory_id: &str) -> Option<PathBuf> {
        self.manifest.entry(trajectory_id).map(|e| self.corpus_dir.join(&e.trajectory_path))
    }

    pub fn frames_dir(&self, trajectory_id: &str) -> Option<PathBuf> {
        self.manifest
            .entry(trajectory_id)
            .and_then(|e| e.frames_dir.as_ref())
            .map(|d| self.corpus_dir.join(d))
    }
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: SharedState, addr: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "study service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub(crate) fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "1970-01-01T00:00:00Z".into())
}

pub(crate) fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ServiceError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(ServiceError::from))
        .collect()
}

/// Per-source counts of goal-matched test pairs, for diagnostics.
pub fn pair_availability(manifest: &DatasetManifest) -> BTreeMap<String, usize> {
    let sources = [Source::Human, Source::SymbolicAgent, Source::HybridAgent];
    let mut out = BTreeMap::new();
    for (i, a) in sources.iter().enumerate() {
        for b in &sources[i + 1..] {
            out.insert(format!("{}/{}", a.as_str(), b.as_str()), manifest.matched_pairs(*a, *b).len());
        }
    }
    out
}
