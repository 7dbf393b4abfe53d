use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ntt_core::classifiers::{Hyperparams, ModelKind, Preprocess};
use ntt_core::corpus::{GeneratorShare, SplitPolicy, DEFAULT_IDLE_WINDOW};
use ntt_core::navsim::MapSpec;
use ntt_core::policies::PpoConfig;
use serde::{Deserialize, Serialize};

/// Everything a run needs. Sections are validated by the subcommand that uses them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub map: MapSection,
    pub ppo: PpoConfig,
    pub rollout: RolloutSection,
    pub human: HumanSection,
    pub corpus: CorpusSection,
    pub classifier: ClassifierSection,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            map: MapSection::default(),
            ppo: PpoConfig {
                eval_interval: 25_000,
                target_success: Some(0.9),
                ..PpoConfig::default()
            },
            rollout: RolloutSection::default(),
            human: HumanSection::default(),
            corpus: CorpusSection::default(),
            classifier: ClassifierSection::default(),
            study: StudySection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    /// Text map file; the built-in layout when absent.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub episodes: usize,
    pub goal_sweep: bool,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            episodes: 64,
            goal_sweep: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanSection {
    pub players: usize,
    /// Trajectories per player and goal.
    pub repetitions: usize,
}

impl Default for HumanSection {
    fn default() -> Self {
        Self {
            players: 7,
            repetitions: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub split: SplitPolicy,
    pub idle_window: usize,
    /// Store first-person frames with the corpus.
    pub frames: bool,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            split: SplitPolicy {
                test: GeneratorShare::Fraction(0.4),
                val: GeneratorShare::Count(0),
            },
            idle_window: DEFAULT_IDLE_WINDOW,
            frames: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub kinds: Vec<String>,
    pub folds: usize,
    pub repeats: usize,
    /// Learning rates searched by cross-validation, on top of each kind's defaults.
    pub learning_rates: Vec<f64>,
    /// Per-kind overrides keyed by model name, e.g. `[classifier.hyperparams.SYM-FF]`.
    pub hyperparams: BTreeMap<String, Hyperparams>,
    pub preprocess: PreprocessOverrides,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            kinds: ModelKind::ALL.iter().map(|k| k.to_string()).collect(),
            folds: 5,
            repeats: 5,
            learning_rates: vec![1e-3, 3e-3],
            hyperparams: BTreeMap::new(),
            preprocess: PreprocessOverrides::default(),
        }
    }
}

impl ClassifierSection {
    pub fn kinds(&self) -> Result<Vec<ModelKind>> {
        let kinds = self.kinds.iter().map(|k| Ok(k.parse::<ModelKind>()?)).collect::<Result<Vec<_>>>()?;
        if kinds.is_empty() {
            bail!("classifier.kinds is empty");
        }
        Ok(kinds)
    }

    pub fn base(&self, kind: ModelKind) -> Result<Hyperparams> {
        for (name, hp) in &self.hyperparams {
            if name.parse::<ModelKind>()? == kind {
                return Ok(hp.clone());
            }
        }
        Ok(Hyperparams::for_kind(kind))
    }

    pub fn grid(&self, kind: ModelKind) -> Result<Vec<Hyperparams>> {
        let base = self.base(kind)?;
        if self.learning_rates.is_empty() {
            return Ok(vec![base]);
        }
        Ok(self
            .learning_rates
            .iter()
            .map(|&learning_rate| Hyperparams { learning_rate, ..base.clone() })
            .collect())
    }

    pub fn preprocess(&self, map: &MapSpec) -> Preprocess {
        let o = &self.preprocess;
        let d = Preprocess::for_map(map);
        Preprocess {
            window: o.window.unwrap_or(d.window),
            visual_window: o.visual_window.unwrap_or(d.visual_window),
            frame_stride: o.frame_stride.unwrap_or(d.frame_stride),
            frame_factor: o.frame_factor.unwrap_or(d.frame_factor),
            image_size: o.image_size.unwrap_or(d.image_size),
            ..d
        }
    }

    pub fn validate(&self, map: &MapSpec) -> Result<()> {
        if self.folds < 2 {
            bail!("classifier.folds must be at least 2");
        }
        if self.repeats == 0 {
            bail!("classifier.repeats must be positive");
        }
        if self.learning_rates.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            bail!("classifier.learning_rates must be positive");
        }
        for kind in self.kinds()? {
            for hp in self.grid(kind)? {
                hp.validate()?;
            }
        }
        self.preprocess(map).validate()?;
        Ok(())
    }
}

/// Preprocessing fields to change; bounds and velocity scale always follow the map.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessOverrides {
    pub window: Option<usize>,
    pub visual_window: Option<usize>,
    pub frame_stride: Option<usize>,
    pub frame_factor: Option<usize>,
    pub image_size: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub addr: String,
    /// `study1` (human vs hybrid) or `study2` (human vs symbolic), created at startup if missing.
    pub preset: Option<String>,
    pub study_id: String,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            preset: None,
            study_id: "study1".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn map(&self) -> Result<MapSpec> {
        let map = match &self.map.path {
            Some(p) => MapSpec::load(p).with_context(|| format!("loading map {}", p.display()))?,
            None => MapSpec::default_map(),
        };
        map.validate_layout()?;
        Ok(map)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
