use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::nets::{ActorCritic, PolicyNetSpec};
use super::PolicyError;
use crate::nnkit::ParamContainer;

pub const CHECKPOINT_KIND: &str = "policy-checkpoint";

/// A policy snapshot taken after `env_steps` environment steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub id: String,
    pub env_steps: u64,
    pub model: ActorCritic,
}

impl Checkpoint {
    pub fn to_container(&self) -> ParamContainer {
        let mut c = ParamContainer::new(
            CHECKPOINT_KIND,
            json!({ "id": self.id, "env_steps": self.env_steps, "spec": self.model.spec }),
        );
        c.push_module("actor", &self.model.actor);
        c.push_module("critic", &self.model.critic);
        c
    }

    /// Rebuilds a checkpoint; when `expected` is given the stored spec must equal it.
    pub fn from_container(c: &ParamContainer, expected: Option<&PolicyNetSpec>) -> Result<Self, PolicyError> {
        if c.kind != CHECKPOINT_KIND {
            return Err(PolicyError::Load(format!("container kind is {:?}, not {CHECKPOINT_KIND:?}", c.kind)));
        }
        let spec: PolicyNetSpec = serde_json::from_value(c.meta["spec"].clone())
            .map_err(|e| PolicyError::Load(format!("missing or invalid spec: {e}")))?;
        if let Some(want) = expected {
            if *want != spec {
                return Err(PolicyError::Load(format!("spec mismatch: checkpoint has {spec:?}, expected {want:?}")));
            }
        }
        let mut model = ActorCritic::new(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
        c.load_module("actor", &mut model.actor).map_err(|e| PolicyError::Load(e.to_string()))?;
        c.load_module("critic", &mut model.critic).map_err(|e| PolicyError::Load(e.to_string()))?;
        Ok(Self {
            id: c.meta["id"].as_str().unwrap_or("checkpoint").to_string(),
            env_steps: c.meta["env_steps"].as_u64().unwrap_or(0),
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: &Path, expected: Option<&PolicyNetSpec>) -> Result<Self, PolicyError> {
        let c = ParamContainer::load(path).map_err(|e| PolicyError::Load(e.to_string()))?;
        Self::from_container(&c, expected)
    }
}
