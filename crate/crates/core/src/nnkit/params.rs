use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{Module, Tensor};
use super::NnError;

pub const CONTAINER_FORMAT: &str = "ntt-params";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Versioned container of named parameter arrays plus free-form metadata.
/// Shared by policy checkpoints, classifier models and encoded tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamContainer {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl ParamContainer {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            format: CONTAINER_FORMAT.to_string(),
            version: CONTAINER_VERSION,
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.arrays.push(NamedArray {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        });
    }

    /// Appends every parameter of `module` as `{prefix}.{index}`.
    pub fn push_module(&mut self, prefix: &str, module: &dyn Module) {
        for (i, p) in module.params().into_iter().enumerate() {
            self.push(format!("{prefix}.{i}"), p);
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, NnError> {
        let a = self.get(name).ok_or_else(|| NnError::Load(format!("missing array `{name}`")))?;
        Tensor::new(a.shape.clone(), a.data.clone())
    }

    /// Copies `{prefix}.{index}` arrays into `module`, requiring exact shape agreement.
    pub fn load_module(&self, prefix: &str, module: &mut dyn Module) -> Result<(), NnError> {
        let expected = module.params().len();
        let found = self
            .arrays
            .iter()
            .filter(|a| a.name.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('.')))
            .count();
        if found != expected {
            return Err(NnError::Load(format!(
                "`{prefix}` holds {found} arrays but the network expects {expected}"
            )));
        }
        for (i, p) in module.params_mut().into_iter().enumerate() {
            let name = format!("{prefix}.{i}");
            let a = self.get(&name).ok_or_else(|| NnError::Load(format!("missing array `{name}`")))?;
            if a.shape != p.shape() {
                return Err(NnError::Load(format!(
                    "array `{name}` has shape {:?}, network expects {:?}",
                    a.shape,
                    p.shape()
                )));
            }
            p.data_mut().copy_from_slice(&a.data);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string(self).map_err(|e| NnError::Load(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
        let c: ParamContainer = serde_json::from_str(&text).map_err(|e| NnError::Load(format!("{}: {e}", path.display())))?;
        if c.format != CONTAINER_FORMAT {
            return Err(NnError::Load(format!("unexpected container format `{}`", c.format)));
        }
        if c.version != CONTAINER_VERSION {
            return Err(NnError::Load(format!("unsupported container version {}", c.version)));
        }
        Ok(c)
    }
}
