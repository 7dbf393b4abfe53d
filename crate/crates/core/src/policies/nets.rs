use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::navsim::{Action, MapSpec, Observation, DEPTH_SIZE};
use crate::nnkit::{Activation, Conv2d, Dense, Grads, Layer, Module, Sequential, SequentialCache, Tensor};

/// Length of the symbolic feature vector:
/// `[sin(goal angle), cos(goal angle), goal distance, x, y, z, mean depth]`.
pub const SYMBOLIC_FEATURES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Symbolic,
    Hybrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetSpec {
    pub kind: PolicyKind,
    /// Widths of the tanh layers over the symbolic features.
    pub hidden: Vec<usize>,
    /// Channels of the two depth-buffer convolutions (hybrid only).
    pub conv_channels: [usize; 2],
    /// Width of the dense layer closing the conv branch (hybrid only).
    pub conv_features: usize,
    pub action_count: usize,
}

impl PolicyNetSpec {
    pub fn symbolic() -> Self {
        Self {
            kind: PolicyKind::Symbolic,
            hidden: vec![64, 64],
            conv_channels: [4, 8],
            conv_features: 32,
            action_count: Action::COUNT,
        }
    }

    pub fn hybrid() -> Self {
        Self {
            kind: PolicyKind::Hybrid,
            ..Self::symbolic()
        }
    }

    pub fn for_kind(kind: PolicyKind) -> Self {
        match kind {
            PolicyKind::Symbolic => Self::symbolic(),
            PolicyKind::Hybrid => Self::hybrid(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.action_count != Action::COUNT {
            return Err(PolicyError::Config(format!("action_count must be {}, got {}", Action::COUNT, self.action_count)));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(PolicyError::Config("hidden widths must be non-empty and positive".into()));
        }
        if self.kind == PolicyKind::Hybrid && (self.conv_channels.contains(&0) || self.conv_features == 0) {
            return Err(PolicyError::Config("conv widths must be positive".into()));
        }
        Ok(())
    }
}

/// Network input for one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput {
    pub symbolic: Tensor,
    /// `[1, 32, 32]` depth buffer, present for hybrid policies.
    pub depth: Option<Tensor>,
}

pub fn symbolic_features(obs: &Observation, map: &MapSpec) -> Vec<f64> {
    let b = map.bounds();
    let diag = b.width().hypot(b.height());
    vec![
        obs.rel_goal_angle.sin(),
        obs.rel_goal_angle.cos(),
        obs.rel_goal_distance / diag,
        (obs.position[0] - b.min_x) / b.width(),
        (obs.position[1] - b.min_y) / b.height(),
        obs.position[2] / 10.0,
        obs.avg_frame_depth,
    ]
}

pub fn policy_input(kind: PolicyKind, obs: &Observation, map: &MapSpec) -> PolicyInput {
    let depth = (kind == PolicyKind::Hybrid).then(|| {
        Tensor::new(vec![1, DEPTH_SIZE, DEPTH_SIZE], obs.depth_buffer.values.clone()).expect("depth buffer is square")
    });
    PolicyInput {
        symbolic: Tensor::from_vec(symbolic_features(obs, map)),
        depth,
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Symbolic trunk, optional conv branch over the depth buffer, and a linear
/// head over their concatenation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchNet {
    pub trunk: Sequential,
    pub conv: Option<Sequential>,
    pub head: Dense,
}

pub struct BranchCache {
    trunk: SequentialCache,
    conv: Option<SequentialCache>,
    joint: Tensor,
    output: Tensor,
}

impl BranchNet {
    pub fn new(spec: &PolicyNetSpec, outputs: usize, head_scale: f64, rng: &mut impl Rng) -> Self {
        let mut trunk = Vec::new();
        let mut width = SYMBOLIC_FEATURES;
        for &h in &spec.hidden {
            trunk.push(Layer::Dense(Dense::new(rng, width, h, Activation::Tanh)));
            width = h;
        }
        let conv = (spec.kind == PolicyKind::Hybrid).then(|| {
            let [c0, c1] = spec.conv_channels;
            // 32x32 -> 8x8 -> 4x4
            let first = Conv2d::new(rng, 1, c0, 4, 4, 0, Activation::Relu);
            let second = Conv2d::new(rng, c0, c1, 3, 2, 1, Activation::Relu);
            let flat = c1 * (DEPTH_SIZE / 8) * (DEPTH_SIZE / 8);
            Sequential::new(vec![
                Layer::Conv2d(first),
                Layer::Conv2d(second),
                Layer::Flatten,
                Layer::Dense(Dense::new(rng, flat, spec.conv_features, Activation::Relu)),
            ])
        });
        if conv.is_some() {
            width += spec.conv_features;
        }
        let mut head = Dense::new(rng, width, outputs, Activation::Identity);
        head.weight.scale(head_scale);
        Self {
            trunk: Sequential::new(trunk),
            conv,
            head,
        }
    }

    fn joint(&self, input: &PolicyInput) -> Result<Tensor, PolicyError> {
        let mut joint = self.trunk.forward(&input.symbolic)?.into_data();
        if let Some(conv) = &self.conv {
            let depth = input.depth.as_ref().ok_or_else(|| PolicyError::Config("hybrid policy needs a depth buffer".into()))?;
            joint.extend(conv.forward(depth)?.into_data());
        }
        Ok(Tensor::from_vec(joint))
    }

    pub fn forward(&self, input: &PolicyInput) -> Result<Vec<f64>, PolicyError> {
        Ok(self.head.forward(&self.joint(input)?)?.into_data())
    }

    pub fn forward_cached(&self, input: &PolicyInput) -> Result<(Vec<f64>, BranchCache), PolicyError> {
        let (t, trunk) = self.trunk.forward_cached(&input.symbolic)?;
        let mut joint = t.into_data();
        let conv = match &self.conv {
            Some(conv) => {
                let depth = input.depth.as_ref().ok_or_else(|| PolicyError::Config("hybrid policy needs a depth buffer".into()))?;
                let (c, cache) = conv.forward_cached(depth)?;
                joint.extend(c.into_data());
                Some(cache)
            }
            None => None,
        };
        let joint = Tensor::from_vec(joint);
        let output = self.head.forward(&joint)?;
        let out = output.data().to_vec();
        Ok((
            out,
            BranchCache {
                trunk,
                conv,
                joint,
                output,
            },
        ))
    }

    /// Accumulates parameter gradients (ordered as [`Module::params`]) into `grads`.
    pub fn backward(&self, cache: &BranchCache, grad_out: &[f64], grads: &mut [Tensor]) {
        let n_trunk = self.trunk.params().len();
        let n_conv = self.conv.as_ref().map_or(0, |c| c.params().len());
        let (g_trunk, rest) = grads.split_at_mut(n_trunk);
        let (g_conv, g_head) = rest.split_at_mut(n_conv);
        let d_joint = self
            .head
            .backward(&cache.joint, &cache.output, &Tensor::from_vec(grad_out.to_vec()), g_head)
            .into_data();
        let trunk_width = trunk_out(&self.trunk);
        self.trunk
            .backward(&cache.trunk, Tensor::from_vec(d_joint[..trunk_width].to_vec()), g_trunk);
        if let (Some(conv), Some(cc)) = (&self.conv, &cache.conv) {
            conv.backward(cc, Tensor::from_vec(d_joint[trunk_width..].to_vec()), g_conv);
        }
    }
}

fn trunk_out(trunk: &Sequential) -> usize {
    match trunk.layers.last() {
        Some(Layer::Dense(d)) => d.output_size(),
        _ => SYMBOLIC_FEATURES,
    }
}

impl Module for BranchNet {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        if let Some(c) = &self.conv {
            p.extend(c.params());
        }
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        if let Some(c) = &mut self.conv {
            p.extend(c.params_mut());
        }
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }
}

/// Separate actor (action logits) and critic (state value) networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub spec: PolicyNetSpec,
    pub actor: BranchNet,
    pub critic: BranchNet,
}

impl ActorCritic {
    pub fn new(spec: PolicyNetSpec, rng: &mut impl Rng) -> Result<Self, PolicyError> {
        spec.validate()?;
        let actor = BranchNet::new(&spec, spec.action_count, 0.01, rng);
        let critic = BranchNet::new(&spec, 1, 1.0, rng);
        Ok(Self { spec, actor, critic })
    }

    pub fn input(&self, obs: &Observation, map: &MapSpec) -> PolicyInput {
        policy_input(self.spec.kind, obs, map)
    }

    pub fn logits(&self, input: &PolicyInput) -> Result<Vec<f64>, PolicyError> {
        self.actor.forward(input)
    }

    pub fn value(&self, input: &PolicyInput) -> Result<f64, PolicyError> {
        Ok(self.critic.forward(input)?[0])
    }

    /// Samples an action; returns it with its log-probability.
    pub fn sample(&self, input: &PolicyInput, rng: &mut impl Rng) -> Result<(Action, f64), PolicyError> {
        let logits = self.logits(input)?;
        let logp = log_softmax(&logits);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = logp.len() - 1;
        for (i, lp) in logp.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                chosen = i;
                break;
            }
        }
        Ok((Action::from_index(chosen).expect("action index"), logp[chosen]))
    }

    pub fn greedy(&self, input: &PolicyInput) -> Result<Action, PolicyError> {
        let logits = self.logits(input)?;
        let best = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(Action::from_index(best).expect("action index"))
    }

    pub fn actor_param_count(&self) -> usize {
        self.actor.params().len()
    }
}

impl Module for ActorCritic {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.actor.params();
        p.extend(self.critic.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.actor.params_mut();
        p.extend(self.critic.params_mut());
        p
    }
}

impl ActorCritic {
    pub fn zero_grads_buffer(&self) -> Grads {
        Grads::zeros_for(&self.params())
    }
}
