use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Preprocess, SYMBOLIC_STEP_FEATURES};
use super::train::Hyperparams;
use super::{ClassifierError, InputSpace, ModelKind};
use crate::nnkit::{
    Activation, Conv2d, Dense, GruCell, GruStepCache, Layer, MaxPool2d, Module, NnError, ParamContainer, Sequential,
    SequentialCache, Tensor,
};

/// Container kind tag for saved classifiers.
pub const MODEL_KIND: &str = "classifier";

const CONV_CHANNELS: [usize; 3] = [8, 16, 32];

/// Per-sample encoder, an optional GRU over encoder features, and a linear head giving one logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub kind: ModelKind,
    pub encoder: Sequential,
    pub gru: Option<GruCell>,
    pub head: Dense,
}

/// Input shape a kind expects per sample.
pub(crate) fn input_shape(kind: ModelKind, pre: &Preprocess) -> Vec<usize> {
    match kind.input_space() {
        InputSpace::Symbolic => vec![SYMBOLIC_STEP_FEATURES],
        InputSpace::Visual => {
            use crate::encoders::{TOPDOWN_HEIGHT, TOPDOWN_WIDTH};
            vec![1, TOPDOWN_HEIGHT / pre.frame_factor, TOPDOWN_WIDTH / pre.frame_factor]
        }
        InputSpace::TopDown | InputSpace::Barcode => vec![1, pre.image_size, pre.image_size],
    }
}

fn conv_stack(rng: &mut ChaCha8Rng, h: usize, w: usize, out: usize) -> Sequential {
    let mut layers = Vec::new();
    let (mut c, mut h, mut w) = (1, h, w);
    for &next in &CONV_CHANNELS {
        layers.push(Layer::Conv2d(Conv2d::new(rng, c, next, 3, 1, 1, Activation::Relu)));
        layers.push(Layer::MaxPool(MaxPool2d { size: 2 }));
        c = next;
        h /= 2;
        w /= 2;
    }
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(Dense::new(rng, c * h * w, out, Activation::Relu)));
    Sequential::new(layers)
}

struct SampleCache {
    encoder: Vec<SequentialCache>,
    gru: Vec<GruStepCache>,
    head_in: Tensor,
    head_out: Tensor,
}

impl Network {
    pub fn new(kind: ModelKind, hidden: usize, pre: &Preprocess, seed: u64) -> Result<Self, ClassifierError> {
        if hidden == 0 {
            return Err(ClassifierError::Config("hidden size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = input_shape(kind, pre);
        if shape.len() == 3 && (shape[1] < 8 || shape[2] < 8) {
            return Err(ClassifierError::Config(format!("input {shape:?} too small for the conv stack")));
        }
        let (encoder, gru) = match kind {
            ModelKind::SymFf => (
                Sequential::new(vec![
                    Layer::Dense(Dense::new(&mut rng, SYMBOLIC_STEP_FEATURES, hidden, Activation::Relu)),
                    Layer::Dense(Dense::new(&mut rng, hidden, hidden, Activation::Relu)),
                ]),
                None,
            ),
            ModelKind::SymGru => (Sequential::default(), Some(GruCell::new(&mut rng, SYMBOLIC_STEP_FEATURES, hidden))),
            ModelKind::VisFf | ModelKind::TdCnn | ModelKind::BcCnn => (conv_stack(&mut rng, shape[1], shape[2], hidden), None),
            ModelKind::VisGru => {
                let enc = conv_stack(&mut rng, shape[1], shape[2], hidden);
                (enc, Some(GruCell::new(&mut rng, hidden, hidden)))
            }
        };
        let head = Dense::new(&mut rng, hidden, 1, Activation::Identity);
        Ok(Self { kind, encoder, gru, head })
    }

    fn slots(&self) -> (usize, usize) {
        let enc = self.encoder.params().len();
        let gru = self.gru.as_ref().map_or(0, |g| g.params().len());
        (enc, enc + gru)
    }

    /// Encoder features for every input.
    pub fn features(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, NnError> {
        inputs.iter().map(|x| self.encoder.forward(x).map(Tensor::into_data)).collect()
    }

    /// Logit from the encoder features of one sample (one step, or a window for GRU kinds).
    pub fn logit_from_features(&self, features: &[Vec<f64>]) -> Result<f64, NnError> {
        let h = match &self.gru {
            Some(g) => g.forward_sequence(features, None)?.0.pop().unwrap_or_else(|| vec![0.0; g.hidden_size()]),
            None => features[0].clone(),
        };
        Ok(self.head.affine(&h)[0])
    }

    pub fn logit(&self, sample: &[Tensor]) -> Result<f64, NnError> {
        self.logit_from_features(&self.features(sample)?)
    }

    fn forward_cached(&self, sample: &[Tensor]) -> Result<(f64, SampleCache), NnError> {
        let mut feats = Vec::with_capacity(sample.len());
        let mut encoder = Vec::with_capacity(sample.len());
        for x in sample {
            let (y, c) = self.encoder.forward_cached(x)?;
            feats.push(y.into_data());
            encoder.push(c);
        }
        let (h, gru) = match &self.gru {
            Some(g) => {
                let (mut hs, caches) = g.forward_sequence(&feats, None)?;
                (hs.pop().expect("non-empty window"), caches)
            }
            None => (feats.pop().expect("one input"), Vec::new()),
        };
        let head_in = Tensor::from_vec(h);
        let head_out = self.head.forward(&head_in)?;
        let logit = head_out.data()[0];
        Ok((logit, SampleCache { encoder, gru, head_in, head_out }))
    }

    /// Adds d(loss)/d(params) for one sample to `grads`, given d(loss)/d(logit).
    fn backward(&self, cache: &SampleCache, dlogit: f64, grads: &mut [Tensor]) {
        let (enc_end, gru_end) = self.slots();
        let dh = self
            .head
            .backward(&cache.head_in, &cache.head_out, &Tensor::from_vec(vec![dlogit]), &mut grads[gru_end..]);
        let dfeats = match &self.gru {
            Some(g) => g.backward_sequence(&cache.gru, dh.data(), &mut grads[enc_end..gru_end]).0,
            None => vec![dh.into_data()],
        };
        if enc_end == 0 {
            return;
        }
        for (c, df) in cache.encoder.iter().zip(dfeats) {
            self.encoder.backward(c, Tensor::from_vec(df), &mut grads[..enc_end]);
        }
    }

    /// Forward and backward for one sample; returns the logit.
    pub(crate) fn accumulate(&self, sample: &[Tensor], dloss: impl FnOnce(f64) -> f64, grads: &mut [Tensor]) -> Result<f64, NnError> {
        let (logit, cache) = self.forward_cached(sample)?;
        self.backward(&cache, dloss(logit), grads);
        Ok(logit)
    }
}

impl Module for Network {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        if let Some(g) = &self.gru {
            p.extend(g.params());
        }
        p.extend([&self.head.weight, &self.head.bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        if let Some(g) = &mut self.gru {
            p.extend(g.params_mut());
        }
        p.extend([&mut self.head.weight, &mut self.head.bias]);
        p
    }
}

/// A network together with everything needed to encode inputs for it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub preprocess: Preprocess,
    pub network: Network,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: ModelKind,
    hyperparams: Hyperparams,
    preprocess: Preprocess,
}

impl TrainedModel {
    pub fn to_container(&self) -> ParamContainer {
        let meta = ModelMeta {
            kind: self.kind,
            hyperparams: self.hyperparams.clone(),
            preprocess: self.preprocess.clone(),
        };
        let mut c = ParamContainer::new(MODEL_KIND, serde_json::to_value(meta).expect("meta serializes"));
        c.push_module("net", &self.network);
        c
    }

    pub fn from_container(c: &ParamContainer) -> Result<Self, ClassifierError> {
        if c.kind != MODEL_KIND {
            return Err(ClassifierError::Load(format!("expected a {MODEL_KIND} container, found {:?}", c.kind)));
        }
        let meta: ModelMeta =
            serde_json::from_value(c.meta.clone()).map_err(|e| ClassifierError::Load(format!("bad metadata: {e}")))?;
        let mut network = Network::new(meta.kind, meta.hyperparams.hidden, &meta.preprocess, 0)?;
        c.load_module("net", &mut network)?;
        Ok(Self {
            kind: meta.kind,
            hyperparams: meta.hyperparams,
            preprocess: meta.preprocess,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_container(&ParamContainer::load(path)?)
    }
}
