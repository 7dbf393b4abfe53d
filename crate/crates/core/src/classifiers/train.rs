use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{majority_vote, sample_batches, EncodedTrajectory, Preprocess, SampleRef};
use super::model::{input_shape, Network, TrainedModel};
use super::{ClassifierError, ModelKind};
use crate::nnkit::{bce_with_logit, sigmoid, Adam, Grads, Module, Tensor};
use crate::policies::Source;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    /// Upper bound on epochs; early stopping may end sooner.
    pub epochs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub hidden: usize,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    /// Size of the fixed validation sample drawn once per run.
    pub val_samples: usize,
    pub max_grad_norm: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            batches_per_epoch: 50,
            hidden: 32,
            patience: 5,
            val_samples: 512,
            max_grad_norm: 5.0,
        }
    }
}

impl Hyperparams {
    /// Per-kind defaults sized for a single CPU core.
    pub fn for_kind(kind: ModelKind) -> Self {
        let base = Self::default();
        match kind {
            ModelKind::SymFf => Self {
                hidden: 64,
                learning_rate: 3e-3,
                epochs: 60,
                // per-sample validation accuracy is too noisy to stop on
                patience: 0,
                ..base
            },
            ModelKind::SymGru => Self {
                learning_rate: 3e-3,
                epochs: 15,
                ..base
            },
            _ => Self {
                epochs: 8,
                batch_size: 16,
                batches_per_epoch: 20,
                patience: 3,
                val_samples: 128,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && self.batches_per_epoch > 0
            && self.hidden > 0
            && self.val_samples > 0
            && self.max_grad_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::Config(format!("invalid hyperparameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub kind: ModelKind,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub model: TrainedModel,
}

/// Trajectory-level prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVerdict {
    pub trajectory_id: String,
    pub probabilities: Vec<f64>,
    pub majority_human: bool,
    /// Mean of the per-sample logits.
    pub logit: f64,
}

fn check_encoding(kind: ModelKind, pre: &Preprocess, enc: &EncodedTrajectory) -> Result<(), ClassifierError> {
    let mismatch = |detail: String| ClassifierError::EncodingMismatch { kind, detail };
    if enc.space != kind.input_space() {
        return Err(mismatch(format!("{} is encoded as {:?}", enc.id, enc.space)));
    }
    if enc.inputs.is_empty() {
        return Err(mismatch(format!("{} has no inputs", enc.id)));
    }
    let want = input_shape(kind, pre);
    if let Some(bad) = enc.inputs.iter().find(|t| t.shape() != want.as_slice()) {
        return Err(mismatch(format!("{} has input shape {:?}, expected {want:?}", enc.id, bad.shape())));
    }
    if kind.is_image() && enc.inputs.len() != 1 {
        return Err(mismatch(format!("{} has {} images", enc.id, enc.inputs.len())));
    }
    Ok(())
}

fn sample_slice(kind: ModelKind, enc: &EncodedTrajectory, start: usize, window: usize) -> &[Tensor] {
    if kind.is_recurrent() {
        &enc.inputs[start..(start + window).min(enc.inputs.len())]
    } else {
        &enc.inputs[start..start + 1]
    }
}

/// Per-sample logits: every step, every stride-1 window, or the single image.
pub fn sample_logits(model: &TrainedModel, enc: &EncodedTrajectory) -> Result<Vec<f64>, ClassifierError> {
    check_encoding(model.kind, &model.preprocess, enc)?;
    let net = &model.network;
    let feats = net.features(&enc.inputs)?;
    if !model.kind.is_recurrent() {
        return Ok(feats.iter().map(|f| net.logit_from_features(std::slice::from_ref(f))).collect::<Result<_, _>>()?);
    }
    let window = model.preprocess.window_for(model.kind);
    let count = feats.len().saturating_sub(window) + 1;
    Ok((0..count)
        .map(|s| net.logit_from_features(&feats[s..(s + window).min(feats.len())]))
        .collect::<Result<_, _>>()?)
}

pub fn predict_trajectory(model: &TrainedModel, enc: &EncodedTrajectory) -> Result<TrajectoryVerdict, ClassifierError> {
    let logits = sample_logits(model, enc)?;
    let probabilities: Vec<f64> = logits.iter().map(|z| sigmoid(*z)).collect();
    Ok(TrajectoryVerdict {
        trajectory_id: enc.id.clone(),
        majority_human: majority_vote(&probabilities),
        logit: logits.iter().sum::<f64>() / logits.len() as f64,
        probabilities,
    })
}

/// Fraction of trajectories whose majority verdict matches their source.
pub fn trajectory_accuracy(model: &TrainedModel, set: &[EncodedTrajectory]) -> Result<f64, ClassifierError> {
    if set.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut correct = 0;
    for e in set {
        correct += (predict_trajectory(model, e)?.majority_human == e.source.is_human()) as usize;
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Trains after asserting that no generator contributes to both sets.
pub fn train_classifier(
    kind: ModelKind,
    train: &[EncodedTrajectory],
    val: &[EncodedTrajectory],
    pre: &Preprocess,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainRun, ClassifierError> {
    let train_gens: HashSet<&str> = train.iter().map(|e| e.generator_id.as_str()).collect();
    if let Some(shared) = val.iter().find(|e| train_gens.contains(e.generator_id.as_str())) {
        return Err(ClassifierError::Leakage(shared.generator_id.clone()));
    }
    train_unchecked(kind, train, val, pre, hp, seed)
}

/// Trains without the generator-disjointness check. Validation samples are
/// only ever used for monitoring.
pub fn train_unchecked(
    kind: ModelKind,
    train: &[EncodedTrajectory],
    val: &[EncodedTrajectory],
    pre: &Preprocess,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainRun, ClassifierError> {
    hp.validate()?;
    pre.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    for e in train.iter().chain(val) {
        check_encoding(kind, pre, e)?;
    }
    let window = pre.window_for(kind);
    let mut network = Network::new(kind, hp.hidden, pre, seed)?;
    let mut adam = Adam::new(&network.params(), hp.learning_rate);
    let mut stream = sample_batches(train, kind, hp.batch_size, window, seed ^ 0x5EED_0001)?;
    let val_set: Vec<SampleRef> = {
        let mut s = sample_batches(val, kind, hp.val_samples, window, seed ^ 0x5EED_0002)?;
        s.next().expect("stream is endless")
    };

    let val_accuracy = |net: &Network| -> Result<f64, ClassifierError> {
        let mut correct = 0;
        for r in &val_set {
            let e = &val[r.trajectory];
            let z = net.logit(sample_slice(kind, e, r.start, window))?;
            correct += ((z > 0.0) == (e.label > 0.5)) as usize;
        }
        Ok(correct as f64 / val_set.len() as f64)
    };

    let mut epochs = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, network.clone());
    let mut stopped_early = false;
    for epoch in 1..=hp.epochs {
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for _ in 0..hp.batches_per_epoch {
            let batch = stream.next().expect("stream is endless");
            let mut grads: Grads = network.zero_grads();
            for r in &batch {
                let e = &train[r.trajectory];
                let mut loss = 0.0;
                let z = network.accumulate(
                    sample_slice(kind, e, r.start, window),
                    |z| {
                        let (l, d) = bce_with_logit(z, e.label);
                        loss = l;
                        d
                    },
                    &mut grads.0,
                )?;
                loss_sum += loss;
                correct += ((z > 0.0) == (e.label > 0.5)) as usize;
                seen += 1;
            }
            grads.scale(1.0 / batch.len() as f64);
            if !loss_sum.is_finite() || !grads.all_finite() {
                let log = serde_json::to_string(&epochs).unwrap_or_default();
                return Err(ClassifierError::NonFinite { epoch, log });
            }
            grads.clip_global_norm(hp.max_grad_norm);
            adam.step(network.params_mut(), &grads)?;
        }
        let val_acc = val_accuracy(&network)?;
        let log = EpochLog {
            epoch,
            loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_acc,
        };
        tracing::debug!(kind = %kind, epoch, loss = log.loss, train_acc = log.train_acc, val_acc, "epoch");
        epochs.push(log);
        if val_acc > best.0 {
            best = (val_acc, epoch, network.clone());
        } else if hp.patience > 0 && epoch - best.1 >= hp.patience {
            stopped_early = epoch < hp.epochs;
            break;
        }
    }
    let (best_epoch, network) = if hp.patience > 0 { (best.1, best.2) } else { (epochs.len(), network) };
    Ok(TrainRun {
        kind,
        seed,
        train_ids: train.iter().map(|e| e.id.clone()).collect(),
        val_ids: val.iter().map(|e| e.id.clone()).collect(),
        epochs,
        best_epoch,
        stopped_early,
        model: TrainedModel {
            kind,
            hyperparams: hp.clone(),
            preprocess: pre.clone(),
            network,
        },
    })
}

/// Splits trajectory indices into `k` folds, stratified by source.
pub fn kfold_folds(sources: &[Source], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::Config("k must be at least 2".into()));
    }
    if k > sources.len() {
        return Err(ClassifierError::Config(format!("k = {k} exceeds {} trajectories", sources.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        by_source.entry(s.as_str()).or_default().push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for group in by_source.values_mut() {
        group.shuffle(&mut rng);
        for &i in group.iter() {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub folds: Vec<Vec<usize>>,
    /// Held-out trajectory accuracy per grid point, per fold.
    pub fold_accuracies: Vec<Vec<f64>>,
    pub mean_accuracies: Vec<f64>,
    pub best_index: usize,
    pub best: Hyperparams,
    /// Winner retrained on every fold.
    pub final_run: TrainRun,
}

/// K-fold model selection over `grid`, then a final fit on all data.
pub fn kfold_cv(
    kind: ModelKind,
    dataset: &[EncodedTrajectory],
    pre: &Preprocess,
    k: usize,
    grid: &[Hyperparams],
    seed: u64,
) -> Result<CvResult, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::Config("empty hyperparameter grid".into()));
    }
    let sources: Vec<Source> = dataset.iter().map(|e| e.source).collect();
    let folds = kfold_folds(&sources, k, seed)?;
    let mut fold_accuracies = Vec::with_capacity(grid.len());
    for (g, hp) in grid.iter().enumerate() {
        let mut accs = Vec::with_capacity(k);
        for (f, held) in folds.iter().enumerate() {
            let held_set: HashSet<usize> = held.iter().copied().collect();
            let train: Vec<EncodedTrajectory> =
                (0..dataset.len()).filter(|i| !held_set.contains(i)).map(|i| dataset[i].clone()).collect();
            let val: Vec<EncodedTrajectory> = held.iter().map(|&i| dataset[i].clone()).collect();
            let run_seed = seed.wrapping_add((g * k + f) as u64 + 1);
            let run = train_unchecked(kind, &train, &val, pre, hp, run_seed)?;
            accs.push(trajectory_accuracy(&run.model, &val)?);
        }
        fold_accuracies.push(accs);
    }
    let mean_accuracies: Vec<f64> = fold_accuracies.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect();
    let best_index = mean_accuracies
        .iter()
        .enumerate()
        .fold(0, |b, (i, m)| if *m > mean_accuracies[b] { i } else { b });
    let best = grid[best_index].clone();
    let final_hp = Hyperparams { patience: 0, ..best.clone() };
    let final_run = train_unchecked(kind, dataset, dataset, pre, &final_hp, seed)?;
    Ok(CvResult {
        folds,
        fold_accuracies,
        mean_accuracies,
        best_index,
        best,
        final_run,
    })
}

/// Synthetic symbolic trajectories. When `separable`, humans occupy the upper
/// half of the map and agents the lower; otherwise positions carry no signal.
pub fn synthetic_symbolic(n_per_class: usize, len: usize, separable: bool, seed: u64) -> Vec<EncodedTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * n_per_class)
        .map(|i| {
            let source = if i % 2 == 0 { Source::Human } else { Source::SymbolicAgent };
            let inputs = (0..len)
                .map(|_| {
                    let x: f64 = rng.gen();
                    let y: f64 = match (separable, source.is_human()) {
                        (true, true) => rng.gen_range(0.55..1.0),
                        (true, false) => rng.gen_range(0.0..0.45),
                        _ => rng.gen(),
                    };
                    let mut f = vec![0.0; super::SYMBOLIC_STEP_FEATURES];
                    f[0] = x;
                    f[1] = y;
                    Tensor::from_vec(f)
                })
                .collect();
            EncodedTrajectory {
                id: format!("syn-{i}"),
                source,
                generator_id: format!("gen-{i}"),
                goal_index: 0,
                label: source.proxy_label(),
                space: super::InputSpace::Symbolic,
                inputs,
            }
        })
        .collect()
}
