use ntt_core::nnkit::{
    bce_with_logit, grad_check, Activation, Conv2d, Dense, Grads, GruCell, Layer, MaxPool2d, Module, Sequential, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn sequential_case(net: Sequential, x: Tensor, label: f64) -> f64 {
    let mut net = net;
    let (out, cache) = net.forward_cached(&x).unwrap();
    let (_, dlogit) = bce_with_logit(out.data()[0], label);
    let mut grads = net.zero_grads();
    net.backward_into(&cache, Tensor::from_vec(vec![dlogit]), &mut grads);
    grad_check(&mut net, &grads, STEP, |n| bce_with_logit(n.forward(&x).unwrap().data()[0], label).0)
}

/// Dense 3->2 (sigmoid) followed by a linear read-out and BCE.
pub fn dense_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Sequential::new(vec![
        Layer::Dense(Dense::new(&mut rng, 3, 2, Activation::Sigmoid)),
        Layer::Dense(Dense::new(&mut rng, 2, 1, Activation::Identity)),
    ]);
    let x = random_tensor(&mut rng, &[3]);
    sequential_case(net, x, (seed % 2) as f64)
}

/// Conv2D 1->2 channels on an 8x8 input, flattened into a linear read-out.
pub fn conv_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Sequential::new(vec![
        Layer::Conv2d(Conv2d::new(&mut rng, 1, 2, 3, 1, 1, Activation::Tanh)),
        Layer::Flatten,
        Layer::Dense(Dense::new(&mut rng, 2 * 8 * 8, 1, Activation::Identity)),
    ]);
    let x = random_tensor(&mut rng, &[1, 8, 8]);
    sequential_case(net, x, (seed % 2) as f64)
}

/// Strided conv, max-pool and flatten in one stack.
pub fn pool_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Sequential::new(vec![
        Layer::Conv2d(Conv2d::new(&mut rng, 2, 3, 3, 2, 1, Activation::Tanh)),
        Layer::MaxPool(MaxPool2d { size: 2 }),
        Layer::Flatten,
        Layer::Dense(Dense::new(&mut rng, 3 * 2 * 2, 1, Activation::Identity)),
    ]);
    let x = random_tensor(&mut rng, &[2, 9, 9]);
    sequential_case(net, x, (seed % 2) as f64)
}

struct GruProbe {
    cell: GruCell,
    head: Dense,
}

impl Module for GruProbe {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.cell.params();
        p.extend([&self.head.weight, &self.head.bias]);
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.cell.params_mut();
        p.extend([&mut self.head.weight, &mut self.head.bias]);
        p
    }
}

impl GruProbe {
    fn loss(&self, xs: &[Vec<f64>], label: f64) -> f64 {
        let (hs, _) = self.cell.forward_sequence(xs, None).unwrap();
        let logit = self.head.forward(&Tensor::from_vec(hs.last().unwrap().clone())).unwrap().data()[0];
        bce_with_logit(logit, label).0
    }
}

/// GRU cell unrolled over 5 steps, final hidden state into a linear read-out.
pub fn gru_case(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = GruProbe {
        cell: GruCell::new(&mut rng, 3, 4),
        head: Dense::new(&mut rng, 4, 1, Activation::Identity),
    };
    // non-zero biases so every gate path is exercised
    for p in probe.params_mut() {
        if p.shape().len() == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let label = (seed % 2) as f64;

    let (hs, caches) = probe.cell.forward_sequence(&xs, None).unwrap();
    let last = Tensor::from_vec(hs.last().unwrap().clone());
    let logit = probe.head.forward(&last).unwrap();
    let (_, dlogit) = bce_with_logit(logit.data()[0], label);
    let mut grads: Grads = probe.zero_grads();
    let (cell_grads, head_grads) = grads.0.split_at_mut(9);
    let dh = probe.head.backward(&last, &logit, &Tensor::from_vec(vec![dlogit]), head_grads);
    probe.cell.backward_sequence(&caches, dh.data(), cell_grads);
    grad_check(&mut probe, &grads, STEP, |p| p.loss(&xs, label))
}
