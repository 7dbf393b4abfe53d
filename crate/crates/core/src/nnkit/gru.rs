use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, uniform_fan_in};
use super::tensor::{Module, Tensor};
use super::NnError;

/// Gated recurrent unit cell.
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r * h) + bh)
/// h' = z * h + (1 - z) * h~
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

/// Values from one cell application needed for backprop.
#[derive(Clone, Debug)]
pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    h_tilde: Vec<f64>,
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.shape()[1];
    w.data().chunks_exact(cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn matvec_t_acc(w: &Tensor, d: &[f64], out: &mut [f64]) {
    let cols = w.shape()[1];
    for (row, dv) in w.data().chunks_exact(cols).zip(d) {
        if *dv != 0.0 {
            for (o, wv) in out.iter_mut().zip(row) {
                *o += dv * wv;
            }
        }
    }
}

fn outer_acc(g: &mut Tensor, d: &[f64], x: &[f64]) {
    let cols = g.shape()[1];
    for (row, dv) in g.data_mut().chunks_exact_mut(cols).zip(d) {
        if *dv != 0.0 {
            for (gv, xv) in row.iter_mut().zip(x) {
                *gv += dv * xv;
            }
        }
    }
}

fn vec_acc(g: &mut Tensor, d: &[f64]) {
    for (gv, dv) in g.data_mut().iter_mut().zip(d) {
        *gv += dv;
    }
}

impl GruCell {
    pub fn new(rng: &mut impl Rng, input: usize, hidden: usize) -> Self {
        Self {
            w_z: uniform_fan_in(rng, &[hidden, input], hidden),
            u_z: uniform_fan_in(rng, &[hidden, hidden], hidden),
            b_z: Tensor::zeros(&[hidden]),
            w_r: uniform_fan_in(rng, &[hidden, input], hidden),
            u_r: uniform_fan_in(rng, &[hidden, hidden], hidden),
            b_r: Tensor::zeros(&[hidden]),
            w_h: uniform_fan_in(rng, &[hidden, input], hidden),
            u_h: uniform_fan_in(rng, &[hidden, hidden], hidden),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeroed(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            b_z: Tensor::zeros(&[hidden]),
            w_r: Tensor::zeros(&[hidden, input]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            b_r: Tensor::zeros(&[hidden]),
            w_h: Tensor::zeros(&[hidden, input]),
            u_h: Tensor::zeros(&[hidden, hidden]),
            b_h: Tensor::zeros(&[hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Result<(Vec<f64>, GruStepCache), NnError> {
        if x.len() != self.input_size() || h.len() != self.hidden_size() {
            return Err(NnError::Shape {
                context: "gru cell (input, hidden)".into(),
                expected: vec![self.input_size(), self.hidden_size()],
                got: vec![x.len(), h.len()],
            });
        }
        let gate = |w: &Tensor, u: &Tensor, b: &Tensor, hv: &[f64]| -> Vec<f64> {
            matvec(w, x)
                .into_iter()
                .zip(matvec(u, hv))
                .zip(b.data())
                .map(|((a, c), bv)| a + c + bv)
                .collect::<Vec<f64>>()
        };
        let z: Vec<f64> = gate(&self.w_z, &self.u_z, &self.b_z, h).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = gate(&self.w_r, &self.u_r, &self.b_r, h).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let h_tilde: Vec<f64> = gate(&self.w_h, &self.u_h, &self.b_h, &rh).into_iter().map(f64::tanh).collect();
        let h_next = z
            .iter()
            .zip(h)
            .zip(&h_tilde)
            .map(|((zv, hv), tv)| zv * hv + (1.0 - zv) * tv)
            .collect();
        Ok((
            h_next,
            GruStepCache {
                x: x.to_vec(),
                h_prev: h.to_vec(),
                z,
                r,
                rh,
                h_tilde,
            },
        ))
    }

    /// Backward through one step. `grads` follows [`Module::params`] order.
    /// Returns `(d input, d previous hidden)`.
    pub fn step_backward(&self, cache: &GruStepCache, dh_next: &[f64], grads: &mut [Tensor]) -> (Vec<f64>, Vec<f64>) {
        let n_h = self.hidden_size();
        let mut dx = vec![0.0; self.input_size()];
        let mut dh = vec![0.0; n_h];
        let mut da_z = vec![0.0; n_h];
        let mut da_h = vec![0.0; n_h];
        for k in 0..n_h {
            let (z, hp, ht) = (cache.z[k], cache.h_prev[k], cache.h_tilde[k]);
            dh[k] = dh_next[k] * z;
            da_z[k] = dh_next[k] * (hp - ht) * z * (1.0 - z);
            da_h[k] = dh_next[k] * (1.0 - z) * (1.0 - ht * ht);
        }
        // candidate branch
        outer_acc(&mut grads[6], &da_h, &cache.x);
        outer_acc(&mut grads[7], &da_h, &cache.rh);
        vec_acc(&mut grads[8], &da_h);
        matvec_t_acc(&self.w_h, &da_h, &mut dx);
        let mut drh = vec![0.0; n_h];
        matvec_t_acc(&self.u_h, &da_h, &mut drh);
        let mut da_r = vec![0.0; n_h];
        for k in 0..n_h {
            dh[k] += drh[k] * cache.r[k];
            let r = cache.r[k];
            da_r[k] = drh[k] * cache.h_prev[k] * r * (1.0 - r);
        }
        // reset gate
        outer_acc(&mut grads[3], &da_r, &cache.x);
        outer_acc(&mut grads[4], &da_r, &cache.h_prev);
        vec_acc(&mut grads[5], &da_r);
        matvec_t_acc(&self.w_r, &da_r, &mut dx);
        matvec_t_acc(&self.u_r, &da_r, &mut dh);
        // update gate
        outer_acc(&mut grads[0], &da_z, &cache.x);
        outer_acc(&mut grads[1], &da_z, &cache.h_prev);
        vec_acc(&mut grads[2], &da_z);
        matvec_t_acc(&self.w_z, &da_z, &mut dx);
        matvec_t_acc(&self.u_z, &da_z, &mut dh);
        (dx, dh)
    }

    /// Runs the cell over a sequence starting from `h0` (zeros when `None`).
    pub fn forward_sequence(&self, inputs: &[Vec<f64>], h0: Option<&[f64]>) -> Result<(Vec<Vec<f64>>, Vec<GruStepCache>), NnError> {
        let mut h = h0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; self.hidden_size()]);
        let mut hs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (next, cache) = self.step(x, &h)?;
            hs.push(next.clone());
            caches.push(cache);
            h = next;
        }
        Ok((hs, caches))
    }

    /// Backprop through time from a gradient on the final hidden state.
    /// Returns per-step input gradients and the gradient on `h0`.
    pub fn backward_sequence(&self, caches: &[GruStepCache], dh_last: &[f64], grads: &mut [Tensor]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut dh = dh_last.to_vec();
        let mut dxs = vec![Vec::new(); caches.len()];
        for (t, cache) in caches.iter().enumerate().rev() {
            let (dx, dh_prev) = self.step_backward(cache, &dh, grads);
            dxs[t] = dx;
            dh = dh_prev;
        }
        (dxs, dh)
    }
}

impl Module for GruCell {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}
