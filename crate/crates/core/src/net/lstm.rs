use super::ops::{gemm, sigmoid};
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::rng::Rng;

/// Single-layer LSTM with gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    n: usize,
    x: Vec<f32>,
    /// Post-activation gates, `n × 4H`.
    gates: Vec<f32>,
    c: Vec<f32>,
    /// Hidden states `h_1..h_n`, `n × H`.
    pub h: Vec<f32>,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let a = 1.0 / (hidden as f32).sqrt();
        let w_x = store.add(format!("{name}.w_x"), &[4 * hidden, input], Init::Uniform(a), rng);
        let w_h = store.add(format!("{name}.w_h"), &[4 * hidden, hidden], Init::Uniform(a), rng);
        let b = store.add(format!("{name}.b"), &[4 * hidden], Init::Zeros, rng);
        // Forget-gate bias starts at 1.
        store.get_mut(b)[hidden..2 * hidden].fill(1.0);
        Self {
            input,
            hidden,
            w_x,
            w_h,
            b,
        }
    }

    /// Runs over `n` steps of `x` (`n × input`), from zero state.
    pub fn forward(&self, store: &ParamStore, x: &[f32], n: usize) -> LstmCache {
        let (hd, g4) = (self.hidden, 4 * self.hidden);
        let mut pre = vec![0.0; n * g4];
        for t in 0..n {
            pre[t * g4..(t + 1) * g4].copy_from_slice(store.get(self.b));
        }
        gemm(n, self.input, g4, x, false, store.get(self.w_x), true, 1.0, &mut pre);

        let w_h = store.get(self.w_h);
        let mut gates = vec![0.0; n * g4];
        let mut c = vec![0.0; n * hd];
        let mut h = vec![0.0; n * hd];
        let mut h_prev = vec![0.0; hd];
        let mut c_prev = vec![0.0; hd];
        for t in 0..n {
            let z = &mut pre[t * g4..(t + 1) * g4];
            gemm(g4, hd, 1, w_h, false, &h_prev, false, 1.0, z);
            let gt = &mut gates[t * g4..(t + 1) * g4];
            for j in 0..hd {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hd + j]);
                let g = z[2 * hd + j].tanh();
                let o = sigmoid(z[3 * hd + j]);
                gt[j] = i;
                gt[hd + j] = f;
                gt[2 * hd + j] = g;
                gt[3 * hd + j] = o;
                let ct = f * c_prev[j] + i * g;
                c[t * hd + j] = ct;
                h[t * hd + j] = o * ct.tanh();
            }
            h_prev.copy_from_slice(&h[t * hd..(t + 1) * hd]);
            c_prev.copy_from_slice(&c[t * hd..(t + 1) * hd]);
        }
        LstmCache {
            n,
            x: x.to_vec(),
            gates,
            c,
            h,
        }
    }

    /// Backpropagates `dh` (gradient on every hidden state, `n × H`).
    /// Returns the input gradient when `want_dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &LstmCache,
        dh: &[f32],
        want_dx: bool,
    ) -> Option<Vec<f32>> {
        let (n, hd, g4) = (cache.n, self.hidden, 4 * self.hidden);
        let w_h = store.get(self.w_h);
        let mut dz = vec![0.0; n * g4];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for t in (0..n).rev() {
            let gt = &cache.gates[t * g4..(t + 1) * g4];
            let dzt = &mut dz[t * g4..(t + 1) * g4];
            for j in 0..hd {
                let (i, f, g, o) = (gt[j], gt[hd + j], gt[2 * hd + j], gt[3 * hd + j]);
                let ct = cache.c[t * hd + j];
                let tc = ct.tanh();
                let c_prev = if t > 0 { cache.c[(t - 1) * hd + j] } else { 0.0 };
                let dht = dh[t * hd + j] + dh_next[j];
                let dc = dht * o * (1.0 - tc * tc) + dc_next[j];
                dzt[j] = dc * g * i * (1.0 - i);
                dzt[hd + j] = dc * c_prev * f * (1.0 - f);
                dzt[2 * hd + j] = dc * i * (1.0 - g * g);
                dzt[3 * hd + j] = dht * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.fill(0.0);
            gemm(hd, g4, 1, w_h, true, dzt, false, 0.0, &mut dh_next);
        }

        let dwx = grads.slot(self.w_x, g4 * self.input);
        gemm(g4, n, self.input, &dz, true, &cache.x, false, 1.0, dwx);
        if n > 1 {
            let dwh = grads.slot(self.w_h, g4 * hd);
            gemm(g4, n - 1, hd, &dz[g4..], true, &cache.h[..(n - 1) * hd], false, 1.0, dwh);
        }
        let db = grads.slot(self.b, g4);
        for t in 0..n {
            db.iter_mut().zip(&dz[t * g4..(t + 1) * g4]).for_each(|(a, b)| *a += b);
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; n * self.input];
            gemm(n, g4, self.input, &dz, false, store.get(self.w_x), false, 0.0, &mut dx);
            dx
        })
    }
}

impl LstmCache {
    pub fn last_hidden(&self, hidden: usize) -> &[f32] {
        &self.h[(self.n - 1) * hidden..self.n * hidden]
    }
}
