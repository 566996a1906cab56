use super::ops::gemm;
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::rng::Rng;

/// Additive global attention over hidden states with the last state as
/// query: `e_t = vᵀ tanh(W_q h_n + W_k h_t)`, `α = softmax(e)`,
/// `context = Σ α_t h_t`.
#[derive(Debug, Clone)]
pub struct GlobalAttention {
    pub hidden: usize,
    pub units: usize,
    w_q: ParamId,
    w_k: ParamId,
    v: ParamId,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    n: usize,
    h: Vec<f32>,
    u: Vec<f32>,
    pub alpha: Vec<f32>,
}

impl GlobalAttention {
    pub fn new(store: &mut ParamStore, name: &str, hidden: usize, units: usize, rng: &mut Rng) -> Self {
        let a = 1.0 / (hidden as f32).sqrt();
        Self {
            hidden,
            units,
            w_q: store.add(format!("{name}.w_q"), &[units, hidden], Init::Uniform(a), rng),
            w_k: store.add(format!("{name}.w_k"), &[units, hidden], Init::Uniform(a), rng),
            v: store.add(format!("{name}.v"), &[units], Init::Uniform(1.0 / (units as f32).sqrt()), rng),
        }
    }

    pub fn forward(&self, store: &ParamStore, h: &[f32], n: usize) -> (Vec<f32>, AttentionCache) {
        let (hd, a) = (self.hidden, self.units);
        let query = &h[(n - 1) * hd..n * hd];
        let mut q = vec![0.0; a];
        gemm(a, hd, 1, store.get(self.w_q), false, query, false, 0.0, &mut q);
        // keys: n × a
        let mut u = vec![0.0; n * a];
        gemm(n, hd, a, h, false, store.get(self.w_k), true, 0.0, &mut u);
        let v = store.get(self.v);
        let mut e = vec![0.0f32; n];
        for t in 0..n {
            let row = &mut u[t * a..(t + 1) * a];
            for j in 0..a {
                row[j] = (row[j] + q[j]).tanh();
            }
            e[t] = row.iter().zip(v).map(|(x, y)| x * y).sum();
        }
        let alpha = softmax_f32(&e);
        let mut ctx = vec![0.0; hd];
        for t in 0..n {
            for j in 0..hd {
                ctx[j] += alpha[t] * h[t * hd + j];
            }
        }
        (
            ctx,
            AttentionCache {
                n,
                h: h.to_vec(),
                u,
                alpha,
            },
        )
    }

    /// Returns the gradient with respect to every hidden state (`n × H`).
    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &AttentionCache, dctx: &[f32]) -> Vec<f32> {
        let (n, hd, a) = (cache.n, self.hidden, self.units);
        let h = &cache.h;
        let mut dh = vec![0.0; n * hd];
        let mut dalpha = vec![0.0f32; n];
        for t in 0..n {
            let ht = &h[t * hd..(t + 1) * hd];
            dalpha[t] = ht.iter().zip(dctx).map(|(x, y)| x * y).sum();
            for j in 0..hd {
                dh[t * hd + j] += cache.alpha[t] * dctx[j];
            }
        }
        let dot: f32 = cache.alpha.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
        let de: Vec<f32> = (0..n).map(|t| cache.alpha[t] * (dalpha[t] - dot)).collect();

        let v = store.get(self.v);
        let mut du = vec![0.0; n * a];
        let mut dv = vec![0.0; a];
        let mut dq = vec![0.0; a];
        for t in 0..n {
            let ut = &cache.u[t * a..(t + 1) * a];
            for j in 0..a {
                dv[j] += de[t] * ut[j];
                let g = de[t] * v[j] * (1.0 - ut[j] * ut[j]);
                du[t * a + j] = g;
                dq[j] += g;
            }
        }
        grads.slot(self.v, a).iter_mut().zip(&dv).for_each(|(x, y)| *x += y);

        let query = &h[(n - 1) * hd..n * hd];
        gemm(a, 1, hd, &dq, false, query, false, 1.0, grads.slot(self.w_q, a * hd));
        gemm(a, n, hd, &du, true, h, false, 1.0, grads.slot(self.w_k, a * hd));

        let mut dquery = vec![0.0; hd];
        gemm(hd, a, 1, store.get(self.w_q), true, &dq, false, 0.0, &mut dquery);
        for j in 0..hd {
            dh[(n - 1) * hd + j] += dquery[j];
        }
        gemm(n, a, hd, &du, false, store.get(self.w_k), false, 1.0, &mut dh);
        dh
    }
}

pub fn softmax_f32(e: &[f32]) -> Vec<f32> {
    let m = e.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let ex: Vec<f32> = e.iter().map(|x| (x - m).exp()).collect();
    let s: f32 = ex.iter().sum();
    ex.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn layer(hidden: usize, units: usize) -> (ParamStore, GlobalAttention) {
        let mut store = ParamStore::default();
        let mut rng = Rng::seed_from_u64(1);
        let att = GlobalAttention::new(&mut store, "att", hidden, units, &mut rng);
        (store, att)
    }

    #[test]
    fn single_step_returns_that_state() {
        let (store, att) = layer(3, 4);
        let h = [0.3, -0.2, 0.9];
        let (ctx, cache) = att.forward(&store, &h, 1);
        assert_eq!(cache.alpha, vec![1.0]);
        assert_eq!(ctx, h.to_vec());
    }

    #[test]
    fn identical_states_get_uniform_weights() {
        let (store, att) = layer(2, 3);
        let h: Vec<f32> = [0.5, -1.0].repeat(4);
        let (ctx, cache) = att.forward(&store, &h, 4);
        assert!(cache.alpha.iter().all(|&a| (a - 0.25).abs() < 1e-6));
        assert!((ctx[0] - 0.5).abs() < 1e-6 && (ctx[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn hand_sized_case_matches_closed_form() {
        let (mut store, att) = layer(2, 2);
        store.get_mut(att.w_q).copy_from_slice(&[0.5, 0.0, 0.0, 0.5]);
        store.get_mut(att.w_k).copy_from_slice(&[1.0, -1.0, 0.5, 0.5]);
        store.get_mut(att.v).copy_from_slice(&[1.0, 2.0]);
        let h = [1.0f32, 0.0, 0.0, 1.0];
        let (ctx, cache) = att.forward(&store, &h, 2);
        // q = W_q h_2 = [0, 0.5]; k_1 = [1, 0.5]; k_2 = [-1, 0.5].
        let e1 = 1.0f64.tanh() + 2.0 * 1.0f64.tanh();
        let e2 = (-1.0f64).tanh() + 2.0 * 1.0f64.tanh();
        let a1 = e1.exp() / (e1.exp() + e2.exp());
        assert!((cache.alpha[0] as f64 - a1).abs() < 1e-6);
        assert!((ctx[0] as f64 - a1).abs() < 1e-6);
        assert!((ctx[1] as f64 - (1.0 - a1)).abs() < 1e-6);
    }
}
