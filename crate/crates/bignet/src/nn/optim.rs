//! Adam with bias correction, a cosine learning-rate schedule, and the
//! exponential moving average used for the target network.

use std::collections::HashMap;

use indexmap::IndexMap;
use ndarray::Array2;

use crate::nn::params::ParamStore;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HashMap<String, Array2<f64>>,
    v: HashMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// One update over every named gradient; `lr_scale` multiplies the base
    /// rate (used by the cosine schedule).
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &IndexMap<String, Array2<f64>>,
        lr_scale: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let lr = self.lr * lr_scale;
        for (name, g) in grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            *m *= self.beta1;
            *m += &(g * (1.0 - self.beta1));
            *v *= self.beta2;
            ndarray::Zip::from(&mut *v).and(g).for_each(|vv, &gv| {
                *vv += (1.0 - self.beta2) * gv * gv;
            });
            let param = store.get_mut(name);
            ndarray::Zip::from(param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &mv, &vv| {
                    let m_hat = mv / bc1;
                    let v_hat = vv / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// Cosine decay from 1 at epoch 0 to ~0 at `max_epochs`.
pub fn cosine_lr_scale(epoch: usize, max_epochs: usize) -> f64 {
    if max_epochs == 0 {
        return 1.0;
    }
    let frac = (epoch as f64 / max_epochs as f64).min(1.0);
    0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Polyak averaging of the target parameters toward the online ones:
/// `target <- tau * target + (1 - tau) * online`, elementwise, for every
/// tensor the two stores share (they must have identical layouts).
pub fn ema_update(target: &mut ParamStore, online: &ParamStore, tau: f64) {
    assert!((0.0..=1.0).contains(&tau), "tau must be in [0, 1]");
    for (name, t) in target.iter_mut() {
        let o = online.get(name);
        assert_eq!(t.dim(), o.dim(), "EMA shape mismatch for {name}");
        ndarray::Zip::from(t).and(o).for_each(|tv, &ov| {
            *tv = tau * *tv + (1.0 - tau) * ov;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adam_minimizes_a_quadratic() {
        // f(w) = |w - c|^2 has gradient 2(w - c).
        let c = array![[3.0, -2.0]];
        let mut store = ParamStore::new();
        store.init_zeros("w", 1, 2);
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let g = (store.get("w") - &c) * 2.0;
            let mut grads = IndexMap::new();
            grads.insert("w".to_string(), g);
            opt.step(&mut store, &grads, 1.0);
        }
        let w = store.get("w");
        assert!((w[(0, 0)] - 3.0).abs() < 1e-3);
        assert!((w[(0, 1)] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn adam_first_step_has_unit_magnitude_times_lr() {
        // With bias correction, the very first Adam step is lr * sign(g).
        let mut store = ParamStore::new();
        store.init_const("w", 1, 2, 1.0);
        let mut opt = Adam::new(0.1);
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), array![[0.5, -4.0]]);
        opt.step(&mut store, &grads, 1.0);
        let w = store.get("w");
        assert!((w[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((w[(0, 1)] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert!((cosine_lr_scale(0, 100) - 1.0).abs() < 1e-12);
        assert!((cosine_lr_scale(50, 100) - 0.5).abs() < 1e-12);
        assert!(cosine_lr_scale(100, 100).abs() < 1e-12);
        assert!(cosine_lr_scale(200, 100).abs() < 1e-12);
    }

    #[test]
    fn ema_follows_the_closed_form() {
        // After k updates against a fixed online value o from start t0:
        // target = tau^k * t0 + (1 - tau^k) * o.
        let tau = 0.9_f64;
        let mut target = ParamStore::new();
        target.init_const("w", 1, 1, 5.0);
        let mut online = ParamStore::new();
        online.init_const("w", 1, 1, 1.0);
        for k in 1..=20 {
            ema_update(&mut target, &online, tau);
            let expected = tau.powi(k) * 5.0 + (1.0 - tau.powi(k)) * 1.0;
            assert!((target.get("w")[(0, 0)] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_extremes() {
        let mut target = ParamStore::new();
        target.init_const("w", 1, 1, 5.0);
        let mut online = ParamStore::new();
        online.init_const("w", 1, 1, 1.0);
        ema_update(&mut target, &online, 1.0); // frozen
        assert_eq!(target.get("w")[(0, 0)], 5.0);
        ema_update(&mut target, &online, 0.0); // full copy
        assert_eq!(target.get("w")[(0, 0)], 1.0);
    }
}
