use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::policy::{PolicyGrad, PolicyParams};

/// AdamW moments and step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One AdamW ascent step on the objective whose gradient is `grad`. Weight
/// decay is decoupled: `θ ← θ - lr·wd·θ + lr·m̂/(√v̂ + eps)`.
pub fn update_params(
    params: &PolicyParams,
    grad: &PolicyGrad,
    cfg: &TrainConfig,
    state: &AdamState,
) -> (PolicyParams, AdamState) {
    let mut next = params.clone();
    let mut st = state.clone();
    if st.m.len() != grad.theta.len() {
        st = AdamState::new(grad.theta.len());
    }
    st.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bc1 = 1.0 - b1.powi(st.t as i32);
    let bc2 = 1.0 - b2.powi(st.t as i32);
    let lr = cfg.learning_rate;
    for (i, theta) in next.theta_mut().iter_mut().enumerate() {
        let g = grad.theta[i];
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
        let m_hat = st.m[i] / bc1;
        let v_hat = st.v[i] / bc2;
        *theta -= lr * cfg.weight_decay * *theta;
        *theta += lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    next.version = params.version + 1;
    (next, st)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(p: &PolicyParams) -> f64 {
        p.theta().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let p = PolicyParams::init(4, 3, 1);
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let g = PolicyGrad::zeros_like(&p);
        let (q, st) = update_params(&p, &g, &cfg, &AdamState::new(g.theta.len()));
        assert_eq!(p.theta(), q.theta());
        assert_eq!(st.t, 1);
    }

    #[test]
    fn decay_shrinks_norm() {
        let mut p = PolicyParams::init(4, 3, 1);
        p.m_mut().iter_mut().for_each(|m| *m = 1.0);
        let cfg = TrainConfig { weight_decay: 0.1, learning_rate: 0.1, ..TrainConfig::default() };
        let g = PolicyGrad::zeros_like(&p);
        let (q, _) = update_params(&p, &g, &cfg, &AdamState::new(g.theta.len()));
        assert!(norm(&q) < norm(&p));
    }

    #[test]
    fn ascends_along_gradient() {
        let p = PolicyParams::zeros(2, 2);
        let mut g = PolicyGrad::zeros_like(&p);
        g.theta[0] = 3.0;
        g.theta[1] = -0.5;
        let cfg = TrainConfig { weight_decay: 0.0, learning_rate: 0.01, ..TrainConfig::default() };
        let (q, _) = update_params(&p, &g, &cfg, &AdamState::new(g.theta.len()));
        // first Adam step moves each coordinate by ~lr in the gradient's sign
        assert!((q.theta()[0] - 0.01).abs() < 1e-8);
        assert!((q.theta()[1] + 0.01).abs() < 1e-8);
    }
}
