use crate::nn::{Parameter, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn for_param(param: &Parameter<T>) -> Self {
        AdamState {
            m: vec![T::zero(); param.len()],
            v: vec![T::zero(); param.len()],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; the gradient is zeroed afterwards.
pub fn adam_step<T: Real>(param: &mut Parameter<T>, state: &mut AdamState<T>, cfg: &AdamConfig) {
    assert_eq!(
        state.m.len(),
        param.len(),
        "Adam state does not match {}",
        param.name
    );
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let corr1 = T::lit(1.0 - cfg.beta1.powi(t));
    let corr2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    for (((w, g), m), v) in param
        .value
        .iter_mut()
        .zip(param.grad.iter_mut())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + one_b1 * *g;
        *v = b2 * *v + one_b2 * *g * *g;
        let m_hat = *m / corr1;
        let v_hat = *v / corr2;
        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        *g = T::zero();
    }
}
