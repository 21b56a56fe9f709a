//! Adam with bias correction and per-parameter-group learning-rate
//! scales (the content mapping trains at 1/100 of the base rate).

use crate::config::OptConfig;
use crate::nn::Param;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// Optimizer state keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new() -> Self {
        Adam::default()
    }

    /// Learning-rate scale for a parameter, by name prefix.
    pub fn lr_scale(name: &str, opt: &OptConfig) -> f64 {
        if name.starts_with("mapping.") {
            opt.mapping_lr_scale
        } else if name.starts_with("motion.") {
            opt.motion_lr_scale
        } else {
            1.0
        }
    }

    /// One update for a single parameter buffer.
    #[allow(clippy::needless_range_loop)]
    pub fn step_param(&mut self, param: &mut Param, grad: &[f64], opt: &OptConfig) {
        assert_eq!(param.values.len(), grad.len(), "grad shape mismatch");
        let entry = self.state.entry(param.name.clone()).or_insert_with(|| Moments {
            m: vec![0.0; grad.len()],
            v: vec![0.0; grad.len()],
            step: 0,
        });
        entry.step += 1;
        let t = entry.step as i32;
        let lr = opt.lr * Self::lr_scale(&param.name, opt);
        let bc1 = 1.0 - opt.beta1.powi(t);
        let bc2 = 1.0 - opt.beta2.powi(t);
        for i in 0..grad.len() {
            let g = grad[i];
            entry.m[i] = opt.beta1 * entry.m[i] + (1.0 - opt.beta1) * g;
            entry.v[i] = opt.beta2 * entry.v[i] + (1.0 - opt.beta2) * g * g;
            let m_hat = entry.m[i] / bc1;
            let v_hat = entry.v[i] / bc2;
            param.values[i] -= lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
}
