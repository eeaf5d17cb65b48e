use super::{Module, Scalar};

/// Hyperparameters of the adaptive-moment optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moment estimates.
///
/// Moment buffers follow the module's canonical parameter order and are
/// allocated lazily on the first step.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step<M: Module<T>>(&mut self, module: &mut M) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let init = self.m.is_empty();
        let mut slot = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        module.visit_params_mut(&mut |p, g| {
            if init {
                ms.push(vec![T::zero(); p.len()]);
                vs.push(vec![T::zero(); p.len()]);
            }
            let (m, v) = (&mut ms[slot], &mut vs[slot]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
            g.fill(T::zero());
            slot += 1;
        });
    }
}
