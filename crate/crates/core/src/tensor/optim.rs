//! Named parameter storage, Adam, and Polyak-averaged shadow parameters.

use rand::Rng;

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone)]
struct Param {
    name: String,
    value: Tensor,
}

/// Ordered collection of named trainable tensors.
#[derive(Default, Clone)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    /// Uniform fan-in init: U(-s, s) with s = sqrt(1 / fan_in).
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let s = (1.0 / fan_in.max(1) as f32).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-s..s)).collect();
        self.add(name, Tensor::new(shape, data).expect("shape/data agree"))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Adam constants. The learning rate default follows the training setup;
/// the remaining constants are the usual ones.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state: first/second moment per parameter plus the step counter.
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let m = store.ids().map(|id| Tensor::zeros(store.get(id).shape().to_vec())).collect();
        let v = store.ids().map(|id| Tensor::zeros(store.get(id).shape().to_vec())).collect();
        Adam { config, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over every parameter in the store.
    /// Every store parameter must have been registered on the graph that
    /// produced `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.config.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.config.beta2.powi(self.step as i32);
        for id in store.ids() {
            let g = grads.param(id, store.get(id).len()).ok_or_else(|| {
                Error::Config(format!("missing gradient for parameter {}", store.name(id)))
            })?;
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.config.beta1 * m[i] + (1.0 - self.config.beta1) * g[i];
                v[i] = self.config.beta2 * v[i] + (1.0 - self.config.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.config.lr * m_hat / (v_hat.sqrt() + self.config.eps);
            }
        }
        Ok(())
    }

    pub(crate) fn state_tensors(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore(config: AdamConfig, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Self {
        Adam { config, step, m, v }
    }
}

/// Exponential moving average of the parameters, used for evaluation.
pub struct Polyak {
    pub decay: f32,
    shadow: Vec<Tensor>,
    swapped: bool,
}

impl Polyak {
    /// Shadow starts as a copy of the live parameters.
    pub fn new(store: &ParamStore, decay: f32) -> Self {
        let shadow = store.ids().map(|id| store.get(id).clone()).collect();
        Polyak { decay, shadow, swapped: false }
    }

    /// shadow <- decay * shadow + (1 - decay) * live, per parameter.
    pub fn update(&mut self, store: &ParamStore) {
        assert!(!self.swapped, "polyak update while swapped in for evaluation");
        for id in store.ids() {
            let live = store.get(id).data();
            let sh = self.shadow[id.0].data_mut();
            for i in 0..live.len() {
                sh[i] = self.decay * sh[i] + (1.0 - self.decay) * live[i];
            }
        }
    }

    /// Exchange live and shadow parameters (call once before and once after
    /// evaluation).
    pub fn swap(&mut self, store: &mut ParamStore) {
        for id in store.ids() {
            std::mem::swap(store.get_mut(id), &mut self.shadow[id.0]);
        }
        self.swapped = !self.swapped;
    }

    /// Overwrite the shadow with the live parameters.
    pub fn sync(&mut self, store: &ParamStore) {
        assert!(!self.swapped, "polyak sync while swapped in for evaluation");
        for id in store.ids() {
            self.shadow[id.0] = store.get(id).clone();
        }
    }

    pub fn is_swapped(&self) -> bool {
        self.swapped
    }

    pub(crate) fn shadow_tensors(&self) -> &[Tensor] {
        &self.shadow
    }

    pub(crate) fn restore(decay: f32, shadow: Vec<Tensor>) -> Self {
        Polyak { decay, shadow, swapped: false }
    }
}
