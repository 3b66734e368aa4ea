use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    /// Kaiming-style uniform from the fan-in: `±sqrt(6 / fan_in)`.
    KaimingIn(usize),
    /// Xavier uniform: `±sqrt(6 / (fan_in + fan_out))`.
    Xavier(usize, usize),
}

/// Named trainable variables in deterministic (sorted) order, initialized
/// from a seeded stream so runs are reproducible.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha20Rng,
    device: Device,
    dtype: DType,
}

impl ParamStore {
    pub fn new(seed: u64, device: Device) -> Self {
        Self { vars: BTreeMap::new(), rng: ChaCha20Rng::seed_from_u64(seed), device, dtype: DType::F32 }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Create a named parameter; the name must be unique.
    pub fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidInput(format!("parameter `{name}` already exists")));
        }
        let count: usize = shape.iter().product();
        let data: Vec<f32> = match init {
            Init::Zeros => vec![0.0; count],
            Init::Const(v) => vec![v as f32; count],
            Init::Uniform(b) => {
                (0..count).map(|_| self.rng.random_range(-b as f32..=b as f32)).collect()
            }
            Init::KaimingIn(fan_in) => {
                let b = (6.0 / fan_in as f64).sqrt() as f32;
                (0..count).map(|_| self.rng.random_range(-b..=b)).collect()
            }
            Init::Xavier(fan_in, fan_out) => {
                let b = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                (0..count).map(|_| self.rng.random_range(-b..=b)).collect()
            }
        };
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.vars.values().map(|v| v.as_tensor().elem_count()).sum()
    }

    /// Overwrite a parameter's value in place (checkpoint restore).
    pub fn set_value(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter `{name}`")))?;
        var.set(value)?;
        Ok(())
    }
}
