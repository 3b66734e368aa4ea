//! Adam with externally owned state so checkpoints can serialize and restore
//! the moments exactly.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;
use crate::nn::ParamStore;

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Update count, used for bias correction; persisted in checkpoints.
    pub t: usize,
    m: BTreeMap<String, Var>,
    v: BTreeMap<String, Var>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Result<Self> {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, var) in store.iter() {
            m.insert(name.clone(), Var::from_tensor(&var.as_tensor().zeros_like()?)?);
            v.insert(name.clone(), Var::from_tensor(&var.as_tensor().zeros_like()?)?);
        }
        Ok(Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m, v })
    }

    /// One update with the given learning rate. Parameters without a gradient
    /// in this step are left untouched.
    pub fn step(&mut self, store: &ParamStore, grads: &GradStore, lr: f64) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, var) in store.iter() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let m = &self.m[name];
            let v = &self.v[name];
            let m_next = ((m.as_tensor() * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            let v_next = ((v.as_tensor() * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&m_next * (1.0 / c1))?;
            let v_hat = (&v_next * (1.0 / c2))?;
            let update = (m_hat * lr)?.div(&(v_hat.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor() - update)?)?;
            m.set(&m_next)?;
            v.set(&v_next)?;
        }
        Ok(())
    }

    /// Moment tensors for checkpointing, keyed `optim.m.*` / `optim.v.*`.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (name, var) in &self.m {
            out.push((format!("optim.m.{name}"), var.as_tensor().clone()));
        }
        for (name, var) in &self.v {
            out.push((format!("optim.v.{name}"), var.as_tensor().clone()));
        }
        out
    }

    pub fn restore(&mut self, t: usize, mut lookup: impl FnMut(&str) -> Option<Tensor>) -> Result<()> {
        self.t = t;
        for (name, var) in &self.m {
            if let Some(tensor) = lookup(&format!("optim.m.{name}")) {
                var.set(&tensor)?;
            }
        }
        for (name, var) in &self.v {
            if let Some(tensor) = lookup(&format!("optim.v.{name}")) {
                var.set(&tensor)?;
            }
        }
        Ok(())
    }
}
