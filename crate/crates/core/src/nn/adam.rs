use serde::{Deserialize, Serialize};

use super::network::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment buffers for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamSet>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.named_slices().iter().map(|(_, s)| s.len()).collect();
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Nothing is modified when the gradients contain a non-finite value or
    /// shapes disagree.
    pub fn step<P: ParamSet, G: ParamSet>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let named = grads.named_slices();
        if named.len() != self.first.len()
            || named.iter().zip(&self.first).any(|((_, g), m)| g.len() != m.len())
        {
            return Err(Error::Shape(
                "gradient buffers do not match optimizer state".into(),
            ));
        }
        if let Some((name, _)) = named
            .iter()
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical(format!("non-finite gradient in {name}")));
        }
        let mut slices = params.slices_mut();
        if slices.len() != named.len()
            || slices.iter().zip(&named).any(|(p, (_, g))| p.len() != g.len())
        {
            return Err(Error::Shape(
                "parameter buffers do not match optimizer state".into(),
            ));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for (((p, (_, g)), m), v) in slices
            .iter_mut()
            .zip(&named)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
