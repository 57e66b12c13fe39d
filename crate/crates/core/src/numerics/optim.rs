use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone)]
struct AdamState {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// First-order optimizer over a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    adam: Option<AdamState>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        let adam = (kind == OptimizerKind::Adam).then(|| AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        });
        Self { kind, lr, step: 0, adam }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter and clears the
    /// gradients. Fails without touching anything if a trainable parameter
    /// has no gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NumericsError> {
        for (_, name, t) in store.iter() {
            if t.requires_grad() && t.grad().is_none() {
                return Err(NumericsError::MissingGrad(name.to_string()));
            }
        }
        self.step += 1;
        let lr = self.lr;
        let t = self.step as i32;
        match &mut self.adam {
            None => {
                for (_, p) in store.tensors_mut() {
                    if !p.requires_grad() {
                        continue;
                    }
                    let g = p.grad().unwrap().to_vec();
                    p.values_mut().iter_mut().zip(g).for_each(|(v, g)| *v -= lr * g);
                    p.clear_grad();
                }
            }
            Some(state) => {
                if state.m.is_empty() {
                    for (_, _, p) in store.iter() {
                        state.m.push(vec![0.0; p.len()]);
                        state.v.push(vec![0.0; p.len()]);
                    }
                }
                let bc1 = 1.0 - state.beta1.powi(t);
                let bc2 = 1.0 - state.beta2.powi(t);
                for (i, (_, p)) in store.tensors_mut().enumerate() {
                    if !p.requires_grad() {
                        continue;
                    }
                    let g = p.grad().unwrap().to_vec();
                    let (m, v) = (&mut state.m[i], &mut state.v[i]);
                    for (j, (val, g)) in p.values_mut().iter_mut().zip(g).enumerate() {
                        m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
                        v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        *val -= lr * mhat / (vhat.sqrt() + state.eps);
                    }
                    p.clear_grad();
                }
            }
        }
        Ok(())
    }
}
