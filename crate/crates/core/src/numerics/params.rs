use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NumericsError, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of learnable tensors, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `tensor` under `name`. Names must be unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor.with_requires_grad(true));
        self.index.insert(name.to_string(), id);
        id
    }

    /// Uniform initialization in `[-k, k]` with `k = 1/sqrt(fan_in)`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let k = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len: usize = shape.iter().product();
        let values = (0..len).map(|_| rng.gen_range(-k..=k)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), values).expect("uniform: bad shape"))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    pub fn set_requires_grad_prefix(&mut self, prefix: &str, flag: bool) {
        for (name, t) in self.tensors_mut() {
            if name.starts_with(prefix) {
                t.set_requires_grad(flag);
            }
        }
    }

    /// Stores gradients produced by a backward pass. Every trainable
    /// parameter receives a gradient; ones the loss did not reach get zeros.
    pub fn apply_grads(&mut self, grads: Gradients) {
        let mut grads = grads.0;
        grads.resize(self.tensors.len(), None);
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            if !t.requires_grad() {
                t.clear_grad();
                continue;
            }
            let g = g.unwrap_or_else(|| vec![0.0; t.len()]);
            t.set_grad(g).expect("gradient shape mismatch");
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.clear_grad();
        }
    }

    /// Global L2 norm over all present gradients.
    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for t in &mut self.tensors {
                if let Some(g) = t.grad_mut() {
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        norm
    }

    /// Copies values from `other` for every name present in both stores.
    /// Shapes must agree.
    pub fn copy_matching(&mut self, other: &ParamStore, prefix_from: &str, prefix_to: &str) -> Result<usize, NumericsError> {
        let mut copied = 0;
        for (_, name, tensor) in other.iter() {
            let Some(rest) = name.strip_prefix(prefix_from) else {
                continue;
            };
            let target = format!("{prefix_to}{rest}");
            if let Some(id) = self.id(&target) {
                let dst = &mut self.tensors[id.0];
                if dst.shape() != tensor.shape() {
                    return Err(NumericsError::ShapeMismatch {
                        name: target,
                        expected: dst.shape().to_vec(),
                        found: tensor.shape().to_vec(),
                    });
                }
                dst.values_mut().copy_from_slice(tensor.values());
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Overwrites every value with the same-named tensor of `other`. Both
    /// stores must hold exactly the same names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), NumericsError> {
        for (_, name, _) in other.iter() {
            if self.id(name).is_none() {
                return Err(NumericsError::UnexpectedParam(name.to_string()));
            }
        }
        for (name, dst) in self.names.iter().zip(self.tensors.iter_mut()) {
            let Some(id) = other.id(name) else {
                return Err(NumericsError::MissingParam(name.clone()));
            };
            let src = other.get(id);
            if src.shape() != dst.shape() {
                return Err(NumericsError::ShapeMismatch {
                    name: name.clone(),
                    expected: dst.shape().to_vec(),
                    found: src.shape().to_vec(),
                });
            }
            dst.values_mut().copy_from_slice(src.values());
        }
        Ok(())
    }
}

/// Per-parameter gradients from one backward pass, indexed by [`ParamId`].
#[derive(Debug, Clone, Default)]
pub struct Gradients(pub(crate) Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0.get(id.0).and_then(|g| g.as_deref())
    }
}
