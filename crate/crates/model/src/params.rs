use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use grounder_autodiff::{Tape, Tensor, Var};

use crate::error::{ModelError, Result};

/// Index of a named parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered, named parameter tensors with a parallel gradient buffer.
/// Registration order is the canonical order for the optimizer and the
/// checkpoint format.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    grads: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.tensors.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.grads.push(Tensor::zeros(tensor.shape()));
        self.tensors.push(tensor);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn set_tensor(&mut self, id: ParamId, t: Tensor) {
        assert_eq!(self.tensors[id.0].shape(), t.shape(), "parameter shape change");
        self.tensors[id.0] = t;
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Optimizer view: parallel parameter and gradient slices.
    pub fn params_and_grads(&mut self) -> (&mut [Tensor], &[Tensor]) {
        (&mut self.tensors, &self.grads)
    }

    /// Register every parameter as a requires-grad leaf on a fresh tape.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect();
        Bound { vars }
    }

    /// Pull leaf gradients off a tape back into the store's accumulators.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &Bound) {
        for (i, var) in bound.vars.iter().enumerate() {
            if let Some(g) = tape.grad(*var) {
                for (acc, v) in self.grads[i].data_mut().iter_mut().zip(g.data()) {
                    *acc += v;
                }
            }
        }
    }

    /// Replace tensors from `(name, tensor)` pairs; names and shapes must
    /// match exactly.
    pub fn load_entries(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, checkpoint holds {}",
                self.tensors.len(),
                entries.len()
            )));
        }
        for (name, tensor) in entries {
            let &i = self
                .index
                .get(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unknown parameter {name:?}")))?;
            if self.tensors[i].shape() != tensor.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "shape mismatch for {name:?}: model {:?}, checkpoint {:?}",
                    self.tensors[i].shape(),
                    tensor.shape()
                )));
            }
            self.tensors[i] = tensor;
        }
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles for every parameter, in store order.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

// ── initialization helpers ──────────────────────────────────────────────

pub(crate) struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    pub fn xavier(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let t = Tensor::from_fn_rng(&[rows, cols], self.rng, |r| r.gen_range(-bound..bound));
        self.store.register(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.store.register(name, Tensor::zeros(shape))
    }

    pub fn full(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.store.register(name, Tensor::full(shape, value))
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        // Box-Muller keeps us off rand_distr for one call site
        let t = Tensor::from_fn_rng(shape, self.rng, |r| {
            let u1: f64 = r.gen_range(f64::EPSILON..1.0);
            let u2: f64 = r.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        self.store.register(name, t)
    }
}
