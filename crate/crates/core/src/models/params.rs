use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// A named tensor owned by a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    /// Slash-separated path, e.g. `layer3/fconv/weight`.
    pub name: String,
    pub tensor: Tensor<T>,
    /// Batch-norm running statistics are stored here too, untrainable.
    pub trainable: bool,
}

/// Ordered parameter collection; indices are stable for a model's lifetime.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

/// Tape handles for every parameter of a store, by index.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> usize {
        self.params.push(Parameter { name: name.into(), tensor, trainable });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, index: usize) -> &Parameter<T> {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Parameter<T> {
        &mut self.params[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter<T>> {
        self.index_of(name)
            .map(|i| &self.params[i])
            .ok_or_else(|| Error::data(format!("no parameter named '{name}'")))
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.tensor.len()).sum()
    }

    /// Registers every parameter as a tape leaf. Trainable parameters track
    /// gradients when `track_grad` is set.
    pub fn bind(&self, tape: &mut Tape<T>, track_grad: bool) -> BoundParams {
        let vars = self.params.iter().map(|p| tape.leaf(p.tensor.clone(), track_grad && p.trainable)).collect();
        BoundParams { vars }
    }
}
