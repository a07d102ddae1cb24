use super::layers::{Cache, Layer, LayerKind};
use crate::error::{OledError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct NamedLayer {
    pub name: String,
    pub layer: Layer,
}

/// Ordered sequence of layers with a declared per-sample input shape.
#[derive(Clone, Debug)]
pub struct LayerStack {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    layers: Vec<NamedLayer>,
}

/// Activation record of one train-mode forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    kinds: Vec<LayerKind>,
    caches: Vec<Cache>,
    output_shape: Vec<usize>,
}

/// Gradients aligned with [`LayerStack::params`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

impl LayerStack {
    pub fn new(input_shape: &[usize]) -> Self {
        LayerStack {
            input_shape: input_shape.to_vec(),
            output_shape: input_shape.to_vec(),
            layers: Vec::new(),
        }
    }

    /// Appends a layer, checking it accepts the current output shape.
    pub fn push(&mut self, name: impl Into<String>, layer: Layer) -> Result<&mut Self> {
        let name = name.into();
        let out = layer.output_shape(&self.output_shape).map_err(|e| match e {
            OledError::Shape {
                expected, actual, ..
            } => OledError::Shape {
                context: format!("layer '{name}'"),
                expected,
                actual,
            },
            other => other,
        })?;
        if self.layers.iter().any(|l| l.name == name) {
            return Err(OledError::Config(format!("duplicate layer name '{name}'")));
        }
        self.output_shape = out;
        self.layers.push(NamedLayer { name, layer });
        Ok(self)
    }

    pub fn with(mut self, name: impl Into<String>, layer: Layer) -> Result<Self> {
        self.push(name, layer)?;
        Ok(self)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[NamedLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [NamedLayer] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            let first = self.layers.first().map_or("<empty>", |l| l.name.as_str());
            let mut expected = vec![x.shape().first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(OledError::shape(format!("input to layer '{first}'"), &expected, x.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<Tape>)> {
        self.check_input(x)?;
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if train { self.layers.len() } else { 0 });
        let mut cur = x.clone();
        for nl in &self.layers {
            let (y, cache) = nl.layer.forward(&cur, train);
            if let Some(c) = cache {
                caches.push(c);
            }
            cur = y;
        }
        let tape = train.then(|| Tape {
            kinds: self.layers.iter().map(|l| l.layer.kind()).collect(),
            caches,
            output_shape: cur.shape().to_vec(),
        });
        Ok((cur, tape))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, Mode::Infer)?.0)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        let (y, tape) = self.forward(x, Mode::Train)?;
        Ok((y, tape.expect("train mode records a tape")))
    }

    /// Back-propagates `grad_out` through the recorded pass. With
    /// `param_grads == false` only the input gradient is computed.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor, param_grads: bool) -> Result<(Tensor, Gradients)> {
        let kinds: Vec<LayerKind> = self.layers.iter().map(|l| l.layer.kind()).collect();
        if kinds != tape.kinds || tape.caches.len() != self.layers.len() {
            return Err(OledError::Tape(format!(
                "tape covers {} layers, stack has {}",
                tape.caches.len(),
                self.layers.len()
            )));
        }
        if grad_out.shape() != tape.output_shape.as_slice() {
            return Err(OledError::shape("grad_out", &tape.output_shape, grad_out.shape()));
        }
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (nl, cache) in self.layers.iter().zip(&tape.caches).rev() {
            let (gi, pg) = nl.layer.backward(cache, &g, param_grads)?;
            per_layer.push(pg);
            g = gi;
        }
        per_layer.reverse();
        let mut grads = Gradients {
            names: Vec::new(),
            tensors: Vec::new(),
        };
        if param_grads {
            for (nl, pg) in self.layers.iter().zip(per_layer) {
                for (pname, t) in nl.layer.param_names().iter().zip(pg) {
                    grads.names.push(format!("{}/{}", nl.name, pname));
                    grads.tensors.push(t);
                }
            }
        }
        Ok((g, grads))
    }

    /// Folds the batch statistics recorded in `tape` into every batchnorm
    /// layer's running estimates.
    pub fn update_running_stats(&mut self, tape: &Tape) -> Result<()> {
        if tape.caches.len() != self.layers.len() {
            return Err(OledError::Tape("running-stat update from a foreign tape".into()));
        }
        for (nl, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (Layer::BatchNorm(bn), Cache::Norm { batch_mean, batch_var, .. }) = (&mut nl.layer, cache) {
                bn.update_running(batch_mean, batch_var);
            }
        }
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|nl| nl.layer.param_names().iter().map(move |p| format!("{}/{}", nl.name, p)))
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|nl| nl.layer.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|nl| nl.layer.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Every tensor that defines the model: trainable parameters followed by
    /// batchnorm running statistics, each under a `layer/field` name.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self.param_names().into_iter().zip(self.params()).collect();
        for nl in &self.layers {
            for (b, t) in nl.layer.buffers() {
                out.push((format!("{}/{}", nl.name, b), t));
            }
        }
        out
    }

    /// Overwrites the named state tensor; the shape must match.
    pub fn set_state(&mut self, name: &str, value: Tensor) -> Result<()> {
        let (lname, field) = name
            .split_once('/')
            .ok_or_else(|| OledError::Config(format!("malformed state name '{name}'")))?;
        let nl = self
            .layers
            .iter_mut()
            .find(|l| l.name == lname)
            .ok_or_else(|| OledError::Config(format!("unknown layer '{lname}'")))?;
        let names = nl.layer.param_names();
        let slot: Option<&mut Tensor> = match names.iter().position(|p| *p == field) {
            Some(i) => nl.layer.params_mut().into_iter().nth(i),
            None => nl.layer.buffers_mut().into_iter().find(|(b, _)| *b == field).map(|(_, t)| t),
        };
        let slot = slot.ok_or_else(|| OledError::Config(format!("unknown tensor '{name}'")))?;
        if slot.shape() != value.shape() {
            return Err(OledError::shape(name, slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }
}
