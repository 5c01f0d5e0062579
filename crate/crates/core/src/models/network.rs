use rand_distr::{Distribution, Normal};

use super::config::{Architecture, FreqActivation, ModelConfig};
use super::params::{BoundParams, ParamStore};
use crate::autodiff::{BatchNormMode, BatchStats, Tape, Var};
use crate::error::{Error, Result};
use crate::fourier::Domain;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Shape, Tensor};

/// Whether batch norm uses batch statistics or the stored running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Freq,
    Relu,
    Identity,
}

/// Parameter indices of one batch-norm layer.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormParams {
    pub scale: usize,
    pub shift: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

/// `activation(conv(bn(x)))`, optionally followed by a tiled skip connection.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub name: String,
    pub domain: Domain,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub weight: usize,
    pub bias: usize,
    pub bn: Option<BatchNormParams>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    /// Mixing logits for the frequency and image streams, then one block per
    /// stream.
    Interleaved { mix_freq: usize, mix_image: usize, freq: ConvBlock, image: ConvBlock },
    Alternating { freq: ConvBlock, image: ConvBlock },
    Single(ConvBlock),
}

/// A batch-norm running-statistics update produced by a training forward.
#[derive(Debug, Clone)]
pub struct BnUpdate<T> {
    pub running_mean: usize,
    pub running_var: usize,
    pub stats: BatchStats<T>,
}

/// Network outputs on the tape: predicted k-space and its image.
#[derive(Debug, Clone, Copy)]
pub struct Reconstruction {
    pub kspace: Var,
    pub image: Var,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    pub params: ParamStore<T>,
    layers: Vec<Layer>,
    output: ConvBlock,
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    config: &'a ModelConfig,
    rng: rand_chacha::ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn block(&mut self, name: String, domain: Domain, c_in: usize, c_out: usize, final_layer: bool) -> ConvBlock {
        let k = self.config.kernel;
        let bn = (!final_layer).then(|| {
            let affine = Shape::new(1, 1, 1, c_in);
            BatchNormParams {
                scale: self.store.push(format!("{name}/bn/scale"), Tensor::full(affine, T::one()), true),
                shift: self.store.push(format!("{name}/bn/shift"), Tensor::zeros(affine), true),
                running_mean: self.store.push(format!("{name}/bn/running_mean"), Tensor::zeros(affine), false),
                running_var: self.store.push(format!("{name}/bn/running_var"), Tensor::full(affine, T::one()), false),
            }
        });
        let std = (2.0 / (k * k * c_in) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let w = Tensor::from_fn(Shape::new(k, k, c_in, c_out), |_| T::from_f64_lossy(normal.sample(&mut self.rng)));
        let weight = self.store.push(format!("{name}/weight"), w, true);
        let bias = self.store.push(format!("{name}/bias"), Tensor::zeros(Shape::new(1, 1, 1, c_out)), true);
        let activation = match (final_layer, domain, self.config.freq_activation) {
            (true, _, _) => Activation::Identity,
            (false, Domain::Image, _) | (false, Domain::Frequency, FreqActivation::Relu) => Activation::Relu,
            (false, Domain::Frequency, FreqActivation::Custom) => Activation::Freq,
        };
        ConvBlock { name, domain, in_channels: c_in, out_channels: c_out, activation, weight, bias, bn }
    }

    fn logit(&mut self, name: String) -> usize {
        self.store.push(name, Tensor::scalar(T::zero()), true)
    }
}

impl<T: Real> Model<T> {
    /// He-normal weights, zero biases, unit batch-norm scales and zero mixing
    /// logits, all drawn from the `Init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b =
            Builder { store: ParamStore::new(), config: &config, rng: stream_rng(seed, 0, Stream::Init) };
        let (c0, f) = (config.input_channels, config.features);
        let mut layers = Vec::new();
        let n = config.layers;
        match config.architecture {
            Architecture::Interleaved => {
                for i in 0..n {
                    let c_in = if i == 0 { c0 } else { f };
                    let mix_freq = b.logit(format!("layer{i}/mix/freq"));
                    let mix_image = b.logit(format!("layer{i}/mix/image"));
                    let freq = b.block(format!("layer{i}/fconv"), Domain::Frequency, c_in, f, false);
                    let image = b.block(format!("layer{i}/iconv"), Domain::Image, c_in, f, false);
                    layers.push(Layer::Interleaved { mix_freq, mix_image, freq, image });
                }
            }
            Architecture::Alternating => {
                for i in 0..n {
                    let c_in = if i == 0 { c0 } else { f };
                    let freq = b.block(format!("layer{i}/fconv"), Domain::Frequency, c_in, f, false);
                    let image = b.block(format!("layer{i}/iconv"), Domain::Image, f, f, false);
                    layers.push(Layer::Alternating { freq, image });
                }
            }
            Architecture::Frequency | Architecture::Image => {
                let domain =
                    if config.architecture == Architecture::Frequency { Domain::Frequency } else { Domain::Image };
                for i in 0..2 * n {
                    let c_in = if i == 0 { c0 } else { f };
                    layers.push(Layer::Single(b.block(format!("block{i}/conv"), domain, c_in, f, false)));
                }
            }
        }
        let out_domain = if config.architecture == Architecture::Image { Domain::Image } else { Domain::Frequency };
        let output = b.block("output".into(), out_domain, f, c0, true);
        let params = b.store;
        Ok(Model { config, params, layers, output })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params.trainable_count()
    }

    /// Trainable parameter counts grouped by the first path component.
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for p in self.params.iter().filter(|p| p.trainable) {
            let group = p.name.split('/').next().unwrap_or("").to_string();
            match groups.last_mut() {
                Some((g, c)) if *g == group => *c += p.tensor.len(),
                _ => groups.push((group, p.tensor.len())),
            }
        }
        groups
    }

    fn run_block(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        block: &ConvBlock,
        x: Var,
        skip: Option<Var>,
        mode: Mode,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<Var> {
        let mut h = x;
        if let Some(bn) = &block.bn {
            let eps = T::from_f64_lossy(self.config.bn_eps);
            let bn_mode = match mode {
                Mode::Train => BatchNormMode::Train { eps },
                Mode::Eval => BatchNormMode::Eval {
                    mean: self.params.get(bn.running_mean).tensor.data(),
                    var: self.params.get(bn.running_var).tensor.data(),
                    eps,
                },
            };
            let (y, stats) = tape.batch_norm(h, bound.var(bn.scale), bound.var(bn.shift), bn_mode)?;
            if let Some(stats) = stats {
                updates.push(BnUpdate { running_mean: bn.running_mean, running_var: bn.running_var, stats });
            }
            h = y;
        }
        h = tape.conv2d(h, bound.var(block.weight), bound.var(block.bias), self.config.padding)?;
        h = match block.activation {
            Activation::Freq => tape.freq_activation(h),
            Activation::Relu => tape.relu(h),
            Activation::Identity => h,
        };
        match skip {
            Some(s) => tape.add_tiled(h, s),
            None => Ok(h),
        }
    }

    /// Runs the network on corrupted k-space `kspace` (`[b, h, w, 2]`).
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundParams,
        kspace: Var,
        mode: Mode,
    ) -> Result<(Reconstruction, Vec<BnUpdate<T>>)> {
        let shape = tape.shape(kspace);
        if shape.channels() != self.config.input_channels {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {}",
                self.config.input_channels,
                shape.channels()
            )));
        }
        let mut updates = Vec::new();
        let u0 = kspace;
        let v0 = tape.ifft2c(u0)?;
        let out = match self.config.architecture {
            Architecture::Interleaved => {
                let (mut u, mut v) = (u0, v0);
                for layer in &self.layers {
                    let Layer::Interleaved { mix_freq, mix_image, freq, image } = layer else { unreachable!() };
                    let a = tape.sigmoid(bound.var(*mix_freq));
                    let b = tape.sigmoid(bound.var(*mix_image));
                    let v_freq = tape.fft2c(v)?;
                    let u_image = tape.ifft2c(u)?;
                    let u_mix = tape.lerp(u, v_freq, a)?;
                    let v_mix = tape.lerp(v, u_image, b)?;
                    u = self.run_block(tape, bound, freq, u_mix, Some(u0), mode, &mut updates)?;
                    v = self.run_block(tape, bound, image, v_mix, Some(v0), mode, &mut updates)?;
                }
                let k = self.run_block(tape, bound, &self.output, u, None, mode, &mut updates)?;
                Reconstruction { kspace: k, image: tape.ifft2c(k)? }
            }
            Architecture::Alternating => {
                let mut u = u0;
                for layer in &self.layers {
                    let Layer::Alternating { freq, image } = layer else { unreachable!() };
                    let a = self.run_block(tape, bound, freq, u, Some(u0), mode, &mut updates)?;
                    let v = tape.ifft2c(a)?;
                    let b = self.run_block(tape, bound, image, v, Some(v0), mode, &mut updates)?;
                    u = tape.fft2c(b)?;
                }
                let k = self.run_block(tape, bound, &self.output, u, None, mode, &mut updates)?;
                Reconstruction { kspace: k, image: tape.ifft2c(k)? }
            }
            Architecture::Frequency => {
                let mut u = u0;
                for layer in &self.layers {
                    let Layer::Single(block) = layer else { unreachable!() };
                    u = self.run_block(tape, bound, block, u, Some(u0), mode, &mut updates)?;
                }
                let k = self.run_block(tape, bound, &self.output, u, None, mode, &mut updates)?;
                Reconstruction { kspace: k, image: tape.ifft2c(k)? }
            }
            Architecture::Image => {
                let mut v = v0;
                for layer in &self.layers {
                    let Layer::Single(block) = layer else { unreachable!() };
                    v = self.run_block(tape, bound, block, v, Some(v0), mode, &mut updates)?;
                }
                let img = self.run_block(tape, bound, &self.output, v, None, mode, &mut updates)?;
                Reconstruction { kspace: tape.fft2c(img)?, image: img }
            }
        };
        Ok((out, updates))
    }

    /// Folds batch statistics into the running averages.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>]) {
        let m = T::from_f64_lossy(self.config.bn_momentum);
        let keep = T::one() - m;
        for u in updates {
            let mean = self.params.get_mut(u.running_mean).tensor.data_mut();
            for (r, &b) in mean.iter_mut().zip(&u.stats.mean) {
                *r = m * *r + keep * b;
            }
            let var = self.params.get_mut(u.running_var).tensor.data_mut();
            for (r, &b) in var.iter_mut().zip(&u.stats.var) {
                *r = m * *r + keep * b;
            }
        }
    }

    /// Inference without gradients: returns (k-space, image) tensors.
    pub fn predict(&self, kspace: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(kspace.clone());
        let (rec, _) = self.forward(&mut tape, &bound, x, Mode::Eval)?;
        Ok((tape.value(rec.kspace).clone(), tape.value(rec.image).clone()))
    }

    /// Same weights in another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut params = ParamStore::new();
        for p in self.params.iter() {
            params.push(p.name.clone(), p.tensor.cast(), p.trainable);
        }
        Model { config: self.config.clone(), params, layers: self.layers.clone(), output: self.output.clone() }
    }
}

/// `x + relu((x - 1) / 2) + relu(-(x + 1) / 2)`: slope 1.5 above 1, 1 in
/// between, 0.5 below -1.
pub fn custom_freq_activation<T: Real>(x: T) -> T {
    crate::autodiff::freq_activation_value(x)
}

/// `body + skip` with `skip` repeated along channels.
pub fn residual_tile<T: Real>(body: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let b = tape.constant(body.clone());
    let s = tape.constant(skip.clone());
    let out = tape.add_tiled(b, s)?;
    Ok(tape.value(out).clone())
}
